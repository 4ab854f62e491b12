//! Run configuration: flat `key = value` files with `#` comments, every
//! model, training and dataset field addressable by a dotted key.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{Circle, FlowDatasetConfig, Interval, MultiBodyConfig};
use crate::error::{Error, Result};
use crate::model::{parse_list, render_list, ModelConfig};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub flow: FlowDatasetConfig,
    pub multibody: MultiBodyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::flow()
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn pair(key: &str, value: &str) -> Result<[f64; 2]> {
    match parse_list(value).map_err(|e| Error::Config(format!("{key}: {e}")))?[..] {
        [a, b] => Ok([a, b]),
        _ => Err(Error::Config(format!(
            "{key}: expected two comma-separated numbers, got {value:?}"
        ))),
    }
}

fn interval(key: &str, value: &str) -> Result<Interval> {
    let [lo, hi] = pair(key, value)?;
    Ok(Interval::new(lo, hi))
}

fn render_interval(i: &Interval) -> String {
    render_list(&[i.lo, i.hi])
}

const FLOW_KEYS: [&str; 10] = [
    "flow.n_train",
    "flow.n_test",
    "flow.n_points",
    "flow.n_surface",
    "flow.radius",
    "flow.speed",
    "flow.angle",
    "flow.circulation",
    "flow.domain_half",
    "flow.seed",
];

const MULTIBODY_KEYS: [&str; 11] = [
    "multibody.n_samples",
    "multibody.n_test",
    "multibody.n_points",
    "multibody.n_surface",
    "multibody.main_center",
    "multibody.main_radius",
    "multibody.secondary_radius",
    "multibody.offset",
    "multibody.angle",
    "multibody.domain_half",
    "multibody.seed",
];

impl RunConfig {
    /// Single-body flow defaults.
    pub fn flow() -> Self {
        RunConfig {
            model: ModelConfig::flow(),
            train: TrainConfig::default(),
            flow: FlowDatasetConfig::default(),
            multibody: MultiBodyConfig::default(),
        }
    }

    /// Two-body signed-distance defaults.
    pub fn multibody() -> Self {
        RunConfig {
            model: ModelConfig::multibody(),
            ..RunConfig::flow()
        }
    }

    pub fn keys() -> Vec<&'static str> {
        ModelConfig::KEYS
            .iter()
            .chain(TrainConfig::KEYS.iter())
            .chain(FLOW_KEYS.iter())
            .chain(MULTIBODY_KEYS.iter())
            .copied()
            .collect()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (f, m) = (&mut self.flow, &mut self.multibody);
        match key.split('.').next() {
            Some("model") => return self.model.set(key, value),
            Some("train") => return self.train.set(key, value),
            _ => {}
        }
        match key {
            "flow.n_train" => f.n_train = parse(key, value)?,
            "flow.n_test" => f.n_test = parse(key, value)?,
            "flow.n_points" => f.n_points = parse(key, value)?,
            "flow.n_surface" => f.n_surface = parse(key, value)?,
            "flow.radius" => f.radius = interval(key, value)?,
            "flow.speed" => f.speed = interval(key, value)?,
            "flow.angle" => f.angle = interval(key, value)?,
            "flow.circulation" => f.circulation = interval(key, value)?,
            "flow.domain_half" => f.domain_half = parse(key, value)?,
            "flow.seed" => f.seed = parse(key, value)?,
            "multibody.n_samples" => m.n_samples = parse(key, value)?,
            "multibody.n_test" => m.n_test = parse(key, value)?,
            "multibody.n_points" => m.n_points = parse(key, value)?,
            "multibody.n_surface" => m.n_surface = parse(key, value)?,
            "multibody.main_center" => m.main = Circle::new(pair(key, value)?, m.main.radius),
            "multibody.main_radius" => m.main = Circle::new(m.main.center, parse(key, value)?),
            "multibody.secondary_radius" => m.secondary_radius = parse(key, value)?,
            "multibody.offset" => m.offset = interval(key, value)?,
            "multibody.angle" => m.angle = interval(key, value)?,
            "multibody.domain_half" => m.domain_half = parse(key, value)?,
            "multibody.seed" => m.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Apply `key = value` lines. Errors name the 1-based line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key = value, got {t:?}",
                    i + 1
                )));
            };
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    /// Apply one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let (f, m) = (&self.flow, &self.multibody);
        let flow = [
            f.n_train.to_string(),
            f.n_test.to_string(),
            f.n_points.to_string(),
            f.n_surface.to_string(),
            render_interval(&f.radius),
            render_interval(&f.speed),
            render_interval(&f.angle),
            render_interval(&f.circulation),
            format!("{:?}", f.domain_half),
            f.seed.to_string(),
        ];
        let multi = [
            m.n_samples.to_string(),
            m.n_test.to_string(),
            m.n_points.to_string(),
            m.n_surface.to_string(),
            render_list(&m.main.center),
            format!("{:?}", m.main.radius),
            format!("{:?}", m.secondary_radius),
            render_interval(&m.offset),
            render_interval(&m.angle),
            format!("{:?}", m.domain_half),
            m.seed.to_string(),
        ];
        let mut out = self.model.entries();
        out.extend(self.train.entries());
        out.extend(FLOW_KEYS.iter().zip(flow).map(|(k, v)| (k.to_string(), v)));
        out.extend(
            MULTIBODY_KEYS
                .iter()
                .zip(multi)
                .map(|(k, v)| (k.to_string(), v)),
        );
        out
    }

    /// A file that [`Self::apply_text`] reads back to `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.flow.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parses_back() {
        let mut c = RunConfig::multibody();
        c.set("train.enc_lr", "0.0003").unwrap();
        c.set("flow.angle", "-0.1, 0.2").unwrap();
        let mut d = RunConfig::flow();
        d.apply_text(&c.render()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn every_key_is_settable() {
        let c = RunConfig::flow();
        let entries = c.entries();
        assert_eq!(entries.len(), RunConfig::keys().len());
        let mut d = RunConfig::flow();
        for (k, v) in entries {
            d.set(&k, &v).unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_rejected() {
        let mut c = RunConfig::flow();
        let e = c
            .apply_text("# fine\nmodel.n_lat = 4\n\nmodel.nlat = 4\n")
            .unwrap_err();
        assert!(e.to_string().contains("line 4"), "{e}");
        assert!(c.apply_text("train.batch 4").is_err());
        assert!(c.apply_text("flow.radius = 0.3").is_err());
        assert_eq!(c.model.n_lat, 4);
    }

    #[test]
    fn later_settings_win() {
        let mut c = RunConfig::flow();
        c.apply_text("train.seed = 3").unwrap();
        c.apply_override("train.seed=9").unwrap();
        assert_eq!(c.train.seed, 9);
    }
}
