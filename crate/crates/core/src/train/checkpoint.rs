//! Model checkpoints.
//!
//! ```text
//! "ENFC" | version u32 | meta_len u32 | meta (UTF-8 key=value lines)
//! | count u32 | { name_len u16 | name | rank u32 | extents u32.. | f32 data }..
//! | crc32 u32
//! ```
//!
//! Weights are stored as `f32`; a checkpoint quantises its model on
//! construction so that saving and loading reproduce it exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::binio::{read_file, write_file, ByteReader, ByteWriter};
use crate::decoder::{AttentionBlock, DecoderParams};
use crate::encoder::EncoderState;
use crate::error::{Error, Result};
use crate::field::EnfParams;
use crate::model::{parse_list, render_list, FieldOperator, ModelConfig};
use crate::tensor::Tensor;
use crate::train::norm::NormStats;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ENFC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: FieldOperator,
    /// Free-form `info.*` metadata, e.g. epochs trained.
    pub info: BTreeMap<String, String>,
}

const NORM_KEYS: [&str; 8] = [
    "norm.coord_min",
    "norm.coord_max",
    "norm.input_mean",
    "norm.input_std",
    "norm.output_mean",
    "norm.output_std",
    "norm.mu_mean",
    "norm.mu_std",
];

fn norm_fields(n: &NormStats) -> [&Vec<f64>; 8] {
    [
        &n.coord_min,
        &n.coord_max,
        &n.input_mean,
        &n.input_std,
        &n.output_mean,
        &n.output_std,
        &n.mu_mean,
        &n.mu_std,
    ]
}

fn field_tensors<'a>(prefix: &str, p: &'a EnfParams) -> Vec<(String, &'a Tensor)> {
    let mut out = vec![(format!("{prefix}fourier"), &p.fourier)];
    for (n, t) in ["w_q", "w_k", "w_v", "w_s", "w_b", "w_o"]
        .iter()
        .zip([&p.w_q, &p.w_k, &p.w_v, &p.w_s, &p.w_b, &p.w_o])
    {
        out.push((format!("{prefix}{n}"), t));
    }
    out
}

impl Checkpoint {
    pub fn new(model: &FieldOperator) -> Self {
        Checkpoint {
            model: model.quantized(),
            info: BTreeMap::new(),
        }
    }

    pub fn with_info(mut self, key: &str, value: impl ToString) -> Self {
        self.info.insert(key.to_string(), value.to_string());
        self
    }

    /// Named tensors in file order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let m = &self.model;
        let mut out = field_tensors("enc.", &m.encoder.params);
        out.push(("latent.positions".to_string(), &m.encoder.positions));
        if let Some(d) = &m.decoder {
            out.extend(field_tensors("dec.field.", &d.field));
            for (i, b) in d.blocks.iter().enumerate() {
                out.push((format!("dec.block{i}.w_q"), &b.w_q));
                out.push((format!("dec.block{i}.w_k"), &b.w_k));
                out.push((format!("dec.block{i}.w_v"), &b.w_v));
            }
        }
        out
    }

    fn metadata(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.model.config.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        for (k, v) in NORM_KEYS.iter().zip(norm_fields(&self.model.norm)) {
            let _ = writeln!(s, "{k}={}", render_list(v));
        }
        for (k, v) in &self.info {
            let _ = writeln!(s, "info.{k}={v}");
        }
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = self.metadata();
        let mut w = ByteWriter::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.u32(meta.len() as u32);
        w.bytes(meta.as_bytes());
        let tensors = self.tensors();
        w.u32(tensors.len() as u32);
        for (name, t) in tensors {
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Config(format!("parameter name {name} too long")))?;
            w.u16(len);
            w.bytes(name.as_bytes());
            w.u32(t.rank() as u32);
            for &e in t.shape() {
                w.u32(e as u32);
            }
            w.f32s(t.data().iter().copied());
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = ByteReader::checked(bytes)?;
        r.expect_magic(CHECKPOINT_MAGIC)?;
        let at = r.offset();
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                at,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta_at = r.offset();
        let meta = std::str::from_utf8(r.take(meta_len, "metadata")?).map_err(|e| {
            Error::format(meta_at + e.valid_up_to() as u64, "metadata is not UTF-8")
        })?;

        let mut config = ModelConfig::flow();
        let mut norm_vals: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        let mut info = BTreeMap::new();
        let mut seen = Vec::new();
        let mut line_at = meta_at;
        for line in meta.lines() {
            let bad = |msg: String| Error::format(line_at, msg);
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("metadata line {line:?} has no '='")))?;
            if let Some(name) = k.strip_prefix("info.") {
                info.insert(name.to_string(), v.to_string());
            } else if let Some(key) = NORM_KEYS.iter().find(|n| **n == k) {
                let vals = if v.is_empty() {
                    Vec::new()
                } else {
                    parse_list(v).map_err(|e| bad(format!("{k}: {e}")))?
                };
                norm_vals.insert(key, vals);
            } else {
                config.set(k, v).map_err(|e| bad(e.to_string()))?;
                seen.push(k.to_string());
            }
            line_at += line.len() as u64 + 1;
        }
        if let Some(missing) = ModelConfig::KEYS
            .iter()
            .find(|k| !seen.iter().any(|s| s == *k))
        {
            return Err(Error::format(meta_at, format!("metadata lacks {missing}")));
        }
        let mut take_norm = |k: &str| {
            norm_vals
                .remove(k)
                .ok_or_else(|| Error::format(meta_at, format!("metadata lacks {k}")))
        };
        let norm = NormStats {
            coord_min: take_norm("norm.coord_min")?,
            coord_max: take_norm("norm.coord_max")?,
            input_mean: take_norm("norm.input_mean")?,
            input_std: take_norm("norm.input_std")?,
            output_mean: take_norm("norm.output_mean")?,
            output_std: take_norm("norm.output_std")?,
            mu_mean: take_norm("norm.mu_mean")?,
            mu_std: take_norm("norm.mu_std")?,
        };

        let count = r.u32("parameter count")?;
        let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut order = Vec::new();
        for _ in 0..count {
            let at = r.offset();
            let n = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(n, "parameter name")?)
                .map_err(|_| Error::format(at, "parameter name is not UTF-8"))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            if rank == 0 || rank > 8 {
                return Err(Error::format(
                    at,
                    format!("{name}: unsupported rank {rank}"),
                ));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("extent")? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .unwrap_or(usize::MAX);
            let data = r.f32s(len, &name)?;
            let t =
                Tensor::new(shape, data).map_err(|e| Error::format(at, format!("{name}: {e}")))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::format(at, format!("duplicate parameter {name}")));
            }
            order.push(name);
        }
        r.finish()?;

        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| Error::format(meta_at, format!("checkpoint lacks parameter {name}")))
        };
        let (window, heads) = (config.window, config.heads);
        let field =
            |prefix: &str, take: &mut dyn FnMut(&str) -> Result<Tensor>| -> Result<EnfParams> {
                let p = EnfParams {
                    fourier: take(&format!("{prefix}fourier"))?,
                    w_q: take(&format!("{prefix}w_q"))?,
                    w_k: take(&format!("{prefix}w_k"))?,
                    w_v: take(&format!("{prefix}w_v"))?,
                    w_s: take(&format!("{prefix}w_s"))?,
                    w_b: take(&format!("{prefix}w_b"))?,
                    w_o: take(&format!("{prefix}w_o"))?,
                    window,
                    heads,
                };
                p.validate()?;
                Ok(p)
            };
        let enc = field("enc.", &mut take)?;
        let positions = take("latent.positions")?;
        let encoder = EncoderState::new(enc, positions, config.inner_steps, config.inner_lr)?;
        let decoder = if order.iter().any(|n| n.starts_with("dec.")) {
            let f = field("dec.field.", &mut take)?;
            let mut blocks = Vec::new();
            for i in 0..config.dec_blocks {
                blocks.push(AttentionBlock {
                    w_q: take(&format!("dec.block{i}.w_q"))?,
                    w_k: take(&format!("dec.block{i}.w_k"))?,
                    w_v: take(&format!("dec.block{i}.w_v"))?,
                });
            }
            let d = DecoderParams { blocks, field: f };
            d.validate()?;
            Some(d)
        } else {
            None
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::format(
                meta_at,
                format!("unexpected parameter {extra}"),
            ));
        }
        norm.validate()?;
        let model = FieldOperator {
            config,
            encoder,
            decoder,
            norm,
        };
        Ok(Checkpoint { model, info })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&read_file(path)?).map_err(|e| match e {
            Error::Format { offset, msg } => {
                Error::format(offset, format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt() -> Checkpoint {
        let mut cfg = ModelConfig::flow();
        cfg.enc_width = 8;
        cfg.dec_width = 8;
        cfg.enc_rff_dim = 8;
        cfg.dec_rff_dim = 8;
        let mut norm = NormStats::identity(2, 1, 1, 3);
        norm.output_std = vec![0.1 + 0.2];
        Checkpoint::new(&FieldOperator::new(cfg, norm).unwrap()).with_info("epochs", 3)
    }

    #[test]
    fn bytes_round_trip() {
        let c = ckpt();
        let b = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&b).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), b);
    }

    #[test]
    fn encoder_only_round_trip() {
        let mut c = ckpt();
        c.model.decoder = None;
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap(), c);
    }

    #[test]
    fn corruption_is_detected() {
        let mut b = ckpt().to_bytes().unwrap();
        let n = b.len();
        b[n / 2] ^= 1;
        assert!(matches!(
            Checkpoint::from_bytes(&b),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn wrong_version_reports_its_offset() {
        let b = ckpt().to_bytes().unwrap();
        let mut w = ByteWriter::new();
        w.bytes(&b[..4]);
        w.u32(9);
        w.bytes(&b[8..b.len() - 4]);
        assert!(matches!(
            Checkpoint::from_bytes(&w.finish()),
            Err(Error::Format { offset: 4, .. })
        ));
    }
}
