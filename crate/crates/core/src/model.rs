//! The full encoder/decoder model and its configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::FieldSample;
use crate::decoder::{condition_latents, decode, DecoderParams};
use crate::encoder::{encode, init_latent_positions, BoundingBox, EncoderState, InnerLoopTrace};
use crate::error::{Error, Result, ShapeError};
use crate::field::{EnfParams, FieldConfig, LatentPointCloud, QuerySet};
use crate::tensor::Tensor;
use crate::train::norm::NormStats;

/// Dimensions and hyperparameters of both fields. Lengths, windows and the
/// latent box are in normalised coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub n_a: usize,
    pub n_u: usize,
    pub mu_dim: usize,
    pub n_lat: usize,
    pub latent_dim: usize,
    pub enc_rff_dim: usize,
    pub enc_rff_sigma: f64,
    pub enc_width: usize,
    pub dec_rff_dim: usize,
    pub dec_rff_sigma: f64,
    pub dec_width: usize,
    pub heads: usize,
    pub window: f64,
    pub dec_blocks: usize,
    pub block_dk: usize,
    pub inner_steps: usize,
    pub inner_lr: f64,
    pub box_min: Vec<f64>,
    pub box_max: Vec<f64>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::flow()
    }
}

pub(crate) fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

pub(crate) fn render_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(",")
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

impl ModelConfig {
    /// Widths and inner loop of the airfoil setting, desk-sized task dims.
    pub fn flow() -> Self {
        ModelConfig {
            dim: 2,
            n_a: 1,
            n_u: 1,
            mu_dim: 3,
            n_lat: 9,
            latent_dim: 8,
            enc_rff_dim: 128,
            enc_rff_sigma: 1.0,
            enc_width: 128,
            dec_rff_dim: 256,
            dec_rff_sigma: 6.0,
            dec_width: 256,
            heads: 2,
            window: 0.1,
            dec_blocks: 2,
            block_dk: 16,
            inner_steps: 3,
            inner_lr: 1.0,
            box_min: vec![-0.5, -0.5],
            box_max: vec![0.5, 0.5],
            seed: 0,
        }
    }

    /// Signed-distance reconstruction only; `n_u = n_a` and no parameters.
    pub fn multibody() -> Self {
        ModelConfig {
            mu_dim: 0,
            n_lat: 4,
            latent_dim: 8,
            dec_blocks: 0,
            box_min: vec![-0.75, -0.75],
            box_max: vec![0.75, 0.75],
            ..ModelConfig::flow()
        }
    }

    pub const KEYS: [&'static str; 21] = [
        "model.dim",
        "model.n_a",
        "model.n_u",
        "model.mu_dim",
        "model.n_lat",
        "model.latent_dim",
        "model.enc_rff_dim",
        "model.enc_rff_sigma",
        "model.enc_width",
        "model.dec_rff_dim",
        "model.dec_rff_sigma",
        "model.dec_width",
        "model.heads",
        "model.window",
        "model.dec_blocks",
        "model.block_dk",
        "model.inner_steps",
        "model.inner_lr",
        "model.box_min",
        "model.box_max",
        "model.seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "model.dim" => self.dim = parse(key, value)?,
            "model.n_a" => self.n_a = parse(key, value)?,
            "model.n_u" => self.n_u = parse(key, value)?,
            "model.mu_dim" => self.mu_dim = parse(key, value)?,
            "model.n_lat" => self.n_lat = parse(key, value)?,
            "model.latent_dim" => self.latent_dim = parse(key, value)?,
            "model.enc_rff_dim" => self.enc_rff_dim = parse(key, value)?,
            "model.enc_rff_sigma" => self.enc_rff_sigma = parse(key, value)?,
            "model.enc_width" => self.enc_width = parse(key, value)?,
            "model.dec_rff_dim" => self.dec_rff_dim = parse(key, value)?,
            "model.dec_rff_sigma" => self.dec_rff_sigma = parse(key, value)?,
            "model.dec_width" => self.dec_width = parse(key, value)?,
            "model.heads" => self.heads = parse(key, value)?,
            "model.window" => self.window = parse(key, value)?,
            "model.dec_blocks" => self.dec_blocks = parse(key, value)?,
            "model.block_dk" => self.block_dk = parse(key, value)?,
            "model.inner_steps" => self.inner_steps = parse(key, value)?,
            "model.inner_lr" => self.inner_lr = parse(key, value)?,
            "model.box_min" => {
                self.box_min =
                    parse_list(value).map_err(|e| Error::Config(format!("{key}: {e}")))?
            }
            "model.box_max" => {
                self.box_max =
                    parse_list(value).map_err(|e| Error::Config(format!("{key}: {e}")))?
            }
            "model.seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs in [`Self::KEYS`] order; floats print so they
    /// parse back to the same bits.
    pub fn entries(&self) -> Vec<(String, String)> {
        let vals = [
            self.dim.to_string(),
            self.n_a.to_string(),
            self.n_u.to_string(),
            self.mu_dim.to_string(),
            self.n_lat.to_string(),
            self.latent_dim.to_string(),
            self.enc_rff_dim.to_string(),
            format!("{:?}", self.enc_rff_sigma),
            self.enc_width.to_string(),
            self.dec_rff_dim.to_string(),
            format!("{:?}", self.dec_rff_sigma),
            self.dec_width.to_string(),
            self.heads.to_string(),
            format!("{:?}", self.window),
            self.dec_blocks.to_string(),
            self.block_dk.to_string(),
            self.inner_steps.to_string(),
            format!("{:?}", self.inner_lr),
            render_list(&self.box_min),
            render_list(&self.box_max),
            self.seed.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(vals)
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn bbox(&self) -> Result<BoundingBox> {
        if self.box_min.len() != self.dim {
            return Err(Error::Config(format!(
                "latent box has {} coordinates for dim {}",
                self.box_min.len(),
                self.dim
            )));
        }
        BoundingBox::new(self.box_min.clone(), self.box_max.clone())
    }

    pub fn encoder_field(&self) -> FieldConfig {
        FieldConfig {
            dim: self.dim,
            n_out: self.n_a,
            latent_dim: self.latent_dim,
            rff_dim: self.enc_rff_dim,
            rff_sigma: self.enc_rff_sigma,
            d_k: self.enc_width,
            d_v: self.enc_width,
            heads: self.heads,
            window: self.window,
        }
    }

    pub fn decoder_field(&self) -> FieldConfig {
        FieldConfig {
            dim: self.dim,
            n_out: self.n_u,
            latent_dim: self.latent_dim + self.mu_dim,
            rff_dim: self.dec_rff_dim,
            rff_sigma: self.dec_rff_sigma,
            d_k: self.dec_width,
            d_v: self.dec_width,
            heads: self.heads,
            window: self.window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dim", self.dim),
            ("n_a", self.n_a),
            ("n_u", self.n_u),
            ("n_lat", self.n_lat),
            ("latent_dim", self.latent_dim),
            ("block_dk", self.block_dk),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be positive")));
            }
        }
        if !(self.inner_lr > 0.0) {
            return Err(Error::Config(format!(
                "model.inner_lr must be positive, got {}",
                self.inner_lr
            )));
        }
        self.encoder_field().validate()?;
        self.decoder_field().validate()?;
        self.bbox()?;
        Ok(())
    }
}

/// Encoder, optional decoder and the normalisation they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldOperator {
    pub config: ModelConfig,
    pub encoder: EncoderState,
    pub decoder: Option<DecoderParams>,
    pub norm: NormStats,
}

impl FieldOperator {
    /// Fresh weights drawn from `config.seed`.
    pub fn new(config: ModelConfig, norm: NormStats) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let enc = EnfParams::init(&config.encoder_field(), &mut rng)?;
        let positions = init_latent_positions(&config.bbox()?, config.n_lat)?;
        let encoder = EncoderState::new(enc, positions, config.inner_steps, config.inner_lr)?;
        let mut dec_rng = ChaCha8Rng::seed_from_u64(config.seed);
        dec_rng.set_stream(1);
        let decoder = DecoderParams::init(
            &config.decoder_field(),
            config.dec_blocks,
            config.block_dk,
            &mut dec_rng,
        )?;
        let model = FieldOperator {
            config,
            encoder,
            decoder: Some(decoder),
            norm,
        };
        model.check_norm()?;
        Ok(model)
    }

    fn check_norm(&self) -> Result<()> {
        let c = &self.config;
        let n = &self.norm;
        if n.coord_min.len() != c.dim
            || n.input_mean.len() != c.n_a
            || n.output_mean.len() != c.n_u
            || n.mu_mean.len() != c.mu_dim
        {
            return Err(ShapeError::new(format!(
                "normalisation (d={}, n_a={}, n_u={}, l_mu={}) does not match model (d={}, n_a={}, n_u={}, l_mu={})",
                n.coord_min.len(),
                n.input_mean.len(),
                n.output_mean.len(),
                n.mu_mean.len(),
                c.dim,
                c.n_a,
                c.n_u,
                c.mu_dim
            ))
            .into());
        }
        Ok(())
    }

    /// The same model with every weight rounded to `f32`.
    pub fn quantized(&self) -> FieldOperator {
        let q = |p: &EnfParams| EnfParams {
            fourier: p.fourier.to_f32_precision(),
            w_q: p.w_q.to_f32_precision(),
            w_k: p.w_k.to_f32_precision(),
            w_v: p.w_v.to_f32_precision(),
            w_s: p.w_s.to_f32_precision(),
            w_b: p.w_b.to_f32_precision(),
            w_o: p.w_o.to_f32_precision(),
            window: p.window,
            heads: p.heads,
        };
        let mut out = self.clone();
        out.encoder.params = q(&self.encoder.params);
        out.encoder.positions = self.encoder.positions.to_f32_precision();
        if let Some(d) = &mut out.decoder {
            d.field = q(&d.field);
            for b in &mut d.blocks {
                b.w_q = b.w_q.to_f32_precision();
                b.w_k = b.w_k.to_f32_precision();
                b.w_v = b.w_v.to_f32_precision();
            }
        }
        out
    }

    fn check_sample(&self, s: &FieldSample) -> Result<()> {
        let c = &self.config;
        if s.dim() != c.dim || s.input.cols() != c.n_a || s.mu.len() != c.mu_dim {
            return Err(ShapeError::new(format!(
                "sample has d={}, n_a={}, l_mu={}; model expects d={}, n_a={}, l_mu={}",
                s.dim(),
                s.input.cols(),
                s.mu.len(),
                c.dim,
                c.n_a,
                c.mu_dim
            ))
            .into());
        }
        Ok(())
    }

    /// Encode a sample given in physical units. Latent positions are in
    /// normalised coordinates.
    pub fn encode(&self, sample: &FieldSample) -> Result<(LatentPointCloud, InnerLoopTrace)> {
        self.check_sample(sample)?;
        let input = self.norm.normalize_input(&sample.input);
        let n = FieldSample {
            coords: self.norm.normalize_coords(&sample.coords),
            output: input.clone(),
            input,
            mu: Vec::new(),
            surface: sample.surface.clone(),
        };
        encode(&n, &self.encoder)
    }

    /// Decode normalised latents at physical query points; normalised output.
    pub fn decode_normalized(
        &self,
        z: &LatentPointCloud,
        mu: &[f64],
        coords: &Tensor,
    ) -> Result<Tensor> {
        let dec = self
            .decoder
            .as_ref()
            .ok_or_else(|| Error::Config("model has no trained decoder".into()))?;
        if mu.len() != self.config.mu_dim || coords.cols() != self.config.dim {
            return Err(ShapeError::new(format!(
                "query has d={}, l_mu={}; model expects d={}, l_mu={}",
                coords.cols(),
                mu.len(),
                self.config.dim,
                self.config.mu_dim
            ))
            .into());
        }
        let latents = condition_latents(z, &self.norm.normalize_mu(mu));
        let queries = QuerySet::new(self.norm.normalize_coords(coords))?;
        decode(&latents, &queries, dec)
    }

    /// Encode `sample` and predict the output field at `coords`, in
    /// normalised units.
    pub fn predict_normalized(&self, sample: &FieldSample, coords: &Tensor) -> Result<Tensor> {
        let (z, _) = self.encode(sample)?;
        self.decode_normalized(&z, &sample.mu, coords)
    }

    /// As [`Self::predict_normalized`] but in physical units.
    pub fn predict(&self, sample: &FieldSample, coords: &Tensor) -> Result<Tensor> {
        Ok(self
            .norm
            .denormalize(&self.predict_normalized(sample, coords)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_round_trip_through_set() {
        let mut c = ModelConfig::flow();
        c.window = 0.1 + 0.2;
        c.box_min = vec![-0.5, -0.25];
        let mut d = ModelConfig::multibody();
        for (k, v) in c.entries() {
            d.set(&k, &v).unwrap();
        }
        assert_eq!(c, d);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            ModelConfig::flow().set("model.widht", "3"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn decoder_width_includes_parameters() {
        let mut c = ModelConfig::flow();
        c.mu_dim = 2;
        assert_eq!(c.decoder_field().latent_dim, 10);
    }

    #[test]
    fn quantized_model_is_a_fixed_point() {
        let m = FieldOperator::new(ModelConfig::flow(), NormStats::identity(2, 1, 1, 3))
            .unwrap()
            .quantized();
        assert_eq!(m.quantized(), m);
    }
}
