//! Outer-loop training of the encoder and, with the encoder frozen, the
//! decoder.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::norm::NormStats;
use super::optim::{Optimizer, OptimizerKind};
use crate::autodiff::{evaluate_with_gradients, Bound, ParamSet, Tape, Var};
use crate::data::FieldSample;
use crate::decoder::{condition_latents, decode_on_tape, DecoderParams, DecoderVars};
use crate::encoder::{encode, inner_loop, EncoderState};
use crate::error::{Error, Result, ShapeError};
use crate::field::{FieldGeometry, FieldVars, LatentPointCloud, QuerySet};
use crate::model::{FieldOperator, ModelConfig};
use crate::tensor::Tensor;

/// How the outer gradient treats the inner loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Differentiate through the `K` inner steps.
    SecondOrder,
    /// Treat the fitted features as constants.
    FirstOrder,
}

impl std::str::FromStr for GradMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "second-order" => Ok(GradMode::SecondOrder),
            "first-order" => Ok(GradMode::FirstOrder),
            other => Err(format!(
                "unknown mode {other:?} (second-order | first-order)"
            )),
        }
    }
}

impl std::fmt::Display for GradMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradMode::SecondOrder => "second-order",
            GradMode::FirstOrder => "first-order",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub enc_epochs: usize,
    pub dec_epochs: usize,
    pub enc_lr: f64,
    pub dec_lr: f64,
    pub batch: usize,
    /// Points per sample per epoch; 0 keeps the full mesh.
    pub downsample: usize,
    pub seed: u64,
    pub mode: GradMode,
    pub optimizer: OptimizerKind,
    /// Encode each training sample once instead of every epoch.
    pub cache_latents: bool,
    /// Of the `downsample` points, this many are drawn from the surface
    /// set (all of them if there are fewer). 0 draws uniformly.
    pub surface_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            enc_epochs: 300,
            dec_epochs: 300,
            enc_lr: 1e-3,
            dec_lr: 1e-3,
            batch: 8,
            downsample: 512,
            seed: 0,
            mode: GradMode::SecondOrder,
            optimizer: OptimizerKind::Adam,
            cache_latents: false,
            surface_points: 0,
        }
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

impl TrainConfig {
    pub const KEYS: [&'static str; 11] = [
        "train.enc_epochs",
        "train.dec_epochs",
        "train.enc_lr",
        "train.dec_lr",
        "train.batch",
        "train.downsample",
        "train.seed",
        "train.mode",
        "train.optimizer",
        "train.cache_latents",
        "train.surface_points",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "train.enc_epochs" => self.enc_epochs = parse(key, value)?,
            "train.dec_epochs" => self.dec_epochs = parse(key, value)?,
            "train.enc_lr" => self.enc_lr = parse(key, value)?,
            "train.dec_lr" => self.dec_lr = parse(key, value)?,
            "train.batch" => self.batch = parse(key, value)?,
            "train.downsample" => self.downsample = parse(key, value)?,
            "train.seed" => self.seed = parse(key, value)?,
            "train.mode" => self.mode = parse(key, value)?,
            "train.optimizer" => self.optimizer = parse(key, value)?,
            "train.cache_latents" => self.cache_latents = parse(key, value)?,
            "train.surface_points" => self.surface_points = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(String, String)> {
        let vals = [
            self.enc_epochs.to_string(),
            self.dec_epochs.to_string(),
            format!("{:?}", self.enc_lr),
            format!("{:?}", self.dec_lr),
            self.batch.to_string(),
            self.downsample.to_string(),
            self.seed.to_string(),
            self.mode.to_string(),
            self.optimizer.to_string(),
            self.cache_latents.to_string(),
            self.surface_points.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(vals)
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("train.batch must be positive".into()));
        }
        if !(self.enc_lr > 0.0) || !(self.dec_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.downsample > 0 && self.surface_points > self.downsample {
            return Err(Error::Config(
                "train.surface_points exceeds train.downsample".into(),
            ));
        }
        Ok(())
    }
}

/// `(1/M) Σ_x ‖target(x) − pred(x)‖²`.
pub fn loss_recon(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(ShapeError::mismatch("loss_recon", pred.shape(), target.shape()).into());
    }
    let sq: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    Ok(sq / pred.rows() as f64)
}

/// A uniform random subset of `k` points without replacement, in random
/// order. `k` larger than the mesh is clamped.
pub fn downsample<R: Rng + ?Sized>(sample: &FieldSample, k: usize, rng: &mut R) -> FieldSample {
    let n = sample.len();
    let k = if k > n {
        log::warn!("downsample to {k} points requested on a {n}-point sample; using all points");
        n
    } else {
        k
    };
    sample.select(&sample_indices(rng, n, k).into_vec())
}

/// As [`downsample`], but `k_surface` of the `k` points come from the
/// surface set and the rest from the volume.
pub fn downsample_stratified<R: Rng + ?Sized>(
    sample: &FieldSample,
    k: usize,
    k_surface: usize,
    rng: &mut R,
) -> FieldSample {
    let (surf, vol): (Vec<usize>, Vec<usize>) = (0..sample.len()).partition(|&i| sample.surface[i]);
    if k >= sample.len() || surf.is_empty() {
        return downsample(sample, k, rng);
    }
    let ks = k_surface.min(surf.len());
    let kv = (k - ks).min(vol.len());
    let mut idx: Vec<usize> = sample_indices(rng, surf.len(), ks)
        .into_iter()
        .map(|i| surf[i])
        .collect();
    idx.extend(
        sample_indices(rng, vol.len(), kv)
            .into_iter()
            .map(|i| vol[i]),
    );
    idx.shuffle(rng);
    sample.select(&idx)
}

/// Loss at the fitted latents for one normalised sample, on `tape`.
pub fn encoder_loss<'t>(
    tape: &'t Tape,
    w: &FieldVars<'t>,
    state: &EncoderState,
    sample: &FieldSample,
    mode: GradMode,
) -> Result<Var<'t>> {
    let queries = QuerySet::new(sample.coords.clone())?;
    let geom = FieldGeometry::new(tape, &state.params, &state.positions, &queries)?;
    let target = tape.constant(sample.input.clone());
    let run = inner_loop(
        tape,
        &geom,
        w,
        target,
        state.n_lat(),
        state.latent_dim(),
        state.inner_steps,
        state.inner_lr,
        mode == GradMode::SecondOrder,
    )?;
    Ok(run.loss)
}

/// Output loss of the decoder for fixed latents, on `tape`.
pub fn decoder_loss<'t>(
    tape: &'t Tape,
    vars: &DecoderVars<'t>,
    dec: &DecoderParams,
    z: &LatentPointCloud,
    sample: &FieldSample,
) -> Result<Var<'t>> {
    let latents = condition_latents(z, &sample.mu);
    let queries = QuerySet::new(sample.coords.clone())?;
    let geom = FieldGeometry::new(tape, &dec.field, &latents.positions, &queries)?;
    let pred = decode_on_tape(&geom, vars, tape.constant(latents.features))?;
    crate::encoder::recon_loss(pred, tape.constant(sample.output.clone()))
}

/// Mean loss and gradient over a batch; per-sample work runs in parallel
/// and is reduced in batch order.
fn batch_gradient<F>(params: &ParamSet, batch: &[usize], f: F) -> Result<(f64, ParamSet)>
where
    F: for<'t> Fn(usize, &'t Tape, &Bound<'t>) -> Result<Var<'t>> + Sync,
{
    let parts = batch
        .par_iter()
        .map(|&i| evaluate_with_gradients(&|t: &_, b: &_| f(i, t, b), params))
        .collect::<Vec<_>>();
    let mut total = 0.0;
    let mut grad = params.zeros_like();
    for part in parts {
        let (v, g) = part?;
        total += v;
        grad.axpy(1.0, &g);
    }
    let s = 1.0 / batch.len() as f64;
    grad.scale(s);
    Ok((total * s, grad))
}

const DIVERGED: f64 = 1e6;

fn epoch_rng(seed: u64, stage: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage << 32) | epoch as u64);
    rng
}

fn epoch_samples(
    train: &[FieldSample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<FieldSample>, Vec<usize>) {
    let k = cfg.downsample;
    let samples = train
        .iter()
        .map(|s| match (k, cfg.surface_points) {
            (0, _) => s.clone(),
            (_, 0) => downsample(s, k, rng),
            (_, ks) => downsample_stratified(s, k, ks, rng),
        })
        .collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    (samples, order)
}

/// Per-epoch mean training loss.
pub type LossCurve = Vec<f64>;

/// Train `model`'s encoder on normalised samples. On divergence the model
/// is left at the last good epoch and returned inside the error.
pub fn train_encoder(
    model: &mut FieldOperator,
    train: &[FieldSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<LossCurve> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let mut params = model.encoder.params.trainable();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.enc_lr, &params);
    let mut curve = Vec::with_capacity(cfg.enc_epochs);
    for epoch in 0..cfg.enc_epochs {
        let good = model.encoder.params.clone();
        let mut rng = epoch_rng(cfg.seed, 0, epoch);
        let (samples, order) = epoch_samples(train, cfg, &mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch) {
            let state = &model.encoder;
            let (loss, grad) = batch_gradient(&params, batch, |i, tape, b| {
                encoder_loss(
                    tape,
                    &FieldVars::from_bound(b, "")?,
                    state,
                    &samples[i],
                    cfg.mode,
                )
            })
            .or_else(|e| match e {
                Error::NonFinite(_) | Error::Encode { .. } => Ok((f64::NAN, params.zeros_like())),
                other => Err(other),
            })?;
            if !loss.is_finite() || loss > DIVERGED || !grad.all_finite() {
                model.encoder.params = good;
                return Err(Error::Diverged {
                    epoch,
                    loss,
                    last_good: Some(Box::new(Checkpoint::new(model))),
                });
            }
            sum += loss * batch.len() as f64;
            opt.step(&mut params, &grad);
            model.encoder.params = model.encoder.params.with_trainable(&params)?;
        }
        let mean = sum / train.len() as f64;
        on_epoch(epoch, mean);
        curve.push(mean);
    }
    Ok(curve)
}

/// Train the decoder with the encoder frozen. Latents come from fresh inner
/// loops on each epoch's points unless `cache_latents` is set.
pub fn train_decoder(
    model: &mut FieldOperator,
    train: &[FieldSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<LossCurve> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let Some(dec) = model.decoder.clone() else {
        return Err(Error::Config("model has no decoder".into()));
    };
    let n_blocks = dec.blocks.len();
    let mut dec = dec;
    let mut params = dec.trainable();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.dec_lr, &params);
    let cached: Option<Vec<LatentPointCloud>> = if cfg.cache_latents {
        Some(
            train
                .par_iter()
                .map(|s| encode(s, &model.encoder).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let mut curve = Vec::with_capacity(cfg.dec_epochs);
    for epoch in 0..cfg.dec_epochs {
        let good = dec.clone();
        let mut rng = epoch_rng(cfg.seed, 1, epoch);
        let (samples, order) = epoch_samples(train, cfg, &mut rng);
        let latents: Vec<LatentPointCloud> = match &cached {
            Some(c) => c.clone(),
            None => samples
                .par_iter()
                .map(|s| encode(s, &model.encoder).map(|r| r.0))
                .collect::<Result<Vec<_>>>()?,
        };
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch) {
            let d = &dec;
            let (loss, grad) = batch_gradient(&params, batch, |i, tape, b| {
                decoder_loss(
                    tape,
                    &DecoderVars::from_bound(b, n_blocks)?,
                    d,
                    &latents[i],
                    &samples[i],
                )
            })
            .or_else(|e| match e {
                Error::NonFinite(_) => Ok((f64::NAN, params.zeros_like())),
                other => Err(other),
            })?;
            if !loss.is_finite() || loss > DIVERGED || !grad.all_finite() {
                model.decoder = Some(good);
                return Err(Error::Diverged {
                    epoch,
                    loss,
                    last_good: Some(Box::new(Checkpoint::new(model))),
                });
            }
            sum += loss * batch.len() as f64;
            opt.step(&mut params, &grad);
            dec = dec.with_trainable(&params)?;
        }
        let mean = sum / train.len() as f64;
        on_epoch(epoch, mean);
        curve.push(mean);
    }
    model.decoder = Some(dec);
    Ok(curve)
}

/// Loss curves of a full fit.
#[derive(Clone, Debug, Default)]
pub struct FitLog {
    pub encoder: LossCurve,
    pub decoder: LossCurve,
}

/// Normalise with training statistics, build a fresh model and train both
/// stages. Samples are in physical units.
pub fn fit(
    train: &[FieldSample],
    config: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(FieldOperator, FitLog)> {
    let norm = NormStats::compute(train)?;
    let normed = train
        .iter()
        .map(|s| norm.normalize(s))
        .collect::<Result<Vec<_>>>()?;
    let mut model = FieldOperator::new(config.clone(), norm)?;
    let encoder = train_encoder(&mut model, &normed, cfg, |e, l| {
        log::debug!("encoder epoch {e}: {l:.6e}")
    })?;
    let decoder = if cfg.dec_epochs > 0 {
        train_decoder(&mut model, &normed, cfg, |e, l| {
            log::debug!("decoder epoch {e}: {l:.6e}")
        })?
    } else {
        Vec::new()
    };
    Ok((model, FitLog { encoder, decoder }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_of_constant_offset() {
        let t = Tensor::column(vec![1.0, -2.0, 0.5]);
        let p = t.map(|x| x + 0.25);
        assert!((loss_recon(&p, &t).unwrap() - 0.0625).abs() < 1e-15);
        assert_eq!(loss_recon(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn downsample_clamps_and_is_seeded() {
        let s = FieldSample::new(
            Tensor::from_rows(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap(),
            Tensor::column(vec![0.0; 4]),
            Tensor::column(vec![0.0; 4]),
            vec![],
            vec![true, false, false, false],
        )
        .unwrap();
        let a = downsample(&s, 9, &mut ChaCha8Rng::seed_from_u64(1));
        let mut xs: Vec<f64> = a.coords.data().to_vec();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![0.0, 1.0, 2.0, 3.0]);
        let b = downsample(&s, 2, &mut ChaCha8Rng::seed_from_u64(5));
        let c = downsample(&s, 2, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(b, c);
        for i in 0..2 {
            assert_eq!(b.surface[i], b.coords.data()[i] == 0.0);
        }
    }

    #[test]
    fn stratified_draw_takes_the_requested_surface_share() {
        let n = 40;
        let s = FieldSample::new(
            Tensor::column((0..n).map(|i| i as f64).collect()),
            Tensor::column(vec![0.0; n]),
            Tensor::column(vec![0.0; n]),
            vec![],
            (0..n).map(|i| i % 10 == 0).collect(),
        )
        .unwrap();
        let d = downsample_stratified(&s, 12, 3, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(d.len(), 12);
        assert_eq!(d.n_surface(), 3);
        let all = downsample_stratified(&s, 12, 20, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(all.n_surface(), 4);
        assert_eq!(all.len(), 12);
    }

    #[test]
    fn config_keys_round_trip() {
        let mut c = TrainConfig {
            mode: GradMode::FirstOrder,
            optimizer: OptimizerKind::Sgd,
            ..Default::default()
        };
        c.enc_lr = 3e-4;
        let mut d = TrainConfig::default();
        for (k, v) in c.entries() {
            d.set(&k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert!(d.set("train.mode", "third-order").is_err());
    }
}
