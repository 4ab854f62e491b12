//! Experiment drivers: resolution sweep, latent-capacity ablation and
//! local against global latents.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{median, mse_split};
use crate::data::generate::flow_sample;
use crate::data::{FieldSample, FlowCase};
use crate::encoder::{encode, BoundingBox};
use crate::error::Result;
use crate::model::{FieldOperator, ModelConfig};
use crate::train::{fit, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub points: usize,
    pub volume_mse: f64,
    pub surface_mse: f64,
    /// Median seconds per sample of one encode-and-decode pass.
    pub infer_seconds: f64,
}

/// Evaluate `model` on meshes of each resolution, resampled from the same
/// flow cases. One surface point per sixteen points, at least eight.
pub fn discretization_sweep(
    model: &FieldOperator,
    cases: &[FlowCase],
    domain: &BoundingBox,
    resolutions: &[usize],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(resolutions.len());
    for &n in resolutions {
        let n_surface = (n / 16).max(8);
        let scored = cases
            .par_iter()
            .enumerate()
            .map(|(i, case)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let s = flow_sample(case, domain, n, n_surface, &mut rng)?;
                let t0 = Instant::now();
                let pred = model.predict_normalized(&s, &s.coords)?;
                let dt = t0.elapsed().as_secs_f64();
                let (v, su) = mse_split(&pred, &model.norm.normalize(&s)?)?;
                Ok((v, su, dt))
            })
            .collect::<Result<Vec<_>>>()?;
        let k = scored.len() as f64;
        rows.push(SweepRow {
            points: n,
            volume_mse: scored.iter().map(|r| r.0).sum::<f64>() / k,
            surface_mse: scored.iter().map(|r| r.1).sum::<f64>() / k,
            infer_seconds: median(&scored.iter().map(|r| r.2).collect::<Vec<_>>()),
        });
    }
    Ok(rows)
}

/// Mean over `test` of the input-reconstruction loss after the inner loop,
/// in normalised units.
pub fn reconstruction_mse(model: &FieldOperator, test: &[FieldSample]) -> Result<f64> {
    let losses = test
        .par_iter()
        .map(|s| {
            let n = model.norm.normalize(s)?;
            Ok(encode(&n, &model.encoder)?.1.last())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mean normalised output MSE over all points of `test`.
pub fn output_mse(model: &FieldOperator, test: &[FieldSample]) -> Result<f64> {
    let errs = test
        .par_iter()
        .map(|s| {
            let pred = model.predict_normalized(s, &s.coords)?;
            crate::train::loss_recon(&pred, &model.norm.normalize_output(&s.output))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub n_lat: usize,
    pub latent_dim: usize,
    pub recon_mse: f64,
    pub output_mse: f64,
}

/// Train one model per `(n_lat, latent_dim)` with identical seeds and
/// budgets; report test input-reconstruction and output MSE.
pub fn ablate_capacity(
    train: &[FieldSample],
    test: &[FieldSample],
    base: &ModelConfig,
    cfg: &TrainConfig,
    configs: &[(usize, usize)],
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(configs.len());
    for &(n_lat, latent_dim) in configs {
        let mc = ModelConfig {
            n_lat,
            latent_dim,
            ..base.clone()
        };
        let (model, _) = fit(train, &mc, cfg)?;
        rows.push(AblationRow {
            n_lat,
            latent_dim,
            recon_mse: reconstruction_mse(&model, test)?,
            output_mse: output_mse(&model, test)?,
        });
        log::info!("capacity [{n_lat},{latent_dim}]: {:?}", rows.last());
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalGlobal {
    pub local_mse: f64,
    pub global_mse: f64,
    /// `global_mse / local_mse`.
    pub ratio: f64,
}

/// The global baseline of `local`: one latent at the box centre holding
/// all the capacity, no distance penalty.
pub fn global_variant(local: &ModelConfig) -> ModelConfig {
    ModelConfig {
        n_lat: 1,
        latent_dim: local.n_lat * local.latent_dim,
        window: 0.0,
        ..local.clone()
    }
}

/// Train encoders with local and global latents under the same budget and
/// compare test reconstruction MSE.
pub fn compare_local_global(
    train: &[FieldSample],
    test: &[FieldSample],
    local: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<LocalGlobal> {
    let enc_only = TrainConfig {
        dec_epochs: 0,
        ..cfg.clone()
    };
    let run = |mc: &ModelConfig| -> Result<f64> {
        let (model, _) = fit(train, mc, &enc_only)?;
        reconstruction_mse(&model, test)
    };
    let local_mse = run(local)?;
    let global_mse = run(&global_variant(local))?;
    Ok(LocalGlobal {
        local_mse,
        global_mse,
        ratio: global_mse / local_mse,
    })
}
