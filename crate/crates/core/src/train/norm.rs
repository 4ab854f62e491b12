//! Training-split statistics: coordinates are min-max mapped to [−1, 1],
//! field channels and global parameters are standardised.

use crate::data::FieldSample;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub coord_min: Vec<f64>,
    pub coord_max: Vec<f64>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_std: Vec<f64>,
    pub mu_mean: Vec<f64>,
    pub mu_std: Vec<f64>,
}

fn column_stats(
    samples: &[FieldSample],
    pick: impl Fn(&FieldSample) -> &Tensor,
) -> (Vec<f64>, Vec<f64>) {
    let c = pick(&samples[0]).cols();
    let mut sum = vec![0.0; c];
    let mut n = 0usize;
    for s in samples {
        for row in pick(s).data().chunks(c) {
            for (a, x) in sum.iter_mut().zip(row) {
                *a += x;
            }
        }
        n += s.len();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
    let mut var = vec![0.0; c];
    for s in samples {
        for row in pick(s).data().chunks(c) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
    }
    (mean, var.iter().map(|v| (v / n as f64).sqrt()).collect())
}

impl NormStats {
    /// Statistics of the given (training) samples.
    pub fn compute(train: &[FieldSample]) -> Result<NormStats> {
        let Some(first) = train.first() else {
            return Err(Error::Config(
                "normalisation needs at least one training sample".into(),
            ));
        };
        let d = first.dim();
        let mut coord_min = vec![f64::INFINITY; d];
        let mut coord_max = vec![f64::NEG_INFINITY; d];
        for s in train {
            for row in s.coords.data().chunks(d) {
                for k in 0..d {
                    coord_min[k] = coord_min[k].min(row[k]);
                    coord_max[k] = coord_max[k].max(row[k]);
                }
            }
        }
        let (input_mean, input_std) = column_stats(train, |s| &s.input);
        let (output_mean, output_std) = column_stats(train, |s| &s.output);
        let l = first.mu.len();
        let nm = train.len() as f64;
        let mu_mean: Vec<f64> = (0..l)
            .map(|k| train.iter().map(|s| s.mu[k]).sum::<f64>() / nm)
            .collect();
        let mu_std: Vec<f64> = (0..l)
            .map(|k| {
                let v = train
                    .iter()
                    .map(|s| (s.mu[k] - mu_mean[k]).powi(2))
                    .sum::<f64>()
                    / nm;
                // constant global parameters are centred but not scaled
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let stats = NormStats {
            coord_min,
            coord_max,
            input_mean,
            input_std,
            output_mean,
            output_std,
            mu_mean,
            mu_std,
        };
        stats.validate()?;
        Ok(stats)
    }

    /// Statistics that leave every sample unchanged.
    pub fn identity(dim: usize, n_a: usize, n_u: usize, l_mu: usize) -> NormStats {
        NormStats {
            coord_min: vec![-1.0; dim],
            coord_max: vec![1.0; dim],
            input_mean: vec![0.0; n_a],
            input_std: vec![1.0; n_a],
            output_mean: vec![0.0; n_u],
            output_std: vec![1.0; n_u],
            mu_mean: vec![0.0; l_mu],
            mu_std: vec![1.0; l_mu],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, (a, b)) in self.coord_min.iter().zip(&self.coord_max).enumerate() {
            if !(a < b) {
                return Err(Error::Config(format!(
                    "coordinate {k} has empty range [{a}, {b}]"
                )));
            }
        }
        for (name, stds) in [
            ("input", &self.input_std),
            ("output", &self.output_std),
            ("mu", &self.mu_std),
        ] {
            if let Some(k) = stds.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} channel {k} has standard deviation {}",
                    stds[k]
                )));
            }
        }
        Ok(())
    }

    fn check(&self, s: &FieldSample) -> Result<()> {
        if s.dim() != self.coord_min.len()
            || s.input.cols() != self.input_mean.len()
            || s.output.cols() != self.output_mean.len()
            || s.mu.len() != self.mu_mean.len()
        {
            return Err(crate::error::ShapeError::new(format!(
                "sample (d={}, n_a={}, n_u={}, l_mu={}) does not match normalisation (d={}, n_a={}, n_u={}, l_mu={})",
                s.dim(),
                s.input.cols(),
                s.output.cols(),
                s.mu.len(),
                self.coord_min.len(),
                self.input_mean.len(),
                self.output_mean.len(),
                self.mu_mean.len()
            ))
            .into());
        }
        Ok(())
    }

    pub fn normalize_coords(&self, coords: &Tensor) -> Tensor {
        let d = self.coord_min.len();
        let mut out = coords.clone();
        for row in out.data_mut().chunks_mut(d) {
            for k in 0..d {
                let (lo, hi) = (self.coord_min[k], self.coord_max[k]);
                row[k] = 2.0 * (row[k] - lo) / (hi - lo) - 1.0;
            }
        }
        out
    }

    fn standardize(t: &Tensor, mean: &[f64], std: &[f64]) -> Tensor {
        let c = t.cols();
        let mut out = t.clone();
        for row in out.data_mut().chunks_mut(c) {
            for k in 0..c {
                row[k] = (row[k] - mean[k]) / std[k];
            }
        }
        out
    }

    fn unstandardize(t: &Tensor, mean: &[f64], std: &[f64]) -> Tensor {
        let c = t.cols();
        let mut out = t.clone();
        for row in out.data_mut().chunks_mut(c) {
            for k in 0..c {
                row[k] = row[k] * std[k] + mean[k];
            }
        }
        out
    }

    pub fn normalize_mu(&self, mu: &[f64]) -> Vec<f64> {
        mu.iter()
            .zip(self.mu_mean.iter().zip(&self.mu_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn normalize(&self, s: &FieldSample) -> Result<FieldSample> {
        self.check(s)?;
        Ok(FieldSample {
            coords: self.normalize_coords(&s.coords),
            input: Self::standardize(&s.input, &self.input_mean, &self.input_std),
            output: Self::standardize(&s.output, &self.output_mean, &self.output_std),
            mu: self.normalize_mu(&s.mu),
            surface: s.surface.clone(),
        })
    }

    pub fn normalize_input(&self, a: &Tensor) -> Tensor {
        Self::standardize(a, &self.input_mean, &self.input_std)
    }

    pub fn normalize_output(&self, u: &Tensor) -> Tensor {
        Self::standardize(u, &self.output_mean, &self.output_std)
    }

    /// Map a normalised output prediction back to physical units.
    pub fn denormalize(&self, pred: &Tensor) -> Tensor {
        Self::unstandardize(pred, &self.output_mean, &self.output_std)
    }

    pub fn denormalize_input(&self, pred: &Tensor) -> Tensor {
        Self::unstandardize(pred, &self.input_mean, &self.input_std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(coords: Vec<f64>, a: Vec<f64>, u: Vec<f64>) -> FieldSample {
        let n = a.len();
        FieldSample::new(
            Tensor::from_rows(n, 2, coords).unwrap(),
            Tensor::column(a),
            Tensor::column(u),
            vec![1.0, 2.0],
            vec![false; n],
        )
        .unwrap()
    }

    #[test]
    fn coordinate_extremes_map_to_unit_interval() {
        let s = sample(
            vec![-2.0, 0.0, 2.0, 4.0, 0.0, 1.0],
            vec![1.0, 2.0, 3.0],
            vec![-1.0, 0.0, 1.0],
        );
        let st = NormStats::compute(&[s.clone()]).unwrap();
        let n = st.normalize(&s).unwrap();
        assert_eq!(n.coords.data(), &[-1.0, -1.0, 1.0, 1.0, 0.0, -0.5]);
    }

    #[test]
    fn standard_field_is_unchanged() {
        // mean 0, population std 1
        let u = vec![-1.0, 1.0, -1.0, 1.0];
        let s = sample(
            vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0],
            u.clone(),
            u.clone(),
        );
        let st = NormStats::compute(&[s.clone()]).unwrap();
        assert_eq!(st.normalize(&s).unwrap().output.data(), &u[..]);
    }

    #[test]
    fn constant_channel_is_a_config_error() {
        let s = sample(vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 2.0], vec![3.0, 3.0]);
        assert!(matches!(NormStats::compute(&[s]), Err(Error::Config(_))));
    }

    #[test]
    fn constant_mu_is_only_centred() {
        let s = sample(vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 2.0], vec![3.0, 4.0]);
        let st = NormStats::compute(&[s.clone(), s]).unwrap();
        assert_eq!(st.mu_std, vec![1.0, 1.0]);
    }
}
