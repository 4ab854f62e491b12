//! Encoding by optimisation: latent features start at zero and take a few
//! plain gradient steps on the input-reconstruction loss while positions
//! stay on a fixed grid.

use crate::autodiff::{Tape, Var};
use crate::data::FieldSample;
use crate::error::{Error, Result, ShapeError};
use crate::field::{EnfParams, FieldGeometry, FieldVars, LatentPointCloud, QuerySet};
use crate::tensor::Tensor;

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BoundingBox {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::Config(format!(
                "box corners {min:?} / {max:?} differ in dimension"
            )));
        }
        if min
            .iter()
            .zip(&max)
            .any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Config(format!("degenerate box {min:?} .. {max:?}")));
        }
        Ok(BoundingBox { min, max })
    }

    pub fn square(half: f64) -> Self {
        BoundingBox {
            min: vec![-half, -half],
            max: vec![half, half],
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(x, (a, b))| *a <= *x && *x <= *b)
    }
}

/// Factor `n` as `rows × cols` with `rows ≤ cols` as close as possible.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, n / rows)
}

/// Cell centres of the most-square `rows × cols` grid over `bbox`,
/// x varying fastest.
pub fn init_latent_positions(bbox: &BoundingBox, n_lat: usize) -> Result<Tensor> {
    if n_lat == 0 {
        return Err(Error::Config("need at least one latent point".into()));
    }
    let (rows, cols) = match bbox.dim() {
        1 => (1, n_lat),
        2 => grid_shape(n_lat),
        d => {
            return Err(Error::Config(format!(
                "latent grids are 1-D or 2-D, got {d}-D box"
            )))
        }
    };
    if rows == 1 && n_lat > 3 {
        log::warn!("{n_lat} latents do not factor into a grid; using a single row");
    }
    let centre =
        |lo: f64, hi: f64, k: usize, of: usize| lo + (k as f64 + 0.5) * (hi - lo) / of as f64;
    let mut data = Vec::with_capacity(n_lat * bbox.dim());
    for r in 0..rows {
        for c in 0..cols {
            data.push(centre(bbox.min[0], bbox.max[0], c, cols));
            if bbox.dim() == 2 {
                data.push(centre(bbox.min[1], bbox.max[1], r, rows));
            }
        }
    }
    Ok(Tensor::from_rows(n_lat, bbox.dim(), data)?)
}

/// Shared encoder parameters plus the inner-loop setup.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    pub params: EnfParams,
    /// Latent position template, `N_lat × d`.
    pub positions: Tensor,
    pub inner_steps: usize,
    pub inner_lr: f64,
}

impl EncoderState {
    pub fn new(
        params: EnfParams,
        positions: Tensor,
        inner_steps: usize,
        inner_lr: f64,
    ) -> Result<Self> {
        params.validate()?;
        if positions.cols() != params.dim() {
            return Err(ShapeError::mismatch(
                "latent positions",
                positions.shape(),
                params.fourier.shape(),
            )
            .into());
        }
        if !(inner_lr > 0.0) {
            return Err(Error::Config(format!(
                "inner learning rate must be positive, got {inner_lr}"
            )));
        }
        Ok(EncoderState {
            params,
            positions,
            inner_steps,
            inner_lr,
        })
    }

    pub fn n_lat(&self) -> usize {
        self.positions.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.params.latent_dim()
    }
}

/// Input-reconstruction loss before the first step and after each step.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerLoopTrace {
    pub losses: Vec<f64>,
}

impl InnerLoopTrace {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn last(&self) -> f64 {
        *self.losses.last().expect("trace has K+1 entries")
    }
}

/// `(1/M) Σ_x ‖target(x) − pred(x)‖²` on the tape.
pub fn recon_loss<'t>(pred: Var<'t>, target: Var<'t>) -> Result<Var<'t>> {
    let m = pred.shape()[0] as f64;
    Ok(pred.sub(target)?.sq_norm()?.scale(1.0 / m))
}

/// Result of running the inner loop on a tape.
pub struct InnerLoop<'t> {
    pub features: Var<'t>,
    /// Loss at the final features; differentiable w.r.t. the field weights.
    pub loss: Var<'t>,
    pub trace: InnerLoopTrace,
}

/// `K` full-batch gradient steps `c ← c − α ∇_c L` from `c = 0`.
///
/// With `create_graph` the steps are recorded so the final loss can be
/// differentiated through them; otherwise each step's gradient is a
/// constant and the final features carry no dependence on the weights.
pub fn inner_loop<'t>(
    tape: &'t Tape,
    geom: &FieldGeometry<'t>,
    w: &FieldVars<'t>,
    target: Var<'t>,
    n_lat: usize,
    latent_dim: usize,
    steps: usize,
    lr: f64,
    create_graph: bool,
) -> Result<InnerLoop<'t>> {
    let _on = tape.set_grad_enabled(true);
    let mut c = tape.param(Tensor::zeros(n_lat, latent_dim));
    let mut trace = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let loss = recon_loss(geom.forward(w, c)?, target)?;
        let v = loss.item();
        if !v.is_finite() {
            return Err(Error::Encode { step });
        }
        trace.push(v);
        let g = tape.grad(loss, &[c], create_graph)?[0];
        c = c.sub(g.scale(lr))?;
    }
    let loss = recon_loss(geom.forward(w, c)?, target)?;
    if !loss.item().is_finite() {
        return Err(Error::Encode { step: steps });
    }
    trace.push(loss.item());
    Ok(InnerLoop {
        features: c,
        loss,
        trace: InnerLoopTrace { losses: trace },
    })
}

/// Fit latent features to `sample`'s input field at its points.
pub fn encode(
    sample: &FieldSample,
    state: &EncoderState,
) -> Result<(LatentPointCloud, InnerLoopTrace)> {
    if sample.input.cols() != state.params.n_out() {
        return Err(ShapeError::new(format!(
            "sample has {} input channels, encoder reconstructs {}",
            sample.input.cols(),
            state.params.n_out()
        ))
        .into());
    }
    let queries = QuerySet::new(sample.coords.clone())?;
    let tape = Tape::inference();
    let geom = FieldGeometry::new(&tape, &state.params, &state.positions, &queries)?;
    let w = state.params.constants(&tape);
    let target = tape.constant(sample.input.clone());
    let run = inner_loop(
        &tape,
        &geom,
        &w,
        target,
        state.n_lat(),
        state.latent_dim(),
        state.inner_steps,
        state.inner_lr,
        false,
    )?;
    let z = LatentPointCloud::new(
        state.positions.clone(),
        run.features.value().as_ref().clone(),
    )?;
    Ok((z, run.trace))
}

/// The global-latent baseline: a single latent and no distance penalty.
pub fn encode_global(
    sample: &FieldSample,
    state: &EncoderState,
) -> Result<(LatentPointCloud, InnerLoopTrace)> {
    if state.n_lat() != 1 || state.params.window != 0.0 {
        return Err(Error::Config(format!(
            "global encoding needs one latent and window 0, got {} latents, window {}",
            state.n_lat(),
            state.params.window
        )));
    }
    encode(sample, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nine_latents_cover_the_unit_box() {
        let p = init_latent_positions(&BoundingBox::square(1.0), 9).unwrap();
        let t = 2.0 / 3.0;
        let expect = [-t, 0.0, t];
        for r in 0..3 {
            for c in 0..3 {
                let row = p.row_slice(r * 3 + c);
                assert!((row[0] - expect[c]).abs() < 1e-15);
                assert!((row[1] - expect[r]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_latent_sits_at_the_centre() {
        let b = BoundingBox::new(vec![-0.5, -0.25], vec![0.25, 0.25]).unwrap();
        let p = init_latent_positions(&b, 1).unwrap();
        assert_eq!(p.data(), &[-0.125, 0.0]);
    }

    #[test]
    fn four_latents_in_the_elasticity_box() {
        let p = init_latent_positions(&BoundingBox::square(0.75), 4).unwrap();
        assert_eq!(
            p.data(),
            &[-0.375, -0.375, 0.375, -0.375, -0.375, 0.375, 0.375, 0.375]
        );
    }

    #[test]
    fn grids_are_most_square() {
        assert_eq!(grid_shape(16), (4, 4));
        assert_eq!(grid_shape(12), (3, 4));
        assert_eq!(grid_shape(8), (2, 4));
        assert_eq!(grid_shape(7), (1, 7));
        assert_eq!(grid_shape(1), (1, 1));
        let p = init_latent_positions(&BoundingBox::square(1.0), 7).unwrap();
        assert_eq!(p.rows(), 7);
        assert!(p.data().chunks(2).all(|r| r[1] == 0.0));
    }

    fn tiny_state(steps: usize) -> (EncoderState, FieldSample) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = FieldConfig {
            dim: 2,
            n_out: 1,
            latent_dim: 3,
            rff_dim: 8,
            rff_sigma: 1.0,
            d_k: 4,
            d_v: 4,
            heads: 2,
            window: 0.1,
        };
        let params = EnfParams::init(&cfg, &mut rng).unwrap();
        let pos = init_latent_positions(&BoundingBox::square(1.0), 4).unwrap();
        let coords = Tensor::uniform(20, 2, -1.0, 1.0, &mut rng);
        let input = Tensor::uniform(20, 1, -1.0, 1.0, &mut rng);
        let sample =
            FieldSample::new(coords, input.clone(), input, vec![], vec![false; 20]).unwrap();
        (EncoderState::new(params, pos, steps, 1.0).unwrap(), sample)
    }

    #[test]
    fn zero_steps_leave_zero_features() {
        let (state, sample) = tiny_state(0);
        let (z, trace) = encode(&sample, &state).unwrap();
        assert!(z.features.data().iter().all(|&x| x == 0.0));
        assert_eq!(trace.losses.len(), 1);
    }

    #[test]
    fn trace_has_one_entry_per_step_plus_one() {
        let (state, sample) = tiny_state(3);
        let (z, trace) = encode(&sample, &state).unwrap();
        assert_eq!(trace.losses.len(), 4);
        assert_eq!(z.positions, state.positions);
        assert!(trace.losses.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn global_encoding_requires_degenerate_state() {
        let (state, sample) = tiny_state(1);
        assert!(matches!(
            encode_global(&sample, &state),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn exploding_inner_loop_reports_the_step() {
        let (mut state, sample) = tiny_state(5);
        state.inner_lr = 1e150;
        match encode(&sample, &state) {
            Err(Error::Encode { step }) => assert!(step >= 1),
            other => panic!("expected an encode error, got {other:?}"),
        }
    }
}
