//! Translation-equivariant cross-attention neural field.
//!
//! A query `x` attends over latent points `(p_j, c_j)`. Everything the query
//! sees about a latent goes through the offset `x − p_j`: its Fourier
//! encoding `b = γ(x − p_j) = [cos W(x−p_j), sin W(x−p_j)]` feeds the query
//! and value maps, and `σ‖x − p_j‖²` is subtracted from the attention logit.
//! Values are `(W_v c) ⊙ (W_s b) + W_b b`; the output is `W_o Σ_j att · v`.
//!
//! Heads split the rows of `W_q, W_k` (keys) and `W_v, W_s, W_b` (values)
//! evenly; the distance penalty is added to every head's logits and head
//! outputs are concatenated before `W_o`.
//!
//! The differentiable path never materialises the `M × N × d_γ` encodings.
//! Because `γ(x − p) = R(p) γ(x)` for the block rotation
//! `R(p) = [[C, S], [−S, C]]` with `C = diag cos Wp`, `S = diag sin Wp`,
//! both `q(b)ᵀk(c)` and `W_o v(b, c)` are inner products of `γ(x)` with
//! per-latent vectors, so each head costs two `M × d_γ × N` matmuls.

use std::rc::Rc;

use rand::Rng;

use crate::autodiff::{concat_cols, Bound, ParamSet, Tape, Var};
use crate::error::{Error, Result, ShapeError};
use crate::tensor::Tensor;

/// Dimensions and fixed hyperparameters of one field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    /// Spatial dimension.
    pub dim: usize,
    pub n_out: usize,
    pub latent_dim: usize,
    /// Length of the Fourier encoding `γ`; must be even.
    pub rff_dim: usize,
    pub rff_sigma: f64,
    pub d_k: usize,
    pub d_v: usize,
    pub heads: usize,
    /// Gaussian window: weight of the squared-distance penalty.
    pub window: f64,
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.dim == 0 || self.n_out == 0 || self.latent_dim == 0 {
            return err(format!("field dimensions must be positive: {self:?}"));
        }
        if self.rff_dim == 0 || self.rff_dim % 2 != 0 {
            return err(format!(
                "Fourier encoding length must be even and positive, got {}",
                self.rff_dim
            ));
        }
        if self.heads == 0
            || self.d_k % self.heads != 0
            || self.d_v % self.heads != 0
            || self.d_k == 0
            || self.d_v == 0
        {
            return err(format!(
                "d_k={} and d_v={} must split evenly over {} heads",
                self.d_k, self.d_v, self.heads
            ));
        }
        if !(self.window >= 0.0) || !self.window.is_finite() {
            return err(format!(
                "window must be finite and non-negative, got {}",
                self.window
            ));
        }
        if !(self.rff_sigma > 0.0) || !self.rff_sigma.is_finite() {
            return err(format!(
                "Fourier scale must be positive, got {}",
                self.rff_sigma
            ));
        }
        Ok(())
    }
}

/// Sample-specific representation: anchored positions with feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPointCloud {
    pub positions: Tensor,
    pub features: Tensor,
}

impl LatentPointCloud {
    pub fn new(positions: Tensor, features: Tensor) -> Result<Self> {
        if !positions.is_matrix() || !features.is_matrix() || positions.rows() != features.rows() {
            return Err(ShapeError::mismatch(
                "latent point cloud",
                positions.shape(),
                features.shape(),
            )
            .into());
        }
        if !positions.all_finite() {
            return Err(Error::NonFinite("latent positions".into()));
        }
        Ok(LatentPointCloud {
            positions,
            features,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Every position moved by `delta`.
    pub fn shifted(&self, delta: &[f64]) -> LatentPointCloud {
        LatentPointCloud {
            positions: shift_rows(&self.positions, delta),
            features: self.features.clone(),
        }
    }
}

/// Query coordinates, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct QuerySet {
    pub coords: Tensor,
}

impl QuerySet {
    pub fn new(coords: Tensor) -> Result<Self> {
        if !coords.is_matrix() {
            return Err(ShapeError::new(format!(
                "queries must be M x d, got {:?}",
                coords.shape()
            ))
            .into());
        }
        if !coords.all_finite() {
            return Err(Error::NonFinite("query coordinates".into()));
        }
        Ok(QuerySet { coords })
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shifted(&self, delta: &[f64]) -> QuerySet {
        QuerySet {
            coords: shift_rows(&self.coords, delta),
        }
    }
}

pub fn shift_rows(t: &Tensor, delta: &[f64]) -> Tensor {
    let mut out = t.clone();
    let d = t.cols();
    assert_eq!(d, delta.len(), "shift dimension");
    for row in out.data_mut().chunks_mut(d) {
        for (x, s) in row.iter_mut().zip(delta) {
            *x += s;
        }
    }
    out
}

/// Learnable matrices of one field plus its frozen Fourier matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EnfParams {
    /// `d_γ/2 × d`, sampled once and never trained.
    pub fourier: Tensor,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_s: Tensor,
    pub w_b: Tensor,
    pub w_o: Tensor,
    pub window: f64,
    pub heads: usize,
}

pub const TRAINABLE: [&str; 6] = ["w_q", "w_k", "w_v", "w_s", "w_b", "w_o"];

impl EnfParams {
    pub fn init<R: Rng + ?Sized>(cfg: &FieldConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let g = cfg.rff_dim;
        let inv = |n: usize| 1.0 / (n as f64).sqrt();
        Ok(EnfParams {
            fourier: Tensor::randn(g / 2, cfg.dim, cfg.rff_sigma, rng),
            w_q: Tensor::randn(cfg.d_k, g, inv(g), rng),
            w_k: Tensor::randn(cfg.d_k, cfg.latent_dim, inv(cfg.latent_dim), rng),
            w_v: Tensor::randn(cfg.d_v, cfg.latent_dim, inv(cfg.latent_dim), rng),
            w_s: Tensor::randn(cfg.d_v, g, inv(g), rng),
            w_b: Tensor::randn(cfg.d_v, g, inv(g), rng),
            w_o: Tensor::randn(cfg.n_out, cfg.d_v, inv(cfg.d_v), rng),
            window: cfg.window,
            heads: cfg.heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.fourier.cols()
    }

    pub fn rff_dim(&self) -> usize {
        2 * self.fourier.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_k.cols()
    }

    pub fn n_out(&self) -> usize {
        self.w_o.rows()
    }

    pub fn d_k(&self) -> usize {
        self.w_q.rows()
    }

    pub fn d_v(&self) -> usize {
        self.w_v.rows()
    }

    /// Check that all matrices agree with each other.
    pub fn validate(&self) -> Result<()> {
        let g = self.rff_dim();
        let (dk, dv, l) = (self.d_k(), self.d_v(), self.latent_dim());
        let expect = [
            ("w_q", &self.w_q, dk, g),
            ("w_k", &self.w_k, dk, l),
            ("w_v", &self.w_v, dv, l),
            ("w_s", &self.w_s, dv, g),
            ("w_b", &self.w_b, dv, g),
            ("w_o", &self.w_o, self.n_out(), dv),
        ];
        for (name, t, r, c) in expect {
            if t.shape() != [r, c] {
                return Err(ShapeError::new(format!(
                    "{name} is {:?}, expected [{r}, {c}]",
                    t.shape()
                ))
                .into());
            }
        }
        if self.heads == 0 || dk % self.heads != 0 || dv % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_k={dk}, d_v={dv} do not split over {} heads",
                self.heads
            )));
        }
        if !(self.window >= 0.0) {
            return Err(Error::Config(format!(
                "window must be non-negative, got {}",
                self.window
            )));
        }
        Ok(())
    }

    pub fn trainable(&self) -> ParamSet {
        let mut p = ParamSet::new();
        for (name, t) in TRAINABLE.iter().zip(self.trainable_refs()) {
            p.insert(*name, t.clone());
        }
        p
    }

    fn trainable_refs(&self) -> [&Tensor; 6] {
        [
            &self.w_q, &self.w_k, &self.w_v, &self.w_s, &self.w_b, &self.w_o,
        ]
    }

    /// Copy with the trainable matrices replaced from `p` (unprefixed names).
    pub fn with_trainable(&self, p: &ParamSet) -> Result<EnfParams> {
        let get = |n: &str| {
            p.get(n)
                .cloned()
                .ok_or_else(|| Error::Config(format!("missing field parameter {n}")))
        };
        let out = EnfParams {
            fourier: self.fourier.clone(),
            w_q: get("w_q")?,
            w_k: get("w_k")?,
            w_v: get("w_v")?,
            w_s: get("w_s")?,
            w_b: get("w_b")?,
            w_o: get("w_o")?,
            window: self.window,
            heads: self.heads,
        };
        out.validate()?;
        Ok(out)
    }

    /// Bind the trainable matrices as tape constants.
    pub fn constants<'t>(&self, tape: &'t Tape) -> FieldVars<'t> {
        let [q, k, v, s, b, o] = self.trainable_refs().map(|t| tape.constant(t.clone()));
        FieldVars {
            w_q: q,
            w_k: k,
            w_v: v,
            w_s: s,
            w_b: b,
            w_o: o,
        }
    }
}

/// Tape handles for the trainable matrices of a field.
#[derive(Clone, Copy, Debug)]
pub struct FieldVars<'t> {
    pub w_q: Var<'t>,
    pub w_k: Var<'t>,
    pub w_v: Var<'t>,
    pub w_s: Var<'t>,
    pub w_b: Var<'t>,
    pub w_o: Var<'t>,
}

impl<'t> FieldVars<'t> {
    /// Look up `{prefix}w_q` … `{prefix}w_o` in bound parameters.
    pub fn from_bound(b: &Bound<'t>, prefix: &str) -> Result<Self> {
        let g = |n: &str| b.get(&format!("{prefix}{n}"));
        Ok(FieldVars {
            w_q: g("w_q")?,
            w_k: g("w_k")?,
            w_v: g("w_v")?,
            w_s: g("w_s")?,
            w_b: g("w_b")?,
            w_o: g("w_o")?,
        })
    }
}

/// `γ(x)` for every row of `coords`: `M × d_γ`.
pub fn fourier_encode(coords: &Tensor, fourier: &Tensor) -> Result<Tensor> {
    let phase = coords.matmul_t(fourier, false, true)?;
    let (m, half) = (phase.rows(), phase.cols());
    let mut out = Vec::with_capacity(m * 2 * half);
    for row in phase.data().chunks(half) {
        out.extend(row.iter().map(|x| x.cos()));
        out.extend(row.iter().map(|x| x.sin()));
    }
    Ok(Tensor::from_rows(m, 2 * half, out)?)
}

/// Fourier features of explicit offsets, `M × N × d` in, `M × N × d_γ` out.
pub fn rff_encode(offsets: &Tensor, fourier: &Tensor) -> Result<Tensor> {
    let s = offsets.shape();
    if s.len() != 3 || s[2] != fourier.cols() {
        return Err(ShapeError::mismatch("rff_encode", s, fourier.shape()).into());
    }
    let flat = offsets.reshape(vec![s[0] * s[1], s[2]])?;
    let enc = fourier_encode(&flat, fourier)?;
    let g = enc.cols();
    Ok(enc.reshape(vec![s[0], s[1], g])?)
}

/// Offsets `x_m − p_j` as an `M × N × d` tensor.
pub fn offsets(queries: &QuerySet, positions: &Tensor) -> Result<Tensor> {
    let (m, d) = (queries.coords.rows(), queries.coords.cols());
    let n = positions.rows();
    if positions.cols() != d {
        return Err(
            ShapeError::mismatch("offsets", queries.coords.shape(), positions.shape()).into(),
        );
    }
    let mut out = Vec::with_capacity(m * n * d);
    for i in 0..m {
        let x = queries.coords.row_slice(i);
        for j in 0..n {
            out.extend(x.iter().zip(positions.row_slice(j)).map(|(a, b)| a - b));
        }
    }
    Ok(Tensor::new(vec![m, n, d], out)?)
}

fn check_shapes(z: &LatentPointCloud, queries: &QuerySet, params: &EnfParams) -> Result<()> {
    params.validate()?;
    if z.positions.cols() != params.dim() || queries.coords.cols() != params.dim() {
        return Err(ShapeError::new(format!(
            "spatial dims differ: latents {}, queries {}, field {}",
            z.positions.cols(),
            queries.coords.cols(),
            params.dim()
        ))
        .into());
    }
    if z.feature_dim() != params.latent_dim() {
        return Err(ShapeError::new(format!(
            "latent features have {} dims, field expects {}",
            z.feature_dim(),
            params.latent_dim()
        ))
        .into());
    }
    Ok(())
}

/// Attention weights for every head, each `M × N`, computed directly from
/// explicit offset encodings.
pub fn attention_weights(
    queries: &QuerySet,
    z: &LatentPointCloud,
    params: &EnfParams,
) -> Result<Vec<Tensor>> {
    check_shapes(z, queries, params)?;
    let b = rff_encode(&offsets(queries, &z.positions)?, &params.fourier)?;
    let (m, n, g) = (b.shape()[0], b.shape()[1], b.shape()[2]);
    let dkh = params.d_k() / params.heads;
    let keys = z.features.matmul_t(&params.w_k, false, true)?;
    let mut heads = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let rows = h * dkh..(h + 1) * dkh;
        let mut logits = Tensor::zeros(m, n);
        for i in 0..m {
            let x = queries.coords.row_slice(i);
            for j in 0..n {
                let bij = &b.data()[(i * n + j) * g..(i * n + j + 1) * g];
                let mut dot = 0.0;
                for r in rows.clone() {
                    let q: f64 = params
                        .w_q
                        .row_slice(r)
                        .iter()
                        .zip(bij)
                        .map(|(a, b)| a * b)
                        .sum();
                    dot += q * keys.get(j, r);
                }
                let dist2: f64 = x
                    .iter()
                    .zip(z.positions.row_slice(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                logits.set(i, j, dot / (dkh as f64).sqrt() - params.window * dist2);
            }
        }
        heads.push(softmax_rows(&logits));
    }
    Ok(heads)
}

fn softmax_rows(t: &Tensor) -> Tensor {
    let mut out = t.clone();
    let c = t.cols();
    for row in out.data_mut().chunks_mut(c) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = (*x - mx).exp();
            s += *x;
        }
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    out
}

/// Scale-and-shift value `(W_v c) ⊙ (W_s b) + W_b b` for one encoding.
pub fn value_fn(b: &[f64], c: &[f64], params: &EnfParams) -> Result<Vec<f64>> {
    if b.len() != params.rff_dim() || c.len() != params.latent_dim() {
        return Err(ShapeError::new(format!(
            "value_fn got |b|={}, |c|={}, expected {}, {}",
            b.len(),
            c.len(),
            params.rff_dim(),
            params.latent_dim()
        ))
        .into());
    }
    let dot = |row: &[f64], v: &[f64]| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    Ok((0..params.d_v())
        .map(|r| {
            dot(params.w_v.row_slice(r), c) * dot(params.w_s.row_slice(r), b)
                + dot(params.w_b.row_slice(r), b)
        })
        .collect())
}

/// Tape constants that depend only on geometry: query encodings, the
/// distance penalty and the per-latent rotations.
pub struct FieldGeometry<'t> {
    gamma: Var<'t>,
    penalty: Option<Var<'t>>,
    rot_cos: Var<'t>,
    rot_sin: Var<'t>,
    swap: Rc<[usize]>,
    heads: usize,
    n_lat: usize,
}

impl<'t> FieldGeometry<'t> {
    pub fn new(
        tape: &'t Tape,
        params: &EnfParams,
        positions: &Tensor,
        queries: &QuerySet,
    ) -> Result<Self> {
        let d = params.dim();
        if positions.cols() != d || queries.coords.cols() != d {
            return Err(ShapeError::mismatch(
                "field geometry",
                positions.shape(),
                queries.coords.shape(),
            )
            .into());
        }
        let gamma = fourier_encode(&queries.coords, &params.fourier)?;
        let (m, n) = (queries.len(), positions.rows());
        let penalty = if params.window != 0.0 {
            let mut pen = Tensor::zeros(m, n);
            for i in 0..m {
                let x = queries.coords.row_slice(i);
                for j in 0..n {
                    let d2: f64 = x
                        .iter()
                        .zip(positions.row_slice(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    pen.set(i, j, params.window * d2);
                }
            }
            Some(tape.constant(pen))
        } else {
            None
        };
        // Rᵀ y = [C y1 − S y2, S y1 + C y2] = y ⊙ [C, C] + swap(y) ⊙ [−S, S]
        let phase = positions.matmul_t(&params.fourier, false, true)?;
        let half = phase.cols();
        let mut rc = Vec::with_capacity(n * 2 * half);
        let mut rs = Vec::with_capacity(n * 2 * half);
        for row in phase.data().chunks(half) {
            rc.extend(row.iter().map(|x| x.cos()));
            rc.extend(row.iter().map(|x| x.cos()));
            rs.extend(row.iter().map(|x| -x.sin()));
            rs.extend(row.iter().map(|x| x.sin()));
        }
        let swap: Rc<[usize]> = (half..2 * half).chain(0..half).collect();
        Ok(FieldGeometry {
            gamma: tape.constant(gamma),
            penalty,
            rot_cos: tape.constant(Tensor::from_rows(n, 2 * half, rc)?),
            rot_sin: tape.constant(Tensor::from_rows(n, 2 * half, rs)?),
            swap,
            heads: params.heads,
            n_lat: n,
        })
    }

    pub fn n_queries(&self) -> usize {
        self.gamma.shape()[0]
    }

    /// Row j of the result is `R(p_j)ᵀ y_j`.
    fn rotate(&self, y: Var<'t>) -> Result<Var<'t>> {
        let swapped = y.gather_cols(&self.swap)?;
        y.mul(self.rot_cos)?.add(swapped.mul(self.rot_sin)?)
    }

    /// Field values at the queries, `M × n_out`, for latent features
    /// `features` (`N × l_d`).
    pub fn forward(&self, w: &FieldVars<'t>, features: Var<'t>) -> Result<Var<'t>> {
        let n = self.n_lat;
        let fs = features.shape();
        if fs[0] != n {
            return Err(
                ShapeError::new(format!("{} latent features for {n} positions", fs[0])).into(),
            );
        }
        let (dk, dv) = (w.w_q.shape()[0], w.w_v.shape()[0]);
        let n_out = w.w_o.shape()[0];
        let (dkh, dvh) = (dk / self.heads, dv / self.heads);
        let inv_sqrt = 1.0 / (dkh as f64).sqrt();
        let mut channels: Vec<Option<Var<'t>>> = vec![None; n_out];
        for h in 0..self.heads {
            let keys = features.matmul_t(w.w_k.slice_rows(h * dkh, dkh)?, false, true)?;
            let u = self.rotate(keys.matmul(w.w_q.slice_rows(h * dkh, dkh)?)?)?;
            let mut logits = self.gamma.matmul_t(u, false, true)?.scale(inv_sqrt);
            if let Some(pen) = self.penalty {
                logits = logits.sub(pen)?;
            }
            let att = logits.softmax_rows()?;

            let scale = features.matmul_t(w.w_v.slice_rows(h * dvh, dvh)?, false, true)?;
            let w_s = w.w_s.slice_rows(h * dvh, dvh)?;
            let w_b = w.w_b.slice_rows(h * dvh, dvh)?;
            let w_o = w.w_o.slice_cols(h * dvh, dvh)?;
            for (o, slot) in channels.iter_mut().enumerate() {
                let wo = w_o.slice_rows(o, 1)?;
                let modulated = scale.mul(wo.broadcast_rows(n)?)?.matmul(w_s)?;
                let shift = wo.matmul(w_b)?.broadcast_rows(n)?;
                let e = self.rotate(modulated.add(shift)?)?;
                let out = att.mul(self.gamma.matmul_t(e, false, true)?)?.sum_cols()?;
                *slot = Some(match *slot {
                    Some(prev) => prev.add(out)?,
                    None => out,
                });
            }
        }
        let channels: Vec<Var<'t>> = channels
            .into_iter()
            .map(|c| c.expect("at least one head"))
            .collect();
        if channels.len() == 1 {
            Ok(channels[0])
        } else {
            concat_cols(&channels)
        }
    }
}

/// Field values `M × n_out` at `queries` for the latent point cloud `z`.
pub fn enf_forward(z: &LatentPointCloud, queries: &QuerySet, params: &EnfParams) -> Result<Tensor> {
    check_shapes(z, queries, params)?;
    let tape = Tape::inference();
    let geom = FieldGeometry::new(&tape, params, &z.positions, queries)?;
    let vars = params.constants(&tape);
    let out = geom.forward(&vars, tape.constant(z.features.clone()))?;
    let out = out.value().as_ref().clone();
    check_output_rows(&out)?;
    Ok(out)
}

pub(crate) fn check_output_rows(out: &Tensor) -> Result<()> {
    let c = out.cols();
    if let Some(i) = out
        .data()
        .chunks(c)
        .position(|row| row.iter().any(|x| !x.is_finite()))
    {
        return Err(Error::NonFinite(format!("field output at query {i}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FieldConfig {
        FieldConfig {
            dim: 2,
            n_out: 1,
            latent_dim: 3,
            rff_dim: 8,
            rff_sigma: 1.0,
            d_k: 4,
            d_v: 4,
            heads: 2,
            window: 0.1,
        }
    }

    #[test]
    fn zero_offset_encodes_to_ones_then_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Tensor::randn(4, 2, 1.0, &mut rng);
        let enc = rff_encode(&Tensor::new(vec![1, 1, 2], vec![0.0, 0.0]).unwrap(), &w).unwrap();
        assert_eq!(enc.data(), &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn half_turn_phase() {
        let w = Tensor::from_rows(1, 2, vec![1.0, 0.0]).unwrap();
        let enc = rff_encode(
            &Tensor::new(vec![1, 1, 2], vec![std::f64::consts::PI, 3.0]).unwrap(),
            &w,
        )
        .unwrap();
        assert_eq!(enc.data()[0], -1.0);
        assert!(enc.data()[1].abs() < 1e-15);
    }

    #[test]
    fn odd_encoding_length_is_rejected() {
        let mut c = cfg();
        c.rff_dim = 7;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.rff_dim = 8;
        c.d_k = 5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn single_latent_gets_all_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = EnfParams::init(&cfg(), &mut rng).unwrap();
        let z = LatentPointCloud::new(
            Tensor::randn(1, 2, 1.0, &mut rng),
            Tensor::randn(1, 3, 1.0, &mut rng),
        )
        .unwrap();
        let q = QuerySet::new(Tensor::randn(5, 2, 1.0, &mut rng)).unwrap();
        for head in attention_weights(&q, &z, &p).unwrap() {
            assert!(head.data().iter().all(|&a| a == 1.0));
        }
    }

    #[test]
    fn value_fn_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = EnfParams::init(&cfg(), &mut rng).unwrap();
        let b: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let v = value_fn(&b, &[0.0; 3], &p).unwrap();
        let wb = p.w_b.matmul(&Tensor::column(b.clone())).unwrap();
        assert!(v.iter().zip(wb.data()).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(value_fn(&[0.0; 8], &[0.3, -1.0, 2.0], &p)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn feature_dim_mismatch_is_a_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = EnfParams::init(&cfg(), &mut rng).unwrap();
        let z = LatentPointCloud::new(Tensor::zeros(2, 2), Tensor::zeros(2, 5)).unwrap();
        let q = QuerySet::new(Tensor::zeros(3, 2)).unwrap();
        assert!(matches!(enf_forward(&z, &q, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_output_names_the_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = EnfParams::init(&cfg(), &mut rng).unwrap();
        p.w_o.set(0, 0, f64::INFINITY);
        let z = LatentPointCloud::new(Tensor::zeros(2, 2), Tensor::zeros(2, 3)).unwrap();
        let q = QuerySet::new(Tensor::zeros(3, 2)).unwrap();
        let err = enf_forward(&z, &q, &p).unwrap_err().to_string();
        assert!(err.contains("query 0"), "{err}");
    }
}
