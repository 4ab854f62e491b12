//! Scalar-loop reference implementations and random instances shared by
//! the integration tests.
#![allow(dead_code)]

use enfield::decoder::{AttentionBlock, DecoderParams};
use enfield::field::{EnfParams, FieldConfig, LatentPointCloud, QuerySet};
use enfield::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tiny_field(n_out: usize, latent_dim: usize, window: f64) -> FieldConfig {
    FieldConfig {
        dim: 2,
        n_out,
        latent_dim,
        rff_dim: 8,
        rff_sigma: 1.5,
        d_k: 4,
        d_v: 6,
        heads: 2,
        window,
    }
}

pub fn random_latents(n: usize, l: usize, r: &mut ChaCha8Rng) -> LatentPointCloud {
    LatentPointCloud::new(
        Tensor::uniform(n, 2, -1.0, 1.0, r),
        Tensor::uniform(n, l, -1.0, 1.0, r),
    )
    .unwrap()
}

pub fn random_queries(m: usize, r: &mut ChaCha8Rng) -> QuerySet {
    QuerySet::new(Tensor::uniform(m, 2, -1.0, 1.0, r)).unwrap()
}

/// Random field: all matrices from `init`, then rescaled so attention is
/// far from uniform.
pub fn random_field(cfg: &FieldConfig, r: &mut ChaCha8Rng) -> EnfParams {
    let mut p = EnfParams::init(cfg, r).unwrap();
    p.w_q = p.w_q.scale(2.0);
    p.w_k = p.w_k.scale(2.0);
    p
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Output of the field at every query, computed pair by pair.
pub fn naive_field(z: &LatentPointCloud, q: &QuerySet, p: &EnfParams) -> Vec<Vec<f64>> {
    let (n, d) = (z.positions.rows(), z.positions.cols());
    let half = p.fourier.rows();
    let (dk, dv, heads) = (p.w_q.rows(), p.w_v.rows(), p.heads);
    let (dkh, dvh) = (dk / heads, dv / heads);
    let mut out = Vec::new();
    for m in 0..q.coords.rows() {
        let x = q.coords.row_slice(m);
        let mut enc = Vec::new();
        let mut dist = Vec::new();
        for j in 0..n {
            let pj = z.positions.row_slice(j);
            let off: Vec<f64> = (0..d).map(|k| x[k] - pj[k]).collect();
            let mut b = vec![0.0; 2 * half];
            for r in 0..half {
                let ph = dot(p.fourier.row_slice(r), &off);
                b[r] = ph.cos();
                b[half + r] = ph.sin();
            }
            enc.push(b);
            dist.push(dot(&off, &off));
        }
        let mut concat = vec![0.0; dv];
        for h in 0..heads {
            let mut logits = vec![0.0; n];
            for j in 0..n {
                let c = z.features.row_slice(j);
                let mut s = 0.0;
                for r in h * dkh..(h + 1) * dkh {
                    s += dot(p.w_q.row_slice(r), &enc[j]) * dot(p.w_k.row_slice(r), c);
                }
                logits[j] = s / (dkh as f64).sqrt() - p.window * dist[j];
            }
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let tot: f64 = w.iter().sum();
            for j in 0..n {
                let c = z.features.row_slice(j);
                for r in h * dvh..(h + 1) * dvh {
                    let v = dot(p.w_v.row_slice(r), c) * dot(p.w_s.row_slice(r), &enc[j])
                        + dot(p.w_b.row_slice(r), &enc[j]);
                    concat[r] += w[j] / tot * v;
                }
            }
        }
        out.push(
            (0..p.w_o.rows())
                .map(|o| dot(p.w_o.row_slice(o), &concat))
                .collect(),
        );
    }
    out
}

pub fn naive_block(c: &Tensor, b: &AttentionBlock) -> Vec<Vec<f64>> {
    let n = c.rows();
    let dk = b.w_q.rows() as f64;
    let proj = |w: &Tensor, j: usize| -> Vec<f64> {
        (0..w.rows())
            .map(|r| dot(w.row_slice(r), c.row_slice(j)))
            .collect()
    };
    (0..n)
        .map(|j| {
            let q = proj(&b.w_q, j);
            let logits: Vec<f64> = (0..n)
                .map(|l| dot(&q, &proj(&b.w_k, l)) / dk.sqrt())
                .collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = logits.iter().map(|x| (x - mx).exp()).collect();
            let tot: f64 = w.iter().sum();
            let mut out = c.row_slice(j).to_vec();
            for l in 0..n {
                let v = proj(&b.w_v, l);
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += w[l] / tot * vi;
                }
            }
            out
        })
        .collect()
}

pub fn naive_decode(
    z: &LatentPointCloud,
    mu: &[f64],
    q: &QuerySet,
    d: &DecoderParams,
) -> Vec<Vec<f64>> {
    let n = z.positions.rows();
    let rows: Vec<f64> = (0..n)
        .flat_map(|j| {
            z.features
                .row_slice(j)
                .iter()
                .chain(mu)
                .copied()
                .collect::<Vec<_>>()
        })
        .collect();
    let mut c = Tensor::from_rows(n, z.features.cols() + mu.len(), rows).unwrap();
    for b in &d.blocks {
        let next = naive_block(&c, b);
        c = Tensor::from_rows(n, c.cols(), next.concat()).unwrap();
    }
    naive_field(
        &LatentPointCloud::new(z.positions.clone(), c).unwrap(),
        q,
        &d.field,
    )
}

pub fn naive_loss(pred: &Tensor, target: &Tensor) -> f64 {
    let mut s = 0.0;
    for i in 0..pred.rows() {
        for k in 0..pred.cols() {
            let e = target.get(i, k) - pred.get(i, k);
            s += e * e;
        }
    }
    s / pred.rows() as f64
}

/// Ranks by counting, ties averaged; then the Pearson formula.
pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn max_diff(a: &Tensor, b: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in b.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            m = m.max((a.get(i, k) - v).abs());
        }
    }
    m
}

/// Integer-valued vector with occasional ties.
pub fn tied_vector(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(0..n) as f64).collect()
}
