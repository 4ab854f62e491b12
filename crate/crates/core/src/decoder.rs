//! Output operator: append global parameters to every latent feature, mix
//! latents with residual self-attention, then decode with an equivariant
//! field.

use rand::Rng;

use crate::autodiff::{Bound, ParamSet, Tape, Var};
use crate::error::{Error, Result, ShapeError};
use crate::field::{
    check_output_rows, EnfParams, FieldConfig, FieldGeometry, FieldVars, LatentPointCloud, QuerySet,
};
use crate::tensor::Tensor;

/// Latents whose feature rows are `[c_j; μ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedLatents {
    pub positions: Tensor,
    pub features: Tensor,
}

pub fn condition_latents(z: &LatentPointCloud, mu: &[f64]) -> ConditionedLatents {
    let n = z.len();
    let l = z.feature_dim();
    let width = l + mu.len();
    let mut data = Vec::with_capacity(n * width);
    for j in 0..n {
        data.extend_from_slice(z.features.row_slice(j));
        data.extend_from_slice(mu);
    }
    ConditionedLatents {
        positions: z.positions.clone(),
        features: Tensor::from_rows(n, width, data).expect("non-empty latents"),
    }
}

/// One residual single-head self-attention block over latent features:
/// `c̃_j = c_j + Σ_ℓ softmax_ℓ((W_q c_j)ᵀ(W_k c_ℓ)/√d_k) W_v c_ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionBlock {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

impl AttentionBlock {
    pub fn init<R: Rng + ?Sized>(dim: usize, d_k: usize, rng: &mut R) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        AttentionBlock {
            w_q: Tensor::randn(d_k, dim, s, rng),
            w_k: Tensor::randn(d_k, dim, s, rng),
            // small so the stack starts close to the identity
            w_v: Tensor::randn(dim, dim, 0.1 * s, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_v.rows()
    }

    fn validate(&self) -> Result<()> {
        let (dk, dim) = (self.w_q.rows(), self.dim());
        if self.w_q.shape() != [dk, dim]
            || self.w_k.shape() != [dk, dim]
            || self.w_v.shape() != [dim, dim]
        {
            return Err(ShapeError::new(format!(
                "attention block shapes {:?} {:?} {:?}",
                self.w_q.shape(),
                self.w_k.shape(),
                self.w_v.shape()
            ))
            .into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars<'t> {
    pub w_q: Var<'t>,
    pub w_k: Var<'t>,
    pub w_v: Var<'t>,
}

/// Apply one block on the tape. Positions never enter.
pub fn attention_block_on_tape<'t>(c: Var<'t>, b: &BlockVars<'t>) -> Result<Var<'t>> {
    let d_k = b.w_q.shape()[0] as f64;
    let q = c.matmul_t(b.w_q, false, true)?;
    let k = c.matmul_t(b.w_k, false, true)?;
    let v = c.matmul_t(b.w_v, false, true)?;
    let att = q
        .matmul_t(k, false, true)?
        .scale(1.0 / d_k.sqrt())
        .softmax_rows()?;
    c.add(att.matmul(v)?)
}

pub fn self_attention_block(features: &Tensor, block: &AttentionBlock) -> Result<Tensor> {
    block.validate()?;
    if features.cols() != block.dim() {
        return Err(ShapeError::mismatch(
            "self_attention_block",
            features.shape(),
            block.w_v.shape(),
        )
        .into());
    }
    let tape = Tape::inference();
    let b = BlockVars {
        w_q: tape.constant(block.w_q.clone()),
        w_k: tape.constant(block.w_k.clone()),
        w_v: tape.constant(block.w_v.clone()),
    };
    let out = attention_block_on_tape(tape.constant(features.clone()), &b)?;
    Ok(out.value().as_ref().clone())
}

/// Self-attention stack followed by the output field.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    pub blocks: Vec<AttentionBlock>,
    pub field: EnfParams,
}

impl DecoderParams {
    pub fn init<R: Rng + ?Sized>(
        field: &FieldConfig,
        n_blocks: usize,
        block_dk: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let params = EnfParams::init(field, rng)?;
        let blocks = (0..n_blocks)
            .map(|_| AttentionBlock::init(field.latent_dim, block_dk, rng))
            .collect();
        Ok(DecoderParams {
            blocks,
            field: params,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        for b in &self.blocks {
            b.validate()?;
            if b.dim() != self.field.latent_dim() {
                return Err(ShapeError::new(format!(
                    "block width {} differs from field latent dim {}",
                    b.dim(),
                    self.field.latent_dim()
                ))
                .into());
            }
        }
        Ok(())
    }

    /// Trainable tensors named `block{i}.w_*` and `field.w_*`.
    pub fn trainable(&self) -> ParamSet {
        let mut p = ParamSet::new();
        for (i, b) in self.blocks.iter().enumerate() {
            p.insert(format!("block{i}.w_q"), b.w_q.clone());
            p.insert(format!("block{i}.w_k"), b.w_k.clone());
            p.insert(format!("block{i}.w_v"), b.w_v.clone());
        }
        p.extend_prefixed("field.", &self.field.trainable());
        p
    }

    pub fn with_trainable(&self, p: &ParamSet) -> Result<DecoderParams> {
        let get = |n: String| {
            p.get(&n)
                .cloned()
                .ok_or_else(|| Error::Config(format!("missing decoder parameter {n}")))
        };
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for i in 0..self.blocks.len() {
            blocks.push(AttentionBlock {
                w_q: get(format!("block{i}.w_q"))?,
                w_k: get(format!("block{i}.w_k"))?,
                w_v: get(format!("block{i}.w_v"))?,
            });
        }
        let field = self
            .field
            .with_trainable(&p.with_prefix_stripped("field."))?;
        let out = DecoderParams { blocks, field };
        out.validate()?;
        Ok(out)
    }
}

/// Tape handles for a decoder.
pub struct DecoderVars<'t> {
    pub blocks: Vec<BlockVars<'t>>,
    pub field: FieldVars<'t>,
}

impl<'t> DecoderVars<'t> {
    pub fn constants(tape: &'t Tape, p: &DecoderParams) -> Self {
        let blocks = p
            .blocks
            .iter()
            .map(|b| BlockVars {
                w_q: tape.constant(b.w_q.clone()),
                w_k: tape.constant(b.w_k.clone()),
                w_v: tape.constant(b.w_v.clone()),
            })
            .collect();
        DecoderVars {
            blocks,
            field: p.field.constants(tape),
        }
    }

    /// Bind from names produced by [`DecoderParams::trainable`].
    pub fn from_bound(b: &Bound<'t>, n_blocks: usize) -> Result<Self> {
        let mut blocks = Vec::with_capacity(n_blocks);
        for i in 0..n_blocks {
            blocks.push(BlockVars {
                w_q: b.get(&format!("block{i}.w_q"))?,
                w_k: b.get(&format!("block{i}.w_k"))?,
                w_v: b.get(&format!("block{i}.w_v"))?,
            });
        }
        Ok(DecoderVars {
            blocks,
            field: FieldVars::from_bound(b, "field.")?,
        })
    }
}

/// Blocks then field, on the tape.
pub fn decode_on_tape<'t>(
    geom: &FieldGeometry<'t>,
    vars: &DecoderVars<'t>,
    features: Var<'t>,
) -> Result<Var<'t>> {
    let mut c = features;
    for b in &vars.blocks {
        c = attention_block_on_tape(c, b)?;
    }
    geom.forward(&vars.field, c)
}

/// Output field `M × n_u` at the queries.
pub fn decode(
    latents: &ConditionedLatents,
    queries: &QuerySet,
    params: &DecoderParams,
) -> Result<Tensor> {
    params.validate()?;
    if latents.features.cols() != params.field.latent_dim() {
        return Err(ShapeError::new(format!(
            "conditioned latents have {} dims, decoder expects {}",
            latents.features.cols(),
            params.field.latent_dim()
        ))
        .into());
    }
    if queries.coords.cols() != params.field.dim() || latents.positions.cols() != params.field.dim()
    {
        return Err(ShapeError::new("decoder spatial dimension mismatch".to_string()).into());
    }
    let tape = Tape::inference();
    let geom = FieldGeometry::new(&tape, &params.field, &latents.positions, queries)?;
    let vars = DecoderVars::constants(&tape, params);
    let out = decode_on_tape(&geom, &vars, tape.constant(latents.features.clone()))?;
    let out = out.value().as_ref().clone();
    check_output_rows(&out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_mu_leaves_features_alone() {
        let z = LatentPointCloud::new(Tensor::zeros(3, 2), Tensor::full(3, 4, 0.5)).unwrap();
        let c = condition_latents(&z, &[]);
        assert_eq!(c.features, z.features);
        let c = condition_latents(&z, &[1.0, 2.0]);
        assert_eq!(c.features.shape(), &[3, 6]);
        assert!(c
            .features
            .data()
            .chunks(6)
            .all(|r| r[4] == 1.0 && r[5] == 2.0));
    }

    #[test]
    fn single_latent_block_adds_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = AttentionBlock::init(5, 3, &mut rng);
        let c = Tensor::randn(1, 5, 1.0, &mut rng);
        let out = self_attention_block(&c, &b).unwrap();
        let expect = c.matmul_t(&b.w_v, false, true).unwrap();
        for k in 0..5 {
            assert!((out.data()[k] - c.data()[k] - expect.data()[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn block_width_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = AttentionBlock::init(5, 3, &mut rng);
        assert!(matches!(
            self_attention_block(&Tensor::zeros(2, 4), &b),
            Err(Error::Shape(_))
        ));
    }
}
