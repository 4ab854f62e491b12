//! Shift latents and queries together and compare field outputs.
//!
//! `cargo run --release --example equivariance -- [shift_x shift_y]`

use enfield::encoder::init_latent_positions;
use enfield::field::{enf_forward, EnfParams, LatentPointCloud, QuerySet};
use enfield::model::ModelConfig;
use enfield::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> enfield::Result<()> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("shift must be numeric"))
        .collect();
    let d = match args[..] {
        [x, y] => [x, y],
        _ => [3.7, -12.25],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = ModelConfig::flow();
    let params = EnfParams::init(&cfg.encoder_field(), &mut rng)?;
    let z = LatentPointCloud::new(
        init_latent_positions(&cfg.bbox()?, cfg.n_lat)?,
        Tensor::randn(cfg.n_lat, cfg.latent_dim, 1.0, &mut rng),
    )?;
    let q = QuerySet::new(Tensor::uniform(1000, 2, -1.0, 1.0, &mut rng))?;

    let a = enf_forward(&z, &q, &params)?;
    let b = enf_forward(&z.shifted(&d), &q.shifted(&d), &params)?;
    println!("shift ({}, {})", d[0], d[1]);
    println!("max |f(x)|            {:.4e}", a.max_abs());
    println!("max |f(x) - f'(x+d)|  {:.4e}", a.max_abs_diff(&b));

    // moving only the queries changes the output
    let c = enf_forward(&z, &q.shifted(&d), &params)?;
    println!("queries alone moved   {:.4e}", a.max_abs_diff(&c));
    Ok(())
}
