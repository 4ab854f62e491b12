//! Two-body signed distances: a grid of local latents against one global
//! latent of the same total size, same training budget.
//!
//! `cargo run --release --example local_vs_global -- [key=value ...]`

use enfield::config::RunConfig;
use enfield::data::generate_multibody;
use enfield::eval::{compare_local_global, global_variant};

fn main() -> enfield::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = RunConfig::multibody();
    cfg.train.enc_epochs = 100;
    for kv in std::env::args().skip(1) {
        cfg.apply_override(&kv)?;
    }
    cfg.validate()?;
    let data = generate_multibody(&cfg.multibody)?;
    let g = global_variant(&cfg.model);
    println!(
        "{} train / {} test samples; local {}x{}, global {}x{}",
        data.dataset.train.len(),
        data.dataset.test.len(),
        cfg.model.n_lat,
        cfg.model.latent_dim,
        g.n_lat,
        g.latent_dim
    );
    let t0 = std::time::Instant::now();
    let r = compare_local_global(
        &data.dataset.train,
        &data.dataset.test,
        &cfg.model,
        &cfg.train,
    )?;
    println!("local  SDF MSE {:.4e}", r.local_mse);
    println!("global SDF MSE {:.4e}", r.global_mse);
    println!("ratio {:.2} ({:.0}s)", r.ratio, t0.elapsed().as_secs_f64());
    Ok(())
}
