//! Same total latent size split three ways: few wide latents, the default
//! grid, many narrow latents.
//!
//! `cargo run --release --example capacity_ablation -- [key=value ...]`

use enfield::config::RunConfig;
use enfield::data::generate_flow;
use enfield::eval::{ablate_capacity, num, Table};

fn main() -> enfield::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = RunConfig::flow();
    cfg.train.enc_epochs = 60;
    cfg.train.dec_epochs = 60;
    for kv in std::env::args().skip(1) {
        cfg.apply_override(&kv)?;
    }
    cfg.validate()?;
    let data = generate_flow(&cfg.flow)?;
    let rows = ablate_capacity(
        &data.dataset.train,
        &data.dataset.test,
        &cfg.model,
        &cfg.train,
        &[(4, 16), (9, 8), (16, 4)],
    )?;
    let mut t = Table::new(&["n_lat", "latent_dim", "recon_mse", "output_mse"]);
    for r in rows {
        t.push(vec![
            r.n_lat.to_string(),
            r.latent_dim.to_string(),
            num(r.recon_mse),
            num(r.output_mse),
        ]);
    }
    print!("{}", t.to_tsv());
    Ok(())
}
