//! Train at a coarse point budget, then evaluate on the same test flows
//! resampled at increasing resolution.
//!
//! `cargo run --release --example resolution_sweep -- [key=value ...]`

use enfield::config::RunConfig;
use enfield::data::generate_flow;
use enfield::eval::{discretization_sweep, num, Table};
use enfield::train::fit;

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
    let (model, _) = fit(&data.dataset.train, &cfg.model, &cfg.train)?;
    let rows = discretization_sweep(
        &model,
        &data.test_cases,
        &cfg.flow.domain(),
        &[256, 512, 1024, 2048, 4096, 8192],
        5,
    )?;
    let mut t = Table::new(&["points", "volume_mse", "surface_mse", "infer_seconds"]);
    for r in rows {
        t.push(vec![
            r.points.to_string(),
            num(r.volume_mse),
            num(r.surface_mse),
            num(r.infer_seconds),
        ]);
    }
    print!("{}", t.to_tsv());
    Ok(())
}
