//! Train on the cylinder-flow dataset and report test metrics.
//!
//! `cargo run --release --example flow_task -- [key=value ...]`, e.g.
//! `train.enc_epochs=50 train.dec_epochs=50 model.dec_rff_sigma=3.0`.

use std::time::Instant;

use enfield::config::RunConfig;
use enfield::data::generate_flow;
use enfield::eval::evaluate_flow;
use enfield::train::{train_decoder, train_encoder, NormStats};
use enfield::FieldOperator;

fn main() -> enfield::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = RunConfig::flow();
    for kv in std::env::args().skip(1) {
        cfg.apply_override(&kv)?;
    }
    cfg.validate()?;

    let data = generate_flow(&cfg.flow)?;
    let train = &data.dataset.train;
    let norm = NormStats::compute(train)?;
    let normed = train
        .iter()
        .map(|s| norm.normalize(s))
        .collect::<enfield::Result<Vec<_>>>()?;
    let mut model = FieldOperator::new(cfg.model.clone(), norm)?;

    let t0 = Instant::now();
    train_encoder(&mut model, &normed, &cfg.train, |e, l| {
        if e % 10 == 0 {
            println!("encoder {e:4} {l:.4e} ({:.0}s)", t0.elapsed().as_secs_f64())
        }
    })?;
    let t1 = Instant::now();
    train_decoder(&mut model, &normed, &cfg.train, |e, l| {
        if e % 10 == 0 {
            println!("decoder {e:4} {l:.4e} ({:.0}s)", t1.elapsed().as_secs_f64())
        }
    })?;
    let r = evaluate_flow(&model, &data.dataset.test)?;
    println!("trained in {:.0}s", t0.elapsed().as_secs_f64());
    println!("volume MSE  {:.4e}", r.volume_mse);
    println!("surface MSE {:.4e}", r.surface_mse);
    println!(
        "lift MSE    {:.4e}  (normalised {:.4e})",
        r.cl_mse, r.cl_mse_normalized
    );
    println!("spearman    {:.4}", r.spearman);
    for (p, t) in r.cl_pred.iter().zip(&r.cl_true) {
        println!("  C_L pred {p:8.4}  true {t:8.4}");
    }
    Ok(())
}
