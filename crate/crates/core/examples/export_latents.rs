//! Encode a few flow samples and print their latent point clouds as a
//! tab-separated table, ready for external embedding tools.
//!
//! `cargo run --release --example export_latents > latents.tsv`

use enfield::data::{generate_flow, FlowDatasetConfig};
use enfield::eval::num;
use enfield::train::{fit, TrainConfig};
use enfield::ModelConfig;

fn main() -> enfield::Result<()> {
    let data = generate_flow(&FlowDatasetConfig {
        n_train: 16,
        n_test: 4,
        n_points: 1024,
        ..FlowDatasetConfig::default()
    })?;
    let tc = TrainConfig {
        enc_epochs: 20,
        dec_epochs: 0,
        ..TrainConfig::default()
    };
    let (model, _) = fit(&data.dataset.train, &ModelConfig::flow(), &tc)?;

    let l = model.config.latent_dim;
    let head: Vec<String> = ["sample", "latent", "p0", "p1"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..l).map(|k| format!("c{k}")))
        .collect();
    println!("{}\trecon", head.join("\t"));
    for (i, s) in data.dataset.test.iter().enumerate() {
        let (z, trace) = model.encode(s)?;
        for j in 0..z.len() {
            let vals: Vec<String> = z
                .positions
                .row_slice(j)
                .iter()
                .chain(z.features.row_slice(j))
                .map(|v| num(*v))
                .collect();
            println!("{i}\t{j}\t{}\t{}", vals.join("\t"), num(trace.last()));
        }
    }
    Ok(())
}
