//! Train a small model, save it, reload it and check predictions agree
//! exactly. Then flip one byte and watch the load fail.
//!
//! `cargo run --release --example checkpoint_roundtrip`

use enfield::data::{generate_flow, FlowDatasetConfig};
use enfield::train::{fit, Checkpoint, TrainConfig};
use enfield::ModelConfig;

fn main() -> enfield::Result<()> {
    let data = generate_flow(&FlowDatasetConfig {
        n_train: 8,
        n_test: 2,
        n_points: 512,
        ..FlowDatasetConfig::default()
    })?;
    let mc = ModelConfig {
        enc_width: 32,
        dec_width: 32,
        enc_rff_dim: 32,
        dec_rff_dim: 32,
        ..ModelConfig::flow()
    };
    let tc = TrainConfig {
        enc_epochs: 3,
        dec_epochs: 3,
        downsample: 128,
        ..TrainConfig::default()
    };
    let (model, _) = fit(&data.dataset.train, &mc, &tc)?;

    let bytes = Checkpoint::new(&model)
        .with_info("note", "example")
        .to_bytes()?;
    let back = Checkpoint::from_bytes(&bytes)?;
    println!(
        "{} bytes, re-encoded identical: {}",
        bytes.len(),
        back.to_bytes()? == bytes
    );

    let loaded = back.model;
    let s = &data.dataset.test[0];
    let (a, b) = (
        model.quantized().predict(s, &s.coords)?,
        loaded.predict(s, &s.coords)?,
    );
    println!(
        "prediction max difference after reload: {:e}",
        a.max_abs_diff(&b)
    );

    let mut bad = bytes.clone();
    bad[bytes.len() / 2] ^= 0x10;
    match Checkpoint::from_bytes(&bad) {
        Err(e) => println!("corrupted copy rejected: {e}"),
        Ok(_) => println!("corrupted copy was accepted"),
    }
    Ok(())
}
