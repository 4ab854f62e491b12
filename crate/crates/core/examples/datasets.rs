//! Generate both synthetic datasets, write them in the binary sample
//! format and read them back.
//!
//! `cargo run --release --example datasets -- [out_dir]`

use std::path::PathBuf;

use enfield::data::{
    gen_flow_dataset, gen_multibody_dataset, Dataset, FlowDatasetConfig, MultiBodyConfig,
};

fn main() -> enfield::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("enfield-data"));
    let flow = FlowDatasetConfig {
        n_train: 8,
        n_test: 4,
        ..FlowDatasetConfig::default()
    };
    let multi = MultiBodyConfig {
        n_samples: 12,
        n_test: 4,
        ..MultiBodyConfig::default()
    };

    for (name, manifest) in [
        ("flow", gen_flow_dataset(&flow, &out.join("flow"))?),
        (
            "multibody",
            gen_multibody_dataset(&multi, &out.join("multibody"))?,
        ),
    ] {
        let ds = Dataset::load(&out.join(name))?;
        let s = &ds.train[0];
        println!(
            "{name}: {} train, {} test in {}; {} points ({} surface), {} input / {} output channels, mu = {:?}",
            manifest.train.len(),
            manifest.test.len(),
            out.join(name).display(),
            s.len(),
            s.n_surface(),
            s.input.cols(),
            s.output.cols(),
            s.mu
        );
    }
    Ok(())
}
