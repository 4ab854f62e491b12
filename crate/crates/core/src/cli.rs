//! Command-line front end. [`run`] parses arguments and returns the process
//! exit status; the binary is a one-line wrapper around it.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::autodiff::{finite_difference_check, tape_fn, GradCheckOptions};
use crate::config::RunConfig;
use crate::data::{
    gen_flow_dataset, gen_multibody_dataset, read_sample, write_sample, Dataset, FieldSample,
};
use crate::decoder::{DecoderParams, DecoderVars};
use crate::encoder::{init_latent_positions, BoundingBox, EncoderState};
use crate::error::{Error, Result};
use crate::eval::{
    ablate_capacity, case_from_sample, compare_local_global, discretization_sweep, evaluate_fields,
    evaluate_flow, num, write_heatmap, Table,
};
use crate::field::{EnfParams, FieldConfig, FieldVars};
use crate::model::FieldOperator;
use crate::tensor::Tensor;
use crate::train::{
    decoder_loss, encoder_loss, load_checkpoint, save_checkpoint, train_decoder, train_encoder,
    Checkpoint, GradMode, NormStats,
};

#[derive(Parser, Debug)]
#[command(
    name = "enfield",
    version,
    about = "Equivariant neural-field operator learning on point clouds"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// key = value configuration file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.batch=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Seed for data generation, initialisation and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: $ENFIELD_THREADS, else 1).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write PPM heatmaps into this directory.
    #[arg(long, value_name = "DIR", global = true)]
    pub plots: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the single-cylinder potential-flow dataset.
    GenFlow {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Generate the two-body signed-distance dataset.
    GenMultibody {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        n_points: Option<usize>,
    },
    /// Train the encoder and normalisation; writes an encoder-only checkpoint.
    TrainEncoder {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "flow", value_parser = ["flow", "multibody"])]
        preset: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// second-order or first-order.
        #[arg(long)]
        mode: Option<GradMode>,
    },
    /// Train a decoder on top of a trained encoder checkpoint.
    TrainDecoder {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Encode one sample and write its latent point cloud as TSV.
    Encode {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict the output field of `--sample` at the points of `--points`.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sample: PathBuf,
        /// Sample file whose coordinates are the query points (default: the sample's own).
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Test-split metrics of a trained model.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error at several mesh resolutions of the test cases.
    SweepRes {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [512usize, 1024, 2048, 4096])]
        resolutions: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model per latent shape NxL and compare.
    AblateCapacity {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = ["4x16".to_string(), "9x8".to_string(), "16x4".to_string()])]
        configs: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Local latent grid against a single global latent of equal size.
    CompareEncodings {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "multibody", value_parser = ["flow", "multibody"])]
        preset: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference gradient checks of every trainable tensor.
    CheckGrad {
        /// Small shapes; runs in well under a second.
        #[arg(long)]
        tiny: bool,
    },
    /// Latent point clouds of every sample in a dataset, as TSV.
    ExportLatents {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parse `args` (including the program name), execute, and return the exit
/// status. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("ENFIELD_THREADS") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("ENFIELD_THREADS={v:?} is not a count")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(Error::Config("thread count must be positive".into()));
    }
    Ok(n)
}

fn resolve(p: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(p).map_err(|e| Error::io(p, e))
}

fn config(common: &Common, preset: &str) -> Result<RunConfig> {
    let mut c = if preset == "multibody" {
        RunConfig::multibody()
    } else {
        RunConfig::flow()
    };
    if let Some(p) = &common.config {
        c.apply_file(p)?;
    }
    for kv in &common.overrides {
        c.apply_override(kv)?;
    }
    if let Some(s) = common.seed {
        c.model.seed = s;
        c.train.seed = s;
        c.flow.seed = s;
        c.multibody.seed = s;
    }
    Ok(c)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    print!("{}", table.to_tsv());
    match out {
        Some(p) => table.write(p),
        None => Ok(()),
    }
}

fn plot(dir: Option<&PathBuf>, name: &str, coords: &Tensor, values: &[f64]) -> Result<()> {
    if let Some(d) = dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        write_heatmap(&d.join(name), coords, values, 256)?;
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<FieldOperator> {
    Ok(load_checkpoint(&resolve(path)?)?.model)
}

fn execute(cli: &Cli) -> Result<()> {
    let threads = thread_count(cli.common.threads)?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    let common = &cli.common;
    // reject bad files and keys even for commands that read no settings
    config(common, "flow")?;
    let plots = common.plots.as_ref();
    match &cli.command {
        Command::GenFlow {
            out,
            n_train,
            n_test,
            n_points,
        } => {
            let mut c = config(common, "flow")?;
            c.flow.n_train = n_train.unwrap_or(c.flow.n_train);
            c.flow.n_test = n_test.unwrap_or(c.flow.n_test);
            c.flow.n_points = n_points.unwrap_or(c.flow.n_points);
            let m = gen_flow_dataset(&c.flow, out)?;
            println!(
                "wrote {} train and {} test samples to {}",
                m.train.len(),
                m.test.len(),
                out.display()
            );
        }
        Command::GenMultibody {
            out,
            n_samples,
            n_test,
            n_points,
        } => {
            let mut c = config(common, "multibody")?;
            c.multibody.n_samples = n_samples.unwrap_or(c.multibody.n_samples);
            c.multibody.n_test = n_test.unwrap_or(c.multibody.n_test);
            c.multibody.n_points = n_points.unwrap_or(c.multibody.n_points);
            let m = gen_multibody_dataset(&c.multibody, out)?;
            println!(
                "wrote {} train and {} test samples to {}",
                m.train.len(),
                m.test.len(),
                out.display()
            );
        }
        Command::TrainEncoder {
            data,
            out,
            preset,
            epochs,
            lr,
            mode,
        } => {
            let mut c = config(common, preset)?;
            c.train.enc_epochs = epochs.unwrap_or(c.train.enc_epochs);
            c.train.enc_lr = lr.unwrap_or(c.train.enc_lr);
            c.train.mode = mode.unwrap_or(c.train.mode);
            c.validate()?;
            let ds = Dataset::load(&resolve(data)?)?;
            let norm = NormStats::compute(&ds.train)?;
            let normed = ds
                .train
                .iter()
                .map(|s| norm.normalize(s))
                .collect::<Result<Vec<_>>>()?;
            let mut model = FieldOperator::new(c.model.clone(), norm)?;
            let curve = train_encoder(&mut model, &normed, &c.train, |e, l| {
                log::info!("encoder epoch {e}: {l:.6e}")
            })?;
            model.decoder = None;
            let ck = Checkpoint::new(&model)
                .with_info("enc_epochs", c.train.enc_epochs)
                .with_info("mode", c.train.mode);
            save_checkpoint(out, &ck)?;
            println!(
                "final encoder loss {}",
                num(curve.last().copied().unwrap_or(f64::NAN))
            );
        }
        Command::TrainDecoder {
            data,
            ckpt,
            out,
            epochs,
            lr,
        } => {
            let enc = load_checkpoint(&resolve(ckpt)?)?;
            let mut c = config(common, "flow")?;
            c.train.dec_epochs = epochs.unwrap_or(c.train.dec_epochs);
            c.train.dec_lr = lr.unwrap_or(c.train.dec_lr);
            c.train.validate()?;
            let ds = Dataset::load(&resolve(data)?)?;
            let mut model = FieldOperator::new(enc.model.config.clone(), enc.model.norm.clone())?;
            model.encoder = enc.model.encoder;
            let normed = ds
                .train
                .iter()
                .map(|s| model.norm.normalize(s))
                .collect::<Result<Vec<_>>>()?;
            let curve = train_decoder(&mut model, &normed, &c.train, |e, l| {
                log::info!("decoder epoch {e}: {l:.6e}")
            })?;
            let mut ck = Checkpoint::new(&model);
            for (k, v) in &enc.info {
                ck = ck.with_info(k, v);
            }
            save_checkpoint(out, &ck.with_info("dec_epochs", c.train.dec_epochs))?;
            println!(
                "final decoder loss {}",
                num(curve.last().copied().unwrap_or(f64::NAN))
            );
        }
        Command::Encode { ckpt, sample, out } => {
            let model = load_model(ckpt)?;
            let s = read_sample(&resolve(sample)?)?;
            let (z, trace) = model.encode(&s)?;
            for (k, l) in trace.losses.iter().enumerate() {
                println!("step {k}\t{}", num(*l));
            }
            if let Some(o) = out {
                write_text(o, &latent_tsv(&[("sample", 0, &z.positions, &z.features)]))?;
            }
        }
        Command::Infer {
            ckpt,
            sample,
            points,
            out,
        } => {
            let model = load_model(ckpt)?;
            let s = read_sample(&resolve(sample)?)?;
            let q = match points {
                Some(p) => read_sample(&resolve(p)?)?,
                None => s.clone(),
            };
            if q.dim() != model.config.dim {
                return Err(crate::error::ShapeError::new(format!(
                    "query points have dimension {}, model expects {}",
                    q.dim(),
                    model.config.dim
                ))
                .into());
            }
            let pred = model.predict(&s, &q.coords)?;
            let result = FieldSample {
                coords: q.coords.clone(),
                input: q.input.clone(),
                output: pred,
                mu: s.mu.clone(),
                surface: q.surface.clone(),
            };
            match out {
                Some(o) => write_sample(o, &result)?,
                None => {
                    for i in 0..result.len() {
                        let row: Vec<String> = result
                            .coords
                            .row_slice(i)
                            .iter()
                            .chain(result.output.row_slice(i))
                            .map(|v| num(*v))
                            .collect();
                        println!("{}", row.join("\t"));
                    }
                }
            }
            plot(
                plots,
                "prediction.ppm",
                &result.coords,
                &column(&result.output, 0),
            )?;
        }
        Command::Eval { ckpt, data, out } => {
            let model = load_model(ckpt)?;
            let ds = Dataset::load(&resolve(data)?)?;
            let mut t = Table::new(&["metric", "value"]);
            let flow_like = model.config.mu_dim == 3 && ds.test.iter().all(|s| s.n_surface() >= 8);
            if flow_like {
                let r = evaluate_flow(&model, &ds.test)?;
                for (k, v) in [
                    ("volume_mse", r.volume_mse),
                    ("surface_mse", r.surface_mse),
                    ("cl_mse", r.cl_mse),
                    ("cl_mse_normalized", r.cl_mse_normalized),
                    ("spearman", r.spearman),
                    ("infer_seconds", r.infer_seconds),
                ] {
                    t.push(vec![k.into(), num(v)]);
                }
            } else {
                let (v, s, secs) = evaluate_fields(&model, &ds.test)?;
                t.push(vec!["volume_mse".into(), num(v)]);
                t.push(vec!["surface_mse".into(), num(s)]);
                t.push(vec!["infer_seconds".into(), num(secs)]);
            }
            emit(&t, out.as_deref())?;
            if let Some(first) = ds.test.first() {
                let pred = model.predict(first, &first.coords)?;
                let p = column(&pred, 0);
                let truth = column(&first.output, 0);
                let err: Vec<f64> = p.iter().zip(&truth).map(|(a, b)| a - b).collect();
                plot(plots, "test0_pred.ppm", &first.coords, &p)?;
                plot(plots, "test0_true.ppm", &first.coords, &truth)?;
                plot(plots, "test0_error.ppm", &first.coords, &err)?;
            }
        }
        Command::SweepRes {
            ckpt,
            data,
            resolutions,
            out,
        } => {
            let model = load_model(ckpt)?;
            let c = config(common, "flow")?;
            let ds = Dataset::load(&resolve(data)?)?;
            let cases = ds
                .test
                .iter()
                .map(case_from_sample)
                .collect::<Result<Vec<_>>>()?;
            let rows =
                discretization_sweep(&model, &cases, &c.flow.domain(), resolutions, c.flow.seed)?;
            let mut t = Table::new(&["points", "volume_mse", "surface_mse", "infer_seconds"]);
            for r in rows {
                t.push(vec![
                    r.points.to_string(),
                    num(r.volume_mse),
                    num(r.surface_mse),
                    num(r.infer_seconds),
                ]);
            }
            emit(&t, out.as_deref())?;
        }
        Command::AblateCapacity { data, configs, out } => {
            let c = config(common, "flow")?;
            c.validate()?;
            let shapes = configs
                .iter()
                .map(|s| parse_shape(s))
                .collect::<Result<Vec<_>>>()?;
            let ds = Dataset::load(&resolve(data)?)?;
            let rows = ablate_capacity(&ds.train, &ds.test, &c.model, &c.train, &shapes)?;
            let mut t = Table::new(&["n_lat", "latent_dim", "recon_mse", "output_mse"]);
            for r in rows {
                t.push(vec![
                    r.n_lat.to_string(),
                    r.latent_dim.to_string(),
                    num(r.recon_mse),
                    num(r.output_mse),
                ]);
            }
            emit(&t, out.as_deref())?;
        }
        Command::CompareEncodings { data, preset, out } => {
            let c = config(common, preset)?;
            c.validate()?;
            let ds = Dataset::load(&resolve(data)?)?;
            let r = compare_local_global(&ds.train, &ds.test, &c.model, &c.train)?;
            let mut t = Table::new(&["variant", "recon_mse"]);
            t.push(vec![
                format!("local[{}x{}]", c.model.n_lat, c.model.latent_dim),
                num(r.local_mse),
            ]);
            t.push(vec![
                format!("global[1x{}]", c.model.n_lat * c.model.latent_dim),
                num(r.global_mse),
            ]);
            t.push(vec!["ratio".into(), num(r.ratio)]);
            emit(&t, out.as_deref())?;
        }
        Command::CheckGrad { tiny } => {
            let c = config(common, "flow")?;
            check_gradients(&c, *tiny)?;
        }
        Command::ExportLatents { ckpt, data, out } => {
            let model = load_model(ckpt)?;
            let ds = Dataset::load(&resolve(data)?)?;
            let mut parts = Vec::new();
            for (split, samples) in [("train", &ds.train), ("test", &ds.test)] {
                for (i, s) in samples.iter().enumerate() {
                    parts.push((split, i, model.encode(s)?.0));
                }
            }
            let rows: Vec<_> = parts
                .iter()
                .map(|(s, i, z)| (*s, *i, &z.positions, &z.features))
                .collect();
            write_text(out, &latent_tsv(&rows))?;
            println!(
                "wrote {} latent point clouds to {}",
                parts.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn column(t: &Tensor, k: usize) -> Vec<f64> {
    (0..t.rows()).map(|i| t.get(i, k)).collect()
}

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("latent shape {s:?} is not NxL"));
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

fn latent_tsv(rows: &[(&str, usize, &Tensor, &Tensor)]) -> String {
    let mut s = String::new();
    if let Some((_, _, p, f)) = rows.first() {
        let mut head = vec!["split".to_string(), "sample".into(), "latent".into()];
        head.extend((0..p.cols()).map(|k| format!("p{k}")));
        head.extend((0..f.cols()).map(|k| format!("c{k}")));
        let _ = writeln!(s, "{}", head.join("\t"));
    }
    for (split, i, p, f) in rows {
        for j in 0..p.rows() {
            let vals: Vec<String> = p
                .row_slice(j)
                .iter()
                .chain(f.row_slice(j))
                .map(|v| num(*v))
                .collect();
            let _ = writeln!(s, "{split}\t{i}\t{j}\t{}", vals.join("\t"));
        }
    }
    s
}

/// Field, decoder and second-order encoder gradients against central
/// differences. `tiny` shrinks every width; otherwise the configured model
/// is checked on a 32-point synthetic sample.
fn check_gradients(c: &RunConfig, tiny: bool) -> Result<()> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(c.model.seed);
    let (enc_cfg, dec_cfg, n_lat, blocks, dk) = if tiny {
        let f = |n_out, l| FieldConfig {
            dim: 2,
            n_out,
            latent_dim: l,
            rff_dim: 8,
            rff_sigma: 1.5,
            d_k: 4,
            d_v: 6,
            heads: 2,
            window: 0.5,
        };
        (f(1, 2), f(1, 5), 4, 2, 3)
    } else {
        (
            c.model.encoder_field(),
            c.model.decoder_field(),
            c.model.n_lat,
            c.model.dec_blocks,
            c.model.block_dk,
        )
    };
    let m = 32;
    let coords = Tensor::uniform(m, 2, -1.0, 1.0, &mut rng);
    let a = Tensor::column(
        (0..m)
            .map(|i| coords.get(i, 0).sin() - coords.get(i, 1).powi(2))
            .collect(),
    );
    let u = Tensor::column(
        (0..m)
            .map(|i| coords.get(i, 0) * coords.get(i, 1))
            .collect(),
    );
    let mu_dim = dec_cfg.latent_dim - enc_cfg.latent_dim;
    let mu: Vec<f64> = (0..mu_dim).map(|k| 0.3 * k as f64 - 0.2).collect();
    let sample = FieldSample::new(coords, a, u, mu, vec![false; m])?;
    let positions = init_latent_positions(&BoundingBox::square(0.7), n_lat)?;
    let enc = EncoderState::new(
        EnfParams::init(&enc_cfg, &mut rng)?,
        positions.clone(),
        2,
        c.model.inner_lr.min(0.5),
    )?;
    let dec = DecoderParams::init(&dec_cfg, blocks, dk, &mut rng)?;
    let z = crate::field::LatentPointCloud::new(
        positions,
        Tensor::uniform(n_lat, enc_cfg.latent_dim, -1.0, 1.0, &mut rng),
    )?;

    let mut ok = true;
    let f =
        tape_fn(|t, b| decoder_loss(t, &DecoderVars::from_bound(b, blocks)?, &dec, &z, &sample));
    let rep = finite_difference_check(&f, &dec.trainable(), &GradCheckOptions::new(1e-5, 1e-4))?;
    println!("decoder parameters (tol 1e-4)\n{rep}");
    ok &= rep.passed;
    let f = tape_fn(|t, b| {
        encoder_loss(
            t,
            &FieldVars::from_bound(b, "")?,
            &enc,
            &sample,
            GradMode::SecondOrder,
        )
    });
    let rep = finite_difference_check(
        &f,
        &enc.params.trainable(),
        &GradCheckOptions::new(1e-5, 1e-3),
    )?;
    println!("encoder through K=2 inner loop (tol 1e-3)\n{rep}");
    ok &= rep.passed;
    if ok {
        Ok(())
    } else {
        Err(Error::CheckInvalid("finite-difference check failed".into()))
    }
}
