//! Synthetic datasets with exact ground truth.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::flow::{potential_flow, FlowCase};
use super::format::{Dataset, Manifest};
use super::geometry::{Circle, Geometry};
use super::mesh::sample_mesh;
use super::sample::FieldSample;
use crate::encoder::BoundingBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TRAIN: u64 = 0;
const TEST: u64 = 1;

/// Closed interval; `lo == hi` pins the value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config(format!(
                "{what} range [{}, {}] is invalid",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

fn case_rng(seed: u64, split: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split << 32) | index as u64);
    rng
}

/// Mesh randomness keyed by the geometry itself, so equal geometries in a
/// split get equal point clouds.
fn mesh_rng(seed: u64, split: u64, geometry: &Geometry) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in &geometry.bodies {
        for v in [b.center[0], b.center[1], b.radius] {
            h = (h ^ v.to_bits()).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
    rng.set_stream(0x8000_0000_0000_0000 | split);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowDatasetConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub n_points: usize,
    pub n_surface: usize,
    pub radius: Interval,
    pub speed: Interval,
    /// Angle of attack, radians.
    pub angle: Interval,
    pub circulation: Interval,
    /// Half-width of the square domain.
    pub domain_half: f64,
    pub seed: u64,
}

impl Default for FlowDatasetConfig {
    fn default() -> Self {
        FlowDatasetConfig {
            n_train: 64,
            n_test: 16,
            n_points: 2048,
            n_surface: 128,
            radius: Interval::new(0.2, 0.5),
            speed: Interval::new(0.5, 1.5),
            angle: Interval::new(-10f64.to_radians(), 15f64.to_radians()),
            circulation: Interval::new(-2.0, 2.0),
            domain_half: 2.0,
            seed: 7,
        }
    }
}

impl FlowDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.radius.validate("radius")?;
        self.speed.validate("speed")?;
        self.angle.validate("angle")?;
        self.circulation.validate("circulation")?;
        if !(self.radius.lo > 0.0) || !(self.speed.lo > 0.0) {
            return Err(Error::Config("radius and speed must be positive".into()));
        }
        if self.radius.hi >= self.domain_half {
            return Err(Error::Config("body does not fit in the domain".into()));
        }
        if self.n_surface >= self.n_points {
            return Err(Error::Config(
                "surface points must be fewer than total points".into(),
            ));
        }
        Ok(())
    }

    pub fn domain(&self) -> BoundingBox {
        BoundingBox::square(self.domain_half)
    }
}

/// Cases and samples of a generated flow dataset.
#[derive(Clone, Debug)]
pub struct FlowData {
    pub train_cases: Vec<FlowCase>,
    pub test_cases: Vec<FlowCase>,
    pub dataset: Dataset,
}

/// SDF input and pressure-coefficient output for `case` on a fresh point
/// cloud of `n_points` points.
pub fn flow_sample<R: Rng + ?Sized>(
    case: &FlowCase,
    domain: &BoundingBox,
    n_points: usize,
    n_surface: usize,
    rng: &mut R,
) -> Result<FieldSample> {
    let geometry = Geometry::new(vec![case.body], domain.clone())?;
    let mesh = sample_mesh(&geometry, n_points, n_surface, rng)?;
    let mut sdf = Vec::with_capacity(n_points);
    let mut cp = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let x = mesh.coords.row_slice(i);
        sdf.push(geometry.sdf(x));
        cp.push(potential_flow(case, x)?.1);
    }
    FieldSample::new(
        mesh.coords,
        Tensor::column(sdf),
        Tensor::column(cp),
        case.mu(),
        mesh.surface,
    )
}

fn draw_case<R: Rng + ?Sized>(cfg: &FlowDatasetConfig, rng: &mut R) -> Result<FlowCase> {
    let radius = cfg.radius.draw(rng);
    let speed = cfg.speed.draw(rng);
    let angle = cfg.angle.draw(rng);
    let circulation = cfg.circulation.draw(rng);
    FlowCase::new(speed, angle, circulation, Circle::new([0.0, 0.0], radius))
}

/// Generate in memory. Train and test use disjoint random streams.
pub fn generate_flow(cfg: &FlowDatasetConfig) -> Result<FlowData> {
    cfg.validate()?;
    let domain = cfg.domain();
    let split = |id: u64, n: usize| -> Result<(Vec<FlowCase>, Vec<FieldSample>)> {
        let items = (0..n)
            .into_par_iter()
            .map(|i| {
                let case = draw_case(cfg, &mut case_rng(cfg.seed, id, i))?;
                let geometry = Geometry::new(vec![case.body], domain.clone())?;
                let mut rng = mesh_rng(cfg.seed, id, &geometry);
                let s = flow_sample(&case, &domain, cfg.n_points, cfg.n_surface, &mut rng)?;
                Ok((case, s))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(items.into_iter().unzip())
    };
    let (train_cases, train) = split(TRAIN, cfg.n_train)?;
    let (test_cases, test) = split(TEST, cfg.n_test)?;
    Ok(FlowData {
        train_cases,
        test_cases,
        dataset: Dataset { train, test },
    })
}

/// Generate and write to `dir` (samples plus `manifest.txt`).
pub fn gen_flow_dataset(cfg: &FlowDatasetConfig, dir: &Path) -> Result<Manifest> {
    generate_flow(cfg)?.dataset.save(dir)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiBodyConfig {
    pub n_samples: usize,
    pub n_test: usize,
    pub n_points: usize,
    pub n_surface: usize,
    /// Fixed main body.
    pub main: Circle,
    pub secondary_radius: f64,
    /// Distance between body centres.
    pub offset: Interval,
    /// Polar angle of the secondary body around the main one, radians.
    pub angle: Interval,
    pub domain_half: f64,
    pub seed: u64,
}

impl Default for MultiBodyConfig {
    fn default() -> Self {
        MultiBodyConfig {
            n_samples: 200,
            n_test: 40,
            n_points: 1024,
            n_surface: 96,
            main: Circle::new([-0.5, 0.0], 0.5),
            secondary_radius: 0.2,
            offset: Interval::new(0.8, 1.3),
            angle: Interval::new(-40f64.to_radians(), 40f64.to_radians()),
            domain_half: 2.0,
            seed: 11,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MultiBodyData {
    pub train_geometries: Vec<Geometry>,
    pub test_geometries: Vec<Geometry>,
    pub dataset: Dataset,
}

const MAX_REDRAWS: usize = 100;

/// Signed-distance reconstruction samples (`input == output`) for a fixed
/// main body and a moving secondary body.
pub fn generate_multibody(cfg: &MultiBodyConfig) -> Result<MultiBodyData> {
    cfg.offset.validate("offset")?;
    cfg.angle.validate("angle")?;
    if cfg.n_test > cfg.n_samples {
        return Err(Error::Config(format!(
            "{} test samples out of {}",
            cfg.n_test, cfg.n_samples
        )));
    }
    let domain = BoundingBox::square(cfg.domain_half);
    let one = |id: u64, i: usize| -> Result<(Geometry, FieldSample)> {
        let mut rng = case_rng(cfg.seed, id, i);
        let mut geometry = None;
        for _ in 0..MAX_REDRAWS {
            let (d, a) = (cfg.offset.draw(&mut rng), cfg.angle.draw(&mut rng));
            let c = [
                cfg.main.center[0] + d * a.cos(),
                cfg.main.center[1] + d * a.sin(),
            ];
            if let Ok(g) = Geometry::new(
                vec![cfg.main, Circle::new(c, cfg.secondary_radius)],
                domain.clone(),
            ) {
                geometry = Some(g);
                break;
            }
        }
        let geometry = geometry.ok_or_else(|| {
            Error::Geometry(format!("no valid placement after {MAX_REDRAWS} draws"))
        })?;
        let mesh = sample_mesh(
            &geometry,
            cfg.n_points,
            cfg.n_surface,
            &mut mesh_rng(cfg.seed, id, &geometry),
        )?;
        let sdf: Vec<f64> = (0..cfg.n_points)
            .map(|k| geometry.sdf(mesh.coords.row_slice(k)))
            .collect();
        let field = Tensor::column(sdf);
        let s = FieldSample::new(mesh.coords, field.clone(), field, vec![], mesh.surface)?;
        Ok((geometry, s))
    };
    let split = |id: u64, n: usize| -> Result<(Vec<Geometry>, Vec<FieldSample>)> {
        let items = (0..n)
            .into_par_iter()
            .map(|i| one(id, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(items.into_iter().unzip())
    };
    let (train_geometries, train) = split(TRAIN, cfg.n_samples - cfg.n_test)?;
    let (test_geometries, test) = split(TEST, cfg.n_test)?;
    Ok(MultiBodyData {
        train_geometries,
        test_geometries,
        dataset: Dataset { train, test },
    })
}

pub fn gen_multibody_dataset(cfg: &MultiBodyConfig, dir: &Path) -> Result<Manifest> {
    generate_multibody(cfg)?.dataset.save(dir)
}

/// Surface angle of each masked point about `center`, in `[0, 2π)`.
pub fn surface_angles(sample: &FieldSample, center: [f64; 2]) -> Vec<(usize, f64)> {
    sample
        .surface_indices()
        .into_iter()
        .map(|i| {
            let x = sample.coords.row_slice(i);
            let t = (x[1] - center[1]).atan2(x[0] - center[0]);
            (i, if t < 0.0 { t + 2.0 * PI } else { t })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_flow() -> FlowDatasetConfig {
        FlowDatasetConfig {
            n_train: 4,
            n_test: 2,
            n_points: 300,
            n_surface: 32,
            ..Default::default()
        }
    }

    #[test]
    fn flow_generation_is_deterministic_and_splits_differ() {
        let a = generate_flow(&small_flow()).unwrap();
        let b = generate_flow(&small_flow()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_ne!(a.train_cases[0], a.test_cases[0]);
        assert_eq!(a.dataset.train[0].mu.len(), 3);
    }

    #[test]
    fn pinned_offsets_give_identical_samples() {
        let cfg = MultiBodyConfig {
            n_samples: 5,
            n_test: 0,
            n_points: 200,
            n_surface: 20,
            offset: Interval::point(1.0),
            angle: Interval::point(0.3),
            ..Default::default()
        };
        let d = generate_multibody(&cfg).unwrap();
        assert!(d.dataset.train.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn invalid_ranges_are_config_errors() {
        let mut cfg = small_flow();
        cfg.radius = Interval::new(0.5, 0.2);
        assert!(matches!(generate_flow(&cfg), Err(Error::Config(_))));
    }
}
