//! Field errors, lift from surface pressure and rank correlation.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::{Circle, FieldSample, FlowCase};
use crate::error::{Error, Result, ShapeError};
use crate::model::FieldOperator;
use crate::tensor::Tensor;

/// Mean squared error per point over non-surface and surface points.
pub fn mse_split(pred: &Tensor, sample: &FieldSample) -> Result<(f64, f64)> {
    if pred.shape() != sample.output.shape() {
        return Err(ShapeError::mismatch("mse_split", pred.shape(), sample.output.shape()).into());
    }
    let c = pred.cols();
    let (mut vol, mut nv, mut surf, mut ns) = (0.0, 0usize, 0.0, 0usize);
    for (i, (p, t)) in pred
        .data()
        .chunks(c)
        .zip(sample.output.data().chunks(c))
        .enumerate()
    {
        let e: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        if sample.surface[i] {
            surf += e;
            ns += 1;
        } else {
            vol += e;
            nv += 1;
        }
    }
    if ns == 0 {
        return Err(Error::Undefined(
            "surface MSE of a sample without surface points".into(),
        ));
    }
    if nv == 0 {
        return Err(Error::Undefined(
            "volume MSE of a sample without volume points".into(),
        ));
    }
    Ok((vol / nv as f64, surf / ns as f64))
}

/// Lift coefficient from pressure coefficients at boundary points of
/// `case.body`: trapezoidal integral of `−C_p n̂` around the polygon through
/// the points, projected perpendicular to the freestream, divided by `2r`.
pub fn lift_coefficient(points: &[[f64; 2]], cp: &[f64], case: &FlowCase) -> Result<f64> {
    if points.len() != cp.len() {
        return Err(ShapeError::new(format!(
            "{} surface points but {} pressure values",
            points.len(),
            cp.len()
        ))
        .into());
    }
    if points.len() < 8 {
        return Err(Error::Quadrature(format!(
            "{} surface points, need at least 8",
            points.len()
        )));
    }
    let c = case.body.center;
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| ((p[1] - c[1]).atan2(p[0] - c[0]), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut fx, mut fy) = (0.0, 0.0);
    for k in 0..order.len() {
        let (i, j) = (order[k].1, order[(k + 1) % order.len()].1);
        let (dx, dy) = (points[j][0] - points[i][0], points[j][1] - points[i][1]);
        let mean = 0.5 * (cp[i] + cp[j]);
        // outward normal times length of a counter-clockwise segment
        fx -= mean * dy;
        fy += mean * dx;
    }
    let (s, co) = case.angle.sin_cos();
    Ok((-s * fx + co * fy) / (2.0 * case.body.radius))
}

/// Circle through equally spaced boundary points: centroid and mean radius.
pub fn fit_circle(points: &[[f64; 2]]) -> Result<Circle> {
    if points.is_empty() {
        return Err(Error::Geometry("no surface points".into()));
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let r = points
        .iter()
        .map(|p| (p[0] - cx).hypot(p[1] - cy))
        .sum::<f64>()
        / n;
    if !(r > 0.0) {
        return Err(Error::Geometry("degenerate surface".into()));
    }
    Ok(Circle::new([cx, cy], r))
}

fn surface_points(sample: &FieldSample) -> (Vec<usize>, Vec<[f64; 2]>) {
    let idx = sample.surface_indices();
    let pts = idx.iter().map(|&i| {
        let x = sample.coords.row_slice(i);
        [x[0], x[1]]
    });
    let pts = pts.collect();
    (idx, pts)
}

/// The flow case behind a single-body sample (physical units).
pub fn case_from_sample(sample: &FieldSample) -> Result<FlowCase> {
    let (_, pts) = surface_points(sample);
    FlowCase::from_mu(&sample.mu, fit_circle(&pts)?)
}

/// Lift coefficient of the pressure field `cp` (first output channel,
/// physical units) on `sample`'s surface.
pub fn sample_lift(sample: &FieldSample, cp: &Tensor) -> Result<f64> {
    let case = case_from_sample(sample)?;
    let (idx, pts) = surface_points(sample);
    let vals: Vec<f64> = idx.iter().map(|&i| cp.get(i, 0)).collect();
    lift_coefficient(&pts, &vals, &case)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; ties get their average rank.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(
            ShapeError::new(format!("spearman on {} and {} values", xs.len(), ys.len())).into(),
        );
    }
    if xs.len() < 2 {
        return Err(Error::Undefined(
            "rank correlation needs at least two values".into(),
        ));
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined(
            "rank correlation of a constant vector".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Test-set metrics. MSEs are on normalised fields; lift is reported in
/// physical units and divided by the variance of the true lift.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub volume_mse: f64,
    pub surface_mse: f64,
    pub cl_pred: Vec<f64>,
    pub cl_true: Vec<f64>,
    pub cl_mse: f64,
    pub cl_mse_normalized: f64,
    pub spearman: f64,
    /// Median seconds per sample for encode plus decode.
    pub infer_seconds: f64,
}

/// Per-sample inference result.
struct Scored {
    volume: f64,
    surface: f64,
    cl: Option<(f64, f64)>,
    seconds: f64,
}

fn score(model: &FieldOperator, s: &FieldSample, lift: bool) -> Result<Scored> {
    let t0 = Instant::now();
    let pred = model.predict_normalized(s, &s.coords)?;
    let seconds = t0.elapsed().as_secs_f64();
    let truth = model.norm.normalize(s)?;
    let (volume, surface) = mse_split(&pred, &truth)?;
    let cl = if lift {
        Some((
            sample_lift(s, &model.norm.denormalize(&pred))?,
            sample_lift(s, &s.output)?,
        ))
    } else {
        None
    };
    Ok(Scored {
        volume,
        surface,
        cl,
        seconds,
    })
}

/// Field errors for any task.
pub fn evaluate_fields(model: &FieldOperator, test: &[FieldSample]) -> Result<(f64, f64, f64)> {
    let scored = test
        .par_iter()
        .map(|s| score(model, s, false))
        .collect::<Result<Vec<_>>>()?;
    let n = scored.len() as f64;
    Ok((
        scored.iter().map(|s| s.volume).sum::<f64>() / n,
        scored.iter().map(|s| s.surface).sum::<f64>() / n,
        median(&scored.iter().map(|s| s.seconds).collect::<Vec<_>>()),
    ))
}

/// Full report for the single-body flow task, samples in physical units.
pub fn evaluate_flow(model: &FieldOperator, test: &[FieldSample]) -> Result<MetricReport> {
    if test.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    let scored = test
        .par_iter()
        .map(|s| score(model, s, true))
        .collect::<Result<Vec<_>>>()?;
    let n = scored.len() as f64;
    let (cl_pred, cl_true): (Vec<f64>, Vec<f64>) = scored.iter().filter_map(|s| s.cl).unzip();
    let cl_mse = cl_pred
        .iter()
        .zip(&cl_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    let mean_true = cl_true.iter().sum::<f64>() / n;
    let var_true = cl_true
        .iter()
        .map(|c| (c - mean_true) * (c - mean_true))
        .sum::<f64>()
        / n;
    let rho = if cl_true.len() >= 2 {
        spearman(&cl_pred, &cl_true).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    Ok(MetricReport {
        volume_mse: scored.iter().map(|s| s.volume).sum::<f64>() / n,
        surface_mse: scored.iter().map(|s| s.surface).sum::<f64>() / n,
        cl_mse,
        cl_mse_normalized: if var_true > 0.0 {
            cl_mse / var_true
        } else {
            f64::NAN
        },
        spearman: rho,
        cl_pred,
        cl_true,
        infer_seconds: median(&scored.iter().map(|s| s.seconds).collect::<Vec<_>>()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ring(case: &FlowCase, n: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
        let (c, r) = (case.body.center, case.body.radius);
        (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                ([c[0] + r * t.cos(), c[1] + r * t.sin()], case.surface_cp(t))
            })
            .unzip()
    }

    #[test]
    fn symmetric_flow_has_no_lift() {
        let case = FlowCase::new(1.0, 0.2, 0.0, Circle::new([0.3, 0.1], 0.4)).unwrap();
        let (p, cp) = ring(&case, 64);
        assert!(lift_coefficient(&p, &cp, &case).unwrap().abs() < 1e-6);
    }

    #[test]
    fn quadrature_matches_kutta_joukowski() {
        let case = FlowCase::new(0.8, 0.1, 1.5, Circle::new([0.0, 0.0], 0.3)).unwrap();
        let (p, cp) = ring(&case, 128);
        let cl = lift_coefficient(&p, &cp, &case).unwrap();
        assert!((cl / case.lift_coefficient() - 1.0).abs() < 0.01);
    }

    #[test]
    fn too_few_points() {
        let case = FlowCase::new(1.0, 0.0, 1.0, Circle::new([0.0, 0.0], 1.0)).unwrap();
        let (p, cp) = ring(&case, 7);
        assert!(matches!(
            lift_coefficient(&p, &cp, &case),
            Err(Error::Quadrature(_))
        ));
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[2.0, 5.0, 9.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(
            (spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12
        );
        assert!(matches!(
            spearman(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn surface_error_stays_on_the_surface() {
        let s = FieldSample::new(
            Tensor::from_rows(3, 2, vec![0.0; 6]).unwrap(),
            Tensor::column(vec![0.0; 3]),
            Tensor::column(vec![1.0, 2.0, 3.0]),
            vec![],
            vec![true, false, false],
        )
        .unwrap();
        let pred = Tensor::column(vec![1.5, 2.0, 3.0]);
        assert_eq!(mse_split(&pred, &s).unwrap(), (0.0, 0.25));
    }
}
