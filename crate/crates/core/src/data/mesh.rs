//! Point-cloud "meshes": equally spaced boundary points plus interior points
//! that are denser near the bodies.

use std::f64::consts::PI;

use rand::Rng;

use super::geometry::Geometry;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAX_ATTEMPTS_PER_POINT: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    /// `N × 2`; surface points first.
    pub coords: Tensor,
    pub surface: Vec<bool>,
}

/// Split `n` boundary points over bodies in proportion to their perimeters.
fn surface_counts(geometry: &Geometry, n: usize) -> Vec<usize> {
    let total: f64 = geometry.bodies.iter().map(|b| b.radius).sum();
    let mut counts: Vec<usize> = geometry
        .bodies
        .iter()
        .map(|b| (n as f64 * b.radius / total).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    counts[0] += n - assigned;
    counts
}

/// `n_surface` points equally spaced by angle on the body boundaries (angle
/// 0 on each body's +x axis), then `n_total − n_surface` exterior points:
/// half uniform over the domain, half within `2r` of a body boundary.
pub fn sample_mesh<R: Rng + ?Sized>(
    geometry: &Geometry,
    n_total: usize,
    n_surface: usize,
    rng: &mut R,
) -> Result<PointCloud> {
    if n_surface >= n_total {
        return Err(Error::Geometry(format!(
            "need fewer surface points ({n_surface}) than total ({n_total})"
        )));
    }
    if geometry.bodies.is_empty() && n_surface > 0 {
        return Err(Error::Geometry(
            "surface points requested without bodies".into(),
        ));
    }
    let mut data = Vec::with_capacity(2 * n_total);
    if n_surface > 0 {
        for (body, count) in geometry
            .bodies
            .iter()
            .zip(surface_counts(geometry, n_surface))
        {
            for k in 0..count {
                let t = 2.0 * PI * k as f64 / count as f64;
                data.push(body.center[0] + body.radius * t.cos());
                data.push(body.center[1] + body.radius * t.sin());
            }
        }
    }
    let n_volume = n_total - n_surface;
    let n_near = if geometry.bodies.is_empty() {
        0
    } else {
        n_volume / 2
    };
    let dom = &geometry.domain;
    let budget = MAX_ATTEMPTS_PER_POINT * n_volume.max(1);
    let mut attempts = 0;
    let mut placed = 0;
    while placed < n_volume {
        attempts += 1;
        if attempts > budget {
            return Err(Error::Geometry(format!(
                "placed only {placed} of {n_volume} exterior points"
            )));
        }
        let p = if placed < n_near {
            let body = &geometry.bodies[rng.gen_range(0..geometry.bodies.len())];
            let rho = body.radius + rng.gen_range(0.0..2.0 * body.radius);
            let t = rng.gen_range(0.0..2.0 * PI);
            [
                body.center[0] + rho * t.cos(),
                body.center[1] + rho * t.sin(),
            ]
        } else {
            [
                rng.gen_range(dom.min[0]..dom.max[0]),
                rng.gen_range(dom.min[1]..dom.max[1]),
            ]
        };
        if !dom.contains(&p) || geometry.sdf(&p) <= 0.0 {
            continue;
        }
        data.extend_from_slice(&p);
        placed += 1;
    }
    let mut surface = vec![true; n_surface];
    surface.resize(n_total, false);
    Ok(PointCloud {
        coords: Tensor::from_rows(n_total, 2, data)?,
        surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::geometry::Circle;
    use crate::encoder::BoundingBox;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn surface_points_lie_on_the_boundary_and_the_rest_outside() {
        let g = Geometry::new(
            vec![Circle::new([-0.5, 0.0], 0.5), Circle::new([0.6, 0.3], 0.2)],
            BoundingBox::square(2.0),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = sample_mesh(&g, 600, 70, &mut rng).unwrap();
        assert_eq!(m.coords.rows(), 600);
        for i in 0..600 {
            let d = g.sdf(m.coords.row_slice(i));
            if m.surface[i] {
                assert!(d.abs() < 1e-9);
            } else {
                assert!(d > 0.0);
            }
        }
        assert_eq!(m.surface.iter().filter(|&&s| s).count(), 70);
    }

    #[test]
    fn too_many_surface_points_is_an_error() {
        let g =
            Geometry::new(vec![Circle::new([0.0, 0.0], 0.5)], BoundingBox::square(2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_mesh(&g, 10, 10, &mut rng),
            Err(Error::Geometry(_))
        ));
    }
}
