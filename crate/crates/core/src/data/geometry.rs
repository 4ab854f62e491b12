use crate::encoder::BoundingBox;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Circle {
    pub fn new(center: [f64; 2], radius: f64) -> Self {
        Circle { center, radius }
    }

    pub fn sdf(&self, x: &[f64]) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        dx.hypot(dy) - self.radius
    }
}

/// Circular bodies inside a rectangular domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub bodies: Vec<Circle>,
    pub domain: BoundingBox,
}

impl Geometry {
    pub fn new(bodies: Vec<Circle>, domain: BoundingBox) -> Result<Self> {
        if domain.dim() != 2 {
            return Err(Error::Geometry("bodies live in a 2-D domain".into()));
        }
        for (i, b) in bodies.iter().enumerate() {
            if !(b.radius > 0.0) {
                return Err(Error::Geometry(format!("body {i} has radius {}", b.radius)));
            }
            let inside = (0..2).all(|k| {
                b.center[k] - b.radius > domain.min[k] && b.center[k] + b.radius < domain.max[k]
            });
            if !inside {
                return Err(Error::Geometry(format!("body {i} leaves the domain")));
            }
            for (j, o) in bodies.iter().enumerate().take(i) {
                let d = (b.center[0] - o.center[0]).hypot(b.center[1] - o.center[1]);
                if d <= b.radius + o.radius {
                    return Err(Error::Geometry(format!("bodies {j} and {i} overlap")));
                }
            }
        }
        Ok(Geometry { bodies, domain })
    }

    /// Minimum over bodies of the distance to the boundary; negative inside.
    pub fn sdf(&self, x: &[f64]) -> f64 {
        self.bodies
            .iter()
            .map(|b| b.sdf(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Signed distance of `x` to the nearest body boundary.
pub fn sdf(geometry: &Geometry, x: &[f64]) -> f64 {
    geometry.sdf(x)
}
