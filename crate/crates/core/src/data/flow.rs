//! Inviscid incompressible flow past a circle with circulation.
//!
//! Complex potential, with `ζ = x − c` and `Γ > 0` clockwise:
//!
//! ```text
//! F(ζ) = U e^{−iβ} (ζ + r² e^{2iβ} / ζ) + iΓ/(2π) log ζ
//! ```
//!
//! On the surface, with `φ` the angle measured from the freestream
//! direction, `C_p = 1 − (2 sin φ + Γ/(2πUr))²` and the lift per unit span
//! is `ρUΓ`, i.e. `C_L = Γ/(Ur)` on the reference length `2r`.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::geometry::Circle;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowCase {
    /// Freestream speed, > 0.
    pub speed: f64,
    /// Angle of attack in radians.
    pub angle: f64,
    /// Circulation, clockwise positive.
    pub circulation: f64,
    pub body: Circle,
}

impl FlowCase {
    pub fn new(speed: f64, angle: f64, circulation: f64, body: Circle) -> Result<Self> {
        if !(speed > 0.0) || !circulation.is_finite() || !angle.is_finite() {
            return Err(Error::Domain(format!(
                "invalid freestream U={speed}, β={angle}, Γ={circulation}"
            )));
        }
        Ok(FlowCase {
            speed,
            angle,
            circulation,
            body,
        })
    }

    /// Global parameters `(U cos β, U sin β, Γ)`.
    pub fn mu(&self) -> Vec<f64> {
        vec![
            self.speed * self.angle.cos(),
            self.speed * self.angle.sin(),
            self.circulation,
        ]
    }

    /// Inverse of [`FlowCase::mu`].
    pub fn from_mu(mu: &[f64], body: Circle) -> Result<Self> {
        if mu.len() != 3 {
            return Err(Error::Domain(format!(
                "flow parameters need 3 entries, got {}",
                mu.len()
            )));
        }
        FlowCase::new(mu[0].hypot(mu[1]), mu[1].atan2(mu[0]), mu[2], body)
    }

    /// Kutta–Joukowski lift coefficient `Γ / (U r)`.
    pub fn lift_coefficient(&self) -> f64 {
        self.circulation / (self.speed * self.body.radius)
    }

    /// Analytic surface pressure at angle `theta` (body frame).
    pub fn surface_cp(&self, theta: f64) -> f64 {
        let phi = theta - self.angle;
        let s = 2.0 * phi.sin() + self.circulation / (2.0 * PI * self.speed * self.body.radius);
        1.0 - s * s
    }

    pub fn complex_potential(&self, x: &[f64]) -> Complex64 {
        let zeta = Complex64::new(x[0] - self.body.center[0], x[1] - self.body.center[1]);
        let r2 = self.body.radius * self.body.radius;
        let rot = Complex64::from_polar(1.0, -self.angle);
        let rot2 = Complex64::from_polar(1.0, 2.0 * self.angle);
        self.speed * rot * (zeta + r2 * rot2 / zeta)
            + Complex64::i() * self.circulation / (2.0 * PI) * zeta.ln()
    }

    /// `dF/dζ = u − iv`.
    pub fn complex_velocity(&self, x: &[f64]) -> Complex64 {
        let zeta = Complex64::new(x[0] - self.body.center[0], x[1] - self.body.center[1]);
        let r2 = self.body.radius * self.body.radius;
        let rot = Complex64::from_polar(1.0, -self.angle);
        let rot2 = Complex64::from_polar(1.0, 2.0 * self.angle);
        self.speed * rot * (1.0 - r2 * rot2 / (zeta * zeta))
            + Complex64::i() * self.circulation / (2.0 * PI * zeta)
    }
}

/// Velocity and pressure coefficient at `x`, which must not be inside the body.
pub fn potential_flow(case: &FlowCase, x: &[f64]) -> Result<([f64; 2], f64)> {
    let d = case.body.sdf(x);
    if d < -1e-12 * case.body.radius {
        return Err(Error::Domain(format!(
            "point {x:?} is inside the body (sdf {d:e})"
        )));
    }
    let w = case.complex_velocity(x);
    let vel = [w.re, -w.im];
    let cp = 1.0 - (vel[0] * vel[0] + vel[1] * vel[1]) / (case.speed * case.speed);
    Ok((vel, cp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case(gamma: f64, beta: f64) -> FlowCase {
        FlowCase::new(1.3, beta, gamma, Circle::new([0.2, -0.1], 0.4)).unwrap()
    }

    fn surface(c: &FlowCase, theta: f64) -> [f64; 2] {
        [
            c.body.center[0] + c.body.radius * theta.cos(),
            c.body.center[1] + c.body.radius * theta.sin(),
        ]
    }

    #[test]
    fn cylinder_without_circulation() {
        let c = case(0.0, 0.0);
        let (_, cp_top) = potential_flow(&c, &surface(&c, PI / 2.0)).unwrap();
        assert!((cp_top + 3.0).abs() < 1e-12);
        let (v, cp_stag) = potential_flow(&c, &surface(&c, 0.0)).unwrap();
        assert!((cp_stag - 1.0).abs() < 1e-12);
        assert!(v[0].abs() < 1e-12 && v[1].abs() < 1e-12);
    }

    #[test]
    fn far_field_is_freestream() {
        let c = case(1.5, 0.2);
        let (v, cp) = potential_flow(&c, &[1e5, 3e4]).unwrap();
        assert!(cp.abs() < 1e-4);
        assert!((v[0] - 1.3 * 0.2f64.cos()).abs() < 1e-4);
    }

    #[test]
    fn interior_points_are_a_domain_error() {
        let c = case(0.0, 0.0);
        assert!(matches!(
            potential_flow(&c, &c.body.center),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn velocity_is_the_gradient_of_the_potential() {
        let c = case(-0.8, 0.15);
        let h = 1e-6;
        for x in [[0.9, 0.3], [-0.5, 0.6], [0.2, -1.2]] {
            let phi = |p: [f64; 2]| c.complex_potential(&p).re;
            let u = (phi([x[0] + h, x[1]]) - phi([x[0] - h, x[1]])) / (2.0 * h);
            let v = (phi([x[0], x[1] + h]) - phi([x[0], x[1] - h])) / (2.0 * h);
            let (vel, _) = potential_flow(&c, &x).unwrap();
            assert!(
                (u - vel[0]).abs() < 1e-7 && (v - vel[1]).abs() < 1e-7,
                "{x:?}"
            );
        }
    }

    #[test]
    fn surface_formula_matches_the_field() {
        let c = case(1.7, 0.2);
        for k in 0..16 {
            let theta = 2.0 * PI * k as f64 / 16.0;
            let (_, cp) = potential_flow(&c, &surface(&c, theta)).unwrap();
            assert!((cp - c.surface_cp(theta)).abs() < 1e-9);
        }
    }

    #[test]
    fn mu_round_trips() {
        let c = case(-1.1, -0.12);
        let back = FlowCase::from_mu(&c.mu(), c.body).unwrap();
        assert!((back.speed - c.speed).abs() < 1e-14);
        assert!((back.angle - c.angle).abs() < 1e-14);
        assert_eq!(back.circulation, c.circulation);
    }
}
