//! Lift from surface-pressure quadrature against the closed form, for
//! increasing surface resolution.
//!
//! `cargo run --release --example lift_quadrature`

use std::f64::consts::PI;

use enfield::data::{potential_flow, Circle, FlowCase};
use enfield::eval::lift_coefficient;

fn main() -> enfield::Result<()> {
    let case = FlowCase::new(1.2, 8f64.to_radians(), 1.3, Circle::new([0.1, -0.2], 0.35))?;
    println!("closed form C_L = {:.6}", case.lift_coefficient());
    println!("{:>6} {:>12} {:>10}", "points", "quadrature", "rel err");
    for n in [16, 32, 64, 128, 256, 512] {
        let (pts, cp): (Vec<[f64; 2]>, Vec<f64>) = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                let c = case.body.center;
                let r = case.body.radius;
                ([c[0] + r * t.cos(), c[1] + r * t.sin()], case.surface_cp(t))
            })
            .unzip();
        let cl = lift_coefficient(&pts, &cp, &case)?;
        println!(
            "{n:>6} {cl:>12.6} {:>10.2e}",
            (cl / case.lift_coefficient() - 1.0).abs()
        );
    }

    // stagnation points: velocity vanishes, C_p = 1
    let s = -case.circulation / (4.0 * PI * case.speed * case.body.radius);
    for phi in [s.asin(), PI - s.asin()] {
        let t = phi + case.angle;
        let x = [
            case.body.center[0] + case.body.radius * t.cos(),
            case.body.center[1] + case.body.radius * t.sin(),
        ];
        let (_, cp) = potential_flow(&case, &x)?;
        println!("stagnation at {:7.3} rad: C_p - 1 = {:.2e}", t, cp - 1.0);
    }
    Ok(())
}
