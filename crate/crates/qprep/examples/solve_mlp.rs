//! Closed-form most-likely-path controls for a handful of targets, solved
//! twice: once from the boundary algebra and once geometrically.
//!
//! Run with: cargo run --release --example solve_mlp

use qprep::bloch::BlochVector;
use qprep::mlp::{analytic_path, geometric_solve, solve, BoundaryPair};
use std::f64::consts::PI;

fn main() {
    let targets = [
        ("equator +x", BlochVector::new(1.0, 0.0, 0.0)),
        (
            "benchmark target",
            BlochVector::new(-(2.0 * PI / 3.0).sin(), 0.0, -0.5),
        ),
        ("first quadrant", BlochVector::from_z_phi(-0.5, PI / 4.0)),
        ("third quadrant", BlochVector::from_z_phi(-0.5, 5.0 * PI / 4.0)),
        ("near pole", BlochVector::from_z_phi(0.9, PI)),
        ("north pole", BlochVector::new(0.0, 0.0, 1.0)),
    ];

    println!("{:<18} {:>9} {:>9} {:>6}  geometric agreement", "target", "omega", "time", "long?");
    for (name, target) in targets {
        let boundary = match BoundaryPair::from_ground(target) {
            Ok(b) => b,
            Err(e) => {
                println!("{name:<18} unsolvable: {e}");
                continue;
            }
        };
        match solve(&boundary, 1.0) {
            Ok(c) => {
                let g = geometric_solve(&boundary, 1.0).unwrap();
                let path = analytic_path(&boundary, 1.0, 101).unwrap();
                let max_impurity = path
                    .iter()
                    .map(|p| (p.norm() - 1.0).abs())
                    .fold(0.0f64, f64::max);
                println!(
                    "{name:<18} {:+9.4} {:9.4} {:>6}  dOmega={:.1e} dT={:.1e} path impurity={:.1e}",
                    c.omega,
                    c.time,
                    c.quadrant_corrected,
                    (c.omega - g.omega).abs(),
                    (c.time - g.time).abs(),
                    max_impurity
                );
            }
            Err(e) => println!("{name:<18} unsolvable: {e}"),
        }
    }
}
