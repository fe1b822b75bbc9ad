//! A small slice of the success-rate sweep: for targets on the z = -0.5
//! plane, compare the two strategies across dephasing rates and print the
//! CSV that the full benchmark writes.
//!
//! Run with: cargo run --release --example success_rate_sweep

use qprep::bench::{run_sweep, sweep_csv, SweepGrid};
use qprep::bloch::SystemParams;
use std::f64::consts::PI;

fn main() {
    let grid = SweepGrid {
        z_plane: -0.5,
        phi_values: vec![5.0 * PI / 8.0, PI, 11.0 * PI / 8.0],
        gamma_values: vec![0.1, 0.4, 0.8],
        n_total: 2_000,
        delta: 0.005,
        dt: 0.01,
    };
    let template = SystemParams::from_gamma(1.0, 0.1).unwrap();
    let cells = run_sweep(&grid, &template, 1);

    println!("{}", sweep_csv(&cells, &[("example".into(), "success_rate_sweep".into())]));
    println!("positive diff: the most-likely-path control reaches the target more often");
    for c in &cells {
        if let Some(d) = c.diff {
            println!(
                "  phi = {:.3} pi, gamma = {:.1}: s_mlp - s_mp = {:+.2} points",
                c.phi_f / PI,
                c.gamma,
                d
            );
        }
    }
}
