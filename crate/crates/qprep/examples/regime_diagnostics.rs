//! Trajectory bundles for one long-path target at weak and strong
//! dephasing: ten noisy trajectories plus the averaged path per strategy.
//! At weak dephasing the mean-path search reaches for a much faster drive
//! than the analytic control; at strong dephasing its averaged state ends
//! deep inside the sphere.
//!
//! Run with: cargo run --release --example regime_diagnostics

use qprep::bench::regime_diagnostics;
use qprep::bloch::{BlochVector, SystemParams};
use std::f64::consts::PI;

fn main() {
    let target = BlochVector::from_z_phi(-0.5, 11.0 * PI / 8.0);
    let template = SystemParams::from_gamma(1.0, 0.1).unwrap();

    for gamma in [0.1, 0.8] {
        let diag = regime_diagnostics(&target, gamma, &template, 3).unwrap();
        println!("gamma = {gamma}:");
        for bundle in [&diag.mlp, &diag.mp] {
            let spread: f64 = bundle
                .sample_paths
                .iter()
                .map(|p| {
                    let f = p.last().unwrap();
                    ((f[0] - target.x).powi(2) + (f[1] - target.y).powi(2) + (f[2] - target.z).powi(2)).sqrt()
                })
                .sum::<f64>()
                / bundle.sample_paths.len() as f64;
            println!(
                "  {:>3}: omega = {:+.3}, T = {:.2}, |mean final| = {:.3}, mean trajectory miss = {:.3}",
                bundle.method, bundle.omega, bundle.total_time, bundle.mean_final_norm, spread
            );
        }
    }
    println!("\nDump the full time series with: qprep bench --experiment regimes --gamma 0.1");
}
