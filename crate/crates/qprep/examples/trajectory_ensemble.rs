//! Stochastic trajectory ensemble under the analytic control: final-state
//! statistics, success rate, and the x histogram.
//!
//! Run with: cargo run --release --example trajectory_ensemble

use qprep::bloch::{lindblad_evolve, BlochVector, SystemParams};
use qprep::mlp::{solve, BoundaryPair};
use qprep::pulse::{snap_to_grid, ControlPulse};
use qprep::trajectory::{final_state_histogram, simulate_ensemble, success_rate, Axis};
use std::f64::consts::PI;

fn main() {
    let target = BlochVector::new(-(2.0 * PI / 3.0).sin(), 0.0, -0.5);
    let boundary = BoundaryPair::from_ground(target).unwrap();
    let control = solve(&boundary, 1.0).unwrap();
    let dt = 0.01;
    let pulse = ControlPulse::constant(control.omega, snap_to_grid(control.time, dt), 20.0).unwrap();
    let params = SystemParams::from_gamma(1.0, 0.1).unwrap();

    let n = 10_000;
    let ens = simulate_ensemble(&BlochVector::GROUND, &pulse, &params, dt, n, 7, Some(target)).unwrap();
    let mp = lindblad_evolve(&BlochVector::GROUND, &pulse, &params, dt).unwrap();

    println!("control: omega = {:+.4}, T = {:.4}", control.omega, pulse.total_time());
    println!("ensemble mean   = ({:+.4}, {:+.4}, {:+.4})", ens.mean_final[0], ens.mean_final[1], ens.mean_final[2]);
    println!("averaged path   = ({:+.4}, {:+.4}, {:+.4})", mp.x, mp.y, mp.z);
    println!("avg fidelity    = {:.4}", ens.avg_fidelity.unwrap());
    for delta in [0.001, 0.005, 0.01, 0.05] {
        let s = success_rate(&ens, &target, delta).unwrap();
        println!("success s({delta:>5}) = {:5.2} %  ({} of {})", s.rate_percent, s.n_success, s.n_total);
    }

    let hist = final_state_histogram(&ens, Axis::X, 31);
    println!("\nx histogram (target x = {:+.3}):", target.x);
    let peak = *hist.counts.iter().max().unwrap() as f64;
    for (i, &c) in hist.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let bar = "#".repeat((40.0 * c as f64 / peak).ceil() as usize);
        println!("{:+.2} .. {:+.2} {:>6} {}", hist.edges[i], hist.edges[i + 1], c, bar);
    }
}
