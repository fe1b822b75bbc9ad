//! How tight can the success threshold be before finite-ensemble noise
//! drowns it? Repeat the experiment many times per ensemble size and watch
//! the average-infidelity distribution shrink like 1/sqrt(N).
//!
//! Run with: cargo run --release --example tolerance_calibration

use qprep::bench::{calibrate_tolerance, ToleranceCalibration};
use qprep::bloch::{BlochVector, SystemParams};
use qprep::mlp::{solve, BoundaryPair};
use qprep::pulse::{snap_to_grid, ControlPulse};

fn main() {
    let target = BlochVector::from_z_phi(-0.8, (-0.58f64).atan2(-0.16));
    let boundary = BoundaryPair::from_ground(target).unwrap();
    let control = solve(&boundary, 1.0).unwrap();
    let dt = 0.01;
    let pulse = ControlPulse::constant(control.omega, snap_to_grid(control.time, dt), 20.0).unwrap();
    let params = SystemParams::from_gamma(1.0, 0.1).unwrap();

    let spec = ToleranceCalibration::spec(vec![100, 1_000, 10_000], 100);
    let out = calibrate_tolerance(&target, &pulse, &params, &spec, 99, dt).unwrap();

    println!("target ({:+.3}, {:+.3}, {:+.3}), {} repeats per size", target.x, target.y, target.z, out.n_repeats);
    println!("{:>8} {:>12} {:>12} {:>12}", "N", "mean infid", "range", "sd");
    for s in &out.per_size {
        println!(
            "{:>8} {:>12.5} {:>12.5} {:>12.5}",
            s.ensemble_size, s.mean_infidelity, s.infidelity_range, s.infidelity_sd
        );
    }
    let sd0 = out.per_size.first().unwrap().infidelity_sd;
    let sd2 = out.per_size.last().unwrap().infidelity_sd;
    println!(
        "\nsd ratio N={} vs N={}: {:.2} (1/sqrt(N) predicts {:.2})",
        out.per_size[0].ensemble_size,
        out.per_size.last().unwrap().ensemble_size,
        sd0 / sd2,
        ((out.per_size.last().unwrap().ensemble_size as f64)
            / out.per_size[0].ensemble_size as f64)
            .sqrt()
    );
    println!("A tolerance near the N = 10^4 spread keeps success counts meaningful.");
}
