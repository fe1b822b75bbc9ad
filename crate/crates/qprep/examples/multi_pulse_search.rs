//! Three-segment pulse search with the gradient (adjoint) optimizer and the
//! randomized-Fourier simplex optimizer; run to convergence they find the
//! same pulse.
//!
//! Run with: cargo run --release --example multi_pulse_search

use qprep::bloch::{BlochVector, SystemParams};
use qprep::mlp::BoundaryPair;
use qprep::mp::{crab_optimize, grape_optimize, gradient_check, OptimizationProblem};
use std::f64::consts::PI;

fn main() {
    let target = BlochVector::new(-(2.0 * PI / 3.0).sin(), 0.0, -0.5);
    let boundary = BoundaryPair::from_ground(target).unwrap();

    for gamma in [0.1, 0.8] {
        let params = SystemParams::from_gamma(1.0, gamma).unwrap();
        let problem = OptimizationProblem::for_boundary(boundary, params, 0.01, 3)
            .unwrap()
            .with_refined_objective(10);

        let rel = gradient_check(&problem, &[-0.3, 0.5, -0.1]).unwrap();
        println!("gamma = {gamma}: adjoint vs finite differences, relative error {rel:.2e}");

        let grape = grape_optimize(&problem, 2000, 8, 11).unwrap();
        let crab = crab_optimize(&problem, 3, 2000, 8, 11).unwrap();
        for (name, r) in [("grape", &grape), ("crab ", &crab)] {
            let w: Vec<String> = r
                .pulse
                .segments()
                .iter()
                .map(|s| format!("{:+.3}", s.omega))
                .collect();
            println!(
                "  {name}: [{}]  F = {:.4}  ({} evaluations, converged = {})",
                w.join(", "),
                r.objective,
                r.n_evaluations,
                r.converged
            );
        }
    }
}
