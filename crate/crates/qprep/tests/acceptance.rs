//! Acceptance suite: one test per release gate, each printing its measured
//! values next to the tolerance it must meet. Run with
//!
//! ```text
//! cargo test --test acceptance -- --nocapture --test-threads=1
//! ```
//!
//! Every experiment below is deterministic for the fixed master seed.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qprep::bench::{
    calibrate_tolerance, run_sweep, run_table1, SweepGrid, Table1Report, Table1Setup,
    ToleranceCalibration,
};
use qprep::bloch::{fidelity, lindblad_evolve, unravelled_step, BlochVector, SystemParams};
use qprep::mlp::{self, BoundaryPair};
use qprep::mp::{self, OptimizationProblem};
use qprep::pulse::ControlPulse;
use qprep::rng::trajectory_stream;
use qprep::trajectory::{
    path_log_likelihood, sample_noise, simulate_ensemble, success_rate, NoisePath,
};

const MASTER_SEED: u64 = 30;

fn benchmark_target() -> BlochVector {
    BlochVector::new(-(2.0 * PI / 3.0).sin(), 0.0, -0.5)
}

fn random_solvable_pair(rng: &mut impl Rng) -> BoundaryPair {
    loop {
        let mut sample = || {
            let v = BlochVector::new(
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            );
            let n = v.norm();
            (n > 1e-3).then(|| v.scaled(1.0 / n))
        };
        let (Some(i), Some(t)) = (sample(), sample()) else {
            continue;
        };
        let dx = (t.x - i.x).abs();
        if dx < 0.1 || ((t.z - i.z) / dx).abs() > 19.0 {
            continue;
        }
        return BoundaryPair::new(i, t).unwrap();
    }
}

fn table1() -> &'static Table1Report {
    static REPORT: OnceLock<Table1Report> = OnceLock::new();
    REPORT.get_or_init(|| run_table1(&Table1Setup::default(), MASTER_SEED).unwrap())
}

#[test]
fn acceptance_01_mlp_closed_form() {
    let b = BoundaryPair::from_ground(benchmark_target()).unwrap();
    let control = mlp::solve(&b, 1.0).unwrap();
    let omega_exact = -1.0 / 3.0f64.sqrt(); // -0.5774 to four decimals
    let time_exact = PI * 3.0f64.sqrt() / 2.0; // 2.7207 to four decimals
    assert!(
        (control.omega - omega_exact).abs() <= 1e-6,
        "omega {} vs {}",
        control.omega,
        omega_exact
    );
    assert!(
        (control.time - time_exact).abs() <= 1e-6,
        "time {} vs {}",
        control.time,
        time_exact
    );
    assert!((control.time - 2.7207).abs() <= 1e-6);
    println!(
        "acceptance 1 PASS: closed form omega = {:.7} (-0.5774), T = {:.7} (2.7207), both within 1e-6 of the analytic values",
        control.omega, control.time
    );
}

#[test]
fn acceptance_02_endpoint_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut worst: f64 = 1.0;
    for _ in 0..1000 {
        let b = random_solvable_pair(&mut rng);
        let c = mlp::solve(&b, 1.0).unwrap();
        let end = mlp::propagate_exact(&b, 1.0, &c);
        let f = fidelity(&end, b.target()).unwrap();
        worst = worst.min(f);
    }
    assert!(worst >= 1.0 - 1e-9, "worst endpoint fidelity {worst}");
    println!("acceptance 2 PASS: 1000 random boundary pairs, worst endpoint fidelity = 1 - {:.2e} (tolerance 1e-9)", 1.0 - worst);
}

#[test]
fn acceptance_03_solver_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut worst_omega: f64 = 0.0;
    let mut worst_time: f64 = 0.0;
    for _ in 0..1000 {
        let b = random_solvable_pair(&mut rng);
        let a = mlp::solve(&b, 1.0).unwrap();
        let g = mlp::geometric_solve(&b, 1.0).unwrap();
        worst_omega = worst_omega.max((a.omega - g.omega).abs());
        worst_time = worst_time.max((a.time - g.time).abs());
    }
    assert!(worst_omega <= 1e-9, "max omega gap {worst_omega}");
    assert!(worst_time <= 1e-9, "max time gap {worst_time}");
    println!(
        "acceptance 3 PASS: closed-form vs geometric on 1000 pairs, max gaps omega {:.2e}, time {:.2e} (tolerance 1e-9)",
        worst_omega, worst_time
    );
}

#[test]
fn acceptance_04_variational_residuals() {
    let params = SystemParams::from_gamma(1.0, 0.3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED + 4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let b = random_solvable_pair(&mut rng);
        let rep = mlp::verify_variational_solution(&b, 1.0, &params, 1e-4).unwrap();
        worst = worst.max(rep.max_residual());
    }
    assert!(worst <= 1e-6);
    println!(
        "acceptance 4 PASS: 20 boundary pairs at dt = 1e-4, max constraint residual {:.2e} (tolerance 1e-6)",
        worst
    );
}

#[test]
fn acceptance_05_mean_path_consistency() {
    let params = SystemParams::from_gamma(1.0, 0.1).unwrap();
    let pulse = ControlPulse::constant(-0.57, 2.72, 20.0).unwrap();
    let target = benchmark_target();
    let n = 10_000;
    let ens = simulate_ensemble(
        &BlochVector::GROUND,
        &pulse,
        &params,
        0.01,
        n,
        MASTER_SEED,
        Some(target),
    )
    .unwrap();
    let mp = lindblad_evolve(&BlochVector::GROUND, &pulse, &params, 0.01).unwrap();
    let std = ens.component_std();
    let mean = ens.mean_final_vec();
    let gaps = [
        (mean.x - mp.x).abs(),
        (mean.y - mp.y).abs(),
        (mean.z - mp.z).abs(),
    ];
    for (c, (gap, s)) in gaps.iter().zip(std.iter()).enumerate() {
        let tol = 5.0 * s / (n as f64).sqrt();
        assert!(gap <= &tol, "component {c}: gap {gap} > {tol}");
    }
    let avg_f = ens.avg_fidelity.unwrap();
    assert!(
        (avg_f - 0.9501).abs() <= 0.004,
        "avg fidelity {avg_f} vs 0.9501 +- 0.004"
    );
    println!(
        "acceptance 5 PASS: ensemble mean within 5 sigma/sqrt(N) of the averaged path (gaps {:.1e}/{:.1e}/{:.1e}), avg fidelity {:.4} = 0.9501 +- 0.004",
        gaps[0], gaps[1], gaps[2], avg_f
    );
}

#[test]
fn acceptance_06_mp_optimizer_values() {
    // single-pulse optima read straight from the comparison table
    let report = table1();
    let w_low = report.row(true, "MP_1").unwrap().omegas[0];
    let w_high = report.row(false, "MP_1").unwrap().omegas[0];
    assert!((w_low + 0.55).abs() <= 0.01, "gamma=0.1 optimum {w_low}");
    assert!((w_high + 0.34).abs() <= 0.01, "gamma=0.8 optimum {w_high}");

    // multi-pulse searches reach the reported average fidelities
    let mut fids = Vec::new();
    for (gamma_low, band, tol) in [(true, 0.954, 0.003), (false, 0.804, 0.005)] {
        for method in ["GRAPE_3", "CRAB_3"] {
            let row = report.row(gamma_low, method).unwrap();
            assert!(
                (row.avg_fidelity - band).abs() <= tol,
                "{method} gamma_low={gamma_low}: {} vs {band} +- {tol}",
                row.avg_fidelity
            );
            fids.push(row.avg_fidelity);
        }
    }

    // pulse-vector proximity to the reported triples: non-blocking report
    let grape_low = &report.row(true, "GRAPE_3").unwrap().omegas;
    let reference = [-0.22, -1.00, -0.08];
    let max_gap = grape_low
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let pulse_note = if max_gap <= 0.05 {
        format!("pulse match within 0.05 (max gap {max_gap:.3})")
    } else {
        format!("pulse gap {max_gap:.3} exceeds 0.05 (non-blocking; near-degenerate optima)")
    };
    println!(
        "acceptance 6 PASS: single-pulse optima {:.4}/{:.4} (-0.55/-0.34 +- 0.01), multi-pulse fidelities {:.4}/{:.4}/{:.4}/{:.4}; {}",
        w_low, w_high, fids[0], fids[1], fids[2], fids[3], pulse_note
    );
}

#[test]
fn acceptance_07_table1_success_rates() {
    let report = table1();
    let mlp_low = report.row(true, "MLP_1").unwrap();
    assert!(
        (mlp_low.s_loose - 22.0).abs() <= 2.0,
        "low-gamma s(0.01) {} vs 22 +- 2",
        mlp_low.s_loose
    );
    assert!(
        (mlp_low.s_tight - 13.0).abs() <= 2.0,
        "low-gamma s(0.005) {} vs 13 +- 2",
        mlp_low.s_tight
    );
    let mlp_high = report.row(false, "MLP_1").unwrap();
    assert!(
        (mlp_high.s_loose - 4.6).abs() <= 1.0,
        "high-gamma s(0.01) {} vs 4.6 +- 1",
        mlp_high.s_loose
    );
    assert!(
        (mlp_high.s_tight - 2.2).abs() <= 0.7,
        "high-gamma s(0.005) {} vs 2.2 +- 0.7",
        mlp_high.s_tight
    );
    for method in ["MP_1", "GRAPE_3", "CRAB_3"] {
        let row = report.row(false, method).unwrap();
        assert_eq!(row.s_loose, 0.0, "{method} loose rate");
        assert_eq!(row.s_tight, 0.0, "{method} tight rate");
    }
    println!(
        "acceptance 7 PASS: MLP_1 rates low {:.2}/{:.2} (22 +- 2, 13 +- 2), high {:.2}/{:.2} (4.6 +- 1, 2.2 +- 0.7); mean-path methods all exactly 0 at strong dephasing",
        mlp_low.s_loose, mlp_low.s_tight, mlp_high.s_loose, mlp_high.s_tight
    );
}

#[test]
fn acceptance_08_sweep_sign_structure() {
    let template = SystemParams::from_gamma(1.0, 0.1).unwrap();
    let grid = |z: f64| {
        let mut g = SweepGrid::coarse(z);
        g.n_total = 10_000;
        g.delta = 0.01;
        g
    };

    let lower = run_sweep(&grid(-0.5), &template, MASTER_SEED);
    let max_red = lower
        .iter()
        .filter(|c| c.gamma >= 0.4)
        .filter_map(|c| c.diff)
        .fold(f64::MIN, f64::max);
    let min_blue = lower
        .iter()
        .filter(|c| c.gamma > 0.0 && c.gamma <= 0.2 && c.phi_f > PI)
        .filter_map(|c| c.diff)
        .fold(f64::MAX, f64::min);
    assert!(max_red > 6.0, "strongest strong-dephasing cell {max_red}");
    assert!(min_blue < 0.0, "best long-path low-dephasing cell {min_blue}");

    let upper = run_sweep(&grid(0.5), &template, MASTER_SEED);
    let max_abs = upper
        .iter()
        .filter_map(|c| c.diff)
        .fold(0.0f64, |m, d| m.max(d.abs()));
    assert!(max_abs < 3.0, "z=+0.5 plane max |diff| {max_abs}");
    println!(
        "acceptance 8 PASS: z=-0.5 plane has a +{:.2} point cell (> 6) and a {:.2} point cell (< 0); z=+0.5 plane max |diff| {:.2} (< 3)",
        max_red, min_blue, max_abs
    );
}

#[test]
fn acceptance_09_tolerance_calibration() {
    let target = BlochVector::from_z_phi(-0.8, (-0.58f64).atan2(-0.16));
    let boundary = BoundaryPair::from_ground(target).unwrap();
    let control = mlp::solve(&boundary, 1.0).unwrap();
    let pulse = ControlPulse::constant(
        control.omega,
        qprep::pulse::snap_to_grid(control.time, 0.01),
        20.0,
    )
    .unwrap();
    let params = SystemParams::from_gamma(1.0, 0.1).unwrap();
    let out = calibrate_tolerance(
        &target,
        &pulse,
        &params,
        &ToleranceCalibration::default(),
        MASTER_SEED,
        0.01,
    )
    .unwrap();
    let small = &out.per_size[0];
    let big = &out.per_size[2];
    assert_eq!(big.ensemble_size, 10_000);
    assert!(
        (big.infidelity_range - 0.006).abs() <= 0.003,
        "range {} vs 0.006 +- 0.003",
        big.infidelity_range
    );
    assert!(
        (big.infidelity_sd - 0.001).abs() <= 0.0005,
        "sd {} vs 0.001 +- 0.0005",
        big.infidelity_sd
    );
    let ratio = small.infidelity_sd / big.infidelity_sd;
    assert!(
        (10.0 / 1.5..=15.0).contains(&ratio),
        "sd scaling {ratio} vs 10 within factor 1.5"
    );
    println!(
        "acceptance 9 PASS: N=1e4 infidelity range {:.4} (0.006 +- 0.003), sd {:.4} (0.001 +- 0.0005), sd ratio N=1e2/1e4 = {:.2} (10 within factor 1.5)",
        big.infidelity_range, big.infidelity_sd, ratio
    );
}

#[test]
fn acceptance_10_property_suite() {
    // adjoint gradient vs central finite differences
    let boundary = BoundaryPair::from_ground(benchmark_target()).unwrap();
    let params = SystemParams::from_gamma(1.0, 0.4).unwrap();
    let problem = OptimizationProblem::for_boundary(boundary, params, 0.01, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED + 10);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..10 {
        let omegas: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        worst_rel = worst_rel.max(mp::gradient_check(&problem, &omegas).unwrap());
    }
    assert!(worst_rel <= 1e-4, "gradient relative error {worst_rel}");

    // norm drift of the truncated map falls at least 8x when dt halves
    let p_drift = SystemParams::new(1.0, 0.3, 1.0).unwrap();
    let q = BlochVector::from_z_phi(-0.2, 1.0);
    let mut min_ratio = f64::INFINITY;
    for (xi, omega) in [(1.5, 0.8), (-2.0, -0.5), (0.3, 1.9)] {
        let drift = |dt: f64| (unravelled_step(&q, xi, omega, &p_drift, dt).norm_sq() - 1.0).abs();
        min_ratio = min_ratio.min(drift(1e-3) / drift(5e-4));
    }
    assert!(min_ratio >= 8.0, "drift reduction {min_ratio}");

    // ensembles are bit-identical across thread counts
    let pulse = ControlPulse::constant(-0.57, 2.72, 20.0).unwrap();
    let sim_params = SystemParams::from_gamma(1.0, 0.1).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                simulate_ensemble(
                    &BlochVector::GROUND,
                    &pulse,
                    &sim_params,
                    0.01,
                    3000,
                    MASTER_SEED,
                    Some(benchmark_target()),
                )
                .unwrap()
            })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.finals, b.finals);
    assert_eq!(a.mean_final, b.mean_final);
    assert_eq!(a.avg_fidelity, b.avg_fidelity);

    // success rate is monotone in the tolerance
    let target = benchmark_target();
    let mut last = 0.0;
    for delta in [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.2, 1.0] {
        let r = success_rate(&a, &target, delta).unwrap();
        assert!(r.rate_percent >= last);
        last = r.rate_percent;
    }

    // the zero path is the likelihood maximum among trajectories
    // conditioned to end near the target (coarse grid, generous tolerance)
    let coarse_dt = 0.1;
    let coarse_pulse = ControlPulse::constant(-0.577, 2.7, 20.0).unwrap();
    let cond_params = SystemParams::from_gamma(1.0, 0.8).unwrap();
    let zero = NoisePath::zeros(27, coarse_dt);
    assert_eq!(path_log_likelihood(&zero, cond_params.kappa), 0.0);
    let mut accepted = 0;
    let mut max_ll = f64::NEG_INFINITY;
    for i in 0..200_000u64 {
        let mut stream = trajectory_stream(MASTER_SEED + 20, i);
        let noise = sample_noise(27, coarse_dt, cond_params.kappa, &mut stream);
        let q = qprep::trajectory::evolve_with_noise(
            &BlochVector::GROUND,
            &coarse_pulse,
            &cond_params,
            &noise,
        )
        .unwrap();
        if qprep::bloch::fidelity_unchecked(&q, &target) >= 1.0 - 0.05 {
            accepted += 1;
            max_ll = max_ll.max(path_log_likelihood(&noise, cond_params.kappa));
            if accepted >= 1000 {
                break;
            }
        }
    }
    assert!(accepted >= 1000, "only {accepted} conditioned paths");
    assert!(max_ll < 0.0, "conditioned path log-likelihood {max_ll}");

    println!(
        "acceptance 10 PASS: adjoint gradient rel err {:.1e} (<= 1e-4); norm-drift ratio {:.1} (>= 8); bit-identical ensembles across 1 and 4 threads; success rate monotone in delta; {} conditioned paths all below the zero-path likelihood (max {:.2})",
        worst_rel, min_ratio, accepted, max_ll
    );
}
