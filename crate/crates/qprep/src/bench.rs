//! Experiment harness: success-rate sweeps over target states and dephasing
//! rates, the multi-pulse comparison table, infidelity-tolerance calibration
//! from finite-ensemble fluctuations, and per-regime trajectory diagnostics.
//!
//! Every experiment is deterministic given its master seed; per-cell and
//! per-repeat seeds derive from it, so reruns and any parallel schedule
//! reproduce the same numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{
    fidelity_unchecked, lindblad_evolve, mean_path_propagator, unravelled_step, BlochVector,
    SystemParams,
};
use crate::error::Result;
use crate::mlp::{self, BoundaryPair, MlpControl};
use crate::mp::{self, OptimizationProblem};
use crate::pulse::{snap_to_grid, ControlPulse, DEFAULT_OMEGA_CAP_FACTOR};
use crate::rng::{derive_seed, trajectory_stream};
use crate::trajectory::{simulate_ensemble_renormalized, success_rate};

use std::f64::consts::PI;

/// Evenly spaced grid including both endpoints.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Target-plane sweep specification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepGrid {
    /// Polar height of the target plane.
    pub z_plane: f64,
    /// Azimuths; defaults cover `[pi/2, 3pi/2]` (the two x hemispheres are
    /// mirror images).
    pub phi_values: Vec<f64>,
    /// Dephasing rates in units of the level splitting.
    pub gamma_values: Vec<f64>,
    pub n_total: usize,
    pub delta: f64,
    pub dt: f64,
}

impl SweepGrid {
    /// Desk-scale grid: 25 azimuths by 21 rates at 1e4 trajectories.
    pub fn standard(z_plane: f64) -> Self {
        SweepGrid {
            z_plane,
            phi_values: linspace(PI / 2.0, 3.0 * PI / 2.0, 25),
            gamma_values: linspace(0.0, 1.0, 21),
            n_total: 10_000,
            delta: 0.005,
            dt: 0.01,
        }
    }

    /// CI-scale preset: 9 azimuths by 6 rates at 1e3 trajectories. The rate
    /// list leans low because that is where the two strategies differ in
    /// interesting ways.
    pub fn coarse(z_plane: f64) -> Self {
        SweepGrid {
            z_plane,
            phi_values: linspace(PI / 2.0, 3.0 * PI / 2.0, 9),
            gamma_values: vec![0.0, 0.1, 0.2, 0.4, 0.7, 1.0],
            n_total: 1_000,
            delta: 0.005,
            dt: 0.01,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.phi_values.len() * self.gamma_values.len()
    }
}

/// One sweep data point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCell {
    pub z_f: f64,
    pub phi_f: f64,
    pub gamma: f64,
    pub s_mlp: Option<f64>,
    pub s_mp: Option<f64>,
    /// `s_mlp - s_mp` in percentage points.
    pub diff: Option<f64>,
    pub omega_mlp: Option<f64>,
    pub t_mlp: Option<f64>,
    pub omega_mp: Option<f64>,
    pub skip_reason: Option<String>,
}

/// Runs one plane of the sweep: per cell, solve the most-likely-path
/// control, fit the mean-path single pulse over the same horizon, simulate
/// both ensembles, and record the success-rate difference. Unsolvable cells
/// (divergent or capped drives) are emitted with a skip marker.
pub fn run_sweep(grid: &SweepGrid, template: &SystemParams, master_seed: u64) -> Vec<SweepCell> {
    let cells: Vec<(usize, f64, f64)> = grid
        .phi_values
        .iter()
        .flat_map(|&phi| grid.gamma_values.iter().map(move |&gamma| (phi, gamma)))
        .enumerate()
        .map(|(i, (phi, gamma))| (i, phi, gamma))
        .collect();

    cells
        .into_par_iter()
        .map(|(idx, phi, gamma)| {
            sweep_cell(grid, template, phi, gamma, derive_seed(master_seed, idx as u64))
        })
        .collect()
}

fn sweep_cell(
    grid: &SweepGrid,
    template: &SystemParams,
    phi: f64,
    gamma: f64,
    cell_seed: u64,
) -> SweepCell {
    let epsilon = template.epsilon;
    let target = BlochVector::from_z_phi(grid.z_plane, phi);
    let mut cell = SweepCell {
        z_f: grid.z_plane,
        phi_f: phi,
        gamma,
        s_mlp: None,
        s_mp: None,
        diff: None,
        omega_mlp: None,
        t_mlp: None,
        omega_mp: None,
        skip_reason: None,
    };

    let run = || -> Result<(f64, f64, MlpControl, f64)> {
        let boundary = BoundaryPair::from_ground(target)?;
        let control = mlp::solve(&boundary, epsilon)?;
        let t_sim = snap_to_grid(control.time, grid.dt);
        let params = SystemParams::from_gamma_kappa(epsilon, gamma, template.kappa)?;
        let cap = DEFAULT_OMEGA_CAP_FACTOR * epsilon;

        let mlp_pulse = ControlPulse::constant(control.omega, t_sim, cap)?;
        let ens_mlp = simulate_ensemble_renormalized(
            &BlochVector::GROUND,
            &mlp_pulse,
            &params,
            grid.dt,
            grid.n_total,
            derive_seed(cell_seed, 0),
            Some(target),
        )?;
        let s_mlp = success_rate(&ens_mlp, &target, grid.delta)?.rate_percent;

        let omega_mp = best_single_drive(&boundary, &params, t_sim, cap);
        let mp_pulse = ControlPulse::constant(omega_mp, t_sim, cap)?;
        let ens_mp = simulate_ensemble_renormalized(
            &BlochVector::GROUND,
            &mp_pulse,
            &params,
            grid.dt,
            grid.n_total,
            derive_seed(cell_seed, 1),
            Some(target),
        )?;
        let s_mp = success_rate(&ens_mp, &target, grid.delta)?.rate_percent;
        Ok((s_mlp, s_mp, control, omega_mp))
    };

    match run() {
        Ok((s_mlp, s_mp, control, omega_mp)) => {
            cell.s_mlp = Some(s_mlp);
            cell.s_mp = Some(s_mp);
            cell.diff = Some(s_mlp - s_mp);
            cell.omega_mlp = Some(control.omega);
            cell.t_mlp = Some(control.time);
            cell.omega_mp = Some(omega_mp);
        }
        Err(e) => cell.skip_reason = Some(e.kind().to_string()),
    }
    cell
}

/// Best constant drive over the full hardware window: a wide scan of the
/// exact mean-path fidelity. The exact propagator matters here because the
/// scan visits drives far too fast for the fixed-step Euler scheme.
pub fn best_single_drive(
    boundary: &BoundaryPair,
    params: &SystemParams,
    total_time: f64,
    bound: f64,
) -> f64 {
    let target = boundary.target();
    let initial = boundary.initial();
    let (omega, _, _) = mp::maximize_scalar(
        |w| {
            let m = mean_path_propagator(w, params, total_time);
            let q = BlochVector::new(
                m[0][0] * initial.x + m[0][1] * initial.y + m[0][2] * initial.z,
                m[1][0] * initial.x + m[1][1] * initial.y + m[1][2] * initial.z,
                m[2][0] * initial.x + m[2][1] * initial.y + m[2][2] * initial.z,
            );
            fidelity_unchecked(&q, target)
        },
        -bound,
        bound,
    );
    omega
}

/// Fixed setup of the multi-pulse comparison experiment.
#[derive(Clone, Debug)]
pub struct Table1Setup {
    pub target: BlochVector,
    pub gamma_low: f64,
    pub gamma_high: f64,
    pub n_total: usize,
    pub dt: f64,
    pub delta_loose: f64,
    pub delta_tight: f64,
    pub n_segments: usize,
    /// How much finer the optimizer objective grid is than `dt`.
    pub objective_refinement: usize,
    pub grape_max_iters: usize,
    pub grape_restarts: usize,
    pub crab_basis: usize,
    pub crab_max_iters: usize,
    pub crab_restarts: usize,
}

impl Default for Table1Setup {
    fn default() -> Self {
        Table1Setup {
            target: BlochVector::new(-(2.0 * PI / 3.0).sin(), 0.0, -0.5),
            gamma_low: 0.1,
            gamma_high: 0.8,
            n_total: 10_000,
            dt: 0.01,
            delta_loose: 0.01,
            delta_tight: 0.005,
            n_segments: 3,
            objective_refinement: 10,
            grape_max_iters: 2000,
            grape_restarts: 16,
            crab_basis: 3,
            crab_max_iters: 3000,
            crab_restarts: 8,
        }
    }
}

/// One method's row of the comparison table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub omegas: Vec<f64>,
    pub durations: Vec<f64>,
    /// Deterministic mean-path fidelity of the pulse.
    pub lindblad_fidelity: f64,
    /// Ensemble average fidelity.
    pub avg_fidelity: f64,
    /// Success rate at the loose tolerance, percent.
    pub s_loose: f64,
    /// Success rate at the tight tolerance, percent.
    pub s_tight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table1Block {
    pub gamma: f64,
    pub rows: Vec<MethodRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table1Report {
    pub low: Table1Block,
    pub high: Table1Block,
    pub delta_loose: f64,
    pub delta_tight: f64,
    pub n_total: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Table1Report {
    /// Aligned text rendering, one sub-table per dephasing regime.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for block in [&self.low, &self.high] {
            out.push_str(&format!(
                "dephasing gamma = {:.2}  (n_total = {}, dt = {})\n",
                block.gamma, self.n_total, self.dt
            ));
            out.push_str(&format!(
                "{:<8} {:>8} {:>10} {:>10}  pulse\n",
                "method",
                "F_avg",
                format!("s({})", self.delta_loose),
                format!("s({})", self.delta_tight),
            ));
            for row in &block.rows {
                let pulse = row
                    .omegas
                    .iter()
                    .map(|w| format!("{w:+.3}"))
                    .collect::<Vec<_>>()
                    .join(", ");
                out.push_str(&format!(
                    "{:<8} {:>8.4} {:>10.2} {:>10.2}  [{}]\n",
                    row.method, row.avg_fidelity, row.s_loose, row.s_tight, pulse
                ));
            }
            out.push('\n');
        }
        out
    }

    pub fn row(&self, gamma_low: bool, method: &str) -> Option<&MethodRow> {
        let block = if gamma_low { &self.low } else { &self.high };
        block.rows.iter().find(|r| r.method == method)
    }
}

/// Reproduces the four-method comparison (single-pulse most-likely-path and
/// mean-path plus three-segment gradient and simplex searches) at two
/// dephasing strengths.
pub fn run_table1(setup: &Table1Setup, master_seed: u64) -> Result<Table1Report> {
    let epsilon = 1.0;
    let cap = DEFAULT_OMEGA_CAP_FACTOR * epsilon;
    let boundary = BoundaryPair::from_ground(setup.target)?;
    let control = mlp::solve(&boundary, epsilon)?;
    let t_sim = snap_to_grid(control.time, setup.dt);

    let bound = mp::DEFAULT_SEARCH_BOUND_FACTOR * epsilon;
    let mut blocks = Vec::new();
    for (gi, &gamma) in [setup.gamma_low, setup.gamma_high].iter().enumerate() {
        let params = SystemParams::from_gamma(epsilon, gamma)?;
        let single_problem =
            OptimizationProblem::new(boundary, params, t_sim, 1, (-bound, bound), setup.dt)?;
        let multi_problem = OptimizationProblem::new(
            boundary,
            params,
            t_sim,
            setup.n_segments,
            (-bound, bound),
            setup.dt,
        )?
        .with_refined_objective(setup.objective_refinement);

        let mlp_pulse = ControlPulse::constant(control.omega, t_sim, cap)?;
        let mp_res = mp::optimize_single_pulse(&single_problem)?;
        let grape_res = mp::grape_optimize(
            &multi_problem,
            setup.grape_max_iters,
            setup.grape_restarts,
            derive_seed(master_seed, 100 + gi as u64),
        )?;
        let crab_res = mp::crab_optimize(
            &multi_problem,
            setup.crab_basis,
            setup.crab_max_iters,
            setup.crab_restarts,
            derive_seed(master_seed, 200 + gi as u64),
        )?;

        let pulses = [
            ("MLP_1".to_string(), mlp_pulse),
            ("MP_1".to_string(), mp_res.pulse.clone()),
            (format!("GRAPE_{}", setup.n_segments), grape_res.pulse.clone()),
            (format!("CRAB_{}", setup.n_segments), crab_res.pulse.clone()),
        ];

        let mut rows = Vec::new();
        for (mi, (name, pulse)) in pulses.iter().enumerate() {
            let mp_final = lindblad_evolve(&BlochVector::GROUND, pulse, &params, setup.dt)?;
            let lindblad_fidelity = fidelity_unchecked(&mp_final, &setup.target);
            let ens = simulate_ensemble_renormalized(
                &BlochVector::GROUND,
                pulse,
                &params,
                setup.dt,
                setup.n_total,
                derive_seed(master_seed, (gi as u64) * 16 + mi as u64),
                Some(setup.target),
            )?;
            let s_loose = success_rate(&ens, &setup.target, setup.delta_loose)?;
            let s_tight = success_rate(&ens, &setup.target, setup.delta_tight)?;
            rows.push(MethodRow {
                method: name.clone(),
                omegas: pulse.segments().iter().map(|s| s.omega).collect(),
                durations: pulse.segments().iter().map(|s| s.duration).collect(),
                lindblad_fidelity,
                avg_fidelity: ens.avg_fidelity.unwrap(),
                s_loose: s_loose.rate_percent,
                s_tight: s_tight.rate_percent,
            });
        }
        blocks.push(Table1Block { gamma, rows });
    }

    let high = blocks.pop().unwrap();
    let low = blocks.pop().unwrap();
    Ok(Table1Report {
        low,
        high,
        delta_loose: setup.delta_loose,
        delta_tight: setup.delta_tight,
        n_total: setup.n_total,
        dt: setup.dt,
        seed: master_seed,
    })
}

/// Specification and results of the infidelity-tolerance calibration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ToleranceCalibration {
    pub ensemble_sizes: Vec<usize>,
    pub n_repeats: usize,
    pub per_size: Vec<SizeStats>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SizeStats {
    pub ensemble_size: usize,
    /// Mean of the per-repeat average infidelities.
    pub mean_infidelity: f64,
    /// Spread (max - min) of the per-repeat average infidelities.
    pub infidelity_range: f64,
    /// Standard deviation of the per-repeat average infidelities.
    pub infidelity_sd: f64,
}

impl ToleranceCalibration {
    pub fn spec(ensemble_sizes: Vec<usize>, n_repeats: usize) -> Self {
        ToleranceCalibration {
            ensemble_sizes,
            n_repeats,
            per_size: Vec::new(),
        }
    }
}

impl Default for ToleranceCalibration {
    fn default() -> Self {
        Self::spec(vec![100, 1_000, 10_000], 100)
    }
}

/// For each ensemble size, repeats the experiment and summarizes how the
/// average infidelity to the target fluctuates across repeats. The spread
/// shrinks with size like `1/sqrt(N)`, which is what motivates the default
/// tolerance choices.
pub fn calibrate_tolerance(
    target: &BlochVector,
    pulse: &ControlPulse,
    params: &SystemParams,
    spec: &ToleranceCalibration,
    master_seed: u64,
    dt: f64,
) -> Result<ToleranceCalibration> {
    target.require_pure()?;
    let mut filled = ToleranceCalibration {
        ensemble_sizes: spec.ensemble_sizes.clone(),
        n_repeats: spec.n_repeats,
        per_size: Vec::new(),
    };
    for (si, &n) in spec.ensemble_sizes.iter().enumerate() {
        let infidelities: Vec<f64> = (0..spec.n_repeats)
            .into_par_iter()
            .map(|rep| {
                let seed = derive_seed(master_seed, ((si as u64) << 32) | rep as u64);
                let ens = simulate_ensemble_renormalized(
                    &BlochVector::GROUND,
                    pulse,
                    params,
                    dt,
                    n,
                    seed,
                    Some(*target),
                )
                .expect("ensemble parameters validated up front");
                1.0 - ens.avg_fidelity.unwrap()
            })
            .collect();
        let m = infidelities.iter().sum::<f64>() / infidelities.len() as f64;
        let var = infidelities
            .iter()
            .map(|v| (v - m) * (v - m))
            .sum::<f64>()
            / (infidelities.len() - 1).max(1) as f64;
        let max = infidelities.iter().cloned().fold(f64::MIN, f64::max);
        let min = infidelities.iter().cloned().fold(f64::MAX, f64::min);
        filled.per_size.push(SizeStats {
            ensemble_size: n,
            mean_infidelity: m,
            infidelity_range: max - min,
            infidelity_sd: var.sqrt(),
        });
    }
    Ok(filled)
}

/// Time series of a handful of stochastic trajectories plus the averaged
/// path, for one control.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryBundle {
    pub method: String,
    pub omega: f64,
    pub total_time: f64,
    pub dt: f64,
    /// `n_samples` stochastic paths, each recorded at every step.
    pub sample_paths: Vec<Vec<[f64; 3]>>,
    pub mean_path: Vec<[f64; 3]>,
    pub mean_final_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegimeDiagnostics {
    pub target: [f64; 3],
    pub gamma: f64,
    pub mlp: TrajectoryBundle,
    pub mp: TrajectoryBundle,
}

/// Emits 10 stochastic trajectories and the averaged path for the
/// most-likely-path and mean-path controls of one target, for qualitative
/// inspection of the two strategies across dephasing regimes. The mean-path
/// drive comes from the full-window exact scan, so the fast
/// multi-revolution drives that strategy favors on long-path targets are
/// visible.
pub fn regime_diagnostics(
    target: &BlochVector,
    gamma: f64,
    template: &SystemParams,
    master_seed: u64,
) -> Result<RegimeDiagnostics> {
    let epsilon = template.epsilon;
    let dt = 0.01;
    let boundary = BoundaryPair::from_ground(*target)?;
    let control = mlp::solve(&boundary, epsilon)?;
    let t_sim = snap_to_grid(control.time, dt);
    let params = SystemParams::from_gamma_kappa(epsilon, gamma, template.kappa)?;

    let mp_omega = best_single_drive(&boundary, &params, t_sim, DEFAULT_OMEGA_CAP_FACTOR * epsilon);

    let mlp_bundle = trajectory_bundle("mlp", control.omega, t_sim, &params, dt, derive_seed(master_seed, 0));
    let mp_bundle = trajectory_bundle("mp", mp_omega, t_sim, &params, dt, derive_seed(master_seed, 1));

    Ok(RegimeDiagnostics {
        target: [target.x, target.y, target.z],
        gamma,
        mlp: mlp_bundle,
        mp: mp_bundle,
    })
}

const DIAGNOSTIC_SAMPLES: usize = 10;

fn trajectory_bundle(
    method: &str,
    omega: f64,
    total_time: f64,
    params: &SystemParams,
    dt: f64,
    seed: u64,
) -> TrajectoryBundle {
    let n_steps = (total_time / dt).round() as usize;
    let sigma = (params.kappa / dt).sqrt();

    let sample_paths: Vec<Vec<[f64; 3]>> = (0..DIAGNOSTIC_SAMPLES)
        .map(|i| {
            let mut rng = trajectory_stream(seed, i as u64);
            let mut q = BlochVector::GROUND;
            let mut path = Vec::with_capacity(n_steps + 1);
            path.push([q.x, q.y, q.z]);
            for _ in 0..n_steps {
                let xi = sigma
                    * <rand_distr::StandardNormal as rand_distr::Distribution<f64>>::sample(
                        &rand_distr::StandardNormal,
                        &mut rng,
                    );
                q = unravelled_step(&q, xi, omega, params, dt);
                path.push([q.x, q.y, q.z]);
            }
            path
        })
        .collect();

    // exact per-step propagator: the diagnostics cover drives fast enough
    // to destabilize fixed-step Euler
    let step = mean_path_propagator(omega, params, dt);
    let mut mean_path = Vec::with_capacity(n_steps + 1);
    let mut q = BlochVector::GROUND;
    mean_path.push([q.x, q.y, q.z]);
    for _ in 0..n_steps {
        q = BlochVector::new(
            step[0][0] * q.x + step[0][1] * q.y + step[0][2] * q.z,
            step[1][0] * q.x + step[1][1] * q.y + step[1][2] * q.z,
            step[2][0] * q.x + step[2][1] * q.y + step[2][2] * q.z,
        );
        mean_path.push([q.x, q.y, q.z]);
    }

    TrajectoryBundle {
        method: method.to_string(),
        omega,
        total_time,
        dt,
        sample_paths,
        mean_path,
        mean_final_norm: q.norm(),
    }
}

/// CSV rendering of a sweep, one row per cell. Floats carry 17 significant
/// digits; skipped cells leave their metrics empty and name the reason.
pub fn sweep_csv(cells: &[SweepCell], provenance: &[(String, String)]) -> String {
    let fmt = |v: Option<f64>| v.map(crate::jsonfmt::format_float).unwrap_or_default();
    let mut out = String::new();
    for (k, v) in provenance {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str("z_F,phi_F,gamma,s_mlp,s_mp,diff,omega_mlp,t_mlp,omega_mp,skip_reason\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            crate::jsonfmt::format_float(c.z_f),
            crate::jsonfmt::format_float(c.phi_f),
            crate::jsonfmt::format_float(c.gamma),
            fmt(c.s_mlp),
            fmt(c.s_mp),
            fmt(c.diff),
            fmt(c.omega_mlp),
            fmt(c.t_mlp),
            fmt(c.omega_mp),
            c.skip_reason.clone().unwrap_or_default()
        ));
    }
    out
}
