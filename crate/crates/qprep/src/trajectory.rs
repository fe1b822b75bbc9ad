//! Stochastic trajectory unravelling and ensemble statistics.
//!
//! Trajectories integrate the second-order noise-conditioned map with one
//! fresh Gaussian sample per step (`xi ~ N(0, kappa/dt)`). Ensembles fan
//! trajectories out over threads with per-trajectory counter-based streams
//! and an order-fixed reduction, so a given `(master_seed, n_total)` always
//! produces bit-identical results.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{fidelity_unchecked, unravelled_step, BlochVector, SystemParams};
use crate::error::{Error, Result};
use crate::pulse::ControlPulse;
use crate::rng::trajectory_stream;

/// Finals are kept in memory up to this count; larger ensembles retain a
/// strided subsample while the running statistics stay exact.
pub const RETAIN_MAX: usize = 1_000_000;

/// One time-discretized realization of the white-noise field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl NoisePath {
    pub fn zeros(n_steps: usize, dt: f64) -> Self {
        NoisePath {
            dt,
            values: vec![0.0; n_steps],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws `n_steps` i.i.d. samples with mean zero and variance `kappa / dt`.
pub fn sample_noise(n_steps: usize, dt: f64, kappa: f64, rng: &mut impl Rng) -> NoisePath {
    let sigma = (kappa / dt).sqrt();
    let values = (0..n_steps)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    NoisePath { dt, values }
}

/// State-independent part of the noise-path log density,
/// `sum_t ( -xi_t^2 dt / 2 kappa )`; the normalization constant is dropped.
/// The zero path is the unique maximum at 0.
pub fn path_log_likelihood(path: &NoisePath, kappa: f64) -> f64 {
    let w = -path.dt / (2.0 * kappa);
    path.values.iter().map(|xi| w * xi * xi).sum()
}

/// Propagates one noisy trajectory, sampling `xi` each step, and returns the
/// final state together with the noise realization that produced it.
pub fn simulate_trajectory(
    q0: &BlochVector,
    pulse: &ControlPulse,
    params: &SystemParams,
    dt: f64,
    rng: &mut impl Rng,
) -> Result<(BlochVector, NoisePath)> {
    let steps = pulse.steps_per_segment(dt)?;
    let n_total: usize = steps.iter().sum();
    let sigma = (params.kappa / dt).sqrt();
    let mut path = NoisePath {
        dt,
        values: Vec::with_capacity(n_total),
    };
    let mut q = *q0;
    for (seg, &n) in pulse.segments().iter().zip(steps.iter()) {
        for _ in 0..n {
            let xi = sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            path.values.push(xi);
            q = unravelled_step(&q, xi, seg.omega, params, dt);
        }
    }
    Ok((q, path))
}

/// Propagates the noise-conditioned map under an externally supplied noise
/// path (e.g. the zero path) instead of sampling.
pub fn evolve_with_noise(
    q0: &BlochVector,
    pulse: &ControlPulse,
    params: &SystemParams,
    path: &NoisePath,
) -> Result<BlochVector> {
    let dt = path.dt;
    let steps = pulse.steps_per_segment(dt)?;
    let n_total: usize = steps.iter().sum();
    if n_total != path.len() {
        return Err(Error::Invalid(format!(
            "noise path has {} samples but the pulse spans {} steps",
            path.len(),
            n_total
        )));
    }
    let mut q = *q0;
    let mut k = 0;
    for (seg, &n) in pulse.segments().iter().zip(steps.iter()) {
        for _ in 0..n {
            q = unravelled_step(&q, path.values[k], seg.omega, params, dt);
            k += 1;
        }
    }
    Ok(q)
}

/// Final state only, no noise retention; the ensemble hot path.
fn simulate_final(
    q0: &BlochVector,
    segments: &[(f64, usize)],
    params: &SystemParams,
    dt: f64,
    renormalize: bool,
    rng: &mut impl Rng,
) -> BlochVector {
    let sigma = (params.kappa / dt).sqrt();
    let mut q = *q0;
    for &(omega, n) in segments {
        for _ in 0..n {
            let xi = sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
            q = unravelled_step(&q, xi, omega, params, dt);
            if renormalize {
                q = q.scaled(1.0 / q.norm());
            }
        }
    }
    q
}

/// Final-state sample set of a trajectory ensemble.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleResult {
    /// Retained final states, in trajectory order (all of them unless
    /// `n_total` exceeds [`RETAIN_MAX`]).
    pub finals: Vec<[f64; 3]>,
    /// Component-wise mean over all `n_total` finals (compensated sums).
    pub mean_final: [f64; 3],
    /// Mean fidelity to `target`, when one is attached.
    pub avg_fidelity: Option<f64>,
    pub target: Option<[f64; 3]>,
    pub n_total: usize,
    pub seed: u64,
    /// Stride of the retained subsample; 1 means every final is present.
    pub retain_stride: usize,
    /// Whether trajectories were projected back onto the unit sphere after
    /// every step.
    pub renormalized: bool,
}

impl EnsembleResult {
    pub fn mean_final_vec(&self) -> BlochVector {
        BlochVector::new(self.mean_final[0], self.mean_final[1], self.mean_final[2])
    }

    pub fn final_vec(&self, i: usize) -> BlochVector {
        let f = self.finals[i];
        BlochVector::new(f[0], f[1], f[2])
    }

    /// Per-component sample standard deviation of the retained finals.
    pub fn component_std(&self) -> [f64; 3] {
        let n = self.finals.len().max(1) as f64;
        let mut out = [0.0; 3];
        for c in 0..3 {
            let mean = self.finals.iter().map(|f| f[c]).sum::<f64>() / n;
            let var = self
                .finals
                .iter()
                .map(|f| (f[c] - mean) * (f[c] - mean))
                .sum::<f64>()
                / n;
            out[c] = var.sqrt();
        }
        out
    }
}

/// Neumaier-compensated accumulator; keeps order-fixed reductions exact
/// enough for the mean-fidelity affinity identity to hold at 1e-12.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Kahan) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Clone, Default)]
struct ChunkStats {
    sx: Kahan,
    sy: Kahan,
    sz: Kahan,
    sfid: Kahan,
    retained: Vec<[f64; 3]>,
}

/// Simulates `n_total` independent trajectories. Trajectory `i` draws from
/// the stream `(master_seed, i)`, so the result does not depend on the
/// degree of parallelism.
///
/// Trajectories apply the truncated map verbatim; the small truncation norm
/// drift stays in the finals. See [`simulate_ensemble_renormalized`] when
/// each final must be an exactly pure state.
pub fn simulate_ensemble(
    q0: &BlochVector,
    pulse: &ControlPulse,
    params: &SystemParams,
    dt: f64,
    n_total: usize,
    master_seed: u64,
    target: Option<BlochVector>,
) -> Result<EnsembleResult> {
    simulate_ensemble_opts(q0, pulse, params, dt, n_total, master_seed, target, false)
}

/// [`simulate_ensemble`] with per-step projection back onto the unit
/// sphere. The unravelled evolution is unitary, so pure trajectories are
/// exact; the projection removes the truncation drift that otherwise
/// inflates fidelities near a success threshold.
pub fn simulate_ensemble_renormalized(
    q0: &BlochVector,
    pulse: &ControlPulse,
    params: &SystemParams,
    dt: f64,
    n_total: usize,
    master_seed: u64,
    target: Option<BlochVector>,
) -> Result<EnsembleResult> {
    simulate_ensemble_opts(q0, pulse, params, dt, n_total, master_seed, target, true)
}

#[allow(clippy::too_many_arguments)]
fn simulate_ensemble_opts(
    q0: &BlochVector,
    pulse: &ControlPulse,
    params: &SystemParams,
    dt: f64,
    n_total: usize,
    master_seed: u64,
    target: Option<BlochVector>,
    renormalize: bool,
) -> Result<EnsembleResult> {
    if n_total == 0 {
        return Err(Error::Invalid("ensemble size must be >= 1".into()));
    }
    if let Some(t) = &target {
        t.require_pure()?;
    }
    let steps = pulse.steps_per_segment(dt)?;
    let segments: Vec<(f64, usize)> = pulse
        .segments()
        .iter()
        .zip(steps.iter())
        .map(|(s, &n)| (s.omega, n))
        .collect();

    let stride = n_total.div_ceil(RETAIN_MAX);
    const CHUNK: usize = 4096;
    let n_chunks = n_total.div_ceil(CHUNK);

    let partials: Vec<ChunkStats> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n_total);
            let mut stats = ChunkStats::default();
            for i in lo..hi {
                let mut rng = trajectory_stream(master_seed, i as u64);
                let q = simulate_final(q0, &segments, params, dt, renormalize, &mut rng);
                stats.sx.add(q.x);
                stats.sy.add(q.y);
                stats.sz.add(q.z);
                if let Some(t) = &target {
                    stats.sfid.add(fidelity_unchecked(&q, t));
                }
                if i % stride == 0 {
                    stats.retained.push([q.x, q.y, q.z]);
                }
            }
            stats
        })
        .collect();

    let mut total = ChunkStats::default();
    let mut finals = Vec::with_capacity(n_total.div_ceil(stride));
    for p in &partials {
        total.sx.merge(&p.sx);
        total.sy.merge(&p.sy);
        total.sz.merge(&p.sz);
        total.sfid.merge(&p.sfid);
        finals.extend_from_slice(&p.retained);
    }

    let inv = 1.0 / n_total as f64;
    Ok(EnsembleResult {
        finals,
        mean_final: [
            total.sx.value() * inv,
            total.sy.value() * inv,
            total.sz.value() * inv,
        ],
        avg_fidelity: target.map(|_| total.sfid.value() * inv),
        target: target.map(|t| [t.x, t.y, t.z]),
        n_total,
        seed: master_seed,
        retain_stride: stride,
        renormalized: renormalize,
    })
}

/// Success-rate summary: the share of finals within an infidelity tolerance
/// of the target.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SuccessRateReport {
    pub delta: f64,
    pub n_success: usize,
    pub n_total: usize,
    pub rate_percent: f64,
}

/// Counts finals with `F(q, target) >= 1 - delta` and reports the percentage.
pub fn success_rate(
    result: &EnsembleResult,
    target: &BlochVector,
    delta: f64,
) -> Result<SuccessRateReport> {
    target.require_pure()?;
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Invalid(format!(
            "delta must be in (0, 1], got {delta}"
        )));
    }
    let n = result.finals.len();
    let n_success = result
        .finals
        .iter()
        .filter(|f| fidelity_unchecked(&BlochVector::new(f[0], f[1], f[2]), target) >= 1.0 - delta)
        .count();
    Ok(SuccessRateReport {
        delta,
        n_success,
        n_total: n,
        rate_percent: 100.0 * n_success as f64 / n as f64,
    })
}

/// Component axis selector for histograms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn component(&self, f: &[f64; 3]) -> f64 {
        match self {
            Axis::X => f[0],
            Axis::Y => f[1],
            Axis::Z => f[2],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Invalid(format!("unknown axis {other:?}"))),
        }
    }
}

/// Fixed-range histogram over `[-1, 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Histogram {
    pub axis: Axis,
    /// `n_bins + 1` edges from -1 to 1.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Default bin count; odd so that one bin is centered on zero.
pub const DEFAULT_HIST_BINS: usize = 61;

/// Bins one Bloch component of every retained final over `[-1, 1]`.
/// Out-of-range values (truncation drift) land in the edge bins, so the
/// counts always sum to the number of finals.
pub fn final_state_histogram(result: &EnsembleResult, axis: Axis, n_bins: usize) -> Histogram {
    let n_bins = n_bins.max(1);
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| -1.0 + 2.0 * i as f64 / n_bins as f64)
        .collect();
    let mut counts = vec![0u64; n_bins];
    for f in &result.finals {
        let v = axis.component(f);
        let raw = ((v + 1.0) / 2.0 * n_bins as f64).floor() as isize;
        let idx = raw.clamp(0, n_bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    Histogram {
        axis,
        edges,
        counts,
    }
}

impl Histogram {
    /// Center of the most populated bin.
    pub fn mode_center(&self) -> f64 {
        let (i, _) = self
            .counts
            .iter()
            .enumerate()
            .max_by_key(|(_, &c)| c)
            .unwrap_or((0, &0));
        0.5 * (self.edges[i] + self.edges[i + 1])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}
