//! Deterministic single-qubit state evolution on the Bloch sphere.
//!
//! The qubit Hamiltonian is `(epsilon/2) sigma_z - (Omega/2) sigma_x` plus a
//! dephasing coupling `g xi(t) sigma_z` to a white-noise field `xi`. All
//! frequencies are in units of the level splitting `epsilon` and all times in
//! `1/epsilon`. Three integrators live here:
//!
//! * [`unravelled_step`] — the second-order noise-conditioned map used for
//!   stochastic trajectories,
//! * [`ito_mean_step`] / [`lindblad_evolve`] — explicit Euler on the averaged
//!   (Lindblad) equations with dephasing rate `gamma = 2 g^2 kappa`,
//! * [`exact_rotation_step`] — the exact axis-angle rotation, used as an
//!   oracle for the truncated maps and for endpoint checks.

use crate::error::{Error, Result};
use crate::pulse::ControlPulse;

/// Tolerance on `||q| - 1|` for states that must be pure.
pub const PURITY_TOL: f64 = 1e-9;

/// Qubit state as a real 3-vector; pure states lie on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    /// Ground state of the bare Hamiltonian, the south pole.
    pub const GROUND: BlochVector = BlochVector {
        x: 0.0,
        y: 0.0,
        z: -1.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector { x, y, z }
    }

    /// Pure state at polar height `z` and azimuth `phi`.
    pub fn from_z_phi(z: f64, phi: f64) -> Self {
        let r = (1.0 - z * z).max(0.0).sqrt();
        BlochVector {
            x: r * phi.cos(),
            y: r * phi.sin(),
            z,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &BlochVector) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(&self, other: &BlochVector) -> BlochVector {
        BlochVector {
            x: self.y * other.z - self.z * other.y,
            y: self.z * other.x - self.x * other.z,
            z: self.x * other.y - self.y * other.x,
        }
    }

    pub fn scaled(&self, s: f64) -> BlochVector {
        BlochVector::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn sub(&self, other: &BlochVector) -> BlochVector {
        BlochVector::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn is_pure(&self) -> bool {
        (self.norm() - 1.0).abs() <= PURITY_TOL
    }

    /// Errors with [`Error::NonPureTarget`] unless the state is on the unit
    /// sphere within [`PURITY_TOL`].
    pub fn require_pure(&self) -> Result<()> {
        if self.is_pure() {
            Ok(())
        } else {
            Err(Error::NonPureTarget { norm: self.norm() })
        }
    }
}

/// Physical constants of the dephasing model. `gamma` is derived and kept
/// equal to `2 g^2 kappa` by construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    /// Level splitting; the unit of frequency (z-rotation rate).
    pub epsilon: f64,
    /// System-bath coupling strength.
    pub g: f64,
    /// Noise spectral density.
    pub kappa: f64,
    /// Dephasing rate, `2 g^2 kappa`.
    pub gamma: f64,
}

impl SystemParams {
    pub fn new(epsilon: f64, g: f64, kappa: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::Invalid(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if !g.is_finite() || g < 0.0 {
            return Err(Error::Invalid(format!("g must be >= 0, got {g}")));
        }
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(Error::Invalid(format!("kappa must be > 0, got {kappa}")));
        }
        Ok(SystemParams {
            epsilon,
            g,
            kappa,
            gamma: 2.0 * g * g * kappa,
        })
    }

    /// Builds parameters from a dephasing rate with `kappa = 1`, solving
    /// `gamma = 2 g^2 kappa` for the coupling.
    pub fn from_gamma(epsilon: f64, gamma: f64) -> Result<Self> {
        Self::from_gamma_kappa(epsilon, gamma, 1.0)
    }

    pub fn from_gamma_kappa(epsilon: f64, gamma: f64, kappa: f64) -> Result<Self> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::Invalid(format!("gamma must be >= 0, got {gamma}")));
        }
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(Error::Invalid(format!("kappa must be > 0, got {kappa}")));
        }
        let g = (gamma / (2.0 * kappa)).sqrt();
        Self::new(epsilon, g, kappa)
    }

    /// Effective splitting under a noise sample: `epsilon + 2 g xi`.
    #[inline]
    pub fn effective_epsilon(&self, xi: f64) -> f64 {
        self.epsilon + 2.0 * self.g * xi
    }
}

/// Conjugate (costate) vector of the variational equations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugateVector {
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl ConjugateVector {
    pub fn new(px: f64, py: f64, pz: f64) -> Self {
        ConjugateVector { px, py, pz }
    }

    pub const ZERO: ConjugateVector = ConjugateVector {
        px: 0.0,
        py: 0.0,
        pz: 0.0,
    };
}

/// Qubit fidelity to a pure target, `(1 + q . q_F) / 2`.
///
/// Affine in `q`, so the fidelity of an ensemble mean equals the mean of the
/// per-member fidelities.
pub fn fidelity(q: &BlochVector, target: &BlochVector) -> Result<f64> {
    target.require_pure()?;
    Ok(fidelity_unchecked(q, target))
}

/// Fidelity without the purity check, for hot loops that validated the
/// target once up front.
#[inline]
pub fn fidelity_unchecked(q: &BlochVector, target: &BlochVector) -> f64 {
    0.5 * (1.0 + q.dot(target))
}

/// Second-order noise-conditioned state map.
///
/// With `e = epsilon + 2 g xi`, the update is the order-`dt^2` truncation of
/// the rotation generated by the unravelled Hamiltonian:
///
/// ```text
/// x' = x - dt y e - (dt^2/2)(z W e + x e^2)
/// y' = y + dt (x e + z W) - (dt^2/2)(y W^2 + y e^2)
/// z' = z - dt y W - (dt^2/2)(x W e + z W^2)
/// ```
///
/// No renormalization is applied; the residual norm drift is exactly
/// `dt^4 |M^2 q|^2 / 4` per step (quartic in `dt`).
#[inline]
pub fn unravelled_step(
    q: &BlochVector,
    xi: f64,
    omega: f64,
    params: &SystemParams,
    dt: f64,
) -> BlochVector {
    let e = params.effective_epsilon(xi);
    let h = 0.5 * dt * dt;
    BlochVector {
        x: q.x - dt * q.y * e - h * (q.z * omega * e + q.x * e * e),
        y: q.y + dt * (q.x * e + q.z * omega) - h * (q.y * omega * omega + q.y * e * e),
        z: q.z - dt * q.y * omega - h * (q.x * omega * e + q.z * omega * omega),
    }
}

/// Exact axis-angle rotation by `|w| dt` about `w = (-Omega, 0, e)`.
///
/// Norm-preserving to machine precision; the oracle for the truncated maps.
pub fn exact_rotation_step(
    q: &BlochVector,
    xi: f64,
    omega: f64,
    params: &SystemParams,
    dt: f64,
) -> BlochVector {
    let e = params.effective_epsilon(xi);
    rotate_about(q, -omega, e, dt)
}

/// Rodrigues rotation of `q` by angle `|(wx, 0, wz)| * dt`.
pub(crate) fn rotate_about(q: &BlochVector, wx: f64, wz: f64, dt: f64) -> BlochVector {
    let wn = (wx * wx + wz * wz).sqrt();
    if wn == 0.0 {
        return *q;
    }
    let kx = wx / wn;
    let kz = wz / wn;
    let theta = wn * dt;
    let (s, c) = theta.sin_cos();
    // k x q with ky = 0
    let cxv = BlochVector::new(-kz * q.y, kz * q.x - kx * q.z, kx * q.y);
    let kdq = kx * q.x + kz * q.z;
    let omc = 1.0 - c;
    BlochVector {
        x: q.x * c + cxv.x * s + kx * kdq * omc,
        y: q.y * c + cxv.y * s,
        z: q.z * c + cxv.z * s + kz * kdq * omc,
    }
}

/// One explicit Euler step of the averaged (Ito mean-path) equations:
///
/// ```text
/// x' = x - dt (y eps + gamma x)
/// y' = y + dt (x eps + z W - gamma y)
/// z' = z - dt y W
/// ```
#[inline]
pub fn ito_mean_step(q: &BlochVector, omega: f64, params: &SystemParams, dt: f64) -> BlochVector {
    let eps = params.epsilon;
    let gamma = params.gamma;
    BlochVector {
        x: q.x - dt * (q.y * eps + gamma * q.x),
        y: q.y + dt * (q.x * eps + q.z * omega - gamma * q.y),
        z: q.z - dt * q.y * omega,
    }
}

/// Integrates the mean-path equations across a whole pulse and returns the
/// final averaged state.
///
/// The step must tile every pulse segment to within one part in 1e6;
/// otherwise [`Error::SegmentGridMismatch`] is returned.
pub fn lindblad_evolve(
    q0: &BlochVector,
    pulse: &ControlPulse,
    params: &SystemParams,
    dt: f64,
) -> Result<BlochVector> {
    let steps = pulse.steps_per_segment(dt)?;
    let mut q = *q0;
    for (seg, &n) in pulse.segments().iter().zip(steps.iter()) {
        for _ in 0..n {
            q = ito_mean_step(&q, seg.omega, params, dt);
        }
    }
    Ok(q)
}

/// Exact mean-path endpoint: one matrix exponential per pulse segment
/// instead of Euler stepping. Step-size free, so it stays trustworthy for
/// drives fast enough to destabilize the explicit scheme; the oracle for
/// [`lindblad_evolve`] and the evaluator behind wide-range drive scans.
pub fn lindblad_evolve_exact(
    q0: &BlochVector,
    pulse: &ControlPulse,
    params: &SystemParams,
) -> BlochVector {
    let mut q = *q0;
    for seg in pulse.segments() {
        let m = mean_path_propagator(seg.omega, params, seg.duration);
        q = apply3(&m, &q);
    }
    q
}

/// `exp(A t)` for the mean-path generator
/// `A = [[-gamma, -eps, 0], [eps, -gamma, W], [0, -W, 0]]`.
pub fn mean_path_propagator(omega: f64, params: &SystemParams, duration: f64) -> [[f64; 3]; 3] {
    let a = [
        [-params.gamma, -params.epsilon, 0.0],
        [params.epsilon, -params.gamma, omega],
        [0.0, -omega, 0.0],
    ];
    expm3(&a, duration)
}

fn apply3(m: &[[f64; 3]; 3], q: &BlochVector) -> BlochVector {
    BlochVector {
        x: m[0][0] * q.x + m[0][1] * q.y + m[0][2] * q.z,
        y: m[1][0] * q.x + m[1][1] * q.y + m[1][2] * q.z,
        z: m[2][0] * q.x + m[2][1] * q.y + m[2][2] * q.z,
    }
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for (i, row) in c.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    c
}

/// Matrix exponential of `A t` by scaling-and-squaring with a Taylor core.
fn expm3(a: &[[f64; 3]; 3], t: f64) -> [[f64; 3]; 3] {
    let norm: f64 = a
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        * t.abs();
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let h = t / f64::from(1u32 << squarings);

    // Taylor to machine precision at |A h| <= 0.25
    let mut result = [[0.0; 3]; 3];
    let mut term = [[0.0; 3]; 3];
    for i in 0..3 {
        result[i][i] = 1.0;
        term[i][i] = 1.0;
    }
    for k in 1..=13 {
        term = mat_mul(&term, a);
        let scale = h / k as f64;
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result);
    }
    result
}
