//! Ising spin chain in a graded field: diagonal energies, single-spin
//! transition frequencies and parameter conversions.
//!
//! Units: the Ising constant `J` is the frequency unit (value 1 by
//! convention), times are in units of `1/J` and `ħ = 1`. The Zeeman term uses
//! `I^z = +1/2` for `|0⟩`, so `|00…0⟩` is the ground state.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::basis::BasisState;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Below this spacing (in units of `J`) the single-transition picture used by
/// the pulse engine stops being reliable.
pub const MIN_RELIABLE_SPACING: f64 = 20.0;

/// Default Larmor frequency of spin 0, in units of `J`. Only frequency
/// differences enter the dynamics; this just keeps every transition positive.
pub const DEFAULT_OMEGA0: f64 = 1000.0;

pub const DEFAULT_DELTA_OMEGA: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainParams<T> {
    n: usize,
    j: T,
    omega: Vec<T>,
    delta_omega: T,
}

impl<T: Real> ChainParams<T> {
    /// Chain with explicit Larmor frequencies. `delta_omega` is the nominal
    /// neighbor spacing used for addressing windows.
    pub fn new(omega: Vec<T>, j: T, delta_omega: T) -> Result<Self> {
        let n = omega.len();
        if n < 2 {
            return Err(Error::invalid(format!("a chain needs at least 2 spins, got {n}")));
        }
        if !(delta_omega > T::zero()) || !delta_omega.is_finite() {
            return Err(Error::invalid(format!("spacing must be positive, got {delta_omega}")));
        }
        if !(j > T::zero()) || !j.is_finite() {
            return Err(Error::invalid(format!("Ising constant must be positive, got {j}")));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("Larmor frequencies must be finite"));
        }
        if omega.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("Larmor frequencies must increase strictly with the spin index"));
        }
        let params = Self { n, j, omega, delta_omega };
        for w in params.warnings() {
            warn!("{w}");
        }
        Ok(params)
    }

    /// `ω_k = ω_0 + k·δω` with `J = 1`.
    pub fn uniform(n: usize, omega0: T, delta_omega: T) -> Result<Self> {
        let omega = (0..n).map(|k| omega0 + T::from_usize(k).expect("index fits") * delta_omega).collect();
        Self::new(omega, T::one(), delta_omega)
    }

    /// Uniform chain with the default offset and `δω = 100 J`.
    pub fn with_defaults(n: usize) -> Result<Self> {
        Self::uniform(n, T::lit(DEFAULT_OMEGA0), T::lit(DEFAULT_DELTA_OMEGA))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn j(&self) -> T {
        self.j
    }

    pub fn omega(&self) -> &[T] {
        &self.omega
    }

    pub fn omega_k(&self, k: usize) -> T {
        self.omega[k]
    }

    pub fn delta_omega(&self) -> T {
        self.delta_omega
    }

    /// Same chain with every Larmor frequency shifted by `shift`.
    pub fn shifted(&self, shift: T) -> Result<Self> {
        Self::new(self.omega.iter().map(|&w| w + shift).collect(), self.j, self.delta_omega)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ratio = (self.delta_omega / self.j).to_f64_lossless();
        if ratio < MIN_RELIABLE_SPACING {
            out.push(format!(
                "spacing δω/J = {ratio} is below {MIN_RELIABLE_SPACING}; the single-transition approximation degrades"
            ));
        }
        out
    }

    pub(crate) fn check_state(&self, state: &BasisState) -> Result<()> {
        if state.len() != self.n {
            return Err(Error::LengthMismatch { expected: self.n, got: state.len() });
        }
        Ok(())
    }

    pub(crate) fn check_spin(&self, k: usize) -> Result<()> {
        if k >= self.n {
            return Err(Error::IndexOutOfRange { index: k, n: self.n });
        }
        Ok(())
    }

    /// Signed energy change `E(q_k = 1) − E(q_k = 0)` given the current
    /// neighbors of spin `k`.
    #[inline]
    pub(crate) fn excitation_energy(&self, state: &BasisState, k: usize) -> T {
        let mut neighbors = T::zero();
        for nb in [k.checked_sub(1), k.checked_add(1)] {
            if let Some(q) = state.get_or_ground(nb) {
                neighbors = if q { neighbors - T::one() } else { neighbors + T::one() };
            }
        }
        self.omega[k] + self.j * neighbors
    }

    /// All transition frequencies the chain can show, one entry per distinct
    /// value, ascending.
    pub fn resonant_frequency_set(&self) -> Vec<T> {
        let n = self.n;
        let two = T::lit(2.0);
        let mut out = Vec::with_capacity(3 * n - 2);
        for k in [0, n - 1] {
            out.push(self.omega[k] - self.j);
            out.push(self.omega[k] + self.j);
        }
        for k in 1..n - 1 {
            out.push(self.omega[k] - two * self.j);
            out.push(self.omega[k]);
            out.push(self.omega[k] + two * self.j);
        }
        out.sort_by(|a, b| a.partial_cmp(b).expect("finite frequencies"));
        out.dedup();
        out
    }
}

/// Diagonal energy `−½ Σ ω_k σ_k − (J/2) Σ σ_k σ_{k+1}` with `σ_k = 1 − 2 q_k`.
pub fn energy<T: Real>(state: &BasisState, params: &ChainParams<T>) -> Result<T> {
    params.check_state(state)?;
    let sigma = |k: usize| if state.get(k) { -T::one() } else { T::one() };
    let half = T::lit(0.5);
    let zeeman = (0..params.n).fold(T::zero(), |acc, k| acc + params.omega[k] * sigma(k));
    let ising = (0..params.n - 1).fold(T::zero(), |acc, k| acc + sigma(k) * sigma(k + 1));
    Ok(-half * zeeman - half * params.j * ising)
}

/// `|E(flip_k(s)) − E(s)|`, the frequency that drives spin `k` out of `s`.
pub fn transition_frequency<T: Real>(state: &BasisState, k: usize, params: &ChainParams<T>) -> Result<T> {
    params.check_state(state)?;
    params.check_spin(k)?;
    Ok(params.excitation_energy(state, k).abs())
}

pub fn flip(state: &BasisState, k: usize) -> Result<BasisState> {
    state.flip(k)
}

pub fn resonant_frequency_set<T: Real>(params: &ChainParams<T>) -> Vec<T> {
    params.resonant_frequency_set()
}

/// Laboratory parameters in SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabParams {
    /// Base NMR frequency (Hz).
    pub f0: f64,
    /// Neighbor frequency difference (Hz).
    pub delta_f: f64,
    /// Ising constant `J/2π` (Hz).
    pub j_hz: f64,
    /// Chain tilt relative to the field (rad).
    pub theta: f64,
    /// Gyromagnetic ratio (rad s⁻¹ T⁻¹).
    pub gamma: f64,
    /// Field magnitude (T).
    pub b0: f64,
}

impl Default for LabParams {
    fn default() -> Self {
        Self {
            f0: 430.0e6,
            delta_f: 10.0e3,
            j_hz: 100.0,
            theta: (1.0f64 / 3.0f64.sqrt()).acos(),
            gamma: 2.675_221_874_4e8,
            b0: 10.0,
        }
    }
}

impl LabParams {
    /// `γ B₀ / 2π` in Hz.
    pub fn larmor_hz(&self) -> f64 {
        self.gamma * self.b0 / std::f64::consts::TAU
    }

    /// Dimensionless chain: frequencies divided by `J/2π`.
    pub fn to_chain<T: Real>(&self, n: usize) -> Result<ChainParams<T>> {
        if !(self.delta_f > 0.0) || !(self.j_hz > 0.0) {
            return Err(Error::invalid("delta_f and j_hz must be positive"));
        }
        ChainParams::uniform(n, T::lit(self.f0 / self.j_hz), T::lit(self.delta_f / self.j_hz))
    }
}

/// Geometry for the static dipolar field along a straight chain.
#[derive(Clone, Debug, PartialEq)]
pub struct DipoleContext<T> {
    /// Coordinates along the chain axis.
    pub positions: Vec<T>,
    /// z components of the nuclear magnetic moments.
    pub moments: Vec<T>,
    /// Angle between the chain and the field.
    pub theta: T,
}

/// z component of the dipolar field at spin `j` from all other spins.
pub fn dipole_z_field<T: Real>(ctx: &DipoleContext<T>, j: usize) -> Result<T> {
    let n = ctx.positions.len();
    if ctx.moments.len() != n {
        return Err(Error::invalid("positions and moments differ in length"));
    }
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, n });
    }
    let cos = ctx.theta.cos();
    let angular = T::lit(3.0) * cos * cos - T::one();
    let mut sum = T::zero();
    for k in (0..n).filter(|&k| k != j) {
        let r = (ctx.positions[k] - ctx.positions[j]).abs();
        if !(r > T::zero()) {
            return Err(Error::invalid(format!("spins {k} and {j} coincide")));
        }
        sum = sum + ctx.moments[k] / (r * r * r);
    }
    Ok(angular * sum)
}
