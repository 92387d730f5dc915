//! Sparse propagation of the chain wavefunction through rectangular rf pulses.
//!
//! Amplitudes are kept in the interaction picture,
//! `Ψ = Σ_p C_p |p⟩ exp(−i E_p t)`. A pulse near the Larmor frequency of spin
//! `k` couples only pairs of basis states that differ in spin `k`; every such
//! pair evolves under the exact two-level solution with its own detuning.
//! Spins whose Larmor frequency is a full spacing away are not driven.

use num_complex::Complex;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::basis::BasisState;
use crate::chain::ChainParams;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Probability below which tracked states are dropped. This is the
/// normalized-convention equivalent of a `1e-6` cut on doubled probabilities.
pub const DEFAULT_PRUNE_THRESHOLD: f64 = 5.0e-7;

pub const DEFAULT_NORM_TOLERANCE: f64 = 1.0e-9;

const PARALLEL_MIN_PAIRS: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Pi,
    HalfPi,
    Custom,
}

impl PulseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PulseKind::Pi => "pi",
            PulseKind::HalfPi => "half_pi",
            PulseKind::Custom => "custom",
        }
    }

    /// Nominal rotation angle `Ωτ`, if the kind fixes one.
    pub fn rotation<T: Real>(self) -> Option<T> {
        match self {
            PulseKind::Pi => Some(T::PI()),
            PulseKind::HalfPi => Some(T::FRAC_PI_2()),
            PulseKind::Custom => None,
        }
    }
}

/// Rectangular rf pulse. Frequencies in units of `J`, duration in `1/J`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse<T> {
    pub omega: T,
    pub rabi: T,
    pub tau: T,
    pub kind: PulseKind,
}

impl<T: Real> Pulse<T> {
    /// Pulse whose duration is fitted to the nominal rotation of `kind`.
    pub fn with_rotation(kind: PulseKind, omega: T, rabi: T) -> Result<Self> {
        let angle = kind
            .rotation::<T>()
            .ok_or_else(|| Error::invalid("custom pulses need an explicit duration"))?;
        Self { omega, rabi, tau: angle / rabi, kind }.validated()
    }

    pub fn pi(omega: T, rabi: T) -> Result<Self> {
        Self::with_rotation(PulseKind::Pi, omega, rabi)
    }

    pub fn half_pi(omega: T, rabi: T) -> Result<Self> {
        Self::with_rotation(PulseKind::HalfPi, omega, rabi)
    }

    pub fn custom(omega: T, rabi: T, tau: T) -> Result<Self> {
        Self { omega, rabi, tau, kind: PulseKind::Custom }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.rabi > T::zero()) || !self.rabi.is_finite() {
            return Err(Error::invalid(format!("Rabi frequency must be positive, got {}", self.rabi)));
        }
        if !(self.tau > T::zero()) || !self.tau.is_finite() {
            return Err(Error::invalid(format!("pulse duration must be positive, got {}", self.tau)));
        }
        if !self.omega.is_finite() {
            return Err(Error::invalid("pulse frequency must be finite"));
        }
        if let Some(angle) = self.kind.rotation::<T>() {
            let err = (self.rabi * self.tau - angle).abs();
            if err > T::check_tolerance(1e-12) * angle {
                return Err(Error::invalid(format!(
                    "{} pulse has rotation {} instead of {angle}",
                    self.kind.as_str(),
                    self.rabi * self.tau
                )));
            }
        }
        Ok(self)
    }
}

/// Exact two-level propagator for one pulse acting on a pair `(m, p)` with
/// `E_p > E_m`, from time `t0` to `t0 + τ`:
///
/// ```text
/// [C_m']   [a_mm  a_mp] [C_m]
/// [C_p'] = [a_pm  a_pp] [C_p]
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairPropagator<T> {
    pub a_mm: Complex<T>,
    pub a_mp: Complex<T>,
    pub a_pm: Complex<T>,
    pub a_pp: Complex<T>,
    /// `Δ = E_p − E_m − ω`.
    pub delta: T,
    /// `Ω_e = √(Ω² + Δ²)`.
    pub omega_e: T,
}

impl<T: Real> PairPropagator<T> {
    pub fn new(delta: T, rabi: T, tau: T, t0: T) -> Self {
        let half = T::lit(0.5);
        let omega_e = rabi.hypot(delta);
        let (s, c) = (half * omega_e * tau).sin_cos();
        let (r, d) = if omega_e > T::zero() { (rabi / omega_e, delta / omega_e) } else { (T::zero(), T::zero()) };
        let i = Complex::<T>::i();
        let drift = half * delta * tau;
        let frame = delta * t0 + drift;
        let cross = i * Complex::from(r * s);
        Self {
            a_mm: Complex::new(c, d * s) * Complex::cis(-drift),
            a_mp: cross * Complex::cis(-frame),
            a_pm: cross * Complex::cis(frame),
            a_pp: Complex::new(c, -d * s) * Complex::cis(drift),
            delta,
            omega_e,
        }
    }

    pub fn for_pulse(delta: T, pulse: &Pulse<T>, t0: T) -> Self {
        Self::new(delta, pulse.rabi, pulse.tau, t0)
    }

    /// Largest entry of `U†U − I` in absolute value.
    pub fn unitarity_error(&self) -> T {
        let m = [[self.a_mm, self.a_mp], [self.a_pm, self.a_pp]];
        let mut worst = T::zero();
        for a in 0..2 {
            for b in 0..2 {
                let dot = m[0][a].conj() * m[0][b] + m[1][a].conj() * m[1][b];
                let target = if a == b { Complex::from(T::one()) } else { Complex::from(T::zero()) };
                worst = worst.max((dot - target).norm());
            }
        }
        worst
    }

    /// Copy with the diagonal scaled by `factor`. Used to check that the
    /// integrity checks catch a broken propagator.
    pub fn corrupted(mut self, factor: T) -> Self {
        self.a_mm = self.a_mm * factor;
        self.a_pp = self.a_pp * factor;
        self
    }
}

/// Applies a pair propagator to `(C_m, C_p)`. The start time `t0` is baked
/// into `prop` (see [`PairPropagator::new`]).
#[inline]
pub fn two_level_step<T: Real>(c_m: Complex<T>, c_p: Complex<T>, prop: &PairPropagator<T>) -> (Complex<T>, Complex<T>) {
    (prop.a_mm * c_m + prop.a_mp * c_p, prop.a_pm * c_m + prop.a_pp * c_p)
}

/// Spin whose Larmor frequency is closest to the pulse frequency.
///
/// Fails when two spins are equally close or when the closest one is more than
/// a quarter spacing away.
pub fn target_spin<T: Real>(pulse: &Pulse<T>, params: &ChainParams<T>) -> Result<usize> {
    let omega = params.omega();
    let idx = omega.partition_point(|&w| w < pulse.omega);
    let mut best: Option<(usize, T)> = None;
    let mut tie = false;
    for k in [idx.checked_sub(1), Some(idx)].into_iter().flatten().filter(|&k| k < omega.len()) {
        let dist = (pulse.omega - omega[k]).abs();
        match best {
            Some((_, d)) if dist == d => tie = true,
            Some((_, d)) if dist > d => {}
            _ => {
                best = Some((k, dist));
                tie = false;
            }
        }
    }
    let (k, dist) = best.ok_or_else(|| Error::Addressing("empty chain".into()))?;
    if tie {
        return Err(Error::Addressing(format!(
            "pulse frequency {} is equidistant from two Larmor frequencies",
            pulse.omega
        )));
    }
    let window = params.delta_omega() * T::lit(0.25);
    if dist > window {
        return Err(Error::Addressing(format!(
            "pulse frequency {} is {dist} from the nearest Larmor frequency (spin {k}); window is {window}",
            pulse.omega
        )));
    }
    Ok(k)
}

/// Upper partner of `lower` under a flip of spin `k`, and the pulse detuning
/// `Δ = E_upper − E_lower − ω`.
pub fn pair_detuning<T: Real>(
    lower: &BasisState,
    k: usize,
    pulse: &Pulse<T>,
    params: &ChainParams<T>,
) -> Result<(BasisState, T)> {
    params.check_state(lower)?;
    params.check_spin(k)?;
    let up = params.excitation_energy(lower, k);
    let gap = if lower.get(k) { -up } else { up };
    if gap == T::zero() {
        return Err(Error::Internal(format!("spin {k} flip of {lower:?} is degenerate")));
    }
    if gap < T::zero() {
        return Err(Error::invalid(format!("{lower:?} is the upper member of its spin-{k} pair")));
    }
    Ok((lower.flip(k)?, gap - pulse.omega))
}

/// Basis state first tracked during the pulse with the given ordinal
/// (`None` for states present before any pulse).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationRecord {
    pub state: BasisState,
    pub pulse: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig<T> {
    /// States with `|C|²` below this are dropped after each pulse.
    pub prune_threshold: T,
    /// Allowed drift of `Σ|C|² + pruned` away from 1 before pruning.
    pub norm_tolerance: T,
    pub parallel: bool,
}

impl<T: Real> Default for EngineConfig<T> {
    fn default() -> Self {
        Self::with_threshold(T::lit(DEFAULT_PRUNE_THRESHOLD))
    }
}

impl<T: Real> EngineConfig<T> {
    pub fn with_threshold(prune_threshold: T) -> Self {
        Self { prune_threshold, norm_tolerance: T::check_tolerance(DEFAULT_NORM_TOLERANCE), parallel: true }
    }

    /// No pruning at all.
    pub fn exact() -> Self {
        Self::with_threshold(T::zero())
    }
}

/// Sparse interaction-picture wavefunction with a time cursor and a log of
/// when each basis state was first tracked.
#[derive(Clone, Debug)]
pub struct SparseState<T> {
    n: usize,
    amps: FxHashMap<BasisState, Complex<T>>,
    t: T,
    pulses_applied: usize,
    pruned_mass: T,
    gen_log: Vec<GenerationRecord>,
    first_seen: FxHashMap<BasisState, usize>,
}

impl<T: Real> SparseState<T> {
    pub fn from_basis(state: BasisState) -> Self {
        let n = state.len();
        let mut amps = FxHashMap::default();
        amps.insert(state.clone(), Complex::from(T::one()));
        let mut first_seen = FxHashMap::default();
        first_seen.insert(state.clone(), 0);
        Self {
            n,
            amps,
            t: T::zero(),
            pulses_applied: 0,
            pruned_mass: T::zero(),
            gen_log: vec![GenerationRecord { state, pulse: None }],
            first_seen,
        }
    }

    /// Superposition at `t = 0`; must be normalized.
    pub fn from_amplitudes(n: usize, entries: impl IntoIterator<Item = (BasisState, Complex<T>)>) -> Result<Self> {
        let mut amps = FxHashMap::default();
        for (s, c) in entries {
            if s.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: s.len() });
            }
            if c.norm_sqr() > T::zero() {
                amps.insert(s, c);
            }
        }
        let mut state = Self {
            n,
            amps,
            t: T::zero(),
            pulses_applied: 0,
            pruned_mass: T::zero(),
            gen_log: Vec::new(),
            first_seen: FxHashMap::default(),
        };
        let norm = state.norm_sqr();
        if (norm - T::one()).abs() > T::check_tolerance(DEFAULT_NORM_TOLERANCE) {
            return Err(Error::invalid(format!("initial amplitudes have norm {norm}, expected 1")));
        }
        let mut keys: Vec<BasisState> = state.amps.keys().cloned().collect();
        keys.sort_unstable();
        for s in keys {
            state.log_new(s, None);
        }
        Ok(state)
    }

    fn log_new(&mut self, state: BasisState, pulse: Option<usize>) {
        if !self.first_seen.contains_key(&state) {
            self.first_seen.insert(state.clone(), self.gen_log.len());
            self.gen_log.push(GenerationRecord { state, pulse });
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn pulses_applied(&self) -> usize {
        self.pulses_applied
    }

    pub fn pruned_mass(&self) -> T {
        self.pruned_mass
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn amplitude(&self, state: &BasisState) -> Complex<T> {
        self.amps.get(state).copied().unwrap_or_else(|| Complex::from(T::zero()))
    }

    pub fn probability(&self, state: &BasisState) -> T {
        self.amplitude(state).norm_sqr()
    }

    pub fn contains(&self, state: &BasisState) -> bool {
        self.amps.contains_key(state)
    }

    pub fn gen_log(&self) -> &[GenerationRecord] {
        &self.gen_log
    }

    /// Position of `state` in the generation log.
    pub fn generation_index(&self, state: &BasisState) -> Option<usize> {
        self.first_seen.get(state).copied()
    }

    /// Tracked amplitudes in canonical basis order.
    pub fn sorted_entries(&self) -> Vec<(&BasisState, Complex<T>)> {
        let mut v: Vec<_> = self.amps.iter().map(|(s, &c)| (s, c)).collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// `Σ|C|²` over tracked states, summed in canonical order.
    pub fn norm_sqr(&self) -> T {
        self.sorted_entries().iter().fold(T::zero(), |acc, (_, c)| acc + c.norm_sqr())
    }

    /// Evolves the state through one pulse.
    pub fn apply_pulse(&mut self, pulse: &Pulse<T>, params: &ChainParams<T>, cfg: &EngineConfig<T>) -> Result<()> {
        self.apply_pulse_with(pulse, params, cfg, |p| p)
    }

    /// As [`apply_pulse`](Self::apply_pulse), passing every propagator through
    /// `hook` first.
    pub fn apply_pulse_with(
        &mut self,
        pulse: &Pulse<T>,
        params: &ChainParams<T>,
        cfg: &EngineConfig<T>,
        hook: impl Fn(PairPropagator<T>) -> PairPropagator<T>,
    ) -> Result<()> {
        if self.n != params.n() {
            return Err(Error::LengthMismatch { expected: params.n(), got: self.n });
        }
        let k = target_spin(pulse, params)?;

        // One propagator per neighbor configuration of spin k.
        let left = (k + 1 < self.n).then_some(k + 1);
        let right = k.checked_sub(1);
        let mut props = [None; 4];
        for (slot, prop) in props.iter_mut().enumerate() {
            let ql = slot & 2 != 0;
            let qr = slot & 1 != 0;
            if (ql && left.is_none()) || (qr && right.is_none()) {
                continue;
            }
            let mut probe = BasisState::zeros(self.n);
            if ql {
                probe.toggle(left.unwrap());
            }
            if qr {
                probe.toggle(right.unwrap());
            }
            let up = params.excitation_energy(&probe, k);
            if up == T::zero() {
                return Err(Error::Internal(format!("spin {k} transition is degenerate")));
            }
            // `up > 0`: the q_k = 0 member is the lower state.
            let zero_is_lower = up > T::zero();
            let delta = up.abs() - pulse.omega;
            *prop = Some((zero_is_lower, hook(PairPropagator::for_pulse(delta, pulse, self.t))));
        }
        let slot_of = |s: &BasisState| {
            let ql = left.is_some_and(|l| s.get(l));
            let qr = right.is_some_and(|r| s.get(r));
            (usize::from(ql) << 1) | usize::from(qr)
        };

        let mut keys: Vec<BasisState> = self.amps.keys().map(|s| s.with_bit(k, false)).collect();
        keys.sort_unstable();
        keys.dedup();

        let zero = Complex::from(T::zero());
        let amps = &self.amps;
        let step = |key: &BasisState| {
            let partner = key.with_bit(k, true);
            let c0 = amps.get(key).copied().unwrap_or(zero);
            let c1 = amps.get(&partner).copied().unwrap_or(zero);
            let (zero_is_lower, prop) = props[slot_of(key)].expect("slot populated for every reachable neighbor pattern");
            let (n0, n1) = if zero_is_lower {
                two_level_step(c0, c1, &prop)
            } else {
                let (m, p) = two_level_step(c1, c0, &prop);
                (p, m)
            };
            (n0, partner, n1)
        };
        let stepped: Vec<(Complex<T>, BasisState, Complex<T>)> = if cfg.parallel && keys.len() >= PARALLEL_MIN_PAIRS {
            keys.par_iter().with_min_len(PARALLEL_MIN_PAIRS / 4).map(step).collect()
        } else {
            keys.iter().map(step).collect()
        };

        let total = stepped
            .iter()
            .fold(self.pruned_mass, |acc, (a, _, b)| acc + a.norm_sqr() + b.norm_sqr());
        if (total - T::one()).abs() > cfg.norm_tolerance {
            return Err(Error::NumericalIntegrity(format!(
                "norm drifted to {total} on spin {k} (tolerance {})",
                cfg.norm_tolerance
            )));
        }

        let ordinal = self.pulses_applied;
        let mut next = FxHashMap::with_capacity_and_hasher(stepped.len() * 2, Default::default());
        let mut pruned = self.pruned_mass;
        let mut fresh = Vec::new();
        let seen: &FxHashMap<BasisState, usize> = &self.first_seen;
        let mut admit = |state: BasisState, c: Complex<T>| {
            let p = c.norm_sqr();
            if p == T::zero() || p < cfg.prune_threshold {
                pruned = pruned + p;
            } else {
                if !seen.contains_key(&state) {
                    fresh.push(state.clone());
                }
                next.insert(state, c);
            }
        };
        for (key, (c0, partner, c1)) in keys.into_iter().zip(stepped) {
            admit(key, c0);
            admit(partner, c1);
        }
        fresh.sort_unstable();
        self.amps = next;
        self.pruned_mass = pruned;
        self.t = self.t + pulse.tau;
        self.pulses_applied += 1;
        for s in fresh {
            self.log_new(s, Some(ordinal));
        }
        Ok(())
    }
}

/// Functional form of [`SparseState::apply_pulse`].
pub fn apply_pulse<T: Real>(
    mut state: SparseState<T>,
    pulse: &Pulse<T>,
    params: &ChainParams<T>,
    cfg: &EngineConfig<T>,
) -> Result<SparseState<T>> {
    state.apply_pulse(pulse, params, cfg)?;
    Ok(state)
}

/// Bookkeeping after one pulse of a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow<T> {
    pub pulse_index: usize,
    pub omega: T,
    pub rabi: T,
    pub tau: T,
    pub tracked_states: usize,
    pub norm: T,
    pub pruned_mass_cumulative: T,
}

/// Runs a pulse train from `initial`, recording one trace row per pulse.
/// Errors carry the ordinal of the failing pulse.
pub fn run_sequence<T: Real>(
    initial: SparseState<T>,
    pulses: &[Pulse<T>],
    params: &ChainParams<T>,
    cfg: &EngineConfig<T>,
) -> Result<(SparseState<T>, Vec<TraceRow<T>>)> {
    if pulses.is_empty() {
        return Err(Error::invalid("pulse sequence is empty"));
    }
    let mut state = initial;
    let mut trace = Vec::with_capacity(pulses.len());
    for (i, pulse) in pulses.iter().enumerate() {
        state.apply_pulse(pulse, params, cfg).map_err(|e| e.at_pulse(i))?;
        trace.push(TraceRow {
            pulse_index: i,
            omega: pulse.omega,
            rabi: pulse.rabi,
            tau: pulse.tau,
            tracked_states: state.len(),
            norm: state.norm_sqr(),
            pruned_mass_cumulative: state.pruned_mass(),
        });
    }
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn resonant_pi_transfers_everything() {
        let prop = PairPropagator::new(0.0, 0.3, PI / 0.3, 0.0);
        let (m, p) = two_level_step(c(1.0, 0.0), c(0.0, 0.0), &prop);
        assert!(m.norm() < 1e-15);
        assert!((p - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn two_pi_k_pulse_returns_ground_with_phase() {
        let k = 10.0f64;
        let rabi = 2.0 / (4.0 * k * k - 1.0f64).sqrt();
        let prop = PairPropagator::new(2.0, rabi, PI / rabi, 37.0);
        let (m, p) = two_level_step(c(1.0, 0.0), c(0.0, 0.0), &prop);
        let expected = Complex::cis(-PI * 399.0f64.sqrt() / 2.0);
        assert!((m - expected).norm() < 1e-12, "{m} vs {expected}");
        assert!(p.norm() < 1e-12);
    }

    #[test]
    fn weak_drive_is_identity() {
        let prop = PairPropagator::new(3.0, 1e-12, 5.0, 2.0);
        let (m, p) = two_level_step(c(0.6, 0.0), c(0.0, 0.8), &prop);
        assert!((m - c(0.6, 0.0)).norm() < 1e-10);
        assert!((p - c(0.0, 0.8)).norm() < 1e-10);
    }

    #[test]
    fn pulse_validation() {
        assert!(Pulse::pi(10.0, 0.0).is_err());
        assert!(Pulse::custom(10.0, 0.1, -1.0).is_err());
        assert!(Pulse { omega: 1.0, rabi: 0.1, tau: 1.0, kind: PulseKind::Pi }.validated().is_err());
        let p = Pulse::half_pi(10.0, 0.25).unwrap();
        assert!((p.rabi * p.tau - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn addressing() {
        let params = ChainParams::<f64>::with_defaults(8).unwrap();
        let w = params.omega().to_vec();
        let at = |omega: f64| target_spin(&Pulse::pi(omega, 0.1).unwrap(), &params);
        assert_eq!(at(w[5] + 2.0).unwrap(), 5);
        assert_eq!(at(w[0] - 1.0).unwrap(), 0);
        assert_eq!(at(w[7] + 1.0).unwrap(), 7);
        assert!(matches!(at((w[3] + w[4]) / 2.0), Err(Error::Addressing(_))));
        assert!(matches!(at(w[3] + 30.0), Err(Error::Addressing(_))));
        assert!(matches!(at(w[0] - 40.0), Err(Error::Addressing(_))));
    }

    #[test]
    fn detuning_examples() {
        let n = 7;
        let params = ChainParams::<f64>::with_defaults(n).unwrap();
        let g = BasisState::zeros(n);
        let pulse = Pulse::pi(params.omega_k(3), 0.1).unwrap();
        let (up, delta) = pair_detuning(&g, 3, &pulse, &params).unwrap();
        assert_eq!(up, BasisState::from_ones(n, &[3]).unwrap());
        assert_eq!(delta, 2.0);

        let pulse = Pulse::pi(params.omega_k(n - 2) - 2.0, 0.1).unwrap();
        assert_eq!(pair_detuning(&g, n - 2, &pulse, &params).unwrap().1, 4.0);

        let both = BasisState::from_ones(n, &[4, 2]).unwrap();
        let pulse = Pulse::pi(params.omega_k(3), 0.1).unwrap();
        assert_eq!(pair_detuning(&both, 3, &pulse, &params).unwrap().1, -2.0);

        let upper = BasisState::from_ones(n, &[3]).unwrap();
        assert!(pair_detuning(&upper, 3, &pulse, &params).is_err());
    }

    #[test]
    fn degenerate_pair_is_reported() {
        // ω_0 = J makes the edge flip with an excited neighbor cost nothing.
        let params = ChainParams::new(vec![1.0, 101.0], 1.0, 100.0).unwrap();
        let s = BasisState::from_ones(2, &[1]).unwrap();
        let pulse = Pulse::pi(1.0, 0.1).unwrap();
        assert!(matches!(pair_detuning(&s, 0, &pulse, &params), Err(Error::Internal(_))));
    }

    #[test]
    fn half_pi_on_left_edge_makes_superposition() {
        let n = 5;
        let params = ChainParams::<f64>::with_defaults(n).unwrap();
        let pulse = Pulse::half_pi(params.omega_k(n - 1) + 1.0, 0.1).unwrap();
        let state = apply_pulse(SparseState::from_basis(BasisState::zeros(n)), &pulse, &params, &EngineConfig::default()).unwrap();
        let h = 0.5f64.sqrt();
        assert!((state.amplitude(&BasisState::zeros(n)) - c(h, 0.0)).norm() < 1e-15);
        let left = BasisState::from_ones(n, &[n - 1]).unwrap();
        assert!((state.amplitude(&left) - c(0.0, h)).norm() < 1e-15);
        assert_eq!(state.len(), 2);
        assert_eq!(state.gen_log().len(), 2);
        assert_eq!(state.gen_log()[1], GenerationRecord { state: left, pulse: Some(0) });
        assert!((state.t() - PI / 0.2).abs() < 1e-12);
    }

    #[test]
    fn pi_twice_returns_up_to_phase() {
        let n = 4;
        let params = ChainParams::<f64>::with_defaults(n).unwrap();
        let pulse = Pulse::pi(params.omega_k(n - 1) + 1.0, 0.2).unwrap();
        let (state, trace) =
            run_sequence(SparseState::from_basis(BasisState::zeros(n)), &[pulse, pulse], &params, &EngineConfig::default()).unwrap();
        assert_eq!(trace.len(), 2);
        assert!((state.probability(&BasisState::zeros(n)) - 1.0).abs() < 1e-14);
        assert_eq!(trace[0].tracked_states, 1);
    }

    #[test]
    fn two_pi_k_ground_pulse_leaks_nothing() {
        let n = 6;
        let params = ChainParams::<f64>::with_defaults(n).unwrap();
        let k = 3.0f64;
        let pulse = Pulse::pi(params.omega_k(2), 2.0 / (4.0 * k * k - 1.0f64).sqrt()).unwrap();
        let mut state = SparseState::from_basis(BasisState::zeros(n));
        state.apply_pulse(&pulse, &params, &EngineConfig::exact()).unwrap();
        assert!((state.probability(&BasisState::zeros(n)) - 1.0).abs() < 1e-12);
        assert!(state.probability(&BasisState::from_ones(n, &[2]).unwrap()) < 1e-24);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let params = ChainParams::<f64>::with_defaults(3).unwrap();
        assert!(run_sequence(SparseState::from_basis(BasisState::zeros(3)), &[], &params, &EngineConfig::default()).is_err());
    }

    #[test]
    fn errors_name_the_pulse() {
        let params = ChainParams::<f64>::with_defaults(3).unwrap();
        let good = Pulse::pi(params.omega_k(1), 0.1).unwrap();
        let bad = Pulse::pi(params.omega_k(1) + 50.0, 0.1).unwrap();
        let err = run_sequence(SparseState::from_basis(BasisState::zeros(3)), &[good, bad], &params, &EngineConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::AtPulse { ordinal: 1, .. }), "{err}");
    }

    #[test]
    fn corrupted_propagator_trips_norm_check() {
        let params = ChainParams::<f64>::with_defaults(3).unwrap();
        let pulse = Pulse::pi(params.omega_k(1), 0.1).unwrap();
        let mut state = SparseState::from_basis(BasisState::zeros(3));
        let err = state
            .apply_pulse_with(&pulse, &params, &EngineConfig::default(), |p| p.corrupted(1.01))
            .unwrap_err();
        assert!(matches!(err, Error::NumericalIntegrity(_)));
    }

    #[test]
    fn pruning_accounts_for_mass() {
        let n = 5;
        let params = ChainParams::<f64>::with_defaults(n).unwrap();
        // Far from any 2πk point the ground branch leaks a little each pulse.
        let pulses: Vec<_> = (1..n - 1).map(|k| Pulse::pi(params.omega_k(k), 0.37).unwrap()).collect();
        let cfg = EngineConfig::with_threshold(5e-3);
        let (state, trace) = run_sequence(SparseState::from_basis(BasisState::zeros(n)), &pulses, &params, &cfg).unwrap();
        assert!(state.pruned_mass() > 0.0);
        for row in &trace {
            assert!((row.norm + row.pruned_mass_cumulative - 1.0).abs() < 1e-12);
        }
        for (_, amp) in state.sorted_entries() {
            assert!(amp.norm_sqr() >= 5e-3);
        }
    }

    #[test]
    fn from_amplitudes_requires_normalization() {
        let a = BasisState::zeros(3);
        let b = BasisState::from_ones(3, &[0]).unwrap();
        assert!(SparseState::from_amplitudes(3, [(a.clone(), c(0.5, 0.0)), (b.clone(), c(0.5, 0.0))]).is_err());
        let h = 0.5f64.sqrt();
        let s = SparseState::from_amplitudes(3, [(b.clone(), c(h, 0.0)), (a.clone(), c(0.0, h))]).unwrap();
        assert_eq!(s.generation_index(&a), Some(0));
        assert_eq!(s.generation_index(&b), Some(1));
    }

    #[test]
    fn generic_over_f32() {
        let params = ChainParams::<f32>::with_defaults(4).unwrap();
        let pulse = Pulse::pi(params.omega_k(3) + 1.0, 0.1f32).unwrap();
        let s = apply_pulse(SparseState::from_basis(BasisState::zeros(4)), &pulse, &params, &EngineConfig::default()).unwrap();
        assert!((s.probability(&BasisState::from_ones(4, &[3]).unwrap()) - 1.0).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn propagator_is_unitary(delta in -50.0f64..50.0, rabi in 1e-3f64..5.0, tau in 1e-3f64..100.0, t0 in 0.0f64..1e4) {
            let prop = PairPropagator::new(delta, rabi, tau, t0);
            prop_assert!(prop.unitarity_error() < 1e-12);
        }

        #[test]
        fn null_leakage_at_two_pi_k(k in 1u32..40, rabi in 0.01f64..2.0) {
            let k = f64::from(k);
            let delta = rabi * (4.0 * k * k - 1.0).sqrt();
            let prop = PairPropagator::new(delta, rabi, PI / rabi, 0.0);
            prop_assert!(prop.a_pm.norm() < 1e-12);
            prop_assert!(prop.a_mp.norm() < 1e-12);
        }

        #[test]
        fn resonant_limit_is_rabi(rabi in 0.01f64..2.0, tau in 0.0f64..50.0) {
            let prop = PairPropagator::new(0.0, rabi, tau, 3.0);
            prop_assert!((prop.a_mm - c((rabi * tau / 2.0).cos(), 0.0)).norm() < 1e-12);
            prop_assert!((prop.a_pm - c(0.0, (rabi * tau / 2.0).sin())).norm() < 1e-12);
        }

        #[test]
        fn pair_step_preserves_norm(
            delta in -10.0f64..10.0, rabi in 0.01f64..1.0, tau in 0.1f64..60.0,
            a in -1.0f64..1.0, b in -1.0f64..1.0, cc in -1.0f64..1.0, d in -1.0f64..1.0,
        ) {
            let prop = PairPropagator::new(delta, rabi, tau, 11.0);
            let (m, p) = two_level_step(c(a, b), c(cc, d), &prop);
            let before = a * a + b * b + cc * cc + d * d;
            prop_assert!((m.norm_sqr() + p.norm_sqr() - before).abs() < 1e-12);
        }
    }
}
