//! Pulse program for a CONTROL-NOT between the two ends of the chain, and the
//! Rabi-frequency distortions used to probe its sensitivity.
//!
//! The control is spin `N−1`, the target spin `0`. After a π/2 pulse puts the
//! control into superposition, a train of `2N−3` π-pulses walks an excitation
//! down the chain and back, one spin at a time. Every π-pulse is exactly
//! resonant for the branch with the control excited and detuned by `2J` or
//! `4J` for the ground branch; choosing `Ω` so that the ground branch makes a
//! whole number of turns (`Ω_eτ = 2πk`) leaves it untouched.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisState;
use crate::chain::ChainParams;
use crate::engine::{pair_detuning, target_spin, Pulse, PulseKind};
use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Real;

/// Detuning of a pulse for the branch with the control spin excited and for
/// the ground branch; `None` when the branch does not meet the pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchDetunings<T> {
    pub control_one: Option<T>,
    pub control_zero: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseAnnotation<T> {
    pub ordinal: usize,
    pub target_spin: usize,
    pub branch_detunings: BranchDetunings<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence<T> {
    pub pulses: Vec<Pulse<T>>,
    pub annotations: Vec<PulseAnnotation<T>>,
}

impl<T: Real> PulseSequence<T> {
    /// Number of π-pulses (everything after the leading π/2 pulse).
    pub fn pi_count(&self) -> usize {
        self.pulses.iter().filter(|p| p.kind != PulseKind::HalfPi).count()
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Same sequence with every frequency shifted by `shift`.
    pub fn shifted(&self, shift: T) -> Self {
        let mut out = self.clone();
        for p in &mut out.pulses {
            p.omega = p.omega + shift;
        }
        out
    }

    /// Only the π-pulse train, for runs that start from a prepared basis state.
    pub fn pi_train(&self) -> &[Pulse<T>] {
        match self.pulses.first() {
            Some(p) if p.kind == PulseKind::HalfPi => &self.pulses[1..],
            _ => &self.pulses,
        }
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let records: Vec<PulseRecord> = self
            .pulses
            .iter()
            .zip(&self.annotations)
            .map(|(p, a)| PulseRecord {
                ordinal: a.ordinal,
                kind: p.kind,
                omega: p.omega.to_f64_lossless(),
                rabi: p.rabi.to_f64_lossless(),
                tau: p.tau.to_f64_lossless(),
                target_spin: a.target_spin,
                branch_detunings: BranchDetunings {
                    control_one: a.branch_detunings.control_one.map(Real::to_f64_lossless),
                    control_zero: a.branch_detunings.control_zero.map(Real::to_f64_lossless),
                },
            })
            .collect();
        io::write_json(writer, &records)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_json(&mut buf)?;
        Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let records: Vec<PulseRecord> = serde_json::from_reader(reader)?;
        let mut pulses = Vec::with_capacity(records.len());
        let mut annotations = Vec::with_capacity(records.len());
        for (i, r) in records.into_iter().enumerate() {
            if r.ordinal != i {
                return Err(Error::invalid(format!("pulse {i} carries ordinal {}", r.ordinal)));
            }
            let pulse = Pulse { omega: T::lit(r.omega), rabi: T::lit(r.rabi), tau: T::lit(r.tau), kind: r.kind }
                .validated()
                .map_err(|e| e.at_pulse(i))?;
            pulses.push(pulse);
            annotations.push(PulseAnnotation {
                ordinal: r.ordinal,
                target_spin: r.target_spin,
                branch_detunings: BranchDetunings {
                    control_one: r.branch_detunings.control_one.map(T::lit),
                    control_zero: r.branch_detunings.control_zero.map(T::lit),
                },
            });
        }
        Ok(Self { pulses, annotations })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::read_json(text.as_bytes())
    }
}

#[derive(Serialize, Deserialize)]
struct PulseRecord {
    ordinal: usize,
    kind: PulseKind,
    omega: f64,
    rabi: f64,
    tau: f64,
    target_spin: usize,
    branch_detunings: BranchDetunings<f64>,
}

/// Rabi frequency making a π-pulse at detuning `delta` also a `2πk` rotation:
/// `Ω = |Δ| / √(4k² − 1)`.
pub fn omega_for_2pik<T: Real>(delta: T, k: u32) -> Result<T> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if delta == T::zero() || !delta.is_finite() {
        return Err(Error::invalid("detuning must be finite and nonzero"));
    }
    let k = T::from_u32(k).expect("u32 fits");
    Ok(delta.abs() / (T::lit(4.0) * k * k - T::one()).sqrt())
}

/// Detuning seen by `state` when `pulse` drives spin `k`, whichever member of
/// the pair `state` is.
fn branch_detuning<T: Real>(state: &BasisState, k: usize, pulse: &Pulse<T>, params: &ChainParams<T>) -> Result<T> {
    let up = params.excitation_energy(state, k);
    let state_is_lower = state.get(k) == (up < T::zero());
    let lower = if state_is_lower { state.clone() } else { state.flip(k)? };
    Ok(pair_detuning(&lower, k, pulse, params)?.1)
}

fn close<T: Real>(a: T, b: T, scale: T) -> bool {
    (a - b).abs() <= T::check_tolerance(1e-12) * scale.abs().max(T::one())
}

/// Compiles the CONTROL-NOT from spin `N−1` to spin `0`: a π/2 pulse on the
/// control followed by `2N−3` π-pulses, all at Rabi frequency `rabi`.
pub fn compile_cn_remote<T: Real>(params: &ChainParams<T>, rabi: T) -> Result<PulseSequence<T>> {
    let n = params.n();
    if n < 3 {
        return Err(Error::invalid(format!("the remote CONTROL-NOT needs at least 3 spins, got {n}")));
    }
    let j = params.j();
    let two_j = T::lit(2.0) * j;

    // Frequencies and the spin each one is meant to flip, following the
    // excited branch: flip N−2, then for each j flip j and restore j+1.
    let mut plan: Vec<(T, usize)> = vec![(params.omega_k(n - 2), n - 2)];
    for spin in (0..n - 2).rev() {
        let flip = if spin == 0 { params.omega_k(0) - j } else { params.omega_k(spin) };
        plan.push((flip, spin));
        let restore = if spin + 1 == n - 2 { params.omega_k(n - 2) - two_j } else { params.omega_k(spin + 1) };
        plan.push((restore, spin + 1));
    }

    let half = Pulse::half_pi(params.omega_k(n - 1) + j, rabi)?;
    let ground = BasisState::zeros(n);
    let mut pulses = vec![half];
    let mut annotations = vec![PulseAnnotation {
        ordinal: 0,
        target_spin: n - 1,
        branch_detunings: BranchDetunings {
            control_one: None,
            control_zero: Some(branch_detuning(&ground, n - 1, &half, params)?),
        },
    }];

    let mut excited = BasisState::from_ones(n, &[n - 1])?;
    let four_j = T::lit(4.0) * j;
    for (i, (omega, spin)) in plan.into_iter().enumerate() {
        let ordinal = i + 1;
        let pulse = Pulse::pi(omega, rabi)?;
        let addressed = target_spin(&pulse, params).map_err(|e| e.at_pulse(ordinal))?;
        if addressed != spin {
            return Err(Error::Internal(format!("pulse {ordinal} addresses spin {addressed}, meant {spin}")));
        }
        let on_branch = branch_detuning(&excited, spin, &pulse, params)?;
        let off_branch = branch_detuning(&ground, spin, &pulse, params)?;
        if !close(on_branch, T::zero(), omega) {
            return Err(Error::Internal(format!("pulse {ordinal} misses the excited branch by {on_branch}")));
        }
        if !(close(off_branch, two_j, omega) || close(off_branch, four_j, omega)) {
            return Err(Error::Internal(format!("pulse {ordinal} detunes the ground branch by {off_branch}")));
        }
        excited.toggle(spin);
        pulses.push(pulse);
        annotations.push(PulseAnnotation {
            ordinal,
            target_spin: spin,
            branch_detunings: BranchDetunings { control_one: Some(on_branch), control_zero: Some(off_branch) },
        });
    }
    if excited != BasisState::from_ones(n, &[n - 1, 0])? {
        return Err(Error::Internal(format!("excited branch ends in {excited:?}")));
    }
    Ok(PulseSequence { pulses, annotations })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionMode {
    /// Every pulse in range gets `Ω + ε₀`.
    FixedOffset,
    /// Every pulse in range gets `Ω + ε`, `ε` uniform on `[−ε₀, ε₀]`.
    UniformRandom,
}

/// What happens to the duration of a distorted pulse.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauPolicy {
    /// Refit `τ` so that `Ωτ = π` still holds.
    #[default]
    Refit,
    /// Keep the nominal `τ`; the pulse becomes a custom rotation.
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec<T> {
    pub mode: DistortionMode,
    /// First distorted π-pulse (π-pulses are numbered from 1).
    pub k1: usize,
    /// Last distorted π-pulse, inclusive.
    pub k2: usize,
    pub epsilon0: T,
    pub seed: u64,
    #[serde(default)]
    pub tau_policy: TauPolicy,
}

/// Applies Rabi-frequency errors to the π-pulses with ordinals in
/// `[k1, k2]`. Random offsets are drawn once per pulse, in pulse order.
pub fn distort<T: Real>(seq: &PulseSequence<T>, spec: &DistortionSpec<T>) -> Result<PulseSequence<T>> {
    let last = seq.pulses.len().saturating_sub(1);
    if spec.k1 < 1 || spec.k1 > spec.k2 || spec.k2 > last {
        return Err(Error::invalid(format!(
            "distortion range [{}, {}] is outside the π-pulses [1, {last}]",
            spec.k1, spec.k2
        )));
    }
    if !(spec.epsilon0 >= T::zero()) || !spec.epsilon0.is_finite() {
        return Err(Error::invalid(format!("epsilon0 must be non-negative, got {}", spec.epsilon0)));
    }
    let mut out = seq.clone();
    if spec.epsilon0 == T::zero() {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let e0 = spec.epsilon0.to_f64_lossless();
    for ordinal in spec.k1..=spec.k2 {
        let eps = match spec.mode {
            DistortionMode::FixedOffset => spec.epsilon0,
            DistortionMode::UniformRandom => T::lit(rng.gen_range(-e0..=e0)),
        };
        let old = out.pulses[ordinal];
        let rabi = old.rabi + eps;
        if !(rabi > T::zero()) {
            return Err(Error::invalid(format!("distortion drives pulse {ordinal} to Rabi frequency {rabi}")));
        }
        out.pulses[ordinal] = match (spec.tau_policy, old.kind.rotation::<T>()) {
            (TauPolicy::Refit, Some(_)) => Pulse::with_rotation(old.kind, old.omega, rabi)?,
            _ => Pulse::custom(old.omega, rabi, old.tau)?,
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::resonant_frequency_set;

    fn chain(n: usize) -> ChainParams<f64> {
        ChainParams::with_defaults(n).unwrap()
    }

    #[test]
    fn four_spin_program() {
        let p = chain(4);
        let seq = compile_cn_remote(&p, 0.1).unwrap();
        let w = p.omega();
        let freqs: Vec<f64> = seq.pi_train().iter().map(|q| q.omega).collect();
        assert_eq!(freqs, vec![w[2], w[1], w[2] - 2.0, w[0] - 1.0, w[1]]);
        assert_eq!(seq.pulses[0].omega, w[3] + 1.0);
        assert_eq!(seq.pulses[0].kind, PulseKind::HalfPi);
        let targets: Vec<usize> = seq.annotations.iter().map(|a| a.target_spin).collect();
        assert_eq!(targets, vec![3, 2, 1, 2, 0, 1]);
    }

    #[test]
    fn pulse_counts() {
        for n in [3usize, 5, 17, 200, 1000] {
            let seq = compile_cn_remote(&chain(n), 0.1).unwrap();
            assert_eq!(seq.pi_count(), 2 * n - 3);
            assert_eq!(seq.len(), 2 * n - 2);
        }
        assert_eq!(compile_cn_remote(&chain(200), 0.1).unwrap().pi_count(), 397);
        assert_eq!(compile_cn_remote(&chain(1000), 0.1).unwrap().pi_count(), 1997);
        assert!(compile_cn_remote(&chain(2), 0.1).is_err());
    }

    #[test]
    fn first_three_pi_frequencies() {
        for n in [5usize, 9, 64] {
            let p = chain(n);
            let seq = compile_cn_remote(&p, 0.1).unwrap();
            let f: Vec<f64> = seq.pi_train().iter().take(3).map(|q| q.omega).collect();
            assert_eq!(f, vec![p.omega_k(n - 2), p.omega_k(n - 3), p.omega_k(n - 2) - 2.0]);
        }
    }

    #[test]
    fn resonance_audit() {
        let p = chain(40);
        let seq = compile_cn_remote(&p, 0.1).unwrap();
        let table = resonant_frequency_set(&p);
        let mut fours = 0;
        for (pulse, a) in seq.pulses.iter().zip(&seq.annotations).skip(1) {
            assert!(table.contains(&pulse.omega));
            assert_eq!(a.branch_detunings.control_one, Some(0.0));
            let g = a.branch_detunings.control_zero.unwrap();
            assert!(g == 2.0 || g == 4.0);
            fours += usize::from(g == 4.0);
        }
        assert_eq!(fours, 1, "only the third π-pulse is 4J off");
        assert_eq!(seq.annotations[3].branch_detunings.control_zero, Some(4.0));
        assert_eq!(seq.annotations[0].branch_detunings.control_zero, Some(0.0));
    }

    #[test]
    fn two_pi_k_rabi() {
        assert!((omega_for_2pik(2.0f64, 10).unwrap() - 2.0 / 399f64.sqrt()).abs() < 1e-16);
        assert!((omega_for_2pik(2.0f64, 10).unwrap() - 0.100125).abs() < 1e-6);
        assert!((omega_for_2pik(-2.0f64, 1).unwrap() - 2.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(omega_for_2pik(2.0, 0).is_err());
        assert!(omega_for_2pik(0.0, 3).is_err());
        // The 4J pulse at the k = 10 operating point has no integer k.
        let rabi = omega_for_2pik(2.0f64, 10).unwrap();
        let k_sq = ((4.0 / rabi).powi(2) + 1.0) / 4.0;
        assert!((4.0 * k_sq - 1.0 - 1596.0).abs() < 1e-9);
        assert!((k_sq.sqrt() - k_sq.sqrt().round()).abs() > 0.01);
    }

    fn spec(mode: DistortionMode, k1: usize, k2: usize, epsilon0: f64, seed: u64) -> DistortionSpec<f64> {
        DistortionSpec { mode, k1, k2, epsilon0, seed, tau_policy: TauPolicy::Refit }
    }

    #[test]
    fn distortion_examples() {
        let seq = compile_cn_remote(&chain(60), 0.1).unwrap();
        assert_eq!(distort(&seq, &spec(DistortionMode::UniformRandom, 1, 50, 0.0, 3)).unwrap(), seq);

        let dk = 25;
        let out = distort(&seq, &spec(DistortionMode::FixedOffset, 10, 10 + dk, 0.001, 0)).unwrap();
        let changed: Vec<usize> = (0..seq.len()).filter(|&i| out.pulses[i] != seq.pulses[i]).collect();
        assert_eq!(changed, (10..=10 + dk).collect::<Vec<_>>());
        for &i in &changed {
            assert!((out.pulses[i].rabi - 0.101).abs() < 1e-15);
            assert!((out.pulses[i].rabi * out.pulses[i].tau - std::f64::consts::PI).abs() < 1e-14);
            assert_eq!(out.pulses[i].kind, PulseKind::Pi);
        }

        let a = distort(&seq, &spec(DistortionMode::UniformRandom, 5, 40, 0.05, 9)).unwrap();
        let b = distort(&seq, &spec(DistortionMode::UniformRandom, 5, 40, 0.05, 9)).unwrap();
        let c = distort(&seq, &spec(DistortionMode::UniformRandom, 5, 40, 0.05, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for i in 5..=40 {
            assert!((a.pulses[i].rabi - 0.1).abs() <= 0.05);
        }
    }

    #[test]
    fn frozen_tau_keeps_duration() {
        let seq = compile_cn_remote(&chain(10), 0.1).unwrap();
        let s = DistortionSpec { tau_policy: TauPolicy::Frozen, ..spec(DistortionMode::FixedOffset, 2, 3, 0.01, 0) };
        let out = distort(&seq, &s).unwrap();
        assert_eq!(out.pulses[2].tau, seq.pulses[2].tau);
        assert_eq!(out.pulses[2].kind, PulseKind::Custom);
    }

    #[test]
    fn distortion_range_checks() {
        let seq = compile_cn_remote(&chain(10), 0.1).unwrap();
        let l = seq.pi_count();
        assert!(distort(&seq, &spec(DistortionMode::FixedOffset, 0, 3, 0.01, 0)).is_err());
        assert!(distort(&seq, &spec(DistortionMode::FixedOffset, 4, 3, 0.01, 0)).is_err());
        assert!(distort(&seq, &spec(DistortionMode::FixedOffset, 1, l + 1, 0.01, 0)).is_err());
        assert!(distort(&seq, &spec(DistortionMode::FixedOffset, 1, l, 0.01, 0)).is_ok());
        assert!(distort(&seq, &spec(DistortionMode::FixedOffset, 1, 2, -0.01, 0)).is_err());
        assert!(distort(&seq, &spec(DistortionMode::FixedOffset, 1, 2, -0.2, 0)).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let seq = compile_cn_remote(&chain(30), 2.0 / 399f64.sqrt()).unwrap();
        let seq = distort(&seq, &spec(DistortionMode::UniformRandom, 3, 20, 0.05, 1)).unwrap();
        let text = seq.to_json_string().unwrap();
        let back = PulseSequence::<f64>::from_json_str(&text).unwrap();
        assert_eq!(back, seq);
        assert_eq!(back.to_json_string().unwrap(), text);
        assert!(text.contains("\"kind\": \"half_pi\""));
        assert!(text.contains("\"control_one\": null"));
    }

    #[test]
    fn json_import_validates() {
        let seq = compile_cn_remote(&chain(5), 0.1).unwrap();
        let text = seq.to_json_string().unwrap().replacen("\"ordinal\": 1", "\"ordinal\": 7", 1);
        assert!(PulseSequence::<f64>::from_json_str(&text).is_err());
    }
}
