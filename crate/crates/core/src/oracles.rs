//! Independent references for the pulse engine.
//!
//! * closed forms for a train of π-pulses that all satisfy the `2πk` condition,
//! * single-pulse leakage `ε` and its first-order accumulation,
//! * dense propagation over all `2^N` amplitudes, either with every
//!   single-spin coupling (no nearest-spin restriction) or with exactly the
//!   pairwise model the sparse engine uses but without pruning.

use nalgebra::{DMatrix, RealField, SymmetricEigen};
use num_complex::Complex;

use crate::basis::BasisState;
use crate::chain::{energy, ChainParams};
use crate::engine::{target_spin, two_level_step, PairPropagator, Pulse, SparseState};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest chain the dense references accept by default.
pub const DEFAULT_DENSE_CAP: usize = 12;

/// Final amplitudes of `|00…0⟩` and `|10…01⟩` in the unnormalized convention
/// where both start with unit modulus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticFinal<T> {
    pub c0: Complex<T>,
    pub c1: Complex<T>,
    pub k: u32,
    pub l: usize,
}

/// Closed-form result of a π/2 pulse followed by `l` π-pulses that each leave
/// the ground branch after exactly `k` turns:
/// `C₀ = (−1)^{kL} exp(−iπL√(4k²−1)/2)`, `C₁ = −1`.
pub fn analytic_final_state<T: Real>(k: u32, l: usize) -> Result<AnalyticFinal<T>> {
    if k == 0 || l == 0 {
        return Err(Error::invalid("k and L must both be at least 1"));
    }
    let kf = f64::from(k);
    let root = (4.0 * kf * kf - 1.0).sqrt();
    let sign = if (u64::from(k) * l as u64).is_multiple_of(2) { 1.0 } else { -1.0 };
    // Reduce the phase before converting so that f32 keeps its accuracy.
    let phase = (-std::f64::consts::PI * l as f64 * root / 2.0) % std::f64::consts::TAU;
    let c0 = Complex::cis(phase) * sign;
    Ok(AnalyticFinal {
        c0: Complex::new(T::lit(c0.re), T::lit(c0.im)),
        c1: Complex::new(-T::one(), T::zero()),
        k,
        l,
    })
}

/// Probability that one pulse drives a detuned pair out of its lower state:
/// `(Ω/Ω_e)² sin²(Ω_e τ / 2)`.
pub fn epsilon<T: Real>(rabi: T, delta: T, tau: T) -> T {
    let omega_e = rabi.hypot(delta);
    if omega_e == T::zero() {
        return T::zero();
    }
    let r = rabi / omega_e;
    let s = (omega_e * tau * T::lit(0.5)).sin();
    r * r * s * s
}

/// First-order ground-state probability after pulses with leakages `eps`:
/// `1 − Σ ε_i`.
pub fn perturbative_c0<T: Real>(eps: &[T]) -> Result<T> {
    if let Some(bad) = eps.iter().find(|e| !(**e >= T::zero() && **e <= T::one())) {
        return Err(Error::invalid(format!("leakage {bad} is not a probability")));
    }
    Ok(eps.iter().fold(T::one(), |acc, &e| acc - e))
}

/// Dense `2^N` amplitude vector indexed by the basis-state bit pattern.
pub type DenseVector<T> = Vec<Complex<T>>;

fn check_dense<T: Real>(params: &ChainParams<T>, initial: &BasisState, cap: usize) -> Result<usize> {
    let n = params.n();
    if n > cap {
        return Err(Error::Resource(format!("dense propagation of {n} spins exceeds the cap of {cap}")));
    }
    if initial.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: initial.len() });
    }
    Ok(1usize << n)
}

fn basis_vector<T: Real>(dim: usize, initial: &BasisState) -> DenseVector<T> {
    let mut psi = vec![Complex::from(T::zero()); dim];
    psi[initial.index() as usize] = Complex::from(T::one());
    psi
}

/// Diagonal energies of every basis state, relative to the ground state.
fn relative_energies<T: Real>(params: &ChainParams<T>) -> Result<Vec<T>> {
    let n = params.n();
    let e0 = energy(&BasisState::zeros(n), params)?;
    (0..1u64 << n)
        .map(|i| Ok(energy(&BasisState::from_index(n, i)?, params)? - e0))
        .collect()
}

/// Exciting any spin must raise the energy for the rotating frame used below;
/// that holds whenever `ω_k` exceeds `J` times its neighbor count.
fn check_positive_transitions<T: Real>(params: &ChainParams<T>) -> Result<()> {
    let n = params.n();
    for k in 0..n {
        let neighbors = T::from_usize(usize::from(k > 0) + usize::from(k + 1 < n)).expect("small");
        if !(params.omega_k(k) - params.j() * neighbors > T::zero()) {
            return Err(Error::invalid(format!(
                "spin {k} has a non-positive transition frequency; dense references need ω_k > {neighbors}·J"
            )));
        }
    }
    Ok(())
}

/// Bundle of chain parameters and the dense size cap.
#[derive(Clone, Debug)]
pub struct DenseModel<'a, T> {
    pub params: &'a ChainParams<T>,
    pub cap: usize,
}

impl<'a, T: Real + RealField> DenseModel<'a, T> {
    pub fn new(params: &'a ChainParams<T>) -> Self {
        Self { params, cap: DEFAULT_DENSE_CAP }
    }

    /// Exact propagation with every single-spin coupling `V_pm = −Ω/2`.
    ///
    /// Within one rectangular pulse the amplitude equations become time
    /// independent in the frame `C_p = e^{iF_p t} b_p` with
    /// `F_p = E_p − ω·|p|`, where `|p|` counts excited spins. The resulting
    /// real symmetric generator is diagonalized once per pulse.
    pub fn propagate(&self, pulses: &[Pulse<T>], initial: &BasisState) -> Result<DenseVector<T>> {
        let dim = check_dense(self.params, initial, self.cap)?;
        check_positive_transitions(self.params)?;
        let n = self.params.n();
        let energies = relative_energies(self.params)?;
        let mut psi = basis_vector(dim, initial);
        let mut t = T::zero();
        let half = T::lit(0.5);
        for pulse in pulses {
            let frame: Vec<T> = (0..dim)
                .map(|i| energies[i] - pulse.omega * T::from_u32((i as u64).count_ones()).expect("small"))
                .collect();
            let mut h = DMatrix::<T>::zeros(dim, dim);
            for i in 0..dim {
                h[(i, i)] = frame[i];
                for k in 0..n {
                    h[(i, i ^ (1 << k))] = -half * pulse.rabi;
                }
            }
            let eig = accurate_eigen(h)?;
            let q = &eig.eigenvectors;

            let b: DenseVector<T> = psi.iter().zip(&frame).map(|(c, &f)| *c * Complex::cis(-f * t)).collect();
            let mut y = vec![Complex::from(T::zero()); dim];
            for (col, yc) in y.iter_mut().enumerate() {
                let mut acc = Complex::from(T::zero());
                for (row, bv) in b.iter().enumerate() {
                    acc += *bv * q[(row, col)];
                }
                *yc = acc * Complex::cis(-eig.eigenvalues[col] * pulse.tau);
            }
            let t_end = t + pulse.tau;
            for (row, out) in psi.iter_mut().enumerate() {
                let mut acc = Complex::from(T::zero());
                for (col, yc) in y.iter().enumerate() {
                    acc += *yc * q[(row, col)];
                }
                *out = acc * Complex::cis(frame[row] * t_end);
            }
            t = t_end;
        }
        Ok(psi)
    }
}

/// Symmetric eigendecomposition with a convergence tolerance below machine
/// epsilon. The default tolerance leaves residuals near `1e-7` when the
/// diagonal has (near) degenerate entries, which this generator always has.
fn accurate_eigen<T: Real + RealField>(h: DMatrix<T>) -> Result<SymmetricEigen<T, nalgebra::Dyn>> {
    let max_abs = |m: &DMatrix<T>| m.iter().fold(0.0f64, |acc, x| acc.max(Real::to_f64_lossless(*x).abs()));
    let scale = max_abs(&h).max(1.0);
    let tight = <T as num_traits::Float>::epsilon() * T::lit(0.01);
    let eig = SymmetricEigen::try_new(h.clone(), tight, 1_000_000).unwrap_or_else(|| SymmetricEigen::new(h.clone()));
    let q = &eig.eigenvectors;
    let residual = max_abs(&(q * DMatrix::from_diagonal(&eig.eigenvalues) * q.transpose() - &h));
    let tolerance = Real::to_f64_lossless(T::check_tolerance(1e-12)) * scale;
    if residual > tolerance {
        return Err(Error::NumericalIntegrity(format!("eigendecomposition residual {residual:e} exceeds {tolerance:e}")));
    }
    Ok(eig)
}

/// Dense propagation with every single-spin coupling; see
/// [`DenseModel::propagate`].
pub fn dense_reference<T: Real + RealField>(
    params: &ChainParams<T>,
    pulses: &[Pulse<T>],
    initial: &BasisState,
) -> Result<DenseVector<T>> {
    DenseModel::new(params).propagate(pulses, initial)
}

/// Fixed-step fourth-order Runge–Kutta integration of the interaction-picture
/// amplitude equations with every single-spin coupling, using
/// `steps_per_unit` steps per unit time. Slow; meant for a handful of spins.
pub fn dense_integrate_rk4<T: Real>(
    params: &ChainParams<T>,
    pulses: &[Pulse<T>],
    initial: &BasisState,
    steps_per_unit: usize,
) -> Result<DenseVector<T>> {
    let dim = check_dense(params, initial, DEFAULT_DENSE_CAP)?;
    check_positive_transitions(params)?;
    let n = params.n();
    let energies = relative_energies(params)?;
    let mut psi = basis_vector(dim, initial);
    let mut t = T::zero();
    let zero = Complex::from(T::zero());
    let i_unit = Complex::<T>::i();
    for pulse in pulses {
        let frame: Vec<T> = (0..dim)
            .map(|i| energies[i] - pulse.omega * T::from_u32((i as u64).count_ones()).expect("small"))
            .collect();
        // dC_p/dt = −i Σ_m V_pm e^{i(F_p − F_m)t} C_m with V_pm = −Ω/2.
        let coupling = i_unit * (pulse.rabi * T::lit(0.5));
        let rhs = |time: T, c: &[Complex<T>], out: &mut [Complex<T>]| {
            let rotated: Vec<Complex<T>> = c.iter().zip(&frame).map(|(a, &f)| *a * Complex::cis(-f * time)).collect();
            for p in 0..dim {
                let mut acc = zero;
                for k in 0..n {
                    acc = acc + rotated[p ^ (1 << k)];
                }
                out[p] = coupling * Complex::cis(frame[p] * time) * acc;
            }
        };
        let steps = (pulse.tau.to_f64_lossless() * steps_per_unit as f64).ceil().max(1.0) as usize;
        let h = pulse.tau / T::from_usize(steps).expect("step count fits");
        let half_h = h * T::lit(0.5);
        let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; dim], vec![zero; dim], vec![zero; dim], vec![zero; dim]);
        let mut tmp = vec![zero; dim];
        for s in 0..steps {
            let t0 = t + h * T::from_usize(s).expect("fits");
            rhs(t0, &psi, &mut k1);
            for i in 0..dim {
                tmp[i] = psi[i] + k1[i] * half_h;
            }
            rhs(t0 + half_h, &tmp, &mut k2);
            for i in 0..dim {
                tmp[i] = psi[i] + k2[i] * half_h;
            }
            rhs(t0 + half_h, &tmp, &mut k3);
            for i in 0..dim {
                tmp[i] = psi[i] + k3[i] * h;
            }
            rhs(t0 + h, &tmp, &mut k4);
            let sixth = h / T::lit(6.0);
            for i in 0..dim {
                psi[i] = psi[i] + (k1[i] + (k2[i] + k3[i]) * T::lit(2.0) + k4[i]) * sixth;
            }
        }
        t = t + pulse.tau;
    }
    Ok(psi)
}

/// The pulse engine's pairwise model applied to all `2^N` amplitudes with no
/// pruning.
pub fn dense_restricted_reference<T: Real>(
    params: &ChainParams<T>,
    pulses: &[Pulse<T>],
    initial: &BasisState,
) -> Result<DenseVector<T>> {
    let dim = check_dense(params, initial, DEFAULT_DENSE_CAP)?;
    let n = params.n();
    let mut psi = basis_vector(dim, initial);
    let mut t = T::zero();
    for (ordinal, pulse) in pulses.iter().enumerate() {
        let k = target_spin(pulse, params).map_err(|e| e.at_pulse(ordinal))?;
        let bit = 1usize << k;
        for lower_bits in (0..dim).filter(|i| i & bit == 0) {
            let s = BasisState::from_index(n, lower_bits as u64)?;
            let up = params.excitation_energy(&s, k);
            if up == T::zero() {
                return Err(Error::Internal(format!("degenerate flip of spin {k}")));
            }
            let prop = PairPropagator::for_pulse(up.abs() - pulse.omega, pulse, t);
            let (a, b) = (psi[lower_bits], psi[lower_bits | bit]);
            let (na, nb) = if up > T::zero() {
                two_level_step(a, b, &prop)
            } else {
                let (m, p) = two_level_step(b, a, &prop);
                (p, m)
            };
            psi[lower_bits] = na;
            psi[lower_bits | bit] = nb;
        }
        t = t + pulse.tau;
    }
    Ok(psi)
}

/// Sparse state laid out as a dense vector (`N ≤ 64`).
pub fn sparse_to_dense<T: Real>(state: &SparseState<T>) -> Result<DenseVector<T>> {
    let n = state.n();
    if n > DEFAULT_DENSE_CAP.max(20) {
        return Err(Error::Resource(format!("refusing to expand {n} spins densely")));
    }
    let mut psi = vec![Complex::from(T::zero()); 1usize << n];
    for (s, c) in state.sorted_entries() {
        psi[s.index() as usize] = c;
    }
    Ok(psi)
}

/// `½ Σ |P_a − P_b|` over basis states.
pub fn total_variation<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    assert_eq!(a.len(), b.len(), "vectors differ in dimension");
    let sum = a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + (x.norm_sqr() - y.norm_sqr()).abs());
    sum * T::lit(0.5)
}

/// Largest `|a_i − b_i|`.
pub fn max_amplitude_diff<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    assert_eq!(a.len(), b.len(), "vectors differ in dimension");
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).norm()))
}

pub fn dense_norm_sqr<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr())
}
