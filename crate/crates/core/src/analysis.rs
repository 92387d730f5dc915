//! Post-run classification, band detection, excitation profiles, parameter
//! sweeps and the CSV/JSON artifacts built from them.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisState;
use crate::chain::ChainParams;
use crate::engine::{run_sequence, EngineConfig, SparseState, TraceRow};
use crate::error::{Error, Result};
use crate::io::fmt_float;
use crate::scalar::Real;
use crate::sequence::{compile_cn_remote, distort, DistortionMode, DistortionSpec, PulseSequence, TauPolicy};

/// Gap in log₁₀ probability that opens a new band.
pub const DEFAULT_BAND_GAP: f64 = 1.0;
/// Gap used when splitting a band into sub-bands.
pub const DEFAULT_SUB_BAND_GAP: f64 = 0.5;

/// How reported probabilities are scaled. Dynamics always use normalized
/// amplitudes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Normalized,
    /// Probabilities doubled, as if the `1/√2` of the initial superposition
    /// were dropped.
    #[default]
    PaperDoubled,
}

impl Convention {
    pub fn factor<T: Real>(self) -> T {
        match self {
            Convention::Normalized => T::one(),
            Convention::PaperDoubled => T::lit(2.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Convention::Normalized => "normalized",
            Convention::PaperDoubled => "paper_doubled",
        }
    }
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Convention::Normalized),
            "paper_doubled" | "doubled" => Ok(Convention::PaperDoubled),
            other => Err(Error::invalid(format!("unknown convention {other:?} (normalized | paper_doubled)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportOptions<T> {
    /// Normalized probability a final unwanted state needs to be listed.
    pub threshold: T,
    pub convention: Convention,
}

impl<T: Real> Default for ReportOptions<T> {
    fn default() -> Self {
        Self { threshold: T::lit(crate::engine::DEFAULT_PRUNE_THRESHOLD), convention: Convention::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnwantedRecord<T> {
    pub state: BasisState,
    /// In the report's convention.
    pub probability: T,
    pub generation_index: usize,
    pub excitation_count: usize,
}

/// Final-state classification. Probabilities are in `convention`; the
/// masses (`pruned_mass`, `sub_threshold_mass`) are always normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct RunReport<T> {
    pub n: usize,
    pub convention: Convention,
    pub threshold: T,
    pub c_ground: Complex<T>,
    pub c_target: Complex<T>,
    pub p_ground: T,
    pub p_target: T,
    /// Sorted by generation index.
    pub unwanted: Vec<UnwantedRecord<T>>,
    pub pruned_mass: T,
    /// Unwanted probability still tracked but below the report threshold.
    pub sub_threshold_mass: T,
}

impl<T: Real> RunReport<T> {
    pub fn unwanted_count(&self) -> usize {
        self.unwanted.len()
    }

    pub fn unwanted_probabilities(&self) -> Vec<T> {
        self.unwanted.iter().map(|r| r.probability).collect()
    }

    /// `1 − (everything accounted for)`, normalized.
    pub fn accounting_residual(&self) -> T {
        let f = self.convention.factor::<T>();
        let listed = self.unwanted.iter().fold(T::zero(), |acc, r| acc + r.probability);
        T::one() - (self.p_ground + self.p_target + listed) / f - self.pruned_mass - self.sub_threshold_mass
    }
}

/// The ground state `|0…0⟩` and the CN target `|10…01⟩`.
pub fn desired_states(n: usize) -> Result<(BasisState, BasisState)> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 spins, got {n}")));
    }
    Ok((BasisState::zeros(n), BasisState::from_ones(n, &[n - 1, 0])?))
}

pub fn classify_final<T: Real>(state: &SparseState<T>, opts: &ReportOptions<T>) -> Result<RunReport<T>> {
    if !(opts.threshold >= T::zero()) {
        return Err(Error::invalid(format!("report threshold must be non-negative, got {}", opts.threshold)));
    }
    let (ground, target) = desired_states(state.n())?;
    let f = opts.convention.factor::<T>();
    let mut unwanted = Vec::new();
    let mut sub_threshold_mass = T::zero();
    for (basis, c) in state.sorted_entries() {
        if *basis == ground || *basis == target {
            continue;
        }
        let p = c.norm_sqr();
        if p < opts.threshold || p == T::zero() {
            sub_threshold_mass = sub_threshold_mass + p;
            continue;
        }
        let generation_index = state
            .generation_index(basis)
            .ok_or_else(|| Error::Internal(format!("tracked state {basis:?} missing from the generation log")))?;
        unwanted.push(UnwantedRecord {
            state: basis.clone(),
            probability: p * f,
            generation_index,
            excitation_count: basis.count_ones(),
        });
    }
    unwanted.sort_by_key(|r| r.generation_index);
    let c_ground = state.amplitude(&ground);
    let c_target = state.amplitude(&target);
    Ok(RunReport {
        n: state.n(),
        convention: opts.convention,
        threshold: opts.threshold,
        c_ground,
        c_target,
        p_ground: c_ground.norm_sqr() * f,
        p_target: c_target.norm_sqr() * f,
        unwanted,
        pruned_mass: state.pruned_mass(),
        sub_threshold_mass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Band {
    pub count: usize,
    pub min_p: f64,
    pub median_p: f64,
    pub max_p: f64,
}

impl Band {
    pub fn contains(&self, p: f64) -> bool {
        p >= self.min_p && p <= self.max_p
    }
}

/// Bands in ascending order of probability.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BandSummary {
    pub gap_decades: f64,
    pub bands: Vec<Band>,
}

impl BandSummary {
    /// Index of the band holding `p`, if any.
    pub fn band_of(&self, p: f64) -> Option<usize> {
        self.bands.iter().position(|b| b.contains(p))
    }
}

/// Splits probabilities into bands: sorted by value, a new band opens
/// wherever neighbors are more than `gap_decades` apart in log₁₀.
pub fn detect_bands<T: Real>(probabilities: &[T], gap_decades: f64) -> Result<BandSummary> {
    if probabilities.is_empty() {
        return Err(Error::invalid("cannot detect bands in an empty list"));
    }
    if !(gap_decades > 0.0) || !gap_decades.is_finite() {
        return Err(Error::invalid(format!("band gap must be positive, got {gap_decades}")));
    }
    let mut sorted: Vec<f64> = probabilities.iter().map(|p| p.to_f64_lossless()).collect();
    if let Some(bad) = sorted.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
        return Err(Error::invalid(format!("band detection needs positive finite probabilities, got {bad}")));
    }
    sorted.sort_by(f64::total_cmp);
    let mut bands = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || sorted[i].log10() - sorted[i - 1].log10() > gap_decades {
            bands.push(band_stats(&sorted[start..i]));
            start = i;
        }
    }
    Ok(BandSummary { gap_decades, bands })
}

fn band_stats(sorted: &[f64]) -> Band {
    let m = sorted.len();
    let median_p = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
    Band { count: m, min_p: sorted[0], median_p, max_p: sorted[m - 1] }
}

/// Runs [`detect_bands`] again inside each band with a finer gap.
pub fn detect_sub_bands<T: Real>(probabilities: &[T], outer: &BandSummary, gap_decades: f64) -> Result<Vec<BandSummary>> {
    outer
        .bands
        .iter()
        .map(|band| {
            let members: Vec<f64> =
                probabilities.iter().map(|p| p.to_f64_lossless()).filter(|p| band.contains(*p)).collect();
            detect_bands(&members, gap_decades)
        })
        .collect()
}

/// Per band, how many unwanted states have each number of flipped spins.
pub fn excitation_profile<T: Real>(report: &RunReport<T>, bands: &BandSummary) -> Vec<BTreeMap<usize, usize>> {
    let mut out = vec![BTreeMap::new(); bands.bands.len()];
    for r in &report.unwanted {
        if let Some(b) = bands.band_of(r.probability.to_f64_lossless()) {
            *out[b].entry(r.excitation_count).or_insert(0) += 1;
        }
    }
    out
}

/// Everything one simulation needs besides the pulse sequence.
#[derive(Clone, Debug)]
pub struct RunSetup<T> {
    pub params: ChainParams<T>,
    pub rabi: T,
    pub engine: EngineConfig<T>,
    pub report: ReportOptions<T>,
}

pub struct RunOutput<T> {
    pub sequence: PulseSequence<T>,
    pub state: SparseState<T>,
    pub trace: Vec<TraceRow<T>>,
    pub report: RunReport<T>,
}

/// Compiles the CN sequence, applies `distortion`, runs it from the ground
/// state and classifies the result.
pub fn run_cn<T: Real>(setup: &RunSetup<T>, distortion: Option<&DistortionSpec<T>>) -> Result<RunOutput<T>> {
    let mut sequence = compile_cn_remote(&setup.params, setup.rabi)?;
    if let Some(spec) = distortion {
        sequence = distort(&sequence, spec)?;
    }
    let initial = SparseState::from_basis(BasisState::zeros(setup.params.n()));
    let (state, trace) = run_sequence(initial, &sequence.pulses, &setup.params, &setup.engine)?;
    let report = classify_final(&state, &setup.report)?;
    Ok(RunOutput { sequence, state, trace, report })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    OmegaSweep,
    BlockOffset,
    RandomMagnitude,
    RandomBlockLength,
    BlockPosition,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::OmegaSweep,
        ExperimentKind::BlockOffset,
        ExperimentKind::RandomMagnitude,
        ExperimentKind::RandomBlockLength,
        ExperimentKind::BlockPosition,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::OmegaSweep => "omega_sweep",
            ExperimentKind::BlockOffset => "block_offset",
            ExperimentKind::RandomMagnitude => "random_magnitude",
            ExperimentKind::RandomBlockLength => "random_block_length",
            ExperimentKind::BlockPosition => "block_position",
        }
    }

    /// Name written to the `knob_name` column.
    pub fn knob_name(self) -> &'static str {
        match self {
            ExperimentKind::OmegaSweep => "rabi",
            ExperimentKind::BlockOffset | ExperimentKind::RandomBlockLength => "delta_k",
            ExperimentKind::RandomMagnitude => "epsilon0",
            ExperimentKind::BlockPosition => "k1",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
            Error::invalid(format!("unknown experiment {s:?} (one of {})", names.join(", ")))
        })
    }
}

/// The fixed parameters of an experiment; the swept knob replaces one of
/// them. Block lengths count distorted π-pulses, so a length of 0 is the
/// undistorted baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Experiment<T> {
    pub kind: ExperimentKind,
    /// First distorted π-pulse.
    pub k1: usize,
    pub block_len: usize,
    pub epsilon0: T,
    pub seed: u64,
}

impl<T: Real> Experiment<T> {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        let (k1, block_len, epsilon0) = match kind {
            ExperimentKind::OmegaSweep => (1, 0, 0.0),
            ExperimentKind::BlockOffset => (10, 0, 0.001),
            ExperimentKind::RandomMagnitude => (10, 31, 0.0),
            ExperimentKind::RandomBlockLength => (10, 0, 0.05),
            ExperimentKind::BlockPosition => (1, 15, 0.005),
        };
        Self { kind, k1, block_len, epsilon0: T::lit(epsilon0), seed }
    }

    fn mode(&self) -> DistortionMode {
        match self.kind {
            ExperimentKind::BlockOffset => DistortionMode::FixedOffset,
            _ => DistortionMode::UniformRandom,
        }
    }

    /// Rabi frequency and distortion for one grid point.
    pub fn point(&self, base_rabi: T, knob: T) -> Result<(T, Option<DistortionSpec<T>>)> {
        let as_count = |x: T| -> Result<usize> {
            let v = x.to_f64_lossless();
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!("{} must be a non-negative integer, got {v}", self.kind.knob_name())))
            }
        };
        let (rabi, k1, len, eps) = match self.kind {
            ExperimentKind::OmegaSweep => return Ok((knob, None)),
            ExperimentKind::BlockOffset | ExperimentKind::RandomBlockLength => {
                (base_rabi, self.k1, as_count(knob)?, self.epsilon0)
            }
            ExperimentKind::RandomMagnitude => (base_rabi, self.k1, self.block_len, knob),
            ExperimentKind::BlockPosition => (base_rabi, as_count(knob)?, self.block_len, self.epsilon0),
        };
        if len == 0 || eps == T::zero() {
            return Ok((rabi, None));
        }
        let spec = DistortionSpec {
            mode: self.mode(),
            k1,
            k2: k1 + len - 1,
            epsilon0: eps,
            seed: self.seed,
            tau_policy: TauPolicy::Refit,
        };
        Ok((rabi, Some(spec)))
    }
}

/// One grid point. A failed point keeps its error and NaN/empty fields.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow<T> {
    pub knob_name: &'static str,
    pub knob_value: T,
    pub c0_sq: T,
    pub target_sq: T,
    pub unwanted_count: Option<usize>,
    pub pruned_mass: T,
    pub seed: u64,
    pub error: Option<String>,
}

/// One full compile + run per grid value, points in parallel, rows in grid
/// order. Every point reuses the experiment seed.
pub fn sweep<T: Real>(experiment: &Experiment<T>, grid: &[T], base: &RunSetup<T>) -> Result<Vec<SweepRow<T>>> {
    if grid.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    let rows = grid
        .par_iter()
        .map(|&knob| {
            let outcome = experiment.point(base.rabi, knob).and_then(|(rabi, spec)| {
                let setup = RunSetup { rabi, ..base.clone() };
                run_cn(&setup, spec.as_ref())
            });
            let mut row = SweepRow {
                knob_name: experiment.kind.knob_name(),
                knob_value: knob,
                c0_sq: T::nan(),
                target_sq: T::nan(),
                unwanted_count: None,
                pruned_mass: T::nan(),
                seed: experiment.seed,
                error: None,
            };
            match outcome {
                Ok(out) => {
                    row.c0_sq = out.report.p_ground;
                    row.target_sq = out.report.p_target;
                    row.unwanted_count = Some(out.report.unwanted_count());
                    row.pruned_mass = out.report.pruned_mass;
                }
                Err(e) => {
                    log::warn!("sweep point {}={knob} failed: {e}", experiment.kind.knob_name());
                    row.error = Some(e.to_string());
                }
            }
            row
        })
        .collect();
    Ok(rows)
}

fn f(x: impl Real) -> String {
    fmt_float(x.to_f64_lossless())
}

pub fn write_unwanted_csv<T: Real, W: Write>(writer: W, report: &RunReport<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["generation_index", "basis_hex", "ones_positions", "excitation_count", "probability"])?;
    for r in &report.unwanted {
        w.write_record([
            r.generation_index.to_string(),
            r.state.to_hex(),
            r.state.ones_field(),
            r.excitation_count.to_string(),
            f(r.probability),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv<T: Real, W: Write>(writer: W, trace: &[TraceRow<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pulse_index", "omega", "rabi", "tau", "tracked_states", "norm", "pruned_mass_cumulative"])?;
    for r in trace {
        w.write_record([
            r.pulse_index.to_string(),
            f(r.omega),
            f(r.rabi),
            f(r.tau),
            r.tracked_states.to_string(),
            f(r.norm),
            f(r.pruned_mass_cumulative),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<T: Real, W: Write>(writer: W, rows: &[SweepRow<T>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["knob_name", "knob_value", "c0_sq", "target_sq", "unwanted_count", "pruned_mass", "seed"])?;
    for r in rows {
        w.write_record([
            r.knob_name.to_string(),
            f(r.knob_value),
            f(r.c0_sq),
            f(r.target_sq),
            r.unwanted_count.map(|c| c.to_string()).unwrap_or_default(),
            f(r.pruned_mass),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileEntry {
    pub excitation_count: usize,
    pub states: usize,
}

/// The `report.json` document.
#[derive(Clone, Debug, Serialize)]
pub struct ReportDocument {
    pub n: usize,
    pub convention: Convention,
    pub threshold: f64,
    pub c_ground: [f64; 2],
    pub c_target: [f64; 2],
    pub p_ground: f64,
    pub p_target: f64,
    pub unwanted_count: usize,
    pub unwanted_probability: f64,
    pub pruned_mass: f64,
    pub sub_threshold_mass: f64,
    pub accounting_residual: f64,
    pub bands: Option<BandSummary>,
    pub sub_bands: Vec<BandSummary>,
    pub excitation_profile: Vec<Vec<ProfileEntry>>,
}

impl ReportDocument {
    pub fn new<T: Real>(report: &RunReport<T>) -> Result<Self> {
        let probs = report.unwanted_probabilities();
        let (bands, sub_bands, profile) = if probs.is_empty() {
            (None, Vec::new(), Vec::new())
        } else {
            let bands = detect_bands(&probs, DEFAULT_BAND_GAP)?;
            let sub = detect_sub_bands(&probs, &bands, DEFAULT_SUB_BAND_GAP)?;
            let profile = excitation_profile(report, &bands)
                .into_iter()
                .map(|h| h.into_iter().map(|(excitation_count, states)| ProfileEntry { excitation_count, states }).collect())
                .collect();
            (Some(bands), sub, profile)
        };
        let c = |z: Complex<T>| [z.re.to_f64_lossless(), z.im.to_f64_lossless()];
        Ok(Self {
            n: report.n,
            convention: report.convention,
            threshold: report.threshold.to_f64_lossless(),
            c_ground: c(report.c_ground),
            c_target: c(report.c_target),
            p_ground: report.p_ground.to_f64_lossless(),
            p_target: report.p_target.to_f64_lossless(),
            unwanted_count: report.unwanted_count(),
            unwanted_probability: probs.iter().map(|p| p.to_f64_lossless()).sum(),
            pruned_mass: report.pruned_mass.to_f64_lossless(),
            sub_threshold_mass: report.sub_threshold_mass.to_f64_lossless(),
            accounting_residual: report.accounting_residual().to_f64_lossless(),
            bands,
            sub_bands,
            excitation_profile: profile,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup(n: usize, rabi: f64) -> RunSetup<f64> {
        RunSetup {
            params: ChainParams::with_defaults(n).unwrap(),
            rabi,
            engine: EngineConfig::default(),
            report: ReportOptions::default(),
        }
    }

    #[test]
    fn ideal_final_state_has_no_unwanted() {
        let n = 5;
        let (g, t) = desired_states(n).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let state = SparseState::from_amplitudes(n, [(g, Complex::new(h, 0.0)), (t, Complex::new(0.0, -h))]).unwrap();
        let opts = ReportOptions { threshold: 5e-7, convention: Convention::Normalized };
        let r = classify_final(&state, &opts).unwrap();
        assert!(r.unwanted.is_empty());
        assert!((r.p_ground - 0.5).abs() < 1e-15 && (r.p_target - 0.5).abs() < 1e-15);
        assert!(r.accounting_residual().abs() < 1e-15);
        let doubled = classify_final(&state, &ReportOptions { convention: Convention::PaperDoubled, ..opts }).unwrap();
        assert!((doubled.p_ground - 1.0).abs() < 1e-15);
        assert!(doubled.accounting_residual().abs() < 1e-15);
    }

    #[test]
    fn report_threshold_splits_off_small_states() {
        let n = 4;
        let (g, t) = desired_states(n).unwrap();
        let small = BasisState::from_ones(n, &[1]).unwrap();
        let tiny = BasisState::from_ones(n, &[2]).unwrap();
        let a = (0.5f64 - 0.5e-3).sqrt();
        let entries = [
            (g, Complex::new(a, 0.0)),
            (t, Complex::new(a, 0.0)),
            (small, Complex::new((0.999e-3f64).sqrt(), 0.0)),
            (tiny, Complex::new((1e-6f64).sqrt(), 0.0)),
        ];
        let state = SparseState::from_amplitudes(n, entries).unwrap();
        let r = classify_final(&state, &ReportOptions { threshold: 1e-5, convention: Convention::Normalized }).unwrap();
        assert_eq!(r.unwanted_count(), 1);
        assert_eq!(r.unwanted[0].excitation_count, 1);
        assert!((r.sub_threshold_mass - 1e-6).abs() < 1e-18);
        assert!(r.accounting_residual().abs() < 1e-15);
    }

    #[test]
    fn two_clusters_make_two_bands() {
        let mut probs: Vec<f64> = (0..50).map(|i| 1e-3 * (1.0 + 0.01 * i as f64)).collect();
        probs.extend((0..200).map(|i| 1e-6 * (1.0 + 0.005 * i as f64)));
        let s = detect_bands(&probs, DEFAULT_BAND_GAP).unwrap();
        assert_eq!(s.bands.len(), 2);
        assert_eq!(s.bands[0].count, 200);
        assert_eq!(s.bands[1].count, 50);
        let ratio = s.bands[0].median_p / s.bands[1].median_p;
        assert!((ratio.log10() + 3.0).abs() < 0.2, "{ratio}");
        assert!(s.bands[0].max_p < s.bands[1].min_p);
    }

    #[test]
    fn single_cluster_and_empty_input() {
        let s = detect_bands(&[1e-4, 2e-4, 3e-4], DEFAULT_BAND_GAP).unwrap();
        assert_eq!(s.bands.len(), 1);
        assert_eq!(s.bands[0].median_p, 2e-4);
        assert!(detect_bands::<f64>(&[], DEFAULT_BAND_GAP).is_err());
        assert!(detect_bands(&[0.0, 1e-3], DEFAULT_BAND_GAP).is_err());
        assert!(detect_bands(&[1e-3], 0.0).is_err());
    }

    #[test]
    fn sub_bands_split_finer() {
        let probs = [1e-3, 1.1e-3, 5e-3, 5.5e-3, 1e-7];
        let outer = detect_bands(&probs, 1.0).unwrap();
        assert_eq!(outer.bands.len(), 2);
        let sub = detect_sub_bands(&probs, &outer, 0.5).unwrap();
        assert_eq!(sub[0].bands.len(), 1);
        assert_eq!(sub[1].bands.len(), 2);
    }

    proptest! {
        #[test]
        fn bands_are_permutation_invariant_and_scale_covariant(
            logs in prop::collection::vec(-9.0f64..-1.0, 1..60),
            shift in -3.0f64..3.0,
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let probs: Vec<f64> = logs.iter().map(|l| 10f64.powf(*l)).collect();
            let base = detect_bands(&probs, 1.0).unwrap();
            let mut shuffled = probs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(&detect_bands(&shuffled, 1.0).unwrap(), &base);
            // Scaling by an exact power of two keeps every log gap intact.
            let scale = 2f64.powi(shift.round() as i32 * 3);
            let scaled: Vec<f64> = probs.iter().map(|p| p * scale).collect();
            let counts: Vec<usize> = detect_bands(&scaled, 1.0).unwrap().bands.iter().map(|b| b.count).collect();
            prop_assert_eq!(counts, base.bands.iter().map(|b| b.count).collect::<Vec<_>>());
            let mut prev = 0.0;
            for b in &base.bands {
                prop_assert!(b.min_p > prev && b.min_p <= b.median_p && b.median_p <= b.max_p);
                prev = b.max_p;
            }
        }
    }

    #[test]
    fn excitation_profile_counts_flipped_spins() {
        let n = 4;
        let (g, t) = desired_states(n).unwrap();
        let a = (0.5f64 - 1e-3).sqrt();
        let entries = [
            (g, Complex::new(a, 0.0)),
            (t.clone(), Complex::new(a, 0.0)),
            (BasisState::from_ones(n, &[1, 2, 3]).unwrap(), Complex::new((1.9e-3f64).sqrt(), 0.0)),
            (BasisState::from_ones(n, &[2]).unwrap(), Complex::new((1e-4f64).sqrt(), 0.0)),
        ];
        let state = SparseState::from_amplitudes(n, entries).unwrap();
        let r = classify_final(&state, &ReportOptions { threshold: 1e-7, convention: Convention::Normalized }).unwrap();
        let bands = detect_bands(&r.unwanted_probabilities(), 1.0).unwrap();
        let prof = excitation_profile(&r, &bands);
        assert_eq!(prof.len(), 2);
        assert_eq!(prof[0].get(&1), Some(&1));
        assert_eq!(prof[1].get(&3), Some(&1));
        assert_eq!(t.count_ones(), 2);
    }

    #[test]
    fn experiment_points() {
        let e = Experiment::<f64>::new(ExperimentKind::BlockOffset, 7);
        assert_eq!(e.point(0.1, 0.0).unwrap(), (0.1, None));
        let (_, spec) = e.point(0.1, 5.0).unwrap();
        let spec = spec.unwrap();
        assert_eq!((spec.k1, spec.k2, spec.mode), (10, 14, DistortionMode::FixedOffset));
        assert!(e.point(0.1, 1.5).is_err());
        let m = Experiment::<f64>::new(ExperimentKind::RandomMagnitude, 7);
        assert_eq!(m.point(0.1, 0.0).unwrap().1, None);
        assert_eq!(m.point(0.1, 0.01).unwrap().1.unwrap().k2, 40);
        let p = Experiment::<f64>::new(ExperimentKind::BlockPosition, 7);
        let spec = p.point(0.1, 20.0).unwrap().1.unwrap();
        assert_eq!((spec.k1, spec.k2), (20, 34));
        assert_eq!(Experiment::<f64>::new(ExperimentKind::OmegaSweep, 0).point(0.1, 0.12).unwrap(), (0.12, None));
        assert_eq!("block_position".parse::<ExperimentKind>().unwrap(), ExperimentKind::BlockPosition);
        assert!("omega".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn sweep_keeps_grid_order_and_records_failures() {
        let base = setup(12, 0.1);
        let e = Experiment::new(ExperimentKind::BlockOffset, 3);
        let rows = sweep(&e, &[0.0, 3.0, 100.0, 1.0], &base).unwrap();
        let knobs: Vec<f64> = rows.iter().map(|r| r.knob_value).collect();
        assert_eq!(knobs, vec![0.0, 3.0, 100.0, 1.0]);
        assert!(rows[2].error.is_some() && rows[2].c0_sq.is_nan() && rows[2].unwanted_count.is_none());
        assert!(rows[0].error.is_none() && rows[1].error.is_none());
        assert!(sweep(&e, &[], &base).is_err());
    }

    #[test]
    fn random_magnitude_zero_is_baseline() {
        let base = setup(30, 0.1);
        let e = Experiment::new(ExperimentKind::RandomMagnitude, 11);
        let rows = sweep(&e, &[0.0], &base).unwrap();
        let plain = run_cn(&base, None).unwrap().report;
        assert_eq!(rows[0].c0_sq, plain.p_ground);
        assert_eq!(rows[0].unwanted_count, Some(plain.unwanted_count()));
    }

    #[test]
    fn csv_headers_and_float_format() {
        let rows = vec![SweepRow {
            knob_name: "rabi",
            knob_value: 0.1f64,
            c0_sq: 0.5,
            target_sq: 1.0,
            unwanted_count: None,
            pruned_mass: f64::NAN,
            seed: 9,
            error: Some("x".into()),
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "knob_name,knob_value,c0_sq,target_sq,unwanted_count,pruned_mass,seed\n\
             rabi,1.0000000000000001e-1,5.0000000000000000e-1,1.0000000000000000e0,,NaN,9\n"
        );
    }

    #[test]
    fn run_artifacts_are_well_formed() {
        let out = run_cn(&setup(10, 0.14), None).unwrap();
        let mut buf = Vec::new();
        write_unwanted_csv(&mut buf, &out.report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("generation_index,basis_hex,ones_positions,excitation_count,probability"));
        assert_eq!(lines.count(), out.report.unwanted_count());
        let gens: Vec<usize> = out.report.unwanted.iter().map(|r| r.generation_index).collect();
        assert!(gens.windows(2).all(|w| w[0] < w[1]));
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &out.trace).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), out.trace.len() + 1);
        let doc = ReportDocument::new(&out.report).unwrap();
        assert!(doc.accounting_residual.abs() < 1e-9);
        assert_eq!(doc.unwanted_count, out.report.unwanted_count());
    }
}
