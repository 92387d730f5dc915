//! Run configuration: defaults, a `key = value` file, then command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use spinchain::analysis::{Convention, Experiment, ExperimentKind, ReportOptions, RunSetup};
use spinchain::chain::{ChainParams, DEFAULT_OMEGA0};
use spinchain::engine::{EngineConfig, DEFAULT_PRUNE_THRESHOLD};
use spinchain::sequence::{DistortionMode, DistortionSpec, TauPolicy};

pub const DEFAULT_N: usize = 200;
pub const DEFAULT_RABI: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub delta_omega: f64,
    pub rabi: f64,
    /// Normalized probability below which states are dropped, and the
    /// reporting threshold for unwanted states.
    pub threshold: f64,
    pub convention: Convention,
    pub distort_mode: Option<DistortionMode>,
    pub distort_range: Option<(usize, usize)>,
    pub epsilon0: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub grid: Option<Vec<f64>>,
    pub experiment: Option<ExperimentKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            delta_omega: spinchain::chain::DEFAULT_DELTA_OMEGA,
            rabi: DEFAULT_RABI,
            threshold: DEFAULT_PRUNE_THRESHOLD,
            convention: Convention::PaperDoubled,
            distort_mode: None,
            distort_range: None,
            epsilon0: None,
            seed: 0,
            out: PathBuf::from("."),
            grid: None,
            experiment: None,
        }
    }
}

/// `none` disables distortion.
pub fn parse_distort_mode(s: &str) -> Result<Option<DistortionMode>> {
    match s {
        "none" => Ok(None),
        "fixed_offset" | "fixed" => Ok(Some(DistortionMode::FixedOffset)),
        "uniform_random" | "random" => Ok(Some(DistortionMode::UniformRandom)),
        other => bail!("unknown distortion mode {other:?} (none | fixed_offset | uniform_random)"),
    }
}

/// `K1:K2` or `K1..K2`, both inclusive.
pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once("..")
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| anyhow!("range {s:?} should look like K1:K2"))?;
    let k1 = a.trim().parse().with_context(|| format!("bad range start in {s:?}"))?;
    let k2 = b.trim().parse().with_context(|| format!("bad range end in {s:?}"))?;
    if k1 > k2 {
        bail!("range {s:?} is reversed");
    }
    Ok((k1, k2))
}

/// Either a comma list (`0.1,0.12`) or `START:STOP:STEP` with both ends
/// included.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        bail!("grid is empty");
    }
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step): (f64, f64, f64) =
                (start.trim().parse()?, stop.trim().parse()?, step.trim().parse()?);
            if !(step > 0.0) || !(stop >= start) {
                bail!("grid {s:?} needs STOP ≥ START and STEP > 0");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                bail!("grid {s:?} has {count} points");
            }
            (0..count).map(|i| start + step * i as f64).collect()
        }
        [_] => s
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad grid value {v:?}")))
            .collect::<Result<Vec<_>>>()?,
        _ => bail!("grid {s:?} should be a comma list or START:STOP:STEP"),
    };
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        bail!("grid value {bad} is not finite");
    }
    Ok(values)
}

impl RunConfig {
    /// Applies one setting. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let num = |v: &str| f64::from_str(v).with_context(|| format!("{key}: {v:?} is not a number"));
        match key.trim().replace('-', "_").as_str() {
            "n" => self.n = value.parse().with_context(|| format!("n: {value:?} is not a count"))?,
            "delta_omega" => self.delta_omega = num(value)?,
            "rabi" => self.rabi = num(value)?,
            "threshold" => self.threshold = num(value)?,
            "convention" => self.convention = value.parse()?,
            "distort_mode" => self.distort_mode = parse_distort_mode(value)?,
            "distort_range" => self.distort_range = Some(parse_range(value)?),
            "epsilon0" => self.epsilon0 = Some(num(value)?),
            "seed" => self.seed = value.parse().with_context(|| format!("seed: {value:?} is not a u64"))?,
            "out" => self.out = PathBuf::from(value),
            "grid" => self.grid = Some(parse_grid(value)?),
            "experiment" => self.experiment = Some(value.parse()?),
            other => bail!("unknown setting {other:?}"),
        }
        Ok(())
    }

    /// Applies a `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
            self.set(key, value).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        self.apply_text(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi > 0.0) || !self.rabi.is_finite() {
            bail!("rabi must be positive, got {}", self.rabi);
        }
        if !(self.delta_omega > 0.0) || !self.delta_omega.is_finite() {
            bail!("delta_omega must be positive, got {}", self.delta_omega);
        }
        if !(self.threshold >= 0.0) || !(self.threshold < 1.0) {
            bail!("threshold must be in [0, 1), got {}", self.threshold);
        }
        if let Some(e) = self.epsilon0 {
            if !(e >= 0.0) || !e.is_finite() {
                bail!("epsilon0 must be non-negative, got {e}");
            }
        }
        Ok(())
    }

    pub fn chain(&self) -> Result<ChainParams<f64>> {
        Ok(ChainParams::uniform(self.n, DEFAULT_OMEGA0, self.delta_omega)?)
    }

    pub fn setup(&self) -> Result<RunSetup<f64>> {
        self.validate()?;
        Ok(RunSetup {
            params: self.chain()?,
            rabi: self.rabi,
            engine: EngineConfig::with_threshold(self.threshold),
            report: ReportOptions { threshold: self.threshold, convention: self.convention },
        })
    }

    /// The distortion for `run`, if a mode is set.
    pub fn distortion(&self) -> Result<Option<DistortionSpec<f64>>> {
        let Some(mode) = self.distort_mode else {
            return Ok(None);
        };
        let (k1, k2) = self.distort_range.ok_or_else(|| anyhow!("distort_mode needs distort_range"))?;
        let epsilon0 = self.epsilon0.ok_or_else(|| anyhow!("distort_mode needs epsilon0"))?;
        Ok(Some(DistortionSpec { mode, k1, k2, epsilon0, seed: self.seed, tau_policy: TauPolicy::Refit }))
    }

    /// The sweep experiment with any configured range or `ε₀` replacing the
    /// experiment's fixed values.
    pub fn experiment(&self, kind: ExperimentKind) -> Experiment<f64> {
        let mut e = Experiment::new(kind, self.seed);
        if let Some((k1, k2)) = self.distort_range {
            e.k1 = k1;
            e.block_len = k2 - k1 + 1;
        }
        if let Some(eps) = self.epsilon0 {
            e.epsilon0 = eps;
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("# chain\nn = 12\nrabi=0.14 # Fig\n\nconvention = normalized\ndistort-range = 3:7\n").unwrap();
        assert_eq!((c.n, c.rabi, c.convention, c.distort_range), (12, 0.14, Convention::Normalized, Some((3, 7))));
        c.set("rabi", "0.2").unwrap();
        assert_eq!(c.rabi, 0.2);
        assert!(c.apply_text("bogus = 1").is_err());
        assert!(c.apply_text("n 12").is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        let g = parse_grid("0:10:2").unwrap();
        assert_eq!(g, vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(parse_grid("0.08:0.16:0.01").unwrap().len(), 9);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn ranges_and_modes() {
        assert_eq!(parse_range("10..40").unwrap(), (10, 40));
        assert!(parse_range("5:2").is_err());
        assert_eq!(parse_distort_mode("none").unwrap(), None);
        assert!(parse_distort_mode("gauss").is_err());
    }

    #[test]
    fn distortion_needs_range_and_epsilon() {
        let mut c = RunConfig::default();
        c.set("distort_mode", "uniform_random").unwrap();
        assert!(c.distortion().is_err());
        c.set("distort_range", "10:20").unwrap();
        c.set("epsilon0", "0.01").unwrap();
        let d = c.distortion().unwrap().unwrap();
        assert_eq!((d.k1, d.k2), (10, 20));
    }
}
