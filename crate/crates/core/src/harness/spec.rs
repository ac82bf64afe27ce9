//! Experiment specifications in a small TOML dialect:
//!
//! ```text
//! grid = "ieee33-radial"          # fixture name or path to a grid file
//! model = "dc-linear"
//! sample_sizes = [100, 300, 1000]
//! noise_fractions = [0.0, 0.01]
//! trials = 15
//! seed = 1
//! thresholds = "tuned:10000"      # theorem | tuned:<T> | explicit:<t1>,<t2>,<t3>
//! injections = "gaussian:0.1"     # gaussian:<s> | common-factor:<s>,<rho> | csv:<path>
//! ```
//!
//! Optional keys: `mode` (`dc` or `lc`, defaults from the model),
//! `statistic` (`precision` or `normalized`, default precision),
//! `csv_base` (per-unit base for CSV loads, default 1), `tune_seeds`
//! (default 3).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::{fixtures, load_grid, Grid};
use crate::learner::{EdgeStatistic, Mode};
use crate::powerflow::Model;

#[derive(Clone, Debug, PartialEq)]
pub enum GridSource {
    Fixture(String),
    File(PathBuf),
}

impl GridSource {
    /// A fixture name if it is one, otherwise a path.
    pub fn parse(s: &str) -> GridSource {
        if fixtures::by_name(s).is_some() {
            GridSource::Fixture(s.to_string())
        } else {
            GridSource::File(PathBuf::from(s))
        }
    }

    pub fn load(&self) -> Result<Grid> {
        match self {
            GridSource::Fixture(name) => fixtures::by_name(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown fixture `{name}`"))),
            GridSource::File(path) => load_grid(path),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ThresholdSource {
    Theorem,
    /// Grid search at the given sample size.
    Tuned(usize),
    Explicit(f64, f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InjectionSource {
    Gaussian { sigma: f64 },
    CommonFactor { sigma: f64, rho: f64 },
    Csv { path: PathBuf, base: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub grid: GridSource,
    pub model: Model,
    pub mode: Mode,
    pub statistic: EdgeStatistic,
    pub sample_sizes: Vec<usize>,
    pub noise_fractions: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub thresholds: ThresholdSource,
    pub injections: InjectionSource,
    pub tune_seeds: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    grid: String,
    model: String,
    sample_sizes: Vec<usize>,
    #[serde(default = "default_noise")]
    noise_fractions: Vec<f64>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_thresholds")]
    thresholds: String,
    #[serde(default = "default_injections")]
    injections: String,
    mode: Option<String>,
    statistic: Option<String>,
    csv_base: Option<f64>,
    #[serde(default = "default_tune_seeds")]
    tune_seeds: usize,
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}
fn default_trials() -> usize {
    15
}
fn default_thresholds() -> String {
    "theorem".into()
}
fn default_injections() -> String {
    "gaussian:0.1".into()
}
fn default_tune_seeds() -> usize {
    3
}

fn spec_err(msg: impl Into<String>) -> Error {
    Error::Spec(msg.into())
}

fn numbers(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| spec_err(format!("invalid number `{}` in {what}", x.trim())))
        })
        .collect()
}

impl ThresholdSource {
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "theorem" => Ok(ThresholdSource::Theorem),
            "tuned" => args
                .trim()
                .parse()
                .map(ThresholdSource::Tuned)
                .map_err(|_| spec_err(format!("tuned thresholds need a sample size, got `{args}`"))),
            "explicit" => match numbers(args, "thresholds")?.as_slice() {
                &[a, b, c] if a > 0.0 && b > 0.0 && c > 0.0 => Ok(ThresholdSource::Explicit(a, b, c)),
                _ => Err(spec_err("explicit thresholds need three positive numbers")),
            },
            other => Err(spec_err(format!("unknown threshold source `{other}`"))),
        }
    }
}

impl InjectionSource {
    /// `base_dir` anchors relative CSV paths.
    pub fn parse(s: &str, csv_base: f64, base_dir: &Path) -> Result<Self> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| spec_err(format!("injection source `{s}` needs parameters")))?;
        let src = match kind.trim() {
            "gaussian" => match numbers(args, "injections")?.as_slice() {
                &[sigma] => InjectionSource::Gaussian { sigma },
                _ => return Err(spec_err("gaussian injections take one standard deviation")),
            },
            "common-factor" => match numbers(args, "injections")?.as_slice() {
                &[sigma, rho] => InjectionSource::CommonFactor { sigma, rho },
                _ => return Err(spec_err("common-factor injections take sigma and rho")),
            },
            "csv" => InjectionSource::Csv {
                path: base_dir.join(args.trim()),
                base: csv_base,
            },
            other => return Err(spec_err(format!("unknown injection source `{other}`"))),
        };
        match src {
            InjectionSource::Gaussian { sigma } | InjectionSource::CommonFactor { sigma, .. }
                if !(sigma > 0.0) =>
            {
                Err(spec_err("injection standard deviation must be positive"))
            }
            InjectionSource::Csv { base, .. } if !(base > 0.0) => {
                Err(spec_err("csv_base must be positive"))
            }
            src => Ok(src),
        }
    }
}

impl ExperimentSpec {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| spec_err(e.to_string()))?;
        let model: Model = raw.model.parse()?;
        let mode = match raw.mode {
            Some(m) => m.parse()?,
            None if model.has_magnitudes() => Mode::Lc,
            None => Mode::Dc,
        };
        if mode == Mode::Lc && !model.has_magnitudes() {
            return Err(spec_err(format!("mode lc needs magnitudes, which {model} does not produce")));
        }
        let grid = match GridSource::parse(&raw.grid) {
            GridSource::File(p) if p.is_relative() => GridSource::File(base_dir.join(p)),
            g => g,
        };
        let spec = ExperimentSpec {
            grid,
            model,
            mode,
            statistic: raw.statistic.as_deref().map(str::parse).transpose()?.unwrap_or_default(),
            sample_sizes: raw.sample_sizes,
            noise_fractions: raw.noise_fractions,
            trials: raw.trials,
            seed: raw.seed,
            thresholds: ThresholdSource::parse(&raw.thresholds)?,
            injections: InjectionSource::parse(&raw.injections, raw.csv_base.unwrap_or(1.0), base_dir)?,
            tune_seeds: raw.tune_seeds,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        ExperimentSpec::parse(&text, dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(spec_err("trials must be at least 1"));
        }
        if self.tune_seeds == 0 {
            return Err(spec_err("tune_seeds must be at least 1"));
        }
        if self.sample_sizes.is_empty() {
            return Err(spec_err("sample_sizes is empty"));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(spec_err("sample_sizes must be strictly ascending"));
        }
        if self.sample_sizes[0] < 2 {
            return Err(spec_err("sample sizes must be at least 2"));
        }
        if self.noise_fractions.is_empty() {
            return Err(spec_err("noise_fractions is empty"));
        }
        if self.noise_fractions.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(spec_err("noise fractions must be finite and non-negative"));
        }
        if self.statistic == EdgeStatistic::Normalized && self.thresholds == ThresholdSource::Theorem {
            return Err(spec_err("theorem thresholds apply to the precision statistic only"));
        }
        Ok(())
    }
}
