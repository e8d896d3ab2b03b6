//! Experiment configuration: a TOML document with one table per module.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::profiles::{evaluate_selfsimilar, shoot, ProfileKind, ShootSearch};
use crate::radial::{RadialField, RadialGrid};
use crate::regimes::{validate, ExponentTriple, Field, RegimeError};
use crate::solver::{Barenblatt, Caps, RegularizedProblem, RunOptions, SourceMode};

/// A configuration problem, named by the offending key.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("config error at `{key}`: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { key: key.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Classify,
    Simulate,
    Profile,
    Sweep,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsSpec {
    pub m: f64,
    pub p: f64,
    pub sigma: f64,
    pub dim: u32,
}

impl ExponentsSpec {
    pub fn triple(&self) -> Result<ExponentTriple, ConfigError> {
        validate(self.m, self.p, self.sigma, f64::from(self.dim)).map_err(regime_error)
    }
}

fn regime_error(e: RegimeError) -> ConfigError {
    let key = match &e {
        RegimeError::OutOfRange { field, .. } => match field {
            Field::M => "m",
            Field::P => "p",
            Field::Sigma => "sigma",
            Field::Dim => "dim",
        },
        _ => "exponents",
    };
    ConfigError::new(key, e.to_string())
}

fn default_ratio() -> f64 {
    1.0
}

/// Uniform grid when `ratio = 1`, otherwise cell widths growing by `ratio`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub r_max: f64,
    pub cells: usize,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
}

impl GridSpec {
    pub fn build(&self, dim: u32) -> Result<Arc<RadialGrid>, ConfigError> {
        if !(self.r_max > 0.0 && self.r_max.is_finite()) {
            return Err(ConfigError::new("r_max", format!("must be positive, got {}", self.r_max)));
        }
        if self.cells == 0 {
            return Err(ConfigError::new("cells", "must be positive"));
        }
        RadialGrid::geometric(dim, self.r_max, self.cells, self.ratio)
            .map(Arc::new)
            .map_err(|e| ConfigError::new("ratio", e.to_string()))
    }
}

fn one() -> f64 {
    1.0
}

/// Named initial-data families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    /// `amplitude (1 - (r/radius)²)_+²`.
    Bump { amplitude: f64, radius: f64 },
    /// `amplitude` on `r < radius`, zero outside.
    Indicator { amplitude: f64, radius: f64 },
    /// Source-type porous-medium solution with constant `c`, taken at time `t0`.
    Barenblatt {
        #[serde(default = "one")]
        c: f64,
        #[serde(default = "one")]
        t0: f64,
    },
    /// A shooting profile at self-similar time `t`, rescaled to peak `amplitude` if given.
    Profile {
        kind: String,
        #[serde(default = "one")]
        t: f64,
        #[serde(default)]
        amplitude: Option<f64>,
    },
}

impl InitialSpec {
    pub fn build(&self, e: &ExponentTriple, grid: Arc<RadialGrid>) -> Result<RadialField, ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::new(key, format!("must be positive, got {v}")))
            }
        };
        let field = match *self {
            Self::Bump { amplitude, radius } => {
                positive("amplitude", amplitude)?;
                positive("radius", radius)?;
                RadialField::from_fn(grid, |r| amplitude * (1.0 - (r / radius).powi(2)).max(0.0).powi(2))
            }
            Self::Indicator { amplitude, radius } => {
                positive("amplitude", amplitude)?;
                positive("radius", radius)?;
                RadialField::from_fn(grid, |r| if r < radius { amplitude } else { 0.0 })
            }
            Self::Barenblatt { c, t0 } => {
                positive("c", c)?;
                positive("t0", t0)?;
                Barenblatt::new(e.dim(), e.m(), c).field(grid, t0)
            }
            Self::Profile { ref kind, t, amplitude } => {
                let kind: ProfileKind = kind.parse().map_err(|e: String| ConfigError::new("kind", e))?;
                positive("t", t)?;
                let prof =
                    shoot(kind, e, &ShootSearch::default()).map_err(|x| ConfigError::new("kind", x.to_string()))?;
                let f =
                    evaluate_selfsimilar(&prof, t, grid.clone()).map_err(|x| ConfigError::new("t", x.to_string()))?;
                match amplitude {
                    Some(a) => {
                        positive("amplitude", a)?;
                        let s = a / f.max();
                        RadialField::new(grid, f.values().iter().map(|v| v * s).collect())
                    }
                    None => Ok(f),
                }
            }
        };
        field.map_err(|e| ConfigError::new("family", e.to_string()))
    }
}

fn default_safety() -> f64 {
    0.9
}

fn default_series_every() -> u64 {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSpec {
    Full,
    DiffusionOnly,
    ReactionOnly,
}

impl From<ModeSpec> for SourceMode {
    fn from(m: ModeSpec) -> Self {
        match m {
            ModeSpec::Full => SourceMode::Full,
            ModeSpec::DiffusionOnly => SourceMode::DiffusionOnly,
            ModeSpec::ReactionOnly => SourceMode::ReactionOnly,
        }
    }
}

fn default_mode() -> ModeSpec {
    ModeSpec::Full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub eta: f64,
    pub horizon: f64,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_mode")]
    pub mode: ModeSpec,
    #[serde(default)]
    pub m_stop: Option<f64>,
    #[serde(default)]
    pub dt_floor: Option<f64>,
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default = "default_series_every")]
    pub series_every: u64,
    #[serde(default)]
    pub snapshots: Vec<f64>,
}

impl SolverSpec {
    pub fn problem(&self, e: ExponentTriple, u0: RadialField) -> Result<RegularizedProblem, ConfigError> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(ConfigError::new("eta", format!("must lie in (0, 1), got {}", self.eta)));
        }
        RegularizedProblem::new(e, self.eta, u0)
            .map_err(|x| ConfigError::new("eta", x.to_string()))?
            .with_mode(self.mode.into())
            .with_safety(self.safety)
            .map_err(|x| ConfigError::new("safety", x.to_string()))
    }

    pub fn options(&self) -> Result<RunOptions, ConfigError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::new("horizon", format!("must be positive, got {}", self.horizon)));
        }
        if self.series_every == 0 {
            return Err(ConfigError::new("series_every", "must be positive"));
        }
        let mut caps = Caps { m_stop: self.m_stop, dt_floor: self.dt_floor, ..Caps::default() };
        if let Some(n) = self.max_steps {
            caps.max_steps = n;
        }
        let mut snaps = self.snapshots.clone();
        if snaps.iter().any(|t| !(*t > 0.0 && *t <= self.horizon)) {
            return Err(ConfigError::new("snapshots", "times must lie in (0, horizon]"));
        }
        snaps.sort_by(f64::total_cmp);
        snaps.dedup();
        Ok(RunOptions::new(self.horizon).with_snapshots(snaps).with_caps(caps).with_series_every(self.series_every))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub kind: String,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

impl ProfileSpec {
    pub fn kind(&self) -> Result<ProfileKind, ConfigError> {
        self.kind.parse().map_err(|e: String| ConfigError::new("kind", e))
    }

    pub fn search(&self) -> Result<ShootSearch, ConfigError> {
        let mut s = ShootSearch::default();
        if let Some(lo) = self.lo {
            s.lo = lo;
        }
        if let Some(hi) = self.hi {
            s.hi = hi;
        }
        if !(s.lo > 0.0 && s.lo < s.hi && s.hi.is_finite()) {
            return Err(ConfigError::new("lo", format!("need 0 < lo < hi, got [{}, {}]", s.lo, s.hi)));
        }
        Ok(s)
    }
}

/// Axes of a phase-diagram sweep at the fixed `m`, `sigma`, `dim` of `[exponents]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Criterion numbers to run; empty means all.
    #[serde(default)]
    pub criteria: Vec<u32>,
    /// Artifact files to compare for bit-identity; their hashes must agree.
    #[serde(default)]
    pub compare: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; left out of the config hash.
    #[serde(default)]
    pub output: Option<String>,
    #[serde(default)]
    pub exponents: Option<ExponentsSpec>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub solver: Option<SolverSpec>,
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| toml_error(text, &e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization without the output directory.
    pub fn hash(&self) -> String {
        let canon = Self { output: None, ..self.clone() }.to_toml();
        Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn exponents(&self) -> Result<ExponentTriple, ConfigError> {
        section(&self.exponents, "exponents")?.triple()
    }
}

pub fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, ConfigError> {
    s.as_ref().ok_or_else(|| ConfigError::new(name, "section is missing"))
}

/// Names the key from a backticked field in the message, else from the line the error points at.
fn toml_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let msg = e.message();
    let quoted = msg.split('`').nth(1).filter(|k| !k.is_empty() && !k.contains(' '));
    let from_span = || {
        let start = e.span()?.start;
        let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
        let line = text[line_start..].lines().next()?;
        let (k, _) = line.split_once('=')?;
        Some(k.trim().trim_matches('"').to_string())
    };
    let key = quoted.map(str::to_string).or_else(from_span).unwrap_or_else(|| "config".to_string());
    ConfigError::new(key, msg.trim())
}
