//! Run configuration: sectioned `key = value` text (TOML).
//!
//! ```text
//! [background]          r0, w0, w1, q0, a0
//! [grid]                l, nx | dx, cfl, t_final, output_stride
//! [scheme]              stencil_order (2|4), a_init (none|constraint), boundary (sponge|frozen)
//! [[bump]]              target (R|Rt|W|Wt|q|qt), amplitude, center, width, shape (smooth|cosine)
//! [outputs]             csv_path, snapshot_stride, snapshot_path, constraint_path, verdict_path
//! [decay]               k, window_start, window_end, max_lambda, max_c
//! [constraint]          max_c
//! [convergence]         levels
//! [isometry]            matrix = [a, b, c, d], max_c
//! ```

use std::path::Path;

use cuspwave::background::{BackgroundParams, Isometry};
use cuspwave::diagnostics::RunSetup;
use cuspwave::evolve::{AInit, BoundaryMode, Scheme};
use cuspwave::grid::{GridSpec, StencilOrder};
use cuspwave::profile::{Bump, PerturbationSpec, ProfileError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("{0}")]
    Invalid(String),
}

fn default_cfl() -> f64 {
    0.25
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dx: Option<f64>,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub output_stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AInitName {
    None,
    Constraint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryName {
    Sponge,
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSection {
    pub stencil_order: usize,
    pub a_init: AInitName,
    pub boundary: BoundaryName,
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            stencil_order: 4,
            a_init: AInitName::None,
            boundary: BoundaryName::Sponge,
        }
    }
}

fn smooth_name() -> String {
    "smooth".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSection {
    pub target: String,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    #[serde(default = "smooth_name")]
    pub shape: String,
}

impl BumpSection {
    pub fn to_bump(&self) -> Result<Bump, ProfileError> {
        Bump::new(
            self.target.parse()?,
            self.amplitude,
            self.center,
            self.width,
            self.shape.parse()?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub csv_path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_stride: Option<usize>,
    pub snapshot_path: String,
    pub constraint_path: String,
    pub verdict_path: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            csv_path: "run.csv".into(),
            snapshot_stride: None,
            snapshot_path: "snapshots.csv".into(),
            constraint_path: "constraints.csv".into(),
            verdict_path: "verdict.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySection {
    pub k: usize,
    pub window_start: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_end: Option<f64>,
    pub max_lambda: f64,
    pub max_c: f64,
}

impl Default for DecaySection {
    fn default() -> Self {
        DecaySection {
            k: 3,
            window_start: cuspwave::diagnostics::WINDOW_START,
            window_end: None,
            max_lambda: -0.9,
            max_c: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintSection {
    /// Bound on `residual / dx^order`.
    pub max_c: f64,
}

impl Default for ConstraintSection {
    fn default() -> Self {
        ConstraintSection { max_c: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Number of resolutions `dx, dx/2, ...`.
    pub levels: usize,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection { levels: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsometrySection {
    pub matrix: [f64; 4],
    /// Bound on `drift / dx²`.
    pub max_c: f64,
}

impl Default for IsometrySection {
    fn default() -> Self {
        IsometrySection {
            matrix: [1.0, 0.5, 0.3, 1.15],
            max_c: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub background: BackgroundParams,
    pub grid: GridSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub constraint: ConstraintSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
    #[serde(default)]
    pub isometry: IsometrySection,
    #[serde(default, rename = "bump")]
    pub bumps: Vec<BumpSection>,
}

impl std::str::FromStr for RunConfig {
    type Err = ConfigError;

    /// Parses and validates.
    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn to_text(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.background
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.grid_spec()?
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scheme()?;
        self.perturbation()?;
        self.isometry()?;
        if self.outputs.snapshot_stride == Some(0) {
            return Err(ConfigError::Invalid("snapshot_stride must be at least 1".into()));
        }
        if !(1..=3).contains(&self.decay.k) {
            return Err(ConfigError::Invalid(format!("decay.k must be 1, 2 or 3, got {}", self.decay.k)));
        }
        if self.convergence.levels < 2 {
            return Err(ConfigError::Invalid("convergence.levels must be at least 2".into()));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        let g = &self.grid;
        let nx = match (g.nx, g.dx) {
            (Some(nx), None) => nx,
            (None, Some(dx)) if dx > 0.0 && dx.is_finite() => GridSpec::nx_for_dx(g.l, dx),
            (None, Some(dx)) => return Err(ConfigError::Invalid(format!("grid.dx must be positive, got {dx}"))),
            _ => return Err(ConfigError::Invalid("grid needs exactly one of nx, dx".into())),
        };
        Ok(GridSpec {
            l: g.l,
            nx,
            cfl: g.cfl,
            t_final: g.t_final,
            output_stride: g.output_stride,
        })
    }

    pub fn scheme(&self) -> Result<Scheme, ConfigError> {
        let order = StencilOrder::from_accuracy(self.scheme.stencil_order).ok_or_else(|| {
            ConfigError::Invalid(format!(
                "scheme.stencil_order must be 2 or 4, got {}",
                self.scheme.stencil_order
            ))
        })?;
        Ok(Scheme {
            order,
            a_init: match self.scheme.a_init {
                AInitName::None => AInit::None,
                AInitName::Constraint => AInit::Constraint,
            },
            boundary: match self.scheme.boundary {
                BoundaryName::Sponge => BoundaryMode::Sponge,
                BoundaryName::Frozen => BoundaryMode::Frozen,
            },
        })
    }

    pub fn perturbation(&self) -> Result<PerturbationSpec, ConfigError> {
        let bumps = self
            .bumps
            .iter()
            .map(BumpSection::to_bump)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PerturbationSpec::new(bumps))
    }

    pub fn isometry(&self) -> Result<Isometry, ConfigError> {
        let [a, b, c, d] = self.isometry.matrix;
        Isometry::new(a, b, c, d).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn setup(&self) -> Result<RunSetup, ConfigError> {
        Ok(RunSetup {
            background: self.background,
            grid: self.grid_spec()?,
            scheme: self.scheme()?,
            perturbation: self.perturbation()?,
        })
    }

    /// Same configuration on spacing `dx`, with the output stride rescaled
    /// so that reports fall on the same times.
    pub fn with_dx(&self, dx: f64) -> Result<RunConfig, ConfigError> {
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(ConfigError::Invalid(format!("dx must be positive, got {dx}")));
        }
        let refined = self.setup()?.refined(dx);
        let mut cfg = self.clone();
        cfg.grid.nx = Some(refined.grid.nx);
        cfg.grid.dx = None;
        cfg.grid.output_stride = refined.grid.output_stride;
        Ok(cfg)
    }
}
