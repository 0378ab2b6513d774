use thiserror::Error;

use crate::background::BackgroundError;
use crate::grid::GridError;
use crate::profile::ProfileError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("admissibility gate m0(0) < 2R0/3 violated: m0(0) = {m0}, limit = {limit}")]
    GateRejected { m0: f64, limit: f64 },
    #[error("domain half-width {l} is below support radius + t_final + 2dx = {required}")]
    SupportSafety { l: f64, required: f64 },
    #[error("R = {r} <= 0 at t = {t}, x = {x}")]
    NonPositiveR { t: f64, x: f64, r: f64 },
    #[error("field {field} reached {value} at t = {t}")]
    BlowUp {
        t: f64,
        field: &'static str,
        value: f64,
    },
    #[error("field {field} = {value} in the sponge at t = {t}, x = {x}")]
    SupportViolation {
        t: f64,
        x: f64,
        field: &'static str,
        value: f64,
    },
    #[error("constraint system degenerate at t = {t}, x = {x}")]
    DegenerateConstraintSystem { t: f64, x: f64 },
    #[error("decay fit window [{t_min}, {t_max}] is shorter than 4 time units")]
    InsufficientSpan { t_min: f64, t_max: f64 },
    #[error("{0}")]
    Invalid(String),
}
