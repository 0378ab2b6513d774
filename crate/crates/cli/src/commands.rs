//! Subcommand drivers. Each writes its files under an output directory and
//! returns whether its verdict passed.

use std::path::{Path, PathBuf};

use cuspwave::background::BackgroundParams;
use cuspwave::diagnostics::{self, ConvergenceReport, DecayFit, OrderStatus};
use cuspwave::energies::EnergyReport;
use cuspwave::evolve::{AInit, Evolver, RunOptions, RunResult};
use cuspwave::grid::StencilOrder;
use cuspwave::RunError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{AInitName, ConfigError, RunConfig};
use crate::output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 1 internal error, 2 blow-up, 3 gate rejection.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(RunError::BlowUp { .. } | RunError::NonPositiveR { .. }) => 2,
            CliError::Run(RunError::GateRejected { .. } | RunError::SupportSafety { .. }) => 3,
            _ => 1,
        }
    }
}

/// Result of a completed command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub pass: bool,
    pub summary: String,
}

fn write(out: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = out.join(name);
    output::write_atomic(&path, text.as_bytes()).map_err(|source| CliError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf, CliError> {
    write(out, name, &output::json(value)?)
}

fn evolve(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let ev = Evolver::new(cfg.background, &cfg.grid_spec()?, cfg.scheme()?, &cfg.perturbation()?)?;
    Ok(ev.run(RunOptions {
        snapshot_stride: cfg.outputs.snapshot_stride,
    })?)
}

fn write_run(cfg: &RunConfig, out: &Path, result: &RunResult) -> Result<PathBuf, CliError> {
    let csv = write(out, &cfg.outputs.csv_path, &output::reports_csv(&result.reports))?;
    if cfg.outputs.snapshot_stride.is_some() {
        let grid = cfg.grid_spec()?.grid();
        let text = output::snapshots_csv(&cfg.background, &grid, &result.snapshots);
        write(out, &cfg.outputs.snapshot_path, &text)?;
    }
    Ok(csv)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let result = evolve(cfg)?;
    let csv = write_run(cfg, out, &result)?;
    Ok(Outcome {
        pass: true,
        summary: format!("{} steps, {} reports -> {}", result.steps, result.reports.len(), csv.display()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BackgroundVerdict {
    pub seed: u64,
    pub points_per_set: usize,
    pub tolerance: f64,
    pub sets: Vec<BackgroundSet>,
    pub max_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BackgroundSet {
    pub params: BackgroundParams,
    pub max_residual: f64,
}

pub const BACKGROUND_TOLERANCE: f64 = 1e-10;

/// Random parameter sets and events `t ∈ [0, 10]`, `x ∈ [-20, 20]`.
pub fn random_background_events(rng: &mut impl Rng, points: usize) -> (BackgroundParams, Vec<(f64, f64)>) {
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let w1 = rng.gen_range(-2.0..2.0);
    let params = BackgroundParams {
        r0: rng.gen_range(0.1..10.0),
        w0: sign * rng.gen_range(0.1..3.0),
        w1,
        q0: rng.gen_range(-2.0..2.0),
        a0: rng.gen_range(-2.0..2.0),
    };
    let events = (0..points)
        .map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(-20.0..20.0)))
        .collect();
    (params, events)
}

pub fn verify_background(seed: u64, sets: usize, points: usize, out: &Path) -> Result<Outcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(sets);
    for _ in 0..sets {
        let (params, events) = random_background_events(&mut rng, points);
        let max_residual = diagnostics::background_identity_check(&params, &events)?;
        results.push(BackgroundSet { params, max_residual });
    }
    let max_residual = results.iter().map(|s| s.max_residual).fold(0.0, f64::max);
    let verdict = BackgroundVerdict {
        seed,
        points_per_set: points,
        tolerance: BACKGROUND_TOLERANCE,
        sets: results,
        max_residual,
        pass: max_residual <= BACKGROUND_TOLERANCE,
    };
    write_json(out, "verdict.json", &verdict)?;
    Ok(Outcome {
        pass: verdict.pass,
        summary: format!("max residual {max_residual:.3e} over {sets} sets"),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayVerdict {
    pub k: usize,
    pub fit: DecayFit,
    pub max_lambda: f64,
    pub max_c: f64,
    pub pass: bool,
}

pub fn decay_report(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let result = evolve(cfg)?;
    write_run(cfg, out, &result)?;
    let d = &cfg.decay;
    let window = (d.window_start, d.window_end.unwrap_or(cfg.grid.t_final));
    let fit = diagnostics::decay_fit_reports(&result.reports, d.k, window)?;
    let verdict = DecayVerdict {
        k: d.k,
        fit,
        max_lambda: d.max_lambda,
        max_c: d.max_c,
        pass: fit.passes(d.max_lambda, d.max_c),
    };
    write_json(out, &cfg.outputs.verdict_path, &verdict)?;
    Ok(Outcome {
        pass: verdict.pass,
        summary: format!("lambda {:.4}, C_fit {:.4}", fit.lambda, fit.c_fit),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintVerdict {
    pub dx: f64,
    pub order: usize,
    pub max_res_momentum: f64,
    pub max_res_hamiltonian: f64,
    pub max_curl_residual: f64,
    /// `max residual / dx^order`.
    pub c: f64,
    pub max_c: f64,
    pub pass: bool,
}

fn column_max(reports: &[EnergyReport], f: impl Fn(&EnergyReport) -> f64) -> f64 {
    reports.iter().map(f).fold(0.0, f64::max)
}

/// Runs with `a` solved from the constraints at `t = 0` and evolved.
pub fn constraint_report(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut cfg = cfg.clone();
    cfg.scheme.a_init = AInitName::Constraint;
    let scheme = cfg.scheme()?;
    debug_assert_eq!(scheme.a_init, AInit::Constraint);
    let result = evolve(&cfg)?;
    write_run(&cfg, out, &result)?;
    write(out, &cfg.outputs.constraint_path, &output::constraints_csv(&result.reports))?;
    let dx = cfg.grid_spec()?.dx();
    let order = scheme.order.accuracy();
    let res_m = column_max(&result.reports, |r| r.res_momentum);
    let res_h = column_max(&result.reports, |r| r.res_hamiltonian);
    let c = res_m.max(res_h) / dx.powi(order as i32);
    let verdict = ConstraintVerdict {
        dx,
        order,
        max_res_momentum: res_m,
        max_res_hamiltonian: res_h,
        max_curl_residual: column_max(&result.reports, |r| r.curl_residual),
        c,
        max_c: cfg.constraint.max_c,
        pass: c.is_finite() && c <= cfg.constraint.max_c,
    };
    write_json(out, &cfg.outputs.verdict_path, &verdict)?;
    Ok(Outcome {
        pass: verdict.pass,
        summary: format!("momentum {res_m:.3e}, hamiltonian {res_h:.3e}, C {c:.3e}"),
    })
}

/// Admissible observed orders per stencil order.
pub fn order_band(order: StencilOrder) -> (f64, f64) {
    match order {
        StencilOrder::Second => (1.8, 2.2),
        StencilOrder::Fourth => (3.5, 4.2),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceVerdict {
    pub report: ConvergenceReport,
    pub band: (f64, f64),
    pub pass: bool,
}

pub fn convergence_passes(report: &ConvergenceReport, band: (f64, f64)) -> bool {
    report.quantities.iter().all(|q| match q.status {
        OrderStatus::Exact => true,
        OrderStatus::Converging => q.finest().is_some_and(|p| p >= band.0 && p <= band.1),
        OrderStatus::NonMonotone => false,
    })
}

pub fn convergence(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let setup = cfg.setup()?;
    let dx0 = setup.grid.dx();
    let dx: Vec<f64> = (0..cfg.convergence.levels).map(|i| dx0 / 2f64.powi(i as i32)).collect();
    let report = diagnostics::convergence_study(&setup, &dx)?;
    let band = order_band(setup.scheme.order);
    let pass = convergence_passes(&report, band);
    let summary = report
        .quantities
        .iter()
        .map(|q| match q.finest() {
            Some(p) => format!("{} {p:.2}", q.name),
            None => format!("{} {:?}", q.name, q.status),
        })
        .collect::<Vec<_>>()
        .join(", ");
    write_json(out, &cfg.outputs.verdict_path, &ConvergenceVerdict { report, band, pass })?;
    Ok(Outcome { pass, summary })
}

#[derive(Debug, Clone, Serialize)]
pub struct IsometryVerdict {
    pub matrix: [f64; 4],
    pub dx: f64,
    pub t_final: f64,
    pub drift: f64,
    /// `drift / dx²`.
    pub c: f64,
    pub max_c: f64,
    pub pass: bool,
}

pub fn isometry_check(cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let spec = cfg.grid_spec()?;
    let d = diagnostics::isometry_drift(cfg.background, &cfg.isometry()?, &spec, cfg.scheme()?)?;
    let c = d.drift / (d.dx * d.dx);
    let verdict = IsometryVerdict {
        matrix: cfg.isometry.matrix,
        dx: d.dx,
        t_final: spec.t_final,
        drift: d.drift,
        c,
        max_c: cfg.isometry.max_c,
        pass: c.is_finite() && c <= cfg.isometry.max_c,
    };
    write_json(out, &cfg.outputs.verdict_path, &verdict)?;
    Ok(Outcome {
        pass: verdict.pass,
        summary: format!("drift {:.3e} at dx {}, C {c:.3e}", d.drift, d.dx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cuspwave::diagnostics::QuantityOrder;

    fn quantity(status: OrderStatus, orders: Vec<f64>) -> QuantityOrder {
        QuantityOrder {
            name: "q".into(),
            errors: vec![],
            orders,
            status,
        }
    }

    #[test]
    fn convergence_band_check() {
        let band = order_band(StencilOrder::Second);
        let report = |qs| ConvergenceReport { dx: vec![], quantities: qs };
        assert!(convergence_passes(&report(vec![quantity(OrderStatus::Exact, vec![])]), band));
        assert!(convergence_passes(&report(vec![quantity(OrderStatus::Converging, vec![1.0, 2.05])]), band));
        assert!(!convergence_passes(&report(vec![quantity(OrderStatus::Converging, vec![2.0, 1.5])]), band));
        assert!(!convergence_passes(&report(vec![quantity(OrderStatus::NonMonotone, vec![2.0])]), band));
    }

    #[test]
    fn exit_codes() {
        let gate = CliError::Run(RunError::GateRejected { m0: 1.0, limit: 0.6 });
        let blow = CliError::Run(RunError::BlowUp {
            t: 1.0,
            field: "dW",
            value: f64::NAN,
        });
        let other = CliError::Config(ConfigError::Invalid("x".into()));
        assert_eq!((gate.exit_code(), blow.exit_code(), other.exit_code()), (3, 2, 1));
    }

    #[test]
    fn random_backgrounds_are_seeded() {
        let a = random_background_events(&mut ChaCha8Rng::seed_from_u64(7), 3);
        let b = random_background_events(&mut ChaCha8Rng::seed_from_u64(7), 3);
        assert_eq!(a, b);
        assert!(a.0.validate().is_ok());
    }
}
