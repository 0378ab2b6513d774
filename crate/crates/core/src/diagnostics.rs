//! Verdicts from run output: decay fits, inequality constants, mesh
//! convergence, and checks on `R` and on isometry images of the background.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{apply_isometry, BackgroundParams, Isometry};
use crate::energies::EnergyReport;
use crate::error::RunError;
use crate::evolve::{BoundaryMode, Evolver, FieldState, Model, RPerturbation, RunOptions, RunResult, Scheme};
use crate::grid::{Field, GridSpec};
use crate::profile::PerturbationSpec;

/// Values below this are clamped before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-14;
/// Shortest admissible fitting window.
pub const MIN_SPAN: f64 = 4.0;
/// Default start of the fitting window.
pub const WINDOW_START: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `ln M - ln(t+1)` against `t` over the window.
    pub lambda: f64,
    /// `max M(t) e^t / ((t+1) norm0)` over all samples.
    pub c_fit: f64,
    pub window: (f64, f64),
    /// Root-mean-square misfit of the linear fit.
    pub residual: f64,
}

impl DecayFit {
    pub fn passes(&self, max_lambda: f64, max_c: f64) -> bool {
        self.lambda <= max_lambda && self.c_fit <= max_c
    }
}

/// Least-squares line `y = a + b t`; returns `(a, b, rms)`.
fn line_fit(ts: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = ts.len() as f64;
    let (mt, my) = (ts.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut stt, mut sty) = (0.0, 0.0);
    for (&t, &y) in ts.iter().zip(ys) {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
    }
    let b = if stt > 0.0 { sty / stt } else { 0.0 };
    let a = my - b * mt;
    let rms = (ts.iter().zip(ys).map(|(&t, &y)| (y - a - b * t).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

/// Fits `M(t) ≈ C e^{λt}(t+1)` over `window`. `norm0` is the initial-data
/// size `M(0) + m(0)` that normalizes `C`.
pub fn decay_fit(series: &[(f64, f64)], norm0: f64, window: (f64, f64)) -> Result<DecayFit, RunError> {
    let (t_min, t_max) = window;
    let pts: Vec<&(f64, f64)> = series
        .iter()
        .filter(|(t, _)| *t >= t_min - 1e-9 && *t <= t_max + 1e-9)
        .collect();
    let span = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => b.0 - a.0,
        _ => 0.0,
    };
    if pts.len() < 2 || span < MIN_SPAN - 1e-9 {
        return Err(RunError::InsufficientSpan { t_min, t_max });
    }
    let ts: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts
        .iter()
        .map(|&&(t, m)| m.max(LOG_FLOOR).ln() - (t + 1.0).ln())
        .collect();
    let (_, lambda, residual) = line_fit(&ts, &ys);
    let c_fit = series
        .iter()
        .map(|&(t, m)| m * t.exp() / ((t + 1.0) * norm0))
        .fold(0.0, f64::max);
    Ok(DecayFit {
        lambda,
        c_fit,
        window: (ts[0], ts[ts.len() - 1]),
        residual,
    })
}

/// Decay fit of `M̃_k` from a run, with `norm0 = M̃_k(0) + m_k(0)`.
pub fn decay_fit_reports(reports: &[EnergyReport], k: usize, window: (f64, f64)) -> Result<DecayFit, RunError> {
    let first = reports
        .first()
        .ok_or_else(|| RunError::Invalid("empty run".into()))?;
    let series: Vec<(f64, f64)> = reports.iter().map(|r| (r.t, r.mtilde[k - 1])).collect();
    decay_fit(&series, first.mtilde[k - 1] + first.m[k], window)
}

/// Smallest `C` with `lhs[i] <= C rhs[i]` for every sample. Infinite when
/// some `lhs > 0` meets `rhs <= 0`.
pub fn fit_constant(lhs: &[f64], rhs: &[f64]) -> f64 {
    lhs.iter()
        .zip(rhs)
        .map(|(&l, &r)| {
            if l <= 0.0 {
                0.0
            } else if r > 0.0 {
                l / r
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

/// Inequalities whose constant is fitted from a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inequality {
    /// `E^{1/2}(t) <= C (E^{1/2}(0) + m_1(0))`.
    BasicEnergy,
    /// `𝓔_1^{1/2}(t) <= C (𝓔_1^{1/2}(0) + m_2(0))`.
    FirstEnergy,
    /// `S(t) <= exp(C (m_1(0) + 2)) S(0)`.
    SFunctional,
    /// `sup|Δa|(t) <= C sup|Δa|(0)`.
    AGrowth,
}

/// Fitted constant of `ineq` over a run's reports.
pub fn fit_inequality(reports: &[EnergyReport], ineq: Inequality) -> f64 {
    let Some(r0) = reports.first() else {
        return 0.0;
    };
    match ineq {
        Inequality::BasicEnergy => {
            let lhs: Vec<f64> = reports.iter().map(|r| r.e.sqrt()).collect();
            fit_constant(&lhs, &vec![r0.e.sqrt() + r0.m[1]; lhs.len()])
        }
        Inequality::FirstEnergy => {
            let lhs: Vec<f64> = reports.iter().map(|r| r.cal_e1.sqrt()).collect();
            fit_constant(&lhs, &vec![r0.cal_e1.sqrt() + r0.m[2]; lhs.len()])
        }
        Inequality::SFunctional => {
            let lhs: Vec<f64> = reports
                .iter()
                .map(|r| (r.s / r0.s).ln().max(0.0))
                .collect();
            fit_constant(&lhs, &vec![r0.m[1] + 2.0; lhs.len()])
        }
        Inequality::AGrowth => {
            let lhs: Vec<f64> = reports.iter().map(|r| r.sup_da).collect();
            fit_constant(&lhs, &vec![r0.sup_da; lhs.len()])
        }
    }
}

/// `max |G - G_b| e^{2t} cosh(2x) / ((t+1) m_1(0))` over the grid at `t`.
pub fn coefficient_bound(model: &Model, t: f64, m1_0: f64) -> Result<f64, RunError> {
    let mut worst: f64 = 0.0;
    for (i, &x) in model.grid.x().iter().enumerate() {
        if !model.r_pert.active(t, x) {
            continue;
        }
        let g = model.eval_r(t, x)?.g;
        let dev = (g - model.gb()[i]).abs();
        // e^{2t}cosh(2x) = R_b / R0
        let scale = (2.0 * t + crate::background::ln_cosh(2.0 * x)).exp();
        worst = worst.max(dev * scale / ((t + 1.0) * m1_0));
    }
    Ok(worst)
}

/// Largest `‖R - R_b‖∞(t) - (t+1) m_0(0)` and smallest `R / R_b` over the
/// grid and the sampled times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RBoundCheck {
    pub m0: f64,
    pub min_r_ratio: f64,
    pub max_excess: f64,
}

pub fn r_bound_check(model: &Model, times: &[f64]) -> Result<RBoundCheck, RunError> {
    let m0 = crate::energies::m_k(model, 0.0, 0);
    let (mut min_r_ratio, mut max_excess) = (f64::INFINITY, f64::NEG_INFINITY);
    for &t in times {
        let dev = crate::grid::sup_abs_fn(&model.grid, |x| model.r_pert.value(t, x));
        max_excess = max_excess.max(dev - (t + 1.0) * m0);
        for &x in model.grid.x() {
            let rb = model.bg.eval(t, x)?.r;
            min_r_ratio = min_r_ratio.min(1.0 + model.r_pert.value(t, x) / rb);
        }
    }
    Ok(RBoundCheck {
        m0,
        min_r_ratio,
        max_excess,
    })
}

/// Largest absolute residual of the field equations and constraints of the
/// background over the sample events `(t, x)`.
pub fn background_identity_check(bg: &BackgroundParams, events: &[(f64, f64)]) -> Result<f64, RunError> {
    let mut worst: f64 = 0.0;
    for &(t, x) in events {
        for r in bg.field_equation_residuals(t, x)? {
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderStatus {
    Converging,
    /// All differences at round-off level.
    Exact,
    /// Differences do not shrink under refinement.
    NonMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityOrder {
    pub name: String,
    /// `max_t |Q_i - Q_{i+1}|` for self-convergence, `max_t Q_i` for
    /// quantities that vanish in the limit.
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub status: OrderStatus,
}

impl QuantityOrder {
    /// Order from the two finest levels.
    pub fn finest(&self) -> Option<f64> {
        self.orders.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub dx: Vec<f64>,
    pub quantities: Vec<QuantityOrder>,
}

impl ConvergenceReport {
    pub fn get(&self, name: &str) -> Option<&QuantityOrder> {
        self.quantities.iter().find(|q| q.name == name)
    }
}

/// Quantities tracked by the convergence study: self-converging ones first,
/// then residuals whose exact value is zero.
pub const SELF_CONVERGING: [&str; 3] = ["sup_dW", "Mtilde3", "E"];
pub const VANISHING: [&str; 2] = ["res_hamiltonian", "res_momentum"];

const ROUND_OFF: f64 = 1e-13;

fn orders_from(errors: &[f64], dx: &[f64]) -> (Vec<f64>, OrderStatus) {
    let orders: Vec<f64> = errors
        .windows(2)
        .zip(dx.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    let status = if errors.iter().all(|&e| e <= ROUND_OFF) {
        OrderStatus::Exact
    } else if errors.windows(2).any(|e| e[1].partial_cmp(&e[0]) != Some(std::cmp::Ordering::Less)) {
        OrderStatus::NonMonotone
    } else {
        OrderStatus::Converging
    };
    (orders, status)
}

/// Orders of convergence from runs on successively refined grids whose
/// reports share output times.
pub fn convergence_from_runs(dx: &[f64], runs: &[Vec<EnergyReport>]) -> Result<ConvergenceReport, RunError> {
    if dx.len() < 3 || runs.len() != dx.len() {
        return Err(RunError::Invalid("convergence study needs at least 3 resolutions".into()));
    }
    // sample times common to every run
    let common: Vec<f64> = runs[0]
        .iter()
        .map(|r| r.t)
        .filter(|&t| runs.iter().all(|run| run.iter().any(|r| (r.t - t).abs() < 1e-9)))
        .collect();
    if common.is_empty() {
        return Err(RunError::Invalid("runs share no output times".into()));
    }
    let column = |run: &[EnergyReport], name: &str| -> Vec<f64> {
        common
            .iter()
            .map(|&t| {
                run.iter()
                    .find(|r| (r.t - t).abs() < 1e-9)
                    .and_then(|r| r.column(name))
                    .unwrap_or(f64::NAN)
            })
            .collect()
    };
    let mut quantities = Vec::new();
    for name in SELF_CONVERGING {
        let cols: Vec<Vec<f64>> = runs.iter().map(|r| column(r, name)).collect();
        let errors: Vec<f64> = cols
            .windows(2)
            .map(|p| p[0].iter().zip(&p[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect();
        let (orders, status) = orders_from(&errors, &dx[..dx.len() - 1]);
        quantities.push(QuantityOrder {
            name: name.to_string(),
            errors,
            orders,
            status,
        });
    }
    for name in VANISHING {
        let errors: Vec<f64> = runs
            .iter()
            .map(|r| column(r, name).into_iter().fold(0.0, f64::max))
            .collect();
        let (orders, status) = orders_from(&errors, dx);
        quantities.push(QuantityOrder {
            name: name.to_string(),
            errors,
            orders,
            status,
        });
    }
    Ok(ConvergenceReport {
        dx: dx.to_vec(),
        quantities,
    })
}

/// One run description for sweeps and refinement studies.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    pub background: BackgroundParams,
    pub grid: GridSpec,
    pub scheme: Scheme,
    pub perturbation: PerturbationSpec,
}

impl RunSetup {
    pub fn run(&self) -> Result<RunResult, RunError> {
        Evolver::new(self.background, &self.grid, self.scheme, &self.perturbation)?.run(RunOptions::default())
    }

    /// Same run on spacing `dx`, with the output stride rescaled so that
    /// reports fall on the same times.
    pub fn refined(&self, dx: f64) -> RunSetup {
        let base_dt = self.grid.time_steps().1;
        let g = self.grid.with_dx(dx);
        let dt = g.time_steps().1;
        let stride = ((self.grid.output_stride as f64) * base_dt / dt).round().max(1.0) as usize;
        RunSetup {
            grid: GridSpec {
                output_stride: stride,
                ..g
            },
            ..self.clone()
        }
    }
}

/// Runs independent setups concurrently; results keep the input order.
pub fn run_all(setups: &[RunSetup]) -> Vec<Result<RunResult, RunError>> {
    setups.par_iter().map(RunSetup::run).collect()
}

/// Runs `setup` at every spacing in `dx` and measures convergence orders.
pub fn convergence_study(setup: &RunSetup, dx: &[f64]) -> Result<ConvergenceReport, RunError> {
    let setups: Vec<RunSetup> = dx.iter().map(|&h| setup.refined(h)).collect();
    let runs = run_all(&setups)
        .into_iter()
        .map(|r| r.map(|res| res.reports))
        .collect::<Result<Vec<_>, _>>()?;
    convergence_from_runs(dx, &runs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsometryDrift {
    pub dx: f64,
    /// `max_t sup_x |(W, q)(t) - (W, q)(0)|`.
    pub drift: f64,
}

/// Evolves the image of the background under `iso` with frozen ends and
/// measures how far the fields move from their (stationary) initial values.
pub fn isometry_drift(
    bg: BackgroundParams,
    iso: &Isometry,
    spec: &GridSpec,
    scheme: Scheme,
) -> Result<IsometryDrift, RunError> {
    let grid = spec.grid();
    let wb: Vec<f64> = grid.x().iter().map(|&x| bg.w(x)).collect();
    let qb = vec![bg.q0; grid.len()];
    let (w, q) = apply_isometry(iso, &wb, &qb);
    let state = FieldState {
        t: 0.0,
        dw: Field(w.iter().zip(&wb).map(|(a, b)| a - b).collect()),
        dwt: grid.zeros(),
        dq: Field(q.iter().map(|v| v - bg.q0).collect()),
        dqt: grid.zeros(),
        a: None,
    };
    let scheme = Scheme {
        boundary: BoundaryMode::Frozen,
        ..scheme
    };
    let start = state.clone();
    let mut ev = Evolver::with_state(bg, spec, scheme, RPerturbation::default(), state)?;
    let (steps, dt) = spec.time_steps();
    let mut drift: f64 = 0.0;
    for _ in 0..steps {
        ev.step(dt)?;
        let s = ev.state();
        for (a, b) in [(&s.dw, &start.dw), (&s.dq, &start.dq)] {
            drift = drift.max(a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
    }
    Ok(IsometryDrift { dx: spec.dx(), drift })
}
