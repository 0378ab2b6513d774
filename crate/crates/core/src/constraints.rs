//! The two first-order constraints that determine `(a_t, a_x)` from
//! `(R, W, q)`, the reconstruction of `a` by line integration, and residual
//! monitoring along a run.
//!
//! Adding and subtracting the constraints gives
//! `(a_t ± a_x)(R_t ± R_x)/R = b_±`, so each null component of `∇a` is a
//! single division. Near the spatial ends one of `R_t ± R_x` decays like
//! `e^{-4|x|}`; every term of the matching `b_±` carries the same factor
//! and is assembled without cancellation.

use serde::{Deserialize, Serialize};

use crate::error::RunError;
use crate::evolve::{AFields, FieldState, Model};
use crate::grid::{cumulative_integral, Field, Grid, Stencils};
use crate::jet::{Jet, Real};

const DEGENERATE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub t: f64,
    pub res_momentum: f64,
    pub res_hamiltonian: f64,
    pub curl_residual: f64,
}

/// `1 - tanh y` without cancellation.
pub fn one_minus_tanh(y: f64) -> f64 {
    if y > 0.0 {
        let e = (-2.0 * y).exp();
        2.0 * e / (1.0 + e)
    } else {
        2.0 / (1.0 + (2.0 * y).exp())
    }
}

#[derive(Debug, Clone, Copy)]
struct ConstraintIn<T> {
    rt_dev: T,
    rx_dev: T,
    xx_dev: T,
    tx_dev: T,
    w_t: T,
    w_x: T,
    q_t: T,
    q_x: T,
    e4w: T,
    // 1 + tanh 2x, 1 - tanh 2x
    one_p: f64,
    one_m: f64,
}

/// `(R_t + R_x)/R`, `(R_t - R_x)/R`, `b_+`, `b_-`.
fn null_sides<T: Real>(c: &ConstraintIn<T>) -> (T, T, T, T) {
    let sp = c.rt_dev + c.rx_dev + 2.0 * c.one_p;
    let sm = c.rt_dev - c.rx_dev + 2.0 * c.one_m;
    let rxx_p_rtx = c.rx_dev * 2.0 + c.xx_dev + c.tx_dev + 4.0 * c.one_p;
    let rxx_m_rtx = c.rx_dev * -2.0 + c.xx_dev - c.tx_dev + 4.0 * c.one_m;
    let bp = sp * sp * -0.25 + rxx_p_rtx + (c.w_t + c.w_x).sq() + c.e4w * (c.q_t + c.q_x).sq() * 0.25;
    let bm = sm * sm * -0.25 + rxx_m_rtx + (c.w_t - c.w_x).sq() + c.e4w * (c.q_t - c.q_x).sq() * 0.25;
    (sp, sm, bp, bm)
}

/// `(a_t, a_x)` solving both constraints.
fn a_gradient<T: Real>(c: &ConstraintIn<T>) -> (T, T) {
    let (sp, sm, bp, bm) = null_sides(c);
    let plus = bp / sp;
    let minus = bm / sm;
    ((plus + minus) * 0.5, (plus - minus) * 0.5)
}

fn degenerate(c: &ConstraintIn<f64>) -> bool {
    let (sp, sm, _, _) = null_sides(c);
    let rel = (sp / (2.0 * c.one_p)) * (sm / (2.0 * c.one_m));
    rel.is_nan() || rel < DEGENERATE
}

struct Spatial {
    dw_x: Field,
    dq_x: Field,
}

fn spatial(model: &Model, s: &FieldState) -> Spatial {
    Spatial {
        dw_x: model.stencils.d1(&s.dw),
        dq_x: model.stencils.d1(&s.dq),
    }
}

fn point_in(model: &Model, s: &FieldState, sp: &Spatial, i: usize) -> Result<ConstraintIn<f64>, RunError> {
    let c = model.r_coeffs_f64(s.t, i)?;
    let y = 2.0 * model.grid.x()[i];
    Ok(ConstraintIn {
        rt_dev: c.rt_dev,
        rx_dev: c.rx_dev,
        xx_dev: c.xx_dev,
        tx_dev: c.tx_dev,
        w_t: s.dwt[i],
        w_x: model.wbx()[i] + sp.dw_x[i],
        q_t: s.dqt[i],
        q_x: sp.dq_x[i],
        e4w: (-4.0 * (model.wb()[i] + s.dw[i])).exp(),
        one_p: one_minus_tanh(-y),
        one_m: one_minus_tanh(y),
    })
}

fn at_background(model: &Model, s: &FieldState, sp: &Spatial, i: usize) -> bool {
    s.dw[i] == 0.0
        && s.dwt[i] == 0.0
        && s.dq[i] == 0.0
        && s.dqt[i] == 0.0
        && sp.dw_x[i] == 0.0
        && sp.dq_x[i] == 0.0
        && !model.r_pert.active(s.t, model.grid.x()[i])
}

/// Deviation of the constraint-solved gradient from the background one,
/// `(a_t - a_bt, a_x - a_bx)`. Exactly zero where all data equal the
/// background.
pub fn solve_delta_a_gradient(model: &Model, s: &FieldState) -> Result<(Field, Field), RunError> {
    let n = model.len();
    let sp = spatial(model, s);
    let (mut dat, mut dax) = (vec![0.0; n], vec![0.0; n]);
    let bg = &model.bg;
    for i in 0..n {
        if at_background(model, s, &sp, i) {
            continue;
        }
        let c = point_in(model, s, &sp, i)?;
        if degenerate(&c) {
            return Err(RunError::DegenerateConstraintSystem {
                t: s.t,
                x: model.grid.x()[i],
            });
        }
        let (a_t, a_x) = a_gradient(&c);
        dat[i] = a_t - bg.a_t();
        dax[i] = a_x - bg.a_x(model.grid.x()[i]);
    }
    Ok((Field(dat), Field(dax)))
}

/// `(a_t, a_x)` from the constraints.
pub fn solve_a_gradient(model: &Model, s: &FieldState) -> Result<(Field, Field), RunError> {
    let (dat, dax) = solve_delta_a_gradient(model, s)?;
    let bg = &model.bg;
    let a_t = Field(dat.iter().map(|v| v + bg.a_t()).collect());
    let a_x = Field(
        dax.iter()
            .zip(model.grid.x())
            .map(|(v, &x)| v + bg.a_x(x))
            .collect(),
    );
    Ok((a_t, a_x))
}

/// Constraint-satisfying `(Δa, Δa_t)`: `Δa_t` from the solve, `Δa` by
/// integrating `Δa_x` from the left end where it vanishes.
pub fn init_a(model: &Model, s: &FieldState) -> Result<AFields, RunError> {
    let (dat, dax) = solve_delta_a_gradient(model, s)?;
    let ddax = model.stencils.d1(&dax);
    let da = cumulative_integral(&model.grid, &dax, &ddax);
    Ok(AFields { da, dat })
}

/// Pointwise residuals of the Hamiltonian and momentum constraints for the
/// evolved `a`.
pub fn residual_fields(model: &Model, s: &FieldState) -> Result<Option<(Field, Field)>, RunError> {
    let Some(a) = &s.a else {
        return Ok(None);
    };
    let n = model.len();
    let sp = spatial(model, s);
    let da_x = model.stencils.d1(&a.da);
    let (mut res_h, mut res_m) = (vec![0.0; n], vec![0.0; n]);
    let bg = &model.bg;
    let th = model.tanh2x();
    for i in 0..n {
        let c = point_in(model, s, &sp, i)?;
        let a_t = bg.a_t() + a.dat[i];
        let a_x = bg.a_x(model.grid.x()[i]) + da_x[i];
        let rt = 2.0 + c.rt_dev;
        let rx = 2.0 * th[i] + c.rx_dev;
        let rxx = 4.0 + c.xx_dev;
        let rtx = 2.0 * rx + c.tx_dev;
        res_h[i] = a_t * rt + a_x * rx + 0.25 * (rx * rx + rt * rt)
            - rxx
            - (c.w_x * c.w_x + c.w_t * c.w_t)
            - 0.25 * c.e4w * (c.q_x * c.q_x + c.q_t * c.q_t);
        res_m[i] = a_x * rt + a_t * rx - rtx + 0.5 * rx * rt - 2.0 * c.w_t * c.w_x
            - 0.5 * c.e4w * c.q_x * c.q_t;
    }
    Ok(Some((Field(res_h), Field(res_m))))
}

/// `∂ₜa_x - ∂ₓa_t` where `a_x` is the constraint-solved gradient
/// (differentiated in time through the field equations) and `a_t` is the
/// evolved one when present, otherwise the constraint-solved one.
pub fn curl_field(model: &Model, s: &FieldState) -> Result<Field, RunError> {
    let n = model.len();
    let st = &model.stencils;
    let sp = spatial(model, s);
    let accel = model.rhs(s)?;
    let (dwt_x, dqt_x) = (st.d1(&s.dwt), st.d1(&s.dqt));
    let mut dt_ax = vec![0.0; n];
    for i in 0..n {
        if at_background(model, s, &sp, i) && accel.dwt[i] == 0.0 && accel.dqt[i] == 0.0 {
            continue;
        }
        let c = model.r_coeffs::<2>(s.t, i)?;
        let y = 2.0 * model.grid.x()[i];
        let j = |a: f64, b: f64| Jet::<2>([a, b]);
        let ci = ConstraintIn {
            rt_dev: c.rt_dev,
            rx_dev: c.rx_dev,
            xx_dev: c.xx_dev,
            tx_dev: c.tx_dev,
            w_t: j(s.dwt[i], accel.dwt[i]),
            w_x: j(model.wbx()[i] + sp.dw_x[i], dwt_x[i]),
            q_t: j(s.dqt[i], accel.dqt[i]),
            q_x: j(sp.dq_x[i], dqt_x[i]),
            e4w: (j(model.wb()[i] + s.dw[i], s.dwt[i]) * -4.0).exp(),
            one_p: one_minus_tanh(-y),
            one_m: one_minus_tanh(y),
        };
        dt_ax[i] = a_gradient(&ci).1.derivative(1);
    }
    let dat = match &s.a {
        Some(a) => a.dat.clone(),
        None => solve_delta_a_gradient(model, s)?.0,
    };
    // a_bt is constant, so ∂ₓa_t = ∂ₓΔa_t
    let dx_at = st.d1(&dat);
    Ok(Field(dt_ax.iter().zip(dx_at.iter()).map(|(a, b)| a - b).collect()))
}

/// Sup-norm constraint residuals at one snapshot. The Hamiltonian and
/// momentum entries are zero when `a` is not evolved.
pub fn residuals(model: &Model, s: &FieldState) -> Result<ConstraintReport, RunError> {
    let (res_hamiltonian, res_momentum) = match residual_fields(model, s)? {
        Some((h, m)) => (h.max_abs(), m.max_abs()),
        None => (0.0, 0.0),
    };
    Ok(ConstraintReport {
        t: s.t,
        res_momentum,
        res_hamiltonian,
        curl_residual: curl_field(model, s)?.max_abs(),
    })
}

fn trapezoid(ts: &[f64], vs: impl Fn(usize) -> f64) -> f64 {
    (1..ts.len())
        .map(|k| 0.5 * (ts[k] - ts[k - 1]) * (vs(k - 1) + vs(k)))
        .sum()
}

/// `a(t, x) = a_anchor + ∫₀ᵗ a_t(s, x₀) ds + ∫_{x₀}^x a_x(t, ξ) dξ` with the
/// anchor `x₀` at the left end of the grid. `anchor_history` holds
/// `(s, a_t(s, x₀))` from `s = 0` to `s = t`.
pub fn integrate_a_x_last(
    grid: &Grid,
    stencils: &Stencils,
    a_x: &[f64],
    anchor_history: &[(f64, f64)],
    a_anchor: f64,
) -> Field {
    let ts: Vec<f64> = anchor_history.iter().map(|p| p.0).collect();
    let base = a_anchor + trapezoid(&ts, |k| anchor_history[k].1);
    let dax = stencils.d1(a_x);
    let mut out = cumulative_integral(grid, a_x, &dax);
    out.iter_mut().for_each(|v| *v += base);
    out
}

/// The other path: `a(t, x) = a_anchor + ∫_{x₀}^x a_x(0, ξ) dξ + ∫₀ᵗ a_t(s, x) ds`
/// with `a_t` histories at every grid point.
pub fn integrate_a_t_last(
    grid: &Grid,
    stencils: &Stencils,
    a_x0: &[f64],
    a_t_history: &[(f64, Field)],
    a_anchor: f64,
) -> Field {
    let dax = stencils.d1(a_x0);
    let mut out = cumulative_integral(grid, a_x0, &dax);
    let ts: Vec<f64> = a_t_history.iter().map(|p| p.0).collect();
    for (i, v) in out.iter_mut().enumerate() {
        *v += a_anchor + trapezoid(&ts, |k| a_t_history[k].1[i]);
    }
    out
}
