//! The double-cusp background and the hyperbolic-plane target geometry.
//!
//! The polarized double cusp is
//!
//! ```text
//! R = R0 e^{2t} cosh(2x)
//! W = W1 + W0 atan(e^{2x})
//! q = q0
//! a = a0 - (1/2 + W0²/2) ½ ln cosh(2x) + (3/2 + W0²/2) t
//! ```
//!
//! `(W, q)` is a wave map into the hyperbolic plane with metric
//! `h = 4 dW² + e^{-4W} dq²`. The chart `(u, s) = (q, e^{2W})` turns `h` into the
//! upper-half-plane metric `(du² + ds²)/s²`, so target isometries are
//! determinant-one Möbius maps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, StencilOrder, Stencils};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackgroundError {
    #[error("R0 must be positive, got {0}")]
    NonPositiveR0(f64),
    #[error("W0 must be nonzero")]
    ZeroW0,
    #[error("background parameter {0} is not finite")]
    NonFinite(&'static str),
    #[error("R_b(t={t}, x={x}) is not representable in double precision (log R = {log_r})")]
    Overflow { t: f64, x: f64, log_r: f64 },
    #[error("isometry matrix has determinant {0}, expected 1")]
    NotUnimodular(f64),
}

/// The five constants of a double cusp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundParams {
    pub r0: f64,
    pub w0: f64,
    pub w1: f64,
    pub q0: f64,
    pub a0: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        BackgroundParams {
            r0: 1.0,
            w0: 1.0,
            w1: 0.0,
            q0: 0.0,
            a0: 0.0,
        }
    }
}

/// Background values and partials at one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundPoint {
    pub r: f64,
    pub w: f64,
    pub q: f64,
    pub a: f64,
    pub r_t: f64,
    pub r_x: f64,
    pub r_tt: f64,
    pub r_xx: f64,
    pub r_tx: f64,
    pub w_x: f64,
    pub w_xx: f64,
    pub a_t: f64,
    pub a_x: f64,
    pub a_xx: f64,
}

/// Scale-free part of the background, finite for every `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundLog {
    pub log_r: f64,
    pub rt_over_r: f64,
    pub rx_over_r: f64,
    pub w: f64,
    pub w_x: f64,
    pub q: f64,
    pub a: f64,
    pub a_t: f64,
    pub a_x: f64,
}

/// `ln cosh y` without overflow.
pub fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `1 / cosh y` without overflow.
pub fn sech(y: f64) -> f64 {
    let e = (-y.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

impl BackgroundParams {
    pub fn new(r0: f64, w0: f64, w1: f64, q0: f64, a0: f64) -> Result<Self, BackgroundError> {
        let p = BackgroundParams { r0, w0, w1, q0, a0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BackgroundError> {
        for (name, v) in [
            ("R0", self.r0),
            ("W0", self.w0),
            ("W1", self.w1),
            ("q0", self.q0),
            ("a0", self.a0),
        ] {
            if !v.is_finite() {
                return Err(BackgroundError::NonFinite(name));
            }
        }
        if self.r0 <= 0.0 {
            return Err(BackgroundError::NonPositiveR0(self.r0));
        }
        if self.w0 == 0.0 {
            return Err(BackgroundError::ZeroW0);
        }
        Ok(())
    }

    /// `1/2 + W0²/2`, the `ln cosh` coefficient of `a_b`.
    pub fn alpha(&self) -> f64 {
        0.5 + 0.5 * self.w0 * self.w0
    }

    /// `3/2 + W0²/2`, the time slope of `a_b`.
    pub fn beta(&self) -> f64 {
        1.5 + 0.5 * self.w0 * self.w0
    }

    pub fn w(&self, x: f64) -> f64 {
        let at = if x > 0.0 {
            std::f64::consts::FRAC_PI_2 - (-2.0 * x).exp().atan()
        } else {
            (2.0 * x).exp().atan()
        };
        self.w1 + self.w0 * at
    }

    pub fn w_x(&self, x: f64) -> f64 {
        self.w0 * sech(2.0 * x)
    }

    pub fn w_xx(&self, x: f64) -> f64 {
        -2.0 * self.w0 * (2.0 * x).tanh() * sech(2.0 * x)
    }

    /// Background potential `G_b = sech²(2x)`.
    pub fn g_b(&self, x: f64) -> f64 {
        let s = sech(2.0 * x);
        s * s
    }

    pub fn a(&self, t: f64, x: f64) -> f64 {
        self.a0 - self.alpha() * 0.5 * ln_cosh(2.0 * x) + self.beta() * t
    }

    pub fn a_t(&self) -> f64 {
        self.beta()
    }

    pub fn a_x(&self, x: f64) -> f64 {
        -self.alpha() * (2.0 * x).tanh()
    }

    pub fn a_xx(&self, x: f64) -> f64 {
        let s = sech(2.0 * x);
        -2.0 * self.alpha() * s * s
    }

    pub fn log_r(&self, t: f64, x: f64) -> f64 {
        self.r0.ln() + 2.0 * t + ln_cosh(2.0 * x)
    }

    pub fn eval_log(&self, t: f64, x: f64) -> BackgroundLog {
        BackgroundLog {
            log_r: self.log_r(t, x),
            rt_over_r: 2.0,
            rx_over_r: 2.0 * (2.0 * x).tanh(),
            w: self.w(x),
            w_x: self.w_x(x),
            q: self.q0,
            a: self.a(t, x),
            a_t: self.a_t(),
            a_x: self.a_x(x),
        }
    }

    /// Closed-form background and partials. Fails only when `R_b` itself is
    /// not representable; use [`eval_log`](Self::eval_log) far out.
    pub fn eval(&self, t: f64, x: f64) -> Result<BackgroundPoint, BackgroundError> {
        let log_r = self.log_r(t, x);
        // R_tt = 4R is the largest value produced
        if log_r + 4f64.ln() >= f64::MAX.ln() {
            return Err(BackgroundError::Overflow { t, x, log_r });
        }
        let r = log_r.exp();
        let th = (2.0 * x).tanh();
        Ok(BackgroundPoint {
            r,
            w: self.w(x),
            q: self.q0,
            a: self.a(t, x),
            r_t: 2.0 * r,
            r_x: 2.0 * r * th,
            r_tt: 4.0 * r,
            r_xx: 4.0 * r,
            r_tx: 4.0 * r * th,
            w_x: self.w_x(x),
            w_xx: self.w_xx(x),
            a_t: self.a_t(),
            a_x: self.a_x(x),
            a_xx: self.a_xx(x),
        })
    }

    /// Residuals of the evolution equations for `R, W, q, a` and of the two
    /// constraints, assembled from [`eval`](Self::eval) output. Terms carrying
    /// `R` are divided by `R`, so the values are scale-free.
    pub fn field_equation_residuals(&self, t: f64, x: f64) -> Result<[f64; 6], BackgroundError> {
        let b = self.eval(t, x)?;
        // W, q are static and q is constant along the background
        let (w_t, q_t, q_x, q_tt, q_xx, w_tt, a_tt) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (rt, rx) = (b.r_t / b.r, b.r_x / b.r);
        let e4w = (-4.0 * b.w).exp();
        let res_r = (b.r_xx - b.r_tt) / b.r;
        let res_w = w_tt - b.w_xx + rt * w_t - rx * b.w_x + 0.5 * (q_t * q_t - q_x * q_x) * e4w;
        let res_q = q_tt - q_xx + rt * q_t - rx * q_x - 4.0 * q_t * w_t + 4.0 * q_x * b.w_x;
        let res_a = a_tt - b.a_xx + 0.25 * (rx * rx - rt * rt) + w_t * w_t - b.w_x * b.w_x
            + 0.25 * (q_t * q_t - q_x * q_x) * e4w;
        let res_h = b.a_t * rt + b.a_x * rx + 0.25 * (rx * rx + rt * rt)
            - b.r_xx / b.r
            - (b.w_x * b.w_x + w_t * w_t)
            - 0.25 * e4w * (q_x * q_x + q_t * q_t);
        let res_m = b.a_x * rt + b.a_t * rx - b.r_tx / b.r + 0.5 * rx * rt - 2.0 * w_t * b.w_x
            - 0.5 * e4w * q_x * q_t;
        Ok([res_r, res_w, res_q, res_a, res_h, res_m])
    }
}

/// Coordinates adapted to the right end: `t' = -αx + βt`, `x' = -αt + βx`
/// with `α = 1/2 + W0²/2`, `β = 3/2 + W0²/2`.
pub fn coords_prime(t: f64, x: f64, w0: f64) -> (f64, f64) {
    let alpha = 0.5 + 0.5 * w0 * w0;
    let beta = 1.5 + 0.5 * w0 * w0;
    (beta * t - alpha * x, beta * x - alpha * t)
}

pub fn coords_prime_inverse(tp: f64, xp: f64, w0: f64) -> (f64, f64) {
    let alpha = 0.5 + 0.5 * w0 * w0;
    let beta = 1.5 + 0.5 * w0 * w0;
    let det = beta * beta - alpha * alpha;
    ((beta * tp + alpha * xp) / det, (alpha * tp + beta * xp) / det)
}

/// Light-cone-preserving coordinates `R = R0 e^{2t} cosh 2x`, `V = R0 e^{2t} sinh 2x`.
pub fn coords_rv(t: f64, x: f64, r0: f64) -> Result<(f64, f64), BackgroundError> {
    let log_r = r0.ln() + 2.0 * t + ln_cosh(2.0 * x);
    if log_r >= f64::MAX.ln() {
        return Err(BackgroundError::Overflow { t, x, log_r });
    }
    let r = log_r.exp();
    Ok((r, r * (2.0 * x).tanh()))
}

/// Point of the hyperbolic plane in the chart `(u, y) = (q, -W)` with metric
/// `4dy² + e^{4y}du²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicPoint {
    pub u: f64,
    pub y: f64,
}

/// Upper-half-plane point `u + i s`, `s > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UhpPoint {
    pub u: f64,
    pub s: f64,
}

impl HyperbolicPoint {
    pub fn from_fields(w: f64, q: f64) -> Self {
        HyperbolicPoint { u: q, y: -w }
    }

    pub fn to_uhp(self) -> UhpPoint {
        UhpPoint {
            u: self.u,
            s: (-2.0 * self.y).exp(),
        }
    }
}

pub fn to_uhp(w: f64, q: f64) -> UhpPoint {
    UhpPoint {
        u: q,
        s: (2.0 * w).exp(),
    }
}

/// Inverse of [`to_uhp`]: returns `(W, q)`.
pub fn from_uhp(p: UhpPoint) -> (f64, f64) {
    (0.5 * p.s.ln(), p.u)
}

/// Hyperbolic distance in the upper half plane.
pub fn uhp_distance(a: UhpPoint, b: UhpPoint) -> f64 {
    let du = a.u - b.u;
    let ds = a.s - b.s;
    (1.0 + (du * du + ds * ds) / (2.0 * a.s * b.s)).acosh()
}

/// Orientation-preserving isometry `z ↦ (az + b)/(cz + d)` with `ad - bc = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isometry {
    m: [[f64; 2]; 2],
}

impl Isometry {
    pub fn identity() -> Self {
        Isometry {
            m: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// Accepts matrices with `|det - 1| <= 1e-9` and rescales them to unit
    /// determinant.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, BackgroundError> {
        let det = a * d - b * c;
        if !det.is_finite() || (det - 1.0).abs() > 1e-9 {
            return Err(BackgroundError::NotUnimodular(det));
        }
        let k = 1.0 / det.sqrt();
        Ok(Isometry {
            m: [[a * k, b * k], [c * k, d * k]],
        })
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.m
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Isometry) -> Isometry {
        let (a, b) = (self.m, other.m);
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Isometry { m }
    }

    pub fn apply(&self, p: UhpPoint) -> UhpPoint {
        let [[a, b], [c, d]] = self.m;
        let den_re = c * p.u + d;
        let den_im = c * p.s;
        let den = den_re * den_re + den_im * den_im;
        let num_re = a * p.u + b;
        UhpPoint {
            u: (num_re * den_re + a * c * p.s * p.s) / den,
            s: p.s * self.det() / den,
        }
    }

    /// Image of the point and of a tangent vector `(du, ds)` at it.
    pub fn apply_with_tangent(&self, p: UhpPoint, tangent: (f64, f64)) -> (UhpPoint, (f64, f64)) {
        let [[_, _], [c, d]] = self.m;
        // f'(z) = det / (cz + d)^2
        let (zr, zi) = (c * p.u + d, c * p.s);
        let (sq_r, sq_i) = (zr * zr - zi * zi, 2.0 * zr * zi);
        let n = sq_r * sq_r + sq_i * sq_i;
        let det = self.det();
        let (fr, fi) = (det * sq_r / n, -det * sq_i / n);
        let (vr, vi) = tangent;
        (self.apply(p), (fr * vr - fi * vi, fr * vi + fi * vr))
    }
}

/// Applies a target isometry pointwise to sampled `(W, q)`.
pub fn apply_isometry(iso: &Isometry, w: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    w.iter()
        .zip(q)
        .map(|(&wi, &qi)| from_uhp(iso.apply(to_uhp(wi, qi))))
        .unzip()
}

/// Image of `(W, q, W_t, q_t)`; velocities transform with the differential.
#[allow(clippy::type_complexity)]
pub fn apply_isometry_with_velocity(
    iso: &Isometry,
    w: &[f64],
    q: &[f64],
    w_t: &[f64],
    q_t: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = w.len();
    let (mut wo, mut qo, mut wto, mut qto) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for i in 0..n {
        let p = to_uhp(w[i], q[i]);
        let tangent = (q_t[i], 2.0 * p.s * w_t[i]);
        let (img, (du, ds)) = iso.apply_with_tangent(p, tangent);
        let (wi, qi) = from_uhp(img);
        wo.push(wi);
        qo.push(qi);
        wto.push(ds / (2.0 * img.s));
        qto.push(du);
    }
    (wo, qo, wto, qto)
}

/// Discrete `h`-length of a sampled curve, midpoint rule per segment.
pub fn curve_length(w: &[f64], q: &[f64]) -> f64 {
    w.windows(2)
        .zip(q.windows(2))
        .map(|(ws, qs)| {
            let dw = ws[1] - ws[0];
            let dq = qs[1] - qs[0];
            let wm = 0.5 * (ws[0] + ws[1]);
            (4.0 * dw * dw + (-4.0 * wm).exp() * dq * dq).sqrt()
        })
        .sum()
}

/// Sup-norm of the Euler–Lagrange residual of `∫ |γ'|_h² cosh(2x) dx`:
/// `W'' + 2 tanh(2x) W' + ½ e^{-4W} q'²` and `q'' + 2 tanh(2x) q' - 4 W' q'`.
pub fn geodesic_residual(w: &[f64], q: &[f64], grid: &Grid, order: StencilOrder) -> f64 {
    let st = Stencils::new(grid, order);
    let (wx, wxx) = (st.d1(w), st.d2(w));
    let (qx, qxx) = (st.d1(q), st.d2(q));
    grid.x()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let th2 = 2.0 * (2.0 * x).tanh();
            let rw = wxx[i] + th2 * wx[i] + 0.5 * (-4.0 * w[i]).exp() * qx[i] * qx[i];
            let rq = qxx[i] + th2 * qx[i] - 4.0 * wx[i] * qx[i];
            rw.abs().max(rq.abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    fn unit() -> BackgroundParams {
        BackgroundParams::new(1.0, 1.0, 0.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert_eq!(
            BackgroundParams::new(0.0, 1.0, 0.0, 0.0, 0.0),
            Err(BackgroundError::NonPositiveR0(0.0))
        );
        assert_eq!(
            BackgroundParams::new(1.0, 0.0, 0.0, 0.0, 0.0),
            Err(BackgroundError::ZeroW0)
        );
    }

    #[test]
    fn origin_values() {
        let b = unit().eval(0.0, 0.0).unwrap();
        assert_eq!(b.r, 1.0);
        assert!((b.w - PI / 4.0).abs() < 1e-15);
        assert_eq!(b.q, 0.0);
        assert!(b.a.abs() < 1e-15);
        assert_eq!(b.a_t, 2.0);
        assert_eq!(b.a_x, 0.0);
        let p = BackgroundParams { r0: 2.0, ..unit() };
        let b = p.eval(1.0, 0.0).unwrap();
        assert!((b.r - 2.0 * 1f64.exp().powi(2)).abs() < 1e-12);
    }

    #[test]
    fn a_partials_match_central_differences() {
        let p = unit();
        let h = 1e-6;
        let at = (p.a(h, 0.0) - p.a(-h, 0.0)) / (2.0 * h);
        let ax = (p.a(0.0, h) - p.a(0.0, -h)) / (2.0 * h);
        assert!((at - 2.0).abs() < 1e-8);
        assert!(ax.abs() < 1e-8);
    }

    #[test]
    fn far_field_is_log_space_or_typed_error() {
        let p = unit();
        let l = p.eval_log(0.0, 400.0);
        assert!(l.log_r.is_finite() && (l.rx_over_r - 2.0).abs() < 1e-15);
        assert!(l.w.is_finite() && l.a.is_finite());
        assert!(matches!(p.eval(0.0, 400.0), Err(BackgroundError::Overflow { .. })));
        assert!(p.eval(0.0, 300.0).is_ok());
    }

    #[test]
    fn background_solves_field_equations_and_constraints() {
        for &(r0, w0) in &[(1.0, 1.0), (0.3, -2.0), (5.0, 0.1)] {
            let p = BackgroundParams::new(r0, w0, 0.4, -1.0, 2.0).unwrap();
            for &(t, x) in &[(0.0, 0.0), (1.5, -3.0), (4.0, 7.5)] {
                for r in p.field_equation_residuals(t, x).unwrap() {
                    assert!(r.abs() <= 1e-12, "{r}");
                }
            }
        }
    }

    #[test]
    fn coords_prime_examples() {
        assert_eq!(coords_prime(0.0, 0.0, 1.0), (0.0, 0.0));
        assert_eq!(coords_prime(1.0, 0.0, 1.0), (2.0, -1.0));
        let (tp, xp) = coords_prime(0.3, -0.7, 2.5);
        let (t, x) = coords_prime_inverse(tp, xp, 2.5);
        assert!((t - 0.3).abs() < 1e-12 && (x + 0.7).abs() < 1e-12);
    }

    #[test]
    fn coords_rv_hyperbola() {
        assert_eq!(coords_rv(0.0, 0.0, 1.0).unwrap(), (1.0, 0.0));
        for x in [-2.0, 0.0, 3.0] {
            let (r, v) = coords_rv(0.0, x, 1.0).unwrap();
            assert!(r > v.abs());
            assert!(((r - v) * (r + v) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn uhp_chart_values() {
        assert_eq!(to_uhp(0.0, 0.0), UhpPoint { u: 0.0, s: 1.0 });
        let p = to_uhp(PI / 4.0, 0.0);
        assert!((p.s - 4.810477380965351).abs() < 1e-12);
        let hp = HyperbolicPoint::from_fields(PI / 4.0, 0.0).to_uhp();
        assert!((hp.s - p.s).abs() < 1e-15);
        let (w, q) = from_uhp(to_uhp(-0.37, 1.2));
        assert!((w + 0.37).abs() < 1e-15 && (q - 1.2).abs() < 1e-15);
    }

    #[test]
    fn uhp_metric_pullback_matches_h() {
        // Numeric pullback of (du² + ds²)/s² along coordinate directions of (W, q).
        let eps = 1e-6;
        for &(w, q) in &[(0.0, 0.0), (0.3, -1.0), (-0.8, 2.0)] {
            let p = to_uhp(w, q);
            let pw = to_uhp(w + eps, q);
            let pq = to_uhp(w, q + eps);
            let g_ww = ((pw.u - p.u).powi(2) + (pw.s - p.s).powi(2)) / (p.s * p.s) / (eps * eps);
            let g_qq = ((pq.u - p.u).powi(2) + (pq.s - p.s).powi(2)) / (p.s * p.s) / (eps * eps);
            assert!((g_ww - 4.0).abs() < 1e-5 * 4.0, "{g_ww}");
            let hq = (-4.0 * w).exp();
            assert!((g_qq - hq).abs() < 1e-8 * hq.max(1.0));
        }
    }

    #[test]
    fn isometry_rejects_non_unimodular() {
        assert!(matches!(
            Isometry::new(2.0, 0.0, 0.0, 1.0),
            Err(BackgroundError::NotUnimodular(_))
        ));
        let iso = Isometry::new(2.0, 1.0, 1.0, 1.0 + 1e-10).unwrap();
        assert!((iso.det() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn identity_isometry_leaves_fields_unchanged() {
        let w: Vec<f64> = (0..50).map(|i| 0.1 * i as f64 - 2.0).collect();
        let q: Vec<f64> = (0..50).map(|i| (0.3 * i as f64).sin()).collect();
        let (w2, q2) = apply_isometry(&Isometry::identity(), &w, &q);
        for i in 0..50 {
            assert!((w2[i] - w[i]).abs() <= 1e-14);
            assert!((q2[i] - q[i]).abs() <= 1e-14);
        }
    }

    #[test]
    fn composition_matches_sequential_application() {
        let i1 = Isometry::new(1.0, 0.5, 0.2, 1.1).unwrap();
        let i2 = Isometry::new(0.8, -0.3, 0.4, (1.0 - 0.3 * 0.4) / 0.8).unwrap();
        let comp = i2.compose(&i1);
        for k in 0..20 {
            let p = to_uhp(0.1 * k as f64 - 1.0, (k as f64).cos());
            let a = i2.apply(i1.apply(p));
            let b = comp.apply(p);
            assert!((a.u - b.u).abs() <= 1e-10 && (a.s - b.s).abs() <= 1e-10);
        }
    }

    #[test]
    fn isometry_preserves_distance_and_curve_length() {
        let iso = Isometry::new(1.0, 0.4, -0.3, (1.0 - 0.4 * 0.3) / 1.0).unwrap();
        let a = to_uhp(0.2, -0.5);
        let b = to_uhp(-0.7, 1.5);
        let d0 = uhp_distance(a, b);
        let d1 = uhp_distance(iso.apply(a), iso.apply(b));
        assert!((d0 - d1).abs() < 1e-12);

        let p = unit();
        let n = 20001;
        let xs: Vec<f64> = (0..n).map(|i| -6.0 + 12.0 * i as f64 / (n - 1) as f64).collect();
        let w: Vec<f64> = xs.iter().map(|&x| p.w(x) + 0.2 * (-x * x).exp()).collect();
        let q: Vec<f64> = xs.iter().map(|&x| 0.3 * (-(x - 1.0).powi(2)).exp()).collect();
        let (w2, q2) = apply_isometry(&iso, &w, &q);
        let l0 = curve_length(&w, &q);
        let l1 = curve_length(&w2, &q2);
        assert!(((l0 - l1) / l0).abs() < 1e-6, "{l0} {l1}");
    }

    #[test]
    fn tangent_map_matches_finite_difference() {
        let iso = Isometry::new(1.2, 0.3, -0.5, (1.0 - 0.15) / 1.2).unwrap();
        let (w, q, wt, qt) = (0.3, -0.4, 0.7, -1.1);
        let (_, _, wt2, qt2) = apply_isometry_with_velocity(&iso, &[w], &[q], &[wt], &[qt]);
        let h = 1e-6;
        let (wp, qp) = apply_isometry(&iso, &[w + h * wt], &[q + h * qt]);
        let (wm, qm) = apply_isometry(&iso, &[w - h * wt], &[q - h * qt]);
        assert!(((wp[0] - wm[0]) / (2.0 * h) - wt2[0]).abs() < 1e-8);
        assert!(((qp[0] - qm[0]) / (2.0 * h) - qt2[0]).abs() < 1e-8);
    }

    #[test]
    fn background_is_geodesic_to_second_order() {
        let p = unit();
        let res = |dx: f64| {
            let g = GridSpec {
                l: 5.0,
                nx: GridSpec::nx_for_dx(5.0, dx),
                cfl: 0.25,
                t_final: 1.0,
                output_stride: 1,
            }
            .grid();
            let w = g.sample(|x| p.w(x));
            let q = g.sample(|_| p.q0);
            geodesic_residual(&w, &q, &g, StencilOrder::Second)
        };
        let (r1, r2, r3) = (res(0.04), res(0.02), res(0.01));
        assert!(r3 <= 1e-3, "{r3}");
        let ratio = r2 / r3;
        assert!((3.5..=4.5).contains(&ratio), "{r1} {r2} {r3}");
        assert!((3.5..=4.5).contains(&(r1 / r2)));
    }

    #[test]
    fn constant_curve_is_degenerate_geodesic() {
        let g = Grid::new(3.0, 101);
        let w = g.sample(|_| 0.4);
        let q = g.sample(|_| -1.3);
        assert!(geodesic_residual(&w, &q, &g, StencilOrder::Second) < 1e-10);
    }
}
