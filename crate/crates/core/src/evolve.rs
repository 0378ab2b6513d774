//! Time evolution of the perturbation `(ΔW, Δq)` about a double cusp.
//!
//! `R` is never discretized: `ΔR = R - R_b` solves the flat 1+1 wave equation,
//! so it is evaluated in closed form from its initial profiles through the
//! D'Alembert formula. `(ΔW, ΔW_t, Δq, Δq_t)` and optionally `(Δa, Δa_t)` are
//! advanced by classical RK4 with finite-difference stencils in `x`.

use serde::{Deserialize, Serialize};

use crate::background::{ln_cosh, BackgroundParams};
use crate::constraints;
use crate::energies::{self, EnergyReport};
use crate::error::RunError;
use crate::grid::{Field, Grid, GridSpec, StencilOrder, Stencils};
use crate::jet::{Jet, Real};
use crate::profile::{Bump, PerturbationSpec, Target};

const BLOW_UP: f64 = 1e8;
const SPONGE_TOL: f64 = 1e-13;
const SPONGE_FLOOR: f64 = 1e-10;
const PSI_CELLS: usize = 8192;

#[derive(Debug, Clone)]
struct PsiTable {
    lo: f64,
    h: f64,
    cum: Vec<f64>,
}

/// Exact `ΔR(t, x)` from `ΔR(0) = φ` and `∂ₜΔR(0) = ψ`.
///
/// `∂ₜⁿ∂ₓᵐ ΔR = ½[φ⁽ᵏ⁾(x+t) + (-1)ⁿ φ⁽ᵏ⁾(x-t)] + ½[Ψ⁽ᵏ⁾(x+t) - (-1)ⁿ Ψ⁽ᵏ⁾(x-t)]`
/// with `k = n + m` and `Ψ' = ψ`. Derivatives of the profiles are analytic;
/// `Ψ` itself comes from a Gauss–Legendre table with Hermite interpolation.
#[derive(Debug, Clone, Default)]
pub struct RPerturbation {
    phi: Vec<Bump>,
    psi: Vec<Bump>,
    table: Option<PsiTable>,
    hull: Option<(f64, f64)>,
}

fn hull_of(bumps: &[Bump]) -> Option<(f64, f64)> {
    bumps
        .iter()
        .map(Bump::support)
        .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
}

impl RPerturbation {
    pub fn new(phi: Vec<Bump>, psi: Vec<Bump>) -> Self {
        let table = hull_of(&psi).map(|(lo, hi)| {
            let h = (hi - lo) / PSI_CELLS as f64;
            let gl = [
                (-(0.6f64).sqrt(), 5.0 / 9.0),
                (0.0, 8.0 / 9.0),
                ((0.6f64).sqrt(), 5.0 / 9.0),
            ];
            let mut cum = Vec::with_capacity(PSI_CELLS + 1);
            cum.push(0.0);
            let mut acc = 0.0;
            for i in 0..PSI_CELLS {
                let mid = lo + (i as f64 + 0.5) * h;
                let cell: f64 = gl
                    .iter()
                    .map(|&(s, w)| w * psi.iter().map(|b| b.value(mid + 0.5 * h * s)).sum::<f64>())
                    .sum();
                acc += 0.5 * h * cell;
                cum.push(acc);
            }
            PsiTable { lo, h, cum }
        });
        let all: Vec<Bump> = phi.iter().chain(&psi).copied().collect();
        RPerturbation {
            hull: hull_of(&all),
            phi,
            psi,
            table,
        }
    }

    pub fn from_spec(spec: &PerturbationSpec) -> Self {
        RPerturbation::new(spec.of(Target::R), spec.of(Target::Rt))
    }

    pub fn is_zero(&self) -> bool {
        self.hull.is_none()
    }

    pub fn phi(&self) -> &[Bump] {
        &self.phi
    }

    pub fn psi(&self) -> &[Bump] {
        &self.psi
    }

    fn phi_d(&self, y: f64, k: usize) -> f64 {
        self.phi.iter().map(|b| b.derivative(y, k)).sum()
    }

    fn psi_d(&self, y: f64, k: usize) -> f64 {
        self.psi.iter().map(|b| b.derivative(y, k)).sum()
    }

    /// `Ψ(y) = ∫_{-∞}^y ψ`.
    pub fn psi_primitive(&self, y: f64) -> f64 {
        let Some(tab) = &self.table else {
            return 0.0;
        };
        let last = tab.cum.len() - 1;
        let s = (y - tab.lo) / tab.h;
        if s <= 0.0 {
            return 0.0;
        }
        if s >= last as f64 {
            return tab.cum[last];
        }
        let i = (s.floor() as usize).min(last - 1);
        let u = s - i as f64;
        let x0 = tab.lo + i as f64 * tab.h;
        let (m0, m1) = (self.psi_d(x0, 0), self.psi_d(x0 + tab.h, 0));
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * tab.cum[i]
            + (u3 - 2.0 * u2 + u) * tab.h * m0
            + (-2.0 * u3 + 3.0 * u2) * tab.cum[i + 1]
            + (u3 - u2) * tab.h * m1
    }

    /// Whether `ΔR` can be nonzero near `(t, x)`.
    pub fn active(&self, t: f64, x: f64) -> bool {
        match self.hull {
            Some((lo, hi)) => x >= lo - t && x <= hi + t,
            None => false,
        }
    }

    /// `∂ₜⁿ∂ₓᵐ ΔR(t, x)`.
    pub fn derivative(&self, n: usize, m: usize, t: f64, x: f64) -> f64 {
        if !self.active(t, x) {
            return 0.0;
        }
        let k = n + m;
        let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
        let (yp, ym) = (x + t, x - t);
        let mut v = 0.0;
        if !self.phi.is_empty() {
            v += 0.5 * (self.phi_d(yp, k) + sign * self.phi_d(ym, k));
        }
        if !self.psi.is_empty() {
            v += if k == 0 {
                0.5 * (self.psi_primitive(yp) - self.psi_primitive(ym))
            } else {
                0.5 * (self.psi_d(yp, k - 1) - sign * self.psi_d(ym, k - 1))
            };
        }
        v
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.derivative(0, 0, t, x)
    }
}

/// `R` and its normalized first derivatives at one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RSample {
    pub r: f64,
    pub rt: f64,
    pub rx: f64,
    pub rt_over_r: f64,
    pub rx_over_r: f64,
    /// `(R_t² - R_x²)/(4R²)`.
    pub g: f64,
}

/// Per-point `R` coefficients as deviations from their background values:
/// `rt_dev = R_t/R - 2`, `rx_dev = R_x/R - 2 tanh 2x`,
/// `xx_dev = R_xx/R - 4`, `tx_dev = R_tx/R - 2 R_x/R`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RCoeffs<T> {
    pub r: T,
    pub rt_dev: T,
    pub rx_dev: T,
    pub xx_dev: T,
    pub tx_dev: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// Compact perturbations; anything reaching the outer points is an error.
    Sponge,
    /// Outer points keep their initial values, for non-compact exact data.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AInit {
    /// `a` is not evolved.
    None,
    /// `(Δa, Δa_t)` at `t = 0` solved from the constraints.
    Constraint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub order: StencilOrder,
    pub boundary: BoundaryMode,
    pub a_init: AInit,
}

impl Default for Scheme {
    fn default() -> Self {
        Scheme {
            order: StencilOrder::Fourth,
            boundary: BoundaryMode::Sponge,
            a_init: AInit::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AFields {
    pub da: Field,
    pub dat: Field,
}

/// Perturbation fields at one time level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldState {
    pub t: f64,
    pub dw: Field,
    pub dwt: Field,
    pub dq: Field,
    pub dqt: Field,
    pub a: Option<AFields>,
}

impl FieldState {
    pub fn zeros(grid: &Grid) -> Self {
        FieldState {
            t: 0.0,
            dw: grid.zeros(),
            dwt: grid.zeros(),
            dq: grid.zeros(),
            dqt: grid.zeros(),
            a: None,
        }
    }

    fn named(&self) -> Vec<(&'static str, &Field)> {
        let mut v = vec![
            ("dW", &self.dw),
            ("dWt", &self.dwt),
            ("dq", &self.dq),
            ("dqt", &self.dqt),
        ];
        if let Some(a) = &self.a {
            v.push(("da", &a.da));
            v.push(("dat", &a.dat));
        }
        v
    }

    fn slots_mut(&mut self) -> Vec<&mut Field> {
        let mut v = vec![&mut self.dw, &mut self.dwt, &mut self.dq, &mut self.dqt];
        if let Some(a) = &mut self.a {
            v.push(&mut a.da);
            v.push(&mut a.dat);
        }
        v
    }

    fn slots(&self) -> Vec<&Field> {
        self.named().into_iter().map(|(_, f)| f).collect()
    }

    /// `self = base + h * k`.
    fn set_axpy(&mut self, base: &FieldState, h: f64, k: &FieldState) {
        for ((out, b), d) in self.slots_mut().into_iter().zip(base.slots()).zip(k.slots()) {
            for ((o, &bv), &dv) in out.iter_mut().zip(b.iter()).zip(d.iter()) {
                *o = bv + h * dv;
            }
        }
    }

    /// `self += h * k`.
    fn add_scaled(&mut self, h: f64, k: &FieldState) {
        for (out, d) in self.slots_mut().into_iter().zip(k.slots()) {
            for (o, &dv) in out.iter_mut().zip(d.iter()) {
                *o += h * dv;
            }
        }
    }
}

/// Pointwise inputs of the evolution kernel.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointIn<T> {
    pub dw: T,
    pub dwt: T,
    pub dw_x: T,
    pub dw_xx: T,
    pub dqt: T,
    pub dq_x: T,
    pub dq_xx: T,
    pub rt_dev: T,
    pub rx_dev: T,
    pub wb: f64,
    pub wbx: f64,
    pub th: f64,
}

/// `(ΔW_tt, Δq_tt)`.
#[inline]
pub(crate) fn accel<T: Real>(p: &PointIn<T>) -> (T, T) {
    let rt_r = p.rt_dev + 2.0;
    let rx_r = p.rx_dev + 2.0 * p.th;
    let e4w = ((p.dw + p.wb) * -4.0).exp();
    let w_tt = p.dw_xx - rt_r * p.dwt + rx_r * p.dw_x
        - (p.dqt * p.dqt - p.dq_x * p.dq_x) * e4w * 0.5
        + p.rx_dev * p.wbx;
    let q_tt = p.dq_xx - rt_r * p.dqt + rx_r * p.dq_x + p.dqt * p.dwt * 4.0
        - p.dq_x * p.dw_x * 4.0
        - p.dq_x * p.wbx * 4.0;
    (w_tt, q_tt)
}

/// Source of `Δa_tt - Δa_xx`: the difference of the `a`-equation sources of
/// the solution and of the background.
#[inline]
pub(crate) fn a_source<T: Real>(p: &PointIn<T>) -> T {
    let e4w = ((p.dw + p.wb) * -4.0).exp();
    let dg = (p.rt_dev * 4.0 + p.rt_dev * p.rt_dev - p.rx_dev * (4.0 * p.th) - p.rx_dev * p.rx_dev)
        * 0.25;
    dg - p.dwt * p.dwt + p.dw_x * (2.0 * p.wbx) + p.dw_x * p.dw_x
        - (p.dqt * p.dqt - p.dq_x * p.dq_x) * e4w * 0.25
}

/// Immutable context of a run: background, grid, stencils and `ΔR`.
#[derive(Debug, Clone)]
pub struct Model {
    pub bg: BackgroundParams,
    pub grid: Grid,
    pub stencils: Stencils,
    pub r_pert: RPerturbation,
    pub scheme: Scheme,
    pub(crate) th: Vec<f64>,
    pub(crate) wb: Vec<f64>,
    pub(crate) wbx: Vec<f64>,
    pub(crate) gb: Vec<f64>,
    ln_rb0: Vec<f64>,
}

impl Model {
    pub fn new(
        bg: BackgroundParams,
        grid: Grid,
        scheme: Scheme,
        r_pert: RPerturbation,
    ) -> Result<Self, RunError> {
        bg.validate()?;
        let stencils = Stencils::new(&grid, scheme.order);
        let x = grid.x();
        Ok(Model {
            th: x.iter().map(|&x| (2.0 * x).tanh()).collect(),
            wb: x.iter().map(|&x| bg.w(x)).collect(),
            wbx: x.iter().map(|&x| bg.w_x(x)).collect(),
            gb: x.iter().map(|&x| bg.g_b(x)).collect(),
            ln_rb0: x.iter().map(|&x| bg.r0.ln() + ln_cosh(2.0 * x)).collect(),
            bg,
            grid,
            stencils,
            r_pert,
            scheme,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Points held fixed at each end.
    pub fn boundary_layer(&self) -> usize {
        self.stencils.boundary_layer()
    }

    pub fn wb(&self) -> &[f64] {
        &self.wb
    }

    pub fn wbx(&self) -> &[f64] {
        &self.wbx
    }

    pub fn gb(&self) -> &[f64] {
        &self.gb
    }

    pub fn tanh2x(&self) -> &[f64] {
        &self.th
    }

    pub(crate) fn rb(&self, t: f64, i: usize) -> f64 {
        (self.ln_rb0[i] + 2.0 * t).exp()
    }

    /// `R`, its first derivatives and `G` at `(t, x)`.
    pub fn eval_r(&self, t: f64, x: f64) -> Result<RSample, RunError> {
        let b = self.bg.eval(t, x)?;
        let rp = &self.r_pert;
        let (dr, drt, drx) = (
            rp.value(t, x),
            rp.derivative(1, 0, t, x),
            rp.derivative(0, 1, t, x),
        );
        let r = b.r + dr;
        if r <= 0.0 {
            return Err(RunError::NonPositiveR { t, x, r });
        }
        let th = (2.0 * x).tanh();
        let rt_over_r = 2.0 + (drt - 2.0 * dr) / r;
        let rx_over_r = 2.0 * th + (drx - 2.0 * th * dr) / r;
        Ok(RSample {
            r,
            rt: b.r_t + drt,
            rx: b.r_x + drx,
            rt_over_r,
            rx_over_r,
            g: 0.25 * (rt_over_r - rx_over_r) * (rt_over_r + rx_over_r),
        })
    }

    /// `R` coefficients at grid point `i` as time jets of length `N`.
    pub(crate) fn r_coeffs<const N: usize>(&self, t: f64, i: usize) -> Result<RCoeffs<Jet<N>>, RunError> {
        let x = self.grid.x()[i];
        let th = self.th[i];
        let rb = self.rb(t, i);
        let mut rb_d = [0.0; N];
        let mut p = rb;
        for c in rb_d.iter_mut() {
            *c = p;
            p *= 2.0;
        }
        let rb_jet = Jet::from_derivatives(rb_d);
        let rp = &self.r_pert;
        if !rp.active(t, x) {
            let z = Jet::constant(0.0);
            return Ok(RCoeffs {
                r: rb_jet,
                rt_dev: z,
                rx_dev: z,
                xx_dev: z,
                tx_dev: z,
            });
        }
        let series = |n0: usize, m: usize| {
            let mut d = [0.0; N];
            for (k, c) in d.iter_mut().enumerate() {
                *c = rp.derivative(n0 + k, m, t, x);
            }
            Jet::from_derivatives(d)
        };
        let (dr, drt, drx, drxx, drtx) = (series(0, 0), series(1, 0), series(0, 1), series(0, 2), series(1, 1));
        let r = rb_jet + dr;
        if r.value() <= 0.0 {
            return Err(RunError::NonPositiveR { t, x, r: r.value() });
        }
        Ok(RCoeffs {
            r,
            rt_dev: (drt - dr * 2.0) / r,
            rx_dev: (drx - dr * (2.0 * th)) / r,
            xx_dev: (drxx - dr * 4.0) / r,
            tx_dev: (drtx - drx * 2.0) / r,
        })
    }

    /// Plain-number `R` coefficients at grid point `i`.
    pub(crate) fn r_coeffs_f64(&self, t: f64, i: usize) -> Result<RCoeffs<f64>, RunError> {
        let c = self.r_coeffs::<1>(t, i)?;
        Ok(RCoeffs {
            r: c.r.value(),
            rt_dev: c.rt_dev.value(),
            rx_dev: c.rx_dev.value(),
            xx_dev: c.xx_dev.value(),
            tx_dev: c.tx_dev.value(),
        })
    }

    /// Fills `rt_dev`, `rx_dev` over the grid at time `t`.
    fn fill_r_devs(&self, t: f64, rt_dev: &mut [f64], rx_dev: &mut [f64]) -> Result<(), RunError> {
        rt_dev.iter_mut().for_each(|v| *v = 0.0);
        rx_dev.iter_mut().for_each(|v| *v = 0.0);
        let rp = &self.r_pert;
        if rp.is_zero() {
            return Ok(());
        }
        for (i, &x) in self.grid.x().iter().enumerate() {
            if !rp.active(t, x) {
                continue;
            }
            let dr = rp.value(t, x);
            let r = self.rb(t, i) + dr;
            if r <= 0.0 {
                return Err(RunError::NonPositiveR { t, x, r });
            }
            rt_dev[i] = (rp.derivative(1, 0, t, x) - 2.0 * dr) / r;
            rx_dev[i] = (rp.derivative(0, 1, t, x) - 2.0 * self.th[i] * dr) / r;
        }
        Ok(())
    }

    /// Time derivative of the full first-order system at `s`.
    pub fn rhs(&self, s: &FieldState) -> Result<FieldState, RunError> {
        let mut ws = Workspace::new(self.len());
        let mut out = s.clone();
        self.rhs_into(s, &mut out, &mut ws)?;
        Ok(out)
    }

    fn rhs_into(&self, s: &FieldState, out: &mut FieldState, ws: &mut Workspace) -> Result<(), RunError> {
        let n = self.len();
        let bl = self.boundary_layer();
        self.fill_r_devs(s.t, &mut ws.rt_dev, &mut ws.rx_dev)?;
        let (d1, d2) = (self.stencils.op(1), self.stencils.op(2));
        d1.apply_into(&s.dw, &mut ws.dw_x);
        d2.apply_into(&s.dw, &mut ws.dw_xx);
        d1.apply_into(&s.dq, &mut ws.dq_x);
        d2.apply_into(&s.dq, &mut ws.dq_xx);
        if let Some(a) = &s.a {
            d2.apply_into(&a.da, &mut ws.da_xx);
        }
        for i in bl..n - bl {
            let p = PointIn {
                dw: s.dw[i],
                dwt: s.dwt[i],
                dw_x: ws.dw_x[i],
                dw_xx: ws.dw_xx[i],
                dqt: s.dqt[i],
                dq_x: ws.dq_x[i],
                dq_xx: ws.dq_xx[i],
                rt_dev: ws.rt_dev[i],
                rx_dev: ws.rx_dev[i],
                wb: self.wb[i],
                wbx: self.wbx[i],
                th: self.th[i],
            };
            let (w_tt, q_tt) = accel(&p);
            out.dw[i] = p.dwt;
            out.dwt[i] = w_tt;
            out.dq[i] = p.dqt;
            out.dqt[i] = q_tt;
            if let (Some(a), Some(oa)) = (&s.a, &mut out.a) {
                oa.da[i] = a.dat[i];
                oa.dat[i] = ws.da_xx[i] + a_source(&p);
            }
        }
        for f in out.slots_mut() {
            f[..bl].iter_mut().for_each(|v| *v = 0.0);
            f[n - bl..].iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(())
    }

    /// Second and third time derivatives of `(ΔW, Δq)` at `s`, from the
    /// field equations evaluated on time jets.
    pub fn time_derivatives(&self, s: &FieldState) -> Result<TimeDerivatives, RunError> {
        let n = self.len();
        let bl = self.boundary_layer();
        let first = self.rhs(s)?;
        let (dwtt, dqtt) = (first.dwt, first.dqt);
        let st = &self.stencils;
        let (dw_x, dw_xx, dq_x, dq_xx) = (st.d1(&s.dw), st.d2(&s.dw), st.d1(&s.dq), st.d2(&s.dq));
        let (dwt_x, dwt_xx, dqt_x, dqt_xx) = (st.d1(&s.dwt), st.d2(&s.dwt), st.d1(&s.dqt), st.d2(&s.dqt));
        let mut dwttt = vec![0.0; n];
        let mut dqttt = vec![0.0; n];
        let j = |a: f64, b: f64| Jet::<2>([a, b]);
        for i in bl..n - bl {
            let c = self.r_coeffs::<2>(s.t, i)?;
            let p = PointIn {
                dw: j(s.dw[i], s.dwt[i]),
                dwt: j(s.dwt[i], dwtt[i]),
                dw_x: j(dw_x[i], dwt_x[i]),
                dw_xx: j(dw_xx[i], dwt_xx[i]),
                dqt: j(s.dqt[i], dqtt[i]),
                dq_x: j(dq_x[i], dqt_x[i]),
                dq_xx: j(dq_xx[i], dqt_xx[i]),
                rt_dev: c.rt_dev,
                rx_dev: c.rx_dev,
                wb: self.wb[i],
                wbx: self.wbx[i],
                th: self.th[i],
            };
            let (w, q) = accel(&p);
            dwttt[i] = w.derivative(1);
            dqttt[i] = q.derivative(1);
        }
        Ok(TimeDerivatives {
            dwtt,
            dqtt,
            dwttt: Field(dwttt),
            dqttt: Field(dqttt),
        })
    }

    /// `z = R^{1/2} ΔW` and `v = R^{1/2} e^{-2W} Δq` with their first three
    /// time derivatives.
    pub fn zv_jets(&self, s: &FieldState) -> Result<ZvJets, RunError> {
        let td = self.time_derivatives(s)?;
        let n = self.len();
        let mut z: [Field; 4] = Default::default();
        let mut v: [Field; 4] = Default::default();
        for k in 0..4 {
            z[k] = Field(vec![0.0; n]);
            v[k] = Field(vec![0.0; n]);
        }
        for i in 0..n {
            let w = [s.dw[i], s.dwt[i], td.dwtt[i], td.dwttt[i]];
            let q = [s.dq[i], s.dqt[i], td.dqtt[i], td.dqttt[i]];
            let w_zero = w.iter().all(|&c| c == 0.0);
            let q_zero = q.iter().all(|&c| c == 0.0);
            if w_zero && q_zero {
                continue;
            }
            let c = self.r_coeffs::<4>(s.t, i)?;
            let sqrt_r = c.r.sqrt();
            let dw = Jet::from_derivatives(w);
            let zj = sqrt_r * dw;
            let vj = if q_zero {
                Jet::constant(0.0)
            } else {
                sqrt_r * ((dw + self.wb[i]) * -2.0).exp() * Jet::from_derivatives(q)
            };
            for k in 0..4 {
                z[k][i] = zj.derivative(k);
                v[k][i] = vj.derivative(k);
            }
        }
        Ok(ZvJets { z, v })
    }

    /// `(z, z_t, v, v_t)`.
    pub fn to_zv(&self, s: &FieldState) -> Result<(Field, Field, Field, Field), RunError> {
        let n = self.len();
        let (mut z, mut zt, mut v, mut vt) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let c = self.r_coeffs::<2>(s.t, i)?;
            let sqrt_r = c.r.sqrt();
            let dw = Jet([s.dw[i], s.dwt[i]]);
            let zj = sqrt_r * dw;
            let vj = sqrt_r * ((dw + self.wb[i]) * -2.0).exp() * Jet([s.dq[i], s.dqt[i]]);
            z[i] = zj.0[0];
            zt[i] = zj.0[1];
            v[i] = vj.0[0];
            vt[i] = vj.0[1];
        }
        Ok((Field(z), Field(zt), Field(v), Field(vt)))
    }

    /// Inverse of [`to_zv`](Self::to_zv) at time `t`.
    pub fn from_zv(&self, t: f64, z: &[f64], zt: &[f64], v: &[f64], vt: &[f64]) -> Result<FieldState, RunError> {
        let mut s = FieldState::zeros(&self.grid);
        s.t = t;
        for i in 0..self.len() {
            let c = self.r_coeffs::<2>(t, i)?;
            let sqrt_r = c.r.value().sqrt();
            let half_rt = 0.5 * (c.rt_dev.value() + 2.0);
            let dw = z[i] / sqrt_r;
            let dwt = (zt[i] - half_rt * z[i]) / sqrt_r;
            let e2w = (2.0 * (self.wb[i] + dw)).exp();
            let dq = v[i] * e2w / sqrt_r;
            let dqt = vt[i] * e2w / sqrt_r - (half_rt - 2.0 * dwt) * dq;
            s.dw[i] = dw;
            s.dwt[i] = dwt;
            s.dq[i] = dq;
            s.dqt[i] = dqt;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeDerivatives {
    pub dwtt: Field,
    pub dqtt: Field,
    pub dwttt: Field,
    pub dqttt: Field,
}

/// `z[k]`, `v[k]` hold the `k`-th time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct ZvJets {
    pub z: [Field; 4],
    pub v: [Field; 4],
}

#[derive(Debug, Clone)]
struct Workspace {
    dw_x: Vec<f64>,
    dw_xx: Vec<f64>,
    dq_x: Vec<f64>,
    dq_xx: Vec<f64>,
    da_xx: Vec<f64>,
    rt_dev: Vec<f64>,
    rx_dev: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            dw_x: vec![0.0; n],
            dw_xx: vec![0.0; n],
            dq_x: vec![0.0; n],
            dq_xx: vec![0.0; n],
            da_xx: vec![0.0; n],
            rt_dev: vec![0.0; n],
            rx_dev: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Keep every `k`-th step's state.
    pub snapshot_stride: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub reports: Vec<EnergyReport>,
    pub snapshots: Vec<FieldState>,
    pub final_state: FieldState,
    pub steps: usize,
    pub dt: f64,
}

/// Single-writer stepping of one run.
#[derive(Debug, Clone)]
pub struct Evolver {
    model: Model,
    spec: GridSpec,
    state: FieldState,
    ws: Workspace,
    stages: [FieldState; 5],
}

impl Evolver {
    /// Builds the initial state from bump data after checking the grid, the
    /// support-safety margin and the `m0(0) < 2R0/3` gate.
    pub fn new(
        bg: BackgroundParams,
        spec: &GridSpec,
        scheme: Scheme,
        pert: &PerturbationSpec,
    ) -> Result<Self, RunError> {
        spec.validate()?;
        let grid = spec.grid();
        if scheme.boundary == BoundaryMode::Sponge {
            let required = pert.support_radius() + spec.t_final + 2.0 * spec.dx();
            if spec.l < required {
                return Err(RunError::SupportSafety { l: spec.l, required });
            }
        }
        let r_pert = RPerturbation::from_spec(pert);
        let model = Model::new(bg, grid, scheme, r_pert)?;
        let m0 = energies::m_k(&model, 0.0, 0);
        let limit = 2.0 * bg.r0 / 3.0;
        if m0 >= limit {
            return Err(RunError::GateRejected { m0, limit });
        }
        let g = &model.grid;
        let mut state = FieldState {
            t: 0.0,
            dw: pert.sample(Target::W, g),
            dwt: pert.sample(Target::Wt, g),
            dq: pert.sample(Target::Q, g),
            dqt: pert.sample(Target::Qt, g),
            a: None,
        };
        if scheme.a_init == AInit::Constraint {
            state.a = Some(constraints::init_a(&model, &state)?);
        }
        Self::from_parts(model, spec.clone(), state)
    }

    /// Starts from arbitrary data, e.g. a non-compact exact solution or
    /// deliberately inconsistent `a`.
    pub fn with_state(
        bg: BackgroundParams,
        spec: &GridSpec,
        scheme: Scheme,
        r_pert: RPerturbation,
        state: FieldState,
    ) -> Result<Self, RunError> {
        spec.validate()?;
        let model = Model::new(bg, spec.grid(), scheme, r_pert)?;
        for (_, f) in state.named() {
            model.grid.check(f)?;
        }
        Self::from_parts(model, spec.clone(), state)
    }

    fn from_parts(model: Model, spec: GridSpec, state: FieldState) -> Result<Self, RunError> {
        let n = model.len();
        let stages = [
            state.clone(),
            state.clone(),
            state.clone(),
            state.clone(),
            state.clone(),
        ];
        let ev = Evolver {
            ws: Workspace::new(n),
            model,
            spec,
            state,
            stages,
        };
        ev.check_state()?;
        Ok(ev)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn grid_spec(&self) -> &GridSpec {
        &self.spec
    }

    /// One classical RK4 step of size `dt` (negative steps are allowed).
    pub fn step(&mut self, dt: f64) -> Result<(), RunError> {
        let t0 = self.state.t;
        let [k1, k2, k3, k4, tmp] = &mut self.stages;
        let m = &self.model;
        m.rhs_into(&self.state, k1, &mut self.ws)?;
        tmp.set_axpy(&self.state, 0.5 * dt, k1);
        tmp.t = t0 + 0.5 * dt;
        m.rhs_into(tmp, k2, &mut self.ws)?;
        tmp.set_axpy(&self.state, 0.5 * dt, k2);
        m.rhs_into(tmp, k3, &mut self.ws)?;
        tmp.set_axpy(&self.state, dt, k3);
        tmp.t = t0 + dt;
        m.rhs_into(tmp, k4, &mut self.ws)?;
        let s = &mut self.state;
        s.add_scaled(dt / 6.0, k1);
        s.add_scaled(dt / 3.0, k2);
        s.add_scaled(dt / 3.0, k3);
        s.add_scaled(dt / 6.0, k4);
        s.t = t0 + dt;
        self.check_state()
    }

    fn check_state(&self) -> Result<(), RunError> {
        let s = &self.state;
        for (name, f) in s.named() {
            if let Some(&v) = f.iter().find(|v| !v.is_finite() || v.abs() > BLOW_UP) {
                return Err(RunError::BlowUp {
                    t: s.t,
                    field: name,
                    value: v,
                });
            }
        }
        if self.model.scheme.boundary == BoundaryMode::Sponge {
            self.check_sponge()?;
        }
        Ok(())
    }

    /// Outer `boundary_layer + 2` points of every compact field must stay at
    /// round-off relative to the field's maximum. `Δa` carries a constant
    /// tail and is exempt.
    fn check_sponge(&self) -> Result<(), RunError> {
        let s = &self.state;
        let n = self.model.len();
        let width = (self.model.boundary_layer() + 2).min(n / 2);
        let x = self.model.grid.x();
        let mut fields = vec![
            ("dW", &s.dw),
            ("dWt", &s.dwt),
            ("dq", &s.dq),
            ("dqt", &s.dqt),
        ];
        if let Some(a) = &s.a {
            fields.push(("dat", &a.dat));
        }
        for (name, f) in fields {
            let scale = f.max_abs();
            if scale == 0.0 {
                continue;
            }
            for i in (0..width).chain(n - width..n) {
                if f[i].abs() > SPONGE_TOL * scale + SPONGE_FLOOR {
                    return Err(RunError::SupportViolation {
                        t: s.t,
                        x: x[i],
                        field: name,
                        value: f[i],
                    });
                }
            }
        }
        Ok(())
    }

    /// Integrates to `t_final`, reporting every `output_stride` steps and at
    /// the final time.
    pub fn run(mut self, opts: RunOptions) -> Result<RunResult, RunError> {
        let (steps, dt) = self.spec.time_steps();
        let stride = self.spec.output_stride;
        let mut reports = vec![energies::report(&self.model, &self.state)?];
        let mut snapshots = Vec::new();
        if opts.snapshot_stride.is_some() {
            snapshots.push(self.state.clone());
        }
        let t0 = self.state.t;
        for k in 1..=steps {
            self.step(dt)?;
            // land exactly on the grid of times
            self.state.t = t0 + k as f64 * dt;
            if k % stride == 0 || k == steps {
                reports.push(energies::report(&self.model, &self.state)?);
            }
            if let Some(ss) = opts.snapshot_stride {
                if ss > 0 && (k % ss == 0 || k == steps) {
                    snapshots.push(self.state.clone());
                }
            }
        }
        Ok(RunResult {
            reports,
            snapshots,
            final_state: self.state,
            steps,
            dt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::sech;
    use crate::profile::BumpShape;

    fn spec(l: f64, dx: f64, t_final: f64) -> GridSpec {
        GridSpec {
            l,
            nx: GridSpec::nx_for_dx(l, dx),
            cfl: 0.25,
            t_final,
            output_stride: 1000,
        }
    }

    #[test]
    fn dalembert_half_integral_far_from_support() {
        let psi = Bump::smooth(Target::Rt, 0.3, 0.0, 1.0);
        let rp = RPerturbation::new(vec![], vec![psi]);
        let total = psi.integral();
        assert!((rp.value(5.0, 0.0) - 0.5 * total).abs() < 1e-13);
        assert!((rp.psi_primitive(2.0) - total).abs() < 1e-15);
        assert_eq!(rp.value(5.0, 7.0), 0.0);
    }

    #[test]
    fn dalembert_matches_initial_data_and_wave_equation() {
        let rp = RPerturbation::new(
            vec![Bump::smooth(Target::R, 0.2, -0.5, 1.2)],
            vec![Bump::new(Target::Rt, -0.1, 0.7, 0.9, BumpShape::CosineTaper).unwrap()],
        );
        for &x in &[-1.0, 0.0, 0.4, 1.1] {
            assert!((rp.value(0.0, x) - rp.phi_d(x, 0)).abs() < 1e-15);
            assert!((rp.derivative(1, 0, 0.0, x) - rp.psi_d(x, 0)).abs() < 1e-15);
            for &t in &[0.3, 1.7] {
                let tt = rp.derivative(2, 0, t, x);
                let xx = rp.derivative(0, 2, t, x);
                assert!((tt - xx).abs() < 1e-12);
            }
        }
        // time derivative of the value matches a central difference
        let h = 1e-5;
        let (t, x) = (0.8, 0.3);
        let fd = (rp.value(t + h, x) - rp.value(t - h, x)) / (2.0 * h);
        assert!((fd - rp.derivative(1, 0, t, x)).abs() < 1e-8);
    }

    #[test]
    fn zero_perturbation_gives_background_r() {
        let m = Model::new(
            BackgroundParams::default(),
            Grid::new(5.0, 101),
            Scheme::default(),
            RPerturbation::default(),
        )
        .unwrap();
        let r = m.eval_r(0.0, 0.0).unwrap();
        assert_eq!(r.r, 1.0);
        assert_eq!(r.g, 1.0);
        let r = m.eval_r(1.0, 0.8).unwrap();
        assert!((r.g - sech(1.6).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn background_is_a_fixed_point() {
        let bg = BackgroundParams::new(2.0, -1.5, 0.3, 0.7, 0.0).unwrap();
        let sp = spec(5.0, 0.05, 1.0);
        let scheme = Scheme {
            a_init: AInit::Constraint,
            ..Scheme::default()
        };
        let mut ev = Evolver::new(bg, &sp, scheme, &PerturbationSpec::default()).unwrap();
        let out = ev.model().rhs(ev.state()).unwrap();
        for (_, f) in out.named() {
            assert!(f.max_abs() <= 1e-13);
        }
        let (_, dt) = sp.time_steps();
        for _ in 0..1000 {
            ev.step(dt).unwrap();
        }
        assert!(ev.state().dw.max_abs() <= 1e-12);
        assert!(ev.state().a.as_ref().unwrap().da.max_abs() <= 1e-12);
    }

    #[test]
    fn polarization_is_preserved() {
        let pert = PerturbationSpec::new(vec![
            Bump::smooth(Target::W, 1e-2, 0.0, 1.0),
            Bump::smooth(Target::Rt, 1e-2, 0.5, 1.0),
        ]);
        let sp = spec(6.0, 0.05, 2.0);
        let mut ev = Evolver::new(BackgroundParams::default(), &sp, Scheme::default(), &pert).unwrap();
        let (steps, dt) = sp.time_steps();
        for _ in 0..steps {
            ev.step(dt).unwrap();
        }
        assert_eq!(ev.state().dq.max_abs(), 0.0);
        assert_eq!(ev.state().dqt.max_abs(), 0.0);
        assert!(ev.state().dw.max_abs() > 1e-4);
    }

    #[test]
    fn forward_then_backward_step_returns() {
        let pert = PerturbationSpec::new(vec![
            Bump::smooth(Target::W, 1e-3, 0.0, 1.0),
            Bump::smooth(Target::Q, 1e-3, 0.3, 1.0),
        ]);
        let sp = spec(4.0, 0.02, 1.0);
        let mut ev = Evolver::new(BackgroundParams::default(), &sp, Scheme::default(), &pert).unwrap();
        let start = ev.state().clone();
        let (_, dt) = sp.time_steps();
        ev.step(dt).unwrap();
        ev.step(-dt).unwrap();
        for ((_, a), (_, b)) in ev.state().named().into_iter().zip(start.named()) {
            let d = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(d <= 1e-10, "{d}");
        }
    }

    #[test]
    fn zv_round_trip_and_initial_shape() {
        let pert = PerturbationSpec::new(vec![
            Bump::smooth(Target::W, 1e-3, 0.0, 1.0),
            Bump::smooth(Target::Wt, 2e-3, 0.2, 1.0),
            Bump::smooth(Target::Q, -1e-3, 0.3, 1.0),
            Bump::smooth(Target::Qt, 1e-3, -0.2, 0.8),
            Bump::smooth(Target::R, 1e-2, 0.0, 1.0),
        ]);
        let sp = spec(4.0, 0.02, 1.0);
        let ev = Evolver::new(BackgroundParams::default(), &sp, Scheme::default(), &pert).unwrap();
        let m = ev.model();
        let s = ev.state();
        let (z, zt, v, vt) = m.to_zv(s).unwrap();
        let back = m.from_zv(0.0, &z, &zt, &v, &vt).unwrap();
        for ((_, a), (_, b)) in back.named().into_iter().zip(s.named()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }

        let pol = PerturbationSpec::new(vec![Bump::smooth(Target::W, 1e-3, 0.0, 1.0)]);
        let ev = Evolver::new(BackgroundParams::default(), &sp, Scheme::default(), &pol).unwrap();
        let (z, _, v, _) = ev.model().to_zv(ev.state()).unwrap();
        for (i, &x) in ev.model().grid.x().iter().enumerate() {
            let expected = pol.derivative(Target::W, x, 0) * (2.0 * x).cosh().sqrt();
            assert!((z[i] - expected).abs() <= 1e-15);
            assert_eq!(v[i], 0.0);
        }
    }

    #[test]
    fn third_time_derivative_matches_rk4_differences() {
        let pert = PerturbationSpec::new(vec![
            Bump::smooth(Target::W, 1e-2, 0.0, 2.0),
            Bump::smooth(Target::Q, 1e-2, 0.3, 2.0),
            Bump::smooth(Target::Rt, 1e-2, -0.2, 2.0),
        ]);
        let sp = spec(5.0, 0.02, 1.0);
        let mut ev = Evolver::new(BackgroundParams::default(), &sp, Scheme::default(), &pert).unwrap();
        let td = ev.model().time_derivatives(ev.state()).unwrap();
        let h = 5e-4;
        let mut fw = ev.clone();
        fw.step(h).unwrap();
        ev.step(-h).unwrap();
        let acc_p = fw.model().time_derivatives(fw.state()).unwrap().dwtt;
        let acc_m = ev.model().time_derivatives(ev.state()).unwrap().dwtt;
        let scale = td.dwttt.max_abs();
        for i in 0..acc_p.len() {
            let fd = (acc_p[i] - acc_m[i]) / (2.0 * h);
            assert!((fd - td.dwttt[i]).abs() <= 1e-4 * scale, "{i} {fd} {} {scale}", td.dwttt[i]);
        }
    }

    #[test]
    fn gate_and_support_safety_reject() {
        let big = PerturbationSpec::new(vec![Bump::smooth(Target::R, 0.7, 0.0, 1.0)]);
        let err = Evolver::new(BackgroundParams::default(), &spec(6.0, 0.05, 1.0), Scheme::default(), &big)
            .unwrap_err();
        assert!(matches!(err, RunError::GateRejected { .. }));
        let wide = PerturbationSpec::new(vec![Bump::smooth(Target::W, 1e-3, 0.0, 3.0)]);
        let err = Evolver::new(BackgroundParams::default(), &spec(4.0, 0.05, 1.0), Scheme::default(), &wide)
            .unwrap_err();
        assert!(matches!(err, RunError::SupportSafety { .. }));
    }
}
