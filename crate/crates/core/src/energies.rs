//! Norms and energies of a perturbation snapshot.

use serde::{Deserialize, Serialize};

use crate::constraints;
use crate::error::RunError;
use crate::evolve::{FieldState, Model, ZvJets};
use crate::grid::{integrate, sup_abs, sup_abs_fn, Field, Grid, Stencils};

/// One sample of every monitored quantity. Field order is the CSV column
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub m: [f64; 4],
    pub mtilde: [f64; 3],
    pub mtilde_p2: [f64; 3],
    pub e: f64,
    pub a_cal: f64,
    pub e1: f64,
    pub cal_e1: f64,
    pub e2: f64,
    pub cal_e2: f64,
    pub s: f64,
    pub sup_null_a: f64,
    pub sup_null_b: f64,
    pub sup_dw: f64,
    pub sup_dq: f64,
    pub res_momentum: f64,
    pub res_hamiltonian: f64,
    pub curl_residual: f64,
    pub sup_da: f64,
}

impl EnergyReport {
    pub const COLUMNS: [&'static str; 26] = [
        "t",
        "m0",
        "m1",
        "m2",
        "m3",
        "Mtilde1",
        "Mtilde2",
        "Mtilde3",
        "Mtilde_p2_1",
        "Mtilde_p2_2",
        "Mtilde_p2_3",
        "E",
        "A_cal",
        "E1",
        "calE1",
        "E2",
        "calE2",
        "S",
        "sup_null_A",
        "sup_null_B",
        "sup_dW",
        "sup_dq",
        "res_momentum",
        "res_hamiltonian",
        "curl_residual",
        "sup_da",
    ];

    pub fn values(&self) -> [f64; 26] {
        let [m0, m1, m2, m3] = self.m;
        let [mt1, mt2, mt3] = self.mtilde;
        let [mp1, mp2, mp3] = self.mtilde_p2;
        [
            self.t,
            m0,
            m1,
            m2,
            m3,
            mt1,
            mt2,
            mt3,
            mp1,
            mp2,
            mp3,
            self.e,
            self.a_cal,
            self.e1,
            self.cal_e1,
            self.e2,
            self.cal_e2,
            self.s,
            self.sup_null_a,
            self.sup_null_b,
            self.sup_dw,
            self.sup_dq,
            self.res_momentum,
            self.res_hamiltonian,
            self.curl_residual,
            self.sup_da,
        ]
    }

    pub fn from_values(v: &[f64]) -> Option<Self> {
        if v.len() != Self::COLUMNS.len() {
            return None;
        }
        Some(EnergyReport {
            t: v[0],
            m: [v[1], v[2], v[3], v[4]],
            mtilde: [v[5], v[6], v[7]],
            mtilde_p2: [v[8], v[9], v[10]],
            e: v[11],
            a_cal: v[12],
            e1: v[13],
            cal_e1: v[14],
            e2: v[15],
            cal_e2: v[16],
            s: v[17],
            sup_null_a: v[18],
            sup_null_b: v[19],
            sup_dw: v[20],
            sup_dq: v[21],
            res_momentum: v[22],
            res_hamiltonian: v[23],
            curl_residual: v[24],
            sup_da: v[25],
        })
    }

    /// Looks a column up by its CSV name.
    pub fn column(&self, name: &str) -> Option<f64> {
        let i = Self::COLUMNS.iter().position(|c| *c == name)?;
        Some(self.values()[i])
    }

    pub fn csv_header() -> String {
        Self::COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// `‖R - R_b‖_{C^k} + ‖R_t - R_bt‖_{C^{k-1}}` at time `t`, with the second
/// term taken in `C^0` for `k = 0`.
pub fn m_k(model: &Model, t: f64, k: usize) -> f64 {
    let rp = &model.r_pert;
    if rp.is_zero() {
        return 0.0;
    }
    let g = &model.grid;
    let value: f64 = (0..=k)
        .map(|j| sup_abs_fn(g, |x| rp.derivative(0, j, t, x)))
        .sum();
    let rate: f64 = (0..k.max(1))
        .map(|j| sup_abs_fn(g, |x| rp.derivative(1, j, t, x)))
        .sum();
    value + rate
}

/// `‖f‖` in the Sobolev space with weight `cosh^p(2x)` and `k` derivatives.
pub fn weighted_norm(grid: &Grid, stencils: &Stencils, f: &[f64], k: usize, p: i32) -> f64 {
    if f.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let w = move |x: f64| (2.0 * x).cosh().powi(p);
    let mut total = 0.0;
    for i in 0..=k {
        let d = if i == 0 {
            Field(f.to_vec())
        } else {
            stencils.d(i, f)
        };
        let sq: Vec<f64> = d.iter().map(|v| v * v).collect();
        total += integrate(grid, &sq, Some(&w)).value;
    }
    total.sqrt()
}

/// `‖ΔW‖_k + ‖ΔW_t‖_{k-1} + ‖Δq‖_k + ‖Δq_t‖_{k-1}` with weight exponent `p`.
pub fn mtilde(model: &Model, s: &FieldState, k: usize, p: i32) -> f64 {
    let (g, st) = (&model.grid, &model.stencils);
    let wn = |f: &[f64], k: usize| weighted_norm(g, st, f, k, p);
    wn(&s.dw, k) + wn(&s.dwt, k - 1) + wn(&s.dq, k) + wn(&s.dqt, k - 1)
}

/// Values, time and space derivatives of one `(z, v)`-type pair.
pub struct PairData<'a> {
    pub f: &'a [f64],
    pub f_t: &'a [f64],
    pub f_x: &'a [f64],
    pub g: &'a [f64],
    pub g_t: &'a [f64],
    pub g_x: &'a [f64],
}

/// `½∫ f_t² + f_x² + f² G_b + ½∫ g_t² + g_x² + g² (G_b + 4 W_bx²)`.
pub fn energy_pair(model: &Model, d: &PairData) -> f64 {
    let (gb, wbx) = (model.gb(), model.wbx());
    let integrand: Vec<f64> = (0..model.len())
        .map(|i| {
            let zf = d.f_t[i].powi(2) + d.f_x[i].powi(2) + d.f[i].powi(2) * gb[i];
            let vf = d.g_t[i].powi(2)
                + d.g_x[i].powi(2)
                + d.g[i].powi(2) * (gb[i] + 4.0 * wbx[i] * wbx[i]);
            0.5 * (zf + vf)
        })
        .collect();
    integrate(&model.grid, &integrand, None).value
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyHierarchy {
    pub e: f64,
    pub a_cal: f64,
    pub e1: f64,
    pub cal_e1: f64,
    pub e2: f64,
    pub cal_e2: f64,
}

fn deriv(st: &Stencils, m: usize, f: &Field) -> Field {
    if m == 0 {
        f.clone()
    } else {
        st.d(m, f)
    }
}

/// `E^{(m,n)}` of `z` for `m + n <= 2`.
pub fn energy_alpha(model: &Model, jets: &ZvJets, m: usize, n: usize) -> f64 {
    assert!(m + n <= 2, "energy order {m}+{n} not supported");
    let st = &model.stencils;
    let f = deriv(st, n, &jets.z[m]);
    let f_t = deriv(st, n, &jets.z[m + 1]);
    let f_x = st.d(n + 1, &jets.z[m]);
    let zero = model.grid.zeros();
    energy_pair(
        model,
        &PairData {
            f: &f,
            f_t: &f_t,
            f_x: &f_x,
            g: &zero,
            g_t: &zero,
            g_x: &zero,
        },
    )
}

/// `E`, `𝒜`, `E_1`, `𝓔_1`, `E_2`, `𝓔_2` from `(z, v)` and their time
/// derivatives.
pub fn energy_hierarchy(model: &Model, jets: &ZvJets) -> EnergyHierarchy {
    let st = &model.stencils;
    let (z, v) = (&jets.z, &jets.v);
    // time level m, space order n
    let pair = |m: usize, n: usize| {
        let (zf, zt, zx) = (deriv(st, n, &z[m]), deriv(st, n, &z[m + 1]), st.d(n + 1, &z[m]));
        let (vf, vt, vx) = (deriv(st, n, &v[m]), deriv(st, n, &v[m + 1]), st.d(n + 1, &v[m]));
        energy_pair(
            model,
            &PairData {
                f: &zf,
                f_t: &zt,
                f_x: &zx,
                g: &vf,
                g_t: &vt,
                g_x: &vx,
            },
        )
    };
    let e = pair(0, 0);
    let e1 = pair(1, 0) + e;
    let e2 = e1 + pair(2, 0);
    let cal_e1 = pair(0, 1) + e;
    let cal_e2 = cal_e1 + pair(0, 2);
    let sq: Vec<f64> = (0..model.len()).map(|i| z[0][i].powi(2) + v[0][i].powi(2)).collect();
    EnergyHierarchy {
        e,
        a_cal: 0.5 * integrate(&model.grid, &sq, None).value,
        e1,
        cal_e1,
        e2,
        cal_e2,
    }
}

/// Full `(W, q)` derivatives at every grid point.
struct Chi {
    w: Vec<f64>,
    w_t: Field,
    w_x: Vec<f64>,
    q_t: Field,
    q_x: Field,
}

fn chi(model: &Model, s: &FieldState) -> Chi {
    let st = &model.stencils;
    let dw_x = st.d1(&s.dw);
    Chi {
        w: model.wb().iter().zip(s.dw.iter()).map(|(a, b)| a + b).collect(),
        w_t: s.dwt.clone(),
        w_x: model.wbx().iter().zip(dw_x.iter()).map(|(a, b)| a + b).collect(),
        q_t: s.dqt.clone(),
        q_x: st.d1(&s.dq),
    }
}

/// `∫ ½(‖∂ₜχ‖²_h + ‖∂ₓχ‖²_h) R e^{-2t} dx`.
pub fn functional_s(model: &Model, s: &FieldState) -> f64 {
    let c = chi(model, s);
    let (r0, t) = (model.bg.r0, s.t);
    let decay = (-2.0 * t).exp();
    let integrand: Vec<f64> = model
        .grid
        .x()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let e4w = (-4.0 * c.w[i]).exp();
            let h = 4.0 * (c.w_t[i].powi(2) + c.w_x[i].powi(2)) + e4w * (c.q_t[i].powi(2) + c.q_x[i].powi(2));
            let r_scaled = r0 * (2.0 * x).cosh() + model.r_pert.value(t, x) * decay;
            0.5 * h * r_scaled
        })
        .collect();
    integrate(&model.grid, &integrand, None).value
}

/// `A = ‖∂ₜχ + ∂ₓχ‖²_h` and `B = ‖∂ₜχ - ∂ₓχ‖²_h` pointwise.
pub fn null_quantities(model: &Model, s: &FieldState) -> (Field, Field) {
    let c = chi(model, s);
    let n = model.len();
    let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let e4w = (-4.0 * c.w[i]).exp();
        a[i] = 4.0 * (c.w_t[i] + c.w_x[i]).powi(2) + e4w * (c.q_t[i] + c.q_x[i]).powi(2);
        b[i] = 4.0 * (c.w_t[i] - c.w_x[i]).powi(2) + e4w * (c.q_t[i] - c.q_x[i]).powi(2);
    }
    (Field(a), Field(b))
}

/// Every monitored quantity at one snapshot.
pub fn report(model: &Model, s: &FieldState) -> Result<EnergyReport, RunError> {
    let t = s.t;
    let jets = model.zv_jets(s)?;
    let h = energy_hierarchy(model, &jets);
    let cr = constraints::residuals(model, s)?;
    let (na, nb) = null_quantities(model, s);
    let mut m = [0.0; 4];
    for (k, v) in m.iter_mut().enumerate() {
        *v = m_k(model, t, k);
    }
    let mut mt = [0.0; 3];
    let mut mp = [0.0; 3];
    for k in 1..=3 {
        mt[k - 1] = mtilde(model, s, k, 1);
        mp[k - 1] = mtilde(model, s, k, 2);
    }
    Ok(EnergyReport {
        t,
        m,
        mtilde: mt,
        mtilde_p2: mp,
        e: h.e,
        a_cal: h.a_cal,
        e1: h.e1,
        cal_e1: h.cal_e1,
        e2: h.e2,
        cal_e2: h.cal_e2,
        s: functional_s(model, s),
        sup_null_a: na.max_abs(),
        sup_null_b: nb.max_abs(),
        sup_dw: sup_abs(&s.dw),
        sup_dq: sup_abs(&s.dq),
        res_momentum: cr.res_momentum,
        res_hamiltonian: cr.res_hamiltonian,
        curl_residual: cr.curl_residual,
        sup_da: s.a.as_ref().map_or(0.0, |a| sup_abs(&a.da)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::background::{sech, BackgroundParams};
    use crate::evolve::{Evolver, Scheme};
    use crate::grid::{GridSpec, StencilOrder};
    use crate::profile::{Bump, PerturbationSpec, Target};

    fn spec(l: f64, dx: f64) -> GridSpec {
        GridSpec {
            l,
            nx: GridSpec::nx_for_dx(l, dx),
            cfl: 0.25,
            t_final: 1.0,
            output_stride: 1,
        }
    }

    fn evolver(bg: BackgroundParams, sp: &GridSpec, pert: &PerturbationSpec) -> Evolver {
        Evolver::new(bg, sp, Scheme::default(), pert).unwrap()
    }

    #[test]
    fn background_report_is_quiet() {
        let ev = evolver(BackgroundParams::default(), &spec(20.0, 0.02), &PerturbationSpec::default());
        let r = report(ev.model(), ev.state()).unwrap();
        for (name, v) in EnergyReport::COLUMNS.iter().zip(r.values()) {
            if ["S", "sup_null_A", "sup_null_B"].contains(name) {
                continue;
            }
            assert!(v.abs() <= 1e-11, "{name} = {v}");
        }
        assert!((r.s - std::f64::consts::PI).abs() < 1e-5, "{}", r.s);
        assert!((r.sup_null_a - 4.0).abs() < 1e-12 && (r.sup_null_b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn s_scales_with_parameters() {
        let bg = BackgroundParams::new(2.5, -1.7, 0.3, 0.2, 0.0).unwrap();
        let ev = evolver(bg, &spec(20.0, 0.02), &PerturbationSpec::default());
        let s = functional_s(ev.model(), ev.state());
        let exact = std::f64::consts::PI * 1.7 * 1.7 * 2.5;
        assert!((s - exact).abs() < 1e-5 * exact);
    }

    #[test]
    fn m_k_of_rate_bump() {
        let eps = 0.05;
        let pert = PerturbationSpec::new(vec![Bump::smooth(Target::Rt, eps, 0.1, 1.0)]);
        let ev = evolver(BackgroundParams::default(), &spec(6.0, 0.05), &pert);
        assert!((m_k(ev.model(), 0.0, 0) - eps).abs() < 1e-12);
        assert!((m_k(ev.model(), 0.0, 1) - eps).abs() < 1e-12);
        assert!(m_k(ev.model(), 0.0, 2) > eps);
        let none = evolver(BackgroundParams::default(), &spec(6.0, 0.05), &PerturbationSpec::default());
        assert_eq!(m_k(none.model(), 0.0, 3), 0.0);
    }

    #[test]
    fn weighted_norm_identity() {
        let g = Grid::new(3.0, 3001);
        let st = Stencils::new(&g, StencilOrder::Fourth);
        let f = g.sample(|x| sech(2.0 * x).sqrt());
        let n = weighted_norm(&g, &st, &f, 0, 1);
        assert!((n * n - 6.0).abs() < 1e-12);
        assert_eq!(weighted_norm(&g, &st, &g.zeros(), 3, 2), 0.0);
    }

    #[test]
    fn weighted_norm_converges() {
        let b = Bump::smooth(Target::W, 1.0, 0.3, 2.0);
        let val = |dx: f64| {
            let sp = spec(3.0, dx);
            assert!(sp.grid().x()[0] <= b.support().0);
            let g = sp.grid();
            let st = Stencils::new(&g, StencilOrder::Fourth);
            weighted_norm(&g, &st, &g.sample(|x| b.value(x)), 2, 1)
        };
        let (a, c) = (val(0.005), val(0.0025));
        assert!(((a - c) / c).abs() < 1e-6, "{a} {c}");
    }

    #[test]
    fn mtilde_of_pure_w_bump() {
        let pert = PerturbationSpec::new(vec![
            Bump::smooth(Target::W, 1e-3, 0.0, 1.0),
            Bump::smooth(Target::Wt, 2e-3, 0.5, 1.0),
        ]);
        let ev = evolver(BackgroundParams::default(), &spec(6.0, 0.02), &pert);
        let (m, s) = (ev.model(), ev.state());
        for k in 1..=3 {
            let expected = weighted_norm(&m.grid, &m.stencils, &s.dw, k, 1)
                + weighted_norm(&m.grid, &m.stencils, &s.dwt, k - 1, 1);
            assert_eq!(mtilde(m, s, k, 1), expected);
        }
    }

    #[test]
    fn energy_of_static_bump_matches_fine_quadrature() {
        let b = Bump::smooth(Target::W, 1e-3, 0.0, 0.5);
        let pert = PerturbationSpec::new(vec![b]);
        let ev = evolver(BackgroundParams::default(), &spec(4.0, 0.002), &pert);
        let jets = ev.model().zv_jets(ev.state()).unwrap();
        let e = energy_hierarchy(ev.model(), &jets).e;
        // z = b sqrt(cosh 2x), z_t = b sqrt(cosh 2x) at R_t/R = 2
        let n = 400_000;
        let (lo, hi) = b.support();
        let h = (hi - lo) / n as f64;
        let mut oracle = 0.0;
        for i in 0..n {
            let x = lo + (i as f64 + 0.5) * h;
            let c = (2.0 * x).cosh();
            let z = b.value(x) * c.sqrt();
            let z_x = b.derivative(x, 1) * c.sqrt() + b.value(x) * (2.0 * x).sinh() / c.sqrt();
            oracle += 0.5 * (z * z + z_x * z_x + z * z / (c * c)) * h;
        }
        assert!((e - oracle).abs() < 1e-8, "{e} {oracle}");
        assert!((e / oracle - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hierarchy_is_ordered_and_polarized_v_vanishes() {
        let pert = PerturbationSpec::new(vec![
            Bump::smooth(Target::W, 1e-3, 0.0, 1.0),
            Bump::smooth(Target::R, 1e-2, 0.2, 1.0),
        ]);
        let ev = evolver(BackgroundParams::default(), &spec(6.0, 0.02), &pert);
        let jets = ev.model().zv_jets(ev.state()).unwrap();
        assert!(jets.v.iter().all(|f| f.max_abs() == 0.0));
        let h = energy_hierarchy(ev.model(), &jets);
        assert!(h.e > 0.0 && h.e <= h.e1 && h.e1 <= h.e2 && h.cal_e1 <= h.cal_e2);
        assert!((energy_alpha(ev.model(), &jets, 0, 0) - h.e).abs() <= 1e-15 * h.e);
        let sum = energy_alpha(ev.model(), &jets, 1, 0) + h.e;
        assert!((sum - h.e1).abs() <= 1e-14 * h.e1);
    }

    #[test]
    fn csv_row_round_trips() {
        let mut r = EnergyReport {
            t: 0.1,
            ..EnergyReport::default()
        };
        r.m[2] = 1.0 / 3.0;
        r.sup_da = 2e-300;
        let parsed: Vec<f64> = r.csv_row().split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(EnergyReport::from_values(&parsed), Some(r));
        assert_eq!(r.column("m2"), Some(1.0 / 3.0));
        assert_eq!(EnergyReport::csv_header().split(',').count(), 26);
    }
}
