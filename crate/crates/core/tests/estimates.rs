use cuspwave::background::{apply_isometry_with_velocity, BackgroundParams, Isometry};
use cuspwave::diagnostics::{coefficient_bound, run_all, RunSetup};
use cuspwave::energies::{self, EnergyReport};
use cuspwave::evolve::{AInit, BoundaryMode, Evolver, FieldState, Model, RPerturbation, Scheme};
use cuspwave::grid::{Field, GridSpec, StencilOrder};
use cuspwave::profile::{Bump, PerturbationSpec, Target};

fn spec(l: f64, dx: f64, t_final: f64, stride: usize) -> GridSpec {
    GridSpec {
        l,
        nx: GridSpec::nx_for_dx(l, dx),
        cfl: 0.25,
        t_final,
        output_stride: stride,
    }
}

fn amplitude_sweep() -> Vec<RunSetup> {
    [1e-4, 1e-3, 1e-2]
        .iter()
        .map(|&a| RunSetup {
            background: BackgroundParams::default(),
            grid: spec(12.0, 0.04, 6.0, 10),
            scheme: Scheme::default(),
            perturbation: PerturbationSpec::new(vec![
                Bump::smooth(Target::W, a, 0.0, 1.5),
                Bump::smooth(Target::Q, a, 0.5, 1.5),
                Bump::smooth(Target::Qt, -a, -0.5, 1.0),
                Bump::smooth(Target::Rt, 1e-3, 0.2, 1.5),
            ]),
        })
        .collect()
}

fn sweep_reports() -> Vec<Vec<EnergyReport>> {
    run_all(&amplitude_sweep())
        .into_iter()
        .map(|r| r.unwrap().reports)
        .collect()
}

#[test]
fn coefficient_deviation_has_one_constant_over_a_sweep() {
    let mut worst: f64 = 0.0;
    for amp in [1e-4, 1e-3, 1e-2, 1e-1] {
        let pert = PerturbationSpec::new(vec![
            Bump::smooth(Target::R, amp, -0.5, 1.0),
            Bump::smooth(Target::Rt, -amp, 0.5, 1.5),
        ]);
        let model = Model::new(
            BackgroundParams::default(),
            spec(14.0, 0.05, 10.0, 1).grid(),
            Scheme::default(),
            RPerturbation::from_spec(&pert),
        )
        .unwrap();
        let m1 = energies::m_k(&model, 0.0, 1);
        // past t = 6 the weight e^{2t} cosh 2x multiplies round-off in G
        for i in 0..=12 {
            worst = worst.max(coefficient_bound(&model, 0.5 * i as f64, m1).unwrap());
        }
    }
    println!("coefficient constant {worst:.4}");
    assert!(worst.is_finite() && worst > 0.0 && worst <= 1.0);
}

/// Smallest `C` with `y <= C k e^{C m}` by bisection; the right side grows
/// with `C`.
fn smallest_c(y: f64, k: f64, m: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi * k * (hi * m).exp() < y {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid * k * (mid * m).exp() < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[test]
fn sup_estimates_hold_with_sweep_constants() {
    let runs = sweep_reports();
    let (mut c0, mut rate): (f64, f64) = (0.0, f64::NEG_INFINITY);
    for reports in &runs {
        let r0 = &reports[0];
        for r in reports {
            c0 = c0.max(smallest_c(r.sup_dw, r0.s.sqrt(), r0.m[1] + 2.0));
        }
        let null = |r: &EnergyReport| r.sup_null_a.max(r.sup_null_b).sqrt();
        for r in reports.iter().filter(|r| r.t >= 1.0) {
            rate = rate.max((null(r) / null(r0)).ln() / r.t);
        }
    }
    println!("C0 constant {c0:.3e}, null growth rate {rate:.3e}");
    assert!(c0 > 0.0 && c0 <= 1.0);
    assert!(rate.is_finite() && rate <= 0.5);
}

fn image_state(iso: &Isometry, bg: &BackgroundParams, model: &Model, s: &FieldState) -> FieldState {
    let w: Vec<f64> = model.wb().iter().zip(s.dw.iter()).map(|(a, b)| a + b).collect();
    let q: Vec<f64> = s.dq.iter().map(|v| bg.q0 + v).collect();
    let (w2, q2, wt2, qt2) = apply_isometry_with_velocity(iso, &w, &q, &s.dwt, &s.dqt);
    FieldState {
        t: s.t,
        dw: Field(w2.iter().zip(model.wb()).map(|(a, b)| a - b).collect()),
        dwt: Field(wt2),
        dq: Field(q2.iter().map(|v| v - bg.q0).collect()),
        dqt: Field(qt2),
        a: None,
    }
}

/// `max |iso(evolve(data)) - evolve(iso(data))|` over `(W, q)` at `t_final`.
fn covariance_defect(dx: f64) -> f64 {
    let bg = BackgroundParams::default();
    let iso = Isometry::new(1.0, 0.4, -0.2, 0.92).unwrap();
    let sp = spec(6.0, dx, 1.0, 1);
    let scheme = Scheme {
        order: StencilOrder::Second,
        boundary: BoundaryMode::Frozen,
        ..Scheme::default()
    };
    let pert = PerturbationSpec::new(vec![
        Bump::smooth(Target::W, 1e-2, 0.0, 1.5),
        Bump::smooth(Target::Qt, 1e-2, 0.3, 1.0),
    ]);
    let direct = Evolver::new(bg, &sp, scheme, &pert).unwrap();
    let model = direct.model().clone();
    let start = image_state(&iso, &bg, &model, direct.state());
    let mut image = Evolver::with_state(bg, &sp, scheme, RPerturbation::default(), start).unwrap();
    let mut direct = direct;
    let (steps, dt) = sp.time_steps();
    for _ in 0..steps {
        direct.step(dt).unwrap();
        image.step(dt).unwrap();
    }
    let mapped = image_state(&iso, &bg, &model, direct.state());
    let s = image.state();
    let dw = mapped.dw.iter().zip(s.dw.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dq = mapped.dq.iter().zip(s.dq.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    dw.max(dq)
}

#[test]
fn evolution_commutes_with_isometries_to_scheme_order() {
    let (coarse, fine) = (covariance_defect(0.04), covariance_defect(0.02));
    println!("covariance defect {coarse:.3e} -> {fine:.3e}");
    assert!(fine > 0.0 && coarse / fine > 3.0);
}

#[test]
fn constraint_residuals_grow_at_most_linearly() {
    let setup = RunSetup {
        background: BackgroundParams::default(),
        grid: spec(10.0, 0.02, 6.0, 50),
        scheme: Scheme {
            order: StencilOrder::Second,
            a_init: AInit::Constraint,
            ..Scheme::default()
        },
        perturbation: PerturbationSpec::new(vec![
            Bump::smooth(Target::W, 1e-3, 0.0, 2.0),
            Bump::smooth(Target::Q, 1e-3, 0.3, 2.0),
            Bump::smooth(Target::Rt, 1e-3, -0.2, 2.0),
        ]),
    };
    let reports = setup.run().unwrap().reports;
    let res = |r: &EnergyReport| r.res_momentum.max(r.res_hamiltonian);
    let r0 = res(&reports[0]);
    assert!(r0 > 0.0);
    for r in &reports {
        assert!(res(r) <= r0 * (1.0 + r.t), "t {}: {} vs {}", r.t, res(r), r0);
    }
}
