//! Uniform 1D grid, finite-difference operators and trapezoid quadrature.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 16 points, got {0}")]
    TooFewPoints(usize),
    #[error("half-width must be positive, got {0}")]
    BadHalfWidth(f64),
    #[error("cfl factor must lie in (0, 1], got {0}")]
    BadCfl(f64),
    #[error("final time must be positive, got {0}")]
    BadFinalTime(f64),
    #[error("output stride must be at least 1")]
    BadStride,
    #[error("field length {found} does not match grid size {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

/// Spatial domain `[-l, l]` with `nx` points and the time-stepping controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub l: f64,
    pub nx: usize,
    pub cfl: f64,
    pub t_final: f64,
    pub output_stride: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx < 16 {
            return Err(GridError::TooFewPoints(self.nx));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(GridError::BadHalfWidth(self.l));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(GridError::BadCfl(self.cfl));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(GridError::BadFinalTime(self.t_final));
        }
        if self.output_stride == 0 {
            return Err(GridError::BadStride);
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.l / (self.nx - 1) as f64
    }

    /// Number of steps and the step size. The step is shrunk from `cfl * dx`
    /// so that an integer number of steps lands exactly on `t_final`.
    pub fn time_steps(&self) -> (usize, f64) {
        let nominal = self.cfl * self.dx();
        let n = (self.t_final / nominal - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_final / n as f64)
    }

    /// Point count giving spacing `dx` on the same domain.
    pub fn nx_for_dx(l: f64, dx: f64) -> usize {
        (2.0 * l / dx).round() as usize + 1
    }

    pub fn with_dx(&self, dx: f64) -> GridSpec {
        GridSpec {
            nx: Self::nx_for_dx(self.l, dx),
            ..self.clone()
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.l, self.nx)
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    x: Vec<f64>,
    dx: f64,
}

impl Grid {
    pub fn new(l: f64, nx: usize) -> Self {
        let dx = 2.0 * l / (nx - 1) as f64;
        let x = (0..nx).map(|i| -l + i as f64 * dx).collect();
        Grid { x, dx }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn half_width(&self) -> f64 {
        -self.x[0]
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.x.iter().map(|&x| f(x)).collect())
    }

    pub fn zeros(&self) -> Field {
        Field(vec![0.0; self.len()])
    }

    pub fn check(&self, f: &[f64]) -> Result<(), GridError> {
        if f.len() != self.len() {
            return Err(GridError::LengthMismatch {
                expected: self.len(),
                found: f.len(),
            });
        }
        Ok(())
    }
}

/// Real values aligned to a [`Grid`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn axpy(&self, a: f64, other: &[f64]) -> Field {
        Field(self.0.iter().zip(other).map(|(x, y)| x + a * y).collect())
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StencilOrder {
    Second,
    Fourth,
}

impl StencilOrder {
    pub fn accuracy(self) -> usize {
        match self {
            StencilOrder::Second => 2,
            StencilOrder::Fourth => 4,
        }
    }

    pub fn from_accuracy(p: usize) -> Option<Self> {
        match p {
            2 => Some(StencilOrder::Second),
            4 => Some(StencilOrder::Fourth),
            _ => None,
        }
    }
}

/// Finite-difference weights for derivative order `m` at `z`, from nodes `x`
/// (Fornberg's recursion).
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// One derivative operator: centered weights in the interior, shifted
/// windows of the same accuracy at the ends.
#[derive(Debug, Clone)]
pub struct DiffOp {
    radius: usize,
    interior: Vec<f64>,
    // rows 0..radius, window starting at node 0
    left: Vec<Vec<f64>>,
    // (k, weights) for row n-1-k, window ending at the last node
    right: Vec<(usize, Vec<f64>)>,
}

impl DiffOp {
    pub fn new(m: usize, order: StencilOrder, dx: f64) -> Self {
        let p = order.accuracy();
        let radius = m.div_ceil(2) - 1 + p / 2;
        let scale = dx.powi(m as i32);
        let central: Vec<f64> = (0..=2 * radius).map(|k| k as f64 - radius as f64).collect();
        let interior = fornberg_weights(0.0, &central, m)
            .into_iter()
            .map(|w| w / scale)
            .collect();
        let width = (2 * radius + 1).max(m + p);
        let nodes: Vec<f64> = (0..width).map(|k| k as f64).collect();
        let left = (0..radius)
            .map(|row| {
                let w = fornberg_weights(row as f64, &nodes, m);
                w.into_iter().map(|v| v / scale).collect()
            })
            .collect();
        let right = (0..radius)
            .map(|k| {
                let z = (width - 1 - k) as f64;
                let w = fornberg_weights(z, &nodes, m);
                (k, w.into_iter().map(|v| v / scale).collect())
            })
            .collect();
        DiffOp {
            radius,
            interior,
            left,
            right,
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn apply(&self, f: &[f64]) -> Field {
        let mut out = vec![0.0; f.len()];
        self.apply_into(f, &mut out);
        Field(out)
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let r = self.radius;
        for i in r..n - r {
            let window = &f[i - r..=i + r];
            out[i] = window.iter().zip(&self.interior).map(|(a, b)| a * b).sum();
        }
        for (row, w) in self.left.iter().enumerate() {
            out[row] = f[..w.len()].iter().zip(w).map(|(a, b)| a * b).sum();
        }
        for (k, w) in &self.right {
            let start = n - w.len();
            out[n - 1 - k] = f[start..].iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }

    /// Value at a single interior row.
    pub fn at(&self, f: &[f64], i: usize) -> f64 {
        let r = self.radius;
        f[i - r..=i + r]
            .iter()
            .zip(&self.interior)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// First through fourth derivative operators for one grid and order.
#[derive(Debug, Clone)]
pub struct Stencils {
    order: StencilOrder,
    ops: [DiffOp; 4],
}

impl Stencils {
    pub fn new(grid: &Grid, order: StencilOrder) -> Self {
        let dx = grid.dx();
        Stencils {
            order,
            ops: [
                DiffOp::new(1, order, dx),
                DiffOp::new(2, order, dx),
                DiffOp::new(3, order, dx),
                DiffOp::new(4, order, dx),
            ],
        }
    }

    pub fn order(&self) -> StencilOrder {
        self.order
    }

    /// `m`-th derivative, `1 <= m <= 4`.
    pub fn d(&self, m: usize, f: &[f64]) -> Field {
        self.ops[m - 1].apply(f)
    }

    pub fn d1(&self, f: &[f64]) -> Field {
        self.d(1, f)
    }

    pub fn d2(&self, f: &[f64]) -> Field {
        self.d(2, f)
    }

    pub fn op(&self, m: usize) -> &DiffOp {
        &self.ops[m - 1]
    }

    /// Points at each end that the evolution holds fixed: the reach of the
    /// centered second-derivative stencil.
    pub fn boundary_layer(&self) -> usize {
        self.ops[1].radius()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Set when the integrand does not vanish at the domain ends.
    pub boundary_warning: bool,
}

/// Trapezoid rule for `∫ f(x) w(x) dx` over the grid.
pub fn integrate(grid: &Grid, f: &[f64], weight: Option<&dyn Fn(f64) -> f64>) -> Quadrature {
    let n = f.len();
    let mut sum = 0.0;
    let mut interior_max: f64 = 0.0;
    let mut ends = [0.0; 2];
    for (i, (&fi, &x)) in f.iter().zip(grid.x()).enumerate() {
        let v = match weight {
            Some(w) => {
                if fi == 0.0 {
                    0.0
                } else {
                    fi * w(x)
                }
            }
            None => fi,
        };
        if i == 0 {
            ends[0] = v;
            sum += 0.5 * v;
        } else if i == n - 1 {
            ends[1] = v;
            sum += 0.5 * v;
        } else {
            interior_max = interior_max.max(v.abs());
            sum += v;
        }
    }
    let edge = ends[0].abs().max(ends[1].abs());
    Quadrature {
        value: sum * grid.dx(),
        boundary_warning: weight.is_some() && edge > 1e-12 * interior_max,
    }
}

/// Cumulative integral `∫_{x_0}^{x_i} f` with the end-corrected trapezoid
/// rule; `df` is the derivative of `f` on the grid.
pub fn cumulative_integral(grid: &Grid, f: &[f64], df: &[f64]) -> Field {
    let h = grid.dx();
    let mut out = vec![0.0; f.len()];
    for i in 1..f.len() {
        out[i] = out[i - 1] + 0.5 * h * (f[i - 1] + f[i]) - h * h / 12.0 * (df[i] - df[i - 1]);
    }
    Field(out)
}

fn golden_max(lo: f64, hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..80 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - ratio * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + ratio * (b - a);
            gd = g(d);
        }
        if (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            break;
        }
    }
    gc.max(gd)
}

fn argmax_abs(f: &[f64]) -> usize {
    let mut best = 0;
    let mut m = -1.0;
    for (i, v) in f.iter().enumerate() {
        if v.abs() > m {
            m = v.abs();
            best = i;
        }
    }
    best
}

/// `max |f|` over the domain, refined between grid points by maximizing the
/// quartic interpolant through the five samples around the discrete peak.
pub fn sup_abs(f: &[f64]) -> f64 {
    let n = f.len();
    if n == 0 {
        return 0.0;
    }
    let i = argmax_abs(f);
    let raw = f[i].abs();
    if raw == 0.0 || i < 2 || i + 2 >= n {
        return raw;
    }
    let y = [f[i - 2], f[i - 1], f[i], f[i + 1], f[i + 2]];
    let lagrange = |s: f64| -> f64 {
        let nodes = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let mut acc = 0.0;
        for (j, &yj) in y.iter().enumerate() {
            let mut l = 1.0;
            for (k, &xk) in nodes.iter().enumerate() {
                if k != j {
                    l *= (s - xk) / (nodes[j] - xk);
                }
            }
            acc += yj * l;
        }
        acc.abs()
    };
    raw.max(golden_max(-1.0, 1.0, lagrange))
}

/// `max |f|` for a function known everywhere: grid scan, then golden-section
/// refinement in the two cells around the discrete peak.
pub fn sup_abs_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> f64 {
    let vals: Vec<f64> = grid.x().iter().map(|&x| f(x)).collect();
    let i = argmax_abs(&vals);
    let raw = vals[i].abs();
    if raw == 0.0 {
        return 0.0;
    }
    let x = grid.x();
    let lo = x[i.saturating_sub(1)];
    let hi = x[(i + 1).min(x.len() - 1)];
    raw.max(golden_max(lo, hi, |s| f(s).abs()))
}
