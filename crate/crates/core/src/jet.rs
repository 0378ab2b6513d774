//! Truncated Taylor series in time.
//!
//! A `Jet<N>` carries the first `N` Taylor coefficients `f(t + s) = Σ c_k s^k`.
//! Evaluating the pointwise field equations on jets instead of plain numbers
//! yields time derivatives of the solution from a single snapshot, which is how
//! `z_tt`, `z_ttt` and the time derivative of the constraint gradient are
//! obtained without differencing across time steps.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Minimal real-number interface shared by `f64` and [`Jet`].
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;
    /// Constant term.
    fn value(self) -> f64;

    fn sq(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize>(pub [f64; N]);

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = v;
        Jet(c)
    }

    /// Builds a jet from time derivatives `[f, f_t, f_tt, ...]`.
    pub fn from_derivatives(d: [f64; N]) -> Self {
        let mut c = d;
        let mut fact = 1.0;
        for (k, ck) in c.iter_mut().enumerate().skip(1) {
            fact *= k as f64;
            *ck /= fact;
        }
        Jet(c)
    }

    /// `k`-th time derivative.
    pub fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.0[k] * fact
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        for k in 0..N {
            self.0[k] += rhs.0[k];
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        for k in 0..N {
            self.0[k] -= rhs.0[k];
        }
        self
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        for c in self.0.iter_mut() {
            *c = -*c;
        }
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut out = [0.0; N];
        for k in 0..N {
            let mut acc = 0.0;
            for j in 0..=k {
                acc += self.0[j] * rhs.0[k - j];
            }
            out[k] = acc;
        }
        Jet(out)
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let mut out = [0.0; N];
        let b0 = rhs.0[0];
        for k in 0..N {
            let mut acc = self.0[k];
            for j in 1..=k {
                acc -= rhs.0[j] * out[k - j];
            }
            out[k] = acc / b0;
        }
        Jet(out)
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.0[0] += rhs;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, rhs: f64) -> Self {
        for c in self.0.iter_mut() {
            *c *= rhs;
        }
        self
    }
}

impl<const N: usize> Real for Jet<N> {
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }

    fn exp(self) -> Self {
        let mut out = [0.0; N];
        out[0] = self.0[0].exp();
        for k in 1..N {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * self.0[j] * out[k - j];
            }
            out[k] = acc / k as f64;
        }
        Jet(out)
    }

    fn sqrt(self) -> Self {
        let mut out = [0.0; N];
        out[0] = self.0[0].sqrt();
        for k in 1..N {
            let mut acc = self.0[k];
            for j in 1..k {
                acc -= out[j] * out[k - j];
            }
            out[k] = acc / (2.0 * out[0]);
        }
        Jet(out)
    }

    fn value(self) -> f64 {
        self.0[0]
    }
}
