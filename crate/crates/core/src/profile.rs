//! Compactly supported initial-data profiles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Field, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("bump width must be positive, got {0}")]
    BadWidth(f64),
    #[error("bump parameter is not finite")]
    NonFinite,
    #[error("unknown bump target `{0}`")]
    UnknownTarget(String),
    #[error("unknown bump shape `{0}`")]
    UnknownShape(String),
}

/// Which piece of initial data a bump perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    R,
    Rt,
    W,
    Wt,
    Q,
    Qt,
}

impl Target {
    pub const ALL: [Target; 6] = [
        Target::R,
        Target::Rt,
        Target::W,
        Target::Wt,
        Target::Q,
        Target::Qt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::R => "R",
            Target::Rt => "Rt",
            Target::W => "W",
            Target::Wt => "Wt",
            Target::Q => "q",
            Target::Qt => "qt",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = ProfileError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Target::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ProfileError::UnknownTarget(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BumpShape {
    /// `exp(-1/(1-s²))`, scaled so the peak equals the amplitude. C^∞.
    Smooth,
    /// `cos⁸(πs/2)`. C^7 at the edges.
    CosineTaper,
}

impl BumpShape {
    pub fn name(self) -> &'static str {
        match self {
            BumpShape::Smooth => "smooth",
            BumpShape::CosineTaper => "cosine",
        }
    }
}

impl std::str::FromStr for BumpShape {
    type Err = ProfileError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "smooth" => Ok(BumpShape::Smooth),
            "cosine" | "cosine-taper" => Ok(BumpShape::CosineTaper),
            _ => Err(ProfileError::UnknownShape(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub target: Target,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    pub shape: BumpShape,
}

const BINOM8: [f64; 5] = [1.0, 8.0, 28.0, 56.0, 70.0];

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Highest derivative order the closed forms support.
pub const MAX_DERIVATIVE: usize = 7;

/// `n`-th derivative of `exp(-1/(1-s²))` on `|s| < 1`.
fn smooth_unit(s: f64, n: usize) -> f64 {
    assert!(n <= MAX_DERIVATIVE, "derivative order {n} not supported");
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let g = -1.0 / (1.0 - s * s);
    if g < -700.0 {
        return 0.0;
    }
    // log-derivative g^{(j)} = -½ j! [(1-s)^{-j-1} + (-1)^j (1+s)^{-j-1}]
    let (a, b) = (1.0 / (1.0 - s), 1.0 / (1.0 + s));
    let mut gd = [0.0; MAX_DERIVATIVE + 2];
    let (mut pa, mut pb, mut fact) = (a, b, 1.0);
    for (j, gj) in gd.iter_mut().enumerate().take(n + 1) {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *gj = -0.5 * fact * (pa + sign * pb);
        pa *= a;
        pb *= b;
        fact *= (j + 1) as f64;
    }
    let mut f = [0.0; MAX_DERIVATIVE + 1];
    f[0] = g.exp();
    for k in 0..n {
        f[k + 1] = (0..=k).map(|j| binomial(k, j) * gd[j + 1] * f[k - j]).sum();
    }
    f[n]
}

/// `n`-th derivative of `cos⁸(πs/2)` on `|s| < 1`.
fn cosine_unit(s: f64, n: usize) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let phase = n as f64 * std::f64::consts::FRAC_PI_2;
    let mut acc = if n == 0 { BINOM8[4] } else { 0.0 };
    for k in 1..=4 {
        let w = k as f64 * std::f64::consts::PI;
        acc += 2.0 * BINOM8[4 - k] * w.powi(n as i32) * (w * s + phase).cos();
    }
    acc / 256.0
}

impl Bump {
    pub fn new(
        target: Target,
        amplitude: f64,
        center: f64,
        width: f64,
        shape: BumpShape,
    ) -> Result<Self, ProfileError> {
        if !(amplitude.is_finite() && center.is_finite() && width.is_finite()) {
            return Err(ProfileError::NonFinite);
        }
        if width <= 0.0 {
            return Err(ProfileError::BadWidth(width));
        }
        Ok(Bump {
            target,
            amplitude,
            center,
            width,
            shape,
        })
    }

    pub fn smooth(target: Target, amplitude: f64, center: f64, width: f64) -> Self {
        Bump {
            target,
            amplitude,
            center,
            width,
            shape: BumpShape::Smooth,
        }
    }

    /// `n`-th spatial derivative at `x`.
    pub fn derivative(&self, x: f64, n: usize) -> f64 {
        let s = (x - self.center) / self.width;
        let unit = match self.shape {
            BumpShape::Smooth => std::f64::consts::E * smooth_unit(s, n),
            BumpShape::CosineTaper => cosine_unit(s, n),
        };
        self.amplitude * unit / self.width.powi(n as i32)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(x, 0)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.width, self.center + self.width)
    }

    /// Integral over the real line.
    pub fn integral(&self) -> f64 {
        let unit = match self.shape {
            // ∫ e·exp(-1/(1-s²)) ds over (-1, 1)
            BumpShape::Smooth => std::f64::consts::E * 0.443_993_816_168_079_3,
            BumpShape::CosineTaper => 2.0 * BINOM8[4] / 256.0,
        };
        self.amplitude * self.width * unit
    }
}

/// A list of bumps; bumps on the same target add.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub bumps: Vec<Bump>,
}

impl PerturbationSpec {
    pub fn new(bumps: Vec<Bump>) -> Self {
        PerturbationSpec { bumps }
    }

    pub fn is_empty(&self) -> bool {
        self.bumps.is_empty()
    }

    pub fn of(&self, target: Target) -> Vec<Bump> {
        self.bumps
            .iter()
            .filter(|b| b.target == target)
            .copied()
            .collect()
    }

    pub fn has(&self, target: Target) -> bool {
        self.bumps.iter().any(|b| b.target == target)
    }

    /// `n`-th derivative of the summed profile for `target`.
    pub fn derivative(&self, target: Target, x: f64, n: usize) -> f64 {
        self.bumps
            .iter()
            .filter(|b| b.target == target)
            .map(|b| b.derivative(x, n))
            .sum()
    }

    pub fn sample(&self, target: Target, grid: &Grid) -> Field {
        grid.sample(|x| self.derivative(target, x, 0))
    }

    /// Largest `|center| + width` over all bumps, 0 for the empty spec.
    pub fn support_radius(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| b.center.abs() + b.width)
            .fold(0.0, f64::max)
    }

    /// Union hull of the supports of bumps on `target`.
    pub fn hull(&self, target: Target) -> Option<(f64, f64)> {
        self.bumps
            .iter()
            .filter(|b| b.target == target)
            .map(Bump::support)
            .reduce(|(a, b), (c, d)| (a.min(c), b.max(d)))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PerturbationSpec {
            bumps: self
                .bumps
                .iter()
                .map(|b| Bump {
                    amplitude: b.amplitude * factor,
                    ..*b
                })
                .collect(),
        }
    }
}
