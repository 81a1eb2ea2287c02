//! Benchmark objectives with analytic gradients and Hessian-vector products.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;

/// Log-density of a Gaussian pushed through the shear
/// `(t1, t2 + sin(a t1), ..., tD + sin(a t1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Squiggle {
    pub a: f64,
    pub sigma_diag: Vec<f64>,
}

impl Squiggle {
    /// `a = 1`, `Sigma = diag(30, 0.5, ..., 0.5)`.
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!("squiggle needs D >= 2, got {dim}")));
        }
        let mut sigma_diag = vec![0.5; dim];
        sigma_diag[0] = 30.0;
        Self::with_params(1.0, sigma_diag)
    }

    pub fn with_params(a: f64, sigma_diag: Vec<f64>) -> Result<Self> {
        if sigma_diag.len() < 2 || sigma_diag.iter().any(|s| !(*s > 0.0) || !s.is_finite()) || !a.is_finite() {
            return Err(Error::InvalidConfig(
                "squiggle needs D >= 2, finite a and positive finite variances".into(),
            ));
        }
        Ok(Squiggle { a, sigma_diag })
    }

    /// `-D/2 log(2 pi) - 1/2 log det Sigma`, attained at the origin.
    pub fn max_value(&self) -> f64 {
        let d = self.sigma_diag.len() as f64;
        -0.5 * d * (2.0 * PI).ln() - 0.5 * self.sigma_diag.iter().map(|s| s.ln()).sum::<f64>()
    }

    fn sheared(&self, theta: &[f64]) -> Vec<f64> {
        let s = (self.a * theta[0]).sin();
        let mut y = theta.to_vec();
        y[1..].iter_mut().for_each(|yi| *yi += s);
        y
    }

    /// `Sigma^{-1} y`
    fn whitened(&self, theta: &[f64]) -> Vec<f64> {
        self.sheared(theta)
            .iter()
            .zip(&self.sigma_diag)
            .map(|(y, s)| y / s)
            .collect()
    }
}

impl Objective for Squiggle {
    fn dim(&self) -> usize {
        self.sigma_diag.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let quad: f64 = self
            .sheared(theta)
            .iter()
            .zip(&self.sigma_diag)
            .map(|(y, s)| y * y / s)
            .sum();
        self.max_value() - 0.5 * quad
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let u = self.whitened(theta);
        let tail: f64 = u[1..].iter().sum();
        let mut g: Vec<f64> = u.iter().map(|x| -x).collect();
        g[0] -= self.a * (self.a * theta[0]).cos() * tail;
        g
    }

    fn hvp(&self, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let (sin, cos) = (self.a * theta[0]).sin_cos();
        let ac = self.a * cos;
        // J v, then Sigma^{-1}, then -J^T.
        let mut w: Vec<f64> = v.to_vec();
        w[1..].iter_mut().for_each(|x| *x += ac * v[0]);
        w.iter_mut().zip(&self.sigma_diag).for_each(|(x, s)| *x /= s);
        let tail_w: f64 = w[1..].iter().sum();
        let mut out: Vec<f64> = w.iter().map(|x| -x).collect();
        out[0] -= ac * tail_w;
        let tail_u: f64 = self.whitened(theta)[1..].iter().sum();
        out[0] += self.a * self.a * sin * tail_u * v[0];
        Some(out)
    }
}

/// `sum_{i=2}^D -b (t_i - t_{i-1}^2)^2 - (a - t_{i-1})^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rosenbrock {
    pub dim: usize,
    pub a: f64,
    pub b: f64,
}

impl Rosenbrock {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_params(dim, 1.0, 100.0)
    }

    pub fn with_params(dim: usize, a: f64, b: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!("Rosenbrock needs D >= 2, got {dim}")));
        }
        Ok(Rosenbrock { dim, a, b })
    }
}

impl Objective for Rosenbrock {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &[f64]) -> f64 {
        theta
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0] * w[0];
                -self.b * d * d - (self.a - w[0]) * (self.a - w[0])
            })
            .sum()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for j in 0..self.dim - 1 {
            let d = theta[j + 1] - theta[j] * theta[j];
            g[j + 1] -= 2.0 * self.b * d;
            g[j] += 4.0 * self.b * theta[j] * d + 2.0 * (self.a - theta[j]);
        }
        g
    }

    fn hvp(&self, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let b = self.b;
        let mut out = vec![0.0; self.dim];
        for j in 0..self.dim - 1 {
            let i = j + 1;
            let off = 4.0 * b * theta[j];
            let jj = 4.0 * b * (theta[i] - 3.0 * theta[j] * theta[j]) - 2.0;
            out[i] += -2.0 * b * v[i] + off * v[j];
            out[j] += off * v[i] + jj * v[j];
        }
        Some(out)
    }
}

/// `-1/2 (t - c)^T diag(A) (t - c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub a_diag: Vec<f64>,
    pub center: Vec<f64>,
}

impl Quadratic {
    /// `A = diag(1, 2, ..., D)`, centred at the origin.
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_params((1..=dim).map(|i| i as f64).collect(), vec![0.0; dim])
    }

    pub fn with_params(a_diag: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        if a_diag.is_empty() || a_diag.len() != center.len() {
            return Err(Error::InvalidConfig("quadratic needs matching non-empty A and c".into()));
        }
        if a_diag.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidConfig("quadratic curvatures must be positive".into()));
        }
        Ok(Quadratic { a_diag, center })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.a_diag.len()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        -0.5 * theta
            .iter()
            .zip(&self.center)
            .zip(&self.a_diag)
            .map(|((t, c), a)| a * (t - c) * (t - c))
            .sum::<f64>()
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.center)
            .zip(&self.a_diag)
            .map(|((t, c), a)| -a * (t - c))
            .collect()
    }

    fn hvp(&self, _theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(v.iter().zip(&self.a_diag).map(|(x, a)| -a * x).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Squiggle,
    Rosenbrock,
    Quadratic,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 3] = [ProblemKind::Squiggle, ProblemKind::Rosenbrock, ProblemKind::Quadratic];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Squiggle => "squiggle",
            ProblemKind::Rosenbrock => "rosenbrock",
            ProblemKind::Quadratic => "quadratic",
        }
    }

    /// Warp flattening used by the reference experiments: `sigma = 1` for
    /// the squiggle, `sigma = 300` for Rosenbrock.
    pub fn default_sigma_sq(self) -> f64 {
        match self {
            ProblemKind::Squiggle | ProblemKind::Quadratic => 1.0,
            ProblemKind::Rosenbrock => 9e4,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProblemKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown problem '{s}'")))
    }
}

/// Alternating start `(-m, m, -m, ...)`: `m = 10` for the squiggle and 5 for
/// Rosenbrock. The quadratic starts at all ones.
pub fn initial_point(kind: ProblemKind, dim: usize) -> Vec<f64> {
    let alternating = |m: f64| (0..dim).map(|i| if i % 2 == 0 { -m } else { m }).collect();
    match kind {
        ProblemKind::Squiggle => alternating(10.0),
        ProblemKind::Rosenbrock => alternating(5.0),
        ProblemKind::Quadratic => vec![1.0; dim],
    }
}

/// Where a run ended up relative to the known stationary points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basin {
    Global,
    Local,
    Other,
}

/// Objective value near which Rosenbrock runs are classed as stuck at the
/// local maximum close to `(-1, 1, ..., 1)`.
pub const ROSENBROCK_LOCAL_VALUE: f64 = -3.99;

/// Any of the shipped benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Squiggle(Squiggle),
    Rosenbrock(Rosenbrock),
    Quadratic(Quadratic),
}

impl Problem {
    /// The default instance of `kind` in dimension `dim`.
    pub fn new(kind: ProblemKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        Ok(match kind {
            ProblemKind::Squiggle => Problem::Squiggle(Squiggle::new(dim)?),
            ProblemKind::Rosenbrock => Problem::Rosenbrock(Rosenbrock::new(dim)?),
            ProblemKind::Quadratic => Problem::Quadratic(Quadratic::new(dim)?),
        })
    }

    pub fn kind(&self) -> ProblemKind {
        match self {
            Problem::Squiggle(_) => ProblemKind::Squiggle,
            Problem::Rosenbrock(_) => ProblemKind::Rosenbrock,
            Problem::Quadratic(_) => ProblemKind::Quadratic,
        }
    }

    fn inner(&self) -> &dyn Objective {
        match self {
            Problem::Squiggle(p) => p,
            Problem::Rosenbrock(p) => p,
            Problem::Quadratic(p) => p,
        }
    }

    pub fn initial_point(&self) -> Vec<f64> {
        initial_point(self.kind(), self.dim())
    }

    pub fn maximizer(&self) -> Vec<f64> {
        match self {
            Problem::Squiggle(p) => vec![0.0; p.dim()],
            Problem::Rosenbrock(p) => vec![p.a; p.dim],
            Problem::Quadratic(p) => p.center.clone(),
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            Problem::Squiggle(p) => p.max_value(),
            Problem::Rosenbrock(_) | Problem::Quadratic(_) => 0.0,
        }
    }

    /// Global if within `1e-3` of the maximum value; for Rosenbrock, local
    /// if within `0.05` of the secondary stationary value.
    pub fn classify(&self, f: f64) -> Basin {
        if (f - self.max_value()).abs() <= 1e-3 {
            Basin::Global
        } else if matches!(self, Problem::Rosenbrock(_)) && (f - ROSENBROCK_LOCAL_VALUE).abs() <= 0.05 {
            Basin::Local
        } else {
            Basin::Other
        }
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        self.inner().value(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.inner().gradient(theta)
    }
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        self.inner().hvp(theta, v)
    }
}
