//! The objective contract and finite-difference fallbacks for higher
//! derivative contractions.
//!
//! Objectives are *maximized*. Every geometric quantity downstream is built
//! from three primitives: the value, the gradient and (optionally) the
//! Hessian-vector product. The Hessian itself is never formed.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{check_finite, Error, Result};
use crate::linalg::{add_scaled, norm};

/// A smooth scalar objective on an open subset of `R^D`.
///
/// Implementations must be pure: repeated calls with equal arguments return
/// equal results, and evaluation from several threads at once is allowed.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> f64;

    fn gradient(&self, theta: &[f64]) -> Vec<f64>;

    /// Hessian-vector product `H(theta) v`, or `None` when the objective has
    /// no analytic second derivatives. Callers fall back to central
    /// differences of the gradient.
    fn hvp(&self, _theta: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        (**self).value(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        (**self).gradient(theta)
    }
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        (**self).hvp(theta, v)
    }
}

impl<O: Objective + ?Sized> Objective for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        (**self).value(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        (**self).gradient(theta)
    }
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        (**self).hvp(theta, v)
    }
}

/// Step control for directional central differences.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FdConfig {
    /// Base step `r`. The step actually used along a direction `v` at `theta`
    /// is `r * max(1, |theta|) / max(1, |v|)`.
    pub step: f64,
}

impl Default for FdConfig {
    /// `cbrt(eps)`, the balanced step for central differences in double
    /// precision.
    fn default() -> Self {
        FdConfig {
            step: f64::EPSILON.cbrt(),
        }
    }
}

impl FdConfig {
    pub fn new(step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "finite-difference step must be positive and finite, got {step}"
            )));
        }
        if step < 1e-12 {
            log::warn!(
                "finite-difference step {step:e} is below the double-precision resolution; \
                 central differences will collapse to zero"
            );
        }
        Ok(FdConfig { step })
    }

    /// Step actually used when differencing along `v` at `theta`.
    pub fn scaled_step(&self, theta: &[f64], v: &[f64]) -> f64 {
        self.step * norm(theta).max(1.0) / norm(v).max(1.0)
    }
}

/// `H(theta) v`: the analytic product when the objective provides one, else
/// the central difference `(grad(theta + r v) - grad(theta - r v)) / 2r`.
pub fn hvp_or_fallback<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    v: &[f64],
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    let out = match obj.hvp(theta, v) {
        Some(hv) => hv,
        None => {
            let r = cfg.scaled_step(theta, v);
            let plus = obj.gradient(&add_scaled(theta, r, v));
            let minus = obj.gradient(&add_scaled(theta, -r, v));
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * r))
                .collect()
        }
    };
    if out.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: out.len(),
        });
    }
    check_finite(&out, "hessian-vector product")?;
    Ok(out)
}

/// Third-derivative contraction `D^3 l(theta)[v, w, .]`, computed as the
/// central difference of two Hessian-vector products displaced along `v`.
pub fn third_dir_contraction<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    v: &[f64],
    w: &[f64],
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    let r = cfg.scaled_step(theta, v);
    let plus = hvp_or_fallback(obj, &add_scaled(theta, r, v), w, cfg)?;
    let minus = hvp_or_fallback(obj, &add_scaled(theta, -r, v), w, cfg)?;
    let out: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * r))
        .collect();
    check_finite(&out, "third-derivative contraction")?;
    Ok(out)
}

/// Rate of change of `H(theta) grad(theta)` along `v`, i.e.
/// `D^3 l[v, grad l, .] + H H v`, from two gradients and two
/// Hessian-vector products at `theta +- r v`.
pub fn hessian_gradient_rate<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    v: &[f64],
    cfg: &FdConfig,
) -> Result<Vec<f64>> {
    let r = cfg.scaled_step(theta, v);
    let tp = add_scaled(theta, r, v);
    let tm = add_scaled(theta, -r, v);
    let gp = obj.gradient(&tp);
    let gm = obj.gradient(&tm);
    check_finite(&gp, "gradient")?;
    check_finite(&gm, "gradient")?;
    let plus = hvp_or_fallback(obj, &tp, &gp, cfg)?;
    let minus = hvp_or_fallback(obj, &tm, &gm, cfg)?;
    let out: Vec<f64> = plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * r))
        .collect();
    check_finite(&out, "hessian-gradient rate")?;
    Ok(out)
}

/// Objective built from closures. Mostly useful in tests and examples.
pub struct FnObjective<F, G, H = fn(&[f64], &[f64]) -> Vec<f64>> {
    dim: usize,
    value: F,
    gradient: G,
    hvp: Option<H>,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, value: F, gradient: G) -> Self {
        FnObjective {
            dim,
            value,
            gradient,
            hvp: None,
        }
    }

    pub fn with_hvp<H>(self, hvp: H) -> FnObjective<F, G, H>
    where
        H: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
    {
        FnObjective {
            dim: self.dim,
            value: self.value,
            gradient: self.gradient,
            hvp: Some(hvp),
        }
    }
}

impl<F, G, H> Objective for FnObjective<F, G, H>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
    H: Fn(&[f64], &[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &[f64]) -> f64 {
        (self.value)(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        (self.gradient)(theta)
    }
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        self.hvp.as_ref().map(|h| h(theta, v))
    }
}

/// Flips the sign of an objective so that a minimization problem can be fed
/// to the maximizer.
#[derive(Debug, Clone)]
pub struct Negated<O>(pub O);

impl<O: Objective> Objective for Negated<O> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        -self.0.value(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.0.gradient(theta).into_iter().map(|g| -g).collect()
    }
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        self.0
            .hvp(theta, v)
            .map(|hv| hv.into_iter().map(|x| -x).collect())
    }
}

/// Snapshot of evaluation counts.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EvalCounts {
    pub values: usize,
    pub gradients: usize,
    pub hvps: usize,
}

impl std::ops::Sub for EvalCounts {
    type Output = EvalCounts;
    fn sub(self, rhs: EvalCounts) -> EvalCounts {
        EvalCounts {
            values: self.values - rhs.values,
            gradients: self.gradients - rhs.gradients,
            hvps: self.hvps - rhs.hvps,
        }
    }
}

/// Wraps an objective and counts calls to each primitive.
#[derive(Debug, Default)]
pub struct Counting<O> {
    inner: O,
    values: AtomicUsize,
    gradients: AtomicUsize,
    hvps: AtomicUsize,
}

impl<O> Counting<O> {
    pub fn new(inner: O) -> Self {
        Counting {
            inner,
            values: AtomicUsize::new(0),
            gradients: AtomicUsize::new(0),
            hvps: AtomicUsize::new(0),
        }
    }

    pub fn counts(&self) -> EvalCounts {
        EvalCounts {
            values: self.values.load(Ordering::Relaxed),
            gradients: self.gradients.load(Ordering::Relaxed),
            hvps: self.hvps.load(Ordering::Relaxed),
        }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Objective> Objective for Counting<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, theta: &[f64]) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.gradients.fetch_add(1, Ordering::Relaxed);
        self.inner.gradient(theta)
    }
    // A fallback product made of two gradient calls is counted once here
    // and twice under `gradients`.
    fn hvp(&self, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        self.hvps.fetch_add(1, Ordering::Relaxed);
        self.inner.hvp(theta, v)
    }
}
