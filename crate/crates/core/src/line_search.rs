//! Strong Wolfe line search for maximizing a scalar function `g(t)`, `t > 0`.
//!
//! Bracketing and zoom follow the usual minimization scheme applied to
//! `phi = -g`. Trial points whose objective evaluation breaks down
//! numerically are treated as overshoot, which shrinks the bracket.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WolfeConfig {
    /// Sufficient-increase constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Trial evaluations allowed per search.
    pub max_evals: usize,
    /// Spend one extra evaluation on a derivative-secant step after the
    /// Wolfe point is found, kept only if it is also a Wolfe point with a
    /// larger value.
    pub refine: bool,
}

impl Default for WolfeConfig {
    fn default() -> Self {
        WolfeConfig {
            c1: 1e-4,
            c2: 0.1,
            max_evals: 60,
            refine: true,
        }
    }
}

impl WolfeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if self.max_evals == 0 {
            return Err(Error::InvalidConfig("max_evals must be positive".into()));
        }
        Ok(())
    }

    /// Both strong Wolfe inequalities for maximization.
    pub fn accepts(&self, g0: f64, d0: f64, t: f64, g: f64, d: f64) -> bool {
        g >= g0 + self.c1 * t * d0 && d.abs() <= self.c2 * d0.abs()
    }
}

/// One evaluation of `g` and `g'` at `t`, carrying whatever the caller wants
/// to keep from that evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<P> {
    pub t: f64,
    pub value: f64,
    pub slope: f64,
    pub payload: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome<P> {
    pub accepted: Sample<P>,
    pub evals: usize,
}

const MAX_STEP: f64 = 1e20;

/// A bracket endpoint. Value and slope are non-finite when evaluation
/// broke down there.
#[derive(Clone, Copy)]
struct End {
    t: f64,
    value: f64,
    slope: f64,
}

impl End {
    fn from_sample<P>(s: &Sample<P>) -> Self {
        End {
            t: s.t,
            value: s.value,
            slope: s.slope,
        }
    }

    fn broken(t: f64) -> Self {
        End {
            t,
            value: f64::NEG_INFINITY,
            slope: f64::NAN,
        }
    }
}

struct Search<'a, P, F> {
    cfg: &'a WolfeConfig,
    g0: f64,
    d0: f64,
    evals: usize,
    eval: F,
    _p: std::marker::PhantomData<P>,
}

impl<P, F> Search<'_, P, F>
where
    F: FnMut(f64) -> Result<Sample<P>>,
{
    fn try_eval(&mut self, t: f64) -> Result<Option<Sample<P>>> {
        if self.evals >= self.cfg.max_evals {
            return Err(Error::LineSearchFail { evals: self.evals });
        }
        self.evals += 1;
        match (self.eval)(t) {
            Ok(s) if s.value.is_finite() && s.slope.is_finite() => Ok(Some(s)),
            Ok(_) | Err(Error::NumericalBreakdown { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn sufficient(&self, t: f64, value: f64) -> bool {
        value >= self.g0 + self.cfg.c1 * t * self.d0
    }

    fn curvature(&self, slope: f64) -> bool {
        slope.abs() <= self.cfg.c2 * self.d0
    }

    fn bracket(&mut self, t_init: f64) -> Result<Sample<P>> {
        let mut lo = End {
            t: 0.0,
            value: self.g0,
            slope: self.d0,
        };
        let mut t = t_init;
        loop {
            let Some(s) = self.try_eval(t)? else {
                return self.zoom(lo, End::broken(t));
            };
            if !self.sufficient(s.t, s.value) || (lo.t > 0.0 && s.value <= lo.value) {
                return self.zoom(lo, End::from_sample(&s));
            }
            if self.curvature(s.slope) {
                return Ok(s);
            }
            if s.slope <= 0.0 {
                return self.zoom(End::from_sample(&s), lo);
            }
            let next = extrapolate(&lo, &s);
            lo = End::from_sample(&s);
            t = next;
            if t > MAX_STEP {
                return Err(Error::LineSearchFail { evals: self.evals });
            }
        }
    }

    /// `lo` satisfies sufficient increase with the best value seen, and
    /// `lo.slope * (hi.t - lo.t) > 0`.
    fn zoom(&mut self, mut lo: End, mut hi: End) -> Result<Sample<P>> {
        loop {
            let (a, b) = (lo.t.min(hi.t), lo.t.max(hi.t));
            if b - a <= f64::EPSILON * b {
                return Err(Error::LineSearchFail { evals: self.evals });
            }
            let t = interpolate(&lo, &hi, a, b);
            let Some(s) = self.try_eval(t)? else {
                hi = End::broken(t);
                continue;
            };
            if !self.sufficient(s.t, s.value) || s.value <= lo.value {
                hi = End::from_sample(&s);
                continue;
            }
            if self.curvature(s.slope) {
                return Ok(s);
            }
            if s.slope * (hi.t - lo.t) <= 0.0 {
                hi = lo;
            }
            lo = End::from_sample(&s);
        }
    }
}

/// Next trial while still increasing: cubic extrapolation clamped to
/// `[2t, 8t]`.
fn extrapolate<P>(prev: &End, cur: &Sample<P>) -> f64 {
    let lo = 2.0 * cur.t;
    let hi = 8.0 * cur.t;
    match cubic_max(prev.t, prev.value, prev.slope, cur.t, cur.value, cur.slope) {
        Some(t) if t.is_finite() => t.clamp(lo, hi),
        _ => hi.min(4.0 * cur.t),
    }
}

/// Trial inside `(a, b)`: cubic (or quadratic) interpolation when both ends
/// are usable, bisection otherwise, kept away from the ends.
fn interpolate(lo: &End, hi: &End, a: f64, b: f64) -> f64 {
    let margin = 0.1 * (b - a);
    let guess = if hi.value.is_finite() && hi.slope.is_finite() {
        cubic_max(lo.t, lo.value, lo.slope, hi.t, hi.value, hi.slope)
    } else if hi.value.is_finite() {
        quadratic_max(lo.t, lo.value, lo.slope, hi.t, hi.value)
    } else {
        None
    };
    match guess {
        Some(t) if t.is_finite() && t > a + margin && t < b - margin => t,
        Some(t) if t.is_finite() && t >= a && t <= b => t.clamp(a + margin, b - margin),
        _ => 0.5 * (a + b),
    }
}

/// Maximizer of the cubic Hermite interpolant of `(t0, g0, d0)` and
/// `(t1, g1, d1)`.
pub(crate) fn cubic_max(t0: f64, g0: f64, d0: f64, t1: f64, g1: f64, d1: f64) -> Option<f64> {
    // Work with phi = -g as a minimization.
    let (p0, p1, dp0, dp1) = (-g0, -g1, -d0, -d1);
    let d1_ = dp0 + dp1 - 3.0 * (p0 - p1) / (t0 - t1);
    let disc = d1_ * d1_ - dp0 * dp1;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (t1 - t0).signum() * disc.sqrt();
    let denom = dp1 - dp0 + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    Some(t1 - (t1 - t0) * (dp1 + d2 - d1_) / denom)
}

/// Maximizer of the quadratic through `(t0, g0)`, `(t1, g1)` with slope `d0`
/// at `t0`.
fn quadratic_max(t0: f64, g0: f64, d0: f64, t1: f64, g1: f64) -> Option<f64> {
    let h = t1 - t0;
    let curv = (g1 - g0 - d0 * h) / (h * h);
    if curv >= 0.0 {
        return None;
    }
    Some(t0 - d0 / (2.0 * curv))
}

/// Finds a step satisfying the strong Wolfe conditions for maximization,
/// `g(t) >= g(0) + c1 t g'(0)` and `|g'(t)| <= c2 g'(0)`.
///
/// `g0`, `d0` are `g(0)` and `g'(0)`; `eval` returns `g` and `g'` at a trial
/// `t`.
pub fn strong_wolfe<P, F>(g0: f64, d0: f64, t_init: f64, cfg: &WolfeConfig, eval: F) -> Result<LineSearchOutcome<P>>
where
    F: FnMut(f64) -> Result<Sample<P>>,
{
    if !(d0 > 0.0) || !d0.is_finite() {
        return Err(Error::NonAscent(d0));
    }
    if !g0.is_finite() {
        return Err(Error::NumericalBreakdown {
            context: "line search origin",
            index: 0,
        });
    }
    let t_init = if t_init > 0.0 && t_init.is_finite() { t_init } else { 1.0 };
    let mut search = Search {
        cfg,
        g0,
        d0,
        evals: 0,
        eval,
        _p: std::marker::PhantomData,
    };
    let accepted = search.bracket(t_init)?;
    let accepted = if cfg.refine {
        refine(&mut search, accepted)
    } else {
        accepted
    };
    Ok(LineSearchOutcome {
        accepted,
        evals: search.evals,
    })
}

/// Secant step on `g'` between the origin and the accepted point. Exact for
/// quadratic `g`.
fn refine<P, F>(search: &mut Search<'_, P, F>, s: Sample<P>) -> Sample<P>
where
    F: FnMut(f64) -> Result<Sample<P>>,
{
    let d0 = search.d0;
    if s.slope.abs() <= 1e-12 * d0 || s.slope == d0 {
        return s;
    }
    let t = s.t * d0 / (d0 - s.slope);
    if !(t > 0.0) || !t.is_finite() || (t - s.t).abs() <= 1e-12 * s.t || t > 16.0 * s.t {
        return s;
    }
    match search.try_eval(t) {
        Ok(Some(r)) if r.value > s.value && search.sufficient(r.t, r.value) && search.curvature(r.slope) => r,
        _ => s,
    }
}
