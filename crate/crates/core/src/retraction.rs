//! Retraction along the geodesic jet and the inverse-backward-retraction
//! vector transport.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GeodesicJet, GeometryCache, PointEval};
use crate::linalg::{axpy, dot, sub};
use crate::objective::Objective;

/// Chart point `theta + t v + t^2 q / 2 + t^3 k / 6`. The manifold point is
/// this together with its objective value.
pub fn retract(jet: &GeodesicJet, t: f64) -> Vec<f64> {
    let mut out = jet.theta.clone();
    axpy(t, &jet.v, &mut out);
    axpy(0.5 * t * t, &jet.q, &mut out);
    axpy(t * t * t / 6.0, &jet.k, &mut out);
    out
}

/// Chart velocity of the retraction curve, `v + t q + t^2 k / 2`.
pub fn curve_velocity(jet: &GeodesicJet, t: f64) -> Vec<f64> {
    let mut out = jet.v.clone();
    axpy(t, &jet.q, &mut out);
    axpy(0.5 * t * t, &jet.k, &mut out);
    out
}

/// The objective restricted to the retraction curve, at one `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    pub t: f64,
    pub point: PointEval,
    /// `d/dt l(curve(t))`
    pub slope: f64,
}

impl CurveSample {
    pub fn value(&self) -> f64 {
        self.point.value
    }
}

/// Evaluates `g(t) = l(curve(t))` and its exact derivative
/// `<grad l(curve(t)), curve'(t)>`. One value and one gradient call.
pub fn sample_curve<O: Objective + ?Sized>(obj: &O, jet: &GeodesicJet, t: f64) -> Result<CurveSample> {
    let point = PointEval::evaluate(obj, retract(jet, t))?;
    let slope = dot(&point.grad, &curve_velocity(jet, t));
    if !slope.is_finite() {
        return Err(Error::NumericalBreakdown {
            context: "curve slope",
            index: 0,
        });
    }
    Ok(CurveSample { t, point, slope })
}

/// `(g(t), g'(t))` along the retraction curve.
pub fn directional_value_and_slope<O: Objective + ?Sized>(
    obj: &O,
    jet: &GeodesicJet,
    t: f64,
) -> Result<(f64, f64)> {
    let s = sample_curve(obj, jet, t)?;
    Ok((s.point.value, s.slope))
}

/// Transported direction in destination chart coordinates, with the
/// length safeguard `s = min(1, |V|_src / |T(V)|_dst)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportResult {
    pub coords: Vec<f64>,
    pub scale_s: f64,
}

/// `-(1/t) Proj_dst([delta, delta_value])` in closed form:
/// `-(1/t) (delta - (<delta, grad_z> - delta_value) (psi_z^2 / W_z^2) grad_z)`.
///
/// Linear in `(delta, delta_value)`.
pub fn transport_displacement(dst: &GeometryCache, delta: &[f64], delta_value: f64, t: f64) -> Vec<f64> {
    let coef = (dot(delta, &dst.grad) - delta_value) * dst.psi_sq / dst.w_sq;
    let mut out = delta.to_vec();
    axpy(-coef, &dst.grad, &mut out);
    out.iter_mut().for_each(|x| *x *= -1.0 / t);
    out
}

/// Moves `v` from `src` to `dst = R_src(t v)`.
///
/// The displacement and value difference come from the two caches; nothing
/// is re-evaluated.
pub fn vector_transport(
    src: &GeometryCache,
    dst: &GeometryCache,
    v: &[f64],
    t: f64,
) -> Result<TransportResult> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::DegenerateStep("step length must be positive"));
    }
    let delta = sub(&src.theta, &dst.theta);
    let moved = delta
        .iter()
        .zip(&src.theta)
        .any(|(d, x)| d.abs() > f64::EPSILON * x.abs().max(f64::MIN_POSITIVE));
    if !moved {
        return Err(Error::DegenerateStep("source and destination coincide"));
    }
    let coords = transport_displacement(dst, &delta, src.value - dst.value, t);
    let dst_norm = dst.metric_norm(&coords);
    let scale_s = if dst_norm > 0.0 {
        (src.metric_norm(v) / dst_norm).min(1.0)
    } else {
        1.0
    };
    Ok(TransportResult { coords, scale_s })
}

/// Diagnostics for one evaluated step of the line search, kept when the
/// optimizer is asked to record an audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub jet: GeodesicJet,
    pub value0: f64,
    pub slope0: f64,
}
