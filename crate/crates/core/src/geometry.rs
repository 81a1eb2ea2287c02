//! Point-local geometry of the graph manifold `{(theta, l(theta))}` under the
//! warped ambient metric `diag(I, psi^2)`.
//!
//! In chart coordinates the induced metric is `G = I + psi^2 grad grad^T`,
//! a rank-one update of the identity, so every quantity here is evaluated
//! matrix-free in O(D) plus a bounded number of Hessian-vector products.
//! The warp function is `psi^2 = |grad|^2 / (sigma^2 + |grad|^2)`.
//!
//! Nothing in this module divides by `psi`: at critical points `psi = 0`
//! and all chart-level formulas collapse to their Euclidean forms. Only the
//! embedded normal vector needs `psi > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_scalar, Error, Result};
use crate::linalg::{axpy, dot, norm_sq, scaled};
use crate::objective::{hessian_gradient_rate, hvp_or_fallback, third_dir_contraction, FdConfig, Objective};

/// Flattening parameter of the warp function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpConfig {
    pub sigma_sq: f64,
}

impl WarpConfig {
    pub fn new(sigma_sq: f64) -> Result<Self> {
        if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma^2 must be positive and finite, got {sigma_sq}"
            )));
        }
        Ok(WarpConfig { sigma_sq })
    }

    /// From `sigma` rather than `sigma^2`.
    pub fn from_sigma(sigma: f64) -> Result<Self> {
        Self::new(sigma * sigma)
    }
}

impl Default for WarpConfig {
    fn default() -> Self {
        WarpConfig { sigma_sq: 1.0 }
    }
}

/// Value and gradient at a chart point. Line-search trial points only need
/// this much.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEval {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
}

impl PointEval {
    pub fn evaluate<O: Objective + ?Sized>(obj: &O, theta: Vec<f64>) -> Result<Self> {
        let value = check_scalar(obj.value(&theta), "objective value")?;
        let grad = obj.gradient(&theta);
        if grad.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                got: grad.len(),
            });
        }
        check_finite(&grad, "gradient")?;
        Ok(PointEval { theta, value, grad })
    }
}

/// Every point-local quantity the optimizer needs, computed once per
/// accepted iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryCache {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    /// `|grad|^2`
    pub grad_sq: f64,
    /// `psi^2`, in `[0, 1)`.
    pub psi_sq: f64,
    /// Gradient of `psi^2` with respect to `theta`.
    pub grad_psi_sq: Vec<f64>,
    /// `W^2 = psi^2 |grad|^2 + 1`
    pub w_sq: f64,
    /// `W_sigma^2 = sigma^2 + |grad|^2`
    pub w_sigma_sq: f64,
    /// `H grad`, kept for the time derivatives of the warp.
    pub hess_grad: Vec<f64>,
    pub sigma_sq: f64,
}

impl GeometryCache {
    /// One value, one gradient and one Hessian-vector product.
    pub fn build<O: Objective + ?Sized>(
        obj: &O,
        warp: &WarpConfig,
        theta: Vec<f64>,
        fd: &FdConfig,
    ) -> Result<Self> {
        if theta.len() != obj.dim() {
            return Err(Error::DimensionMismatch {
                expected: obj.dim(),
                got: theta.len(),
            });
        }
        check_finite(&theta, "chart point")?;
        let point = PointEval::evaluate(obj, theta)?;
        Self::from_point(obj, warp, point, fd)
    }

    /// Completes a value-and-gradient evaluation with the single
    /// Hessian-vector product `H grad`.
    pub fn from_point<O: Objective + ?Sized>(
        obj: &O,
        warp: &WarpConfig,
        point: PointEval,
        fd: &FdConfig,
    ) -> Result<Self> {
        let hess_grad = hvp_or_fallback(obj, &point.theta, &point.grad, fd)?;
        Ok(Self::assemble(warp.sigma_sq, point, hess_grad))
    }

    fn assemble(sigma_sq: f64, point: PointEval, hess_grad: Vec<f64>) -> Self {
        let PointEval { theta, value, grad } = point;
        let grad_sq = norm_sq(&grad);
        let w_sigma_sq = sigma_sq + grad_sq;
        let psi_sq = grad_sq / w_sigma_sq;
        let w_sq = psi_sq * grad_sq + 1.0;
        let grad_psi_sq = scaled(2.0 * sigma_sq / (w_sigma_sq * w_sigma_sq), &hess_grad);
        GeometryCache {
            theta,
            value,
            grad,
            grad_sq,
            psi_sq,
            grad_psi_sq,
            w_sq,
            w_sigma_sq,
            hess_grad,
            sigma_sq,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `<u, v>_G = <u, v> + psi^2 <grad, u><grad, v>`
    pub fn metric_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, v) + self.psi_sq * dot(&self.grad, u) * dot(&self.grad, v)
    }

    pub fn metric_norm(&self, v: &[f64]) -> f64 {
        self.metric_inner(v, v).sqrt()
    }

    /// `G u`
    pub fn metric_apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = u.to_vec();
        axpy(self.psi_sq * dot(&self.grad, u), &self.grad, &mut out);
        out
    }

    /// `G^{-1} g = g - (psi^2 / W^2) <grad, g> grad`
    pub fn inverse_metric_apply(&self, g: &[f64]) -> Vec<f64> {
        let mut out = g.to_vec();
        axpy(-self.psi_sq / self.w_sq * dot(&self.grad, g), &self.grad, &mut out);
        out
    }

    /// Chart coordinates of the Riemannian gradient, `G^{-1} grad = grad / W^2`.
    pub fn riemannian_gradient(&self) -> Vec<f64> {
        scaled(1.0 / self.w_sq, &self.grad)
    }

    /// `|grad f|_G = |grad| / W`
    pub fn riemannian_grad_norm(&self) -> f64 {
        (self.grad_sq / self.w_sq).sqrt()
    }

    /// Unit normal `(-psi grad / W, 1 / (psi W))` in ambient coordinates.
    pub fn normal_vector(&self) -> Result<Vec<f64>> {
        if !(self.psi_sq > 0.0) {
            return Err(Error::PsiDegenerate);
        }
        let psi = self.psi_sq.sqrt();
        let w = self.w_sq.sqrt();
        let mut n = scaled(-psi / w, &self.grad);
        n.push(1.0 / (psi * w));
        Ok(n)
    }

    /// Chart coordinates of the warped-orthogonal projection of an ambient
    /// vector `z` (length `D + 1`) onto the tangent space.
    ///
    /// The weighted least-squares normal equations reduce to
    /// `G^{-1} (z_{1:D} + psi^2 z_{D+1} grad)`.
    pub fn project_to_tangent(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        assert_eq!(z.len(), d + 1, "ambient vector must have length D + 1");
        let mut y = z[..d].to_vec();
        axpy(self.psi_sq * z[d], &self.grad, &mut y);
        self.inverse_metric_apply(&y)
    }

    /// Ambient form `(v, <v, grad>)` of a tangent vector.
    pub fn embed_tangent(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        out.push(dot(v, &self.grad));
        out
    }

    /// `(psi / W) II(v)`, the scalar multiplying `-grad` in the normal
    /// acceleration, given `hv = H v`. It never divides by `psi`.
    pub fn scaled_second_fundamental_form(&self, v: &[f64], hv: &[f64]) -> f64 {
        let vg = dot(v, &self.grad);
        let vp = dot(v, &self.grad_psi_sq);
        let vhv = dot(v, hv);
        let pg = dot(&self.grad_psi_sq, &self.grad);
        (vp * vg + self.psi_sq * vhv + 0.5 * self.psi_sq * pg * vg * vg) / self.w_sq
    }

    /// The second fundamental form `II(v)` itself. Requires `psi > 0`.
    pub fn second_fundamental_form<O: Objective + ?Sized>(
        &self,
        obj: &O,
        v: &[f64],
        fd: &FdConfig,
    ) -> Result<f64> {
        if !(self.psi_sq > 0.0) {
            return Err(Error::PsiDegenerate);
        }
        let hv = hvp_or_fallback(obj, &self.theta, v, fd)?;
        let scale = self.w_sq.sqrt() / self.psi_sq.sqrt();
        Ok(self.scaled_second_fundamental_form(v, &hv) * scale)
    }
}

/// Christoffel contractions along a chart velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicAcceleration {
    /// Coefficient of `-grad` in the chart acceleration.
    pub omega1: f64,
    /// Coefficient of `grad psi^2`, `<v, grad>^2 / 2`.
    pub omega2: f64,
    /// `-omega1 grad + omega2 grad psi^2`
    pub accel: Vec<f64>,
    /// `H v`, returned so callers need not recompute it.
    pub hv: Vec<f64>,
}

/// Chart acceleration of the geodesic through the cache point with velocity
/// `v`. Costs one Hessian-vector product.
pub fn geodesic_acceleration<O: Objective + ?Sized>(
    obj: &O,
    cache: &GeometryCache,
    v: &[f64],
    fd: &FdConfig,
) -> Result<GeodesicAcceleration> {
    let hv = hvp_or_fallback(obj, &cache.theta, v, fd)?;
    Ok(acceleration_from_hv(cache, v, hv))
}

fn acceleration_from_hv(cache: &GeometryCache, v: &[f64], hv: Vec<f64>) -> GeodesicAcceleration {
    let omega1 = cache.scaled_second_fundamental_form(v, &hv);
    let vg = dot(v, &cache.grad);
    let omega2 = 0.5 * vg * vg;
    let mut accel = scaled(-omega1, &cache.grad);
    axpy(omega2, &cache.grad_psi_sq, &mut accel);
    GeodesicAcceleration {
        omega1,
        omega2,
        accel,
        hv,
    }
}

/// Which second- and third-order coefficients the retraction curve uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JetModel {
    /// Chart Taylor coefficients of the true geodesic:
    /// `q = theta''(0)`, `k = theta'''(0)`. Includes the warp-gradient
    /// term contributed by the ambient connection.
    #[default]
    Geodesic,
    /// Chart projection of the normal acceleration only:
    /// `q = -S grad`, `k = -(S' grad + S H v)`. `q` is always parallel to
    /// the gradient; agreement with the geodesic is second order.
    NormalProjection,
}

/// Taylor data of the retraction curve `theta + t v + t^2 q / 2 + t^3 k / 6`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicJet {
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub k: Vec<f64>,
}

impl GeodesicJet {
    /// The straight line `theta + t v`.
    pub fn straight(theta: Vec<f64>, v: Vec<f64>) -> Self {
        let d = theta.len();
        GeodesicJet {
            theta,
            v,
            q: vec![0.0; d],
            k: vec![0.0; d],
        }
    }
}

/// Computes the quadratic and cubic coefficients of the retraction curve.
///
/// Cost: five Hessian-vector products and two gradients, independent of
/// `D` (`H v`, two for the rate of `H grad`, two for `D^3 l[v, v]`).
pub fn taylor_coefficients<O: Objective + ?Sized>(
    obj: &O,
    cache: &GeometryCache,
    v: &[f64],
    fd: &FdConfig,
    model: JetModel,
) -> Result<GeodesicJet> {
    let d = cache.dim();
    if v.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: v.len() });
    }
    check_finite(v, "tangent direction")?;
    if norm_sq(v) == 0.0 {
        return Ok(GeodesicJet::straight(cache.theta.clone(), v.to_vec()));
    }

    let acc = geodesic_acceleration(obj, cache, v, fd)?;
    let hv = &acc.hv;
    let vdot = &acc.accel;
    let theta = &cache.theta;
    let grad = &cache.grad;
    let gp = &cache.grad_psi_sq;
    let p = cache.psi_sq;
    let iw = 1.0 / cache.w_sq;

    // Scalars entering S = omega1.
    let a1 = dot(v, gp);
    let a2 = dot(v, grad);
    let h = dot(v, hv);
    let c = dot(gp, grad);
    let s = acc.omega1;

    // Rates along the curve at t = 0 (theta' = v, v' = vdot).
    let g_hv = dot(grad, hv);
    let d_ws2 = 2.0 * g_hv;
    let dp = a1;
    let d_w2 = dp * cache.grad_sq + p * 2.0 * g_hv;
    let d_iw = -iw * iw * d_w2;

    let hg_rate = hessian_gradient_rate(obj, theta, v, fd)?;
    let ws2 = cache.w_sigma_sq;
    let coef = 2.0 * cache.sigma_sq / (ws2 * ws2);
    // d/dt grad psi^2
    let mut d_gp = scaled(coef, &hg_rate);
    axpy(-coef * 2.0 * d_ws2 / ws2, &cache.hess_grad, &mut d_gp);

    let t3 = third_dir_contraction(obj, theta, v, v, fd)?;

    let da1 = dot(vdot, gp) + dot(v, &d_gp);
    let da2 = dot(vdot, grad) + h;
    let dh = 2.0 * dot(vdot, hv) + dot(v, &t3);
    let dc = dot(&d_gp, grad) + dot(gp, hv);

    let inner = a1 * a2 + p * h + 0.5 * p * c * a2 * a2;
    let d_inner = da1 * a2 + a1 * da2 + dp * h + p * dh
        + 0.5 * (dp * c * a2 * a2 + p * dc * a2 * a2 + 2.0 * p * c * a2 * da2);
    let ds = d_iw * inner + iw * d_inner;

    // -(S' grad + S H v)
    let mut k = scaled(-ds, grad);
    axpy(-s, hv, &mut k);

    let q = match model {
        JetModel::Geodesic => {
            let d_omega2 = a2 * da2;
            axpy(d_omega2, gp, &mut k);
            axpy(acc.omega2, &d_gp, &mut k);
            vdot.clone()
        }
        JetModel::NormalProjection => scaled(-s, grad),
    };
    check_finite(&q, "quadratic jet coefficient")?;
    check_finite(&k, "cubic jet coefficient")?;
    Ok(GeodesicJet {
        theta: theta.clone(),
        v: v.to_vec(),
        q,
        k,
    })
}
