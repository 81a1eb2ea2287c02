//! Dense reference implementations used to check the matrix-free code.
//!
//! Everything here forms `D x D` matrices explicitly, assembles the Hessian
//! column by column and integrates the geodesic equations numerically. It
//! is meant for small `D` only.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};
use crate::geometry::{GeometryCache, WarpConfig};
use crate::objective::{hvp_or_fallback, FdConfig, Objective};

/// Largest dimension the dense routines accept.
pub const MAX_DENSE_DIM: usize = 64;

/// Dense metric, inverse and Christoffel symbols at one chart point.
#[derive(Debug, Clone)]
pub struct DenseGeometry {
    pub theta: Vec<f64>,
    pub psi_sq: f64,
    pub grad: DVector<f64>,
    pub grad_psi_sq: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// `christoffel[m][(i, j)] = Gamma^m_ij`, from the Levi-Civita formula.
    pub christoffel: Vec<DMatrix<f64>>,
    /// Ambient symbols of `diag(I, psi^2)` in `D + 1` coordinates, indexed
    /// the same way.
    pub ambient: Vec<DMatrix<f64>>,
}

fn dense_hessian<O: Objective + ?Sized>(obj: &O, theta: &[f64], fd: &FdConfig) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let mut h = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = hvp_or_fallback(obj, theta, &e, fd)?;
        e[j] = 0.0;
        h.set_column(j, &DVector::from_vec(col));
    }
    Ok(h)
}

/// Builds the dense geometry at `theta` from `D` Hessian-vector products.
pub fn build_christoffel<O: Objective + ?Sized>(
    obj: &O,
    warp: &WarpConfig,
    theta: &[f64],
    fd: &FdConfig,
) -> Result<DenseGeometry> {
    let d = theta.len();
    if d == 0 || d > MAX_DENSE_DIM {
        return Err(Error::InvalidConfig(format!(
            "dense oracle supports 1 <= D <= {MAX_DENSE_DIM}, got {d}"
        )));
    }
    check_finite(theta, "chart point")?;
    let grad = DVector::from_vec(obj.gradient(theta));
    check_finite(grad.as_slice(), "gradient")?;
    let hessian = dense_hessian(obj, theta, fd)?;
    let g2 = grad.norm_squared();
    let ws2 = warp.sigma_sq + g2;
    let psi_sq = g2 / ws2;
    let grad_psi_sq = &hessian * &grad * (2.0 * warp.sigma_sq / (ws2 * ws2));

    let g = DMatrix::identity(d, d) + &grad * grad.transpose() * psi_sq;
    let g_inv = g
        .clone()
        .try_inverse()
        .ok_or(Error::NumericalBreakdown { context: "dense metric inverse", index: 0 })?;

    // dG[k] = d G / d theta_k
    let dg: Vec<DMatrix<f64>> = (0..d)
        .map(|k| {
            let hk = hessian.column(k).into_owned();
            &grad * grad.transpose() * grad_psi_sq[k] + (&hk * grad.transpose() + &grad * hk.transpose()) * psi_sq
        })
        .collect();
    let christoffel = (0..d)
        .map(|m| {
            DMatrix::from_fn(d, d, |i, j| {
                0.5 * (0..d)
                    .map(|l| g_inv[(m, l)] * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]))
                    .sum::<f64>()
            })
        })
        .collect();

    let mut ambient = Vec::with_capacity(d + 1);
    for m in 0..d {
        let mut a = DMatrix::zeros(d + 1, d + 1);
        a[(d, d)] = -0.5 * grad_psi_sq[m];
        ambient.push(a);
    }
    let mut last = DMatrix::zeros(d + 1, d + 1);
    if psi_sq > 0.0 {
        for i in 0..d {
            let c = 0.5 * grad_psi_sq[i] / psi_sq;
            last[(i, d)] = c;
            last[(d, i)] = c;
        }
    }
    ambient.push(last);

    Ok(DenseGeometry {
        theta: theta.to_vec(),
        psi_sq,
        grad,
        grad_psi_sq,
        hessian,
        g,
        g_inv,
        christoffel,
        ambient,
    })
}

impl DenseGeometry {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn w_sq(&self) -> f64 {
        self.psi_sq * self.grad.norm_squared() + 1.0
    }

    /// `Lambda = dpsi grad^T + grad dpsi^T + 2 psi^2 H + psi^2 <dpsi, grad> grad grad^T`,
    /// with `dpsi` the gradient of `psi^2`.
    pub fn lambda(&self) -> DMatrix<f64> {
        let (gr, dp) = (&self.grad, &self.grad_psi_sq);
        let p = self.psi_sq;
        dp * gr.transpose() + gr * dp.transpose() + &self.hessian * (2.0 * p) + gr * gr.transpose() * (p * dp.dot(gr))
    }

    /// `(v^T Lambda v / 2W^2, <v, grad>^2 / 2)`, the coefficients of `-grad`
    /// and `grad psi^2` in the chart acceleration.
    pub fn omega_terms(&self, v: &[f64]) -> (f64, f64) {
        let v = DVector::from_column_slice(v);
        let vg = v.dot(&self.grad);
        (v.dot(&(self.lambda() * &v)) / (2.0 * self.w_sq()), 0.5 * vg * vg)
    }

    /// The closed form `Lambda grad_m l / 2W^2 - grad grad^T d_m psi^2 / 2`.
    pub fn christoffel_closed_form(&self) -> Vec<DMatrix<f64>> {
        let (gr, dp) = (&self.grad, &self.grad_psi_sq);
        let lambda = self.lambda();
        let w2 = self.w_sq();
        (0..self.dim())
            .map(|m| &lambda * (gr[m] / (2.0 * w2)) - gr * gr.transpose() * (0.5 * dp[m]))
            .collect()
    }

    /// `-(v^T Gamma^m v)_m`
    pub fn acceleration(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        self.christoffel.iter().map(|c| -v.dot(&(c * &v))).collect()
    }

    /// `-(v^T Gamma^m v)_m` from the closed-form symbols.
    pub fn closed_form_acceleration(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        self.christoffel_closed_form().iter().map(|c| -v.dot(&(c * &v))).collect()
    }

    pub fn metric_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        DVector::from_column_slice(u).dot(&(&self.g * DVector::from_column_slice(v)))
    }

    pub fn metric_apply(&self, u: &[f64]) -> Vec<f64> {
        (&self.g * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    pub fn inverse_metric_apply(&self, u: &[f64]) -> Vec<f64> {
        (&self.g_inv * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    /// Second fundamental form from the explicit matrix
    /// `(2/W) dpsi grad^T + (psi/W) H + (psi / 2W) <grad psi^2, grad> grad grad^T`,
    /// where `dpsi` is the gradient of `psi` itself.
    pub fn second_fundamental_form(&self, v: &[f64]) -> Result<f64> {
        if !(self.psi_sq > 0.0) {
            return Err(Error::PsiDegenerate);
        }
        let psi = self.psi_sq.sqrt();
        let w = self.w_sq().sqrt();
        let gr = &self.grad;
        let dpsi = &self.grad_psi_sq / (2.0 * psi);
        let c = self.grad_psi_sq.dot(gr);
        let m = dpsi * gr.transpose() * (2.0 / w) + &self.hessian * (psi / w) + gr * gr.transpose() * (psi * c / (2.0 * w));
        let v = DVector::from_column_slice(v);
        Ok(v.dot(&(m * &v)))
    }

    /// Ambient Christoffel contraction `Gamma_bar^m(x', x')` for the embedded
    /// velocity of chart velocity `v`, all `D + 1` components.
    pub fn ambient_contraction(&self, v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        x.push(self.grad.dot(&DVector::from_column_slice(v)));
        let x = DVector::from_vec(x);
        self.ambient.iter().map(|a| x.dot(&(a * &x))).collect()
    }
}

/// Dense unit normal from the warped orthogonality system: the null vector
/// of `M^T G_psi` normalized in `G_psi`, oriented with a positive last entry.
pub fn dense_normal(geom: &DenseGeometry) -> Result<Vec<f64>> {
    if !(geom.psi_sq > 0.0) {
        return Err(Error::PsiDegenerate);
    }
    let d = geom.dim();
    // M^T G_psi n = n_{1:D} + psi^2 n_{D+1} grad = 0.
    let mut n: Vec<f64> = geom.grad.iter().map(|g| -geom.psi_sq * g).collect();
    n.push(1.0);
    let norm_sq: f64 = n[..d].iter().map(|x| x * x).sum::<f64>() + geom.psi_sq * n[d] * n[d];
    let s = norm_sq.sqrt();
    Ok(n.into_iter().map(|x| x / s).collect())
}

/// Weighted least-squares projection `argmin_y |G_psi^{1/2} (M y - z)|` with
/// the Jacobian `M = [I; grad^T]` and `G_psi = diag(I, psi^2)` formed densely,
/// solved by QR.
pub fn dense_projection(cache: &GeometryCache, z: &[f64]) -> Result<Vec<f64>> {
    let d = cache.dim();
    if z.len() != d + 1 {
        return Err(Error::DimensionMismatch { expected: d + 1, got: z.len() });
    }
    let mut m = DMatrix::zeros(d + 1, d);
    for i in 0..d {
        m[(i, i)] = 1.0;
        m[(d, i)] = cache.grad[i];
    }
    let w = cache.psi_sq.sqrt();
    let mut b = DVector::from_column_slice(z);
    for i in 0..d {
        m[(d, i)] *= w;
    }
    b[d] *= w;
    let qr = m.qr();
    let sol = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * b))
        .ok_or(Error::NumericalBreakdown { context: "dense projection", index: 0 })?;
    Ok(sol.as_slice().to_vec())
}

/// Transport as `-(1/t)` times the dense projection of the displacement
/// `(theta_src - theta_dst, l_src - l_dst)` at the destination.
pub fn dense_transport(src: &GeometryCache, dst: &GeometryCache, t: f64) -> Result<Vec<f64>> {
    let mut z: Vec<f64> = src.theta.iter().zip(&dst.theta).map(|(a, b)| a - b).collect();
    z.push(src.value - dst.value);
    Ok(dense_projection(dst, &z)?.into_iter().map(|x| -x / t).collect())
}

/// Trajectory of the geodesic ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
}

impl GeodesicPath {
    pub fn end(&self) -> &[f64] {
        self.positions.last().expect("path has at least one point")
    }
}

fn dense_rhs<O: Objective + ?Sized>(
    obj: &O,
    warp: &WarpConfig,
    theta: &[f64],
    v: &[f64],
    fd: &FdConfig,
) -> Result<Vec<f64>> {
    Ok(build_christoffel(obj, warp, theta, fd)?.acceleration(v))
}

/// Classical fourth-order Runge-Kutta on `theta'' = -(v^T Gamma^m v)_m` with
/// `n_steps` fixed steps, using the dense Christoffel symbols at every stage.
pub fn integrate_geodesic<O: Objective + ?Sized>(
    obj: &O,
    warp: &WarpConfig,
    theta0: &[f64],
    v0: &[f64],
    t_end: f64,
    n_steps: usize,
    fd: &FdConfig,
) -> Result<GeodesicPath> {
    let n = n_steps.max(1);
    let h = t_end / n as f64;
    let d = theta0.len();
    let mut x = theta0.to_vec();
    let mut v = v0.to_vec();
    let mut path = GeodesicPath {
        times: vec![0.0],
        positions: vec![x.clone()],
        velocities: vec![v.clone()],
    };
    let shift = |base: &[f64], dir: &[f64], s: f64| -> Vec<f64> { base.iter().zip(dir).map(|(b, d)| b + s * d).collect() };
    for step in 0..n {
        let stage = |x: &[f64], v: &[f64]| dense_rhs(obj, warp, x, v, fd).map_err(|_| Error::StepUnstable(step));
        let k1x = v.clone();
        let k1v = stage(&x, &v)?;
        let k2x = shift(&v, &k1v, 0.5 * h);
        let k2v = stage(&shift(&x, &k1x, 0.5 * h), &k2x)?;
        let k3x = shift(&v, &k2v, 0.5 * h);
        let k3v = stage(&shift(&x, &k2x, 0.5 * h), &k3x)?;
        let k4x = shift(&v, &k3v, h);
        let k4v = stage(&shift(&x, &k3x, h), &k4x)?;
        for i in 0..d {
            x[i] += h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        if x.iter().chain(&v).any(|y| !y.is_finite()) {
            return Err(Error::StepUnstable(step));
        }
        path.times.push(h * (step + 1) as f64);
        path.positions.push(x.clone());
        path.velocities.push(v.clone());
    }
    Ok(path)
}

/// Integrates with `n_steps`, doubling the step count until the endpoint
/// moves by less than `tol` (max norm) under halving of the step.
pub fn integrate_geodesic_converged<O: Objective + ?Sized>(
    obj: &O,
    warp: &WarpConfig,
    theta0: &[f64],
    v0: &[f64],
    t_end: f64,
    n_steps: usize,
    tol: f64,
    fd: &FdConfig,
) -> Result<GeodesicPath> {
    let mut n = n_steps.max(1);
    let mut coarse = integrate_geodesic(obj, warp, theta0, v0, t_end, n, fd)?;
    loop {
        let fine = integrate_geodesic(obj, warp, theta0, v0, t_end, 2 * n, fd)?;
        let diff = coarse
            .end()
            .iter()
            .zip(fine.end())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff < tol || n >= 1 << 16 {
            return Ok(fine);
        }
        n *= 2;
        coarse = fine;
    }
}

/// Warped speed `v^T G(theta) v` at every point of a path.
pub fn path_speed_sq<O: Objective + ?Sized>(
    obj: &O,
    warp: &WarpConfig,
    path: &GeodesicPath,
    fd: &FdConfig,
) -> Result<Vec<f64>> {
    path.positions
        .iter()
        .zip(&path.velocities)
        .map(|(x, v)| {
            let c = GeometryCache::build(obj, warp, x.clone(), fd)?;
            Ok(c.metric_inner(v, v))
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
