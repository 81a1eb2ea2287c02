//! Euclidean nonlinear conjugate gradient (Dai-Yuan, strong Wolfe) for
//! iteration-count comparisons.
//!
//! It shares the line search, step-length initialization, restart and
//! stopping rules with [`crate::rcg`], so on a flat warp the two produce
//! the same iterates.

use std::time::Instant;

use crate::error::{check_finite, Error, Result};
use crate::geometry::PointEval;
use crate::line_search::{strong_wolfe, Sample};
use crate::linalg::{add_scaled, axpy, dot, norm, norm_sq};
use crate::objective::{Counting, EvalCounts, Objective};
use crate::rcg::{IterationTrace, RcgConfig, StopReason};

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub stop_reason: StopReason,
    pub error: Option<Error>,
    pub trace: Vec<IterationTrace>,
    pub counts: EvalCounts,
}

/// Runs Euclidean CG from `theta0` under the stopping rules of `cfg`.
///
/// Gradient norms in the trace are Euclidean in both columns; `s_k` is 1.
pub fn euclidean_cg_baseline<O: Objective + ?Sized>(obj: &O, theta0: Vec<f64>, cfg: &RcgConfig) -> Result<BaselineRun> {
    cfg.validate()?;
    if theta0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: theta0.len(),
        });
    }
    check_finite(&theta0, "initial point")?;
    let obj = Counting::new(obj);
    let wolfe = cfg.wolfe();
    let mut cur = PointEval::evaluate(&obj, theta0)?;
    let mut dir = cur.grad.clone();
    let mut last: Option<(f64, f64)> = None;
    let mut trace = Vec::new();
    let mut error = None;

    let stop_reason = loop {
        if norm(&cur.grad) < cfg.tol_grad {
            break StopReason::SmallGrad;
        }
        if trace.len() >= cfg.max_iters {
            break StopReason::MaxIters;
        }
        let clock = Instant::now();
        let counts0 = obj.counts();
        let mut restart = false;
        let mut slope0 = dot(&cur.grad, &dir);
        if !(slope0 > 0.0) || !slope0.is_finite() {
            if !cfg.restart_on_nonascent {
                error = Some(Error::NonAscent(slope0));
                break StopReason::LineSearchFail;
            }
            dir = cur.grad.clone();
            slope0 = norm_sq(&dir);
            restart = true;
        }
        let t0 = match last {
            Some((t, s)) if t * s / slope0 > 0.0 && (t * s / slope0).is_finite() => t * s / slope0,
            _ => cfg.t_init,
        };
        let search = |dir: &[f64], slope0: f64| {
            strong_wolfe(cur.value, slope0, t0, &wolfe, |t| {
                let p = PointEval::evaluate(&obj, add_scaled(&cur.theta, t, dir))?;
                Ok(Sample {
                    t,
                    value: p.value,
                    slope: dot(&p.grad, dir),
                    payload: p,
                })
            })
        };
        let ls = match search(&dir, slope0) {
            Ok(ls) => ls,
            Err(Error::LineSearchFail { .. } | Error::NonAscent(_)) if !restart => {
                dir = cur.grad.clone();
                slope0 = norm_sq(&dir);
                restart = true;
                match search(&dir, slope0) {
                    Ok(ls) => ls,
                    Err(e) => {
                        let reason = stop_for(&e);
                        error = Some(e);
                        break reason;
                    }
                }
            }
            Err(e) => {
                let reason = stop_for(&e);
                error = Some(e);
                break reason;
            }
        };
        let t = ls.accepted.t;
        let next = ls.accepted.payload;

        let den = dot(&next.grad, &dir) - dot(&cur.grad, &dir);
        let beta = norm_sq(&next.grad) / den;
        let mut new_dir = next.grad.clone();
        let beta = if beta.is_finite() && den.abs() >= 1e-300 && beta < 0.0 {
            axpy(-beta, &dir, &mut new_dir);
            beta
        } else {
            restart = true;
            0.0
        };

        let f_prev = cur.value;
        let step_index = trace.len();
        last = Some((t, slope0));
        cur = next;
        dir = new_dir;
        let gn = norm(&cur.grad);
        trace.push(IterationTrace {
            k: step_index + 1,
            f: cur.value,
            grad_norm_riem: gn,
            grad_norm_eucl: gn,
            t_k: t,
            beta_k: beta,
            s_k: 1.0,
            ls_evals: ls.evals,
            wall_ns: clock.elapsed().as_nanos() as u64,
            restart,
            evals: obj.counts() - counts0,
            cache_builds: 0,
            audit: None,
        });
        if gn < cfg.tol_grad {
            break StopReason::SmallGrad;
        }
        if step_index >= 1 && cfg.df_test(cur.value - f_prev, gn) {
            break StopReason::SmallDeltaF;
        }
    };

    Ok(BaselineRun {
        theta: cur.theta,
        value: cur.value,
        grad: cur.grad,
        stop_reason,
        error,
        trace,
        counts: obj.counts(),
    })
}

fn stop_for(e: &Error) -> StopReason {
    match e {
        Error::LineSearchFail { .. } | Error::NonAscent(_) => StopReason::LineSearchFail,
        _ => StopReason::NumericalBreakdown,
    }
}
