//! Riemannian conjugate gradient with the cubic geodesic retraction and the
//! inverse-backward-retraction transport.

use std::cell::Cell;
use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, Error, Result};
use crate::geometry::{taylor_coefficients, GeodesicJet, GeometryCache, JetModel, PointEval, WarpConfig};
use crate::line_search::{strong_wolfe, LineSearchOutcome, Sample, WolfeConfig};
use crate::linalg::{axpy, dot, norm};
use crate::objective::{Counting, EvalCounts, FdConfig, Objective};
use crate::retraction::{sample_curve, vector_transport, StepAudit, TransportResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcgConfig {
    pub max_iters: usize,
    /// Stop when `|f_{k+1} - f_k|` falls below this (not tested on the
    /// first step).
    pub tol_df: f64,
    /// The `tol_df` stop only fires once the Riemannian gradient norm is
    /// below this gate. `None` applies the `tol_df` test unconditionally.
    pub df_grad_gate: Option<f64>,
    /// Stop when the Riemannian gradient norm `|grad l| / W` falls below this.
    pub tol_grad: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    /// Trial step of the very first line search. Later searches start from
    /// `t_{k-1} g'_{k-1}(0) / g'_k(0)`.
    pub t_init: f64,
    pub max_line_search_evals: usize,
    /// Extra secant evaluation after each Wolfe point.
    pub refine_step: bool,
    /// Fall back to the Riemannian gradient when the conjugate direction
    /// is not an ascent direction. Otherwise the run stops.
    pub restart_on_nonascent: bool,
    pub jet_model: JetModel,
    pub fd: FdConfig,
    /// Keep each step's jet and origin values in the trace.
    pub record_audit: bool,
}

impl Default for RcgConfig {
    fn default() -> Self {
        let w = WolfeConfig::default();
        RcgConfig {
            max_iters: 8000,
            tol_df: 1e-5,
            df_grad_gate: Some(1e-4),
            tol_grad: 1e-6,
            wolfe_c1: w.c1,
            wolfe_c2: w.c2,
            t_init: 1.0,
            max_line_search_evals: w.max_evals,
            refine_step: w.refine,
            restart_on_nonascent: true,
            jet_model: JetModel::default(),
            fd: FdConfig::default(),
            record_audit: false,
        }
    }
}

impl RcgConfig {
    pub fn wolfe(&self) -> WolfeConfig {
        WolfeConfig {
            c1: self.wolfe_c1,
            c2: self.wolfe_c2,
            max_evals: self.max_line_search_evals,
            refine: self.refine_step,
        }
    }

    /// Whether a step with value change `df` ending at gradient norm
    /// `grad_norm` meets the `tol_df` stop.
    pub fn df_test(&self, df: f64, grad_norm: f64) -> bool {
        df.abs() < self.tol_df && self.df_grad_gate.is_none_or(|gate| grad_norm < gate)
    }

    pub fn validate(&self) -> Result<()> {
        self.wolfe().validate()?;
        if !(self.tol_df > 0.0) || !(self.tol_grad > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if let Some(gate) = self.df_grad_gate {
            if !(gate > 0.0) {
                return Err(Error::InvalidConfig("df_grad_gate must be positive".into()));
            }
        }
        if !(self.t_init > 0.0) || !self.t_init.is_finite() {
            return Err(Error::InvalidConfig("t_init must be positive and finite".into()));
        }
        FdConfig::new(self.fd.step)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    MaxIters,
    SmallDeltaF,
    SmallGrad,
    LineSearchFail,
    NumericalBreakdown,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::SmallDeltaF | StopReason::SmallGrad)
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// One accepted iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Iteration number, starting at 1.
    pub k: usize,
    /// Objective at the new iterate.
    pub f: f64,
    pub grad_norm_riem: f64,
    pub grad_norm_eucl: f64,
    pub t_k: f64,
    pub beta_k: f64,
    pub s_k: f64,
    pub ls_evals: usize,
    pub wall_ns: u64,
    /// The step was taken along the gradient after discarding the
    /// conjugate direction.
    pub restart: bool,
    pub evals: EvalCounts,
    pub cache_builds: usize,
    #[serde(skip)]
    pub audit: Option<StepAudit>,
}

const HISTORY: usize = 32;

#[derive(Debug, Clone)]
pub struct RcgState {
    /// Accepted steps so far.
    pub k: usize,
    pub cache: GeometryCache,
    /// Current search direction `V_k`.
    pub direction: Vec<f64>,
    /// `grad l / W^2` at the current iterate.
    pub grad_coords: Vec<f64>,
    pub last_t: Option<f64>,
    pub last_slope0: f64,
    pub beta: f64,
    pub s: f64,
    /// Most recent objective values, oldest first.
    pub f_history: VecDeque<f64>,
    pub stop_reason: Option<StopReason>,
    /// The error behind a `LineSearchFail` or `NumericalBreakdown` stop.
    pub error: Option<Error>,
    pub restarts: usize,
}

impl RcgState {
    pub fn theta(&self) -> &[f64] {
        &self.cache.theta
    }

    pub fn value(&self) -> f64 {
        self.cache.value
    }

    fn stop(&mut self, reason: StopReason, err: Option<Error>) {
        self.stop_reason = Some(reason);
        self.error = err;
    }
}

/// Dai-Yuan coefficient
/// `|grad f_{k+1}|^2 / (s <grad f_{k+1}, T(V_k)> - <grad f_k, V_k>)`,
/// with every inner product reduced to a Euclidean one against `grad l`.
pub fn dy_beta(next: &GeometryCache, transported: &TransportResult, prev: &GeometryCache, dir_prev: &[f64]) -> Result<f64> {
    let num = next.grad_sq / next.w_sq;
    let den = transported.scale_s * dot(&next.grad, &transported.coords) - dot(&prev.grad, dir_prev);
    if !den.is_finite() || den.abs() < 1e-300 || !num.is_finite() {
        return Err(Error::DegenerateBeta(den));
    }
    Ok(num / den)
}

/// Outcome of a complete run.
#[derive(Debug, Clone)]
pub struct RcgRun {
    pub state: RcgState,
    pub trace: Vec<IterationTrace>,
    pub counts: EvalCounts,
}

impl RcgRun {
    pub fn theta(&self) -> &[f64] {
        self.state.theta()
    }

    pub fn stop_reason(&self) -> StopReason {
        self.state.stop_reason.unwrap_or(StopReason::MaxIters)
    }
}

/// Optimizer bound to one objective and configuration.
pub struct Rcg<'a, O: ?Sized> {
    obj: Counting<&'a O>,
    warp: WarpConfig,
    cfg: RcgConfig,
    cache_builds: Cell<usize>,
}

impl<'a, O: Objective + ?Sized> Rcg<'a, O> {
    pub fn new(obj: &'a O, warp: WarpConfig, cfg: RcgConfig) -> Result<Self> {
        cfg.validate()?;
        WarpConfig::new(warp.sigma_sq)?;
        if obj.dim() == 0 {
            return Err(Error::InvalidConfig("objective dimension must be positive".into()));
        }
        Ok(Rcg {
            obj: Counting::new(obj),
            warp,
            cfg,
            cache_builds: Cell::new(0),
        })
    }

    pub fn config(&self) -> &RcgConfig {
        &self.cfg
    }

    pub fn counts(&self) -> EvalCounts {
        self.obj.counts()
    }

    pub fn cache_builds(&self) -> usize {
        self.cache_builds.get()
    }

    fn complete(&self, point: PointEval) -> Result<GeometryCache> {
        self.cache_builds.set(self.cache_builds.get() + 1);
        GeometryCache::from_point(&self.obj, &self.warp, point, &self.cfg.fd)
    }

    pub fn init(&self, theta0: Vec<f64>) -> Result<RcgState> {
        if theta0.len() != self.obj.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.obj.dim(),
                got: theta0.len(),
            });
        }
        check_finite(&theta0, "initial point")?;
        let cache = self.complete(PointEval::evaluate(&self.obj, theta0)?)?;
        let grad_coords = cache.riemannian_gradient();
        let mut f_history = VecDeque::with_capacity(HISTORY);
        f_history.push_back(cache.value);
        Ok(RcgState {
            k: 0,
            direction: grad_coords.clone(),
            grad_coords,
            cache,
            last_t: None,
            last_slope0: 0.0,
            beta: 0.0,
            s: 1.0,
            f_history,
            stop_reason: None,
            error: None,
            restarts: 0,
        })
    }

    fn search(
        &self,
        cache: &GeometryCache,
        direction: &[f64],
        slope0: f64,
        t0: f64,
    ) -> Result<(GeodesicJet, LineSearchOutcome<PointEval>)> {
        let jet = taylor_coefficients(&self.obj, cache, direction, &self.cfg.fd, self.cfg.jet_model)?;
        let out = strong_wolfe(cache.value, slope0, t0, &self.cfg.wolfe(), |t| {
            let s = sample_curve(&self.obj, &jet, t)?;
            Ok(Sample {
                t,
                value: s.point.value,
                slope: s.slope,
                payload: s.point,
            })
        })?;
        Ok((jet, out))
    }

    /// Takes one step. Returns `None` once a stopping rule has fired.
    pub fn step(&self, state: &mut RcgState) -> Option<IterationTrace> {
        if state.stop_reason.is_some() {
            return None;
        }
        if state.cache.riemannian_grad_norm() < self.cfg.tol_grad {
            state.stop(StopReason::SmallGrad, None);
            return None;
        }
        if state.k >= self.cfg.max_iters {
            state.stop(StopReason::MaxIters, None);
            return None;
        }
        let clock = Instant::now();
        let counts0 = self.obj.counts();
        let builds0 = self.cache_builds.get();

        let mut restart = false;
        let mut slope0 = dot(&state.cache.grad, &state.direction);
        if !(slope0 > 0.0) || !slope0.is_finite() {
            if !self.cfg.restart_on_nonascent {
                state.stop(StopReason::LineSearchFail, Some(Error::NonAscent(slope0)));
                return None;
            }
            self.reset_direction(state);
            slope0 = dot(&state.cache.grad, &state.direction);
            restart = true;
        }
        let t0 = match state.last_t {
            Some(t) => {
                let t0 = t * state.last_slope0 / slope0;
                if t0 > 0.0 && t0.is_finite() {
                    t0
                } else {
                    self.cfg.t_init
                }
            }
            None => self.cfg.t_init,
        };

        let (jet, ls) = match self.search(&state.cache, &state.direction, slope0, t0) {
            Ok(found) => found,
            Err(e @ (Error::LineSearchFail { .. } | Error::NonAscent(_))) if !restart => {
                log::debug!("line search along conjugate direction failed ({e}); restarting");
                self.reset_direction(state);
                slope0 = dot(&state.cache.grad, &state.direction);
                restart = true;
                match self.search(&state.cache, &state.direction, slope0, t0) {
                    Ok(found) => found,
                    Err(e) => return self.fail(state, e),
                }
            }
            Err(e) => return self.fail(state, e),
        };
        let t = ls.accepted.t;
        let next = match self.complete(ls.accepted.payload) {
            Ok(c) => c,
            Err(e) => return self.fail(state, e),
        };

        let grad_next = next.riemannian_gradient();
        let (mut beta, mut s) = (0.0, 1.0);
        let mut direction = grad_next.clone();
        match vector_transport(&state.cache, &next, &state.direction, t) {
            Ok(tr) => match dy_beta(&next, &tr, &state.cache, &state.direction) {
                Ok(b) if b < 0.0 => {
                    beta = b;
                    s = tr.scale_s;
                    axpy(-beta * s, &tr.coords, &mut direction);
                }
                Ok(_) => restart = true,
                Err(e) => {
                    log::debug!("{e}; restarting");
                    restart = true;
                }
            },
            Err(e) => {
                log::debug!("{e}; restarting");
                restart = true;
            }
        }
        if direction.iter().any(|x| !x.is_finite()) {
            direction = grad_next.clone();
            beta = 0.0;
            restart = true;
        }

        let f_prev = state.cache.value;
        let audit = self.cfg.record_audit.then(|| StepAudit {
            jet,
            value0: f_prev,
            slope0,
        });
        let step_index = state.k;
        state.k += 1;
        state.last_t = Some(t);
        state.last_slope0 = slope0;
        state.beta = beta;
        state.s = s;
        state.direction = direction;
        state.grad_coords = grad_next;
        state.cache = next;
        if state.f_history.len() == HISTORY {
            state.f_history.pop_front();
        }
        state.f_history.push_back(state.cache.value);
        if restart {
            state.restarts += 1;
        }

        let trace = IterationTrace {
            k: state.k,
            f: state.cache.value,
            grad_norm_riem: state.cache.riemannian_grad_norm(),
            grad_norm_eucl: norm(&state.cache.grad),
            t_k: t,
            beta_k: beta,
            s_k: s,
            ls_evals: ls.evals,
            wall_ns: clock.elapsed().as_nanos() as u64,
            restart,
            evals: self.obj.counts() - counts0,
            cache_builds: self.cache_builds.get() - builds0,
            audit,
        };

        let small_df = step_index >= 1 && self.cfg.df_test(state.cache.value - f_prev, trace.grad_norm_riem);
        if trace.grad_norm_riem < self.cfg.tol_grad {
            state.stop(StopReason::SmallGrad, None);
        } else if small_df {
            state.stop(StopReason::SmallDeltaF, None);
        } else if state.k >= self.cfg.max_iters {
            state.stop(StopReason::MaxIters, None);
        }
        Some(trace)
    }

    fn reset_direction(&self, state: &mut RcgState) {
        state.direction = state.grad_coords.clone();
    }

    fn fail(&self, state: &mut RcgState, e: Error) -> Option<IterationTrace> {
        let reason = match e {
            Error::LineSearchFail { .. } | Error::NonAscent(_) => StopReason::LineSearchFail,
            _ => StopReason::NumericalBreakdown,
        };
        log::debug!("stopping at iteration {}: {e}", state.k);
        state.stop(reason, Some(e));
        None
    }

    /// Iterates from `theta0` until a stopping rule fires.
    pub fn run(&self, theta0: Vec<f64>) -> Result<RcgRun> {
        let counts0 = self.obj.counts();
        let mut state = self.init(theta0)?;
        let mut trace = Vec::new();
        while let Some(rec) = self.step(&mut state) {
            trace.push(rec);
        }
        Ok(RcgRun {
            state,
            trace,
            counts: self.obj.counts() - counts0,
        })
    }
}

/// Runs the optimizer from `theta0`.
pub fn run<O: Objective + ?Sized>(obj: &O, warp: WarpConfig, theta0: Vec<f64>, cfg: RcgConfig) -> Result<RcgRun> {
    Rcg::new(obj, warp, cfg)?.run(theta0)
}
