//! Benchmark harness around `warped-rcg`: single runs with a per-iteration
//! trace CSV and a JSON summary, and dimension sweeps that tabulate
//! iterations to convergence.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use warped_rcg::problems::{Basin, Problem, ProblemKind};
use warped_rcg::{
    euclidean_cg_baseline, rcg, EvalCounts, GeometryCache, IterationTrace, Negated, Objective, RcgConfig, StopReason,
    WarpConfig,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column order of the trace CSV.
pub const TRACE_HEADER: [&str; 10] = [
    "iter",
    "f",
    "grad_norm_riem",
    "grad_norm_eucl",
    "t_k",
    "beta_k",
    "s_k",
    "ls_evals",
    "wall_ns",
    "restart",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid run specification: {0}")]
    InvalidSpec(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rcg,
    EuclidCg,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rcg => "rcg",
            Method::EuclidCg => "euclid_cg",
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "rcg" => Ok(Method::Rcg),
            "euclid_cg" | "euclid-cg" | "cg" => Ok(Method::EuclidCg),
            _ => Err(CliError::InvalidSpec(format!("unknown method '{s}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything needed to reproduce one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub problem: ProblemKind,
    pub dim: usize,
    pub method: Method,
    /// Warp flattening `sigma^2`. Defaults per problem: 1 for the squiggle
    /// and quadratic (`sigma = 1`), `9e4` for Rosenbrock (`sigma = 300`).
    pub sigma_sq: f64,
    /// Minimize the problem instead of maximizing it.
    pub minimize: bool,
    pub config: RcgConfig,
    pub trace_out: Option<PathBuf>,
    pub summary_out: Option<PathBuf>,
}

impl RunSpec {
    pub fn new(problem: ProblemKind, dim: usize, method: Method) -> Self {
        RunSpec {
            problem,
            dim,
            method,
            sigma_sq: problem.default_sigma_sq(),
            minimize: false,
            config: RcgConfig::default(),
            trace_out: None,
            summary_out: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        Problem::new(self.problem, self.dim).map_err(|e| CliError::InvalidSpec(e.to_string()))?;
        WarpConfig::new(self.sigma_sq).map_err(|e| CliError::InvalidSpec(e.to_string()))?;
        self.config.validate().map_err(|e| CliError::InvalidSpec(e.to_string()))?;
        if self.config.max_iters == 0 {
            return Err(CliError::InvalidSpec("max_iters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub stop_reason: StopReason,
    pub converged: bool,
    pub iterations: usize,
    /// Objective at the final iterate, in the problem's own sign.
    pub final_f: f64,
    pub final_grad_norm_riem: f64,
    pub final_grad_norm_eucl: f64,
    /// Known maximum of the problem, when maximizing.
    pub max_value: Option<f64>,
    /// `|theta - theta*|` to the known global maximizer, when maximizing.
    pub distance_to_maximizer: Option<f64>,
    pub basin: Option<Basin>,
    pub evals: EvalCounts,
    pub wall_ns: u64,
    pub error: Option<String>,
    pub spec: RunSpec,
    pub version: String,
}

/// Result of [`run_spec`] before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub trace: Vec<IterationTrace>,
    pub theta: Vec<f64>,
}

impl RunOutput {
    /// 0 for any completed run, 2 when it stopped on a numerical breakdown.
    pub fn exit_code(&self) -> i32 {
        match self.summary.stop_reason {
            StopReason::NumericalBreakdown => 2,
            _ => 0,
        }
    }
}

struct Finished {
    theta: Vec<f64>,
    stop: StopReason,
    error: Option<String>,
    trace: Vec<IterationTrace>,
    counts: EvalCounts,
}

fn optimize<O: Objective>(obj: &O, spec: &RunSpec, theta0: Vec<f64>) -> Result<Finished, CliError> {
    let invalid = |e: warped_rcg::Error| CliError::InvalidSpec(e.to_string());
    match spec.method {
        Method::Rcg => {
            let warp = WarpConfig::new(spec.sigma_sq).map_err(invalid)?;
            let out = rcg::run(obj, warp, theta0, spec.config).map_err(invalid)?;
            Ok(Finished {
                theta: out.theta().to_vec(),
                stop: out.stop_reason(),
                error: out.state.error.as_ref().map(|e| e.to_string()),
                trace: out.trace,
                counts: out.counts,
            })
        }
        Method::EuclidCg => {
            let out = euclidean_cg_baseline(obj, theta0, &spec.config).map_err(invalid)?;
            Ok(Finished {
                theta: out.theta,
                stop: out.stop_reason,
                error: out.error.map(|e| e.to_string()),
                trace: out.trace,
                counts: out.counts,
            })
        }
    }
}

/// Runs `spec` and returns the summary and trace without touching the disk.
pub fn execute(spec: &RunSpec) -> Result<RunOutput, CliError> {
    spec.validate()?;
    let problem = Problem::new(spec.problem, spec.dim).map_err(|e| CliError::InvalidSpec(e.to_string()))?;
    let theta0 = problem.initial_point();
    log::info!("{} D={} method={} sigma^2={}", spec.problem, spec.dim, spec.method, spec.sigma_sq);
    let done = if spec.minimize {
        optimize(&Negated(&problem), spec, theta0)?
    } else {
        optimize(&problem, spec, theta0)?
    };

    let final_f = problem.value(&done.theta);
    let (riem, eucl) = match done.trace.last() {
        Some(last) => (last.grad_norm_riem, last.grad_norm_eucl),
        None => {
            let warp = WarpConfig::new(spec.sigma_sq).map_err(|e| CliError::InvalidSpec(e.to_string()))?;
            let cache = GeometryCache::build(&problem, &warp, done.theta.clone(), &spec.config.fd)
                .map_err(|e| CliError::InvalidSpec(e.to_string()))?;
            let eucl = cache.grad_sq.sqrt();
            let riem = if spec.method == Method::Rcg { cache.riemannian_grad_norm() } else { eucl };
            (riem, eucl)
        }
    };
    let maximizing = !spec.minimize;
    let distance = maximizing.then(|| {
        let star = problem.maximizer();
        done.theta.iter().zip(&star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    });
    let summary = Summary {
        stop_reason: done.stop,
        converged: done.stop.converged(),
        iterations: done.trace.len(),
        final_f,
        final_grad_norm_riem: riem,
        final_grad_norm_eucl: eucl,
        max_value: maximizing.then(|| problem.max_value()),
        distance_to_maximizer: distance,
        basin: maximizing.then(|| problem.classify(final_f)),
        evals: done.counts,
        wall_ns: done.trace.iter().map(|r| r.wall_ns).sum(),
        error: done.error,
        spec: spec.clone(),
        version: VERSION.to_string(),
    };
    log::info!(
        "{} after {} iterations, f = {:.10e}",
        summary.stop_reason,
        summary.iterations,
        summary.final_f
    );
    Ok(RunOutput {
        summary,
        trace: done.trace,
        theta: done.theta,
    })
}

pub fn write_trace(path: &Path, trace: &[IterationTrace]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for r in trace {
        w.write_record([
            r.k.to_string(),
            r.f.to_string(),
            r.grad_norm_riem.to_string(),
            r.grad_norm_eucl.to_string(),
            r.t_k.to_string(),
            r.beta_k.to_string(),
            r.s_k.to_string(),
            r.ls_evals.to_string(),
            r.wall_ns.to_string(),
            u8::from(r.restart).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

/// Runs `spec` and writes whichever artifacts it names.
pub fn run_spec(spec: &RunSpec) -> Result<RunOutput, CliError> {
    let out = execute(spec)?;
    if let Some(path) = &spec.trace_out {
        write_trace(path, &out.trace)?;
    }
    if let Some(path) = &spec.summary_out {
        write_json(path, &out.summary)?;
    }
    Ok(out)
}

/// One line of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub problem: ProblemKind,
    pub method: Method,
    pub dim: usize,
    pub sigma_sq: f64,
    pub stop_reason: Option<StopReason>,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub final_f: Option<f64>,
    pub final_grad_norm_riem: Option<f64>,
    pub distance_to_maximizer: Option<f64>,
    pub basin: Option<Basin>,
    pub hvps: Option<u64>,
    pub wall_ns: Option<u64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(spec: &RunSpec, err: &CliError) -> Self {
        SweepRow {
            problem: spec.problem,
            method: spec.method,
            dim: spec.dim,
            sigma_sq: spec.sigma_sq,
            stop_reason: None,
            converged: false,
            iterations: None,
            final_f: None,
            final_grad_norm_riem: None,
            distance_to_maximizer: None,
            basin: None,
            hvps: None,
            wall_ns: None,
            error: Some(err.to_string()),
        }
    }

    fn from_summary(s: &Summary) -> Self {
        SweepRow {
            problem: s.spec.problem,
            method: s.spec.method,
            dim: s.spec.dim,
            sigma_sq: s.spec.sigma_sq,
            stop_reason: Some(s.stop_reason),
            converged: s.converged,
            iterations: Some(s.iterations),
            final_f: Some(s.final_f),
            final_grad_norm_riem: Some(s.final_grad_norm_riem),
            distance_to_maximizer: s.distance_to_maximizer,
            basin: s.basin,
            hvps: Some(s.evals.hvps as u64),
            wall_ns: Some(s.wall_ns),
            error: s.error.clone(),
        }
    }
}

/// File name of a sweep member's trace inside the trace directory.
pub fn trace_file_name(spec: &RunSpec) -> String {
    format!("{}_{}_d{}.csv", spec.problem, spec.method, spec.dim)
}

/// Runs `template` for every `(method, dim)` pair, ordered by method and
/// then dimension. Runs execute on `jobs` worker threads (all cores when
/// `None`); a failing run becomes a row with `error` set.
///
/// When `trace_dir` is given, each run writes its trace there.
pub fn sweep(
    template: &RunSpec,
    methods: &[Method],
    dims: &[usize],
    jobs: Option<usize>,
    trace_dir: Option<&Path>,
) -> Result<Vec<SweepRow>, CliError> {
    if dims.is_empty() {
        return Err(CliError::InvalidSpec("sweep needs at least one dimension".into()));
    }
    if methods.is_empty() {
        return Err(CliError::InvalidSpec("sweep needs at least one method".into()));
    }
    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    let specs: Vec<RunSpec> = methods
        .iter()
        .flat_map(|&method| {
            dims.iter().map(move |&dim| RunSpec {
                dim,
                method,
                trace_out: trace_dir.map(|d| d.join(trace_file_name(&RunSpec { dim, method, ..template.clone() }))),
                summary_out: None,
                ..template.clone()
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::InvalidSpec(e.to_string()))?;
    Ok(pool.install(|| {
        specs
            .par_iter()
            .map(|spec| match run_spec(spec) {
                Ok(out) => SweepRow::from_summary(&out.summary),
                Err(e) => SweepRow::failed(spec, &e),
            })
            .collect()
    }))
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<(), CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
