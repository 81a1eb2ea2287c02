use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use warped_rcg::problems::ProblemKind;
use warped_rcg::{FdConfig, RcgConfig};
use warped_rcg_cli::{run_spec, sweep, write_sweep, CliError, Method, RunSpec};

#[derive(Parser)]
#[command(name = "wrcg", version, about = "Warped Riemannian conjugate gradient benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one problem and write its trace and summary.
    Run {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value = "rcg", value_parser = parse_method)]
        method: Method,
        #[command(flatten)]
        common: Common,
    },
    /// Run every method over a list of dimensions and tabulate the results.
    Sweep {
        /// Comma-separated dimensions, e.g. `2,10,50`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "rcg,euclid_cg", value_parser = parse_method)]
        methods: Vec<Method>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long, value_parser = parse_problem)]
    problem: ProblemKind,
    /// Warp parameter sigma^2 (not sigma). Defaults to 1 for the squiggle
    /// and quadratic and 9e4 (sigma = 300) for Rosenbrock.
    #[arg(long)]
    sigma_sq: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol_df: Option<f64>,
    #[arg(long)]
    tol_grad: Option<f64>,
    #[arg(long)]
    wolfe_c1: Option<f64>,
    #[arg(long)]
    wolfe_c2: Option<f64>,
    /// Base step of the directional finite differences.
    #[arg(long)]
    fd_step: Option<f64>,
    /// Minimize the problem instead of maximizing it.
    #[arg(long)]
    minimize: bool,
    /// Trace CSV for `run`; directory of per-run traces for `sweep`.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Summary JSON for `run`; summary table CSV for `sweep`.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn parse_problem(s: &str) -> Result<ProblemKind, String> {
    s.parse().map_err(|e: warped_rcg::Error| e.to_string())
}

impl Common {
    fn spec(&self, dim: usize, method: Method) -> RunSpec {
        let mut spec = RunSpec::new(self.problem, dim, method);
        let d = RcgConfig::default();
        spec.sigma_sq = self.sigma_sq.unwrap_or(spec.sigma_sq);
        spec.minimize = self.minimize;
        spec.config = RcgConfig {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol_df: self.tol_df.unwrap_or(d.tol_df),
            tol_grad: self.tol_grad.unwrap_or(d.tol_grad),
            wolfe_c1: self.wolfe_c1.unwrap_or(d.wolfe_c1),
            wolfe_c2: self.wolfe_c2.unwrap_or(d.wolfe_c2),
            fd: self.fd_step.map_or(d.fd, |step| FdConfig { step }),
            ..d
        };
        spec
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { dim, method, common } => {
            let mut spec = common.spec(dim, method);
            spec.trace_out = common.trace_out.clone();
            spec.summary_out = common.summary_out.clone();
            let out = run_spec(&spec)?;
            if spec.summary_out.is_none() {
                let _ = writeln!(io::stdout(), "{}", serde_json::to_string_pretty(&out.summary)?);
            }
            Ok(out.exit_code())
        }
        Command::Sweep {
            dims,
            methods,
            jobs,
            common,
        } => {
            let template = common.spec(dims.first().copied().unwrap_or(2), Method::Rcg);
            let rows = sweep(&template, &methods, &dims, jobs, common.trace_out.as_deref())?;
            let mut out = io::stdout().lock();
            let _ = writeln!(out, "{:<10} {:<10} {:>6} {:>14} {:>8} {:>16} {:>10}", "problem", "method", "D", "stop", "iters", "final_f", "basin");
            for r in &rows {
                let _ = writeln!(
                    out,
                    "{:<10} {:<10} {:>6} {:>14} {:>8} {:>16} {:>10}",
                    r.problem.to_string(),
                    r.method.to_string(),
                    r.dim,
                    r.stop_reason.map_or_else(|| "error".to_string(), |s| s.to_string()),
                    r.iterations.map_or_else(|| "-".to_string(), |i| i.to_string()),
                    r.final_f.map_or_else(|| "-".to_string(), |f| format!("{f:.8e}")),
                    r.basin.map_or_else(|| "-".to_string(), |b| format!("{b:?}").to_lowercase()),
                );
            }
            if let Some(path) = &common.summary_out {
                write_sweep(path, &rows)?;
            }
            Ok(0)
        }
    }
}
