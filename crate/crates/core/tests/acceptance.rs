//! End-to-end acceptance checks. Each criterion prints a single PASS or FAIL
//! line; the test fails if any criterion fails.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use warped_rcg::geometry::{geodesic_acceleration, taylor_coefficients, GeodesicJet, GeometryCache, JetModel, WarpConfig};
use warped_rcg::linalg::{add_scaled, dot, norm, sub};
use warped_rcg::objective::{FdConfig, Objective};
use warped_rcg::oracle::{build_christoffel, dense_projection, dense_transport, integrate_geodesic, loglog_slope};
use warped_rcg::problems::{Basin, Problem, ProblemKind, Quadratic, Squiggle};
use warped_rcg::rcg::{self, IterationTrace, Rcg, RcgConfig, StopReason};
use warped_rcg::retraction::{retract, sample_curve, vector_transport};
use warped_rcg::{euclidean_cg_baseline, RcgRun};

struct Report {
    lines: Vec<String>,
    failed: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String, elapsed: Duration) {
        let line = format!(
            "{} [{id:>2}] {name}: {detail} ({:.2} s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        // Written to the raw handle so the report shows without --nocapture.
        let _ = writeln!(std::io::stdout().lock(), "{line}");
        if !pass {
            self.failed += 1;
        }
        self.lines.push(line);
    }
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b)) / norm(b).max(1e-300)
}

fn uniform(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

fn fd() -> FdConfig {
    FdConfig::default()
}

fn metric_algebra() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let warp = WarpConfig::new(1.0).unwrap();
    let (mut e_round, mut e_dual, mut e_norm) = (0.0f64, 0.0f64, 0.0f64);
    let mut draws = 0;
    for kind in [ProblemKind::Squiggle, ProblemKind::Rosenbrock] {
        for d in [2, 10, 50] {
            let p = Problem::new(kind, d).unwrap();
            for _ in 0..1000 {
                let theta = uniform(&mut rng, d, -3.0, 3.0);
                let v = uniform(&mut rng, d, -1.0, 1.0);
                let c = GeometryCache::build(&p, &warp, theta, &fd()).unwrap();
                // Norm-wise: the product G (G^{-1} v) is measured against |G| |G^{-1} v|.
                let gi_v = c.inverse_metric_apply(&v);
                let back = c.metric_apply(&gi_v);
                e_round = e_round.max(norm(&sub(&back, &v)) / (c.w_sq * norm(&gi_v)));

                let rg = c.riemannian_gradient();
                let lhs = c.metric_inner(&rg, &v);
                let rhs = dot(&c.grad, &v);
                e_dual = e_dual.max((lhs - rhs).abs() / (rhs.abs() + norm(&c.grad) * norm(&v)));

                let n2 = c.metric_inner(&rg, &rg);
                let want = c.grad_sq / c.w_sq;
                e_norm = e_norm.max((n2 - want).abs() / want);
                draws += 1;
            }
        }
    }
    let pass = e_round <= 1e-12 && e_dual <= 1e-12 && e_norm <= 1e-12;
    (pass, format!("{draws} draws, round-trip {e_round:.1e}, duality {e_dual:.1e}, grad norm {e_norm:.1e}"))
}

fn normal_vector() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let warp = WarpConfig::new(1.0).unwrap();
    let (mut e_unit, mut e_orth) = (0.0f64, 0.0f64);
    let mut points = 0;
    for kind in [ProblemKind::Squiggle, ProblemKind::Rosenbrock, ProblemKind::Quadratic] {
        for d in [2, 5, 10] {
            let p = Problem::new(kind, d).unwrap();
            for _ in 0..50 {
                let c = GeometryCache::build(&p, &warp, uniform(&mut rng, d, -3.0, 3.0), &fd()).unwrap();
                if !(c.psi_sq > 0.0) {
                    continue;
                }
                let n = c.normal_vector().unwrap();
                let ip = |a: &[f64], b: &[f64]| dot(&a[..d], &b[..d]) + c.psi_sq * a[d] * b[d];
                e_unit = e_unit.max((ip(&n, &n) - 1.0).abs());
                for i in 0..d {
                    let mut e = vec![0.0; d];
                    e[i] = 1.0;
                    let t = c.embed_tangent(&e);
                    e_orth = e_orth.max(ip(&n, &t).abs() / ip(&t, &t).sqrt());
                }
                points += 1;
            }
        }
    }
    let pass = e_unit <= 1e-10 && e_orth <= 1e-10;
    (pass, format!("{points} points, unit norm {e_unit:.1e}, orthogonality {e_orth:.1e}"))
}

fn jet_orders() -> (bool, String) {
    let warp = WarpConfig::new(1.0).unwrap();
    let quad = Quadratic::new(2).unwrap();
    let squiggle = Squiggle::new(2).unwrap();
    let fig = Squiggle::with_params(1.3, vec![20.0, 0.1]).unwrap();
    let cases: Vec<(&str, &dyn Objective, [f64; 2], [f64; 2])> = vec![
        ("quadratic", &quad, [1.0, 0.5], [0.3, -0.7]),
        ("quadratic", &quad, [-0.8, 1.2], [1.0, 0.4]),
        ("squiggle", &squiggle, [1.5, -0.6], [-0.4, 0.9]),
        ("squiggle a=1.3", &fig, [3.0, 1.4], [-1.2, -1.0]),
    ];
    let times: Vec<f64> = (0..9).map(|i| 1e-3 * 10f64.powf(i as f64 / 4.0)).collect();
    let mut worst = [f64::INFINITY; 3];
    let mut detail = Vec::new();
    for (name, obj, theta, v) in cases {
        let c = GeometryCache::build(obj, &warp, theta.to_vec(), &fd()).unwrap();
        let jet = taylor_coefficients(obj, &c, &v, &fd(), JetModel::Geodesic).unwrap();
        let truncations = [
            GeodesicJet::straight(jet.theta.clone(), jet.v.clone()),
            GeodesicJet { k: vec![0.0; 2], ..jet.clone() },
            jet.clone(),
        ];
        let mut errs = [vec![], vec![], vec![]];
        for &t in &times {
            let exact = integrate_geodesic(obj, &warp, &theta, &v, t, 16, &fd()).unwrap();
            for (o, tr) in truncations.iter().enumerate() {
                errs[o].push(norm(&sub(&retract(tr, t), exact.end())));
            }
        }
        let slopes: Vec<f64> = errs.iter().map(|e| loglog_slope(&times, e)).collect();
        for o in 0..3 {
            worst[o] = worst[o].min(slopes[o]);
        }
        detail.push(format!("{name} {:.2}/{:.2}/{:.2}", slopes[0], slopes[1], slopes[2]));
    }
    let pass = worst[0] >= 1.9 && worst[1] >= 2.8 && worst[2] >= 3.6;
    (pass, format!("slopes 1st/2nd/3rd: {}", detail.join(", ")))
}

fn dense_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let warp = WarpConfig::new(1.0).unwrap();
    let (mut e_om1, mut e_om2, mut e_acc, mut e_proj, mut e_tr) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut e_def = 0.0f64;
    let mut def_trials = 0;
    for trial in 0..200 {
        let kind = if trial % 2 == 0 { ProblemKind::Squiggle } else { ProblemKind::Rosenbrock };
        let d = 2 + trial % 4;
        let p = Problem::new(kind, d).unwrap();
        let theta = uniform(&mut rng, d, -2.0, 2.0);
        let v = uniform(&mut rng, d, -1.0, 1.0);
        let c = GeometryCache::build(&p, &warp, theta.clone(), &fd()).unwrap();
        let dense = build_christoffel(&p, &warp, &theta, &fd()).unwrap();
        let acc = geodesic_acceleration(&p, &c, &v, &fd()).unwrap();

        let (om1, om2) = dense.omega_terms(&v);
        e_om1 = e_om1.max((acc.omega1 - om1).abs() / om1.abs().max(1e-300));
        e_om2 = e_om2.max((acc.omega2 - om2).abs() / om2.abs().max(1e-300));
        e_acc = e_acc.max(rel(&acc.accel, &dense.closed_form_acceleration(&v)));
        // The Levi-Civita definition cancels terms of size |grad|^2 |H|, so
        // it is only compared where the metric is well conditioned.
        if c.w_sq <= 1e2 {
            e_def = e_def.max(rel(&acc.accel, &dense.acceleration(&v)));
            def_trials += 1;
        }

        let mut z = uniform(&mut rng, d, -1.0, 1.0);
        z.push(rng.random_range(-1.0..1.0));
        e_proj = e_proj.max(rel(&c.project_to_tangent(&z), &dense_projection(&c, &z).unwrap()));

        let t = rng.random_range(0.05..0.5);
        let jet = taylor_coefficients(&p, &c, &v, &fd(), JetModel::Geodesic).unwrap();
        let dst = GeometryCache::build(&p, &warp, retract(&jet, t), &fd()).unwrap();
        let tr = vector_transport(&c, &dst, &v, t).unwrap();
        e_tr = e_tr.max(rel(&tr.coords, &dense_transport(&c, &dst, t).unwrap()));
    }
    let pass = e_om1 <= 1e-8 && e_om2 <= 1e-8 && e_acc <= 1e-8 && e_def <= 1e-8 && def_trials > 0 && e_proj <= 1e-10 && e_tr <= 1e-10;
    (
        pass,
        format!(
            "200 trials, omega1 {e_om1:.1e}, omega2 {e_om2:.1e}, accel {e_acc:.1e} (definition {e_def:.1e} on {def_trials}), projection {e_proj:.1e}, transport {e_tr:.1e}"
        ),
    )
}

fn euclidean_limit() -> (bool, String) {
    let d = 5;
    let p = Quadratic::new(d).unwrap();
    let warp = WarpConfig::new(1e12).unwrap();
    let cfg = RcgConfig::default();
    let theta0 = vec![1.0; d];
    let full = euclidean_cg_baseline(&p, theta0.clone(), &cfg).unwrap();
    let expected = full.trace.len().min(10);
    let rcg = Rcg::new(&p, warp, cfg).unwrap();
    let mut state = rcg.init(theta0.clone()).unwrap();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for k in 1..=10 {
        if rcg.step(&mut state).is_none() {
            break;
        }
        let base = euclidean_cg_baseline(&p, theta0.clone(), &RcgConfig { max_iters: k, ..cfg }).unwrap();
        if base.trace.len() != k {
            worst = f64::INFINITY;
            break;
        }
        worst = worst.max(norm(&sub(state.theta(), &base.theta)) / norm(&base.theta).max(1.0));
        compared += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut e_tr = 0.0f64;
    for _ in 0..100 {
        let theta = uniform(&mut rng, d, -2.0, 2.0);
        let v = uniform(&mut rng, d, -1.0, 1.0);
        let t = rng.random_range(0.01..1.0);
        let src = GeometryCache::build(&p, &warp, theta, &fd()).unwrap();
        let jet = taylor_coefficients(&p, &src, &v, &fd(), JetModel::Geodesic).unwrap();
        let dst = GeometryCache::build(&p, &warp, retract(&jet, t), &fd()).unwrap();
        let tr = vector_transport(&src, &dst, &v, t).unwrap();
        e_tr = e_tr.max(rel(&tr.coords, &v));
    }
    let pass = compared == expected && expected > 0 && worst <= 1e-8 && e_tr <= 1e-8;
    (
        pass,
        format!("D={d}, {compared} of {expected} iterates, max deviation {worst:.1e}, transport {e_tr:.1e}"),
    )
}

struct Runs {
    runs: Vec<(Problem, RcgRun, Duration)>,
    cfg: RcgConfig,
}

fn run_all(kind: ProblemKind, dims: &[usize], cfg: RcgConfig) -> Vec<(Problem, RcgRun, Duration)> {
    dims.iter()
        .map(|&d| {
            let p = Problem::new(kind, d).unwrap();
            let clock = Instant::now();
            let out = rcg::run(&p, WarpConfig::new(kind.default_sigma_sq()).unwrap(), p.initial_point(), cfg).unwrap();
            (p, out, clock.elapsed())
        })
        .collect()
}

fn last(run: &RcgRun) -> &IterationTrace {
    run.trace.last().expect("at least one iteration")
}

fn squiggle_convergence(runs: &[(Problem, RcgRun, Duration)]) -> (bool, String) {
    let mut pass = true;
    let mut detail = Vec::new();
    for (p, run, _) in runs {
        let gap = (run.state.value() - p.max_value()).abs();
        let ok = matches!(run.stop_reason(), StopReason::SmallDeltaF | StopReason::SmallGrad)
            && run.trace.len() <= 8000
            && gap <= 1e-4;
        pass &= ok;
        detail.push(format!("D={} {} in {} iters, gap {gap:.1e}", p.dim(), run.stop_reason(), run.trace.len()));
    }
    let total: Duration = runs.iter().map(|r| r.2).sum();
    (pass && total.as_secs_f64() < 60.0, detail.join("; "))
}

fn rosenbrock_convergence(runs: &[(Problem, RcgRun, Duration)]) -> (bool, String) {
    let mut pass = true;
    let mut detail = Vec::new();
    for (p, run, _) in runs {
        let g = last(run).grad_norm_riem;
        let f = run.state.value();
        let basin = p.classify(f);
        pass &= run.trace.len() <= 8000 && g < 1e-4;
        if p.dim() == 2 {
            pass &= f.abs() <= 1e-3;
        }
        let basin = match basin {
            Basin::Global => "global",
            Basin::Local => "local",
            Basin::Other => "other",
        };
        detail.push(format!("D={} {} in {} iters, f {f:.1e}, |grad| {g:.1e}, {basin} basin", p.dim(), run.stop_reason(), run.trace.len()));
    }
    let total: Duration = runs.iter().map(|r| r.2).sum();
    (pass && total.as_secs_f64() < 60.0, detail.join("; "))
}

fn wolfe_audit(all: &Runs) -> (bool, String) {
    let wolfe = all.cfg.wolfe();
    let mut steps = 0;
    let mut bad = 0;
    for (p, run, _) in &all.runs {
        for rec in &run.trace {
            let audit = rec.audit.as_ref().expect("audit recorded");
            let s = sample_curve(p, &audit.jet, rec.t_k).unwrap();
            if !wolfe.accepts(audit.value0, audit.slope0, rec.t_k, s.value(), s.slope) {
                bad += 1;
            }
            if (s.value() - rec.f).abs() > 0.0 {
                bad += 1;
            }
            steps += 1;
        }
    }
    (bad == 0 && steps > 0, format!("{steps} accepted steps, {bad} violations"))
}

fn budget(all: &Runs) -> (bool, String) {
    let mut max_hvp = 0;
    let mut bad_builds = 0;
    let mut steps = 0;
    for (_, run, _) in &all.runs {
        for rec in &run.trace {
            max_hvp = max_hvp.max(rec.evals.hvps);
            if rec.cache_builds != 1 {
                bad_builds += 1;
            }
            steps += 1;
        }
    }
    (max_hvp <= 6 && bad_builds == 0, format!("{steps} iterations, max hvp per iteration {max_hvp}, {bad_builds} with cache builds != 1"))
}

fn central_gradient<O: Objective>(obj: &O, theta: &[f64]) -> Vec<f64> {
    (0..theta.len())
        .map(|i| {
            let h = f64::EPSILON.cbrt() * theta[i].abs().max(1.0);
            let mut plus = theta.to_vec();
            let mut minus = theta.to_vec();
            plus[i] += h;
            minus[i] -= h;
            (obj.value(&plus) - obj.value(&minus)) / (2.0 * h)
        })
        .collect()
}

fn derivative_hygiene() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut e_grad, mut e_hvp) = (0.0f64, 0.0f64);
    let mut points = 0;
    for kind in ProblemKind::ALL {
        for d in [2, 10, 50] {
            let p = Problem::new(kind, d).unwrap();
            for _ in 0..50 {
                let theta = uniform(&mut rng, d, -2.0, 2.0);
                let v = uniform(&mut rng, d, -1.0, 1.0);
                let g = p.gradient(&theta);
                e_grad = e_grad.max(rel(&central_gradient(&p, &theta), &g));
                let h = f64::EPSILON.cbrt() * norm(&theta).max(1.0) / norm(&v);
                let fd_hv: Vec<f64> = p
                    .gradient(&add_scaled(&theta, h, &v))
                    .iter()
                    .zip(p.gradient(&add_scaled(&theta, -h, &v)))
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect();
                e_hvp = e_hvp.max(rel(&fd_hv, &p.hvp(&theta, &v).expect("analytic hvp")));
                points += 1;
            }
        }
    }
    (e_grad <= 1e-5 && e_hvp <= 1e-5, format!("{points} points, gradient {e_grad:.1e}, hvp {e_hvp:.1e}"))
}

fn timed(f: impl FnOnce() -> (bool, String)) -> (bool, String, Duration) {
    let clock = Instant::now();
    let (pass, detail) = f();
    (pass, detail, clock.elapsed())
}

#[test]
fn acceptance() {
    let mut report = Report {
        lines: Vec::new(),
        failed: 0,
    };

    let (pass, detail, t) = timed(metric_algebra);
    report.record(1, "metric algebra", pass && t.as_secs_f64() < 10.0, detail, t);

    let (pass, detail, t) = timed(normal_vector);
    report.record(2, "normal vector", pass, detail, t);

    let (pass, detail, t) = timed(jet_orders);
    report.record(3, "geodesic jet order", pass && t.as_secs_f64() < 30.0, detail, t);

    let (pass, detail, t) = timed(dense_equivalence);
    report.record(4, "matrix-free vs dense", pass, detail, t);

    let (pass, detail, t) = timed(euclidean_limit);
    report.record(5, "Euclidean limit", pass, detail, t);

    let cfg = RcgConfig {
        record_audit: true,
        ..RcgConfig::default()
    };
    let squiggle = run_all(ProblemKind::Squiggle, &[2, 10, 50], cfg);
    let rosenbrock = run_all(ProblemKind::Rosenbrock, &[2, 10], cfg);

    let (pass, detail) = squiggle_convergence(&squiggle);
    report.record(6, "squiggle convergence", pass, detail, squiggle.iter().map(|r| r.2).sum());

    let (pass, detail) = rosenbrock_convergence(&rosenbrock);
    report.record(7, "Rosenbrock convergence", pass, detail, rosenbrock.iter().map(|r| r.2).sum());

    let all = Runs {
        runs: squiggle.into_iter().chain(rosenbrock).collect(),
        cfg,
    };
    let (pass, detail, t) = timed(|| wolfe_audit(&all));
    report.record(8, "Wolfe certification", pass, detail, t);

    let (pass, detail, t) = timed(|| budget(&all));
    report.record(9, "evaluation budget", pass, detail, t);

    let (pass, detail, t) = timed(derivative_hygiene);
    report.record(10, "derivative hygiene", pass, detail, t);

    assert_eq!(report.failed, 0, "failing criteria:\n{}", report.lines.join("\n"));
}
