use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use warped_rcg::geometry::{taylor_coefficients, GeometryCache, JetModel, WarpConfig};
use warped_rcg::linalg::{add_scaled, norm, sub};
use warped_rcg::objective::{hvp_or_fallback, FdConfig, FnObjective, Objective};
use warped_rcg::problems::{Problem, ProblemKind, Squiggle};
use warped_rcg::retraction::{directional_value_and_slope, retract};

fn points(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|_| {
            let theta = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            (theta, v)
        })
        .collect()
}

#[test]
fn fallback_hvp_agrees_with_analytic() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for kind in ProblemKind::ALL {
        for d in [2, 10, 50] {
            let p = Problem::new(kind, d).unwrap();
            let plain = FnObjective::new(d, |t: &[f64]| p.value(t), |t: &[f64]| p.gradient(t));
            for (theta, v) in points(&mut rng, d, 100) {
                let analytic = p.hvp(&theta, &v).unwrap();
                let fd = hvp_or_fallback(&plain, &theta, &v, &FdConfig::default()).unwrap();
                let err = norm(&sub(&fd, &analytic)) / norm(&analytic).max(1e-12);
                assert!(err < 1e-5, "{kind} D={d}: {err:e}");
            }
        }
    }
}

#[test]
fn curve_slope_matches_central_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let p = Problem::new(ProblemKind::Rosenbrock, 5).unwrap();
    let warp = WarpConfig::new(ProblemKind::Rosenbrock.default_sigma_sq()).unwrap();
    let fd = FdConfig::default();
    let (theta, v) = points(&mut rng, 5, 1).remove(0);
    let cache = GeometryCache::build(&p, &warp, theta, &fd).unwrap();
    let jet = taylor_coefficients(&p, &cache, &v, &fd, JetModel::Geodesic).unwrap();
    for _ in 0..10 {
        let t = rng.random_range(0.0..0.5);
        let (_, slope) = directional_value_and_slope(&p, &jet, t).unwrap();
        let h = 1e-6;
        let central = (p.value(&retract(&jet, t + h)) - p.value(&retract(&jet, t - h))) / (2.0 * h);
        assert!((slope - central).abs() <= 1e-5 * slope.abs().max(1.0), "t={t}: {slope} vs {central}");
    }
}

#[test]
fn squiggle_maximum_closed_form() {
    for d in [2, 10, 100] {
        let p = Squiggle::new(d).unwrap();
        let log_det = 30f64.ln() + (d - 1) as f64 * 0.5f64.ln();
        let expected = -(d as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        let at_zero = p.value(&vec![0.0; d]);
        assert!((at_zero - expected).abs() <= 1e-12 * expected.abs(), "D={d}");
        assert!((p.max_value() - expected).abs() <= 1e-12 * expected.abs());
        assert!(norm(&p.gradient(&vec![0.0; d])) == 0.0);
    }
}

#[test]
fn rosenbrock_gradient_vanishes_at_global_maximizer() {
    for d in [2, 3, 10] {
        let p = Problem::new(ProblemKind::Rosenbrock, d).unwrap();
        let star = p.maximizer();
        assert_eq!(p.value(&star), 0.0);
        assert_eq!(norm(&p.gradient(&star)), 0.0);
        let nudged = add_scaled(&star, 1e-3, &vec![1.0; d]);
        assert!(p.value(&nudged) < 0.0);
    }
}
