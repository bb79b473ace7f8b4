use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, SymmetricEigen};

use steptuned::optimizers::{
    self, iters_per_epoch, run, Algorithm, Budget, RandomBatches, RunConfig, RunStatus, StepTunedSgd,
    Stepper, TraceOptions,
};
use steptuned::oracle::{batch_grad, full_grad};
use steptuned::params::ParamVector;
use steptuned::problems::{generate_regression, QuadraticProblem};
use steptuned::rng::{init_theta, RngStream};
use steptuned::schedule::{bb_raw_step, clamp_step, DecayMode, TunerConfig};

fn tuner(alpha: f64) -> TunerConfig {
    TunerConfig {
        alpha,
        ..TunerConfig::default()
    }
}

fn random_spd(rng: &mut RngStream, dim: usize, sign: f64) -> (QuadraticProblem, f64, f64) {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.standard_normal());
    let h = (m.transpose() * &m + DMatrix::identity(dim, dim) * 0.1) * sign;
    let h = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(h.clone()).eigenvalues;
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let flat: Vec<f64> = (0..dim * dim).map(|i| h[(i / dim, i % dim)]).collect();
    (QuadraticProblem::from_matrix(dim, flat, 1).unwrap(), lo, hi)
}

#[test]
fn full_batch_tuned_two_iterations_by_hand() {
    let q = QuadraticProblem::isotropic(2, 1.0, 1);
    let t = optimizers::run_full_batch_tuned(&q, &[1.0, 1.0], 0.1, 2.0, 2).unwrap();
    assert_abs_diff_eq!(t.final_theta[0], 0.81, epsilon = 1e-15);
    assert_abs_diff_eq!(t.final_theta[1], 0.81, epsilon = 1e-15);
    assert_abs_diff_eq!(t.records[1].gamma.unwrap(), 1.0, epsilon = 1e-14);
    assert_eq!(t.records[0].eta, Some(0.1));
}

#[test]
fn step_tuned_one_iteration_by_hand() {
    let q = QuadraticProblem::isotropic(1, 1.0, 1);
    let mut s = StepTunedSgd::new(&q, ParamVector::from_vec(vec![1.0]), tuner(0.1), 1);
    let mut batches = RandomBatches::new(0, 1, 1).unwrap();
    let info = s.step(0, &mut batches).unwrap();
    assert_eq!(info.gamma, Some(1.0));
    assert_abs_diff_eq!(s.half_iterate().unwrap()[0], 0.9, epsilon = 1e-15);
    assert_abs_diff_eq!(s.theta()[0], 0.81, epsilon = 1e-15);
    let up = s.last_update().unwrap();
    // Ĝ₀ is Δg₀ itself
    assert_eq!(up.g_hat.as_slice(), s.last_delta_g().unwrap().as_slice());
    assert_abs_diff_eq!(up.inner, 0.01, epsilon = 1e-15);
    assert_abs_diff_eq!(s.state().gamma, 1.0, epsilon = 1e-14);
}

#[test]
fn beta_zero_tunes_on_the_latest_half_step_pair() {
    let p = generate_regression(2, 60, 6).unwrap();
    let cfg = TunerConfig {
        alpha: 0.7,
        beta: 0.0,
        ..TunerConfig::default()
    };
    let mut s = StepTunedSgd::new(&p, init_theta(2, 6), cfg, iters_per_epoch(60, 60));
    let mut batches = RandomBatches::new(2, 60, 60).unwrap();
    for k in 0..20 {
        let before = s.theta().clone();
        s.step(k, &mut batches).unwrap();
        let half = s.half_iterate().unwrap();
        let dtheta = half.sub(&before);
        let dg = full_grad(&p, half).unwrap().sub(&full_grad(&p, &before).unwrap());
        let expected = clamp_step(bb_raw_step(&dtheta, &dg, cfg.nu), cfg.m_lo, cfg.effective_hi());
        assert_eq!(s.state().gamma, expected, "k = {k}");
    }
}

#[test]
fn sgd_matches_first_half_step() {
    let p = generate_regression(5, 80, 4).unwrap();
    let theta0 = init_theta(9, 4);
    let sgd = optimizers::run_sgd(&p, &theta0, 0.3, 0.001, 8, 1, 11, DecayMode::PerIter).unwrap();
    let mut s = StepTunedSgd::new(&p, ParamVector::from_vec(theta0.to_vec()), tuner(0.3), 10);
    s.step(0, &mut RandomBatches::new(11, 80, 8).unwrap()).unwrap();
    assert_eq!(sgd.final_theta, *s.half_iterate().unwrap());
}

#[test]
fn sgd_contracts_on_noiseless_quadratic() {
    let q = QuadraticProblem::isotropic(1, 1.0, 1);
    let t = optimizers::run_sgd(&q, &[1.0], 0.1, 0.001, 1, 50, 0, DecayMode::PerIter).unwrap();
    let mut expected = 1.0;
    for (k, r) in t.records.iter().enumerate() {
        if k > 0 {
            assert!(r.loss < t.records[k - 1].loss);
        }
        assert_abs_diff_eq!(r.loss, 0.5 * expected * expected, epsilon = 1e-15);
        expected *= 1.0 - 0.1 / ((k + 1) as f64).powf(0.501);
    }
}

#[test]
fn bb_quotient_within_rayleigh_bounds() {
    let mut rng = RngStream::new(77);
    for _ in 0..5 {
        let (q, lo, hi) = random_spd(&mut rng, 5, 1.0);
        let theta0: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
        let t = optimizers::run_full_batch_tuned(&q, &theta0, 0.05, 1e9, 15).unwrap();
        for r in t.records.iter().skip(1).filter(|r| r.curv_inner.is_some_and(|c| c > 0.0)) {
            let g = r.gamma.unwrap();
            assert!(g >= 1.0 / hi - 1e-9 && g <= 1.0 / lo + 1e-9, "{g} outside [{}, {}]", 1.0 / hi, 1.0 / lo);
        }
    }
}

#[test]
fn concave_quadratic_always_uses_nu() {
    let mut rng = RngStream::new(3);
    let (q, _, _) = random_spd(&mut rng, 4, -1.0);
    let t = optimizers::run_full_batch_tuned(&q, &[1.0, -1.0, 0.5, 0.2], 0.1, 5.0, 20).unwrap();
    let gammas: Vec<f64> = t.records.iter().skip(1).filter_map(|r| r.gamma).collect();
    assert_eq!(gammas, vec![5.0; 19]);
    // losses keep decreasing towards -∞
    assert!(t.records.windows(2).all(|w| w[1].loss < w[0].loss));
}

#[test]
fn bb_abs_matches_tuned_on_convex_quadratic() {
    let q = QuadraticProblem::diagonal(&[1.0, 4.0, 9.0], 1);
    let a = optimizers::run_full_batch_tuned(&q, &[1.0, 1.0, 1.0], 0.2, 2.0, 30).unwrap();
    let b = optimizers::run_bb_abs(&q, &[1.0, 1.0, 1.0], 0.2, 1, 30, 0).unwrap();
    assert_eq!(a.records, b.records);
}

#[test]
fn zero_function_freezes_every_method() {
    let q = QuadraticProblem::zero(3, 4);
    let theta0 = [0.3, -1.0, 2.0];
    for alg in Algorithm::ALL {
        let cfg = RunConfig::new(alg, tuner(0.5), Budget::Iterations(10)).with_batch_size(2);
        let t = match run(&q, &theta0, &cfg) {
            Ok(t) => t,
            // no Hessian-vector products on this problem
            Err(steptuned::Error::Unsupported(_)) => continue,
            Err(e) => panic!("{alg}: {e}"),
        };
        assert_eq!(t.final_theta.as_slice(), &theta0, "{alg}");
        assert!(t.records.iter().all(|r| r.loss == 0.0));
    }
}

#[test]
fn stationary_point_absorbs_sgd() {
    // J_n(θ) = ½(θ − c_n)² with mean c = 0: the batch gradient at 0 is
    // nonzero, but a full batch sees the stationary point
    let q = QuadraticProblem::new(
        1,
        vec![(vec![1.0], vec![-1.0]), (vec![1.0], vec![1.0])],
    )
    .unwrap();
    let t = optimizers::run_sgd(&q, &[0.0], 0.5, 0.001, 2, 20, 0, DecayMode::PerIter).unwrap();
    assert_eq!(t.final_theta.as_slice(), &[0.0]);
    assert_eq!(full_grad(&q, &[0.0]).unwrap().as_slice(), &[0.0]);
}

#[test]
fn per_epoch_decay_changes_only_at_boundaries() {
    let p = generate_regression(1, 40, 3).unwrap();
    let cfg = TunerConfig {
        alpha: 0.5,
        decay_mode: DecayMode::PerEpoch,
        ..TunerConfig::default()
    };
    let t = optimizers::run_sgd(&p, &[0.0; 3], cfg.alpha, cfg.delta, 10, 12, 0, cfg.decay_mode).unwrap();
    let etas: Vec<f64> = t.records.iter().filter_map(|r| r.eta).collect();
    assert_eq!(etas.len(), 12);
    for k in 1..12 {
        if k % 4 == 0 {
            assert!(etas[k] < etas[k - 1]);
        } else {
            assert_eq!(etas[k], etas[k - 1]);
        }
    }
}

#[test]
fn cost_accounting_per_algorithm() {
    let p = generate_regression(0, 100, 5).unwrap();
    let theta0 = init_theta(0, 5);
    let iterations = 25;
    let b = 10;
    let ipe = iters_per_epoch(100, b);
    for (alg, per_iter) in [
        (Algorithm::StepTunedSgd, 2),
        (Algorithm::Sgd, 1),
        (Algorithm::Adam, 1),
        (Algorithm::Rmsprop, 1),
        (Algorithm::StochasticGv, 1),
        (Algorithm::ExpectedGv, 1),
        (Algorithm::ExactGv, 1 + ipe),
        (Algorithm::BbAbs, 1),
    ] {
        let cfg = RunConfig::new(alg, tuner(0.1), Budget::Iterations(iterations)).with_batch_size(b);
        let t = run(&p, &theta0, &cfg).unwrap();
        assert_eq!(t.status, RunStatus::Completed);
        assert_eq!(t.grad_evals, per_iter * iterations, "{alg}");
        for r in &t.records {
            assert_eq!(r.grad_evals, per_iter * r.k, "{alg}");
        }
    }
    // full-batch methods see one batch-equivalent per gradient
    let t = optimizers::run_armijo_gd(&p, &theta0, 1.0, 1e-4, 0.5, iterations).unwrap();
    assert_eq!(t.grad_evals, iterations);
    assert!(t.fn_evals >= iterations);
}

#[test]
fn epochs_and_grad_evals_columns() {
    let p = generate_regression(0, 95, 4).unwrap();
    let cfg = RunConfig::new(Algorithm::StepTunedSgd, tuner(0.2), Budget::Epochs(3))
        .with_batch_size(10)
        .with_trace(TraceOptions {
            record_every: 1,
            grad_norm_every: Some(10),
            keep_batches: true,
        });
    let t = run(&p, &[0.0; 4], &cfg).unwrap();
    assert_eq!(t.iters_per_epoch, 10);
    assert_eq!(t.iterations, 30);
    assert_eq!(t.batches.as_ref().unwrap().len(), 30);
    for r in &t.records {
        assert_eq!(r.epoch, r.k as f64 / 10.0);
        assert_eq!(r.grad_norm_sq.is_some(), r.k % 10 == 0);
    }
}

#[test]
fn seeds_reproduce_runs_and_batches_are_independent_of_algorithm() {
    let p = generate_regression(4, 50, 3).unwrap();
    let cfg = RunConfig::new(Algorithm::StepTunedSgd, tuner(0.5), Budget::Iterations(40))
        .with_batch_size(5)
        .with_seed(8)
        .with_trace(TraceOptions {
            keep_batches: true,
            ..TraceOptions::default()
        });
    let a = run(&p, &[0.1; 3], &cfg).unwrap();
    let b = run(&p, &[0.1; 3], &cfg).unwrap();
    assert_eq!(a.records, b.records);
    let mut sgd = cfg.clone();
    sgd.algorithm = Algorithm::Sgd;
    let c = run(&p, &[0.1; 3], &sgd).unwrap();
    assert_eq!(a.batches, c.batches);
}

#[test]
fn divergence_is_reported_not_raised() {
    let q = QuadraticProblem::isotropic(2, 100.0, 1);
    let t = optimizers::run_sgd(&q, &[1.0, 1.0], 50.0, 0.001, 1, 1000, 0, DecayMode::PerIter).unwrap();
    assert_eq!(t.status, RunStatus::Diverged);
    assert!(t.iterations < 1000);
    assert_eq!(t.score(), f64::INFINITY);
}

#[test]
fn adaptive_methods_make_progress() {
    let p = generate_regression(0, 200, 10).unwrap();
    let theta0 = init_theta(1, 10);
    let start = steptuned::oracle::eval_loss(&p, &theta0).unwrap();
    for t in [
        optimizers::run_adam(&p, &theta0, 0.01, 20, 300, 0).unwrap(),
        optimizers::run_rmsprop(&p, &theta0, 0.01, 20, 300, 0).unwrap(),
    ] {
        assert!(t.final_loss().unwrap() < start, "{}", t.algorithm);
    }
}

#[test]
fn expected_gv_numerators_agree() {
    let p = generate_regression(6, 40, 4).unwrap();
    let mut cfg = RunConfig::new(Algorithm::ExpectedGv, tuner(0.5), Budget::Iterations(30)).with_batch_size(8);
    let squared = run(&p, &[0.2; 4], &cfg).unwrap();
    cfg.expected_gv_numerator = optimizers::ExpectedGvNumerator::Homogeneous;
    let homogeneous = run(&p, &[0.2; 4], &cfg).unwrap();
    for (a, b) in squared.records.iter().zip(&homogeneous.records) {
        assert_abs_diff_eq!(a.gamma.unwrap_or(0.0), b.gamma.unwrap_or(0.0), epsilon = 1e-9);
    }
}

#[test]
fn expected_gv_needs_hessian_products() {
    struct NoHvp;
    impl steptuned::Problem for NoHvp {
        fn num_samples(&self) -> usize {
            2
        }
        fn dim(&self) -> usize {
            1
        }
        fn sample_loss(&self, _n: usize, t: &[f64]) -> f64 {
            t[0] * t[0]
        }
        fn sample_grad(&self, _n: usize, t: &[f64], out: &mut [f64]) {
            out[0] = 2.0 * t[0];
        }
    }
    let cfg = RunConfig::new(Algorithm::ExpectedGv, tuner(0.1), Budget::Iterations(3)).with_batch_size(1);
    assert!(matches!(run(&NoHvp, &[1.0], &cfg), Err(steptuned::Error::Unsupported(_))));
}

#[test]
fn minibatch_gradient_is_used_per_iteration() {
    let p = generate_regression(1, 30, 2).unwrap();
    let cfg = RunConfig::new(Algorithm::Sgd, tuner(0.2), Budget::Iterations(5))
        .with_batch_size(3)
        .with_seed(4)
        .with_trace(TraceOptions {
            keep_batches: true,
            ..TraceOptions::default()
        });
    let t = run(&p, &[0.5, -0.5], &cfg).unwrap();
    let mut theta = ParamVector::from_vec(vec![0.5, -0.5]);
    for (k, b) in t.batches.as_ref().unwrap().iter().enumerate() {
        let eta = cfg.tuner.decay_at(k as u64, t.iters_per_epoch);
        theta = theta.step(eta, &batch_grad(&p, &theta, b).unwrap());
    }
    assert_eq!(theta, t.final_theta);
}
