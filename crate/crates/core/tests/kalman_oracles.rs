//! Kalman recursion checked against independent brute-force routes.

use nalgebra::{DMatrix, DVector};
use oikf_core::kalman::initial_belief;
use oikf_core::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Plain triple-loop matrix product.
fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

#[test]
fn wna_prediction_matches_loop_arithmetic() {
    let wna = WnaSpec {
        tau: 1.0,
        q_sq: 0.1,
        r_sq: 1.0,
        horizon: 1,
    };
    let model = wna_model(&wna).unwrap();
    let post = GaussianBelief::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    let prior = predict(&model, &post).unwrap();

    let f = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
    let q = [vec![0.1 / 3.0, 0.05], vec![0.05, 0.1]];
    let p = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let fp = matmul(&f, &p);
    let fpf = matmul(&fp, &transpose(&f));
    for i in 0..2 {
        for j in 0..2 {
            let expected = fpf[i][j] + q[i][j];
            assert!((prior.cov[(i, j)] - expected).abs() < 1e-15, "{i}{j}");
        }
    }
    // By hand: [[2 + 1/30, 1.05], [1.05, 1.1]].
    assert!((prior.cov[(0, 0)] - (2.0 + 0.1 / 3.0)).abs() < 1e-15);
    assert!((prior.cov[(0, 1)] - 1.05).abs() < 1e-15);
    assert!((prior.cov[(1, 1)] - 1.1).abs() < 1e-15);
}

#[test]
fn observation_prediction_matches_joint_gaussian_marginal() {
    // (x, y) with y = H x + z is jointly Gaussian with covariance
    // [[Σ, Σ Hᵀ], [H Σ, H Σ Hᵀ + R]] = A diag(Σ, R) Aᵀ for A = [[I, 0], [H, I]].
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let h = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let sigma = &a * a.transpose() + DMatrix::identity(2, 2) * 0.1;
        let r_sq = DVector::from_fn(2, |_, _| rng.random_range(0.1..3.0));
        let mean = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
        let model = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            h.clone(),
            DMatrix::zeros(2, 2),
            r_sq.clone(),
        )
        .unwrap();
        let prior = GaussianBelief::new(mean.clone(), sigma.clone()).unwrap();
        let op = predict_observation(&model, &prior, model.r()).unwrap();

        let mut lift = DMatrix::zeros(4, 4);
        lift.view_mut((0, 0), (2, 2)).copy_from(&DMatrix::identity(2, 2));
        lift.view_mut((2, 0), (2, 2)).copy_from(&h);
        lift.view_mut((2, 2), (2, 2)).copy_from(&DMatrix::identity(2, 2));
        let mut base = DMatrix::zeros(4, 4);
        base.view_mut((0, 0), (2, 2)).copy_from(&sigma);
        base.view_mut((2, 2), (2, 2)).copy_from(&DMatrix::from_diagonal(&r_sq));
        let joint = &lift * base * lift.transpose();
        let joint_mean = &lift * DVector::from_column_slice(&[mean[0], mean[1], 0.0, 0.0]);

        assert!((op.cov.clone() - joint.view((2, 2), (2, 2))).amax() < 1e-12);
        assert!((op.mean.clone() - joint_mean.rows(2, 2)).amax() < 1e-12);
    }
}

#[test]
fn gain_matches_batch_least_squares() {
    // Two-step window: x0 ~ N(m0, P0), x1 = F x0 + e, y1 = H x1 + z.
    // Minimizing the stacked weighted least-squares cost over (x0, x1)
    // gives x̂1 affine in y1; its slope is the Kalman gain.
    let wna = WnaSpec {
        tau: 1.0,
        q_sq: 0.1,
        r_sq: 4.0,
        horizon: 1,
    };
    let model = wna_position_model(&wna).unwrap();
    let m0 = DVector::from_column_slice(&[1.0, -0.5]);
    let p0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7]);

    let (f, h, q) = (model.f().clone(), model.h().clone(), model.q().clone());
    let (p0i, qi) = (p0.clone().try_inverse().unwrap(), q.clone().try_inverse().unwrap());
    let ri = 1.0 / wna.r_sq;
    let solve = |y: f64| -> DVector<f64> {
        // Normal equations for z = (x0, x1).
        let mut a = DMatrix::zeros(4, 4);
        let mut b = DVector::zeros(4);
        let ftqi = f.transpose() * &qi;
        a.view_mut((0, 0), (2, 2)).copy_from(&(&p0i + &ftqi * &f));
        a.view_mut((0, 2), (2, 2)).copy_from(&(-&ftqi));
        a.view_mut((2, 0), (2, 2)).copy_from(&(-(&qi * &f)));
        a.view_mut((2, 2), (2, 2)).copy_from(&(&qi + h.transpose() * &h * ri));
        b.rows_mut(0, 2).copy_from(&(&p0i * &m0));
        b.rows_mut(2, 2).copy_from(&(h.transpose() * ri * y));
        a.lu().solve(&b).unwrap().rows(2, 2).into_owned()
    };
    let slope = solve(1.0) - solve(0.0);

    let post = GaussianBelief::new(m0.clone(), p0.clone()).unwrap();
    let prior = predict(&model, &post).unwrap();
    let op = predict_observation(&model, &prior, model.r()).unwrap();
    let k = gain(&prior, &model, &op).unwrap();
    assert!((k.matrix().column(0) - &slope).amax() < 1e-12, "{k:?} vs {slope}");

    // And the posterior mean itself agrees for an arbitrary observation.
    let y = DVector::from_element(1, 3.7);
    let posterior = update(&prior, &op, &k, &y).unwrap();
    assert!((posterior.mean - solve(3.7)).amax() < 1e-12);
}

/// Scalar random walk Riccati fixed point, found by bisection on
/// `g(P) = P − (P + q) r / (P + q + r)`.
fn scalar_riccati(q: f64, r: f64) -> f64 {
    let g = |p: f64| p - (p + q) * r / (p + q + r);
    let (mut lo, mut hi) = (0.0, r);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn scalar_random_walk_hits_riccati_mse() {
    let (q, r) = (0.5, 2.0);
    let p_inf = scalar_riccati(q, r);
    let closed = {
        let prior = (q + (q * q + 4.0 * q * r).sqrt()) / 2.0;
        prior * r / (prior + r)
    };
    assert!((p_inf - closed).abs() < 1e-12);

    let model = LinearGaussianModel::with_diagonal_r(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, q),
        DVector::from_element(1, r),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut sum, mut count) = (0.0, 0usize);
    for _ in 0..50 {
        let mut x = 0.0;
        let mut post = initial_belief(&model, DVector::zeros(1), Some(p_inf)).unwrap();
        for _ in 0..1000 {
            x += q.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let y = x + r.sqrt() * rng.sample::<f64, _>(StandardNormal);
            post = kf_step(&model, &post, &DVector::from_element(1, y)).unwrap().0;
            sum += (post.mean[0] - x).powi(2);
            count += 1;
        }
    }
    let mse = sum / count as f64;
    assert!((mse - p_inf).abs() / p_inf < 0.05, "mse {mse} vs {p_inf}");
}

#[test]
fn chi2_statistic_is_calibrated_inside_a_consistent_filter() {
    // Without gating feedback the normalized innovation of a matched KF is
    // χ²(n), so the 95% quantile is exceeded 5% of the time.
    let wna = WnaSpec {
        tau: 1.0,
        q_sq: 0.1,
        r_sq: 1.0,
        horizon: 20_001,
    };
    let model = wna_model(&wna).unwrap();
    let traj = generate(&model, &wna, &OutlierSpec::none(), 17).unwrap();
    let threshold = chi2_quantile(0.95, 2).unwrap();
    let mut post = initial_belief(&model, traj.state(0), None).unwrap();
    let mut exceed = 0;
    for t in 1..traj.len() {
        let prior = predict(&model, &post).unwrap();
        let op = predict_observation(&model, &prior, model.r()).unwrap();
        let y = traj.observation(t);
        if chi2_statistic(&(&y - &op.mean), &op.cov).unwrap() > threshold {
            exceed += 1;
        }
        post = kf_step(&model, &post, &y).unwrap().0;
    }
    let rate = exceed as f64 / (traj.len() - 1) as f64;
    assert!((rate - 0.05).abs() < 0.005, "{rate}");
}

fn arb_belief() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-10.0f64..10.0, 2),
        prop::collection::vec(-2.0f64..2.0, 4),
    )
}

proptest! {
    #[test]
    fn update_keeps_cov_psd_and_shrinks_trace(
        (mean, a) in arb_belief(),
        r in prop::collection::vec(0.01f64..10.0, 2),
        y in prop::collection::vec(-50.0f64..50.0, 2),
        h in prop::collection::vec(-3.0f64..3.0, 4),
    ) {
        let a = DMatrix::from_row_slice(2, 2, &a);
        let model = LinearGaussianModel::with_diagonal_r(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &h),
            DMatrix::identity(2, 2) * 0.01,
            DVector::from_vec(r),
        ).unwrap();
        let post = GaussianBelief::new(DVector::from_vec(mean), &a * a.transpose()).unwrap();
        let prior = predict(&model, &post).unwrap();
        let op = predict_observation(&model, &prior, model.r()).unwrap();
        let k = gain(&prior, &model, &op).unwrap();
        let next = update(&prior, &op, &k, &DVector::from_vec(y)).unwrap();
        prop_assert!(next.is_valid());
        prop_assert!(next.cov.trace() <= prior.cov.trace() + 1e-9);
        prop_assert_eq!(&next.cov, &next.cov.transpose());
    }
}
