mod common;

use common::{fixture, Rng};
use fegap_core::data::{DesignMatrices, SystemData};
use fegap_core::linalg::compensated_sum;
use fegap_core::normal::LN_2PI;
use fegap_core::spec::CoefKind;
use fegap_core::sure::{
    fgls_fit, fgls_fit_matrices, loglik_fixed, ols_fit, residual_covariance, ErrorCovariance,
    FglsOptions,
};
use fegap_core::synthetic::{simulate_dataset, TruthSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// `(X'X)⁻¹X'y` with compensated cross products and an explicit inverse.
fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let k = x.ncols();
    let n = x.nrows();
    let xtx = DMatrix::from_fn(k, k, |a, b| {
        compensated_sum((0..n).map(|i| x[(i, a)] * x[(i, b)]))
    });
    let xty = DVector::from_fn(k, |a, _| compensated_sum((0..n).map(|i| x[(i, a)] * y[i])));
    xtx.try_inverse().unwrap() * xty
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = Rng::new(200);
    let x = rng.design(200, 4);
    let y = &x * DVector::from_vec(vec![0.9, -0.1, 0.05, 0.3]) + rng.vector(200) * 0.2;
    let fit = ols_fit(&x, &y).unwrap();
    let oracle = normal_equations(&x, &y);
    assert!((&fit.beta - &oracle).amax() <= 1e-8);
    assert!((&fit.residuals - (&y - &x * &fit.beta)).amax() <= 1e-14);
}

#[test]
fn ols_rejects_underdetermined() {
    let x = DMatrix::from_element(2, 3, 1.0);
    assert!(ols_fit(&x, &DVector::zeros(2)).is_err());
}

#[test]
fn residual_covariance_examples() {
    let r = DVector::from_vec(vec![1.0, -1.0, 0.5]);
    assert!((residual_covariance(&r, &r).unwrap().rho - 1.0).abs() < 1e-15);
    let r2 = DVector::from_vec(vec![1.0, 1.0, 0.0]);
    let c = residual_covariance(&r, &r2).unwrap();
    assert_eq!((c.sigma12, c.rho), (0.0, 0.0));
    let c = residual_covariance(
        &DVector::from_vec(vec![1.0, -1.0]),
        &DVector::from_vec(vec![2.0, -2.0]),
    )
    .unwrap();
    assert_eq!(
        (c.sigma11, c.sigma22, c.sigma12, c.rho),
        (1.0, 4.0, 2.0, 1.0)
    );
    assert!(residual_covariance(&DVector::zeros(3), &r).is_err());
}

#[test]
fn loglik_examples() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let zero = DVector::from_element(1, 0.0);
    let ll = |y1: f64| {
        loglik_fixed(
            &one,
            &one,
            &DVector::from_element(1, y1),
            &DVector::from_element(1, 0.0),
            &zero,
            &zero,
            &ErrorCovariance::identity(),
        )
        .unwrap()
    };
    assert!((ll(0.0) + 1.837877).abs() < 1e-6);
    assert!((ll(1.0) + 1.837877 + 0.5).abs() < 1e-6);
    assert!((ll(0.0) + LN_2PI).abs() < 1e-15);
}

#[test]
fn loglik_matches_dense_oracle() {
    let mut rng = Rng::new(9);
    let (n, k) = (150, 3);
    let (x1, x2) = (rng.design(n, k), rng.design(n, k));
    let (y1, y2) = (rng.vector(n), rng.vector(n));
    let (b1, b2) = (rng.vector(k) * 0.3, rng.vector(k) * 0.3);
    let cov = ErrorCovariance::new(1.3, -0.4, 0.7).unwrap();
    let got = loglik_fixed(&x1, &x2, &y1, &y2, &b1, &b2, &cov).unwrap();

    let s: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[1.3, -0.4, -0.4, 0.7]);
    let sinv = s.clone().try_inverse().unwrap();
    let logdet = s.determinant().ln();
    let (e1, e2) = (&y1 - &x1 * &b1, &y2 - &x2 * &b2);
    let want = compensated_sum((0..n).map(|i| {
        let e = DVector::from_vec(vec![e1[i], e2[i]]);
        -0.5 * (e.transpose() * &sinv * &e)[0] - 0.5 * logdet - (2.0 * std::f64::consts::PI).ln()
    }));
    assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
}

#[test]
fn fgls_equals_ols_when_residuals_are_uncorrelated() {
    let mut rng = Rng::new(3);
    let n = 120;
    let (x1, x2) = (rng.design(n, 3), rng.design(n, 2));
    let joint = DMatrix::from_fn(n, 5, |i, j| if j < 3 { x1[(i, j)] } else { x2[(i, j - 3)] });
    let project_out = |v: DVector<f64>| {
        let qr = joint.clone().qr();
        let q = qr.q();
        &v - &q * (q.transpose() * &v)
    };
    let r1 = project_out(rng.vector(n));
    let mut r2 = project_out(rng.vector(n));
    r2 -= &r1 * (r1.dot(&r2) / r1.dot(&r1));
    let y1 = &x1 * DVector::from_vec(vec![1.0, 0.2, -0.3]) + &r1;
    let y2 = &x2 * DVector::from_vec(vec![0.5, 0.7]) + &r2;
    let fgls = fgls_fit_matrices(&x1, &x2, &y1, &y2).unwrap();
    assert!(fgls.cov.sigma12.abs() < 1e-12);
    assert!((&fgls.equations[0].coef - ols_fit(&x1, &y1).unwrap().beta).amax() <= 1e-8);
    assert!((&fgls.equations[1].coef - ols_fit(&x2, &y2).unwrap().beta).amax() <= 1e-8);
}

#[test]
fn fgls_recovers_correlation_and_gains_efficiency() {
    let mut truth = TruthSpec::from_path(fixture("recovery_truth.json")).unwrap();
    for eq in truth.spec.equations.iter_mut() {
        for t in eq.terms.iter_mut() {
            t.kind = CoefKind::Fixed;
        }
    }
    truth.random_sd = Default::default();
    truth.error.rho = 0.6;
    truth.n = 5000;
    let data = simulate_dataset(&truth).unwrap().system_data().unwrap();
    let fit = fgls_fit(&data, FglsOptions::default()).unwrap();
    assert!((fit.cov.rho - 0.6).abs() <= 0.05, "rho {}", fit.cov.rho);
    let (mut fgls_se, mut ols_se) = (0.0, 0.0);
    for e in 0..2 {
        let ols = ols_fit(&data.design.x[e], &data.y[e]).unwrap();
        // columns 1.. hold the equation-specific regressors
        for j in 1..3 {
            fgls_se += fit.equations[e].se.as_ref().unwrap()[j];
            ols_se += ols.se.as_ref().unwrap()[j];
        }
    }
    assert!(fgls_se <= ols_se, "{fgls_se} vs {ols_se}");
}

#[test]
fn dof_variant_inflates_variances() {
    let mut rng = Rng::new(4);
    let (x1, x2) = (rng.design(40, 3), rng.design(40, 2));
    let (y1, y2) = (rng.vector(40), rng.vector(40));
    let data = SystemData::new(DesignMatrices::fixed(x1, x2), y1, y2).unwrap();
    let ml = fgls_fit(&data, FglsOptions::default()).unwrap();
    let dof = fgls_fit(&data, FglsOptions { dof_adjusted: true }).unwrap();
    assert!(dof.cov.sigma11 > ml.cov.sigma11 && dof.cov.sigma22 > ml.cov.sigma22);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn noiseless_recovery(seed in any::<u64>(), b in prop::collection::vec(-2.0f64..2.0, 3)) {
        let mut rng = Rng::new(seed);
        let x = rng.design(30, 3);
        let beta = DVector::from_vec(b);
        let fit = ols_fit(&x, &(&x * &beta)).unwrap();
        prop_assert!((&fit.beta - &beta).amax() <= 1e-10);
        prop_assert!(fit.residuals.amax() <= 1e-12);
    }

    #[test]
    fn kruskal_equivalence(seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let x = rng.design(200, 5);
        let y1 = &x * rng.vector(5) + rng.vector(200);
        let y2 = &x * rng.vector(5) + rng.vector(200) * 0.5 + &y1 * 0.3;
        let fgls = fgls_fit_matrices(&x, &x, &y1, &y2).unwrap();
        prop_assert!((&fgls.equations[0].coef - ols_fit(&x, &y1).unwrap().beta).amax() <= 1e-8);
        prop_assert!((&fgls.equations[1].coef - ols_fit(&x, &y2).unwrap().beta).amax() <= 1e-8);
    }

    #[test]
    fn scale_equivariance(seed in any::<u64>(), lambda in 0.01f64..100.0) {
        let mut rng = Rng::new(seed);
        let (x1, x2) = (rng.design(60, 3), rng.design(60, 2));
        let y1 = &x1 * rng.vector(3) + rng.vector(60);
        let y2 = &x2 * rng.vector(2) + rng.vector(60) + &y1 * 0.2;
        let a = fgls_fit_matrices(&x1, &x2, &y1, &y2).unwrap();
        let b = fgls_fit_matrices(&x1, &x2, &(&y1 * lambda), &y2).unwrap();
        let scaled = &a.equations[0].coef * lambda;
        prop_assert!((&b.equations[0].coef - &scaled).amax() <= 1e-9 * scaled.amax().max(1.0));
        prop_assert!((&b.equations[1].coef - &a.equations[1].coef).amax() <= 1e-9);
        prop_assert!((b.cov.sd()[0] / a.cov.sd()[0] - lambda).abs() <= 1e-9 * lambda);
        prop_assert!((b.cov.rho - a.cov.rho).abs() <= 1e-9);
    }

    #[test]
    fn rho_is_a_correlation(seed in any::<u64>(), mix in -3.0f64..3.0) {
        let mut rng = Rng::new(seed);
        let (x1, x2) = (rng.design(25, 2), rng.design(25, 2));
        let y1 = rng.vector(25);
        let y2 = &y1 * mix + rng.vector(25) * 0.01;
        if let Ok(fit) = fgls_fit_matrices(&x1, &x2, &y1, &y2) {
            prop_assert!((-1.0..=1.0).contains(&fit.cov.rho));
            prop_assert!(fit.cov.density().is_ok());
        }
    }

    #[test]
    fn loglik_peaks_at_zero_residuals(seed in any::<u64>(), i in 0usize..20, delta in prop_oneof![-1.0f64..-1e-3, 1e-3f64..1.0]) {
        let mut rng = Rng::new(seed);
        let (x1, x2) = (rng.design(20, 2), rng.design(20, 2));
        let (b1, b2) = (rng.vector(2), rng.vector(2));
        let (y1, y2) = (&x1 * &b1, &x2 * &b2);
        let cov = ErrorCovariance::identity();
        let base = loglik_fixed(&x1, &x2, &y1, &y2, &b1, &b2, &cov).unwrap();
        let mut y1p = y1.clone();
        y1p[i] += delta;
        prop_assert!(loglik_fixed(&x1, &x2, &y1p, &y2, &b1, &b2, &cov).unwrap() < base);
    }
}
