//! Fixed-parameter estimation: per-equation OLS, residual covariance, and
//! two-step (Zellner) feasible-GLS seemingly unrelated regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{DesignMatrices, SystemData};
use crate::linalg::{qr_least_squares, CONDITION_WARN};
use crate::normal::LN_2PI;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "OLS")]
    Ols,
    #[serde(rename = "FGLS")]
    Fgls,
    #[serde(rename = "RP-SURE")]
    RpSure,
}

/// Bivariate error covariance `[[s11, s12], [s12, s22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCovariance {
    pub sigma11: f64,
    pub sigma12: f64,
    pub sigma22: f64,
    pub rho: f64,
}

impl ErrorCovariance {
    /// Requires positive variances and a positive semi-definite matrix.
    pub fn new(sigma11: f64, sigma12: f64, sigma22: f64) -> Result<Self> {
        if !(sigma11 > 0.0 && sigma22 > 0.0) || !sigma12.is_finite() {
            return Err(Error::DegenerateCovariance);
        }
        let rho = sigma12 / (sigma11.sqrt() * sigma22.sqrt());
        if rho.abs() > 1.0 + 1e-12 {
            return Err(Error::NotPositiveDefinite(format!(
                "error covariance with correlation {rho}"
            )));
        }
        Ok(Self {
            sigma11,
            sigma12,
            sigma22,
            rho: rho.clamp(-1.0, 1.0),
        })
    }

    pub fn from_sd_rho(sd1: f64, sd2: f64, rho: f64) -> Result<Self> {
        Self::new(sd1 * sd1, rho * sd1 * sd2, sd2 * sd2)
    }

    pub fn identity() -> Self {
        Self {
            sigma11: 1.0,
            sigma12: 0.0,
            sigma22: 1.0,
            rho: 0.0,
        }
    }

    pub fn sd(&self) -> [f64; 2] {
        [self.sigma11.sqrt(), self.sigma22.sqrt()]
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.sigma11, self.sigma12], [self.sigma12, self.sigma22]]
    }

    /// Density with this covariance; fails unless strictly positive definite.
    pub fn density(&self) -> Result<BivariateNormal> {
        let l11 = self.sigma11.sqrt();
        let l21 = self.sigma12 / l11;
        let rem = self.sigma22 - l21 * l21;
        if !(rem > 0.0) {
            return Err(Error::NotPositiveDefinite("error covariance".into()));
        }
        Ok(BivariateNormal::from_cholesky(l11, l21, rem.sqrt()))
    }
}

/// Zero-mean bivariate normal held as its lower Cholesky factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BivariateNormal {
    pub l11: f64,
    pub l21: f64,
    pub l22: f64,
    log_norm: f64,
}

impl BivariateNormal {
    pub fn from_cholesky(l11: f64, l21: f64, l22: f64) -> Self {
        Self {
            l11,
            l21,
            l22,
            log_norm: -LN_2PI - l11.ln() - l22.ln(),
        }
    }

    /// `ln φ₂(e1, e2)`.
    #[inline]
    pub fn ln_density(&self, e1: f64, e2: f64) -> f64 {
        let u1 = e1 / self.l11;
        let u2 = (e2 - self.l21 * u1) / self.l22;
        self.log_norm - 0.5 * (u1 * u1 + u2 * u2)
    }

    pub fn covariance(&self) -> ErrorCovariance {
        let s11 = self.l11 * self.l11;
        let s12 = self.l11 * self.l21;
        let s22 = self.l21 * self.l21 + self.l22 * self.l22;
        ErrorCovariance {
            sigma11: s11,
            sigma12: s12,
            sigma22: s22,
            rho: (self.l21 / s22.sqrt()).clamp(-1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    /// Classical `sqrt(diag(s²(X'X)⁻¹))`; `None` when `n == k`.
    pub se: Option<DVector<f64>>,
    pub xtx_inv: DMatrix<f64>,
    pub rss: f64,
    pub condition: f64,
}

pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let ls = qr_least_squares(x, y)?;
    let residuals = y - x * &ls.coef;
    let rss = residuals.norm_squared();
    let (n, k) = x.shape();
    let se = (n > k).then(|| {
        let s2 = rss / (n - k) as f64;
        ls.xtx_inv.diagonal().map(|v| (s2 * v).sqrt())
    });
    Ok(OlsFit {
        beta: ls.coef,
        residuals,
        se,
        xtx_inv: ls.xtx_inv,
        rss,
        condition: ls.condition,
    })
}

fn check_pair(r1: &DVector<f64>, r2: &DVector<f64>) -> Result<()> {
    if r1.len() != r2.len() || r1.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "residual vectors of length {} and {}",
            r1.len(),
            r2.len()
        )));
    }
    Ok(())
}

/// `σab = e_a·e_b / N`.
pub fn residual_covariance(r1: &DVector<f64>, r2: &DVector<f64>) -> Result<ErrorCovariance> {
    check_pair(r1, r2)?;
    let n = r1.len() as f64;
    ErrorCovariance::new(r1.dot(r1) / n, r1.dot(r2) / n, r2.dot(r2) / n)
}

/// `σab = e_a·e_b / sqrt((N - k_a)(N - k_b))`.
pub fn residual_covariance_dof(
    r1: &DVector<f64>,
    r2: &DVector<f64>,
    k1: usize,
    k2: usize,
) -> Result<ErrorCovariance> {
    check_pair(r1, r2)?;
    let n = r1.len();
    if n <= k1.max(k2) {
        return Err(Error::TooFewObservations { n, k: k1.max(k2) });
    }
    let d1 = (n - k1) as f64;
    let d2 = (n - k2) as f64;
    ErrorCovariance::new(
        r1.dot(r1) / d1,
        r1.dot(r2) / (d1 * d2).sqrt(),
        r2.dot(r2) / d2,
    )
}

/// `Σᵢ ln φ₂(y1ᵢ - x1ᵢ'β1, y2ᵢ - x2ᵢ'β2; Σ)`.
pub fn loglik_fixed(
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    y1: &DVector<f64>,
    y2: &DVector<f64>,
    beta1: &DVector<f64>,
    beta2: &DVector<f64>,
    cov: &ErrorCovariance,
) -> Result<f64> {
    let dens = cov.density()?;
    let e1 = y1 - x1 * beta1;
    let e2 = y2 - x2 * beta2;
    if e1.len() != e2.len() {
        return Err(Error::DimensionMismatch(
            "equations differ in length".into(),
        ));
    }
    Ok(e1
        .iter()
        .zip(e2.iter())
        .map(|(&a, &b)| dens.ln_density(a, b))
        .sum())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FglsOptions {
    /// Use `sqrt((N-k_a)(N-k_b))` instead of `N` in the residual covariance.
    pub dof_adjusted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquationFit {
    pub name: String,
    pub names: Vec<String>,
    pub coef: DVector<f64>,
    pub se: Option<DVector<f64>>,
}

impl EquationFit {
    /// `β / SE`.
    pub fn t_stats(&self) -> Option<DVector<f64>> {
        self.se.as_ref().map(|se| self.coef.component_div(se))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SureFit {
    pub estimator: Estimator,
    pub equations: [EquationFit; 2],
    pub cov: ErrorCovariance,
    pub loglik: f64,
    pub n: usize,
    /// Coefficients plus covariance parameters.
    pub k: usize,
    pub param_names: Vec<String>,
    /// Asymptotic covariance of all `k` estimates.
    pub param_cov: Option<DMatrix<f64>>,
    pub condition: f64,
}

impl SureFit {
    pub fn ill_conditioned(&self) -> bool {
        self.condition > CONDITION_WARN
    }
}

fn coef_param_names(design: &DesignMatrices) -> Vec<String> {
    (0..2)
        .flat_map(|e| {
            design.names[e]
                .iter()
                .map(move |n| format!("{}:{}", design.equation_names[e], n))
        })
        .collect()
}

/// Asymptotic covariance of `(σ11, σ12, σ22)` under normal errors:
/// `Cov(σab, σcd) = (σac σbd + σad σbc) / N`.
pub fn sigma_param_cov(cov: &ErrorCovariance, n: usize) -> DMatrix<f64> {
    let s = cov.matrix();
    let idx = [(0, 0), (0, 1), (1, 1)];
    DMatrix::from_fn(3, 3, |p, q| {
        let (a, b) = idx[p];
        let (c, d) = idx[q];
        (s[a][c] * s[b][d] + s[a][d] * s[b][c]) / n as f64
    })
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut m = DMatrix::zeros(na + nb, na + nb);
    m.view_mut((0, 0), (na, na)).copy_from(a);
    m.view_mut((na, na), (nb, nb)).copy_from(b);
    m
}

/// Equation-by-equation OLS reported as one system. The log-likelihood is the
/// sum of the two univariate Gaussian log-likelihoods (errors treated as
/// independent) and `k` counts both coefficient vectors plus two variances.
pub fn ols_system_fit(data: &SystemData) -> Result<SureFit> {
    let d = &data.design;
    let n = data.n();
    let fits = [ols_fit(&d.x[0], &data.y[0])?, ols_fit(&d.x[1], &data.y[1])?];
    let cov = residual_covariance(&fits[0].residuals, &fits[1].residuals)?;
    let mut loglik = 0.0;
    let mut blocks = Vec::new();
    for f in &fits {
        let s2 = f.rss / n as f64;
        loglik += -0.5 * n as f64 * (LN_2PI + s2.ln() + 1.0);
        blocks.push(&f.xtx_inv * s2);
    }
    let var_block = DMatrix::from_diagonal(&DVector::from_vec(vec![
        2.0 * cov.sigma11 * cov.sigma11 / n as f64,
        2.0 * cov.sigma22 * cov.sigma22 / n as f64,
    ]));
    let param_cov = block_diag(&block_diag(&blocks[0], &blocks[1]), &var_block);
    let mut param_names = coef_param_names(d);
    param_names.extend(["sigma11".to_string(), "sigma22".to_string()]);
    let [f1, f2] = fits;
    let condition = f1.condition.max(f2.condition);
    Ok(SureFit {
        estimator: Estimator::Ols,
        k: f1.beta.len() + f2.beta.len() + 2,
        equations: [
            EquationFit {
                name: d.equation_names[0].clone(),
                names: d.names[0].clone(),
                coef: f1.beta,
                se: f1.se,
            },
            EquationFit {
                name: d.equation_names[1].clone(),
                names: d.names[1].clone(),
                coef: f2.beta,
                se: f2.se,
            },
        ],
        cov,
        loglik,
        n,
        param_names,
        param_cov: Some(param_cov),
        condition,
    })
}

/// Two-step feasible GLS: OLS residuals give Σ̂, then GLS on the stacked
/// system weighted by `Σ̂⁻¹ ⊗ I`, solved by QR on the whitened system.
/// Σ and ρ are re-estimated from the FGLS residuals and the Gaussian
/// log-likelihood is evaluated there.
pub fn fgls_fit(data: &SystemData, opts: FglsOptions) -> Result<SureFit> {
    let d = &data.design;
    let (x1, x2) = (&d.x[0], &d.x[1]);
    let (y1, y2) = (&data.y[0], &data.y[1]);
    let n = data.n();
    let (k1, k2) = (x1.ncols(), x2.ncols());

    let estimate_cov = |r1: &DVector<f64>, r2: &DVector<f64>| {
        let c = if opts.dof_adjusted {
            residual_covariance_dof(r1, r2, k1, k2)
        } else {
            residual_covariance(r1, r2)
        };
        c.map_err(|_| Error::DegenerateCovariance)
    };

    let ols1 = ols_fit(x1, y1)?;
    let ols2 = ols_fit(x2, y2)?;
    let first = estimate_cov(&ols1.residuals, &ols2.residuals)?;
    let w = first.density().map_err(|_| Error::DegenerateCovariance)?;

    // rows of L⁻¹ applied to each (eq1, eq2) pair
    let a = 1.0 / w.l11;
    let b = -w.l21 / (w.l11 * w.l22);
    let c = 1.0 / w.l22;
    let mut xs = DMatrix::zeros(2 * n, k1 + k2);
    let mut ys = DVector::zeros(2 * n);
    for i in 0..n {
        for j in 0..k1 {
            xs[(i, j)] = a * x1[(i, j)];
            xs[(n + i, j)] = b * x1[(i, j)];
        }
        for j in 0..k2 {
            xs[(n + i, k1 + j)] = c * x2[(i, j)];
        }
        ys[i] = a * y1[i];
        ys[n + i] = b * y1[i] + c * y2[i];
    }
    let ls = qr_least_squares(&xs, &ys)?;
    let beta1 = ls.coef.rows(0, k1).into_owned();
    let beta2 = ls.coef.rows(k1, k2).into_owned();
    let se = ls.xtx_inv.diagonal().map(f64::sqrt);

    let r1 = y1 - x1 * &beta1;
    let r2 = y2 - x2 * &beta2;
    let cov = estimate_cov(&r1, &r2)?;
    let loglik = loglik_fixed(x1, x2, y1, y2, &beta1, &beta2, &cov)
        .map_err(|_| Error::DegenerateCovariance)?;

    let param_cov = block_diag(&ls.xtx_inv, &sigma_param_cov(&cov, n));
    let mut param_names = coef_param_names(d);
    param_names.extend(["sigma11", "sigma12", "sigma22"].map(String::from));
    let condition = ls.condition.max(ols1.condition).max(ols2.condition);
    Ok(SureFit {
        estimator: Estimator::Fgls,
        equations: [
            EquationFit {
                name: d.equation_names[0].clone(),
                names: d.names[0].clone(),
                coef: beta1,
                se: Some(se.rows(0, k1).into_owned()),
            },
            EquationFit {
                name: d.equation_names[1].clone(),
                names: d.names[1].clone(),
                coef: beta2,
                se: Some(se.rows(k1, k2).into_owned()),
            },
        ],
        cov,
        loglik,
        n,
        k: k1 + k2 + 3,
        param_names,
        param_cov: Some(param_cov),
        condition,
    })
}

/// [`fgls_fit`] on bare matrices (columns named `x0, x1, ...`).
pub fn fgls_fit_matrices(
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    y1: &DVector<f64>,
    y2: &DVector<f64>,
) -> Result<SureFit> {
    let data = SystemData::new(
        DesignMatrices::fixed(x1.clone(), x2.clone()),
        y1.clone(),
        y2.clone(),
    )?;
    fgls_fit(&data, FglsOptions::default())
}
