use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{random_dims, Evaluator, RpParams};
use crate::data::SystemData;
use crate::halton::{DrawStore, HaltonConfig};
use crate::linalg::symmetrize;
use crate::optim::{central_hessian, inf_norm, maximize, BfgsOptions, Termination, HESSIAN_STEP};
use crate::sure::{fgls_fit, ErrorCovariance, FglsOptions};
use crate::{Error, Result};

/// Two-sided 5% critical value used by the retention rule.
pub const RETENTION_T: f64 = 1.96;

#[derive(Debug, Clone, Copy)]
pub struct RpOptions {
    pub bfgs: BfgsOptions,
    pub hessian_step: f64,
    /// Worker cap for the likelihood; `None` uses the rayon default.
    pub threads: Option<usize>,
    /// Starting spread as a fraction of the FGLS coefficient magnitude.
    pub start_sigma_scale: f64,
    pub start_sigma_floor: f64,
}

impl Default for RpOptions {
    fn default() -> Self {
        Self {
            bfgs: BfgsOptions::default(),
            hessian_step: HESSIAN_STEP,
            threads: None,
            start_sigma_scale: 0.1,
            start_sigma_floor: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpEquation {
    pub name: String,
    pub names: Vec<String>,
    /// Fixed coefficients; random columns hold their means.
    pub coef: DVector<f64>,
    pub se: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomCoef {
    pub name: String,
    pub equation: usize,
    pub column: usize,
    pub mu: f64,
    pub mu_se: Option<f64>,
    pub sigma: f64,
    pub sigma_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub termination: Termination,
    pub iterations: usize,
    /// ∞-norm of the natural-scale gradient at the returned point.
    pub grad_norm: f64,
    /// Simulated log-likelihood after each accepted step.
    pub trace: Vec<f64>,
}

impl Convergence {
    pub fn status(&self) -> &'static str {
        if self.termination.converged() {
            "converged"
        } else {
            "not converged"
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpSureFit {
    pub equations: [RpEquation; 2],
    pub random: Vec<RandomCoef>,
    pub cov: ErrorCovariance,
    /// Error standard deviations `(σ1, σ2)`.
    pub sd: [f64; 2],
    pub sd_se: Option<[f64; 2]>,
    pub rho: f64,
    pub rho_se: Option<f64>,
    pub loglik: f64,
    pub n: usize,
    pub r: usize,
    /// Free optimizer parameters.
    pub k: usize,
    pub draws: Option<HaltonConfig>,
    pub convergence: Convergence,
    /// Optimizer-scale estimate.
    pub theta: Vec<f64>,
    /// Names and covariance of `(β, σ_b, σ1, σ2, ρ)`.
    pub natural_names: Vec<String>,
    pub natural_cov: Option<DMatrix<f64>>,
    /// Names and covariance of `(β, σ_b, σ11, σ12, σ22)`.
    pub param_names: Vec<String>,
    pub param_cov: Option<DMatrix<f64>>,
}

impl RpSureFit {
    pub fn converged(&self) -> bool {
        self.convergence.termination.converged()
    }

    pub fn params(&self) -> RpParams {
        RpParams {
            beta: [
                self.equations[0].coef.clone(),
                self.equations[1].coef.clone(),
            ],
            sigma: self.random.iter().map(|r| r.sigma).collect(),
            cov: self.cov,
        }
    }

    /// Random coefficient by `equation:column` or by bare column name when
    /// unambiguous.
    pub fn random_coef(&self, name: &str) -> Result<&RandomCoef> {
        if let Some((eq, col)) = name.split_once(':') {
            if let Some(r) = self
                .random
                .iter()
                .find(|r| self.equations[r.equation].name == eq && r.name == col)
            {
                return Ok(r);
            }
        }
        let hits: Vec<&RandomCoef> = self.random.iter().filter(|r| r.name == name).collect();
        match hits.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::UnknownVariable(name.to_string())),
            _ => Err(Error::InvalidSpec(format!(
                "'{name}' is random in both equations; qualify it as equation:column"
            ))),
        }
    }
}

/// Layout of θ: `β1, β2, a_b (one per random dimension), a11, l21, a22`.
struct Layout {
    k: [usize; 2],
    d: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.k[0] + self.k[1] + self.d + 3
    }

    fn chol_at(&self) -> usize {
        self.k[0] + self.k[1] + self.d
    }

    fn unpack(&self, t: &[f64]) -> RpParams {
        let (k1, k2) = (self.k[0], self.k[1]);
        let c = self.chol_at();
        let (l11, l21, l22) = (t[c].exp(), t[c + 1], t[c + 2].exp());
        let s11 = l11 * l11;
        let s12 = l11 * l21;
        let s22 = l21 * l21 + l22 * l22;
        RpParams {
            beta: [
                DVector::from_column_slice(&t[..k1]),
                DVector::from_column_slice(&t[k1..k1 + k2]),
            ],
            sigma: t[k1 + k2..c].iter().map(|a| a.exp()).collect(),
            cov: ErrorCovariance {
                sigma11: s11,
                sigma12: s12,
                sigma22: s22,
                rho: (s12 / (s11 * s22).sqrt()).clamp(-1.0, 1.0),
            },
        }
    }

    /// Jacobian of `(σ1, σ2, ρ)` with respect to `(a11, l21, a22)`.
    fn chol_sd_jacobian(&self, t: &[f64]) -> Matrix3<f64> {
        let c = self.chol_at();
        let (s1, l21, l22) = (t[c].exp(), t[c + 1], t[c + 2].exp());
        let s2 = l21.hypot(l22);
        let q = l22 * l22;
        Matrix3::new(
            s1,
            0.0,
            0.0,
            0.0,
            l21 / s2,
            q / s2,
            0.0,
            q / s2.powi(3),
            -l21 * q / s2.powi(3),
        )
    }

    /// Jacobian of `(σ11, σ12, σ22)` with respect to `(a11, l21, a22)`.
    fn chol_cov_jacobian(&self, t: &[f64]) -> Matrix3<f64> {
        let c = self.chol_at();
        let (l11, l21, l22) = (t[c].exp(), t[c + 1], t[c + 2].exp());
        Matrix3::new(
            2.0 * l11 * l11,
            0.0,
            0.0,
            l11 * l21,
            l11,
            0.0,
            0.0,
            2.0 * l21,
            2.0 * l22 * l22,
        )
    }

    fn jacobian(&self, t: &[f64], chol: Matrix3<f64>) -> DMatrix<f64> {
        let n = self.len();
        let kb = self.k[0] + self.k[1];
        let c = self.chol_at();
        let mut j = DMatrix::identity(n, n);
        for d in 0..self.d {
            j[(kb + d, kb + d)] = t[kb + d].exp();
        }
        j.view_mut((c, c), (3, 3)).copy_from(&chol);
        j
    }

    /// `J⁻ᵀ g`: the gradient with respect to `(β, σ_b, σ1, σ2, ρ)`.
    fn natural_gradient(&self, t: &[f64], g: &[f64]) -> Vec<f64> {
        let kb = self.k[0] + self.k[1];
        let c = self.chol_at();
        let mut out = g.to_vec();
        for d in 0..self.d {
            out[kb + d] = g[kb + d] / t[kb + d].exp();
        }
        let gc = Vector3::new(g[c], g[c + 1], g[c + 2]);
        match self.chol_sd_jacobian(t).transpose().lu().solve(&gc) {
            Some(v) => out[c..c + 3].copy_from_slice(v.as_slice()),
            None => out[c..c + 3].fill(f64::INFINITY),
        }
        out
    }
}

/// Maximum simulated likelihood fit of the random-parameter system.
///
/// Starts from two-step FGLS; spreads start at `start_sigma_scale·|β̂|`
/// floored at `start_sigma_floor`. Non-convergence is reported in
/// [`Convergence`], not as an error. Standard errors are `None` when the
/// negative Hessian is not positive definite.
pub fn fit_rp_sure(data: &SystemData, draws: &DrawStore, opts: &RpOptions) -> Result<RpSureFit> {
    let eval = Evaluator::new(data, draws, opts.threads)?;
    let design = &data.design;
    let dims = random_dims(data);
    let layout = Layout {
        k: [design.x[0].ncols(), design.x[1].ncols()],
        d: dims.len(),
    };

    let start = fgls_fit(data, FglsOptions::default())?;
    let mut theta0: Vec<f64> = start.equations[0]
        .coef
        .iter()
        .chain(start.equations[1].coef.iter())
        .copied()
        .collect();
    for &(e, c) in &dims {
        let s =
            (opts.start_sigma_scale * start.equations[e].coef[c].abs()).max(opts.start_sigma_floor);
        theta0.push(s.ln());
    }
    let w = start.cov.density()?;
    theta0.extend([w.l11.ln(), w.l21, w.l22.ln()]);

    let objective = |t: &[f64]| eval.loglik(&layout.unpack(t)).unwrap_or(f64::NEG_INFINITY);
    let res = maximize(objective, theta0, &opts.bfgs, |t, g| {
        inf_norm(&layout.natural_gradient(t, g))
    });
    let t = res.x.clone();
    let params = layout.unpack(&t);
    let loglik = eval.loglik(&params)?;

    let hess = central_hessian(&objective, &t, opts.hessian_step);
    let theta_cov = symmetrize(&(-hess))
        .cholesky()
        .map(|c| c.inverse())
        .filter(|v| v.iter().all(|x| x.is_finite()));
    let delta = |chol: Matrix3<f64>| {
        theta_cov.as_ref().map(|v| {
            let j = layout.jacobian(&t, chol);
            &j * v * j.transpose()
        })
    };
    let natural_cov = delta(layout.chol_sd_jacobian(&t));
    let param_cov = delta(layout.chol_cov_jacobian(&t));
    let se: Option<Vec<f64>> = natural_cov
        .as_ref()
        .map(|v| v.diagonal().iter().map(|x| x.max(0.0).sqrt()).collect());

    let (k1, k2) = (layout.k[0], layout.k[1]);
    let kb = k1 + k2;
    let c = layout.chol_at();
    let equations = [0, 1].map(|e| {
        let off = if e == 0 { 0 } else { k1 };
        RpEquation {
            name: design.equation_names[e].clone(),
            names: design.names[e].clone(),
            coef: params.beta[e].clone(),
            se: se
                .as_ref()
                .map(|s| DVector::from_column_slice(&s[off..off + layout.k[e]])),
        }
    });
    let random = dims
        .iter()
        .enumerate()
        .map(|(d, &(e, col))| {
            let off = if e == 0 { 0 } else { k1 };
            RandomCoef {
                name: design.names[e][col].clone(),
                equation: e,
                column: col,
                mu: params.beta[e][col],
                mu_se: se.as_ref().map(|s| s[off + col]),
                sigma: params.sigma[d],
                sigma_se: se.as_ref().map(|s| s[kb + d]),
            }
        })
        .collect();

    let mut coef_names: Vec<String> = (0..2)
        .flat_map(|e| {
            design.names[e]
                .iter()
                .map(move |n| format!("{}:{}", design.equation_names[e], n))
        })
        .collect();
    coef_names.extend(dims.iter().map(|&(e, col)| {
        format!(
            "{}:{}:sigma",
            design.equation_names[e], design.names[e][col]
        )
    }));
    let mut natural_names = coef_names.clone();
    natural_names.extend(["sigma1", "sigma2", "rho"].map(String::from));
    let mut param_names = coef_names;
    param_names.extend(["sigma11", "sigma12", "sigma22"].map(String::from));

    let sd = params.cov.sd();
    Ok(RpSureFit {
        equations,
        random,
        cov: params.cov,
        sd,
        sd_se: se.as_ref().map(|s| [s[c], s[c + 1]]),
        rho: params.cov.rho,
        rho_se: se.as_ref().map(|s| s[c + 2]),
        loglik,
        n: data.n(),
        r: if dims.is_empty() { 1 } else { draws.draws() },
        k: layout.len(),
        draws: draws.config().cloned(),
        convergence: Convergence {
            termination: res.termination,
            iterations: res.iterations,
            grad_norm: res.grad_norm,
            trace: res.trace,
        },
        theta: t,
        natural_names,
        natural_cov,
        param_names,
        param_cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Retention {
    RetainRandom,
    PreferFixed,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionVerdict {
    pub name: String,
    pub verdict: Retention,
    pub t_mu: Option<f64>,
    pub t_sigma: Option<f64>,
    /// Mean also significant; meaningful only when retained.
    pub mean_significant: bool,
}

/// Keep a coefficient random when `|σ/SE(σ)| >= 1.96`, whether or not the
/// mean is significant too.
pub fn retention_verdict(
    name: &str,
    mu: f64,
    mu_se: Option<f64>,
    sigma: f64,
    sigma_se: Option<f64>,
) -> RetentionVerdict {
    let ratio = |v: f64, se: Option<f64>| se.filter(|s| *s > 0.0 && s.is_finite()).map(|s| v / s);
    let t_mu = ratio(mu, mu_se);
    let t_sigma = ratio(sigma, sigma_se);
    let verdict = match t_sigma {
        None => Retention::Indeterminate,
        Some(t) if t.abs() >= RETENTION_T => Retention::RetainRandom,
        Some(_) => Retention::PreferFixed,
    };
    RetentionVerdict {
        name: name.to_string(),
        verdict,
        t_mu,
        t_sigma,
        mean_significant: t_mu.is_some_and(|t| t.abs() >= RETENTION_T),
    }
}

pub fn rp_retention_test(fit: &RpSureFit, name: &str) -> Result<RetentionVerdict> {
    let r = fit.random_coef(name)?;
    Ok(retention_verdict(name, r.mu, r.mu_se, r.sigma, r.sigma_se))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retention_thresholds() {
        let v = retention_verdict("a", 0.0, Some(1.0), 0.0435, Some(0.0435 / 5.16));
        assert_eq!(v.verdict, Retention::RetainRandom);
        assert!((v.t_sigma.unwrap() - 5.16).abs() < 1e-12);
        assert_eq!(
            retention_verdict("a", 0.0, None, 0.5, Some(1.0)).verdict,
            Retention::PreferFixed
        );
        assert_eq!(
            retention_verdict("a", 0.0, None, 1.96, Some(1.0)).verdict,
            Retention::RetainRandom
        );
        assert_eq!(
            retention_verdict("a", 0.0, None, 1.0, None).verdict,
            Retention::Indeterminate
        );
    }

    #[test]
    fn layout_round_trip_and_jacobian() {
        let layout = Layout { k: [1, 1], d: 1 };
        let t = vec![
            0.3,
            -0.2,
            (0.05f64).ln(),
            (0.1f64).ln(),
            0.04,
            (0.08f64).ln(),
        ];
        let p = layout.unpack(&t);
        assert!((p.sigma[0] - 0.05).abs() < 1e-15);
        let sd = p.cov.sd();
        assert!((sd[0] - 0.1).abs() < 1e-15);
        assert!((sd[1] - 0.04f64.hypot(0.08)).abs() < 1e-15);

        // finite-difference check of the (σ1, σ2, ρ) Jacobian
        let nat = |t: &[f64]| {
            let c = layout.unpack(t).cov;
            let s = c.sd();
            [s[0], s[1], c.rho]
        };
        let j = layout.chol_sd_jacobian(&t);
        for col in 0..3 {
            let h = 1e-6;
            let mut tp = t.clone();
            let mut tm = t.clone();
            tp[3 + col] += h;
            tm[3 + col] -= h;
            let (fp, fm) = (nat(&tp), nat(&tm));
            for row in 0..3 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!(
                    (fd - j[(row, col)]).abs() < 1e-7,
                    "({row},{col}) {fd} vs {}",
                    j[(row, col)]
                );
            }
        }
    }
}
