//! Serialized fit results shared by the `fit`, `compare` and `effects`
//! commands.

use std::path::Path;

use indexmap::IndexMap;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg::{from_rows, to_rows};
use crate::rp::{retention_verdict, Retention, RpSureFit};
use crate::selection::{effect_summary, CriteriaInput, RpEffectSummary};
use crate::sure::{Estimator, SureFit};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationReport {
    pub name: String,
    pub coef: IndexMap<String, f64>,
    pub se: Option<IndexMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomReport {
    pub name: String,
    pub equation: String,
    pub mu: f64,
    pub mu_se: Option<f64>,
    pub sigma: f64,
    pub sigma_se: Option<f64>,
    pub verdict: Retention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsReport {
    #[serde(rename = "R")]
    pub r: usize,
    pub burn: u64,
    pub bases: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: String,
    pub iters: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimator: Estimator,
    pub n: usize,
    pub k: usize,
    /// `null` when not finite.
    pub loglik: Option<f64>,
    pub equations: Vec<EquationReport>,
    #[serde(default)]
    pub random: Vec<RandomReport>,
    pub sigma: [[f64; 2]; 2],
    pub rho: f64,
    pub rho_se: Option<f64>,
    /// How `rho` was obtained: from FGLS or OLS residuals, or estimated
    /// jointly.
    pub rho_source: String,
    pub sigma_sd: [f64; 2],
    pub sigma_sd_se: Option<[f64; 2]>,
    pub draws: Option<DrawsReport>,
    pub convergence: Option<ConvergenceReport>,
    /// Largest design condition number seen (fixed-parameter fits).
    pub condition: Option<f64>,
    pub param_names: Vec<String>,
    /// Asymptotic covariance of the `k` parameters named above.
    pub param_cov: Option<Vec<Vec<f64>>>,
}

fn named(names: &[String], values: &DVector<f64>) -> IndexMap<String, f64> {
    names.iter().cloned().zip(values.iter().copied()).collect()
}

impl From<&SureFit> for FitReport {
    fn from(fit: &SureFit) -> Self {
        let rho_source = match fit.estimator {
            Estimator::Ols => "ols-residuals",
            _ => "fgls-residuals",
        };
        Self {
            estimator: fit.estimator,
            n: fit.n,
            k: fit.k,
            loglik: Some(fit.loglik).filter(|v| v.is_finite()),
            equations: fit
                .equations
                .iter()
                .map(|e| EquationReport {
                    name: e.name.clone(),
                    coef: named(&e.names, &e.coef),
                    se: e.se.as_ref().map(|s| named(&e.names, s)),
                })
                .collect(),
            random: Vec::new(),
            sigma: fit.cov.matrix(),
            rho: fit.cov.rho,
            rho_se: None,
            rho_source: rho_source.to_string(),
            sigma_sd: fit.cov.sd(),
            sigma_sd_se: None,
            draws: None,
            convergence: None,
            condition: Some(fit.condition),
            param_names: fit.param_names.clone(),
            param_cov: fit.param_cov.as_ref().map(to_rows),
        }
    }
}

impl From<&RpSureFit> for FitReport {
    fn from(fit: &RpSureFit) -> Self {
        Self {
            estimator: Estimator::RpSure,
            n: fit.n,
            k: fit.k,
            loglik: Some(fit.loglik).filter(|v| v.is_finite()),
            equations: fit
                .equations
                .iter()
                .map(|e| EquationReport {
                    name: e.name.clone(),
                    coef: named(&e.names, &e.coef),
                    se: e.se.as_ref().map(|s| named(&e.names, s)),
                })
                .collect(),
            random: fit
                .random
                .iter()
                .map(|r| RandomReport {
                    name: r.name.clone(),
                    equation: fit.equations[r.equation].name.clone(),
                    mu: r.mu,
                    mu_se: r.mu_se,
                    sigma: r.sigma,
                    sigma_se: r.sigma_se,
                    verdict: retention_verdict(&r.name, r.mu, r.mu_se, r.sigma, r.sigma_se).verdict,
                })
                .collect(),
            sigma: fit.cov.matrix(),
            rho: fit.rho,
            rho_se: fit.rho_se,
            rho_source: "estimated".to_string(),
            sigma_sd: fit.sd,
            sigma_sd_se: fit.sd_se,
            draws: fit
                .draws
                .as_ref()
                .filter(|_| !fit.random.is_empty())
                .map(|c| DrawsReport {
                    r: c.draws,
                    burn: c.burn,
                    bases: c.bases.clone(),
                }),
            convergence: Some(ConvergenceReport {
                status: fit.convergence.status().to_string(),
                iters: fit.convergence.iterations,
                grad_norm: fit.convergence.grad_norm,
            }),
            condition: None,
            param_names: fit.param_names.clone(),
            param_cov: fit.param_cov.as_ref().map(to_rows),
        }
    }
}

impl FitReport {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn converged(&self) -> bool {
        self.convergence
            .as_ref()
            .is_none_or(|c| c.status == "converged")
    }

    pub fn criteria_input(&self) -> Result<CriteriaInput> {
        let loglik = self
            .loglik
            .ok_or_else(|| Error::Domain("fit has no finite log-likelihood".into()))?;
        Ok(CriteriaInput {
            loglik,
            k: self.k,
            n: self.n,
            fisher_inverse: self.param_cov.as_deref().map(from_rows).transpose()?,
        })
    }

    /// Distributional summaries of every random coefficient, named
    /// `equation:column`.
    pub fn effects(&self) -> Result<Vec<RpEffectSummary>> {
        if self.random.is_empty() {
            return Err(Error::Domain("fit has no random coefficients".into()));
        }
        self.random
            .iter()
            .map(|r| effect_summary(&format!("{}:{}", r.equation, r.name), r.mu, r.sigma))
            .collect()
    }
}
