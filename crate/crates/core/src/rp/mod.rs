//! Random-parameter bivariate SURE by maximum simulated likelihood.
//!
//! Random coefficient `b` of observation `i` in draw `r` is
//! `μ_b + σ_b · z[i][r][d(b)]`, with dimensions numbered through the random
//! columns of equation 1 and then equation 2. Random coefficients are
//! independent normals; the equations are linked through the bivariate error
//! covariance only.

mod fit;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::data::SystemData;
use crate::halton::DrawStore;
use crate::sure::{BivariateNormal, ErrorCovariance};
use crate::{Error, Result};

pub use fit::{
    fit_rp_sure, retention_verdict, rp_retention_test, Convergence, RandomCoef, Retention,
    RetentionVerdict, RpEquation, RpOptions, RpSureFit, RETENTION_T,
};

/// Natural-scale parameters. `sigma` may be zero here (degenerate mixture).
#[derive(Debug, Clone, PartialEq)]
pub struct RpParams {
    /// Coefficients per equation; random columns hold their means.
    pub beta: [DVector<f64>; 2],
    /// Spread of each random dimension.
    pub sigma: Vec<f64>,
    pub cov: ErrorCovariance,
}

/// `(equation, column)` of every random dimension, in draw-dimension order.
pub fn random_dims(data: &SystemData) -> Vec<(usize, usize)> {
    (0..2)
        .flat_map(|e| data.design.random[e].iter().map(move |&c| (e, c)))
        .collect()
}

/// Per-observation simulated likelihood evaluator with precomputed random
/// loadings. Contributions are always combined in observation order, so the
/// result does not depend on the number of worker threads.
pub(crate) struct Evaluator<'a> {
    data: &'a SystemData,
    draws: &'a DrawStore,
    eq_of: Vec<usize>,
    /// `x[i, col(d)]`, row-major `N x D`.
    loads: Vec<f64>,
    pool: Option<rayon::ThreadPool>,
    sequential: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(data: &'a SystemData, draws: &'a DrawStore, threads: Option<usize>) -> Result<Self> {
        let dims = random_dims(data);
        let n = data.n();
        if draws.n_obs() != n {
            return Err(Error::DimensionMismatch(format!(
                "draw store holds {} observations, data has {n}",
                draws.n_obs()
            )));
        }
        if draws.dims() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "draw store has {} dimensions, model has {} random coefficients",
                draws.dims(),
                dims.len()
            )));
        }
        let mut loads = Vec::with_capacity(n * dims.len());
        for i in 0..n {
            for &(e, c) in &dims {
                loads.push(data.design.x[e][(i, c)]);
            }
        }
        let (pool, sequential) = match threads {
            Some(1) => (None, true),
            Some(t) => (
                Some(
                    rayon::ThreadPoolBuilder::new()
                        .num_threads(t)
                        .build()
                        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?,
                ),
                false,
            ),
            None => (None, false),
        };
        Ok(Self {
            data,
            draws,
            eq_of: dims.iter().map(|&(e, _)| e).collect(),
            loads,
            pool,
            sequential,
        })
    }

    fn obs_loglik(
        &self,
        i: usize,
        beta: &[DVector<f64>; 2],
        sigma: &[f64],
        dens: &BivariateNormal,
    ) -> f64 {
        let x = &self.data.design.x;
        let mut e0 = [self.data.y[0][i], self.data.y[1][i]];
        for eq in 0..2 {
            let mut m = 0.0;
            for j in 0..beta[eq].len() {
                m += x[eq][(i, j)] * beta[eq][j];
            }
            e0[eq] -= m;
        }
        let d = self.eq_of.len();
        if d == 0 {
            return dens.ln_density(e0[0], e0[1]);
        }
        let scale: Vec<f64> = (0..d).map(|k| self.loads[i * d + k] * sigma[k]).collect();
        let z = self.draws.observation(i);
        let r = self.draws.draws();
        let mut lp = Vec::with_capacity(r);
        let mut peak = f64::NEG_INFINITY;
        for zr in z.chunks_exact(d) {
            let mut shift = [0.0; 2];
            for k in 0..d {
                shift[self.eq_of[k]] += scale[k] * zr[k];
            }
            let v = dens.ln_density(e0[0] - shift[0], e0[1] - shift[1]);
            peak = peak.max(v);
            lp.push(v);
        }
        if !peak.is_finite() {
            return f64::NEG_INFINITY;
        }
        let s: f64 = lp.iter().map(|v| (v - peak).exp()).sum();
        peak + s.ln() - (r as f64).ln()
    }

    /// Per-observation contributions in observation order.
    pub fn contributions(&self, params: &RpParams) -> Result<Vec<f64>> {
        self.check(params)?;
        let dens = params.cov.density()?;
        let f = |i: usize| self.obs_loglik(i, &params.beta, &params.sigma, &dens);
        let n = self.data.n();
        let out: Vec<f64> = if self.sequential {
            (0..n).map(f).collect()
        } else if let Some(pool) = &self.pool {
            pool.install(|| (0..n).into_par_iter().map(f).collect())
        } else {
            (0..n).into_par_iter().map(f).collect()
        };
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Underflow(i));
        }
        Ok(out)
    }

    pub fn loglik(&self, params: &RpParams) -> Result<f64> {
        Ok(self.contributions(params)?.iter().sum())
    }

    fn check(&self, params: &RpParams) -> Result<()> {
        for e in 0..2 {
            if params.beta[e].len() != self.data.design.x[e].ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "equation {} has {} columns but {} coefficients",
                    e + 1,
                    self.data.design.x[e].ncols(),
                    params.beta[e].len()
                )));
            }
        }
        if params.sigma.len() != self.eq_of.len() {
            return Err(Error::DimensionMismatch("random spread count".into()));
        }
        if params.sigma.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Domain("random spreads must be >= 0".into()));
        }
        Ok(())
    }
}

/// `Σᵢ ln[(1/R) Σᵣ φ₂(y1ᵢ − x1ᵢ'β1ᵢʳ, y2ᵢ − x2ᵢ'β2ᵢʳ; Σ)]`, averaged in log
/// space with log-sum-exp.
pub fn simulated_loglik(params: &RpParams, data: &SystemData, draws: &DrawStore) -> Result<f64> {
    simulated_loglik_threads(params, data, draws, None)
}

/// [`simulated_loglik`] on at most `threads` workers (`None`: rayon default).
pub fn simulated_loglik_threads(
    params: &RpParams,
    data: &SystemData,
    draws: &DrawStore,
    threads: Option<usize>,
) -> Result<f64> {
    Evaluator::new(data, draws, threads)?.loglik(params)
}
