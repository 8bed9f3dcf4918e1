use nalgebra::{DMatrix, SymmetricEigen};

use crate::data::SystemData;
use crate::rp::{random_dims, RpParams};
use crate::sure::ErrorCovariance;
use crate::{Error, Result};

/// Largest random dimension handled by the tensor-product rule.
pub const MAX_QUADRATURE_DIMS: usize = 3;

fn mean_residuals(params: &RpParams, data: &SystemData) -> Result<Vec<[f64; 2]>> {
    for e in 0..2 {
        if params.beta[e].len() != data.design.x[e].ncols() {
            return Err(Error::DimensionMismatch(format!(
                "equation {} coefficients",
                e + 1
            )));
        }
    }
    let e1 = &data.y[0] - &data.design.x[0] * &params.beta[0];
    let e2 = &data.y[1] - &data.design.x[1] * &params.beta[1];
    Ok(e1.iter().zip(e2.iter()).map(|(&a, &b)| [a, b]).collect())
}

/// Loadings `(ℓ1, ℓ2)` of every random dimension for every observation.
fn loadings(data: &SystemData) -> Vec<Vec<[f64; 2]>> {
    let dims = random_dims(data);
    (0..data.n())
        .map(|i| {
            dims.iter()
                .map(|&(e, c)| {
                    let mut l = [0.0; 2];
                    l[e] = data.design.x[e][(i, c)];
                    l
                })
                .collect()
        })
        .collect()
}

/// `Σᵢ ln φ₂(rᵢ; 0, Σ + Σ_b σ_b² ℓᵢ_b ℓᵢ_b')` for residuals `rᵢ` about the
/// mean. A dimension loading on both equations (shared coefficient)
/// contributes to the off-diagonal.
pub fn gaussian_marginal_loglik(
    resid: &[[f64; 2]],
    loads: &[Vec<[f64; 2]>],
    sigma: &[f64],
    cov: &ErrorCovariance,
) -> Result<f64> {
    if loads.len() != resid.len() {
        return Err(Error::DimensionMismatch(
            "one loading row per observation".into(),
        ));
    }
    let mut total = 0.0;
    for (r, l) in resid.iter().zip(loads) {
        if l.len() != sigma.len() {
            return Err(Error::DimensionMismatch(
                "one loading per random dimension".into(),
            ));
        }
        let (mut v11, mut v12, mut v22) = (cov.sigma11, cov.sigma12, cov.sigma22);
        for (ld, s) in l.iter().zip(sigma) {
            let s2 = s * s;
            v11 += s2 * ld[0] * ld[0];
            v12 += s2 * ld[0] * ld[1];
            v22 += s2 * ld[1] * ld[1];
        }
        let dens = ErrorCovariance::new(v11, v12, v22)?.density()?;
        total += dens.ln_density(r[0], r[1]);
    }
    Ok(total)
}

/// Exact log-likelihood of the linear-normal random-coefficient system:
/// `(y1ᵢ, y2ᵢ)` is bivariate normal about the mean coefficients with
/// covariance `Σ + Dᵢ`.
pub fn exact_marginal_loglik(params: &RpParams, data: &SystemData) -> Result<f64> {
    let resid = mean_residuals(params, data)?;
    gaussian_marginal_loglik(&resid, &loadings(data), &params.sigma, &params.cov)
}

/// Gauss–Hermite nodes and weights for the standard normal weight
/// (weights sum to one), by Golub–Welsch. Nodes ascend.
pub fn gauss_hermite(nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if nodes == 0 {
        return Err(Error::Domain("at least one quadrature node".into()));
    }
    let jacobi = DMatrix::from_fn(nodes, nodes, |i, j| {
        if i.abs_diff(j) == 1 {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..nodes)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Marginal log-likelihood by tensor-product Gauss–Hermite integration over
/// the random coefficients, `nodes` points per dimension.
pub fn quadrature_loglik(params: &RpParams, data: &SystemData, nodes: usize) -> Result<f64> {
    let d = params.sigma.len();
    if d > MAX_QUADRATURE_DIMS {
        return Err(Error::Unsupported(format!(
            "quadrature handles at most {MAX_QUADRATURE_DIMS} random dimensions, got {d}"
        )));
    }
    let (x, w) = gauss_hermite(nodes)?;
    let resid = mean_residuals(params, data)?;
    let loads = loadings(data);
    if loads.first().is_some_and(|l| l.len() != d) {
        return Err(Error::DimensionMismatch(
            "random spreads vs random columns".into(),
        ));
    }
    let dens = params.cov.density()?;

    let points = nodes.pow(d as u32);
    let grid: Vec<(f64, Vec<f64>)> = (0..points)
        .map(|mut p| {
            let mut lw = 0.0;
            let mut z = Vec::with_capacity(d);
            for _ in 0..d {
                lw += w[p % nodes].ln();
                z.push(x[p % nodes]);
                p /= nodes;
            }
            (lw, z)
        })
        .collect();

    let mut total = 0.0;
    let mut lp = vec![0.0; points];
    for (r, l) in resid.iter().zip(&loads) {
        let mut peak = f64::NEG_INFINITY;
        for (slot, (lw, z)) in lp.iter_mut().zip(&grid) {
            let mut shift = [0.0; 2];
            for k in 0..d {
                let c = params.sigma[k] * z[k];
                shift[0] += l[k][0] * c;
                shift[1] += l[k][1] * c;
            }
            *slot = lw + dens.ln_density(r[0] - shift[0], r[1] - shift[1]);
            peak = peak.max(*slot);
        }
        total += peak + lp.iter().map(|v| (v - peak).exp()).sum::<f64>().ln();
    }
    Ok(total)
}
