//! Information criteria, model ranking, and random-parameter effect
//! summaries.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::symmetrize;
use crate::normal::normal_cdf;
use crate::rp::RpSureFit;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CriteriaInput {
    pub loglik: f64,
    pub k: usize,
    pub n: usize,
    /// Parameter covariance of the fit, `k x k`.
    pub fisher_inverse: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub caic: f64,
    pub sbic: f64,
    pub icomp: Option<f64>,
    /// Why ICOMP is missing, when it is.
    pub icomp_note: Option<String>,
}

/// `-2lnL + s·ln(tr(F⁻¹)/s) - ln|F⁻¹|` with `s` the dimension of `F⁻¹`.
pub fn icomp(loglik: f64, fisher_inverse: &DMatrix<f64>) -> Result<f64> {
    let s = fisher_inverse.nrows();
    if s == 0 || fisher_inverse.ncols() != s {
        return Err(Error::DimensionMismatch(
            "fisher inverse must be square and non-empty".into(),
        ));
    }
    let chol = symmetrize(fisher_inverse)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("fisher inverse".into()))?;
    let l = chol.l_dirty();
    let logdet = 2.0 * (0..s).map(|i| l[(i, i)].ln()).sum::<f64>();
    let s = s as f64;
    Ok(-2.0 * loglik + s * (fisher_inverse.trace() / s).ln() - logdet)
}

/// `[AIC, CAIC, SBIC]`.
fn penalized(loglik: f64, k: f64, ln_n: f64) -> [f64; 3] {
    let dev = -2.0 * loglik;
    [dev + 2.0 * k, dev + k * (ln_n + 1.0), dev + k * ln_n]
}

/// AIC, CAIC and SBIC always; ICOMP when a positive-definite `k x k`
/// parameter covariance is supplied.
pub fn score_criteria(input: &CriteriaInput) -> Result<Criteria> {
    if input.k == 0 || input.n == 0 {
        return Err(Error::InvalidSpec("criteria need k > 0 and n > 0".into()));
    }
    let [aic, caic, sbic] = penalized(input.loglik, input.k as f64, (input.n as f64).ln());
    let (icomp, icomp_note) = match &input.fisher_inverse {
        None => (None, Some("no parameter covariance".to_string())),
        Some(f) if f.nrows() != input.k => (
            None,
            Some(format!(
                "parameter covariance is {}x{}, k = {}",
                f.nrows(),
                f.ncols(),
                input.k
            )),
        ),
        Some(f) => match icomp(input.loglik, f) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        },
    };
    Ok(Criteria {
        aic,
        caic,
        sbic,
        icomp,
        icomp_note,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "CAIC")]
    Caic,
    #[serde(rename = "SBIC")]
    Sbic,
    #[serde(rename = "ICOMP")]
    Icomp,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Aic,
        Criterion::Caic,
        Criterion::Sbic,
        Criterion::Icomp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::Caic => "CAIC",
            Criterion::Sbic => "SBIC",
            Criterion::Icomp => "ICOMP",
        }
    }

    pub fn of(self, c: &Criteria) -> Option<f64> {
        match self {
            Criterion::Aic => Some(c.aic),
            Criterion::Caic => Some(c.caic),
            Criterion::Sbic => Some(c.sbic),
            Criterion::Icomp => c.icomp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedModel {
    pub label: String,
    pub n: usize,
    pub k: usize,
    pub loglik: f64,
    pub criteria: Criteria,
    /// Criteria on which this model scores lowest.
    pub wins: Vec<Criterion>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    /// Ordered by SBIC, then fewer parameters, then label.
    pub models: Vec<RankedModel>,
}

fn order(a: &RankedModel, b: &RankedModel, crit: Criterion) -> Ordering {
    let key = |m: &RankedModel| crit.of(&m.criteria).unwrap_or(f64::INFINITY);
    key(a)
        .total_cmp(&key(b))
        .then(a.k.cmp(&b.k))
        .then_with(|| a.label.cmp(&b.label))
}

pub fn rank_models(fits: &[(String, CriteriaInput)]) -> Result<Ranking> {
    if fits.len() < 2 {
        return Err(Error::InvalidSpec("ranking needs at least two fits".into()));
    }
    let mut models = fits
        .iter()
        .map(|(label, input)| {
            Ok(RankedModel {
                label: label.clone(),
                n: input.n,
                k: input.k,
                loglik: input.loglik,
                criteria: score_criteria(input)?,
                wins: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for crit in Criterion::ALL {
        if models.iter().all(|m| crit.of(&m.criteria).is_none()) {
            continue;
        }
        let best = (0..models.len())
            .min_by(|&a, &b| order(&models[a], &models[b], crit))
            .expect("at least two models");
        models[best].wins.push(crit);
    }
    models.sort_by(|a, b| order(a, b, Criterion::Sbic));
    Ok(Ranking { models })
}

fn fmt4(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "NA".into())
}

impl Ranking {
    fn cells(&self) -> Vec<[String; 9]> {
        self.models
            .iter()
            .map(|m| {
                [
                    m.label.clone(),
                    m.n.to_string(),
                    m.k.to_string(),
                    fmt4(Some(m.loglik)),
                    fmt4(Some(m.criteria.aic)),
                    fmt4(Some(m.criteria.caic)),
                    fmt4(Some(m.criteria.sbic)),
                    fmt4(m.criteria.icomp),
                    m.wins
                        .iter()
                        .map(|c| c.label())
                        .collect::<Vec<_>>()
                        .join(";"),
                ]
            })
            .collect()
    }

    const HEADER: [&'static str; 9] = [
        "label", "n", "k", "loglik", "AIC", "CAIC", "SBIC", "ICOMP", "best",
    ];

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::HEADER)?;
        for row in self.cells() {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Aligned table; the winning score in each criterion column carries `*`.
    pub fn to_text(&self) -> String {
        let mut rows: Vec<Vec<String>> =
            vec![Self::HEADER[..8].iter().map(|s| s.to_string()).collect()];
        for (m, cells) in self.models.iter().zip(self.cells()) {
            let mut row: Vec<String> = cells[..8].to_vec();
            for (j, crit) in Criterion::ALL.iter().enumerate() {
                if m.wins.contains(crit) {
                    row[4 + j].push('*');
                }
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..8)
            .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for row in rows {
            let line: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    if j == 0 {
                        format!("{c:<w$}", w = widths[j])
                    } else {
                        format!("{c:>w$}", w = widths[j])
                    }
                })
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpEffectSummary {
    pub name: String,
    pub mu: f64,
    pub sigma: f64,
    /// `Φ(μ/σ)`.
    pub share_above_zero: f64,
    /// `1 - Φ(μ/σ)`.
    pub share_below_zero: f64,
    pub range_lower: f64,
    pub range_upper: f64,
}

/// Share of the coefficient density above zero and the `μ ± 2σ` range.
pub fn effect_summary(name: &str, mu: f64, sigma: f64) -> Result<RpEffectSummary> {
    if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::Domain(format!(
            "effect '{name}' needs finite mu and sigma > 0"
        )));
    }
    let above = normal_cdf(mu / sigma);
    Ok(RpEffectSummary {
        name: name.to_string(),
        mu,
        sigma,
        share_above_zero: above,
        share_below_zero: 1.0 - above,
        range_lower: mu - 2.0 * sigma,
        range_upper: mu + 2.0 * sigma,
    })
}

pub fn rp_effects(fit: &RpSureFit) -> Result<Vec<RpEffectSummary>> {
    if fit.random.is_empty() {
        return Err(Error::Domain("fit has no random coefficients".into()));
    }
    fit.random
        .iter()
        .map(|r| {
            let name = format!("{}:{}", fit.equations[r.equation].name, r.name);
            effect_summary(&name, r.mu, r.sigma)
        })
        .collect()
}

pub fn write_effects_csv<W: Write>(effects: &[RpEffectSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "name",
        "mu",
        "sigma",
        "lower",
        "upper",
        "pct_above",
        "pct_below",
    ])?;
    for e in effects {
        w.write_record([
            e.name.clone(),
            e.mu.to_string(),
            e.sigma.to_string(),
            format!("{:.4}", e.range_lower),
            format!("{:.4}", e.range_upper),
            format!("{:.2}", 100.0 * e.share_above_zero),
            format!("{:.2}", 100.0 * e.share_below_zero),
        ])?;
    }
    w.flush()?;
    Ok(())
}
