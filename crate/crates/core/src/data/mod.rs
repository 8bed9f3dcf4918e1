//! Garage records to gap ratios to design matrices.

mod design;
mod raw;
mod summary;

use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub(crate) use design::encode_unchecked;
pub use design::{encode_design, DesignMatrices, SystemData, NOT_REPORTED};
pub use raw::{parse_raw, EpaRating, RawGarageRecord, RawTable, REQUIRED_COLUMNS};
pub use summary::{group_summary, GroupKey, GroupRow, YearBins};

pub const DEFAULT_TRIM_SD: f64 = 3.0;

/// Gap ratios for the two vehicles of one garage, with every source column
/// carried along for design encoding and grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedGapObservation {
    pub garage_id: String,
    /// 1-based source row.
    pub row: usize,
    /// `my_mpg_v / epa_mpg_v`.
    pub gap: [f64; 2],
    /// `my_mpg_v - epa_mpg_v`, in miles per gallon.
    pub diff: [f64; 2],
    pub fields: BTreeMap<String, String>,
}

impl PairedGapObservation {
    pub fn gap_1(&self) -> f64 {
        self.gap[0]
    }

    pub fn gap_2(&self) -> f64 {
        self.gap[1]
    }
}

/// Gap ratio of each vehicle: user-reported MPG over the chosen EPA rating.
pub fn compute_gaps(table: &RawTable, rating: EpaRating) -> Result<Vec<PairedGapObservation>> {
    let label_idx = match rating {
        EpaRating::TestCycle => None,
        EpaRating::Label => {
            let mut idx = [0; 2];
            for (v, slot) in idx.iter_mut().enumerate() {
                let col = rating.column(v + 1);
                *slot = table.column_index(&col).ok_or(Error::Parse {
                    row: 0,
                    field: col,
                    reason: "missing label rating column".to_string(),
                })?;
            }
            Some(idx)
        }
    };
    table
        .records
        .iter()
        .map(|r| {
            let epa = match label_idx {
                None => r.epa_mpg,
                Some(idx) => {
                    let mut e = [0.0; 2];
                    for v in 0..2 {
                        let raw = r.values[idx[v]].trim();
                        e[v] = match raw.parse::<f64>() {
                            Ok(x) if x > 0.0 && x.is_finite() => x,
                            _ => {
                                return Err(Error::Parse {
                                    row: r.row,
                                    field: rating.column(v + 1),
                                    reason: "nonpositive mpg".to_string(),
                                })
                            }
                        };
                    }
                    e
                }
            };
            Ok(PairedGapObservation {
                garage_id: r.garage_id.clone(),
                row: r.row,
                gap: [r.my_mpg[0] / epa[0], r.my_mpg[1] / epa[1]],
                diff: [r.my_mpg[0] - epa[0], r.my_mpg[1] - epa[1]],
                fields: table.fields(r),
            })
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() as f64 - 1.0)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimReport {
    pub n_input: usize,
    pub n_kept: usize,
    pub n_removed: usize,
    pub removed_ids: Vec<String>,
    pub mu: [f64; 2],
    pub sd: [f64; 2],
    /// Observations outside the interval for each vehicle (they may overlap).
    pub outside: [usize; 2],
    pub multiplier: f64,
}

#[derive(Debug, Clone)]
pub struct Trimmed {
    pub kept: Vec<PairedGapObservation>,
    pub removed: Vec<PairedGapObservation>,
    pub report: TrimReport,
}

/// Drop garages whose gap for either vehicle lies outside `mean ± c·sd`.
///
/// Means and standard deviations come from the full input in one pass; the
/// rule is not re-applied to the survivors.
pub fn trim_outliers(obs: &[PairedGapObservation], c: f64) -> Result<Trimmed> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!(
            "trim multiplier must be > 0, got {c}"
        )));
    }
    if obs.len() < 3 {
        return Err(Error::InsufficientSample(obs.len()));
    }
    let mut mu = [0.0; 2];
    let mut sd = [0.0; 2];
    for v in 0..2 {
        let g: Vec<f64> = obs.iter().map(|o| o.gap[v]).collect();
        mu[v] = mean(&g);
        sd[v] = sample_sd(&g);
    }
    let outside = |o: &PairedGapObservation, v: usize| {
        let lo = mu[v] - c * sd[v];
        let hi = mu[v] + c * sd[v];
        !(lo..=hi).contains(&o.gap[v])
    };
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    let mut per_vehicle = [0usize; 2];
    for o in obs {
        let out = [outside(o, 0), outside(o, 1)];
        for v in 0..2 {
            per_vehicle[v] += usize::from(out[v]);
        }
        if out[0] || out[1] {
            removed.push(o.clone());
        } else {
            kept.push(o.clone());
        }
    }
    let report = TrimReport {
        n_input: obs.len(),
        n_kept: kept.len(),
        n_removed: removed.len(),
        removed_ids: removed.iter().map(|o| o.garage_id.clone()).collect(),
        mu,
        sd,
        outside: per_vehicle,
        multiplier: c,
    };
    Ok(Trimmed {
        kept,
        removed,
        report,
    })
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch("series lengths differ".into()));
    }
    if a.len() < 3 {
        return Err(Error::DegenerateSeries(format!(
            "need at least 3 points, got {}",
            a.len()
        )));
    }
    let constant = |s: &[f64]| s.iter().all(|v| *v == s[0]);
    if constant(a) || constant(b) {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between the two vehicles' gaps.
pub fn gap_correlation(obs: &[PairedGapObservation]) -> Result<f64> {
    let g1: Vec<f64> = obs.iter().map(|o| o.gap[0]).collect();
    let g2: Vec<f64> = obs.iter().map(|o| o.gap[1]).collect();
    pearson(&g1, &g2)
}

/// Response vectors `(gap_1, gap_2)`.
pub fn responses(obs: &[PairedGapObservation]) -> [DVector<f64>; 2] {
    [
        DVector::from_iterator(obs.len(), obs.iter().map(|o| o.gap[0])),
        DVector::from_iterator(obs.len(), obs.iter().map(|o| o.gap[1])),
    ]
}
