use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;

use super::{PairedGapObservation, NOT_REPORTED};
use crate::Error;

/// Inclusive model-year ranges used to bin year columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YearBins(pub Vec<(i32, i32)>);

impl Default for YearBins {
    fn default() -> Self {
        Self(vec![
            (1984, 1988),
            (1989, 1993),
            (1994, 1998),
            (1999, 2003),
            (2004, 2008),
            (2009, 2014),
        ])
    }
}

impl YearBins {
    pub fn label(&self, year: i32) -> String {
        self.0
            .iter()
            .find(|(lo, hi)| (*lo..=*hi).contains(&year))
            .map(|(lo, hi)| format!("{lo}-{hi}"))
            .unwrap_or_else(|| "other".to_string())
    }
}

impl FromStr for YearBins {
    type Err = Error;

    /// `"1984-1988,1989-1993,..."`
    fn from_str(s: &str) -> Result<Self, Error> {
        let bins = s
            .split(',')
            .map(|part| {
                let (lo, hi) = part
                    .trim()
                    .split_once('-')
                    .ok_or_else(|| Error::Domain(format!("bad year bin `{part}`")))?;
                let lo: i32 = lo
                    .trim()
                    .parse()
                    .map_err(|_| Error::Domain(format!("bad year `{lo}`")))?;
                let hi: i32 = hi
                    .trim()
                    .parse()
                    .map_err(|_| Error::Domain(format!("bad year `{hi}`")))?;
                if lo > hi {
                    return Err(Error::Domain(format!("empty year bin `{part}`")));
                }
                Ok((lo, hi))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        Ok(Self(bins))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupKey {
    Column(String),
    YearBinned { column: String, bins: YearBins },
}

impl GroupKey {
    pub fn column(&self) -> &str {
        match self {
            GroupKey::Column(c) | GroupKey::YearBinned { column: c, .. } => c,
        }
    }

    fn value(&self, obs: &PairedGapObservation) -> String {
        let raw = obs
            .fields
            .get(self.column())
            .map(|s| s.trim())
            .unwrap_or("");
        match self {
            GroupKey::Column(_) if raw.is_empty() => NOT_REPORTED.to_string(),
            GroupKey::Column(_) => raw.to_string(),
            GroupKey::YearBinned { bins, .. } => raw
                .parse::<i32>()
                .map(|y| bins.label(y))
                .unwrap_or_else(|_| "other".to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupRow {
    pub key: Vec<String>,
    pub n: usize,
    pub mean_gap: [f64; 2],
}

/// Count and mean gaps per observed key combination, sorted by key.
pub fn group_summary(obs: &[PairedGapObservation], keys: &[GroupKey]) -> Vec<GroupRow> {
    let mut groups: BTreeMap<Vec<String>, (usize, [f64; 2])> = BTreeMap::new();
    for o in obs {
        let key: Vec<String> = keys.iter().map(|k| k.value(o)).collect();
        let entry = groups.entry(key).or_insert((0, [0.0; 2]));
        entry.0 += 1;
        entry.1[0] += o.gap[0];
        entry.1[1] += o.gap[1];
    }
    groups
        .into_iter()
        .map(|(key, (n, sum))| GroupRow {
            key,
            n,
            mean_gap: [sum[0] / n as f64, sum[1] / n as f64],
        })
        .collect()
}
