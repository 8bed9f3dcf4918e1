use nalgebra::{DMatrix, DVector};

use super::{responses, PairedGapObservation};
use crate::linalg::check_full_rank;
use crate::spec::ModelSpec;
use crate::{Error, Result};

/// Level substituted for an empty categorical cell.
pub const NOT_REPORTED: &str = "Not reported";

/// Design matrices of the two equations. Row `i` of both matrices is garage `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub equation_names: [String; 2],
    pub x: [DMatrix<f64>; 2],
    pub names: [Vec<String>; 2],
    /// Columns carrying random-normal coefficients, per equation.
    pub random: [Vec<usize>; 2],
}

impl DesignMatrices {
    pub fn n(&self) -> usize {
        self.x[0].nrows()
    }

    /// Design matrices without random coefficients.
    pub fn fixed(x1: DMatrix<f64>, x2: DMatrix<f64>) -> Self {
        let names = [
            (0..x1.ncols()).map(|j| format!("x{j}")).collect(),
            (0..x2.ncols()).map(|j| format!("x{j}")).collect(),
        ];
        Self {
            equation_names: ["equation_1".to_string(), "equation_2".to_string()],
            x: [x1, x2],
            names,
            random: [Vec::new(), Vec::new()],
        }
    }

    pub fn with_random(mut self, r1: Vec<usize>, r2: Vec<usize>) -> Self {
        self.random = [r1, r2];
        self
    }

    pub fn n_random(&self) -> usize {
        self.random[0].len() + self.random[1].len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x[0].nrows() != self.x[1].nrows() {
            return Err(Error::DimensionMismatch(format!(
                "equation designs have {} and {} rows",
                self.x[0].nrows(),
                self.x[1].nrows()
            )));
        }
        for e in 0..2 {
            if self.names[e].len() != self.x[e].ncols() {
                return Err(Error::DimensionMismatch("column name registry".into()));
            }
            if self.random[e].iter().any(|&j| j >= self.x[e].ncols()) {
                return Err(Error::DimensionMismatch("random column index".into()));
            }
        }
        Ok(())
    }
}

/// Design matrices plus the two response vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemData {
    pub design: DesignMatrices,
    pub y: [DVector<f64>; 2],
}

impl SystemData {
    pub fn new(design: DesignMatrices, y1: DVector<f64>, y2: DVector<f64>) -> Result<Self> {
        design.validate()?;
        if y1.len() != design.n() || y2.len() != design.n() {
            return Err(Error::DimensionMismatch(
                "responses and design differ in length".into(),
            ));
        }
        Ok(Self {
            design,
            y: [y1, y2],
        })
    }

    pub fn from_observations(obs: &[PairedGapObservation], spec: &ModelSpec) -> Result<Self> {
        let design = encode_design(obs, spec)?;
        let [y1, y2] = responses(obs);
        Self::new(design, y1, y2)
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }
}

/// Encode both equations: optional intercept column first, then one column
/// per term in spec order (0/1 for a categorical level, the parsed value for a
/// continuous column). Each matrix must have full column rank.
pub fn encode_design(obs: &[PairedGapObservation], spec: &ModelSpec) -> Result<DesignMatrices> {
    let design = encode_unchecked(obs, spec)?;
    for e in 0..2 {
        check_full_rank(&design.x[e], &design.names[e])?;
    }
    Ok(design)
}

/// [`encode_design`] without the rank check.
pub(crate) fn encode_unchecked(
    obs: &[PairedGapObservation],
    spec: &ModelSpec,
) -> Result<DesignMatrices> {
    spec.validate()?;
    let first = obs
        .first()
        .ok_or_else(|| Error::Domain("cannot encode an empty sample".into()))?;
    for eq in &spec.equations {
        for term in &eq.terms {
            if !first.fields.contains_key(&term.column) {
                return Err(Error::UnknownVariable(term.column.clone()));
            }
        }
    }

    let n = obs.len();
    let mut xs = Vec::with_capacity(2);
    let mut names = Vec::with_capacity(2);
    for eq in &spec.equations {
        let cols = eq.column_names();
        let k = cols.len();
        let mut x = DMatrix::zeros(n, k);
        for (i, o) in obs.iter().enumerate() {
            let mut j = 0;
            if eq.intercept {
                x[(i, 0)] = 1.0;
                j = 1;
            }
            for term in &eq.terms {
                let raw = o
                    .fields
                    .get(&term.column)
                    .ok_or_else(|| Error::UnknownVariable(term.column.clone()))?
                    .trim();
                x[(i, j)] = match &term.level {
                    Some(level) => {
                        let value = if raw.is_empty() { NOT_REPORTED } else { raw };
                        f64::from(u8::from(value == level))
                    }
                    None => raw
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::Parse {
                            row: o.row,
                            field: term.column.clone(),
                            reason: format!("not a number: `{raw}`"),
                        })?,
                };
                j += 1;
            }
        }
        xs.push(x);
        names.push(cols);
    }
    let x2 = xs.pop().unwrap();
    let x1 = xs.pop().unwrap();
    let n2 = names.pop().unwrap();
    let n1 = names.pop().unwrap();
    Ok(DesignMatrices {
        equation_names: [
            spec.equations[0].name.clone(),
            spec.equations[1].name.clone(),
        ],
        x: [x1, x2],
        names: [n1, n2],
        random: [
            spec.equations[0].random_columns(),
            spec.equations[1].random_columns(),
        ],
    })
}
