//! Declarative two-equation model specification.
//!
//! ```json
//! {
//!   "categoricals": { "fuel_type_1": "Diesel" },
//!   "equations": [
//!     { "name": "vehicle_1", "terms": [
//!         { "column": "fuel_type_1", "level": "Gasoline", "kind": "random-normal" },
//!         { "column": "displacement_1" } ] },
//!     { "name": "vehicle_2", "intercept": true, "terms": [] }
//!   ]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const INTERCEPT_NAME: &str = "constant";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoefKind {
    #[default]
    #[serde(rename = "fixed")]
    Fixed,
    #[serde(rename = "random-normal")]
    RandomNormal,
}

/// One design column: a continuous source column, or a single non-base level
/// of a categorical column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub column: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default)]
    pub kind: CoefKind,
}

impl Term {
    pub fn continuous(column: &str, kind: CoefKind) -> Self {
        Self {
            column: column.to_string(),
            level: None,
            kind,
        }
    }

    pub fn level(column: &str, level: &str, kind: CoefKind) -> Self {
        Self {
            column: column.to_string(),
            level: Some(level.to_string()),
            kind,
        }
    }

    /// Coefficient name: `column` or `column=level`.
    pub fn name(&self) -> String {
        match &self.level {
            Some(l) => format!("{}={}", self.column, l),
            None => self.column.clone(),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationSpec {
    pub name: String,
    #[serde(default = "default_true")]
    pub intercept: bool,
    #[serde(default)]
    pub terms: Vec<Term>,
}

impl EquationSpec {
    pub fn new(name: &str, intercept: bool, terms: Vec<Term>) -> Self {
        Self {
            name: name.to_string(),
            intercept,
            terms,
        }
    }

    /// Coefficient names in design-column order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.terms.len() + 1);
        if self.intercept {
            names.push(INTERCEPT_NAME.to_string());
        }
        names.extend(self.terms.iter().map(Term::name));
        names
    }

    /// Design-column indices of the random coefficients.
    pub fn random_columns(&self) -> Vec<usize> {
        let offset = usize::from(self.intercept);
        self.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind == CoefKind::RandomNormal)
            .map(|(j, _)| j + offset)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Categorical source column -> base level.
    #[serde(default)]
    pub categoricals: BTreeMap<String, String>,
    pub equations: [EquationSpec; 2],
}

impl ModelSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn n_random(&self) -> usize {
        self.equations
            .iter()
            .map(|e| e.random_columns().len())
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        for eq in &self.equations {
            let mut seen = BTreeSet::new();
            if eq.intercept {
                seen.insert(INTERCEPT_NAME.to_string());
            }
            for term in &eq.terms {
                if !seen.insert(term.name()) {
                    return Err(Error::InvalidSpec(format!(
                        "variable `{}` appears twice in equation `{}`",
                        term.name(),
                        eq.name
                    )));
                }
                let base = self.categoricals.get(&term.column);
                match (&term.level, base) {
                    (Some(_), None) => {
                        return Err(Error::InvalidSpec(format!(
                            "categorical column `{}` has no declared base level",
                            term.column
                        )))
                    }
                    (Some(level), Some(base)) if level == base => {
                        return Err(Error::InvalidSpec(format!(
                            "base level `{base}` of `{}` cannot be a design column",
                            term.column
                        )))
                    }
                    (None, Some(_)) => {
                        return Err(Error::InvalidSpec(format!(
                            "column `{}` is declared categorical but used without a level",
                            term.column
                        )))
                    }
                    _ => {}
                }
            }
        }
        if self.equations[0].name == self.equations[1].name {
            return Err(Error::InvalidSpec("equation names must differ".into()));
        }
        Ok(())
    }
}
