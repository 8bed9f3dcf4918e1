//! Synthetic garage datasets drawn from a declared truth, and closed-form
//! likelihood oracles for linear-normal random-coefficient systems.
//!
//! Generation is ChaCha8 seeded with the 64-bit truth seed; observation `i`
//! reads stream `i`, so every row is reproducible on its own. Uniforms are
//! `(m + 0.5)/2⁵³` for the top 53 bits `m` of a 64-bit output and normals
//! are their inverse-CDF images, which keeps output identical across
//! platforms.

mod oracle;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    encode_unchecked, DesignMatrices, PairedGapObservation, SystemData, REQUIRED_COLUMNS,
};
use crate::normal::inverse_normal_cdf;
use crate::rp::RpParams;
use crate::spec::ModelSpec;
use crate::sure::ErrorCovariance;
use crate::{Error, Result};

pub use oracle::{
    exact_marginal_loglik, gauss_hermite, gaussian_marginal_loglik, quadrature_loglik,
    MAX_QUADRATURE_DIMS,
};

/// The nine US Census divisions.
pub const US_DIVISIONS: [&str; 9] = [
    "New England",
    "Middle Atlantic",
    "East North Central",
    "West North Central",
    "South Atlantic",
    "East South Central",
    "West South Central",
    "Mountain",
    "Pacific",
];

pub const FIRST_MODEL_YEAR: i32 = 1984;
pub const LAST_MODEL_YEAR: i32 = 2014;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum Recipe {
    Bernoulli {
        p: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Equal probabilities when `probs` is omitted.
    Categorical {
        levels: Vec<String>,
        #[serde(default)]
        probs: Option<Vec<f64>>,
    },
}

impl Recipe {
    fn validate(&self, column: &str) -> Result<()> {
        let bad = |why: &str| Err(Error::InvalidSpec(format!("recipe for '{column}': {why}")));
        match self {
            Recipe::Bernoulli { p } if !(0.0..=1.0).contains(p) => bad("p outside [0, 1]"),
            Recipe::Uniform { lo, hi } if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() => {
                bad("need finite lo <= hi")
            }
            Recipe::Normal { mean, sd }
                if !mean.is_finite() || !(*sd >= 0.0) || !sd.is_finite() =>
            {
                bad("need finite mean and sd >= 0")
            }
            Recipe::Categorical { levels, .. } if levels.is_empty() => bad("no levels"),
            Recipe::Categorical {
                levels,
                probs: Some(p),
            } if p.len() != levels.len()
                || p.iter().any(|v| !(*v >= 0.0))
                || !(p.iter().sum::<f64>() > 0.0) =>
            {
                bad("probs must be nonnegative, one per level, with a positive sum")
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> String {
        match self {
            Recipe::Bernoulli { p } => u8::from(uniform(rng) < *p).to_string(),
            Recipe::Uniform { lo, hi } => (lo + (hi - lo) * uniform(rng)).to_string(),
            Recipe::Normal { mean, sd } => (mean + sd * normal(rng)).to_string(),
            Recipe::Categorical { levels, probs } => {
                let u = uniform(rng);
                let idx = match probs {
                    None => ((u * levels.len() as f64) as usize).min(levels.len() - 1),
                    Some(p) => {
                        let total: f64 = p.iter().sum();
                        let mut acc = 0.0;
                        p.iter()
                            .position(|w| {
                                acc += w / total;
                                u < acc
                            })
                            .unwrap_or(levels.len() - 1)
                    }
                };
                levels[idx].clone()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTruth {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
}

fn default_epa() -> Recipe {
    Recipe::Uniform { lo: 15.0, hi: 45.0 }
}

/// A data-generating process for the two-equation gap model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub spec: ModelSpec,
    /// Coefficient per design column name, per equation; means for random
    /// columns.
    pub coefficients: [BTreeMap<String, f64>; 2],
    /// Spread per random column name, per equation.
    #[serde(default)]
    pub random_sd: [BTreeMap<String, f64>; 2],
    pub error: ErrorTruth,
    /// Recipe per source column referenced by the spec. `us_division` and the
    /// model-year columns are generated when no recipe is given.
    #[serde(default)]
    pub covariates: BTreeMap<String, Recipe>,
    /// EPA rating recipe, applied to both vehicles.
    #[serde(default = "default_epa")]
    pub epa: Recipe,
    pub n: usize,
    pub seed: u64,
}

const GENERATED: [&str; 3] = ["model_year_1", "model_year_2", "us_division"];

impl TruthSpec {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.n == 0 {
            return Err(Error::InvalidSpec("n must be at least 1".into()));
        }
        let ErrorTruth {
            sigma1,
            sigma2,
            rho,
        } = self.error;
        if !(sigma1 >= 0.0 && sigma2 >= 0.0 && sigma1.is_finite() && sigma2.is_finite()) {
            return Err(Error::InvalidSpec(
                "error standard deviations must be finite and >= 0".into(),
            ));
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidSpec("|rho| must be below 1".into()));
        }
        for (e, eq) in self.spec.equations.iter().enumerate() {
            let names = eq.column_names();
            for name in &names {
                match self.coefficients[e].get(name) {
                    Some(v) if v.is_finite() => {}
                    _ => {
                        return Err(Error::InvalidSpec(format!(
                            "equation '{}' needs a finite coefficient for '{name}'",
                            eq.name
                        )))
                    }
                }
            }
            if let Some(extra) = self.coefficients[e].keys().find(|k| !names.contains(k)) {
                return Err(Error::UnknownVariable(extra.clone()));
            }
            let random: Vec<String> = eq
                .random_columns()
                .into_iter()
                .map(|j| names[j].clone())
                .collect();
            for name in &random {
                match self.random_sd[e].get(name) {
                    Some(v) if *v >= 0.0 && v.is_finite() => {}
                    _ => {
                        return Err(Error::InvalidSpec(format!(
                            "random coefficient '{name}' needs a finite sd >= 0"
                        )))
                    }
                }
            }
            if let Some(extra) = self.random_sd[e].keys().find(|k| !random.contains(k)) {
                return Err(Error::InvalidSpec(format!(
                    "'{extra}' has an sd but is not random"
                )));
            }
            for term in &eq.terms {
                let covered = self.covariates.contains_key(&term.column)
                    || GENERATED.contains(&term.column.as_str());
                if !covered {
                    return Err(Error::InvalidSpec(format!(
                        "no recipe for column '{}'",
                        term.column
                    )));
                }
                if term.level.is_some()
                    && !matches!(
                        self.covariates.get(&term.column),
                        None | Some(Recipe::Categorical { .. })
                    )
                {
                    return Err(Error::InvalidSpec(format!(
                        "column '{}' is categorical but its recipe is not",
                        term.column
                    )));
                }
            }
        }
        for (column, recipe) in &self.covariates {
            if REQUIRED_COLUMNS.contains(&column.as_str()) && !GENERATED.contains(&column.as_str())
            {
                return Err(Error::InvalidSpec(format!(
                    "'{column}' is generated from the model"
                )));
            }
            recipe.validate(column)?;
        }
        self.epa.validate("epa")?;
        Ok(())
    }

    /// Truth as natural-scale parameters (needs positive error variances).
    pub fn params(&self) -> Result<RpParams> {
        self.validate()?;
        let beta = [0, 1].map(|e| {
            DVector::from_iterator(
                self.spec.equations[e].column_names().len(),
                self.spec.equations[e]
                    .column_names()
                    .iter()
                    .map(|n| self.coefficients[e][n]),
            )
        });
        Ok(RpParams {
            beta,
            sigma: self.random_sds(),
            cov: ErrorCovariance::from_sd_rho(
                self.error.sigma1,
                self.error.sigma2,
                self.error.rho,
            )?,
        })
    }

    /// Spreads in draw-dimension order.
    fn random_sds(&self) -> Vec<f64> {
        (0..2)
            .flat_map(|e| {
                let names = self.spec.equations[e].column_names();
                self.spec.equations[e]
                    .random_columns()
                    .into_iter()
                    .map(move |j| names[j].clone())
                    .map(move |n| self.random_sd[e][&n])
            })
            .collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    inverse_normal_cdf(uniform(rng)).expect("uniform draw lies inside (0, 1)")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    /// Source columns in output order.
    pub headers: Vec<String>,
    /// Gaps hold the simulated responses exactly.
    pub observations: Vec<PairedGapObservation>,
    pub design: DesignMatrices,
    pub y: [DVector<f64>; 2],
    /// Realized random coefficients, per observation in draw-dimension order.
    pub coef_draws: Vec<Vec<f64>>,
    /// Realized errors `(ξ1, ξ2)`.
    pub errors: Vec<[f64; 2]>,
}

/// Draw covariates, random coefficients, and correlated errors per the truth
/// and emit `y_v = x_v'β_v,i + ξ_v`.
pub fn simulate_dataset(truth: &TruthSpec) -> Result<SimulatedDataset> {
    truth.validate()?;
    let sds = truth.random_sds();
    let ErrorTruth {
        sigma1,
        sigma2,
        rho,
    } = truth.error;
    let rho_c = (1.0 - rho * rho).sqrt();
    let year = |rng: &mut ChaCha8Rng| {
        let span = (LAST_MODEL_YEAR - FIRST_MODEL_YEAR + 1) as f64;
        FIRST_MODEL_YEAR + ((uniform(rng) * span) as i32).min(LAST_MODEL_YEAR - FIRST_MODEL_YEAR)
    };
    let division = Recipe::Categorical {
        levels: US_DIVISIONS.iter().map(|s| s.to_string()).collect(),
        probs: None,
    };
    let extra: Vec<&String> = truth
        .covariates
        .keys()
        .filter(|c| !GENERATED.contains(&c.as_str()))
        .collect();

    let mut observations = Vec::with_capacity(truth.n);
    let mut epa = Vec::with_capacity(truth.n);
    let mut shocks = Vec::with_capacity(truth.n);
    for i in 0..truth.n {
        let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
        rng.set_stream(i as u64);
        let mut fields = BTreeMap::new();
        let e = [truth.epa.draw(&mut rng), truth.epa.draw(&mut rng)];
        let mut years = [year(&mut rng), year(&mut rng)];
        years.sort_unstable();
        fields.insert("model_year_1".to_string(), years[0].to_string());
        fields.insert("model_year_2".to_string(), years[1].to_string());
        let div = truth.covariates.get("us_division").unwrap_or(&division);
        fields.insert("us_division".to_string(), div.draw(&mut rng));
        for col in &extra {
            fields.insert(col.to_string(), truth.covariates[*col].draw(&mut rng));
        }
        let z: Vec<f64> = (0..sds.len()).map(|_| normal(&mut rng)).collect();
        let (z1, z2) = (normal(&mut rng), normal(&mut rng));
        let epa_v = [0, 1].map(|v| e[v].parse::<f64>().expect("numeric epa draw"));
        epa.push(epa_v);
        shocks.push((z, [sigma1 * z1, sigma2 * (rho * z1 + rho_c * z2)]));
        observations.push(PairedGapObservation {
            garage_id: format!("S{:07}", i + 1),
            row: i + 1,
            gap: [0.0; 2],
            diff: [0.0; 2],
            fields,
        });
    }

    let design = encode_unchecked(&observations, &truth.spec)?;
    let params = truth.params_unchecked();
    let mut y = [DVector::zeros(truth.n), DVector::zeros(truth.n)];
    let mut coef_draws = Vec::with_capacity(truth.n);
    let mut errors = Vec::with_capacity(truth.n);
    for (i, (z, xi)) in shocks.into_iter().enumerate() {
        let mut realized = Vec::with_capacity(sds.len());
        let mut d = 0;
        for eq in 0..2 {
            let mut m = 0.0;
            for (j, &mean) in params[eq].iter().enumerate() {
                let mut b = mean;
                if design.random[eq].contains(&j) {
                    b += sds[d] * z[d];
                    realized.push(b);
                    d += 1;
                }
                m += design.x[eq][(i, j)] * b;
            }
            y[eq][i] = m + xi[eq];
        }
        let o = &mut observations[i];
        for v in 0..2 {
            o.gap[v] = y[v][i];
            o.diff[v] = y[v][i] * epa[i][v] - epa[i][v];
            o.fields
                .insert(format!("epa_mpg_{}", v + 1), epa[i][v].to_string());
            o.fields.insert(
                format!("my_mpg_{}", v + 1),
                (y[v][i] * epa[i][v]).to_string(),
            );
        }
        o.fields
            .insert("garage_id".to_string(), o.garage_id.clone());
        coef_draws.push(realized);
        errors.push(xi);
    }

    let mut headers: Vec<String> = REQUIRED_COLUMNS.iter().map(|s| s.to_string()).collect();
    headers.extend(extra.into_iter().cloned());
    Ok(SimulatedDataset {
        headers,
        observations,
        design,
        y,
        coef_draws,
        errors,
    })
}

impl TruthSpec {
    fn params_unchecked(&self) -> [Vec<f64>; 2] {
        [0, 1].map(|e| {
            self.spec.equations[e]
                .column_names()
                .iter()
                .map(|n| self.coefficients[e][n])
                .collect()
        })
    }
}

impl SimulatedDataset {
    pub fn system_data(&self) -> Result<SystemData> {
        SystemData::new(self.design.clone(), self.y[0].clone(), self.y[1].clone())
    }

    /// Rows in the raw garage schema; `my_mpg_v = y_v · epa_mpg_v`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        if let Some(o) = self
            .observations
            .iter()
            .find(|o| !(o.gap[0] > 0.0 && o.gap[1] > 0.0))
        {
            return Err(Error::Domain(format!(
                "garage {} has a nonpositive simulated gap; the raw schema cannot hold it",
                o.garage_id
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for o in &self.observations {
            w.write_record(self.headers.iter().map(|h| o.fields[h].as_str()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Realized random coefficients and errors, one row per garage.
    pub fn write_draws_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["garage_id".to_string()];
        for e in 0..2 {
            for &j in &self.design.random[e] {
                header.push(format!(
                    "{}:{}",
                    self.design.equation_names[e], self.design.names[e][j]
                ));
            }
        }
        header.extend(["xi_1".to_string(), "xi_2".to_string()]);
        w.write_record(&header)?;
        for (i, o) in self.observations.iter().enumerate() {
            let mut row = vec![o.garage_id.clone()];
            row.extend(self.coef_draws[i].iter().map(f64::to_string));
            row.extend(self.errors[i].iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
