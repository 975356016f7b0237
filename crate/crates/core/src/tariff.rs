//! Rating output from a fitted frequency model.
//!
//! Rates are expected claims per unit exposure: the inverse link applied to
//! the linear predictor with a zero offset. Under the log link a cell's rate
//! is the base-cell rate (every factor at its reference level) times one
//! relativity `exp(β)` per non-reference level it carries.

use serde::Serialize;

use crate::design::{ColumnSpec, DesignInfo, Factor};
use crate::error::{Error, Result};
use crate::family::FamilySpec;
use crate::fitter::FitResult;

/// Coefficients plus the column layout needed to price any cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingModel {
    pub info: DesignInfo,
    pub coefficients: Vec<f64>,
    pub family: FamilySpec,
}

impl RatingModel {
    pub fn new(info: DesignInfo, coefficients: Vec<f64>, family: FamilySpec) -> Result<Self> {
        if coefficients.len() != info.n_columns() {
            return Err(Error::Invalid(format!(
                "{} coefficients for {} columns",
                coefficients.len(),
                info.n_columns()
            )));
        }
        if info.has_covariates() {
            return Err(Error::Invalid(
                "tariffs need a model built from categorical factors only".into(),
            ));
        }
        Ok(RatingModel {
            info,
            coefficients,
            family,
        })
    }

    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        if !fit.converged {
            return Err(Error::Invalid("fit did not converge".into()));
        }
        RatingModel::new(fit.info.clone(), fit.coefficients.clone(), fit.family)
    }

    fn rate_at(&self, levels: &[usize]) -> Result<f64> {
        let eta: f64 = self
            .info
            .encode_levels(levels)
            .iter()
            .zip(&self.coefficients)
            .map(|(x, b)| x * b)
            .sum();
        let rate = (self.family.inverse_link)(eta);
        if rate > 0.0 && rate.is_finite() {
            Ok(rate)
        } else {
            Err(Error::Domain(format!(
                "predicted rate {rate} is not positive"
            )))
        }
    }
}

/// Expected claims per unit exposure for the cell given as `(factor, level)` pairs.
pub fn predict_rate(model: &RatingModel, cell: &[(&str, &str)]) -> Result<f64> {
    let levels = model.info.level_indices(cell)?;
    model.rate_at(&levels)
}

/// Years until one claim is expected: `1 / rate`.
pub fn years_to_one_claim(rate: f64) -> Result<f64> {
    if rate > 0.0 && rate.is_finite() {
        Ok(1.0 / rate)
    } else {
        Err(Error::Domain(format!("rate {rate} must be positive")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TariffCell {
    /// One level per dimension, in dimension order.
    pub levels: Vec<String>,
    pub annual_rate: f64,
    pub years_to_one_claim: f64,
    /// Rate divided by the base-cell rate.
    pub relativity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TariffDimension {
    pub name: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TariffTable {
    pub dimensions: Vec<TariffDimension>,
    /// Every level combination; the first dimension varies slowest.
    pub cells: Vec<TariffCell>,
}

impl TariffTable {
    pub fn cell(&self, levels: &[&str]) -> Option<&TariffCell> {
        self.cells.iter().find(|c| c.levels == levels)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = self.dimensions.iter().map(|d| d.name.as_str()).collect();
        header.extend(["annual_rate", "years_to_one_claim", "relativity"]);
        let io = |e: csv::Error| Error::Invalid(format!("csv write failed: {e}"));
        w.write_record(&header).map_err(io)?;
        for c in &self.cells {
            let mut rec = c.levels.clone();
            rec.push(c.annual_rate.to_string());
            rec.push(c.years_to_one_claim.to_string());
            rec.push(c.relativity.to_string());
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Invalid(format!("csv write failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tariff serializes")
    }
}

fn grid(factors: &[Factor]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for f in factors {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..f.levels.len()).map(move |l| {
                    let mut next = prefix.clone();
                    next.push(l);
                    next
                })
            })
            .collect();
    }
    out
}

/// Prices every combination of the model's factor levels.
pub fn build_tariff_table(model: &RatingModel) -> Result<TariffTable> {
    let factors = &model.info.factors;
    let base = model.rate_at(&vec![0; factors.len()])?;
    let cells = grid(factors)
        .into_iter()
        .map(|levels| {
            let rate = model.rate_at(&levels)?;
            Ok(TariffCell {
                levels: levels
                    .iter()
                    .zip(factors)
                    .map(|(&l, f)| f.levels[l].clone())
                    .collect(),
                annual_rate: rate,
                years_to_one_claim: years_to_one_claim(rate)?,
                relativity: rate / base,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TariffTable {
        dimensions: factors
            .iter()
            .map(|f| TariffDimension {
                name: f.name.clone(),
                levels: f.levels.clone(),
            })
            .collect(),
        cells,
    })
}

/// Per-level relativities of a main-effects factor, `exp(β)` with the
/// reference level at 1. `None` when the factor is absent or takes part in
/// an interaction.
pub fn factor_relativities(model: &RatingModel, factor: &str) -> Option<Vec<f64>> {
    let f = model.info.factors.iter().position(|x| x.name == factor)?;
    let interacts = model
        .info
        .columns
        .iter()
        .any(|c| matches!(c, ColumnSpec::Interaction { a, b } if a.0 == f || b.0 == f));
    if interacts {
        return None;
    }
    let mut out = vec![1.0; model.info.factors[f].levels.len()];
    for (c, b) in model.info.columns.iter().zip(&model.coefficients) {
        if let ColumnSpec::Main { factor, level } = *c {
            if factor == f {
                out[level] = (model.family.inverse_link)(*b) / (model.family.inverse_link)(0.0);
            }
        }
    }
    Some(out)
}
