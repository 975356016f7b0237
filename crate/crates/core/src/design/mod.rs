//! Portfolio data, model formulas and design-matrix encoding.
//!
//! Categorical factors use treatment coding: the first declared level of each
//! factor is the reference and gets no column, so its coefficient is fixed at
//! zero on the log scale (a relativity of 1). Encoding every level alongside
//! the intercept would make the matrix singular; [`encode_design`] reports
//! that case instead of papering over it.

mod formula;
mod portfolio;

pub use formula::{parse_formula, ModelFormula, Term};
pub use portfolio::{
    bundled_portfolio, bundled_schema, load_portfolio, Factor, FactorSchema, Observation,
    PortfolioDataset, BUNDLED_PORTFOLIO_CSV, CLAIMS_COLUMN, EXPOSURE_COLUMN,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const INTERCEPT_LABEL: &str = "(Intercept)";

/// What one design column encodes. Factor indices refer to [`DesignInfo::factors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSpec {
    Intercept,
    Main {
        factor: usize,
        level: usize,
    },
    Interaction {
        a: (usize, usize),
        b: (usize, usize),
    },
    Covariate,
}

/// The column structure of a model, independent of any particular data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignInfo {
    pub terms: Vec<Term>,
    /// Factors used by the model, in schema declaration order.
    pub factors: Vec<Factor>,
    pub columns: Vec<ColumnSpec>,
    pub column_labels: Vec<String>,
}

impl DesignInfo {
    /// Lays out the columns of `formula` against `schema`. Unknown factor
    /// names are reported here.
    pub fn new(schema: &FactorSchema, formula: &ModelFormula) -> Result<Self> {
        for name in formula.factors() {
            if schema.factor(name).is_none() {
                return Err(Error::UnknownFactor(name.to_string()));
            }
        }
        let used = formula.factors();
        let factors: Vec<Factor> = schema
            .factors()
            .iter()
            .filter(|f| used.contains(&f.name.as_str()))
            .cloned()
            .collect();
        let index = |name: &str| factors.iter().position(|f| f.name == name).unwrap();

        let mut columns = Vec::new();
        let mut labels = Vec::new();
        for term in &formula.terms {
            match term {
                Term::Intercept => {
                    columns.push(ColumnSpec::Intercept);
                    labels.push(INTERCEPT_LABEL.to_string());
                }
                Term::Main(name) => {
                    let f = index(name);
                    for level in 1..factors[f].levels.len() {
                        columns.push(ColumnSpec::Main { factor: f, level });
                        labels.push(format!("{}{}", name, factors[f].levels[level]));
                    }
                }
                Term::Interaction(a, b) => {
                    let (fa, fb) = (index(a), index(b));
                    // first factor varies fastest
                    for lb in 1..factors[fb].levels.len() {
                        for la in 1..factors[fa].levels.len() {
                            columns.push(ColumnSpec::Interaction {
                                a: (fa, la),
                                b: (fb, lb),
                            });
                            labels.push(format!(
                                "{}{}:{}{}",
                                a, factors[fa].levels[la], b, factors[fb].levels[lb]
                            ));
                        }
                    }
                }
                Term::Covariate(name) => {
                    return Err(Error::Invalid(format!(
                        "covariate term '{name}' cannot be encoded from a portfolio"
                    )))
                }
            }
        }
        Ok(DesignInfo {
            terms: formula.terms.clone(),
            factors,
            columns,
            column_labels: labels,
        })
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Encodes one cell given a level index for each of [`DesignInfo::factors`].
    pub fn encode_levels(&self, levels: &[usize]) -> Vec<f64> {
        let hit = |(f, l): (usize, usize)| levels[f] == l;
        self.columns
            .iter()
            .map(|c| match *c {
                ColumnSpec::Intercept => 1.0,
                ColumnSpec::Main { factor, level } => f64::from(u8::from(levels[factor] == level)),
                ColumnSpec::Interaction { a, b } => f64::from(u8::from(hit(a) && hit(b))),
                ColumnSpec::Covariate => f64::NAN,
            })
            .collect()
    }

    /// Resolves `(factor, level)` labels to level indices for [`DesignInfo::encode_levels`].
    /// Every model factor must be given; extra factors are ignored.
    pub fn level_indices(&self, cell: &[(&str, &str)]) -> Result<Vec<usize>> {
        self.factors
            .iter()
            .map(|f| {
                let (_, level) =
                    cell.iter()
                        .find(|(name, _)| *name == f.name)
                        .ok_or_else(|| {
                            Error::Invalid(format!("no level given for factor '{}'", f.name))
                        })?;
                f.level_index(level).ok_or_else(|| {
                    Error::Schema(format!("unknown level '{level}' for factor '{}'", f.name))
                })
            })
            .collect()
    }

    pub fn has_covariates(&self) -> bool {
        self.columns.contains(&ColumnSpec::Covariate)
    }
}

/// A numeric model matrix together with the vectors a fit needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub info: DesignInfo,
    pub matrix: DMatrix<f64>,
    pub response: DVector<f64>,
    /// Added to the linear predictor with coefficient 1 (log exposure or zeros).
    pub offset: DVector<f64>,
    /// Prior weights `w` (dispersion per observation is `φ/w`).
    pub weights: DVector<f64>,
    /// Identifies the data the matrix was built from.
    pub data_fingerprint: u64,
}

impl DesignMatrix {
    /// Wraps raw numeric columns, e.g. for continuous covariates. A column
    /// labelled `(Intercept)` is treated as the intercept term.
    pub fn from_parts(
        matrix: DMatrix<f64>,
        labels: Vec<String>,
        response: DVector<f64>,
        offset: DVector<f64>,
        weights: DVector<f64>,
    ) -> Result<Self> {
        let n = matrix.nrows();
        if labels.len() != matrix.ncols() {
            return Err(Error::Invalid(format!(
                "{} labels for {} columns",
                labels.len(),
                matrix.ncols()
            )));
        }
        if response.len() != n || offset.len() != n || weights.len() != n {
            return Err(Error::Invalid(
                "response, offset and weights must have one entry per row".into(),
            ));
        }
        if matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid(
                "design and offset entries must be finite".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Invalid("prior weights must be positive".into()));
        }
        check_full_rank(&matrix, &labels)?;

        let (terms, columns) = labels
            .iter()
            .map(|l| {
                if l == INTERCEPT_LABEL {
                    (Term::Intercept, ColumnSpec::Intercept)
                } else {
                    (Term::Covariate(l.clone()), ColumnSpec::Covariate)
                }
            })
            .unzip();

        let mut fp = std::collections::hash_map::DefaultHasher::new();
        for v in response.iter().chain(offset.iter()).chain(weights.iter()) {
            std::hash::Hash::hash(&v.to_bits(), &mut fp);
        }

        Ok(DesignMatrix {
            info: DesignInfo {
                terms,
                factors: Vec::new(),
                columns,
                column_labels: labels,
            },
            matrix,
            response,
            offset,
            weights,
            data_fingerprint: std::hash::Hasher::finish(&fp),
        })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn column_labels(&self) -> &[String] {
        &self.info.column_labels
    }

    pub fn has_intercept(&self) -> bool {
        self.info.columns.contains(&ColumnSpec::Intercept)
    }
}

/// Encodes `data` under `formula`.
///
/// The offset vector is `log(exposure)` when the formula declares
/// `offset(log(exposure))` and zero otherwise. Prior weights are all 1.
pub fn encode_design(data: &PortfolioDataset, formula: &ModelFormula) -> Result<DesignMatrix> {
    if formula.response != CLAIMS_COLUMN {
        return Err(Error::Schema(format!(
            "response '{}' not found; the portfolio response column is '{CLAIMS_COLUMN}'",
            formula.response
        )));
    }
    if let Some(col) = &formula.offset {
        if col != EXPOSURE_COLUMN {
            return Err(Error::Schema(format!(
                "offset column '{col}' not found; only '{EXPOSURE_COLUMN}' is numeric"
            )));
        }
    }
    let info = DesignInfo::new(data.schema(), formula)?;
    if data.is_empty() {
        return Err(Error::Invalid("cannot encode an empty dataset".into()));
    }

    // schema position of each model factor
    let positions: Vec<usize> = info
        .factors
        .iter()
        .map(|f| data.schema().position(&f.name).unwrap())
        .collect();

    let n = data.len();
    let p = info.n_columns();
    let mut matrix = DMatrix::zeros(n, p);
    for (i, row) in data.rows().iter().enumerate() {
        let levels: Vec<usize> = positions.iter().map(|&f| row.levels[f]).collect();
        for (j, v) in info.encode_levels(&levels).into_iter().enumerate() {
            matrix[(i, j)] = v;
        }
    }

    let response = DVector::from_iterator(n, data.rows().iter().map(|r| r.claims as f64));
    let offset = match formula.offset {
        Some(_) => DVector::from_iterator(n, data.rows().iter().map(|r| r.exposure.ln())),
        None => DVector::zeros(n),
    };

    check_full_rank(&matrix, &info.column_labels)?;

    Ok(DesignMatrix {
        info,
        matrix,
        response,
        offset,
        weights: DVector::from_element(n, 1.0),
        data_fingerprint: data.fingerprint(),
    })
}

/// Modified Gram-Schmidt sweep: a column whose residual after projecting out
/// the accepted columns is negligible relative to its norm is dependent.
fn check_full_rank(matrix: &DMatrix<f64>, labels: &[String]) -> Result<()> {
    const TOL: f64 = 1e-9;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for (j, col) in matrix.column_iter().enumerate() {
        let norm = col.norm();
        let mut v: DVector<f64> = col.into_owned();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let rest = v.norm();
        if norm == 0.0 || rest <= TOL * norm {
            dependent.push(labels[j].clone());
        } else {
            basis.push(v / rest);
        }
    }
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient { columns: dependent })
    }
}
