//! Cell-aggregated portfolio data: one CSV row per rating cell.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::hash::{Hash, Hasher};
use std::io::Read;

use crate::error::{Error, Result};

pub const CLAIMS_COLUMN: &str = "claims";
pub const EXPOSURE_COLUMN: &str = "exposure";

/// A categorical risk factor and its ordered levels. The first level is the
/// reference level when encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
}

impl Factor {
    pub fn new<S: Into<String>>(name: S, levels: impl IntoIterator<Item = S>) -> Self {
        Factor {
            name: name.into(),
            levels: levels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FactorSchema {
    factors: Vec<Factor>,
}

impl FactorSchema {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for f in &factors {
            if f.name.is_empty() {
                return Err(Error::Schema("factor with empty name".into()));
            }
            if f.name == CLAIMS_COLUMN || f.name == EXPOSURE_COLUMN {
                return Err(Error::Schema(format!("'{}' is reserved", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("factor '{}' declared twice", f.name)));
            }
            if f.levels.is_empty() {
                return Err(Error::Schema(format!("factor '{}' has no levels", f.name)));
            }
            let distinct: BTreeSet<_> = f.levels.iter().collect();
            if distinct.len() != f.levels.len() {
                return Err(Error::Schema(format!(
                    "factor '{}' has duplicate levels",
                    f.name
                )));
            }
        }
        Ok(FactorSchema { factors })
    }

    /// Builds a schema from a CSV header and its data: every column other than
    /// `claims` and `exposure` is a factor, with levels in natural order
    /// (numeric when every level parses as a number, lexical otherwise).
    pub fn infer(source: &[u8]) -> Result<Self> {
        let mut reader = csv_reader(source);
        let headers = read_headers(&mut reader)?;
        let factor_cols: Vec<(usize, String)> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| *h != CLAIMS_COLUMN && *h != EXPOSURE_COLUMN)
            .map(|(i, h)| (i, h.to_string()))
            .collect();
        let mut levels: Vec<BTreeSet<String>> = vec![BTreeSet::new(); factor_cols.len()];
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(row + 1, &headers, e))?;
            for (slot, (col, name)) in factor_cols.iter().enumerate() {
                let value = record.get(*col).ok_or_else(|| Error::Csv {
                    row: row + 1,
                    column: name.clone(),
                    message: "missing cell".into(),
                })?;
                levels[slot].insert(value.to_string());
            }
        }
        let factors = factor_cols
            .into_iter()
            .zip(levels)
            .filter(|(_, lv)| !lv.is_empty())
            .map(|((_, name), lv)| Factor {
                name,
                levels: natural_order(lv),
            })
            .collect();
        FactorSchema::new(factors)
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }
}

fn natural_order(levels: BTreeSet<String>) -> Vec<String> {
    let mut out: Vec<String> = levels.into_iter().collect();
    if out.iter().all(|l| l.parse::<f64>().is_ok()) {
        out.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            x.total_cmp(&y)
        });
    }
    out
}

/// One rating cell. `levels[i]` indexes into the i-th factor of the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub levels: Vec<usize>,
    pub claims: u64,
    /// Policy-years at risk.
    pub exposure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioDataset {
    schema: FactorSchema,
    rows: Vec<Observation>,
    exposure_defaulted: bool,
}

impl PortfolioDataset {
    pub fn new(schema: FactorSchema, rows: Vec<Observation>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.levels.len() != schema.factors.len() {
                return Err(Error::Schema(format!(
                    "row {} has {} levels for {} factors",
                    i + 1,
                    row.levels.len(),
                    schema.factors.len()
                )));
            }
            for (f, &l) in schema.factors.iter().zip(&row.levels) {
                if l >= f.levels.len() {
                    return Err(Error::Schema(format!(
                        "row {}: level index {l} out of range for factor '{}'",
                        i + 1,
                        f.name
                    )));
                }
            }
            if !(row.exposure > 0.0 && row.exposure.is_finite()) {
                return Err(Error::Value {
                    row: i + 1,
                    message: format!("exposure {} must be positive", row.exposure),
                });
            }
        }
        Ok(PortfolioDataset {
            schema,
            rows,
            exposure_defaulted: false,
        })
    }

    pub fn schema(&self) -> &FactorSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// True when the source had no exposure column and every exposure was set to 1.
    pub fn exposure_defaulted(&self) -> bool {
        self.exposure_defaulted
    }

    pub fn total_claims(&self) -> u64 {
        self.rows.iter().map(|r| r.claims).sum()
    }

    /// Level label of `factor` in row `row`.
    pub fn level(&self, row: usize, factor: &str) -> Option<&str> {
        let f = self.schema.position(factor)?;
        let idx = *self.rows.get(row)?.levels.get(f)?;
        Some(self.schema.factors[f].levels[idx].as_str())
    }

    /// Content hash used to check that two fits saw the same data.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for f in &self.schema.factors {
            f.name.hash(&mut h);
            f.levels.hash(&mut h);
        }
        for r in &self.rows {
            r.levels.hash(&mut h);
            r.claims.hash(&mut h);
            r.exposure.to_bits().hash(&mut h);
        }
        h.finish()
    }
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn read_headers<R: Read>(reader: &mut csv::Reader<R>) -> Result<Vec<String>> {
    let headers = reader.headers().map_err(|e| Error::Csv {
        row: 0,
        column: "<header>".into(),
        message: e.to_string(),
    })?;
    Ok(headers.iter().map(str::to_string).collect())
}

fn csv_error(row: usize, headers: &[String], err: csv::Error) -> Error {
    let column = match err.kind() {
        csv::ErrorKind::UnequalLengths { len, .. } => {
            format!("<record has {len} fields, header has {}>", headers.len())
        }
        _ => "<record>".into(),
    };
    Error::Csv {
        row,
        column,
        message: err.to_string(),
    }
}

/// Reads a cell-aggregated portfolio. Rows keep file order. Without an
/// `exposure` column every exposure is 1 and [`PortfolioDataset::exposure_defaulted`]
/// is set.
pub fn load_portfolio<R: Read>(source: R, schema: &FactorSchema) -> Result<PortfolioDataset> {
    let mut reader = csv_reader(source);
    let headers = read_headers(&mut reader)?;
    let find = |name: &str| headers.iter().position(|h| h == name);

    let factor_cols = schema
        .factors
        .iter()
        .map(|f| {
            find(&f.name)
                .ok_or_else(|| Error::Schema(format!("missing column for factor '{}'", f.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let claims_col = find(CLAIMS_COLUMN)
        .ok_or_else(|| Error::Schema(format!("missing '{CLAIMS_COLUMN}' column")))?;
    let exposure_col = find(EXPOSURE_COLUMN);

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(row, &headers, e))?;
        let cell = |col: usize| -> Result<&str> {
            record.get(col).ok_or_else(|| Error::Csv {
                row,
                column: headers[col].clone(),
                message: "missing cell".into(),
            })
        };

        let mut levels = Vec::with_capacity(factor_cols.len());
        for (f, &col) in schema.factors.iter().zip(&factor_cols) {
            let value = cell(col)?;
            let idx = f.level_index(value).ok_or_else(|| {
                Error::Schema(format!(
                    "row {row}: unknown level '{value}' for factor '{}'",
                    f.name
                ))
            })?;
            levels.push(idx);
        }

        let raw_claims = cell(claims_col)?;
        let claims: i64 = raw_claims.parse().map_err(|_| Error::Csv {
            row,
            column: CLAIMS_COLUMN.into(),
            message: format!("'{raw_claims}' is not an integer count"),
        })?;
        if claims < 0 {
            return Err(Error::Value {
                row,
                message: format!("negative claim count {claims}"),
            });
        }

        let exposure = match exposure_col {
            Some(col) => {
                let raw = cell(col)?;
                let value: f64 = raw.parse().map_err(|_| Error::Csv {
                    row,
                    column: EXPOSURE_COLUMN.into(),
                    message: format!("'{raw}' is not a number"),
                })?;
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::Value {
                        row,
                        message: format!("exposure {raw} must be positive"),
                    });
                }
                value
            }
            None => 1.0,
        };

        rows.push(Observation {
            levels,
            claims: claims as u64,
            exposure,
        });
    }

    Ok(PortfolioDataset {
        schema: schema.clone(),
        rows,
        exposure_defaulted: exposure_col.is_none(),
    })
}

/// Observed claim counts by sex, region, type of car and job class for a
/// fictional motor portfolio observed over seven years. Per-cell exposures
/// are not available, so every cell carries exposure 1.0; fitted
/// intercepts are therefore on a per-cell rather than per-policy-year scale.
pub const BUNDLED_PORTFOLIO_CSV: &str = include_str!("../../data/portfolio.csv");

pub fn bundled_schema() -> FactorSchema {
    let lv = |n: usize| (1..=n).map(|i| i.to_string()).collect::<Vec<_>>();
    FactorSchema::new(vec![
        Factor {
            name: "sex".into(),
            levels: lv(2),
        },
        Factor {
            name: "region".into(),
            levels: lv(3),
        },
        Factor {
            name: "type".into(),
            levels: lv(3),
        },
        Factor {
            name: "job".into(),
            levels: lv(3),
        },
    ])
    .expect("static schema is valid")
}

pub fn bundled_portfolio() -> PortfolioDataset {
    load_portfolio(BUNDLED_PORTFOLIO_CSV.as_bytes(), &bundled_schema())
        .expect("bundled portfolio parses")
}
