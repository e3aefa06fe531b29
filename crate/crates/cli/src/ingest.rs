//! CSV ingestion with a configurable column mapping.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use ivmatch_core::{Template, TemplateUnit, Unit};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Maps CSV columns onto unit fields.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub id: String,
    pub dose: String,
    pub treatment: String,
    /// The first outcome is stored on each unit; all are kept in [`Cohort`].
    pub outcomes: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// One-hot encoded with levels in lexicographic order.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Columns that must agree within a pair.
    #[serde(default)]
    pub exact: Vec<String>,
}

/// Encoding of one categorical column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub column: String,
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub units: Vec<Unit>,
    /// Names of `Unit::x` entries: numeric covariates, then `column=level`.
    pub covariate_names: Vec<String>,
    pub categorical: Vec<Levels>,
    pub outcome_names: Vec<String>,
    /// `outcome_values[k][i]`: outcome `k` of unit `i`.
    pub outcome_values: Vec<Vec<f64>>,
}

impl Cohort {
    /// Copy of the units carrying outcome `k`.
    pub fn units_with_outcome(&self, k: usize) -> Vec<Unit> {
        self.units
            .iter()
            .zip(&self.outcome_values[k])
            .map(|(u, &r)| Unit { outcome: r, ..u.clone() })
            .collect()
    }
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::MissingInput(path.to_path_buf()));
        }
        let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
        let headers = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
        let rows = rdr.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
        if rows.is_empty() {
            return Err(CliError::EmptyDataset(path.to_path_buf()));
        }
        Ok(Table { path: path.to_path_buf(), headers, rows })
    }

    fn column(&self, name: &str) -> CliResult<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| CliError::MissingColumn {
            column: name.to_string(),
            path: self.path.clone(),
        })
    }

    fn text(&self, row: usize, col: usize) -> &str {
        self.rows[row].get(col).unwrap_or("")
    }

    /// Row numbers in errors count the header as row 1.
    fn number(&self, row: usize, col: usize) -> CliResult<f64> {
        let s = self.text(row, col);
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::NonNumericCell {
                row: row + 2,
                column: self.headers[col].clone(),
                value: s.to_string(),
            })
    }

    fn binary(&self, row: usize, col: usize) -> CliResult<bool> {
        match self.text(row, col) {
            "1" | "true" | "TRUE" | "True" => Ok(true),
            "0" | "false" | "FALSE" | "False" => Ok(false),
            s => match s.parse::<f64>() {
                Ok(v) if v == 0.0 || v == 1.0 => Ok(v == 1.0),
                _ => Err(CliError::NonNumericCell {
                    row: row + 2,
                    column: self.headers[col].clone(),
                    value: s.to_string(),
                }),
            },
        }
    }

    /// Numeric covariates followed by indicators for `levels`.
    fn covariates(&self, row: usize, numeric: &[usize], cats: &[(usize, &Levels)]) -> CliResult<Vec<f64>> {
        let mut x = Vec::with_capacity(numeric.len());
        for &c in numeric {
            x.push(self.number(row, c)?);
        }
        for (c, lv) in cats {
            let v = self.text(row, *c);
            if !lv.levels.iter().any(|l| l == v) {
                return Err(CliError::Config(format!(
                    "row {}: level {v:?} of {:?} is not among the cohort's levels",
                    row + 2,
                    lv.column
                )));
            }
            x.extend(lv.levels.iter().map(|l| if l == v { 1.0 } else { 0.0 }));
        }
        Ok(x)
    }
}

/// Loads and validates the cohort described by `schema`.
pub fn load_units(path: &Path, schema: &Schema) -> CliResult<Cohort> {
    let t = Table::read(path)?;
    if schema.outcomes.is_empty() {
        return Err(CliError::Config("schema needs at least one outcome column".into()));
    }
    let id = t.column(&schema.id)?;
    let dose = t.column(&schema.dose)?;
    let treat = t.column(&schema.treatment)?;
    let outcomes = schema.outcomes.iter().map(|c| t.column(c)).collect::<CliResult<Vec<_>>>()?;
    let numeric = schema.covariates.iter().map(|c| t.column(c)).collect::<CliResult<Vec<_>>>()?;
    let exact = schema.exact.iter().map(|c| t.column(c)).collect::<CliResult<Vec<_>>>()?;
    let mut categorical = Vec::new();
    for name in &schema.categorical {
        let c = t.column(name)?;
        let levels: BTreeSet<&str> = (0..t.rows.len()).map(|r| t.text(r, c)).collect();
        categorical.push(Levels {
            column: name.clone(),
            levels: levels.into_iter().map(String::from).collect(),
        });
    }
    let cat_cols: Vec<(usize, &Levels)> = schema
        .categorical
        .iter()
        .zip(&categorical)
        .map(|(name, lv)| (t.column(name).expect("checked above"), lv))
        .collect();

    let mut covariate_names = schema.covariates.clone();
    for lv in &categorical {
        covariate_names.extend(lv.levels.iter().map(|l| format!("{}={l}", lv.column)));
    }

    let mut seen = HashSet::new();
    let mut units = Vec::with_capacity(t.rows.len());
    let mut outcome_values = vec![Vec::with_capacity(t.rows.len()); outcomes.len()];
    for r in 0..t.rows.len() {
        let uid = t.text(r, id).to_string();
        if !seen.insert(uid.clone()) {
            return Err(CliError::DuplicateId(uid));
        }
        for (k, &c) in outcomes.iter().enumerate() {
            outcome_values[k].push(t.number(r, c)?);
        }
        let unit = Unit::new(
            uid,
            t.covariates(r, &numeric, &cat_cols)?,
            t.number(r, dose)?,
            t.binary(r, treat)?,
            outcome_values[0][r],
        )?
        .with_exact_keys(exact.iter().map(|&c| t.text(r, c).to_string()).collect());
        units.push(unit);
    }
    Ok(Cohort {
        units,
        covariate_names,
        categorical,
        outcome_names: schema.outcomes.clone(),
        outcome_values,
    })
}

/// Loads template units with the cohort's covariate encoding. The id
/// column is optional; rows are numbered when it is absent.
pub fn load_template(path: &Path, schema: &Schema, cohort: &Cohort) -> CliResult<Template> {
    let t = Table::read(path)?;
    let numeric = schema.covariates.iter().map(|c| t.column(c)).collect::<CliResult<Vec<_>>>()?;
    let cat_cols = cohort
        .categorical
        .iter()
        .map(|lv| t.column(&lv.column).map(|c| (c, lv)))
        .collect::<CliResult<Vec<_>>>()?;
    let id = t.column(&schema.id).ok();
    let units = (0..t.rows.len())
        .map(|r| {
            Ok(TemplateUnit {
                id: id.map_or_else(|| format!("t{r}"), |c| format!("t:{}", t.text(r, c))),
                x: t.covariates(r, &numeric, &cat_cols)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Template::new(units))
}

/// Single-column dose pool: the `dose` column if present, else the first.
pub fn load_dose_pool(path: &Path) -> CliResult<Vec<f64>> {
    let t = Table::read(path)?;
    let c = t.column("dose").unwrap_or(0);
    (0..t.rows.len()).map(|r| t.number(r, c)).collect()
}
