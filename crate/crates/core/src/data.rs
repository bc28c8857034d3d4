use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response distribution; the link is fixed by the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Normal errors, identity link.
    Gaussian,
    /// Bernoulli outcome, logit link.
    Binomial,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Gaussian => write!(f, "gaussian"),
            Family::Binomial => write!(f, "binomial"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "binomial" | "logistic" => Ok(Family::Binomial),
            other => Err(Error::domain(format!("unknown family `{other}`"))),
        }
    }
}

/// Immutable column-oriented table with a designated outcome column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    outcome: usize,
    family: Family,
}

impl Dataset {
    pub fn new(
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        outcome: &str,
        family: Family,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidData(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != n {
                return Err(Error::InvalidData(format!(
                    "column `{name}` has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "column `{name}` has non-finite value at row {i}"
                )));
            }
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::InvalidData(format!("duplicate column name `{a}`")));
            }
        }
        let outcome = names
            .iter()
            .position(|s| s == outcome)
            .ok_or_else(|| Error::UnknownVariable(outcome.to_string()))?;
        if family == Family::Binomial && columns[outcome].iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidData(
                "binomial outcome must be coded 0/1".into(),
            ));
        }
        Ok(Dataset {
            names,
            columns,
            outcome,
            family,
        })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn outcome_name(&self) -> &str {
        &self.names[self.outcome]
    }

    pub fn outcome(&self) -> &[f64] {
        &self.columns[self.outcome]
    }

    /// All non-outcome column names in table order.
    pub fn covariate_names(&self) -> Vec<String> {
        self.names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.outcome)
            .map(|(_, s)| s.clone())
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.index_of(name)?])
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.names.iter().any(|s| s == name)
    }

    /// New dataset made of the given rows (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            outcome: self.outcome,
            family: self.family,
        }
    }

    /// Copy with the outcome column replaced.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        let mut columns = self.columns.clone();
        columns[self.outcome] = y;
        Dataset::new(self.names.clone(), columns, self.outcome_name(), self.family)
    }

    /// Copy with an extra (or replaced) covariate column.
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Dataset> {
        let mut names = self.names.clone();
        let mut columns = self.columns.clone();
        match names.iter().position(|s| s == name) {
            Some(i) => columns[i] = values,
            None => {
                names.push(name.to_string());
                columns.push(values);
            }
        }
        Dataset::new(names, columns, self.outcome_name(), self.family)
    }
}

pub(crate) fn distinct_count(x: &[f64]) -> usize {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}
