//! Model specifications: terms, their transformations, and design matrices.

use serde::{Deserialize, Serialize};

use crate::categorize::CutScheme;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fp::{fp_basis, FpPowers, PreTransform};
use crate::glm::{fit_columns, FitResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Linear,
    /// Fractional polynomial applied after the pre-transformation.
    Fp { powers: FpPowers, pre: PreTransform },
    /// 1 where the value exceeds `threshold`, else 0.
    Indicator { threshold: f64 },
    Categorical { scheme: CutScheme },
    /// FP of the positive part of a spike-at-zero variable, anchored so that
    /// rows with value 0 contribute exactly 0.
    SpikeFp { powers: FpPowers, pre: PreTransform },
}

impl Transform {
    pub fn columns(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        match self {
            Transform::Linear => Ok(vec![x.to_vec()]),
            Transform::Fp { powers, pre } => fp_basis(&pre.apply(x), powers),
            Transform::Indicator { threshold } => Ok(vec![x
                .iter()
                .map(|&v| if v > *threshold { 1.0 } else { 0.0 })
                .collect()]),
            Transform::Categorical { scheme } => Ok(scheme.columns(x)),
            Transform::SpikeFp { powers, pre } => {
                if let Some(v) = x.iter().find(|v| **v < 0.0) {
                    return Err(Error::domain(format!(
                        "spike-at-zero variable has negative value {v}"
                    )));
                }
                let origin = fp_basis(&[pre.apply_one(0.0)], powers)?;
                let positive: Vec<f64> = x
                    .iter()
                    .map(|&v| if v > 0.0 { pre.apply_one(v) } else { pre.apply_one(0.0) })
                    .collect();
                let mut cols = fp_basis(&positive, powers)?;
                for (col, o) in cols.iter_mut().zip(&origin) {
                    for (c, &v) in col.iter_mut().zip(x) {
                        *c = if v > 0.0 { *c - o[0] } else { 0.0 };
                    }
                }
                Ok(cols)
            }
        }
    }

    pub fn n_columns(&self) -> usize {
        match self {
            Transform::Linear | Transform::Indicator { .. } => 1,
            Transform::Fp { powers, .. } | Transform::SpikeFp { powers, .. } => powers.n_columns(),
            Transform::Categorical { scheme } => scheme.n_columns(),
        }
    }

    pub fn column_labels(&self, var: &str) -> Vec<String> {
        match self {
            Transform::Linear => vec![var.to_string()],
            Transform::Fp { powers, .. } => fp_labels(var, powers, ""),
            Transform::SpikeFp { powers, .. } => fp_labels(var, powers, "+"),
            Transform::Indicator { threshold } => vec![format!("{var}>{threshold}")],
            Transform::Categorical { scheme } => scheme.labels(var),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Transform::Linear => "linear".into(),
            Transform::Fp { powers, pre } => format!(
                "FP{}{} (shift {}, scale {})",
                powers.degree(),
                powers,
                pre.shift,
                pre.scale
            ),
            Transform::SpikeFp { powers, .. } => {
                format!("positive-part FP{}{}", powers.degree(), powers)
            }
            Transform::Indicator { threshold } => format!("indicator(>{threshold})"),
            Transform::Categorical { scheme } => scheme.describe(),
        }
    }
}

pub(crate) fn fp_labels(var: &str, powers: &FpPowers, suffix: &str) -> Vec<String> {
    let one = |p: f64| {
        if p == 0.0 {
            format!("log({var}{suffix})")
        } else {
            format!("{var}{suffix}^{p}")
        }
    };
    let p = powers.powers();
    if p.len() == 1 {
        vec![one(p[0])]
    } else if powers.is_repeated() {
        vec![one(p[0]), format!("{}*log({var}{suffix})", one(p[0]))]
    } else {
        vec![one(p[0]), one(p[1])]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub variable: String,
    pub transform: Transform,
}

impl Term {
    pub fn new(variable: &str, transform: Transform) -> Self {
        Term {
            variable: variable.to_string(),
            transform,
        }
    }

    pub fn linear(variable: &str) -> Self {
        Self::new(variable, Transform::Linear)
    }

    pub fn fp(variable: &str, powers: FpPowers, pre: PreTransform) -> Self {
        Self::new(variable, Transform::Fp { powers, pre })
    }

    pub fn label(&self) -> String {
        match &self.transform {
            Transform::Linear => self.variable.clone(),
            t => format!("{} [{}]", self.variable, t.describe()),
        }
    }

    pub fn columns(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        self.transform.columns(data.column(&self.variable)?)
    }
}

/// Ordered list of terms plus an intercept flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub terms: Vec<Term>,
    pub intercept: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            terms: Vec::new(),
            intercept: true,
        }
    }
}

impl ModelSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let spec = ModelSpec {
            terms,
            intercept: true,
        };
        spec.check_duplicates()?;
        Ok(spec)
    }

    /// Intercept-only model.
    pub fn null() -> Self {
        Self::default()
    }

    pub fn linear(variables: &[&str]) -> Result<Self> {
        Self::new(variables.iter().map(|v| Term::linear(v)).collect())
    }

    fn check_duplicates(&self) -> Result<()> {
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(Error::DuplicateTerm(t.label()));
            }
        }
        Ok(())
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        self.check_duplicates()?;
        for t in &self.terms {
            if t.variable == data.outcome_name() {
                return Err(Error::domain(format!(
                    "outcome `{}` used as a covariate",
                    t.variable
                )));
            }
            data.index_of(&t.variable)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn mentions(&self, variable: &str) -> bool {
        self.terms.iter().any(|t| t.variable == variable)
    }

    /// Variables in term order, without repeats.
    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in &self.terms {
            if !out.contains(&t.variable) {
                out.push(t.variable.clone());
            }
        }
        out
    }

    pub fn with_term(&self, term: Term) -> Result<Self> {
        let mut s = self.clone();
        s.terms.push(term);
        s.check_duplicates()?;
        Ok(s)
    }

    pub fn with_terms(&self, terms: impl IntoIterator<Item = Term>) -> Result<Self> {
        let mut s = self.clone();
        s.terms.extend(terms);
        s.check_duplicates()?;
        Ok(s)
    }

    pub fn without_term(&self, index: usize) -> Self {
        let mut s = self.clone();
        s.terms.remove(index);
        s
    }

    pub fn without_variable(&self, variable: &str) -> Self {
        let mut s = self.clone();
        s.terms.retain(|t| t.variable != variable);
        s
    }

    pub fn design(&self, data: &Dataset) -> Result<Design> {
        self.validate(data)?;
        let n = data.n();
        let mut columns = Vec::new();
        let mut labels = Vec::new();
        let mut term_of = Vec::new();
        if self.intercept {
            columns.push(vec![1.0; n]);
            labels.push("(intercept)".to_string());
            term_of.push(None);
        }
        for (i, t) in self.terms.iter().enumerate() {
            let cols = t.columns(data)?;
            let labs = t.transform.column_labels(&t.variable);
            for (c, l) in cols.into_iter().zip(labs) {
                columns.push(c);
                labels.push(l);
                term_of.push(Some(i));
            }
        }
        Ok(Design {
            columns,
            labels,
            term_of,
        })
    }

    /// Linear predictor for `data` from coefficients of a fit of this spec.
    pub fn linear_predictor(&self, data: &Dataset, coefficients: &[f64]) -> Result<Vec<f64>> {
        let design = self.design(data)?;
        if design.columns.len() != coefficients.len() {
            return Err(Error::domain("coefficient count does not match design"));
        }
        let mut eta = vec![0.0; data.n()];
        for (col, &b) in design.columns.iter().zip(coefficients) {
            for (e, v) in eta.iter_mut().zip(col) {
                *e += b * v;
            }
        }
        Ok(eta)
    }
}

impl std::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "(intercept only)");
        }
        let parts: Vec<String> = self.terms.iter().map(Term::label).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Materialized design columns of a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct Design {
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub term_of: Vec<Option<usize>>,
}

impl Design {
    pub fn fit(&self, data: &Dataset) -> Result<FitResult> {
        let cols: Vec<&[f64]> = self.columns.iter().map(Vec::as_slice).collect();
        fit_columns(
            data.outcome(),
            data.family(),
            &cols,
            self.labels.clone(),
            self.term_of.clone(),
        )
    }

    /// Fit with additional FP columns for `variable` appended as one new term.
    pub(crate) fn fit_with(
        &self,
        data: &Dataset,
        extra: &[Vec<f64>],
        variable: &str,
        powers: &FpPowers,
    ) -> Result<FitResult> {
        self.fit_with_labels(data, extra, fp_labels(variable, powers, ""))
    }

    /// Copy with extra columns appended as one new term.
    pub(crate) fn extended(&self, extra: Vec<Vec<f64>>, extra_labels: Vec<String>) -> Design {
        let next_term = self.term_of.iter().flatten().max().map_or(0, |m| m + 1);
        let mut d = self.clone();
        d.term_of.extend(std::iter::repeat_n(Some(next_term), extra.len()));
        d.columns.extend(extra);
        d.labels.extend(extra_labels);
        d
    }

    pub(crate) fn fit_with_labels(
        &self,
        data: &Dataset,
        extra: &[Vec<f64>],
        extra_labels: Vec<String>,
    ) -> Result<FitResult> {
        let next_term = self.term_of.iter().flatten().max().map_or(0, |m| m + 1);
        let mut cols: Vec<&[f64]> = self.columns.iter().map(Vec::as_slice).collect();
        cols.extend(extra.iter().map(Vec::as_slice));
        let mut labels = self.labels.clone();
        labels.extend(extra_labels);
        let mut term_of = self.term_of.clone();
        term_of.extend(std::iter::repeat_n(Some(next_term), extra.len()));
        fit_columns(data.outcome(), data.family(), &cols, labels, term_of)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Family;

    fn data() -> Dataset {
        Dataset::new(
            vec!["y".into(), "x".into(), "s".into()],
            vec![
                vec![1.0, 2.0, 3.0, 4.0],
                vec![0.5, 1.0, 2.0, 4.0],
                vec![0.0, 0.0, 1.0, 3.0],
            ],
            "y",
            Family::Gaussian,
        )
        .unwrap()
    }

    #[test]
    fn duplicate_terms_rejected() {
        let r = ModelSpec::new(vec![Term::linear("x"), Term::linear("x")]);
        assert!(matches!(r, Err(Error::DuplicateTerm(_))));
    }

    #[test]
    fn unknown_variable_rejected() {
        let spec = ModelSpec::linear(&["z"]).unwrap();
        assert_eq!(spec.design(&data()).unwrap_err(), Error::UnknownVariable("z".into()));
    }

    #[test]
    fn outcome_as_covariate_rejected() {
        let spec = ModelSpec::linear(&["y"]).unwrap();
        assert!(spec.design(&data()).is_err());
    }

    #[test]
    fn design_layout() {
        let spec = ModelSpec::new(vec![
            Term::linear("x"),
            Term::fp("x", FpPowers::fp2(0.0, 0.0).unwrap(), PreTransform::IDENTITY),
        ])
        .unwrap();
        let d = spec.design(&data()).unwrap();
        assert_eq!(d.columns.len(), 4);
        assert_eq!(d.term_of, vec![None, Some(0), Some(1), Some(1)]);
        assert_eq!(d.labels[2], "log(x)");
        assert_eq!(d.labels[3], "log(x)*log(x)");
    }

    #[test]
    fn spike_fp_zero_rows_are_zero() {
        let t = Transform::SpikeFp {
            powers: FpPowers::fp2(-2.0, 0.5).unwrap(),
            pre: PreTransform { shift: 1.0, scale: 1.0 },
        };
        let cols = t.columns(&[0.0, 0.0, 1.0, 3.0]).unwrap();
        for c in &cols {
            assert_eq!(c[0], 0.0);
            assert_eq!(c[1], 0.0);
        }
        // positive part anchored at the transformed origin (x = 0 -> 1)
        assert!((cols[0][2] - (0.25 - 1.0)).abs() < 1e-15);
    }
}
