//! Cross-validated shrinkage factors for a fitted model.
//!
//! Each design column's contribution `b_j (x_j - mean_j)` is predicted out of
//! fold, with `b_j` fitted on the training part and `mean_j` the full-data
//! column mean. The outcome is then regressed, in the model's family and with
//! an intercept, on the pooled out-of-fold contributions: on their sum
//! (global), on each one separately (parameterwise), or on sums within groups
//! of terms (joint). The slopes are the shrinkage factors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Family};
use crate::error::{Error, Result};
use crate::glm::{binomial_deviance, fit, fit_columns, logistic, FitResult};
use crate::model::ModelSpec;
use crate::resample::Selector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CvScheme {
    LeaveOneOut,
    KFold { k: usize, seed: u64 },
}

impl CvScheme {
    /// Leave-one-out up to 200 rows, 10-fold beyond.
    pub fn default_for(n: usize, seed: u64) -> Self {
        if n <= 200 {
            CvScheme::LeaveOneOut
        } else {
            CvScheme::KFold { k: 10, seed }
        }
    }

    /// Fold index of every row.
    pub fn assign(&self, n: usize) -> Result<Vec<usize>> {
        match *self {
            CvScheme::LeaveOneOut => Ok((0..n).collect()),
            CvScheme::KFold { k, seed } => {
                if k < 2 || k > n {
                    return Err(Error::domain(format!("{k}-fold cross-validation on {n} rows")));
                }
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
                let mut fold = vec![0; n];
                for (pos, &row) in perm.iter().enumerate() {
                    fold[row] = pos % k;
                }
                Ok(fold)
            }
        }
    }

    pub fn n_folds(&self, n: usize) -> usize {
        match *self {
            CvScheme::LeaveOneOut => n,
            CvScheme::KFold { k, .. } => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShrinkageMode {
    Global,
    Parameterwise,
    /// Groups of term indices.
    Joint { groups: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageFactors {
    pub mode: ShrinkageMode,
    /// Name of each factor: "global", a column label, or the joined term labels of a group.
    pub names: Vec<String>,
    pub factors: Vec<f64>,
    pub cv_scheme: CvScheme,
    pub spec: ModelSpec,
    /// Design column labels, intercept first.
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Slopes multiplied by their factor, intercept re-estimated.
    pub shrunken_coefficients: Vec<f64>,
    pub deviance: f64,
    pub shrunken_deviance: f64,
}

impl ShrinkageFactors {
    pub fn factor(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.factors[i])
    }
}

fn column_means(columns: &[Vec<f64>]) -> Vec<f64> {
    columns.iter().map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Out-of-fold centered contribution of every non-intercept column.
fn oof_components(data: &Dataset, spec: &ModelSpec, cv: CvScheme) -> Result<(FitResult, Vec<Vec<f64>>)> {
    if spec.is_empty() {
        return Err(Error::domain("shrinkage needs at least one term"));
    }
    if !spec.intercept {
        return Err(Error::domain("shrinkage needs a model with intercept"));
    }
    let full = fit(data, spec)?;
    let design = spec.design(data)?;
    let n = data.n();
    let folds = cv.assign(n)?;
    let k = cv.n_folds(n);
    let p = design.columns.len();
    let means = column_means(&design.columns);
    let per_fold: Vec<Result<Vec<(usize, Vec<f64>)>>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let fail = |e: Error| Error::FoldFitFailure {
                fold: f,
                message: e.to_string(),
            };
            let tf = fit(&data.select_rows(&train), spec).map_err(fail)?;
            tf.ensure_clean().map_err(fail)?;
            Ok(test
                .iter()
                .map(|&i| {
                    let comps = (1..p)
                        .map(|j| tf.coefficients[j] * (design.columns[j][i] - means[j]))
                        .collect();
                    (i, comps)
                })
                .collect())
        })
        .collect();
    let mut comps = vec![vec![0.0; n]; p - 1];
    for rows in per_fold {
        for (i, c) in rows? {
            for (j, v) in c.into_iter().enumerate() {
                comps[j][i] = v;
            }
        }
    }
    Ok((full, comps))
}

fn calibrate(data: &Dataset, predictors: &[Vec<f64>], names: &[String]) -> Result<Vec<f64>> {
    let n = data.n();
    let one = vec![1.0; n];
    let mut cols: Vec<&[f64]> = vec![&one];
    cols.extend(predictors.iter().map(Vec::as_slice));
    let mut labels = vec!["(intercept)".to_string()];
    labels.extend(names.iter().cloned());
    let term_of = (0..cols.len()).map(|i| i.checked_sub(1)).collect();
    let f = fit_columns(data.outcome(), data.family(), &cols, labels, term_of)?;
    if let Some(j) = f.aliased.iter().position(|&a| a) {
        return Err(Error::CollinearComponents(format!(
            "out-of-fold component `{}` is collinear with the others",
            names[j - 1]
        )));
    }
    f.ensure_clean()?;
    let slopes = f.coefficients[1..].to_vec();
    if slopes.iter().any(|s| !s.is_finite()) {
        return Err(Error::CollinearComponents("non-finite shrinkage factor".into()));
    }
    Ok(slopes)
}

/// Apply per-column factors and re-estimate the intercept with the shrunken
/// slopes held fixed.
fn apply(
    data: &Dataset,
    spec: &ModelSpec,
    full: &FitResult,
    column_factors: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let design = spec.design(data)?;
    let n = data.n();
    let mut coef = full.coefficients.clone();
    for (j, c) in column_factors.iter().enumerate() {
        coef[j + 1] *= c;
    }
    let mut offset = vec![0.0; n];
    for (col, b) in design.columns.iter().zip(&coef).skip(1) {
        for (o, v) in offset.iter_mut().zip(col) {
            *o += b * v;
        }
    }
    let y = data.outcome();
    let (intercept, deviance) = match data.family() {
        Family::Gaussian => {
            let a = y.iter().zip(&offset).map(|(y, o)| y - o).sum::<f64>() / n as f64;
            let rss = y.iter().zip(&offset).map(|(y, o)| (y - a - o).powi(2)).sum();
            (a, rss)
        }
        Family::Binomial => {
            let mut a = full.coefficients[0];
            for _ in 0..100 {
                let (mut score, mut info) = (0.0, 0.0);
                for (yi, o) in y.iter().zip(&offset) {
                    let m = logistic(a + o);
                    score += yi - m;
                    info += m * (1.0 - m);
                }
                if info <= 0.0 {
                    break;
                }
                let step = score / info;
                a += step;
                if step.abs() < 1e-12 * (1.0 + a.abs()) {
                    break;
                }
            }
            let eta: Vec<f64> = offset.iter().map(|o| a + o).collect();
            (a, binomial_deviance(y, &eta))
        }
    };
    coef[0] = intercept;
    Ok((coef, deviance))
}

fn finish(
    data: &Dataset,
    spec: &ModelSpec,
    cv: CvScheme,
    mode: ShrinkageMode,
    full: FitResult,
    names: Vec<String>,
    factors: Vec<f64>,
    column_factors: Vec<f64>,
) -> Result<ShrinkageFactors> {
    let (shrunken, shrunken_deviance) = apply(data, spec, &full, &column_factors)?;
    Ok(ShrinkageFactors {
        mode,
        names,
        factors,
        cv_scheme: cv,
        spec: spec.clone(),
        labels: full.labels.clone(),
        coefficients: full.coefficients.clone(),
        shrunken_coefficients: shrunken,
        deviance: full.deviance,
        shrunken_deviance,
    })
}

/// One factor for all slopes.
pub fn global_shrinkage(data: &Dataset, spec: &ModelSpec, cv: CvScheme) -> Result<ShrinkageFactors> {
    let (full, comps) = oof_components(data, spec, cv)?;
    let eta: Vec<f64> = (0..data.n()).map(|i| comps.iter().map(|c| c[i]).sum()).collect();
    let c = calibrate(data, &[eta], &["global".to_string()])?[0];
    let ncols = comps.len();
    finish(data, spec, cv, ShrinkageMode::Global, full, vec!["global".into()], vec![c], vec![c; ncols])
}

/// One factor per design column.
pub fn parameterwise_shrinkage(data: &Dataset, spec: &ModelSpec, cv: CvScheme) -> Result<ShrinkageFactors> {
    let (full, comps) = oof_components(data, spec, cv)?;
    let names: Vec<String> = full.labels[1..].to_vec();
    let f = calibrate(data, &comps, &names)?;
    finish(data, spec, cv, ShrinkageMode::Parameterwise, full, names, f.clone(), f)
}

/// One factor per group of terms. `None` makes every term its own group, so
/// the two columns of an FP2 term share a factor.
pub fn joint_shrinkage(
    data: &Dataset,
    spec: &ModelSpec,
    groups: Option<Vec<Vec<usize>>>,
    cv: CvScheme,
) -> Result<ShrinkageFactors> {
    let groups = groups.unwrap_or_else(|| (0..spec.len()).map(|t| vec![t]).collect());
    let mut seen = vec![false; spec.len()];
    for &t in groups.iter().flatten() {
        if t >= spec.len() || std::mem::replace(&mut seen[t], true) {
            return Err(Error::domain("groups must partition the model terms"));
        }
    }
    if seen.iter().any(|s| !s) || groups.iter().any(Vec::is_empty) {
        return Err(Error::domain("groups must partition the model terms"));
    }
    let (full, comps) = oof_components(data, spec, cv)?;
    let term_cols: Vec<usize> = full.term_of[1..].iter().map(|t| t.expect("non-intercept column")).collect();
    let n = data.n();
    let mut preds = Vec::with_capacity(groups.len());
    let mut names = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut v = vec![0.0; n];
        for (j, t) in term_cols.iter().enumerate() {
            if g.contains(t) {
                for (vi, ci) in v.iter_mut().zip(&comps[j]) {
                    *vi += ci;
                }
            }
        }
        preds.push(v);
        names.push(g.iter().map(|&t| spec.terms[t].label()).collect::<Vec<_>>().join(" + "));
    }
    let f = calibrate(data, &preds, &names)?;
    let column_factors = term_cols
        .iter()
        .map(|t| f[groups.iter().position(|g| g.contains(t)).expect("partition")])
        .collect();
    finish(data, spec, cv, ShrinkageMode::Joint { groups }, full, names, f, column_factors)
}

/// Global factor with the selection repeated inside every training fold.
///
/// Returns `None` when the full-data selection is empty. Folds whose
/// selection is empty contribute a zero predictor.
pub fn global_shrinkage_reselect(data: &Dataset, selector: &Selector, cv: CvScheme) -> Result<Option<f64>> {
    let n = data.n();
    let folds = cv.assign(n)?;
    let k = cv.n_folds(n);
    if selector.select(data)?.is_empty() {
        return Ok(None);
    }
    let per_fold: Vec<Result<Vec<(usize, f64)>>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let fail = |e: Error| Error::FoldFitFailure {
                fold: f,
                message: e.to_string(),
            };
            let td = data.select_rows(&train);
            let spec = selector.select(&td).map_err(fail)?;
            if spec.is_empty() {
                return Ok(test.iter().map(|&i| (i, 0.0)).collect());
            }
            let tf = fit(&td, &spec).map_err(fail)?;
            let design = spec.design(data)?;
            let means = column_means(&design.columns);
            Ok(test
                .iter()
                .map(|&i| {
                    let e = (1..design.columns.len())
                        .map(|j| tf.coefficients[j] * (design.columns[j][i] - means[j]))
                        .sum();
                    (i, e)
                })
                .collect())
        })
        .collect();
    let mut eta = vec![0.0; n];
    for rows in per_fold {
        for (i, e) in rows? {
            eta[i] = e;
        }
    }
    if eta.iter().all(|e| *e == 0.0) {
        return Ok(Some(0.0));
    }
    Ok(Some(calibrate(data, &[eta], &["global".to_string()])?[0]))
}
