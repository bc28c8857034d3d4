//! Variable selection on fixed functional forms: backward elimination,
//! forward selection, stepwise, change-in-estimate augmented backward
//! elimination and univariable screening.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::{fit, removal_pvalue, FitResult, TestKind};
use crate::model::{ModelSpec, Term};
use crate::special::chi2_sf;

/// Stopping rule for a selection procedure, expressed as a p-value threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "alpha", rename_all = "snake_case")]
pub enum Criterion {
    PValue(f64),
    Aic,
    Bic,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Criterion::PValue(a) => write!(f, "p < {a}"),
            Criterion::Aic => write!(f, "AIC"),
            Criterion::Bic => write!(f, "BIC"),
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => other
                .parse::<f64>()
                .map(Criterion::PValue)
                .map_err(|_| Error::domain(format!("unknown criterion `{s}`"))),
        }
    }
}

/// Significance level equivalent to `criterion` for a term with `df`
/// parameters. For AIC and BIC a term stays exactly when its likelihood-ratio
/// statistic exceeds `2 df` or `df log n`, which this threshold encodes.
pub fn criterion_threshold(criterion: Criterion, n: usize, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::domain("criterion threshold needs df >= 1"));
    }
    match criterion {
        Criterion::PValue(a) if a > 0.0 && a <= 1.0 => Ok(a),
        Criterion::PValue(a) => Err(Error::domain(format!("significance level {a} outside (0, 1]"))),
        Criterion::Aic => chi2_sf(2.0 * df as f64, df),
        Criterion::Bic if n >= 2 => chi2_sf(df as f64 * (n as f64).ln(), df),
        Criterion::Bic => Err(Error::domain("BIC needs n >= 2")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Add,
    Drop,
    /// Not significant but retained because removing it moves the exposure
    /// estimate too much.
    KeepAsConfounder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub action: Action,
    pub term: Term,
    pub p_value: f64,
    pub df: usize,
    pub threshold: f64,
    /// Deviance of the model after the step.
    pub deviance_after: f64,
    pub change_in_estimate: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub start_spec: ModelSpec,
    pub steps: Vec<SelectionStep>,
    pub final_spec: ModelSpec,
    pub final_fit: FitResult,
    pub warnings: Vec<String>,
}

impl SelectionTrace {
    /// Apply the recorded steps to the start model.
    pub fn replay(&self) -> Result<ModelSpec> {
        let mut spec = self.start_spec.clone();
        for s in &self.steps {
            match s.action {
                Action::Add => spec = spec.with_term(s.term.clone())?,
                Action::Drop => {
                    let i = spec
                        .terms
                        .iter()
                        .position(|t| *t == s.term)
                        .ok_or_else(|| Error::domain(format!("replay drops absent term {}", s.term.label())))?;
                    spec = spec.without_term(i);
                }
                Action::KeepAsConfounder => {}
            }
        }
        Ok(spec)
    }

    pub fn dropped(&self) -> Vec<&Term> {
        self.steps.iter().filter(|s| s.action == Action::Drop).map(|s| &s.term).collect()
    }
}

struct Removal {
    index: usize,
    p: f64,
    df: usize,
    reduced: FitResult,
}

fn removal_tests(data: &Dataset, spec: &ModelSpec, full: &FitResult) -> Result<Vec<Removal>> {
    (0..spec.len())
        .map(|i| {
            let reduced = fit(data, &spec.without_term(i))?;
            let (p, df) = removal_pvalue(&reduced, full, TestKind::Chisq)?;
            Ok(Removal { index: i, p, df, reduced })
        })
        .collect()
}

fn threshold_for(criterion: Criterion, n: usize, df: usize) -> Result<f64> {
    // a term without estimable columns is always removable
    if df == 0 {
        return Ok(0.0);
    }
    criterion_threshold(criterion, n, df)
}

/// Repeatedly drop the term with the largest removal p-value among those
/// exceeding their threshold. Multi-column terms are tested as one block.
pub fn backward_eliminate(data: &Dataset, start: &ModelSpec, criterion: Criterion) -> Result<SelectionTrace> {
    abe_core(data, start, criterion, None)
}

/// Rule for retaining non-significant confounders of an exposure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeInEstimate {
    pub threshold: f64,
    pub mode: ChangeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeMode {
    /// |change| divided by the exposure standard error.
    #[default]
    Standardized,
    /// |change| divided by |exposure coefficient|.
    Relative,
}

impl ChangeInEstimate {
    pub fn standardized(threshold: f64) -> Self {
        ChangeInEstimate {
            threshold,
            mode: ChangeMode::Standardized,
        }
    }

    pub fn relative(threshold: f64) -> Self {
        ChangeInEstimate {
            threshold,
            mode: ChangeMode::Relative,
        }
    }
}

/// Backward elimination that never drops `exposure` and keeps a
/// non-significant term when its removal changes the exposure coefficient by
/// more than the change-in-estimate threshold. A term kept this way stays for
/// the rest of the run.
pub fn augmented_backward_eliminate(
    data: &Dataset,
    start: &ModelSpec,
    criterion: Criterion,
    exposure: &str,
    cie: ChangeInEstimate,
) -> Result<SelectionTrace> {
    if !start.mentions(exposure) {
        return Err(Error::ExposureMissing(exposure.to_string()));
    }
    if cie.threshold.is_nan() || cie.threshold < 0.0 {
        return Err(Error::domain("change-in-estimate threshold must be >= 0"));
    }
    abe_core(data, start, criterion, Some((exposure, cie)))
}

fn exposure_column(spec: &ModelSpec, fit: &FitResult, exposure: &str) -> Result<usize> {
    let t = spec
        .terms
        .iter()
        .position(|t| t.variable == exposure)
        .ok_or_else(|| Error::ExposureMissing(exposure.to_string()))?;
    fit.columns_of_term(t)
        .first()
        .copied()
        .ok_or_else(|| Error::ExposureMissing(exposure.to_string()))
}

fn abe_core(
    data: &Dataset,
    start: &ModelSpec,
    criterion: Criterion,
    exposure: Option<(&str, ChangeInEstimate)>,
) -> Result<SelectionTrace> {
    criterion_threshold(criterion, data.n(), 1)?;
    let mut spec = start.clone();
    let mut full = fit(data, &spec)?;
    let mut steps = Vec::new();
    let mut kept: BTreeSet<String> = BTreeSet::new();
    loop {
        let mut tests = removal_tests(data, &spec, &full)?;
        let mut candidates = Vec::new();
        for r in tests.drain(..) {
            let t = &spec.terms[r.index];
            let thr = threshold_for(criterion, data.n(), r.df)?;
            let protected = kept.contains(&t.label()) || exposure.is_some_and(|(e, _)| t.variable == e);
            if r.p > thr && !protected {
                candidates.push((r, thr));
            }
        }
        // largest p first; earlier term wins ties
        candidates.sort_by(|a, b| b.0.p.total_cmp(&a.0.p).then(a.0.index.cmp(&b.0.index)));
        let mut dropped = false;
        for (r, thr) in candidates {
            let term = spec.terms[r.index].clone();
            if let Some((e, cie)) = exposure {
                let reduced_spec = spec.without_term(r.index);
                let col_full = exposure_column(&spec, &full, e)?;
                let col_red = exposure_column(&reduced_spec, &r.reduced, e)?;
                let b_full = full.coefficients[col_full];
                let delta = (r.reduced.coefficients[col_red] - b_full).abs();
                let change = match cie.mode {
                    ChangeMode::Standardized => delta / full.std_error(col_full),
                    ChangeMode::Relative => delta / b_full.abs(),
                };
                if change > cie.threshold {
                    kept.insert(term.label());
                    steps.push(SelectionStep {
                        action: Action::KeepAsConfounder,
                        term,
                        p_value: r.p,
                        df: r.df,
                        threshold: thr,
                        deviance_after: full.deviance,
                        change_in_estimate: Some(change),
                    });
                    continue;
                }
                spec = reduced_spec;
                full = r.reduced;
                steps.push(SelectionStep {
                    action: Action::Drop,
                    term,
                    p_value: r.p,
                    df: r.df,
                    threshold: thr,
                    deviance_after: full.deviance,
                    change_in_estimate: Some(change),
                });
            } else {
                spec = spec.without_term(r.index);
                full = r.reduced;
                steps.push(SelectionStep {
                    action: Action::Drop,
                    term,
                    p_value: r.p,
                    df: r.df,
                    threshold: thr,
                    deviance_after: full.deviance,
                    change_in_estimate: None,
                });
            }
            dropped = true;
            break;
        }
        if !dropped {
            break;
        }
    }
    Ok(SelectionTrace {
        start_spec: start.clone(),
        steps,
        final_spec: spec,
        final_fit: full,
        warnings: Vec::new(),
    })
}

struct Addition {
    index: usize,
    p: f64,
    df: usize,
    fit: FitResult,
}

fn best_addition(
    data: &Dataset,
    spec: &ModelSpec,
    current: &FitResult,
    pool: &[Term],
) -> Result<Option<Addition>> {
    let mut best: Option<Addition> = None;
    for (i, t) in pool.iter().enumerate() {
        let f = fit(data, &spec.with_term(t.clone())?)?;
        let (p, df) = removal_pvalue(current, &f, TestKind::Chisq)?;
        if df == 0 {
            continue;
        }
        if best.as_ref().is_none_or(|b| p < b.p) {
            best = Some(Addition { index: i, p, df, fit: f });
        }
    }
    Ok(best)
}

fn check_candidates(candidates: &[Term]) -> Result<()> {
    ModelSpec::new(candidates.to_vec()).map(|_| ())
}

/// Start from the intercept-only model and add the most significant
/// candidate while it passes the criterion.
pub fn forward_select(data: &Dataset, candidates: &[Term], criterion: Criterion) -> Result<SelectionTrace> {
    check_candidates(candidates)?;
    criterion_threshold(criterion, data.n(), 1)?;
    let start = ModelSpec::null();
    let mut spec = start.clone();
    let mut current = fit(data, &spec)?;
    let mut pool = candidates.to_vec();
    let mut steps = Vec::new();
    while let Some(a) = best_addition(data, &spec, &current, &pool)? {
        let thr = criterion_threshold(criterion, data.n(), a.df)?;
        if a.p >= thr {
            break;
        }
        let term = pool.remove(a.index);
        spec = spec.with_term(term.clone())?;
        current = a.fit;
        steps.push(SelectionStep {
            action: Action::Add,
            term,
            p_value: a.p,
            df: a.df,
            threshold: thr,
            deviance_after: current.deviance,
            change_in_estimate: None,
        });
    }
    Ok(SelectionTrace {
        start_spec: start,
        steps,
        final_spec: spec,
        final_fit: current,
        warnings: Vec::new(),
    })
}

pub const STEPWISE_MAX_ITER: usize = 100;

/// Forward selection with a backward pass after every addition.
pub fn stepwise(data: &Dataset, candidates: &[Term], criterion: Criterion) -> Result<SelectionTrace> {
    stepwise_with(data, candidates, criterion, criterion)
}

/// Stepwise selection with separate entry and removal criteria; the entry
/// threshold must not exceed the removal threshold.
pub fn stepwise_with(data: &Dataset, candidates: &[Term], enter: Criterion, remove: Criterion) -> Result<SelectionTrace> {
    check_candidates(candidates)?;
    let n = data.n();
    if criterion_threshold(enter, n, 1)? > criterion_threshold(remove, n, 1)? {
        return Err(Error::domain(
            "entry threshold exceeds removal threshold; stepwise selection could oscillate",
        ));
    }
    let start = ModelSpec::null();
    let mut spec = start.clone();
    let mut current = fit(data, &spec)?;
    let mut steps = Vec::new();
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    seen.insert(Vec::new());
    let state = |s: &ModelSpec| {
        let mut v: Vec<String> = s.terms.iter().map(Term::label).collect();
        v.sort();
        v
    };
    for iter in 0..=STEPWISE_MAX_ITER {
        if iter == STEPWISE_MAX_ITER {
            return Err(Error::CycleDetected(format!("no fixed point after {STEPWISE_MAX_ITER} iterations")));
        }
        let pool: Vec<Term> = candidates.iter().filter(|t| !spec.terms.contains(t)).cloned().collect();
        let Some(a) = best_addition(data, &spec, &current, &pool)? else {
            break;
        };
        let thr = criterion_threshold(enter, n, a.df)?;
        if a.p >= thr {
            break;
        }
        let term = pool[a.index].clone();
        spec = spec.with_term(term.clone())?;
        current = a.fit;
        steps.push(SelectionStep {
            action: Action::Add,
            term,
            p_value: a.p,
            df: a.df,
            threshold: thr,
            deviance_after: current.deviance,
            change_in_estimate: None,
        });
        let back = backward_eliminate(data, &spec, remove)?;
        if !back.steps.is_empty() {
            steps.extend(back.steps);
            spec = back.final_spec;
            current = back.final_fit;
        }
        if !seen.insert(state(&spec)) {
            return Err(Error::CycleDetected(format!("model {spec} revisited")));
        }
    }
    Ok(SelectionTrace {
        start_spec: start,
        steps,
        final_spec: spec,
        final_fit: current,
        warnings: Vec::new(),
    })
}

pub const SCREEN_WARNING: &str =
    "univariable screening can miss variables that matter only after adjustment and keep ones that do not";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub selected: Vec<String>,
    /// Univariable p-value per candidate, in input order.
    pub p_values: Vec<(String, f64)>,
    pub warning: String,
}

/// Keep candidates whose univariable test has p < alpha.
pub fn univariable_screen(data: &Dataset, candidates: &[Term], alpha: f64) -> Result<ScreenResult> {
    criterion_threshold(Criterion::PValue(alpha), data.n(), 1)?;
    let null = fit(data, &ModelSpec::null())?;
    let mut selected = Vec::new();
    let mut p_values = Vec::new();
    for t in candidates {
        let f = fit(data, &ModelSpec::new(vec![t.clone()])?)?;
        let (p, _) = removal_pvalue(&null, &f, TestKind::Chisq)?;
        if p < alpha {
            selected.push(t.label());
        }
        p_values.push((t.label(), p));
    }
    Ok(ScreenResult {
        selected,
        p_values,
        warning: SCREEN_WARNING.to_string(),
    })
}
