//! Function selection procedure: a closed sequence of likelihood-ratio tests
//! choosing among exclusion, a straight line, FP1 and FP2 for one covariate.
//!
//! With FP2 as the most complex function the steps are
//!
//! 1. best FP2 against the null model (4 d.f.) -- not significant: excluded;
//! 2. best FP2 against a straight line (3 d.f.) -- not significant: linear;
//! 3. best FP2 against the best FP1 (2 d.f.) -- not significant: FP1, else FP2.
//!
//! With FP1 as the most complex function the two steps use 2 and 1 d.f.

use serde::{Deserialize, Serialize};

use crate::data::{distinct_count, Dataset};
use crate::error::{Error, Result};
use crate::fp::{enumerate_fp, pretransform, search, FpPowers, FpSearchResult, PowerCache, PreTransform, MIN_DISTINCT_FOR_FP};
use crate::glm::{nested_test, FitResult, TestKind};
use crate::model::{Design, ModelSpec, Term};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "powers", rename_all = "snake_case")]
pub enum Verdict {
    Excluded,
    Linear,
    Fp1(FpPowers),
    Fp2(FpPowers),
}

impl Verdict {
    /// 0 = excluded, 1 = linear, 2 = FP1, 3 = FP2.
    pub fn complexity(&self) -> usize {
        match self {
            Verdict::Excluded => 0,
            Verdict::Linear => 1,
            Verdict::Fp1(_) => 2,
            Verdict::Fp2(_) => 3,
        }
    }

    pub fn is_included(&self) -> bool {
        !matches!(self, Verdict::Excluded)
    }

    pub fn is_nonlinear(&self) -> bool {
        matches!(self, Verdict::Fp1(_) | Verdict::Fp2(_))
    }

    pub fn powers(&self) -> Option<&FpPowers> {
        match self {
            Verdict::Fp1(p) | Verdict::Fp2(p) => Some(p),
            _ => None,
        }
    }

    /// Number of regression coefficients the function uses.
    pub fn df(&self) -> usize {
        match self {
            Verdict::Excluded => 0,
            Verdict::Linear => 1,
            Verdict::Fp1(_) => 2,
            Verdict::Fp2(_) => 4,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Excluded => write!(f, "excluded"),
            Verdict::Linear => write!(f, "linear"),
            Verdict::Fp1(p) => write!(f, "FP1{p}"),
            Verdict::Fp2(p) => write!(f, "FP2{p}"),
        }
    }
}

/// One test of the closed sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTest {
    pub step: usize,
    pub comparison: String,
    pub df: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub significant: bool,
}

/// Significance level for each step of the closed test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FspLevels {
    /// Step 1, overall association.
    pub exclusion: f64,
    /// Step 2, nonlinearity.
    pub nonlinearity: f64,
    /// Step 3, FP1 versus FP2.
    pub complexity: f64,
}

impl FspLevels {
    pub fn uniform(alpha: f64) -> Self {
        FspLevels {
            exclusion: alpha,
            nonlinearity: alpha,
            complexity: alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        for a in [self.exclusion, self.nonlinearity, self.complexity] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::domain(format!("significance level {a} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FspOptions {
    pub levels: FspLevels,
    pub max_degree: usize,
    /// Skip the exclusion step; the variable is at least linear.
    pub force_in: bool,
    pub test: TestKind,
}

impl FspOptions {
    pub fn new(alpha: f64, max_degree: usize) -> Self {
        FspOptions {
            levels: FspLevels::uniform(alpha),
            max_degree,
            force_in: false,
            test: TestKind::Chisq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDecision {
    pub variable: String,
    pub verdict: Verdict,
    pub steps: Vec<StepTest>,
    pub max_degree: usize,
    pub levels: FspLevels,
    pub forced: bool,
    pub pretransform: PreTransform,
    pub distinct_values: usize,
    /// Best FP1/FP2 powers found, whether or not selected.
    pub best_fp1: Option<FpPowers>,
    pub best_fp2: Option<FpPowers>,
}

impl FunctionDecision {
    pub fn step_pvalues(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.p_value).collect()
    }

    /// Re-derive the verdict's complexity from the recorded steps.
    pub fn replay_complexity(&self) -> usize {
        let mut level = if self.forced { 1 } else { 0 };
        for s in &self.steps {
            if !s.significant {
                break;
            }
            level += 1;
        }
        if self.max_degree == 1 && level >= 2 {
            // FP1 is the top of the ladder
            return 2;
        }
        if self.distinct_values < MIN_DISTINCT_FOR_FP {
            return level.min(1);
        }
        level
    }

    /// Model term realizing the verdict.
    pub fn term(&self) -> Option<Term> {
        match &self.verdict {
            Verdict::Excluded => None,
            Verdict::Linear => Some(Term::linear(&self.variable)),
            Verdict::Fp1(p) | Verdict::Fp2(p) => Some(Term::fp(&self.variable, p.clone(), self.pretransform)),
        }
    }
}

/// Nominal d.f. per step: FP2 → (4, 3, 2), FP1 → (2, 1).
pub fn fsp_degrees_of_freedom(max_degree: usize) -> Result<Vec<usize>> {
    match max_degree {
        2 => Ok(vec![4, 3, 2]),
        1 => Ok(vec![2, 1]),
        d => Err(Error::domain(format!("FSP supports FP degree 1 or 2, not {d}"))),
    }
}

/// Run the function selection procedure for `variable` at a single level.
pub fn fsp_select(
    data: &Dataset,
    variable: &str,
    alpha: f64,
    max_degree: usize,
    adjustment: &ModelSpec,
) -> Result<FunctionDecision> {
    fsp_select_with(data, variable, &FspOptions::new(alpha, max_degree), adjustment)
}

pub fn fsp_select_with(
    data: &Dataset,
    variable: &str,
    opts: &FspOptions,
    adjustment: &ModelSpec,
) -> Result<FunctionDecision> {
    opts.levels.validate()?;
    let dfs = fsp_degrees_of_freedom(opts.max_degree)?;
    if adjustment.mentions(variable) {
        return Err(Error::domain(format!("adjustment model already contains `{variable}`")));
    }
    let raw = data.column(variable)?;
    let distinct = distinct_count(raw);
    if distinct < 2 {
        return Err(Error::TooFewDistinctValues {
            variable: variable.to_string(),
            found: distinct,
            required: 2,
        });
    }
    let pre = pretransform(raw)?;
    let design = adjustment.design(data)?;
    let null = design.fit(data)?;
    let linear = design.fit_with_labels(data, &[raw.to_vec()], vec![variable.to_string()])?;

    let mut decision = FunctionDecision {
        variable: variable.to_string(),
        verdict: Verdict::Excluded,
        steps: Vec::new(),
        max_degree: opts.max_degree,
        levels: opts.levels,
        forced: opts.force_in,
        pretransform: pre,
        distinct_values: distinct,
        best_fp1: None,
        best_fp2: None,
    };

    if distinct < MIN_DISTINCT_FOR_FP {
        // only a straight line is identifiable
        if opts.force_in {
            decision.verdict = Verdict::Linear;
            return Ok(decision);
        }
        let s = step(1, "linear vs null", &null, &linear, 1, opts.levels.exclusion, opts.test)?;
        decision.verdict = if s.significant { Verdict::Linear } else { Verdict::Excluded };
        decision.steps.push(s);
        return Ok(decision);
    }

    let fps = FpFamilies::search(data, variable, &design, pre, opts.max_degree)?;
    decision.best_fp1 = Some(fps.fp1.best_powers.clone());
    decision.best_fp2 = fps.fp2.as_ref().map(|r| r.best_powers.clone());
    let top = fps.fp2.as_ref().unwrap_or(&fps.fp1);
    let top_name = if opts.max_degree == 2 { "FP2" } else { "FP1" };

    if !opts.force_in {
        let s = step(1, &format!("{top_name} vs null"), &null, &top.fit, dfs[0], opts.levels.exclusion, opts.test)?;
        let sig = s.significant;
        decision.steps.push(s);
        if !sig {
            return Ok(decision);
        }
    }
    let s = step(2, &format!("{top_name} vs linear"), &linear, &top.fit, dfs[1], opts.levels.nonlinearity, opts.test)?;
    let sig = s.significant;
    decision.steps.push(s);
    if !sig {
        decision.verdict = Verdict::Linear;
        return Ok(decision);
    }
    match &fps.fp2 {
        None => decision.verdict = Verdict::Fp1(fps.fp1.best_powers.clone()),
        Some(fp2) => {
            let s = step(3, "FP2 vs FP1", &fps.fp1.fit, &fp2.fit, dfs[2], opts.levels.complexity, opts.test)?;
            decision.verdict = if s.significant {
                Verdict::Fp2(fp2.best_powers.clone())
            } else {
                Verdict::Fp1(fps.fp1.best_powers.clone())
            };
            decision.steps.push(s);
        }
    }
    Ok(decision)
}

pub(crate) struct FpFamilies {
    pub fp1: FpSearchResult,
    pub fp2: Option<FpSearchResult>,
}

impl FpFamilies {
    pub(crate) fn search(
        data: &Dataset,
        variable: &str,
        design: &Design,
        pre: PreTransform,
        max_degree: usize,
    ) -> Result<Self> {
        let x = pre.apply(data.column(variable)?);
        let cache = PowerCache::new(&x)?;
        let cols = |p: &FpPowers| cache.columns(p);
        let fp1 = search(data, design, variable, &enumerate_fp(1)?, cols, pre, 1)?;
        let fp2 = if max_degree >= 2 {
            Some(search(data, design, variable, &enumerate_fp(2)?, cols, pre, 2)?)
        } else {
            None
        };
        Ok(FpFamilies { fp1, fp2 })
    }
}

pub(crate) fn step(
    step: usize,
    comparison: &str,
    reduced: &FitResult,
    full: &FitResult,
    df: usize,
    alpha: f64,
    kind: TestKind,
) -> Result<StepTest> {
    let statistic = crate::glm::lr_statistic(reduced, full).max(0.0);
    let p_value = nested_test(reduced, full, df, kind)?;
    Ok(StepTest {
        step,
        comparison: comparison.to_string(),
        df,
        statistic,
        p_value,
        alpha,
        significant: p_value < alpha,
    })
}
