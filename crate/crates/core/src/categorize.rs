//! Categorization of continuous covariates and the minimum-p-value cutpoint
//! search, kept mainly to demonstrate how badly the latter inflates type I
//! error.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{distinct_count, Dataset, Family};
use crate::error::{Error, Result};
use crate::glm::{deviance_test, fit_columns, FitResult};
use crate::rng::replication_rng;

pub const MIN_P_WARNING: &str = "minimum p-value cutpoint: the p-value is not corrected for \
the search over cutpoints and the group difference is strongly overestimated";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coding {
    /// One indicator per non-reference group.
    Dummy { reference: usize },
    /// Single column carrying a score per group.
    OrdinalScores { scores: Vec<f64> },
}

/// Cutpoints plus a coding; `k` cutpoints define `k + 1` groups, group `g`
/// holding values in `(c[g-1], c[g]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutScheme {
    pub cutpoints: Vec<f64>,
    pub coding: Coding,
}

impl CutScheme {
    pub fn new(cutpoints: Vec<f64>, coding: Coding) -> Result<Self> {
        if cutpoints.is_empty() {
            return Err(Error::domain("cut scheme needs at least one cutpoint"));
        }
        if cutpoints.windows(2).any(|w| !(w[0] < w[1])) || cutpoints.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("cutpoints must be finite and strictly increasing"));
        }
        let groups = cutpoints.len() + 1;
        match &coding {
            Coding::Dummy { reference } if *reference >= groups => {
                return Err(Error::domain(format!(
                    "reference group {reference} out of range for {groups} groups"
                )))
            }
            Coding::OrdinalScores { scores } if scores.len() != groups => {
                return Err(Error::domain(format!(
                    "{} scores for {groups} groups",
                    scores.len()
                )))
            }
            _ => {}
        }
        Ok(CutScheme { cutpoints, coding })
    }

    /// As [`CutScheme::new`], additionally requiring every group to be
    /// nonempty on `x`.
    pub fn for_data(cutpoints: Vec<f64>, coding: Coding, x: &[f64]) -> Result<Self> {
        let s = Self::new(cutpoints, coding)?;
        let counts = s.group_counts(x);
        if let Some(g) = counts.iter().position(|&c| c == 0) {
            return Err(Error::domain(format!("group {g} is empty on the data")));
        }
        Ok(s)
    }

    /// Dummy coding of a variable that already holds category codes.
    pub fn from_levels(x: &[f64]) -> Result<Self> {
        let mut levels = x.to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        if levels.len() < 2 {
            return Err(Error::DegenerateVariable("categorical variable".into()));
        }
        let cuts = levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self::new(cuts, Coding::Dummy { reference: 0 })
    }

    pub fn n_groups(&self) -> usize {
        self.cutpoints.len() + 1
    }

    pub fn group_of(&self, x: f64) -> usize {
        self.cutpoints.partition_point(|&c| c < x)
    }

    pub fn group_counts(&self, x: &[f64]) -> Vec<usize> {
        let mut counts = vec![0; self.n_groups()];
        for &v in x {
            counts[self.group_of(v)] += 1;
        }
        counts
    }

    pub fn n_columns(&self) -> usize {
        match &self.coding {
            Coding::Dummy { .. } => self.n_groups() - 1,
            Coding::OrdinalScores { .. } => 1,
        }
    }

    pub fn columns(&self, x: &[f64]) -> Vec<Vec<f64>> {
        match &self.coding {
            Coding::Dummy { reference } => (0..self.n_groups())
                .filter(|g| g != reference)
                .map(|g| {
                    x.iter()
                        .map(|&v| if self.group_of(v) == g { 1.0 } else { 0.0 })
                        .collect()
                })
                .collect(),
            Coding::OrdinalScores { scores } => {
                vec![x.iter().map(|&v| scores[self.group_of(v)]).collect()]
            }
        }
    }

    pub fn labels(&self, var: &str) -> Vec<String> {
        match &self.coding {
            Coding::Dummy { reference } => (0..self.n_groups())
                .filter(|g| g != reference)
                .map(|g| format!("{var}[g{g}]"))
                .collect(),
            Coding::OrdinalScores { .. } => vec![format!("{var}[score]")],
        }
    }

    pub fn describe(&self) -> String {
        let cuts: Vec<String> = self.cutpoints.iter().map(|c| format!("{c}")).collect();
        match &self.coding {
            Coding::Dummy { reference } => {
                format!("categorical cuts {{{}}} dummy ref g{reference}", cuts.join(", "))
            }
            Coding::OrdinalScores { scores } => format!(
                "categorical cuts {{{}}} scores {:?}",
                cuts.join(", "),
                scores
            ),
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone)]
pub struct QuantileCut {
    pub scheme: CutScheme,
    pub warnings: Vec<String>,
}

/// `k` groups cut at the `j/k` empirical quantiles, dummy coded against the
/// lowest group. Duplicate quantiles collapse with a warning.
pub fn cut_by_quantiles(x: &[f64], k: usize) -> Result<QuantileCut> {
    if k < 2 {
        return Err(Error::domain("need at least two groups"));
    }
    let distinct = distinct_count(x);
    if distinct < k {
        return Err(Error::TooFewDistinctValues {
            variable: "categorized variable".into(),
            found: distinct,
            required: k,
        });
    }
    let sorted = sorted_copy(x);
    let max = *sorted.last().expect("nonempty");
    let mut cuts: Vec<f64> = Vec::with_capacity(k - 1);
    let mut warnings = Vec::new();
    for j in 1..k {
        let c = quantile(&sorted, j as f64 / k as f64);
        if c >= max || cuts.last().is_some_and(|&last| c <= last) {
            warnings.push(format!("quantile {j}/{k} ({c}) duplicates a previous cutpoint; collapsed"));
            continue;
        }
        cuts.push(c);
    }
    if cuts.is_empty() {
        return Err(Error::TooFewDistinctValues {
            variable: "categorized variable".into(),
            found: distinct,
            required: k,
        });
    }
    let scheme = CutScheme::for_data(cuts, Coding::Dummy { reference: 0 }, x)?;
    Ok(QuantileCut { scheme, warnings })
}

/// Result of a minimum-p-value cutpoint scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CutpointResult {
    pub cutpoint: f64,
    /// Uncorrected p-value at the chosen cutpoint.
    pub naive_p: f64,
    /// Every candidate cutpoint with its p-value.
    pub scan: Vec<(f64, f64)>,
    pub search_range: (f64, f64),
    pub warning: String,
}

pub const DEFAULT_SEARCH_RANGE: (f64, f64) = (0.10, 0.90);
pub const MIN_PER_SIDE: usize = 10;

/// Candidate cutpoints: midpoints between successive distinct values inside
/// the quantile range, leaving at least `MIN_PER_SIDE` observations on each
/// side. A degenerate range `(q, q)` yields the single quantile itself.
pub fn candidate_cutpoints(x: &[f64], range: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = range;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
        return Err(Error::domain(format!("invalid quantile range [{lo}, {hi}]")));
    }
    let sorted = sorted_copy(x);
    let qlo = quantile(&sorted, lo);
    let qhi = quantile(&sorted, hi);
    let raw: Vec<f64> = if lo == hi {
        vec![qlo]
    } else {
        let mut d = sorted.clone();
        d.dedup();
        d.windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .filter(|m| *m >= qlo && *m <= qhi)
            .collect()
    };
    let n = sorted.len();
    Ok(raw
        .into_iter()
        .filter(|&c| {
            let below = sorted.partition_point(|&v| v <= c);
            below >= MIN_PER_SIDE && n - below >= MIN_PER_SIDE
        })
        .collect())
}

/// Scan every admissible cutpoint of `variable` and return the one with the
/// smallest two-group likelihood-ratio p-value.
pub fn min_p_cutpoint(data: &Dataset, variable: &str, range: (f64, f64)) -> Result<CutpointResult> {
    let x = data.column(variable)?;
    let cands = candidate_cutpoints(x, range)?;
    if cands.is_empty() {
        return Err(Error::RangeEmpty);
    }
    let y = data.outcome();
    let one = vec![1.0; y.len()];
    let null = fit_columns(y, data.family(), &[&one], vec!["(intercept)".into()], vec![None])?;
    let mut scan = Vec::with_capacity(cands.len());
    for &c in &cands {
        let p = split_pvalue(y, data.family(), x, c, &one, &null)?;
        scan.push((c, p));
    }
    let (cutpoint, naive_p) = scan
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Ok(CutpointResult {
        cutpoint,
        naive_p,
        scan,
        search_range: range,
        warning: MIN_P_WARNING.to_string(),
    })
}

fn split_pvalue(y: &[f64], family: Family, x: &[f64], cut: f64, one: &[f64], null: &FitResult) -> Result<f64> {
    let ind: Vec<f64> = x.iter().map(|&v| if v > cut { 1.0 } else { 0.0 }).collect();
    let f = fit_columns(
        y,
        family,
        &[one, &ind],
        vec!["(intercept)".into(), "above".into()],
        vec![None, Some(0)],
    )?;
    deviance_test(null, &f, 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Type1Config {
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    pub search_range: (f64, f64),
    pub seed: u64,
    pub family: Family,
}

impl Default for Type1Config {
    fn default() -> Self {
        Type1Config {
            n: 100,
            replications: 1000,
            alpha: 0.05,
            search_range: DEFAULT_SEARCH_RANGE,
            seed: 1,
            family: Family::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Type1Result {
    pub rate: f64,
    /// Binomial Monte-Carlo standard error of `rate`.
    pub mc_se: f64,
    pub rejections: usize,
    pub replications: usize,
    pub search_range: (f64, f64),
    /// Per-replication minimum p-values, in replication order.
    pub min_pvalues: Vec<f64>,
    pub warning: String,
}

fn null_dataset(n: usize, family: Family, seed: u64, rep: u64) -> Result<Dataset> {
    let mut rng = replication_rng(seed, rep);
    let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = match family {
        Family::Gaussian => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        Family::Binomial => (0..n).map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect(),
    };
    Dataset::new(vec!["y".into(), "x".into()], vec![y, x], "y", family)
}

/// Empirical rejection rate of the uncorrected minimum-p-value approach on
/// data with no association.
pub fn type1_simulation(cfg: &Type1Config) -> Result<Type1Result> {
    if cfg.replications < 100 {
        return Err(Error::domain("type I simulation needs at least 100 replications"));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::domain("alpha must lie in (0, 1)"));
    }
    let min_pvalues: Vec<f64> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let d = null_dataset(cfg.n, cfg.family, cfg.seed, r as u64)?;
            Ok(min_p_cutpoint(&d, "x", cfg.search_range)?.naive_p)
        })
        .collect::<Result<_>>()?;
    let rejections = min_pvalues.iter().filter(|&&p| p < cfg.alpha).count();
    let rate = rejections as f64 / cfg.replications as f64;
    Ok(Type1Result {
        rate,
        mc_se: (rate * (1.0 - rate) / cfg.replications as f64).sqrt(),
        rejections,
        replications: cfg.replications,
        search_range: cfg.search_range,
        min_pvalues,
        warning: MIN_P_WARNING.to_string(),
    })
}
