//! Model stability under resampling: inclusion frequencies, pairwise
//! co-inclusion and selected-model frequencies for a selection procedure.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mfp::{mfp, MfpConfig};
use crate::model::{ModelSpec, Term};
use crate::rng::replication_rng;
use crate::selection::{backward_eliminate, forward_select, stepwise, Criterion};

pub const DEFAULT_SUBSAMPLE_RATE: f64 = 0.632;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResampleScheme {
    /// n rows drawn with replacement.
    Bootstrap,
    /// round(rate n) distinct rows drawn without replacement.
    Subsample { rate: f64 },
}

impl Default for ResampleScheme {
    fn default() -> Self {
        ResampleScheme::Subsample {
            rate: DEFAULT_SUBSAMPLE_RATE,
        }
    }
}

impl ResampleScheme {
    fn validate(&self) -> Result<()> {
        match self {
            ResampleScheme::Subsample { rate } if !(*rate > 0.0 && *rate < 1.0) => {
                Err(Error::domain(format!("subsample rate {rate} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    /// Row indices of one resample of a dataset with `n` rows.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        self.validate()?;
        match *self {
            ResampleScheme::Bootstrap => Ok((0..n).map(|_| rng.random_range(0..n)).collect()),
            ResampleScheme::Subsample { rate } => {
                let m = (rate * n as f64).round() as usize;
                if m == 0 {
                    return Err(Error::domain("subsample would be empty"));
                }
                let mut rows = sample(rng, n, m).into_vec();
                rows.sort_unstable();
                Ok(rows)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub scheme: ResampleScheme,
    pub replications: usize,
    pub master_seed: u64,
}

impl ResamplePlan {
    pub fn new(scheme: ResampleScheme, replications: usize, master_seed: u64) -> Self {
        ResamplePlan {
            scheme,
            replications,
            master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SelectionMethod {
    Backward { criterion: Criterion },
    Forward { criterion: Criterion },
    Stepwise { criterion: Criterion },
    Mfp { config: MfpConfig },
}

/// A selection procedure over a fixed candidate list; the three classical
/// procedures treat every candidate as linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    pub candidates: Vec<String>,
    pub method: SelectionMethod,
}

impl Selector {
    pub fn new(candidates: &[&str], method: SelectionMethod) -> Self {
        Selector {
            candidates: candidates.iter().map(|s| s.to_string()).collect(),
            method,
        }
    }

    pub fn select(&self, data: &Dataset) -> Result<ModelSpec> {
        let names: Vec<&str> = self.candidates.iter().map(String::as_str).collect();
        let linear: Vec<Term> = names.iter().map(|v| Term::linear(v)).collect();
        Ok(match &self.method {
            SelectionMethod::Backward { criterion } => {
                backward_eliminate(data, &ModelSpec::new(linear)?, *criterion)?.final_spec
            }
            SelectionMethod::Forward { criterion } => forward_select(data, &linear, *criterion)?.final_spec,
            SelectionMethod::Stepwise { criterion } => stepwise(data, &linear, *criterion)?.final_spec,
            SelectionMethod::Mfp { config } => mfp(data, &names, config)?.final_spec,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFrequency {
    pub variables: Vec<String>,
    pub count: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub variables: Vec<String>,
    /// Inclusion fraction per variable.
    pub bif: Vec<f64>,
    pub counts: Vec<usize>,
    /// Fraction of replications selecting both variables; diagonal is `bif`.
    pub co_inclusion: Vec<Vec<f64>>,
    pub co_counts: Vec<Vec<usize>>,
    /// Selected variable sets, most frequent first.
    pub model_freq: Vec<ModelFrequency>,
    pub plan: ResamplePlan,
    pub successful: usize,
    pub failed: usize,
    /// (replication, error) for each failure.
    pub failures: Vec<(usize, String)>,
}

impl StabilityReport {
    pub fn bif_of(&self, var: &str) -> Option<f64> {
        self.variables.iter().position(|v| v == var).map(|i| self.bif[i])
    }

    /// Fraction of replications selecting at least one of the two variables.
    pub fn union_frequency(&self, i: usize, j: usize) -> f64 {
        let c = self.counts[i] + self.counts[j] - self.co_counts[i][j];
        c as f64 / self.successful as f64
    }

    /// Fréchet bounds on every pair, checked on the integer counts.
    pub fn frechet_bounds_hold(&self) -> bool {
        let s = self.successful;
        let k = self.variables.len();
        (0..k).all(|i| {
            (0..k).all(|j| {
                let (ci, cj, cij) = (self.counts[i], self.counts[j], self.co_counts[i][j]);
                cij <= ci.min(cj) && cij + s >= ci + cj && self.co_counts[j][i] == cij
            })
        })
    }
}

/// Run `selector` on `plan.replications` resamples of `data`.
///
/// Replication `r` draws its rows from the stream `(master_seed, r)`, so the
/// report does not depend on thread scheduling. Replications whose selection
/// fails are left out of all denominators and listed in `failures`.
pub fn stability(data: &Dataset, selector: &Selector, plan: &ResamplePlan) -> Result<StabilityReport> {
    if plan.replications == 0 {
        return Err(Error::domain("stability analysis needs at least one replication"));
    }
    if selector.candidates.is_empty() {
        return Err(Error::domain("selector has no candidates"));
    }
    plan.scheme.validate()?;
    for c in &selector.candidates {
        data.index_of(c)?;
    }
    let outcomes: Vec<Result<Vec<bool>>> = (0..plan.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(plan.master_seed, r as u64);
            let rows = plan.scheme.draw(data.n(), &mut rng)?;
            let spec = selector.select(&data.select_rows(&rows))?;
            Ok(selector.candidates.iter().map(|c| spec.mentions(c)).collect())
        })
        .collect();

    let k = selector.candidates.len();
    let mut counts = vec![0usize; k];
    let mut co_counts = vec![vec![0usize; k]; k];
    let mut models: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut successful = 0;
    for (r, o) in outcomes.into_iter().enumerate() {
        let inc = match o {
            Ok(v) => v,
            Err(e) => {
                failures.push((r, e.to_string()));
                continue;
            }
        };
        successful += 1;
        for i in 0..k {
            if !inc[i] {
                continue;
            }
            counts[i] += 1;
            for j in 0..k {
                if inc[j] {
                    co_counts[i][j] += 1;
                }
            }
        }
        let set: Vec<String> = (0..k).filter(|&i| inc[i]).map(|i| selector.candidates[i].clone()).collect();
        *models.entry(set).or_default() += 1;
    }
    if successful == 0 {
        return Err(Error::domain(format!(
            "all {} replications failed; first error: {}",
            plan.replications, failures[0].1
        )));
    }
    let frac = |c: usize| c as f64 / successful as f64;
    let mut model_freq: Vec<ModelFrequency> = models
        .into_iter()
        .map(|(variables, count)| ModelFrequency {
            variables,
            count,
            fraction: frac(count),
        })
        .collect();
    model_freq.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.variables.cmp(&b.variables)));
    Ok(StabilityReport {
        variables: selector.candidates.clone(),
        bif: counts.iter().map(|&c| frac(c)).collect(),
        co_inclusion: co_counts.iter().map(|row| row.iter().map(|&c| frac(c)).collect()).collect(),
        counts,
        co_counts,
        model_freq,
        plan: *plan,
        successful,
        failed: failures.len(),
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifSelection {
    pub selected: Vec<String>,
    /// Excluded pairs whose union frequency reaches the threshold.
    pub flagged_pairs: Vec<(String, String, f64)>,
    pub warnings: Vec<String>,
}

/// Variables with inclusion fraction at or above `threshold`.
pub fn bif_select(report: &StabilityReport, threshold: f64) -> Result<BifSelection> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::domain(format!("BIF threshold {threshold} outside [0, 1]")));
    }
    let k = report.variables.len();
    let selected: Vec<usize> = (0..k).filter(|&i| report.bif[i] >= threshold).collect();
    let mut flagged_pairs = Vec::new();
    let mut warnings = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            if selected.contains(&i) || selected.contains(&j) {
                continue;
            }
            let u = report.union_frequency(i, j);
            if u >= threshold {
                let (a, b) = (&report.variables[i], &report.variables[j]);
                warnings.push(format!(
                    "{a} and {b} are each below the threshold but at least one of them is selected in {:.1}% of replications",
                    100.0 * u
                ));
                flagged_pairs.push((a.clone(), b.clone(), u));
            }
        }
    }
    Ok(BifSelection {
        selected: selected.into_iter().map(|i| report.variables[i].clone()).collect(),
        flagged_pairs,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Family;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn strong_and_noise(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x3: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        // x1 effect is about 5 standard errors: 0.5 * sqrt(100) = 5
        let y: Vec<f64> = (0..n).map(|i| 0.5 * x1[i] + rng.sample::<f64, _>(StandardNormal)).collect();
        Dataset::new(
            ["y", "x1", "x2", "x3"].map(String::from).to_vec(),
            vec![y, x1, x2, x3],
            "y",
            Family::Gaussian,
        )
        .unwrap()
    }

    fn be() -> Selector {
        Selector::new(&["x1", "x2", "x3"], SelectionMethod::Backward { criterion: Criterion::PValue(0.05) })
    }

    #[test]
    fn subsample_size_and_distinctness() {
        let mut rng = replication_rng(1, 0);
        let rows = ResampleScheme::default().draw(100, &mut rng).unwrap();
        assert_eq!(rows.len(), 63);
        let mut d = rows.clone();
        d.dedup();
        assert_eq!(d.len(), 63);
        assert!(ResampleScheme::Subsample { rate: 1.0 }.draw(10, &mut rng).is_err());
        assert_eq!(ResampleScheme::Bootstrap.draw(10, &mut rng).unwrap().len(), 10);
    }

    proptest! {
        #[test]
        fn subsample_rows_distinct(n in 2usize..500, rate in 0.05f64..0.95, seed in 0u64..1000) {
            let mut rng = replication_rng(seed, 0);
            let rows = ResampleScheme::Subsample { rate }.draw(n, &mut rng);
            let m = (rate * n as f64).round() as usize;
            if m == 0 {
                prop_assert!(rows.is_err());
            } else {
                let rows = rows.unwrap();
                prop_assert_eq!(rows.len(), m);
                prop_assert!(rows.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(rows.iter().all(|&r| r < n));
            }
        }
    }

    #[test]
    fn strong_predictor_stable_and_report_consistent() {
        let d = strong_and_noise(2, 100);
        let plan = ResamplePlan::new(ResampleScheme::Bootstrap, 200, 11);
        let r = stability(&d, &be(), &plan).unwrap();
        assert!(r.bif[0] > 0.95, "{}", r.bif[0]);
        assert_eq!(r.successful, 200);
        assert!(r.frechet_bounds_hold());
        for i in 0..3 {
            assert_eq!(r.co_inclusion[i][i], r.bif[i]);
        }
        let total: f64 = r.model_freq.iter().map(|m| m.fraction).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let again = stability(&d, &be(), &plan).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn zero_replications_rejected() {
        let d = strong_and_noise(3, 50);
        assert!(stability(&d, &be(), &ResamplePlan::new(ResampleScheme::Bootstrap, 0, 1)).is_err());
    }

    #[test]
    fn bif_threshold_edges() {
        let d = strong_and_noise(4, 100);
        let r = stability(&d, &be(), &ResamplePlan::new(ResampleScheme::default(), 50, 5)).unwrap();
        assert_eq!(bif_select(&r, 0.0).unwrap().selected.len(), 3);
        let top = bif_select(&r, 1.0).unwrap();
        assert!(top.selected.iter().all(|v| v == "x1"));
        assert!(bif_select(&r, 1.5).is_err());
    }
}
