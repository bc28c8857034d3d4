//! Simulation scenarios with known truth, and scoring of selection
//! procedures against that truth.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::categorize::quantile;
use crate::data::{Dataset, Family};
use crate::error::{Error, Result};
use crate::fp::{FpPowers, PreTransform};
use crate::glm::{fit, logistic};
use crate::model::{ModelSpec, Term, Transform};
use crate::resample::Selector;
use crate::rng::replication_rng;
use crate::selection::{criterion_threshold, univariable_screen, Criterion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    LogNormal { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    Binary { p: f64 },
}

impl Marginal {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Normal { sd, .. } => sd > 0.0,
            Marginal::Uniform { low, high } => low < high,
            Marginal::LogNormal { sigma, .. } => sigma > 0.0,
            Marginal::Exponential { rate } => rate > 0.0,
            Marginal::Binary { p } => p > 0.0 && p < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("invalid marginal {self:?}")))
        }
    }

    /// Whether every draw is strictly positive.
    fn positive(&self) -> bool {
        match *self {
            Marginal::Uniform { low, .. } => low > 0.0,
            Marginal::LogNormal { .. } | Marginal::Exponential { .. } => true,
            _ => false,
        }
    }

    /// Value at standard-normal score `z`.
    fn quantile_at(&self, z: f64, phi: &Normal) -> f64 {
        let u = || phi.cdf(z).clamp(1e-300, 1.0 - 1e-16);
        match *self {
            Marginal::Normal { mean, sd } => mean + sd * z,
            Marginal::Uniform { low, high } => low + (high - low) * u(),
            Marginal::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
            Marginal::Exponential { rate } => -(-u()).ln_1p() / rate,
            Marginal::Binary { p } => f64::from(u() > 1.0 - p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueForm {
    Null,
    Linear,
    Log,
    /// log(1 + x), defined at zero.
    Log1p,
    /// x^p, with p = 0 meaning log.
    Power { p: f64 },
    /// 1 where x exceeds the threshold.
    Step { threshold: f64 },
}

impl TrueForm {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TrueForm::Null => 0.0,
            TrueForm::Linear => x,
            TrueForm::Log => x.ln(),
            TrueForm::Log1p => x.ln_1p(),
            TrueForm::Power { p } if p == 0.0 => x.ln(),
            TrueForm::Power { p } => x.powf(p),
            TrueForm::Step { threshold } => f64::from(x > threshold),
        }
    }

    fn needs_positive(&self) -> bool {
        match *self {
            TrueForm::Log => true,
            TrueForm::Power { p } => p <= 0.0 || p.fract() != 0.0,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub marginal: Marginal,
    pub form: TrueForm,
    pub coefficient: f64,
    /// Probability that the value is set to exactly zero.
    #[serde(default)]
    pub spike_prob: f64,
}

impl CovariateSpec {
    pub fn new(name: &str, marginal: Marginal, form: TrueForm, coefficient: f64) -> Self {
        CovariateSpec {
            name: name.to_string(),
            marginal,
            form,
            coefficient,
            spike_prob: 0.0,
        }
    }

    pub fn is_relevant(&self) -> bool {
        self.form != TrueForm::Null && self.coefficient != 0.0
    }

    /// True contribution to the linear predictor.
    pub fn effect(&self, x: f64) -> f64 {
        if self.is_relevant() {
            self.coefficient * self.form.eval(x)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub covariates: Vec<CovariateSpec>,
    /// Correlation of the normal scores; identity when absent.
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
    pub family: Family,
    #[serde(default)]
    pub intercept: f64,
    /// Residual standard deviation (Gaussian only).
    #[serde(default = "one")]
    pub noise_sd: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

pub const OUTCOME: &str = "y";

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidScenario("n must be at least 2".into()));
        }
        if self.covariates.is_empty() {
            return Err(Error::InvalidScenario("no covariates".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidScenario("noise_sd must be >= 0".into()));
        }
        for c in &self.covariates {
            c.marginal.validate()?;
            if c.name == OUTCOME {
                return Err(Error::InvalidScenario(format!("covariate named `{OUTCOME}`")));
            }
            if !(0.0..1.0).contains(&c.spike_prob) {
                return Err(Error::InvalidScenario(format!("{}: spike probability outside [0, 1)", c.name)));
            }
            if c.spike_prob > 0.0 && !c.marginal.positive() {
                return Err(Error::InvalidScenario(format!("{}: spike needs a positive marginal", c.name)));
            }
            let zero_possible = c.spike_prob > 0.0 || !c.marginal.positive();
            if c.is_relevant() && c.form.needs_positive() && zero_possible {
                return Err(Error::InvalidScenario(format!(
                    "{}: true form undefined on the covariate's support",
                    c.name
                )));
            }
        }
        self.cholesky().map(|_| ())
    }

    fn cholesky(&self) -> Result<Option<DMatrix<f64>>> {
        let Some(r) = &self.correlation else {
            return Ok(None);
        };
        let k = self.covariates.len();
        if r.len() != k || r.iter().any(|row| row.len() != k) {
            return Err(Error::InvalidCorrelation);
        }
        for i in 0..k {
            if (r[i][i] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidCorrelation);
            }
            for j in 0..i {
                if r[i][j] != r[j][i] || !(r[i][j].abs() <= 1.0) {
                    return Err(Error::InvalidCorrelation);
                }
            }
        }
        let m = DMatrix::from_fn(k, k, |i, j| r[i][j]);
        let chol = Cholesky::new(m).ok_or(Error::InvalidCorrelation)?;
        let l = chol.l();
        // reject numerically semidefinite matrices
        if (0..k).any(|i| l[(i, i)] < 1e-10) {
            return Err(Error::InvalidCorrelation);
        }
        Ok(Some(l))
    }

    pub fn names(&self) -> Vec<&str> {
        self.covariates.iter().map(|c| c.name.as_str()).collect()
    }

    /// Model with every relevant covariate in its true form.
    pub fn true_spec(&self) -> Result<ModelSpec> {
        let terms = self
            .covariates
            .iter()
            .filter(|c| c.is_relevant())
            .map(|c| {
                let fp = |p: f64, shift: f64| -> Result<Transform> {
                    Ok(Transform::Fp {
                        powers: FpPowers::fp1(p)?,
                        pre: PreTransform { shift, scale: 1.0 },
                    })
                };
                let t = match c.form {
                    TrueForm::Linear => Transform::Linear,
                    TrueForm::Log => fp(0.0, 0.0)?,
                    TrueForm::Log1p => fp(0.0, 1.0)?,
                    TrueForm::Power { p } => fp(p, 0.0)?,
                    TrueForm::Step { threshold } => Transform::Indicator { threshold },
                    TrueForm::Null => unreachable!("filtered"),
                };
                Ok(Term::new(&c.name, t))
            })
            .collect::<Result<Vec<_>>>()?;
        ModelSpec::new(terms)
    }
}

/// Dataset for replication 0 of the scenario.
pub fn generate(scenario: &Scenario) -> Result<Dataset> {
    generate_replication(scenario, 0)
}

/// Dataset for replication `r`, drawn from the stream `(seed, r)`.
pub fn generate_replication(scenario: &Scenario, r: u64) -> Result<Dataset> {
    scenario.validate()?;
    let chol = scenario.cholesky()?;
    let mut rng = replication_rng(scenario.seed, r);
    let n = scenario.n;
    let k = scenario.covariates.len();
    let phi = Normal::new(0.0, 1.0).expect("standard normal");
    let mut cols = vec![vec![0.0; n]; k];
    let mut e = vec![0.0; k];
    for i in 0..n {
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for (j, c) in scenario.covariates.iter().enumerate() {
            let z = match &chol {
                Some(l) => (0..=j).map(|m| l[(j, m)] * e[m]).sum(),
                None => e[j],
            };
            cols[j][i] = c.marginal.quantile_at(z, &phi);
        }
        for (j, c) in scenario.covariates.iter().enumerate() {
            if c.spike_prob > 0.0 && rng.random::<f64>() < c.spike_prob {
                cols[j][i] = 0.0;
            }
        }
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = scenario.intercept
                + scenario
                    .covariates
                    .iter()
                    .zip(&cols)
                    .map(|(c, x)| c.effect(x[i]))
                    .sum::<f64>();
            match scenario.family {
                Family::Gaussian => eta + scenario.noise_sd * rng.sample::<f64, _>(StandardNormal),
                Family::Binomial => f64::from(rng.random::<f64>() < logistic(eta)),
            }
        })
        .collect();
    let mut names = vec![OUTCOME.to_string()];
    names.extend(scenario.covariates.iter().map(|c| c.name.clone()));
    let mut columns = vec![y];
    columns.extend(cols);
    Dataset::new(names, columns, OUTCOME, scenario.family)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure {
    /// Fit the true model.
    Oracle,
    Select(Selector),
    /// Univariable screening at `alpha`, then a joint linear fit.
    Univariable { alpha: f64 },
    /// Exhaustive search over linear subsets by AIC or BIC.
    BestSubset { criterion: Criterion },
}

pub const BEST_SUBSET_MAX: usize = 12;

/// Subset of linear terms minimizing `-2 loglik + penalty * params`. Ties go
/// to the subset enumerated first (by bitmask).
pub fn best_subset(data: &Dataset, candidates: &[&str], criterion: Criterion) -> Result<ModelSpec> {
    let p = candidates.len();
    if p > BEST_SUBSET_MAX {
        return Err(Error::domain(format!("best subset limited to {BEST_SUBSET_MAX} candidates")));
    }
    let penalty = match criterion {
        Criterion::Aic => 2.0,
        Criterion::Bic => (data.n() as f64).ln(),
        Criterion::PValue(_) => return Err(Error::domain("best subset needs AIC or BIC")),
    };
    let mut best: Option<(f64, ModelSpec)> = None;
    for mask in 0u32..(1 << p) {
        let vars: Vec<&str> = (0..p).filter(|j| mask >> j & 1 == 1).map(|j| candidates[j]).collect();
        let spec = ModelSpec::linear(&vars)?;
        let f = fit(data, &spec)?;
        let ic = -2.0 * f.log_likelihood + penalty * f.model_df as f64;
        if best.as_ref().is_none_or(|(b, _)| ic < *b) {
            best = Some((ic, spec));
        }
    }
    Ok(best.expect("at least the empty model").1)
}

impl Procedure {
    pub fn run(&self, scenario: &Scenario, data: &Dataset) -> Result<ModelSpec> {
        let names = scenario.names();
        match self {
            Procedure::Oracle => scenario.true_spec(),
            Procedure::Select(s) => s.select(data),
            Procedure::Univariable { alpha } => {
                let terms: Vec<Term> = names.iter().map(|v| Term::linear(v)).collect();
                let scr = univariable_screen(data, &terms, *alpha)?;
                let sel: Vec<&str> = scr.selected.iter().map(String::as_str).collect();
                ModelSpec::linear(&sel)
            }
            Procedure::BestSubset { criterion } => best_subset(data, &names, *criterion),
        }
    }
}

pub const SHAPE_GRID_POINTS: usize = 50;

/// Fitted contribution of `var` under `spec` at the points `x`.
fn fitted_curve(spec: &ModelSpec, coefficients: &[f64], var: &str, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    let mut col = usize::from(spec.intercept);
    for t in &spec.terms {
        if t.variable == var {
            let cols = t.transform.columns(x)?;
            for (k, c) in cols.iter().enumerate() {
                let b = coefficients[col + k];
                for (o, v) in out.iter_mut().zip(c) {
                    *o += b * v;
                }
            }
        }
        col += t.transform.n_columns();
    }
    Ok(out)
}

/// Short description of how `var` enters `spec`.
pub fn form_key(spec: &ModelSpec, var: &str) -> String {
    let parts: Vec<String> = spec
        .terms
        .iter()
        .filter(|t| t.variable == var)
        .map(|t| match &t.transform {
            Transform::Linear => "linear".to_string(),
            Transform::Fp { powers, .. } => format!("FP{}{}", powers.degree(), powers),
            Transform::SpikeFp { powers, .. } => format!("spike-FP{}{}", powers.degree(), powers),
            Transform::Indicator { .. } => "indicator".to_string(),
            Transform::Categorical { .. } => "categorical".to_string(),
        })
        .collect();
    if parts.is_empty() {
        "excluded".into()
    } else {
        parts.join("+")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationScore {
    pub included: Vec<bool>,
    pub forms: Vec<String>,
    /// Mean squared difference between fitted and true curves over the grid.
    pub shape_distance: Vec<f64>,
    /// Fitted minus true secant slope between the 10th and 90th percentiles.
    pub slope_error: Vec<f64>,
}

/// Score one fitted model against the scenario's truth.
pub fn score(scenario: &Scenario, data: &Dataset, spec: &ModelSpec) -> Result<ReplicationScore> {
    let f = fit(data, spec)?;
    let mut s = ReplicationScore {
        included: Vec::new(),
        forms: Vec::new(),
        shape_distance: Vec::new(),
        slope_error: Vec::new(),
    };
    for c in &scenario.covariates {
        let x = data.column(&c.name)?;
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let mut grid: Vec<f64> = (0..SHAPE_GRID_POINTS)
            .map(|g| quantile(&sorted, 0.01 + 0.98 * g as f64 / (SHAPE_GRID_POINTS - 1) as f64))
            .collect();
        let (q10, q90) = (quantile(&sorted, 0.1), quantile(&sorted, 0.9));
        grid.extend([mean, q10, q90]);
        let fitted = fitted_curve(spec, &f.coefficients, &c.name, &grid)?;
        let truth: Vec<f64> = grid.iter().map(|&v| c.effect(v)).collect();
        let m = SHAPE_GRID_POINTS;
        let (fm, tm) = (fitted[m], truth[m]);
        let d = (0..m)
            .map(|g| ((fitted[g] - fm) - (truth[g] - tm)).powi(2))
            .sum::<f64>()
            / m as f64;
        let width = q90 - q10;
        let slope = |v: &[f64]| if width > 0.0 { (v[m + 2] - v[m + 1]) / width } else { 0.0 };
        s.included.push(spec.mentions(&c.name));
        s.forms.push(form_key(spec, &c.name));
        s.shape_distance.push(d);
        s.slope_error.push(slope(&fitted) - slope(&truth));
    }
    Ok(s)
}

/// Mean with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn of(values: &[f64]) -> Estimate {
        let n = values.len() as f64;
        if values.is_empty() {
            return Estimate { mean: f64::NAN, se: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate { mean, se: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableScore {
    pub name: String,
    pub relevant: bool,
    pub inclusion: Estimate,
    /// Included when relevant, excluded when not.
    pub correct: Estimate,
    pub shape_distance: Estimate,
    pub slope_rmse: Estimate,
    pub form_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub procedure: Procedure,
    pub replications: usize,
    pub successful: usize,
    pub failures: Vec<(usize, String)>,
    pub variables: Vec<VariableScore>,
    /// Fraction of replications selecting exactly the relevant variables.
    pub exact_model: Estimate,
    pub model_size: Estimate,
    pub replicates: Vec<ReplicationScore>,
}

impl Evaluation {
    pub fn variable(&self, name: &str) -> Option<&VariableScore> {
        self.variables.iter().find(|v| v.name == name)
    }
}

/// Run `procedure` on `replications` generated datasets and aggregate.
pub fn evaluate(procedure: &Procedure, scenario: &Scenario, replications: usize) -> Result<Evaluation> {
    if replications == 0 {
        return Err(Error::domain("evaluation needs at least one replication"));
    }
    scenario.validate()?;
    if let Procedure::Univariable { alpha } = procedure {
        criterion_threshold(Criterion::PValue(*alpha), scenario.n, 1)?;
    }
    let results: Vec<Result<ReplicationScore>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let data = generate_replication(scenario, r as u64)?;
            let spec = procedure.run(scenario, &data)?;
            score(scenario, &data, &spec)
        })
        .collect();
    let mut failures = Vec::new();
    let mut reps = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(s) => reps.push(s),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    if reps.is_empty() {
        return Err(Error::domain(format!("all replications failed; first: {}", failures[0].1)));
    }
    let relevant: Vec<bool> = scenario.covariates.iter().map(CovariateSpec::is_relevant).collect();
    let variables = scenario
        .covariates
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let inc: Vec<f64> = reps.iter().map(|s| f64::from(s.included[j])).collect();
            let correct: Vec<f64> = reps.iter().map(|s| f64::from(s.included[j] == relevant[j])).collect();
            let shape: Vec<f64> = reps.iter().map(|s| s.shape_distance[j]).collect();
            let sq: Vec<f64> = reps.iter().map(|s| s.slope_error[j].powi(2)).collect();
            let mse = Estimate::of(&sq);
            let rmse = mse.mean.sqrt();
            let mut form_counts = BTreeMap::new();
            for s in &reps {
                *form_counts.entry(s.forms[j].clone()).or_insert(0) += 1;
            }
            VariableScore {
                name: c.name.clone(),
                relevant: relevant[j],
                inclusion: Estimate::of(&inc),
                correct: Estimate::of(&correct),
                shape_distance: Estimate::of(&shape),
                slope_rmse: Estimate {
                    mean: rmse,
                    se: if rmse > 0.0 { mse.se / (2.0 * rmse) } else { 0.0 },
                },
                form_counts,
            }
        })
        .collect();
    let exact: Vec<f64> = reps.iter().map(|s| f64::from(s.included == relevant)).collect();
    let size: Vec<f64> = reps.iter().map(|s| s.included.iter().filter(|b| **b).count() as f64).collect();
    Ok(Evaluation {
        procedure: procedure.clone(),
        replications,
        successful: reps.len(),
        failures,
        variables,
        exact_model: Estimate::of(&exact),
        model_size: Estimate::of(&size),
        replicates: reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resample::SelectionMethod;

    fn null_scenario(n: usize, k: usize, seed: u64) -> Scenario {
        Scenario {
            n,
            covariates: (1..=k)
                .map(|i| CovariateSpec::new(&format!("x{i}"), Marginal::Normal { mean: 0.0, sd: 1.0 }, TrueForm::Null, 0.0))
                .collect(),
            correlation: None,
            family: Family::Gaussian,
            intercept: 0.0,
            noise_sd: 1.0,
            seed,
        }
    }

    #[test]
    fn deterministic_generation() {
        let s = null_scenario(50, 3, 4);
        let a = generate(&s).unwrap();
        let b = generate(&s).unwrap();
        assert_eq!(a, b);
        let c = generate_replication(&s, 1).unwrap();
        assert_ne!(a.outcome(), c.outcome());
    }

    #[test]
    fn spike_fraction() {
        let mut s = null_scenario(20_000, 1, 5);
        s.covariates[0].marginal = Marginal::LogNormal { mu: 0.0, sigma: 1.0 };
        s.covariates[0].spike_prob = 0.08;
        let d = generate(&s).unwrap();
        let z = d.column("x1").unwrap().iter().filter(|v| **v == 0.0).count() as f64 / 20_000.0;
        let se = (0.08f64 * 0.92 / 20_000.0).sqrt();
        assert!((z - 0.08).abs() < 4.0 * se, "{z}");
    }

    #[test]
    fn correlation_reproduced_and_validated() {
        let mut s = null_scenario(20_000, 2, 6);
        s.correlation = Some(vec![vec![1.0, 0.8], vec![0.8, 1.0]]);
        let d = generate(&s).unwrap();
        let (a, b) = (d.column("x1").unwrap(), d.column("x2").unwrap());
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
        let r = cov / (va * vb).sqrt();
        assert!((r - 0.8).abs() < 0.01, "{r}");

        s.correlation = Some(vec![vec![1.0, 1.2], vec![1.2, 1.0]]);
        assert_eq!(s.validate(), Err(Error::InvalidCorrelation));
        s.correlation = Some(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(s.validate(), Err(Error::InvalidCorrelation));
    }

    #[test]
    fn invalid_supports_rejected() {
        let mut s = null_scenario(10, 1, 1);
        s.covariates[0].form = TrueForm::Log;
        s.covariates[0].coefficient = 1.0;
        assert!(s.validate().is_err());
        s.covariates[0].marginal = Marginal::Uniform { low: 0.5, high: 2.0 };
        assert!(s.validate().is_ok());
        s.covariates[0].spike_prob = 0.1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn oracle_is_perfect_on_inclusion() {
        let mut s = null_scenario(200, 3, 7);
        s.covariates[0].marginal = Marginal::Uniform { low: 0.5, high: 3.0 };
        s.covariates[0].form = TrueForm::Log;
        s.covariates[0].coefficient = 1.0;
        s.covariates[1].form = TrueForm::Linear;
        s.covariates[1].coefficient = 0.5;
        let e = evaluate(&Procedure::Oracle, &s, 50).unwrap();
        assert_eq!(e.exact_model.mean, 1.0);
        for v in &e.variables {
            assert_eq!(v.correct.mean, 1.0);
        }
        // estimation noise only: about p / n per curve
        assert!(e.variables[0].shape_distance.mean < 0.02);
        assert_eq!(e.variables[2].shape_distance.mean, 0.0);
    }

    #[test]
    fn best_subset_matches_reenumeration() {
        let mut s = null_scenario(80, 5, 8);
        s.covariates[0].form = TrueForm::Linear;
        s.covariates[0].coefficient = 0.4;
        s.covariates[3].form = TrueForm::Linear;
        s.covariates[3].coefficient = 0.2;
        for r in 0..5 {
            let d = generate_replication(&s, r).unwrap();
            let names = s.names();
            for crit in [Criterion::Aic, Criterion::Bic] {
                let got = best_subset(&d, &names, crit).unwrap();
                // independent enumeration in reverse order with the deviance form of the criterion
                let pen = if crit == Criterion::Aic { 2.0 } else { (d.n() as f64).ln() };
                let mut best = (f64::INFINITY, Vec::new());
                for mask in (0u32..32).rev() {
                    let vars: Vec<&str> = (0..5).filter(|j| mask >> j & 1 == 1).map(|j| names[j]).collect();
                    let rss = fit(&d, &ModelSpec::linear(&vars).unwrap()).unwrap().deviance;
                    let ic = d.n() as f64 * (rss / d.n() as f64).ln() + pen * vars.len() as f64;
                    if ic <= best.0 {
                        best = (ic, vars.iter().map(|v| v.to_string()).collect());
                    }
                }
                assert_eq!(got.variables(), best.1);
            }
        }
        assert!(best_subset(&generate(&s).unwrap(), &s.names(), Criterion::PValue(0.05)).is_err());
    }

    #[test]
    fn be_false_inclusion_near_alpha() {
        let s = null_scenario(100, 4, 9);
        let sel = Selector::new(&s.names(), SelectionMethod::Backward { criterion: Criterion::PValue(0.05) });
        let e = evaluate(&Procedure::Select(sel), &s, 400).unwrap();
        for v in &e.variables {
            let m = v.inclusion.mean;
            assert!((m - 0.05).abs() < 4.0 * v.inclusion.se.max(0.011), "{} {m}", v.name);
        }
    }
}
