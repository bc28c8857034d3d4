//! Multivariable fractional polynomials: the function selection procedure
//! applied in turn to every candidate, each time adjusting for the current
//! functions of all other candidates, cycled until the selections repeat.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::categorize::CutScheme;
use crate::data::{distinct_count, Dataset};
use crate::error::{Error, Result};
use crate::fsp::{fsp_select_with, FspLevels, FspOptions, FunctionDecision, StepTest, Verdict};
use crate::glm::{removal_pvalue, FitResult, TestKind};
use crate::model::{ModelSpec, Term, Transform};
use crate::spike::{spike_fsp_with, SpikeDecision, SpikeOptions, SpikeVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Continuous,
    /// Two-level variable; one 1-d.f. inclusion test.
    Binary,
    /// Category codes entered as a block of dummies and tested jointly.
    Categorical,
    SpikeAtZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfpConfig {
    /// Level of the exclusion test.
    pub alpha_select: f64,
    /// Level of the nonlinearity and FP2-vs-FP1 tests.
    pub alpha_fp: f64,
    pub default_max_degree: usize,
    pub max_degree: BTreeMap<String, usize>,
    pub force_in: BTreeSet<String>,
    /// Variables not listed are continuous, or binary if they take two values.
    pub kinds: BTreeMap<String, VariableKind>,
    pub max_cycles: usize,
    /// Fixed visiting order; `None` orders by the full linear model.
    pub order: Option<Vec<String>>,
    pub test: TestKind,
}

impl Default for MfpConfig {
    fn default() -> Self {
        MfpConfig {
            alpha_select: 0.05,
            alpha_fp: 0.05,
            default_max_degree: 2,
            max_degree: BTreeMap::new(),
            force_in: BTreeSet::new(),
            kinds: BTreeMap::new(),
            max_cycles: 5,
            order: None,
            test: TestKind::Chisq,
        }
    }
}

impl MfpConfig {
    pub fn new(alpha_select: f64, alpha_fp: f64) -> Self {
        MfpConfig {
            alpha_select,
            alpha_fp,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        for a in [self.alpha_select, self.alpha_fp] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::domain(format!("significance level {a} outside (0, 1]")));
            }
        }
        if self.max_cycles == 0 {
            return Err(Error::domain("max_cycles must be at least 1"));
        }
        for d in std::iter::once(&self.default_max_degree).chain(self.max_degree.values()) {
            if !(1..=2).contains(d) {
                return Err(Error::domain(format!("FP degree {d} not supported")));
            }
        }
        Ok(())
    }

    fn degree_of(&self, var: &str) -> usize {
        self.max_degree.get(var).copied().unwrap_or(self.default_max_degree)
    }

    fn kind_of(&self, data: &Dataset, var: &str) -> Result<VariableKind> {
        if let Some(k) = self.kinds.get(var) {
            return Ok(*k);
        }
        Ok(if distinct_count(data.column(var)?) == 2 {
            VariableKind::Binary
        } else {
            VariableKind::Continuous
        })
    }
}

/// Outcome of one block (binary or categorical) inclusion test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDecision {
    pub variable: String,
    pub included: bool,
    pub forced: bool,
    pub test: Option<StepTest>,
    pub term: Term,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MfpDecision {
    Function(FunctionDecision),
    Block(BlockDecision),
    Spike(SpikeDecision),
}

/// What was selected for a variable, without the test details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Selection {
    Function(Verdict),
    Block(bool),
    Spike(SpikeVerdict),
}

impl Selection {
    pub fn is_included(&self) -> bool {
        match self {
            Selection::Function(v) => v.is_included(),
            Selection::Block(b) => *b,
            Selection::Spike(v) => v.is_included(),
        }
    }
}

impl std::fmt::Display for Selection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Selection::Function(v) => write!(f, "{v}"),
            Selection::Block(true) => write!(f, "included"),
            Selection::Block(false) => write!(f, "excluded"),
            Selection::Spike(v) => write!(f, "{v}"),
        }
    }
}

impl MfpDecision {
    pub fn variable(&self) -> &str {
        match self {
            MfpDecision::Function(d) => &d.variable,
            MfpDecision::Block(d) => &d.variable,
            MfpDecision::Spike(d) => &d.variable,
        }
    }

    pub fn selection(&self) -> Selection {
        match self {
            MfpDecision::Function(d) => Selection::Function(d.verdict.clone()),
            MfpDecision::Block(d) => Selection::Block(d.included),
            MfpDecision::Spike(d) => Selection::Spike(d.verdict.clone()),
        }
    }

    pub fn terms(&self) -> Vec<Term> {
        match self {
            MfpDecision::Function(d) => d.term().into_iter().collect(),
            MfpDecision::Block(d) if d.included => vec![d.term.clone()],
            MfpDecision::Block(_) => vec![],
            MfpDecision::Spike(d) => d.terms(),
        }
    }

    /// The FSP verdict for a continuous variable.
    pub fn verdict(&self) -> Option<&Verdict> {
        match self {
            MfpDecision::Function(d) => Some(&d.verdict),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSnapshot {
    pub cycle: usize,
    /// In visiting order.
    pub selections: Vec<(String, Selection)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfpResult {
    pub final_spec: ModelSpec,
    pub decisions: BTreeMap<String, MfpDecision>,
    pub order: Vec<String>,
    pub cycle_trace: Vec<CycleSnapshot>,
    pub converged: bool,
    pub cycles: usize,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

impl MfpResult {
    pub fn selected_variables(&self) -> Vec<String> {
        self.final_spec.variables()
    }

    pub fn selection(&self, var: &str) -> Option<Selection> {
        self.decisions.get(var).map(MfpDecision::selection)
    }
}

/// Candidates ordered by ascending p-value for removal from the model with
/// all of them entered linearly; ties keep dataset column order.
pub fn removal_order(data: &Dataset, candidates: &[&str]) -> Result<Vec<String>> {
    let terms: Vec<Term> = candidates.iter().map(|v| Term::linear(v)).collect();
    order_terms(data, &terms, TestKind::Chisq)
}

fn order_terms(data: &Dataset, terms: &[Term], test: TestKind) -> Result<Vec<String>> {
    if terms.is_empty() {
        return Ok(Vec::new());
    }
    let full_spec = ModelSpec::new(terms.to_vec())?;
    let full = crate::glm::fit(data, &full_spec)?;
    let mut scored = Vec::with_capacity(terms.len());
    for (i, t) in terms.iter().enumerate() {
        let reduced = crate::glm::fit(data, &full_spec.without_term(i))?;
        let (p, _) = removal_pvalue(&reduced, &full, test)?;
        scored.push((p, data.index_of(&t.variable)?, t.variable.clone()));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, _, v)| v).collect())
}

fn initial_term(data: &Dataset, var: &str, kind: VariableKind) -> Result<Term> {
    Ok(match kind {
        VariableKind::Categorical => Term::new(
            var,
            Transform::Categorical {
                scheme: CutScheme::from_levels(data.column(var)?).map_err(|_| {
                    Error::DegenerateVariable(var.to_string())
                })?,
            },
        ),
        _ => Term::linear(var),
    })
}

/// Run MFP over `candidates`.
///
/// Every candidate is re-tested in every cycle. The run converges when two
/// successive cycles select the same function for every variable; if this
/// does not happen within `max_cycles` the last cycle's model is returned
/// with `converged = false`.
pub fn mfp(data: &Dataset, candidates: &[&str], config: &MfpConfig) -> Result<MfpResult> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(Error::domain("MFP needs at least one candidate variable"));
    }
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(*c) {
            return Err(Error::DuplicateTerm(c.to_string()));
        }
        if *c == data.outcome_name() {
            return Err(Error::domain(format!("outcome `{c}` used as a candidate")));
        }
        data.index_of(c)?;
    }
    let mut kinds = BTreeMap::new();
    let mut current: BTreeMap<String, Vec<Term>> = BTreeMap::new();
    for c in candidates {
        let k = config.kind_of(data, c)?;
        kinds.insert(c.to_string(), k);
        current.insert(c.to_string(), vec![initial_term(data, c, k)?]);
    }
    let order = match &config.order {
        Some(o) => {
            let a: BTreeSet<&str> = o.iter().map(String::as_str).collect();
            if a != seen || o.len() != candidates.len() {
                return Err(Error::domain("visiting order must list each candidate once"));
            }
            o.clone()
        }
        None => {
            let terms: Vec<Term> = candidates.iter().map(|c| current[*c][0].clone()).collect();
            order_terms(data, &terms, config.test)?
        }
    };

    let mut decisions: BTreeMap<String, MfpDecision> = BTreeMap::new();
    let mut trace: Vec<CycleSnapshot> = Vec::new();
    let mut converged = false;
    for cycle in 1..=config.max_cycles {
        let mut snapshot = Vec::with_capacity(order.len());
        for var in &order {
            let adjustment = ModelSpec::new(
                order
                    .iter()
                    .filter(|v| *v != var)
                    .flat_map(|v| current[v].iter().cloned())
                    .collect(),
            )?;
            let d = decide(data, var, kinds[var], &adjustment, config)?;
            current.insert(var.clone(), d.terms());
            snapshot.push((var.clone(), d.selection()));
            decisions.insert(var.clone(), d);
        }
        let same = trace.last().is_some_and(|prev| prev.selections == snapshot);
        trace.push(CycleSnapshot {
            cycle,
            selections: snapshot,
        });
        if same {
            converged = true;
            break;
        }
    }

    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "selections still changing after {} cycles; returning the last cycle",
            config.max_cycles
        ));
    }
    let final_spec = ModelSpec::new(order.iter().flat_map(|v| current[v].iter().cloned()).collect())?;
    let fit = crate::glm::fit(data, &final_spec)?;
    Ok(MfpResult {
        final_spec,
        decisions,
        order,
        cycles: trace.len(),
        cycle_trace: trace,
        converged,
        fit,
        warnings,
    })
}

fn decide(
    data: &Dataset,
    var: &str,
    kind: VariableKind,
    adjustment: &ModelSpec,
    config: &MfpConfig,
) -> Result<MfpDecision> {
    let forced = config.force_in.contains(var);
    match kind {
        VariableKind::Continuous => {
            let opts = FspOptions {
                levels: FspLevels {
                    exclusion: config.alpha_select,
                    nonlinearity: config.alpha_fp,
                    complexity: config.alpha_fp,
                },
                max_degree: config.degree_of(var),
                force_in: forced,
                test: config.test,
            };
            Ok(MfpDecision::Function(fsp_select_with(data, var, &opts, adjustment)?))
        }
        VariableKind::SpikeAtZero => {
            let opts = SpikeOptions {
                alpha: config.alpha_select,
                alpha_fp: config.alpha_fp,
                max_degree: config.degree_of(var),
                force_in: forced,
                test: config.test,
            };
            Ok(MfpDecision::Spike(spike_fsp_with(data, var, &opts, adjustment)?))
        }
        VariableKind::Binary | VariableKind::Categorical => {
            let term = initial_term(data, var, kind)?;
            let reduced = crate::glm::fit(data, adjustment)?;
            let full = crate::glm::fit(data, &adjustment.with_term(term.clone())?)?;
            let (p, df) = removal_pvalue(&reduced, &full, config.test)?;
            let test = (df > 0).then(|| StepTest {
                step: 1,
                comparison: format!("{} vs null", term.label()),
                df,
                statistic: crate::glm::lr_statistic(&reduced, &full).max(0.0),
                p_value: p,
                alpha: config.alpha_select,
                significant: p < config.alpha_select,
            });
            let included = forced || test.as_ref().is_some_and(|t| t.significant);
            Ok(MfpDecision::Block(BlockDecision {
                variable: var.to_string(),
                included,
                forced,
                test,
                term,
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Family;
    use crate::selection::{backward_eliminate, Criterion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn scenario(seed: u64, n: usize, nonlin: bool) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..n).map(|_| 0.1 + 4.0 * rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let x1 = cols[0][i];
                let f1 = if nonlin { x1.ln() } else { 0.5 * x1 };
                f1 + 0.5 * cols[1][i] + 0.5 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        cols.insert(0, y);
        let names = ["y", "x1", "x2", "x3", "x4", "x5", "x6"].map(String::from).to_vec();
        Dataset::new(names, cols, "y", Family::Gaussian).unwrap()
    }

    const ALL: [&str; 6] = ["x1", "x2", "x3", "x4", "x5", "x6"];

    #[test]
    fn recovers_log_and_linear() {
        let d = scenario(1, 500, true);
        let r = mfp(&d, &ALL, &MfpConfig::default()).unwrap();
        assert!(r.converged);
        let v1 = r.decisions["x1"].verdict().unwrap();
        assert!(v1.powers().is_some_and(|p| p.contains(0.0)), "{v1}");
        assert_eq!(r.decisions["x2"].verdict(), Some(&Verdict::Linear));
        assert_eq!(r.order[0], "x1");
    }

    #[test]
    fn final_fit_matches_refit_and_spec_matches_decisions() {
        let d = scenario(2, 300, true);
        let r = mfp(&d, &ALL, &MfpConfig::default()).unwrap();
        let refit = crate::glm::fit(&d, &r.final_spec).unwrap();
        assert_eq!(refit.deviance, r.fit.deviance);
        let included: BTreeSet<String> = r
            .decisions
            .iter()
            .filter(|(_, dec)| dec.selection().is_included())
            .map(|(v, _)| v.clone())
            .collect();
        let in_spec: BTreeSet<String> = r.final_spec.variables().into_iter().collect();
        assert_eq!(included, in_spec);
    }

    #[test]
    fn converged_cycle_is_a_fixed_point() {
        let d = scenario(3, 300, true);
        let cfg = MfpConfig::default();
        let r = mfp(&d, &ALL, &cfg).unwrap();
        assert!(r.converged);
        let mut again = Vec::new();
        for var in &r.order {
            let adj = r.final_spec.without_variable(var);
            let dec = decide(&d, var, VariableKind::Continuous, &adj, &cfg).unwrap();
            again.push((var.clone(), dec.selection()));
        }
        assert_eq!(&again, &r.cycle_trace.last().unwrap().selections);
    }

    #[test]
    fn near_one_alpha_keeps_everything() {
        let d = scenario(4, 200, false);
        let r = mfp(&d, &ALL, &MfpConfig::new(0.999, 0.05)).unwrap();
        assert_eq!(r.final_spec.variables().len(), 6);
    }

    #[test]
    fn forced_variables_always_kept() {
        let d = scenario(5, 200, false);
        let mut cfg = MfpConfig::new(0.01, 0.01);
        cfg.force_in.insert("x5".into());
        cfg.force_in.insert("x6".into());
        let r = mfp(&d, &ALL, &cfg).unwrap();
        let vars = r.final_spec.variables();
        assert!(vars.contains(&"x5".to_string()) && vars.contains(&"x6".to_string()));
    }

    #[test]
    fn tiny_alpha_fp_reduces_to_backward_elimination() {
        // the exclusion test still uses the FP d.f., so agreement with BE is
        // typical rather than guaranteed
        let mut agree = 0;
        for seed in 0..20 {
            let d = scenario(600 + seed, 400, false);
            let r = mfp(&d, &ALL, &MfpConfig::new(0.05, 0.00001)).unwrap();
            for dec in r.decisions.values() {
                assert!(!dec.verdict().unwrap().is_nonlinear());
            }
            let be = backward_eliminate(&d, &ModelSpec::linear(&ALL).unwrap(), Criterion::PValue(0.05)).unwrap();
            let mut a = r.final_spec.variables();
            let mut b = be.final_spec.variables();
            a.sort();
            b.sort();
            agree += usize::from(a == b);
        }
        assert!(agree >= 14, "agreement {agree}/20");
    }

    #[test]
    fn lower_alpha_select_shrinks_first_cycle() {
        for seed in 0..5 {
            let d = scenario(100 + seed, 150, true);
            let mut prev: Option<BTreeSet<String>> = None;
            for a in [0.5, 0.2, 0.05, 0.01, 0.001] {
                let mut cfg = MfpConfig::new(a, 0.05);
                cfg.order = Some(ALL.iter().map(|s| s.to_string()).collect());
                cfg.max_cycles = 1;
                let r = mfp(&d, &ALL, &cfg).unwrap();
                let sel: BTreeSet<String> = r.cycle_trace[0]
                    .selections
                    .iter()
                    .filter(|(_, s)| s.is_included())
                    .map(|(v, _)| v.clone())
                    .collect();
                if let Some(p) = &prev {
                    assert!(sel.is_subset(p), "seed {seed} alpha {a}");
                }
                prev = Some(sel);
            }
        }
    }

    #[test]
    fn removal_order_cases() {
        let d = scenario(7, 300, false);
        let o = removal_order(&d, &["x3", "x2"]).unwrap();
        assert_eq!(o[0], "x2");
        assert!(removal_order(&d, &[]).unwrap().is_empty());

        // symmetric orthogonal design with equal effects
        let a = vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let b = vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let noise = [0.1, -0.1, -0.1, 0.1, -0.1, 0.1, 0.1, -0.1];
        let y: Vec<f64> = (0..8).map(|i| a[i] + b[i] + noise[i]).collect();
        let d = Dataset::new(
            vec!["y".into(), "b".into(), "a".into()],
            vec![y, b, a],
            "y",
            Family::Gaussian,
        )
        .unwrap();
        assert_eq!(removal_order(&d, &["a", "b"]).unwrap(), vec!["b", "a"]);
    }

    #[test]
    fn binary_and_categorical_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 300;
        let g: Vec<f64> = (0..n).map(|i| (i % 3) as f64).collect();
        let b: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let x: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| if g[i] == 2.0 { 1.0 } else { 0.0 } + x[i] + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let d = Dataset::new(
            ["y", "g", "b", "x"].map(String::from).to_vec(),
            vec![y, g, b, x],
            "y",
            Family::Gaussian,
        )
        .unwrap();
        let mut cfg = MfpConfig::default();
        cfg.kinds.insert("g".into(), VariableKind::Categorical);
        let r = mfp(&d, &["g", "b", "x"], &cfg).unwrap();
        match &r.decisions["g"] {
            MfpDecision::Block(bd) => {
                assert!(bd.included);
                assert_eq!(bd.test.as_ref().unwrap().df, 2);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(r.decisions["b"], MfpDecision::Block(_)));
    }

    #[test]
    fn config_validation() {
        let d = scenario(9, 50, false);
        assert!(mfp(&d, &[], &MfpConfig::default()).is_err());
        assert!(mfp(&d, &["x1"], &MfpConfig::new(0.0, 0.05)).is_err());
        assert!(mfp(&d, &["x1", "x1"], &MfpConfig::default()).is_err());
        assert!(mfp(&d, &["y"], &MfpConfig::default()).is_err());
    }
}
