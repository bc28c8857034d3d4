//! Semi-continuous covariates with a spike at zero.
//!
//! The variable is split into an exposure indicator `Z = 1{x > 0}` and an FP
//! of the positive part. The FP columns are anchored to vanish at `x = 0`, so
//! with `Z` in the model its coefficient is the jump between the unexposed
//! and the FP curve extrapolated to the origin.

use serde::{Deserialize, Serialize};

use crate::data::{distinct_count, Dataset};
use crate::error::{Error, Result};
use crate::fp::{enumerate_fp, search, FpPowers, PowerCache, PreTransform, MIN_DISTINCT_FOR_FP};
use crate::fsp::{fsp_degrees_of_freedom, step, StepTest, Verdict};
use crate::glm::{FitResult, TestKind};
use crate::model::{fp_labels, Design, ModelSpec, Term, Transform};

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeDecomposition {
    /// 1 where x > 0.
    pub indicator: Vec<f64>,
    /// x where positive, 0 elsewhere.
    pub positive_part: Vec<f64>,
    /// Pre-transformed positive part; zeros take the transformed origin.
    pub transformed: Vec<f64>,
    pub zero_fraction: f64,
    pub pretransform: PreTransform,
}

impl SpikeDecomposition {
    /// Reassemble the original column.
    pub fn merge(&self) -> Vec<f64> {
        self.indicator
            .iter()
            .zip(&self.positive_part)
            .map(|(&z, &p)| if z == 1.0 { p } else { 0.0 })
            .collect()
    }

    pub fn distinct_positive(&self) -> usize {
        let pos: Vec<f64> = self.positive_part.iter().copied().filter(|v| *v > 0.0).collect();
        distinct_count(&pos)
    }
}

pub fn spike_decompose(x: &[f64]) -> Result<SpikeDecomposition> {
    if let Some(v) = x.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::domain(format!("spike-at-zero variable has value {v} < 0")));
    }
    let zeros = x.iter().filter(|v| **v == 0.0).count();
    if zeros == 0 {
        return Err(Error::NoSpike("variable".into()));
    }
    if zeros == x.len() {
        return Err(Error::AllZero("variable".into()));
    }
    let pre = crate::fp::pretransform(x)?;
    let origin = pre.apply_one(0.0);
    Ok(SpikeDecomposition {
        indicator: x.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect(),
        positive_part: x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        transformed: x
            .iter()
            .map(|&v| if v > 0.0 { pre.apply_one(v) } else { origin })
            .collect(),
        zero_fraction: zeros as f64 / x.len() as f64,
        pretransform: pre,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "function", rename_all = "snake_case")]
pub enum SpikeVerdict {
    None,
    ZOnly,
    /// Positive-part function only, continuous at the origin.
    FpOnly(Verdict),
    ZAndFp(Verdict),
}

impl SpikeVerdict {
    pub fn is_included(&self) -> bool {
        !matches!(self, SpikeVerdict::None)
    }

    pub fn function(&self) -> Option<&Verdict> {
        match self {
            SpikeVerdict::FpOnly(v) | SpikeVerdict::ZAndFp(v) => Some(v),
            _ => None,
        }
    }

    pub fn has_indicator(&self) -> bool {
        matches!(self, SpikeVerdict::ZOnly | SpikeVerdict::ZAndFp(_))
    }
}

impl std::fmt::Display for SpikeVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpikeVerdict::None => write!(f, "excluded"),
            SpikeVerdict::ZOnly => write!(f, "indicator only"),
            SpikeVerdict::FpOnly(v) => write!(f, "positive-part {v}"),
            SpikeVerdict::ZAndFp(v) => write!(f, "indicator + positive-part {v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeOptions {
    /// Level of the joint test and of the two component-removal tests.
    pub alpha: f64,
    /// Level of the function-selection steps inside each arm.
    pub alpha_fp: f64,
    pub max_degree: usize,
    /// Keep the variable even when the joint test is not significant.
    pub force_in: bool,
    pub test: TestKind,
}

impl SpikeOptions {
    pub fn new(alpha: f64, max_degree: usize) -> Self {
        SpikeOptions {
            alpha,
            alpha_fp: alpha,
            max_degree,
            force_in: false,
            test: TestKind::Chisq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeDecision {
    pub variable: String,
    pub verdict: SpikeVerdict,
    pub joint: Option<StepTest>,
    /// Z+FP against FP only.
    pub indicator_removal: Option<StepTest>,
    /// Z+FP against Z only.
    pub fp_removal: Option<StepTest>,
    /// Function-selection steps in the Z+FP arm and in the FP-only arm.
    pub with_indicator_steps: Vec<StepTest>,
    pub fp_only_steps: Vec<StepTest>,
    pub zero_fraction: f64,
    pub pretransform: PreTransform,
    pub options: SpikeOptions,
    /// Coefficient of Z in the selected model, when Z is retained.
    pub indicator_coefficient: Option<f64>,
}

impl SpikeDecision {
    pub fn terms(&self) -> Vec<Term> {
        let z = Term::new(&self.variable, Transform::Indicator { threshold: 0.0 });
        let fp = |v: &Verdict| spike_term(&self.variable, v, self.pretransform);
        match &self.verdict {
            SpikeVerdict::None => vec![],
            SpikeVerdict::ZOnly => vec![z],
            SpikeVerdict::FpOnly(v) => fp(v).into_iter().collect(),
            SpikeVerdict::ZAndFp(v) => std::iter::once(z).chain(fp(v)).collect(),
        }
    }
}

fn spike_term(variable: &str, v: &Verdict, pre: PreTransform) -> Option<Term> {
    let powers = match v {
        Verdict::Excluded => return None,
        Verdict::Linear => FpPowers::fp1(1.0).expect("valid power"),
        Verdict::Fp1(p) | Verdict::Fp2(p) => p.clone(),
    };
    Some(Term::new(variable, Transform::SpikeFp { powers, pre }))
}

struct Anchored {
    cache: PowerCache,
    positive: Vec<bool>,
    origin_row: usize,
}

impl Anchored {
    fn columns(&self, p: &FpPowers) -> Vec<Vec<f64>> {
        let mut cols = self.cache.columns(p);
        for col in &mut cols {
            let o = col[self.origin_row];
            for (c, &pos) in col.iter_mut().zip(&self.positive) {
                *c = if pos { *c - o } else { 0.0 };
            }
        }
        cols
    }
}

struct Arm {
    verdict: Verdict,
    fit: FitResult,
    top: FitResult,
    steps: Vec<StepTest>,
}

fn select_arm(
    data: &Dataset,
    variable: &str,
    base: &Design,
    anchored: &Anchored,
    pre: PreTransform,
    opts: &SpikeOptions,
) -> Result<Arm> {
    let dfs = fsp_degrees_of_freedom(opts.max_degree)?;
    let cols = |p: &FpPowers| anchored.columns(p);
    let linear_powers = FpPowers::fp1(1.0)?;
    let linear = base.fit_with_labels(data, &cols(&linear_powers), fp_labels(variable, &linear_powers, "+"))?;
    let fp1 = search(data, base, variable, &enumerate_fp(1)?, cols, pre, 1)?;
    let fp2 = if opts.max_degree == 2 {
        Some(search(data, base, variable, &enumerate_fp(2)?, cols, pre, 2)?)
    } else {
        None
    };
    let top = fp2.as_ref().unwrap_or(&fp1).fit.clone();
    let mut steps = Vec::new();
    let s = step(2, "positive-part FP vs linear", &linear, &top, dfs[1], opts.alpha_fp, opts.test)?;
    let nonlinear = s.significant;
    steps.push(s);
    if !nonlinear {
        return Ok(Arm {
            verdict: Verdict::Linear,
            fit: linear,
            top,
            steps,
        });
    }
    let (verdict, fit) = match fp2 {
        None => (Verdict::Fp1(fp1.best_powers.clone()), fp1.fit),
        Some(fp2) => {
            let s = step(3, "positive-part FP2 vs FP1", &fp1.fit, &fp2.fit, dfs[2], opts.alpha_fp, opts.test)?;
            let sig = s.significant;
            steps.push(s);
            if sig {
                (Verdict::Fp2(fp2.best_powers), fp2.fit)
            } else {
                (Verdict::Fp1(fp1.best_powers), fp1.fit)
            }
        }
    };
    Ok(Arm { verdict, fit, top, steps })
}

/// Select among no effect, indicator only, positive-part FP only, and both.
///
/// 1. Best indicator + FP of maximal degree against the null model on
///    `1 + 2m` d.f.; not significant means no effect.
/// 2. The indicator (1 d.f.) and the FP function (its own d.f.) are each
///    tested for removal from the indicator + FP model; components whose
///    removal is rejected are kept. If neither removal is rejected, the
///    component with the smaller removal p-value is kept alone.
///
/// FP functions inside each arm are chosen by the function selection steps
/// (FP vs linear, FP2 vs FP1) at `alpha_fp`.
pub fn spike_fsp(
    data: &Dataset,
    variable: &str,
    alpha: f64,
    max_degree: usize,
    adjustment: &ModelSpec,
) -> Result<SpikeDecision> {
    spike_fsp_with(data, variable, &SpikeOptions::new(alpha, max_degree), adjustment)
}

pub fn spike_fsp_with(
    data: &Dataset,
    variable: &str,
    opts: &SpikeOptions,
    adjustment: &ModelSpec,
) -> Result<SpikeDecision> {
    for a in [opts.alpha, opts.alpha_fp] {
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::domain(format!("significance level {a} outside (0, 1]")));
        }
    }
    fsp_degrees_of_freedom(opts.max_degree)?;
    if adjustment.mentions(variable) {
        return Err(Error::domain(format!("adjustment model already contains `{variable}`")));
    }
    let x = data.column(variable)?;
    let dec = spike_decompose(x).map_err(|e| match e {
        Error::NoSpike(_) => Error::NoSpike(variable.to_string()),
        Error::AllZero(_) => Error::AllZero(variable.to_string()),
        other => other,
    })?;
    let pre = dec.pretransform;
    let base = adjustment.design(data)?;
    let null = base.fit(data)?;
    let z_label = format!("{variable}>0");
    let with_z = base.extended(vec![dec.indicator.clone()], vec![z_label.clone()]);
    let z_only = with_z.fit(data)?;

    let mut decision = SpikeDecision {
        variable: variable.to_string(),
        verdict: SpikeVerdict::None,
        joint: None,
        indicator_removal: None,
        fp_removal: None,
        with_indicator_steps: Vec::new(),
        fp_only_steps: Vec::new(),
        zero_fraction: dec.zero_fraction,
        pretransform: pre,
        options: *opts,
        indicator_coefficient: None,
    };
    let z_coef = |f: &FitResult| f.coefficient(&z_label);

    if dec.distinct_positive() < MIN_DISTINCT_FOR_FP {
        let s = step(1, "indicator vs null", &null, &z_only, 1, opts.alpha, opts.test)?;
        if s.significant || opts.force_in {
            decision.verdict = SpikeVerdict::ZOnly;
            decision.indicator_coefficient = z_coef(&z_only);
        }
        decision.joint = Some(s);
        return Ok(decision);
    }

    let origin_row = x.iter().position(|v| *v == 0.0).expect("has zeros");
    let anchored = Anchored {
        cache: PowerCache::new(&dec.transformed)?,
        positive: dec.indicator.iter().map(|z| *z == 1.0).collect(),
        origin_row,
    };
    let z_arm = select_arm(data, variable, &with_z, &anchored, pre, opts)?;
    let fp_arm = select_arm(data, variable, &base, &anchored, pre, opts)?;
    decision.with_indicator_steps = z_arm.steps.clone();
    decision.fp_only_steps = fp_arm.steps.clone();

    let joint_df = 1 + 2 * opts.max_degree;
    let joint = step(1, "indicator + FP vs null", &null, &z_arm.top, joint_df, opts.alpha, opts.test)?;
    let joint_sig = joint.significant;
    decision.joint = Some(joint);
    if !joint_sig && !opts.force_in {
        return Ok(decision);
    }

    // FP-only model with the same function as the Z+FP arm, for a nested 1 d.f. test
    let f = &z_arm.verdict;
    let f_powers = match f {
        Verdict::Fp1(p) | Verdict::Fp2(p) => p.clone(),
        _ => FpPowers::fp1(1.0)?,
    };
    let fp_same = base.fit_with_labels(data, &anchored.columns(&f_powers), fp_labels(variable, &f_powers, "+"))?;
    let z_rm = step(2, "indicator removal", &fp_same, &z_arm.fit, 1, opts.alpha, opts.test)?;
    let fp_rm = step(2, "FP removal", &z_only, &z_arm.fit, f.df(), opts.alpha, opts.test)?;

    decision.verdict = match (z_rm.significant, fp_rm.significant) {
        (true, true) => SpikeVerdict::ZAndFp(f.clone()),
        (true, false) => SpikeVerdict::ZOnly,
        (false, true) => SpikeVerdict::FpOnly(fp_arm.verdict.clone()),
        (false, false) => {
            if z_rm.p_value <= fp_rm.p_value {
                SpikeVerdict::ZOnly
            } else {
                SpikeVerdict::FpOnly(fp_arm.verdict.clone())
            }
        }
    };
    decision.indicator_coefficient = match decision.verdict {
        SpikeVerdict::ZAndFp(_) => z_coef(&z_arm.fit),
        SpikeVerdict::ZOnly => z_coef(&z_only),
        _ => None,
    };
    decision.indicator_removal = Some(z_rm);
    decision.fp_removal = Some(fp_rm);
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Family;
    use crate::glm::fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn decompose_definition() {
        let d = spike_decompose(&[0.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.indicator, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        assert!((d.zero_fraction - 0.4).abs() < 1e-15);
        assert_eq!(d.merge(), vec![0.0, 0.0, 1.0, 2.0, 3.0]);
        assert!(d.transformed.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn decompose_errors() {
        assert!(matches!(spike_decompose(&[1.0, 2.0]), Err(Error::NoSpike(_))));
        assert!(matches!(spike_decompose(&[0.0, 0.0]), Err(Error::AllZero(_))));
        assert!(spike_decompose(&[0.0, -1.0, 2.0]).is_err());
    }

    #[test]
    fn eight_percent_zeros() {
        let x: Vec<f64> = (0..1000).map(|i| if i % 25 < 2 { 0.0 } else { 1.0 + i as f64 }).collect();
        let d = spike_decompose(&x).unwrap();
        assert!((d.zero_fraction - 0.08).abs() < 1e-12);
    }

    fn spike_data(seed: u64, n: usize, f: impl Fn(f64) -> f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(1..=40) as f64 })
            .collect();
        let y: Vec<f64> = x.iter().map(|&v| f(v) + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        Dataset::new(vec!["y".into(), "x".into()], vec![y, x], "y", Family::Gaussian).unwrap()
    }

    #[test]
    fn jump_only_selects_indicator() {
        let d = spike_data(1, 400, |v| if v > 0.0 { 1.0 } else { 0.0 });
        let s = spike_fsp(&d, "x", 0.05, 2, &ModelSpec::null()).unwrap();
        assert_eq!(s.verdict, SpikeVerdict::ZOnly);
        assert!((s.indicator_coefficient.unwrap() - 1.0).abs() < 0.15);
    }

    #[test]
    fn smooth_log_selects_fp_with_log() {
        // positive values on an integer grid: shift 1, so log(1 + x) is an FP1(0)
        let d = spike_data(2, 400, |v| 1.5 * (1.0 + v).ln());
        let s = spike_fsp(&d, "x", 0.05, 2, &ModelSpec::null()).unwrap();
        match &s.verdict {
            SpikeVerdict::FpOnly(v) => assert!(v.powers().is_some_and(|p| p.contains(0.0)), "{v}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn zero_rows_ignore_powers() {
        let d = spike_data(3, 100, |v| v.sqrt());
        let pre = spike_decompose(d.column("x").unwrap()).unwrap().pretransform;
        let zero_rows: Vec<usize> = (0..d.n()).filter(|&i| d.column("x").unwrap()[i] == 0.0).collect();
        let mut eta_at_zero = Vec::new();
        for p in [FpPowers::fp1(-2.0).unwrap(), FpPowers::fp2(0.5, 3.0).unwrap()] {
            let spec = ModelSpec::new(vec![
                Term::new("x", Transform::Indicator { threshold: 0.0 }),
                Term::new("x", Transform::SpikeFp { powers: p, pre }),
            ])
            .unwrap();
            let design = spec.design(&d).unwrap();
            for &r in &zero_rows {
                // only the intercept column is nonzero on unexposed rows
                assert!(design.columns.iter().skip(1).all(|c| c[r] == 0.0));
            }
            let f = fit(&d, &spec).unwrap();
            eta_at_zero.push(f.intercept().unwrap());
        }
        assert!(eta_at_zero.iter().all(|e| e.is_finite()));
    }
}
