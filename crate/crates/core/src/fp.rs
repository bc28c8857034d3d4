//! Fractional polynomial transformations and best-fit power search.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glm::FitResult;
use crate::model::ModelSpec;

/// The conventional FP power set; 0 stands for log.
pub const POWER_SET: [f64; 8] = [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0];

/// One or two powers from [`POWER_SET`], kept in nondecreasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FpPowers(Vec<f64>);

impl FpPowers {
    pub fn new(powers: &[f64]) -> Result<Self> {
        if powers.is_empty() || powers.len() > 2 {
            return Err(Error::domain(format!(
                "FP degree {} not supported (1 or 2)",
                powers.len()
            )));
        }
        if let Some(p) = powers.iter().find(|p| !POWER_SET.contains(p)) {
            return Err(Error::domain(format!("power {p} is not in the FP power set")));
        }
        let mut v = powers.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(FpPowers(v))
    }

    pub fn fp1(p: f64) -> Result<Self> {
        Self::new(&[p])
    }

    pub fn fp2(p1: f64, p2: f64) -> Result<Self> {
        Self::new(&[p1, p2])
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn powers(&self) -> &[f64] {
        &self.0
    }

    pub fn is_repeated(&self) -> bool {
        self.0.len() == 2 && self.0[0] == self.0[1]
    }

    pub fn contains(&self, p: f64) -> bool {
        self.0.contains(&p)
    }

    /// Powers (1): the straight line.
    pub fn is_linear(&self) -> bool {
        self.0 == [1.0]
    }

    /// Number of estimated coefficients an FP with these powers adds.
    pub fn n_columns(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for FpPowers {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        FpPowers::new(&v)
    }
}

impl From<FpPowers> for Vec<f64> {
    fn from(p: FpPowers) -> Self {
        p.0
    }
}

impl fmt::Display for FpPowers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|p| format!("{p}")).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// All FP powers of the given degree in canonical order.
///
/// Degree 1 yields the 8 singletons; degree 2 the 28 distinct pairs plus the
/// 8 repeated pairs, scanned as `p1 <= p2` in ascending order.
pub fn enumerate_fp(degree: usize) -> Result<Vec<FpPowers>> {
    match degree {
        1 => Ok(POWER_SET.iter().map(|&p| FpPowers(vec![p])).collect()),
        2 => {
            let mut out = Vec::with_capacity(36);
            for (i, &a) in POWER_SET.iter().enumerate() {
                for &b in &POWER_SET[i..] {
                    out.push(FpPowers(vec![a, b]));
                }
            }
            Ok(out)
        }
        d => Err(Error::domain(format!("FP degree {d} not supported (1 or 2)"))),
    }
}

/// x^p with the convention x^0 = log x.
pub(crate) fn fp_power(x: f64, p: f64) -> f64 {
    match p {
        0.0 => x.ln(),
        1.0 => x,
        2.0 => x * x,
        3.0 => x * x * x,
        -1.0 => 1.0 / x,
        -2.0 => 1.0 / (x * x),
        0.5 => x.sqrt(),
        -0.5 => 1.0 / x.sqrt(),
        _ => x.powf(p),
    }
}

/// Design columns of an FP with the given powers.
///
/// Distinct powers give `x^p1, x^p2`; repeated powers `(p, p)` give
/// `x^p, x^p log x`.
pub fn fp_basis(x: &[f64], powers: &FpPowers) -> Result<Vec<Vec<f64>>> {
    if let Some(v) = x.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::domain(format!(
            "FP transformation needs positive values, got {v}"
        )));
    }
    let p = powers.powers();
    let first: Vec<f64> = x.iter().map(|&v| fp_power(v, p[0])).collect();
    if p.len() == 1 {
        return Ok(vec![first]);
    }
    let second: Vec<f64> = if powers.is_repeated() {
        x.iter().zip(&first).map(|(&v, &f)| f * v.ln()).collect()
    } else {
        x.iter().map(|&v| fp_power(v, p[1])).collect()
    };
    Ok(vec![first, second])
}

/// Origin shift and decimal scaling that make a covariate strictly positive
/// and of moderate magnitude before FP transformation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreTransform {
    pub shift: f64,
    pub scale: f64,
}

impl PreTransform {
    pub const IDENTITY: PreTransform = PreTransform {
        shift: 0.0,
        scale: 1.0,
    };

    pub fn apply_one(&self, x: f64) -> f64 {
        (x + self.shift) / self.scale
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply_one(v)).collect()
    }
}

/// Data-driven pre-transformation.
///
/// Shift is zero when all values are positive, otherwise `-min + gap` where
/// `gap` is the smallest difference between successive distinct values. The
/// scale is 1 when the largest shifted magnitude lies in [0.01, 100], else the
/// power of ten `10^floor(log10(max))`.
pub fn pretransform(x: &[f64]) -> Result<PreTransform> {
    let mut v: Vec<f64> = x.to_vec();
    if v.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("non-finite value in FP covariate"));
    }
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() < 2 {
        return Err(Error::DegenerateVariable("fp covariate".into()));
    }
    let min = v[0];
    let shift = if min > 0.0 {
        0.0
    } else {
        let gap = v
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        -min + gap
    };
    let max_mag = v
        .iter()
        .map(|t| (t + shift).abs())
        .fold(0.0f64, f64::max);
    let scale = if (0.01..=100.0).contains(&max_mag) {
        1.0
    } else {
        10f64.powi(max_mag.log10().floor() as i32)
    };
    Ok(PreTransform { shift, scale })
}

/// Outcome of an exhaustive search over one FP degree.
#[derive(Debug, Clone)]
pub struct FpSearchResult {
    pub degree: usize,
    pub best_powers: FpPowers,
    pub fit: FitResult,
    /// Deviance of every candidate in enumeration order (unadjusted for the
    /// search). Failed candidate fits score +infinity.
    pub deviance_table: Vec<(FpPowers, f64)>,
    pub pretransform: PreTransform,
}

impl FpSearchResult {
    pub fn best_deviance(&self) -> f64 {
        self.fit.deviance
    }
}

/// Best-fitting FP of the given degree for `variable`, adjusting for the
/// terms of `adjustment`. The pre-transformation is derived from the data.
pub fn best_fp(
    data: &Dataset,
    variable: &str,
    degree: usize,
    adjustment: &ModelSpec,
) -> Result<FpSearchResult> {
    let pre = pretransform(data.column(variable)?)?;
    best_fp_with(data, variable, degree, adjustment, pre)
}

/// As [`best_fp`] but with an explicit pre-transformation.
pub fn best_fp_with(
    data: &Dataset,
    variable: &str,
    degree: usize,
    adjustment: &ModelSpec,
    pre: PreTransform,
) -> Result<FpSearchResult> {
    if adjustment.mentions(variable) {
        return Err(Error::domain(format!(
            "adjustment model already contains `{variable}`"
        )));
    }
    let x = pre.apply(data.column(variable)?);
    let candidates = enumerate_fp(degree)?;
    let basis = PowerCache::new(&x)?;
    let design = adjustment.design(data)?;
    search(data, &design, variable, &candidates, |p| basis.columns(p), pre, degree)
}

pub(crate) fn search<F>(
    data: &Dataset,
    design: &crate::model::Design,
    variable: &str,
    candidates: &[FpPowers],
    columns_for: F,
    pre: PreTransform,
    degree: usize,
) -> Result<FpSearchResult>
where
    F: Fn(&FpPowers) -> Vec<Vec<f64>> + Sync,
{
    let fits: Vec<Option<FitResult>> = candidates
        .par_iter()
        .map(|p| {
            let cols = columns_for(p);
            design.fit_with(data, &cols, variable, p).ok()
        })
        .collect();
    let mut best: Option<usize> = None;
    let mut table = Vec::with_capacity(candidates.len());
    for (i, (p, f)) in candidates.iter().zip(&fits).enumerate() {
        let dev = f
            .as_ref()
            .filter(|f| f.deviance.is_finite())
            .map_or(f64::INFINITY, |f| f.deviance);
        table.push((p.clone(), dev));
        let better = match best {
            None => dev.is_finite(),
            Some(b) => dev < table[b].1,
        };
        if better {
            best = Some(i);
        }
    }
    let b = best.ok_or_else(|| {
        Error::RankDeficient(format!("every FP{degree} candidate fit failed for `{variable}`"))
    })?;
    let fit = fits.into_iter().nth(b).flatten().expect("best candidate has a fit");
    Ok(FpSearchResult {
        degree,
        best_powers: candidates[b].clone(),
        fit,
        deviance_table: table,
        pretransform: pre,
    })
}

/// Precomputed `x^p` and `x^p log x` for every power in the set.
pub(crate) struct PowerCache {
    plain: Vec<Vec<f64>>,
    logged: Vec<Vec<f64>>,
}

impl PowerCache {
    pub(crate) fn new(x: &[f64]) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::domain(format!(
                "FP transformation needs positive values, got {v}"
            )));
        }
        let plain: Vec<Vec<f64>> = POWER_SET
            .iter()
            .map(|&p| x.iter().map(|&v| fp_power(v, p)).collect())
            .collect();
        let logged = plain
            .iter()
            .map(|col| col.iter().zip(x).map(|(c, v)| c * v.ln()).collect())
            .collect();
        Ok(PowerCache { plain, logged })
    }

    fn index(p: f64) -> usize {
        POWER_SET.iter().position(|&q| q == p).expect("validated power")
    }

    pub(crate) fn columns(&self, powers: &FpPowers) -> Vec<Vec<f64>> {
        let p = powers.powers();
        let first = self.plain[Self::index(p[0])].clone();
        if p.len() == 1 {
            vec![first]
        } else if powers.is_repeated() {
            vec![first, self.logged[Self::index(p[0])].clone()]
        } else {
            vec![first, self.plain[Self::index(p[1])].clone()]
        }
    }
}

/// Smallest number of distinct values for which an FP2 search is attempted.
pub const MIN_DISTINCT_FOR_FP: usize = 5;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn family_sizes() {
        assert_eq!(enumerate_fp(1).unwrap().len(), 8);
        let two = enumerate_fp(2).unwrap();
        assert_eq!(two.len(), 36);
        for (i, a) in two.iter().enumerate() {
            assert!(two[i + 1..].iter().all(|b| b != a));
        }
        let count = |p: &[f64]| two.iter().filter(|q| q.powers() == p).count();
        assert_eq!(count(&[-2.0, -2.0]), 1);
        assert_eq!(count(&[0.0, 3.0]), 1);
        assert_eq!(two.iter().filter(|p| p.is_repeated()).count(), 8);
        assert!(enumerate_fp(3).is_err());
        assert!(enumerate_fp(0).is_err());
    }

    #[test]
    fn powers_validate_and_sort() {
        assert_eq!(FpPowers::fp2(3.0, -1.0).unwrap().powers(), &[-1.0, 3.0]);
        assert!(FpPowers::fp1(4.0).is_err());
        assert!(FpPowers::new(&[1.0, 2.0, 3.0]).is_err());
        let json = serde_json::to_string(&FpPowers::fp2(0.0, 0.5).unwrap()).unwrap();
        assert_eq!(json, "[0.0,0.5]");
        assert!(serde_json::from_str::<FpPowers>("[0.25]").is_err());
    }

    #[test]
    fn basis_examples() {
        let b = fp_basis(&[1.0, 2.0, 4.0], &FpPowers::fp1(1.0).unwrap()).unwrap();
        assert_eq!(b, vec![vec![1.0, 2.0, 4.0]]);

        let e = std::f64::consts::E;
        let b = fp_basis(&[1.0, e, e * e], &FpPowers::fp1(0.0).unwrap()).unwrap();
        for (got, want) in b[0].iter().zip([0.0, 1.0, 2.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }

        let b = fp_basis(&[2.0], &FpPowers::fp2(2.0, 2.0).unwrap()).unwrap();
        assert_abs_diff_eq!(b[0][0], 4.0);
        assert_abs_diff_eq!(b[1][0], 4.0 * 2f64.ln(), epsilon = 1e-15);

        let b = fp_basis(&[3.0], &FpPowers::fp2(0.0, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(b[1][0], 3f64.ln().powi(2), epsilon = 1e-15);

        assert!(fp_basis(&[1.0, 0.0], &FpPowers::fp1(1.0).unwrap()).is_err());
    }

    #[test]
    fn basis_finite_over_wide_range() {
        let xs: Vec<f64> = (-8..=8).map(|k| 10f64.powi(k)).collect();
        for p in enumerate_fp(2).unwrap() {
            for col in fp_basis(&xs, &p).unwrap() {
                assert!(col.iter().all(|v| v.is_finite()), "{p}");
            }
        }
    }

    #[test]
    fn cache_matches_basis() {
        let x = [0.3, 1.7, 2.2, 9.0];
        let cache = PowerCache::new(&x).unwrap();
        for p in enumerate_fp(2).unwrap() {
            assert_eq!(cache.columns(&p), fp_basis(&x, &p).unwrap());
        }
    }

    #[test]
    fn pretransform_positive_noop() {
        let pt = pretransform(&[0.5, 1.0, 2.5]).unwrap();
        assert_eq!(pt, PreTransform::IDENTITY);
    }

    #[test]
    fn pretransform_shift_by_smallest_gap() {
        // gaps 1, 1, 3 -> shift = 0 + 1
        let pt = pretransform(&[0.0, 1.0, 2.0, 5.0]).unwrap();
        assert_eq!(pt.shift, 1.0);
        assert_eq!(pt.scale, 1.0);
        assert!(pt.apply(&[0.0, 1.0, 2.0, 5.0]).iter().all(|v| *v >= 1.0));

        let pt = pretransform(&[-3.0, -1.0, 4.0]).unwrap();
        assert_eq!(pt.shift, 5.0);
    }

    #[test]
    fn pretransform_decimal_scale() {
        let pt = pretransform(&[1.2e5, 3.0e5, 2.2e5]).unwrap();
        assert_eq!(pt.scale, 1e5);
        let pt = pretransform(&[0.0001, 0.0003, 0.0009]).unwrap();
        assert_eq!(pt.scale, 1e-4);
        let scaled = pt.apply(&[0.0009]);
        assert!((0.01..=100.0).contains(&scaled[0]));
    }

    #[test]
    fn pretransform_constant_is_degenerate() {
        assert!(matches!(
            pretransform(&[2.0, 2.0, 2.0]),
            Err(Error::DegenerateVariable(_))
        ));
    }
}
