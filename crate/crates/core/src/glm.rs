//! Gaussian-identity and binomial-logit GLMs fitted by iteratively
//! reweighted least squares, plus nested likelihood-ratio tests.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Family};
use crate::error::{Error, Result};
use crate::linalg::{least_squares, ColMatrix};
use crate::model::ModelSpec;
use crate::special::{chi2_sf, f_sf};

/// Relative deviance change that ends IRLS.
pub const IRLS_TOL: f64 = 1e-12;
pub const IRLS_MAX_ITER: usize = 50;
/// Largest |coefficient| on the logit scale before a fit is flagged as separated.
pub const SEPARATION_COEF: f64 = 15.0;

const RSS_FLOOR: f64 = 1e-300;
const ETA_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    /// Column labels of the design, intercept first when present.
    pub labels: Vec<String>,
    /// Index of the generating term for each column (`None` for the intercept).
    pub term_of: Vec<Option<usize>>,
    /// One per design column; aliased columns carry 0.
    pub coefficients: Vec<f64>,
    pub aliased: Vec<bool>,
    /// Row-major, same indexing as `coefficients`; aliased rows/columns are 0.
    pub covariance: Vec<Vec<f64>>,
    /// Residual sum of squares (Gaussian) or binomial deviance.
    pub deviance: f64,
    pub log_likelihood: f64,
    /// Number of estimated (non-aliased) coefficients.
    pub model_df: usize,
    pub n: usize,
    pub dispersion: f64,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    pub linear_predictor: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.coefficients[i])
    }

    pub fn std_error(&self, column: usize) -> f64 {
        self.covariance[column][column].max(0.0).sqrt()
    }

    pub fn wald_z(&self, column: usize) -> f64 {
        self.coefficients[column] / self.std_error(column)
    }

    /// Design columns generated by term `term`.
    pub fn columns_of_term(&self, term: usize) -> Vec<usize> {
        self.term_of
            .iter()
            .enumerate()
            .filter(|(_, t)| **t == Some(term))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn intercept(&self) -> Option<f64> {
        self.term_of
            .iter()
            .position(Option::is_none)
            .map(|i| self.coefficients[i])
    }

    /// Turn the convergence and separation flags into errors.
    pub fn ensure_clean(&self) -> Result<&Self> {
        if !self.converged {
            return Err(Error::NotConverged {
                iterations: self.iterations,
            });
        }
        if self.separation {
            let max_abs_coef = self
                .coefficients
                .iter()
                .fold(0.0f64, |m, c| m.max(c.abs()));
            return Err(Error::Separation { max_abs_coef });
        }
        Ok(self)
    }
}

/// Fit the model described by `spec` on `data`.
pub fn fit(data: &Dataset, spec: &ModelSpec) -> Result<FitResult> {
    spec.design(data)?.fit(data)
}

/// Fit with explicit design columns. The intercept, if wanted, must already
/// be among `columns`.
pub fn fit_columns(
    y: &[f64],
    family: Family,
    columns: &[&[f64]],
    labels: Vec<String>,
    term_of: Vec<Option<usize>>,
) -> Result<FitResult> {
    let n = y.len();
    let p = columns.len();
    if p == 0 {
        return Err(Error::RankDeficient("model has no design columns".into()));
    }
    let x = ColMatrix::from_columns(n, columns);
    match family {
        Family::Gaussian => fit_gaussian(y, &x, labels, term_of),
        Family::Binomial => fit_binomial(y, &x, labels, term_of),
    }
}

fn aliasing_warning(labels: &[String], aliased: &[bool]) -> Option<String> {
    let dropped: Vec<&str> = labels
        .iter()
        .zip(aliased)
        .filter(|(_, a)| **a)
        .map(|(l, _)| l.as_str())
        .collect();
    (!dropped.is_empty()).then(|| format!("aliased columns dropped: {}", dropped.join(", ")))
}

fn expand(kept: &[usize], p: usize, values: &[f64], cov: &[f64], scale: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = kept.len();
    let mut coef = vec![0.0; p];
    let mut covariance = vec![vec![0.0; p]; p];
    for (a, &i) in kept.iter().enumerate() {
        coef[i] = values[a];
        for (b, &j) in kept.iter().enumerate() {
            covariance[i][j] = scale * cov[a * k + b];
        }
    }
    (coef, covariance)
}

fn linear_predictor(x: &ColMatrix, coef: &[f64]) -> Vec<f64> {
    let mut eta = vec![0.0; x.nrows];
    for (j, &b) in coef.iter().enumerate() {
        if b != 0.0 {
            for (e, v) in eta.iter_mut().zip(x.col(j)) {
                *e += b * v;
            }
        }
    }
    eta
}

fn gaussian_loglik(rss: f64, n: usize) -> f64 {
    let nf = n as f64;
    -0.5 * nf * ((2.0 * std::f64::consts::PI * rss.max(RSS_FLOOR) / nf).ln() + 1.0)
}

fn fit_gaussian(
    y: &[f64],
    x: &ColMatrix,
    labels: Vec<String>,
    term_of: Vec<Option<usize>>,
) -> Result<FitResult> {
    let n = y.len();
    let p = x.ncols;
    let ls = least_squares(x, y, &[], true);
    let rank = ls.rank();
    if rank == 0 {
        return Err(Error::RankDeficient("all design columns are zero".into()));
    }
    if n <= rank {
        return Err(Error::TooFewObservations { n, params: rank });
    }
    let mut aliased = vec![true; p];
    for &j in &ls.kept {
        aliased[j] = false;
    }
    let dispersion = ls.rss / (n - rank) as f64;
    let (coefficients, covariance) =
        expand(&ls.kept, p, &ls.coef, &ls.unscaled_covariance(), dispersion);
    let linear_predictor = linear_predictor(x, &coefficients);
    let warnings = aliasing_warning(&labels, &aliased).into_iter().collect();
    Ok(FitResult {
        family: Family::Gaussian,
        labels,
        term_of,
        coefficients,
        aliased,
        covariance,
        deviance: ls.rss,
        log_likelihood: gaussian_loglik(ls.rss, n),
        model_df: rank,
        n,
        dispersion,
        converged: true,
        iterations: 1,
        separation: false,
        linear_predictor,
        warnings,
    })
}

pub(crate) fn logistic(eta: f64) -> f64 {
    let e = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
    1.0 / (1.0 + (-e).exp())
}

pub(crate) fn binomial_deviance(y: &[f64], eta: &[f64]) -> f64 {
    // -2 * loglik, computed from eta for accuracy near 0/1
    y.iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let e = e.clamp(-ETA_CLAMP, ETA_CLAMP);
            // log(1 + exp(e)) stable
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            2.0 * (softplus - yi * e)
        })
        .sum()
}

fn fit_binomial(
    y: &[f64],
    x: &ColMatrix,
    labels: Vec<String>,
    term_of: Vec<Option<usize>>,
) -> Result<FitResult> {
    let n = y.len();
    let p = x.ncols;
    let structural = least_squares(x, y, &[], true);
    let kept = structural.kept.clone();
    let rank = kept.len();
    if rank == 0 {
        return Err(Error::RankDeficient("all design columns are zero".into()));
    }
    if n <= rank {
        return Err(Error::TooFewObservations { n, params: rank });
    }
    let mut aliased = vec![true; p];
    for &j in &kept {
        aliased[j] = false;
    }

    let mut mu: Vec<f64> = y.iter().map(|&v| (v + 0.5) / 2.0).collect();
    let mut eta: Vec<f64> = mu.iter().map(|m| (m / (1.0 - m)).ln()).collect();
    let mut dev_old = binomial_deviance(y, &eta);
    let mut coef_old: Option<Vec<f64>> = None;
    let mut last_ls = None;
    let mut converged = false;
    let mut iterations = 0;
    let mut dev = dev_old;
    let mut increasing_lik = true;

    let mut scaled = ColMatrix {
        nrows: n,
        ncols: rank,
        data: vec![0.0; n * rank],
    };
    let mut z = vec![0.0; n];
    for iter in 1..=IRLS_MAX_ITER {
        iterations = iter;
        let sw: Vec<f64> = mu.iter().map(|m| (m * (1.0 - m)).max(1e-12).sqrt()).collect();
        for (a, &j) in kept.iter().enumerate() {
            let src = x.col(j);
            let dst = &mut scaled.data[a * n..(a + 1) * n];
            for i in 0..n {
                dst[i] = src[i] * sw[i];
            }
        }
        for i in 0..n {
            let w = sw[i] * sw[i];
            z[i] = sw[i] * (eta[i] + (y[i] - mu[i]) / w);
        }
        let ls = least_squares(&scaled, &z, &[], false);
        if ls.rank() < rank {
            return Err(Error::RankDeficient(
                "weighted design lost rank during IRLS".into(),
            ));
        }
        let mut coef = ls.coef.clone();
        let mut full = expand_coef(&kept, p, &coef);
        let mut new_eta = linear_predictor(x, &full);
        dev = binomial_deviance(y, &new_eta);
        // step halving on deviance increase
        if let Some(old) = &coef_old {
            let mut halvings = 0;
            while !(dev <= dev_old * (1.0 + 1e-12) + 1e-12) && halvings < 20 {
                for (c, o) in coef.iter_mut().zip(old) {
                    *c = 0.5 * (*c + o);
                }
                full = expand_coef(&kept, p, &coef);
                new_eta = linear_predictor(x, &full);
                dev = binomial_deviance(y, &new_eta);
                halvings += 1;
            }
        }
        increasing_lik = dev <= dev_old * (1.0 + 1e-12) + 1e-12;
        eta = new_eta;
        mu = eta.iter().map(|&e| logistic(e)).collect();
        let rel = (dev - dev_old).abs() / (dev.abs() + 0.1);
        coef_old = Some(coef);
        last_ls = Some(ls);
        dev_old = dev;
        if rel < IRLS_TOL {
            converged = true;
            break;
        }
    }

    let ls = last_ls.expect("at least one IRLS iteration");
    let coef = coef_old.expect("at least one IRLS iteration");
    let (coefficients, covariance) = expand(&kept, p, &coef, &ls.unscaled_covariance(), 1.0);
    let max_abs = term_of
        .iter()
        .zip(&coefficients)
        .filter(|(t, _)| t.is_some())
        .fold(0.0f64, |m, (_, c)| m.max(c.abs()));
    let separation = max_abs > SEPARATION_COEF && increasing_lik;
    let mut warnings: Vec<String> = aliasing_warning(&labels, &aliased).into_iter().collect();
    if !converged {
        warnings.push(format!("IRLS did not converge in {IRLS_MAX_ITER} iterations"));
    }
    if separation {
        warnings.push(format!(
            "possible separation: max |coefficient| = {max_abs:.2}"
        ));
    }
    Ok(FitResult {
        family: Family::Binomial,
        labels,
        term_of,
        coefficients,
        aliased,
        covariance,
        deviance: dev,
        log_likelihood: -0.5 * dev,
        model_df: rank,
        n,
        dispersion: 1.0,
        converged,
        iterations,
        separation,
        linear_predictor: eta,
        warnings,
    })
}

fn expand_coef(kept: &[usize], p: usize, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p];
    for (a, &i) in kept.iter().enumerate() {
        out[i] = values[a];
    }
    out
}

/// Which reference distribution a nested comparison uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// Likelihood-ratio statistic against chi-square.
    #[default]
    Chisq,
    /// Exact F test; Gaussian family only (falls back to chi-square otherwise).
    F,
}

/// Likelihood-ratio statistic 2 (l_full - l_reduced); equals the deviance
/// difference for the binomial family.
pub fn lr_statistic(reduced: &FitResult, full: &FitResult) -> f64 {
    match full.family {
        Family::Binomial => reduced.deviance - full.deviance,
        Family::Gaussian => 2.0 * (full.log_likelihood - reduced.log_likelihood),
    }
}

/// p-value for the nested comparison of `reduced` against `full` on `df`
/// degrees of freedom, using the chi-square reference.
pub fn deviance_test(reduced: &FitResult, full: &FitResult, df: usize) -> Result<f64> {
    nested_test(reduced, full, df, TestKind::Chisq)
}

pub fn nested_test(reduced: &FitResult, full: &FitResult, df: usize, kind: TestKind) -> Result<f64> {
    if df == 0 {
        return Err(Error::domain("nested test needs at least one degree of freedom"));
    }
    if reduced.n != full.n || reduced.family != full.family {
        return Err(Error::domain("nested test across different datasets"));
    }
    let stat = lr_statistic(reduced, full);
    let tol = 1e-7 * (1.0 + full.log_likelihood.abs());
    if stat < -tol {
        return Err(Error::NotNested { excess: -stat });
    }
    let p = match (kind, full.family) {
        (TestKind::F, Family::Gaussian) => {
            let resid_df = full.n.saturating_sub(full.model_df);
            if resid_df == 0 {
                return Err(Error::TooFewObservations {
                    n: full.n,
                    params: full.model_df,
                });
            }
            let diff = (reduced.deviance - full.deviance).max(0.0);
            if full.deviance <= 0.0 {
                if diff > 0.0 { 0.0 } else { 1.0 }
            } else {
                let f = (diff / df as f64) / (full.deviance / resid_df as f64);
                f_sf(f, df, resid_df)?
            }
        }
        _ => chi2_sf(stat.max(0.0), df)?,
    };
    Ok(p.clamp(0.0, 1.0))
}

/// Test of the fit without a block of columns against the fit with them, with
/// df taken from the difference in estimated coefficients. Returns 1 when the
/// block adds no estimable column.
pub fn removal_pvalue(reduced: &FitResult, full: &FitResult, kind: TestKind) -> Result<(f64, usize)> {
    let df = full.model_df.saturating_sub(reduced.model_df);
    if df == 0 {
        return Ok((1.0, 0));
    }
    Ok((nested_test(reduced, full, df, kind)?, df))
}
