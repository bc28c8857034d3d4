use mfpkit::rng::replication_rng;
use mfpkit::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn dataset(names: &[&str], columns: Vec<Vec<f64>>, family: Family) -> Dataset {
    Dataset::new(names.iter().map(|s| s.to_string()).collect(), columns, "y", family).unwrap()
}

/// Plain Newton-Raphson for logistic regression with an intercept.
fn newton_logit(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let p = x.len() + 1;
    let m = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x[j - 1][i] });
    let mut beta = DVector::zeros(p);
    for _ in 0..100 {
        let eta = &m * &beta;
        let mu: Vec<f64> = eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
        let grad = m.transpose() * DVector::from_iterator(n, (0..n).map(|i| y[i] - mu[i]));
        let w = DMatrix::from_diagonal(&DVector::from_iterator(n, mu.iter().map(|m| m * (1.0 - m))));
        let info = m.transpose() * w * &m;
        let step = info.lu().solve(&grad).unwrap();
        beta += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    beta.iter().copied().collect()
}

#[test]
fn logistic_fit_matches_newton_oracle() {
    for r in 0..30 {
        let mut rng = replication_rng(8, r);
        let x: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..120).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = (0..120)
            .map(|i| {
                let eta = -0.3 + 0.8 * x[0][i] - 0.5 * x[1][i];
                f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()))
            })
            .collect();
        let d = dataset(&["a", "b", "y"], vec![x[0].clone(), x[1].clone(), y.clone()], Family::Binomial);
        let f = fit(&d, &ModelSpec::linear(&["a", "b"]).unwrap()).unwrap();
        assert!(f.converged);
        for (a, b) in f.coefficients.iter().zip(newton_logit(&x, &y)) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn logistic_wald_test_holds_level_under_null() {
    let reps = 600;
    let mut rejections = 0;
    for r in 0..reps {
        let mut rng = replication_rng(31, r);
        let x: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..200).map(|_| f64::from(rng.random::<f64>() < 0.4)).collect();
        let d = dataset(&["x", "y"], vec![x, y], Family::Binomial);
        let f = fit(&d, &ModelSpec::linear(&["x"]).unwrap()).unwrap();
        if f.wald_z(1).abs() > 1.959964 {
            rejections += 1;
        }
    }
    let rate = f64::from(rejections) / reps as f64;
    assert!((0.03..=0.07).contains(&rate), "rate {rate}");
}

#[test]
fn large_units_are_rescaled_without_changing_deviances() {
    let mut rng = replication_rng(12, 0);
    let x: Vec<f64> = (0..150).map(|_| rng.random_range(0.5..4.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v.ln() + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
    let big: Vec<f64> = x.iter().map(|v| v * 1e5).collect();
    let small = dataset(&["x", "y"], vec![x.clone(), y.clone()], Family::Gaussian);
    let large = dataset(&["x", "y"], vec![big.clone(), y], Family::Gaussian);
    let pre = pretransform(&big).unwrap();
    assert_eq!(pre.scale, 1e5);
    let a = best_fp(&small, "x", 2, &ModelSpec::null()).unwrap();
    let b = best_fp(&large, "x", 2, &ModelSpec::null()).unwrap();
    for ((pa, da), (pb, db)) in a.deviance_table.iter().zip(&b.deviance_table) {
        assert_eq!(pa, pb);
        assert!((da - db).abs() < 1e-6 * da.abs().max(1.0));
    }
    assert_eq!(a.best_powers, b.best_powers);
}

/// Recomputes each backward-elimination step from scratch.
#[test]
fn backward_elimination_steps_match_independent_replay() {
    let names = ["s1", "s2", "n1", "n2", "n3", "n4", "n5"];
    for r in 0..10 {
        let mut rng = replication_rng(90, r);
        let mut cols: Vec<Vec<f64>> = (0..names.len())
            .map(|_| (0..150).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = (0..150)
            .map(|i| 0.5 * cols[0][i] - 0.3 * cols[1][i] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        cols.push(y);
        let mut all: Vec<&str> = names.to_vec();
        all.push("y");
        let d = dataset(&all, cols, Family::Gaussian);
        let trace = backward_eliminate(&d, &ModelSpec::linear(&names).unwrap(), Criterion::PValue(0.05)).unwrap();

        let mut current: Vec<&str> = names.to_vec();
        let drop_pvalues = |vars: &[&str]| -> Vec<f64> {
            let full = fit(&d, &ModelSpec::linear(vars).unwrap()).unwrap();
            (0..vars.len())
                .map(|k| {
                    let rest: Vec<&str> = vars.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, v)| *v).collect();
                    let reduced = fit(&d, &ModelSpec::linear(&rest).unwrap()).unwrap();
                    deviance_test(&reduced, &full, 1).unwrap()
                })
                .collect()
        };
        for step in &trace.steps {
            let p = drop_pvalues(&current);
            let (k, worst) = p.iter().enumerate().fold((0, -1.0), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
            assert!(worst > 0.05);
            assert_eq!(step.term.variable, current[k]);
            assert!((step.p_value - worst).abs() < 1e-12);
            current.remove(k);
        }
        if !current.is_empty() {
            assert!(drop_pvalues(&current).iter().all(|&p| p <= 0.05));
        }
        assert_eq!(trace.final_spec.variables().len(), current.len());
        for v in current {
            assert!(trace.final_spec.mentions(v));
        }
    }
}
