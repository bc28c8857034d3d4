use crate::config::{AnalysisConfig, CvName, Method, SchemeName, ShrinkMode};
use crate::data::{load_csv, LoadSummary};
use crate::error::{CliError, CliResult};
use crate::report::{num, Report};
use mfpkit::categorize::Type1Result;
use mfpkit::fsp::StepTest;
use mfpkit::mfp::{MfpDecision, VariableKind};
use mfpkit::resample::bif_select;
use mfpkit::selection::{forward_select, stepwise, SelectionTrace};
use mfpkit::simlab::{self, Procedure};
use mfpkit::*;
use std::path::Path;

pub struct Loaded {
    pub data: Dataset,
    pub summary: LoadSummary,
    pub candidates: Vec<String>,
}

impl Loaded {
    fn names(&self) -> Vec<&str> {
        self.candidates.iter().map(String::as_str).collect()
    }
}

pub fn load(cfg: &AnalysisConfig) -> CliResult<Loaded> {
    let path = cfg
        .data
        .as_deref()
        .ok_or_else(|| CliError::Config("data: no data file given (--data or `data`)".into()))?;
    let (data, summary) = load_csv(path, &cfg.outcome, cfg.candidates.as_deref(), cfg.family)?;
    let candidates = data.covariate_names();
    for name in cfg.variables.keys() {
        if !candidates.contains(name) {
            return Err(CliError::Config(format!("variables.{name}: no such candidate column")));
        }
    }
    Ok(Loaded {
        data,
        summary,
        candidates,
    })
}

fn header(r: &mut Report, cfg: &AnalysisConfig, loaded: &Loaded) -> CliResult<()> {
    let s = &loaded.summary;
    r.line(format!(
        "data: {} ({} rows used, {} dropped)",
        s.path, s.rows_used, s.rows_dropped
    ));
    r.line(format!("outcome: {} ({:?})", cfg.outcome, cfg.family).to_lowercase());
    r.line(format!("candidates: {}", loaded.candidates.join(", ")));
    if let Some(w) = s.warning() {
        r.warn(w);
    }
    r.section("config", cfg)?;
    r.section("data", s)
}

/// Starting terms: categorical columns become dummy blocks; with
/// `use_powers`, variables carrying fixed powers become FP terms.
fn start_terms(cfg: &AnalysisConfig, loaded: &Loaded, use_powers: bool) -> CliResult<Vec<Term>> {
    loaded
        .candidates
        .iter()
        .map(|v| {
            let a = cfg.attrs(v);
            let x = loaded.data.column(v)?;
            Ok(if a.categorical {
                Term::new(
                    v,
                    Transform::Categorical {
                        scheme: CutScheme::from_levels(x)?,
                    },
                )
            } else if let (true, Some(p)) = (use_powers, &a.powers) {
                let powers = FpPowers::new(p).map_err(|e| CliError::Config(format!("variables.{v}.powers: {e}")))?;
                Term::fp(v, powers, pretransform(x)?)
            } else {
                Term::linear(v)
            })
        })
        .collect()
}

fn mfp_config(cfg: &AnalysisConfig, loaded: &Loaded) -> MfpConfig {
    let mut c = MfpConfig::new(cfg.alpha_select, cfg.alpha_fp);
    c.default_max_degree = cfg.max_degree;
    c.max_cycles = cfg.max_cycles;
    c.test = cfg.test;
    for v in &loaded.candidates {
        let a = cfg.attrs(v);
        if let Some(d) = a.max_degree {
            c.max_degree.insert(v.clone(), d);
        }
        if a.force_in {
            c.force_in.insert(v.clone());
        }
        if a.spike {
            c.kinds.insert(v.clone(), VariableKind::SpikeAtZero);
        } else if a.categorical {
            c.kinds.insert(v.clone(), VariableKind::Categorical);
        }
    }
    c
}

fn selector(cfg: &AnalysisConfig, loaded: &Loaded) -> CliResult<Selector> {
    let criterion = cfg.criterion();
    let method = match cfg.method {
        Method::Backward => SelectionMethod::Backward { criterion },
        Method::Forward => SelectionMethod::Forward { criterion },
        Method::Stepwise => SelectionMethod::Stepwise { criterion },
        Method::Mfp => SelectionMethod::Mfp {
            config: mfp_config(cfg, loaded),
        },
        Method::None => return Err(CliError::Config("method: a selection method is required here".into())),
    };
    if cfg.method != Method::Mfp {
        for (name, a) in &cfg.variables {
            if a.categorical || a.spike || a.force_in {
                return Err(CliError::Config(format!(
                    "variables.{name}: categorical, spike and force_in attributes need method = \"mfp\""
                )));
            }
        }
    }
    Ok(Selector::new(&loaded.names(), method))
}

fn coefficient_table(r: &mut Report, fit: &FitResult) {
    r.line(format!("{:<24} {:>16} {:>16} {:>16} {:>16}", "term", "estimate", "std.error", "z", "p"));
    for (j, label) in fit.labels.iter().enumerate() {
        if fit.aliased[j] {
            r.line(format!("{label:<24} {:>16}", "aliased"));
            continue;
        }
        let z = fit.wald_z(j);
        let p = chi2_sf(z * z, 1).unwrap_or(f64::NAN);
        r.line(format!(
            "{label:<24} {:>16} {:>16} {:>16} {:>16}",
            num(fit.coefficients[j]),
            num(fit.std_error(j)),
            num(z),
            num(p)
        ));
    }
    r.line(format!(
        "deviance {}  log-likelihood {}  df {}  n {}",
        num(fit.deviance),
        num(fit.log_likelihood),
        fit.model_df,
        fit.n
    ));
    for w in &fit.warnings {
        r.warn(w.clone());
    }
}

fn model_line(spec: &ModelSpec) -> String {
    if spec.is_empty() {
        "intercept only".into()
    } else {
        spec.terms.iter().map(Term::label).collect::<Vec<_>>().join(" + ")
    }
}

pub fn fit_command(cfg: &AnalysisConfig) -> CliResult<Report> {
    let loaded = load(cfg)?;
    let mut r = Report::new("fit");
    header(&mut r, cfg, &loaded)?;
    let spec = ModelSpec::new(start_terms(cfg, &loaded, true)?)?;
    let f = fit(&loaded.data, &spec)?;
    f.ensure_clean()?;
    r.blank();
    r.line(format!("model: {}", model_line(&spec)));
    coefficient_table(&mut r, &f);
    r.section("model", &spec)?;
    r.section("fit", &f)?;
    Ok(r)
}

fn step_line(r: &mut Report, t: &StepTest) {
    r.line(format!(
        "    {}: df {} statistic {} p {} (alpha {}) {}",
        t.comparison,
        t.df,
        num(t.statistic),
        num(t.p_value),
        num(t.alpha),
        if t.significant { "significant" } else { "not significant" }
    ));
}

fn decision_trace(r: &mut Report, d: &MfpDecision) {
    match d {
        MfpDecision::Function(f) => {
            r.line(format!(
                "  {}: {} (shift {}, scale {}{})",
                f.variable,
                f.verdict,
                num(f.pretransform.shift),
                num(f.pretransform.scale),
                if f.forced { ", forced" } else { "" }
            ));
            for t in &f.steps {
                step_line(r, t);
            }
        }
        MfpDecision::Block(b) => {
            r.line(format!(
                "  {}: {} block{}",
                b.variable,
                if b.included { "included" } else { "excluded" },
                if b.forced { ", forced" } else { "" }
            ));
            if let Some(t) = &b.test {
                step_line(r, t);
            }
        }
        MfpDecision::Spike(s) => {
            r.line(format!(
                "  {}: {} (zero fraction {}, shift {}, scale {})",
                s.variable,
                s.verdict,
                num(s.zero_fraction),
                num(s.pretransform.shift),
                num(s.pretransform.scale)
            ));
            for t in s.with_indicator_steps.iter().chain(&s.fp_only_steps) {
                step_line(r, t);
            }
            for t in [&s.joint, &s.indicator_removal, &s.fp_removal].into_iter().flatten() {
                step_line(r, t);
            }
        }
    }
}

pub fn mfp_command(cfg: &AnalysisConfig) -> CliResult<Report> {
    let loaded = load(cfg)?;
    let mut r = Report::new("mfp");
    header(&mut r, cfg, &loaded)?;
    let config = mfp_config(cfg, &loaded);
    let res = mfp(&loaded.data, &loaded.names(), &config)?;
    r.line(format!(
        "alpha_select {}  alpha_fp {}  max degree {}  max cycles {}",
        num(cfg.alpha_select),
        num(cfg.alpha_fp),
        cfg.max_degree,
        cfg.max_cycles
    ));
    r.blank();
    r.line(format!("visiting order: {}", res.order.join(", ")));
    for c in &res.cycle_trace {
        let sel: Vec<String> = c.selections.iter().map(|(v, s)| format!("{v}={s}")).collect();
        r.line(format!("cycle {}: {}", c.cycle, sel.join(", ")));
    }
    r.line(if res.converged {
        format!("converged after {} cycles", res.cycles)
    } else {
        format!("not converged after {} cycles", res.cycles)
    });
    r.blank();
    r.line("final-cycle decisions:");
    for v in &res.order {
        if let Some(d) = res.decisions.get(v) {
            decision_trace(&mut r, d);
        }
    }
    r.blank();
    r.line(format!("final model: {}", model_line(&res.final_spec)));
    coefficient_table(&mut r, &res.fit);
    for w in &res.warnings {
        r.warn(w.clone());
    }
    r.section("mfp", &res)?;
    Ok(r)
}

fn trace_lines(r: &mut Report, trace: &SelectionTrace) {
    r.line(format!("start model: {}", model_line(&trace.start_spec)));
    for (i, s) in trace.steps.iter().enumerate() {
        let cie = s
            .change_in_estimate
            .map(|c| format!(" change-in-estimate {}", num(c)))
            .unwrap_or_default();
        r.line(format!(
            "step {}: {:?} {} (df {}, p {}, threshold {}, deviance {}){cie}",
            i + 1,
            s.action,
            s.term.label(),
            s.df,
            num(s.p_value),
            num(s.threshold),
            num(s.deviance_after)
        ));
    }
    r.line(format!("final model: {}", model_line(&trace.final_spec)));
    for w in &trace.warnings {
        r.warn(w.clone());
    }
}

fn run_selection(cfg: &AnalysisConfig, loaded: &Loaded) -> CliResult<SelectionTrace> {
    let terms = start_terms(cfg, loaded, false)?;
    let criterion = cfg.criterion();
    Ok(match cfg.method {
        Method::Backward => backward_eliminate(&loaded.data, &ModelSpec::new(terms)?, criterion)?,
        Method::Forward => forward_select(&loaded.data, &terms, criterion)?,
        Method::Stepwise => stepwise(&loaded.data, &terms, criterion)?,
        Method::Mfp | Method::None => {
            return Err(CliError::Config(
                "method: `select` runs backward, forward or stepwise; use the `mfp` command for mfp".into(),
            ))
        }
    })
}

pub fn select_command(cfg: &AnalysisConfig) -> CliResult<Report> {
    let loaded = load(cfg)?;
    let mut r = Report::new("select");
    header(&mut r, cfg, &loaded)?;
    r.line(format!("method: {:?}, criterion {}", cfg.method, cfg.criterion()).to_lowercase());
    r.blank();
    let trace = run_selection(cfg, &loaded)?;
    trace_lines(&mut r, &trace);
    coefficient_table(&mut r, &trace.final_fit);
    r.section("selection", &trace)?;
    Ok(r)
}

pub fn stability_command(cfg: &AnalysisConfig) -> CliResult<Report> {
    let seed = cfg.require_seed("stability")?;
    let loaded = load(cfg)?;
    let sel = selector(cfg, &loaded)?;
    let rc = &cfg.resample;
    let scheme = match rc.scheme {
        SchemeName::Bootstrap => ResampleScheme::Bootstrap,
        SchemeName::Subsample => ResampleScheme::Subsample { rate: rc.rate },
    };
    let plan = ResamplePlan::new(scheme, rc.replications, seed);
    let rep = stability(&loaded.data, &sel, &plan)?;
    let chosen = bif_select(&rep, rc.bif_threshold)?;

    let mut r = Report::new("stability");
    header(&mut r, cfg, &loaded)?;
    r.line(format!(
        "method: {:?}; {:?} with {} replications, seed {seed}; {} successful, {} failed",
        cfg.method, rc.scheme, rc.replications, rep.successful, rep.failed
    )
    .to_lowercase());
    r.blank();
    r.line("bootstrap inclusion frequencies:");
    let mut order: Vec<usize> = (0..rep.variables.len()).collect();
    order.sort_by(|&a, &b| rep.bif[b].total_cmp(&rep.bif[a]).then(a.cmp(&b)));
    for &i in &order {
        r.line(format!("  {:<20} {} ({} of {})", rep.variables[i], num(rep.bif[i]), rep.counts[i], rep.successful));
    }
    r.blank();
    r.line("co-inclusion:");
    r.line(format!("  {:<20} {}", "", rep.variables.iter().map(|v| format!("{v:>10}")).collect::<String>()));
    for (i, row) in rep.co_inclusion.iter().enumerate() {
        let cells: String = row.iter().map(|c| format!(" {}", num(*c))).collect();
        r.line(format!("  {:<20}{cells}", rep.variables[i]));
    }
    r.blank();
    r.line("most frequent models:");
    for m in rep.model_freq.iter().take(10) {
        let vars = if m.variables.is_empty() { "(none)".into() } else { m.variables.join(", ") };
        r.line(format!("  {} {}", num(m.fraction), vars));
    }
    r.blank();
    r.line(format!("BIF threshold {}: {}", num(rc.bif_threshold), chosen.selected.join(", ")));
    for (a, b, u) in &chosen.flagged_pairs {
        r.line(format!("  pair {a} / {b}: union frequency {}", num(*u)));
    }
    for w in &chosen.warnings {
        r.warn(w.clone());
    }
    for (rep_i, e) in &rep.failures {
        r.warn(format!("replication {rep_i} failed: {e}"));
    }
    r.section("stability", &rep)?;
    r.section("bif_selection", &chosen)?;
    Ok(r)
}

pub fn shrink_command(cfg: &AnalysisConfig) -> CliResult<Report> {
    let loaded = load(cfg)?;
    let n = loaded.data.n();
    let sc = &cfg.shrinkage;
    let cv = match sc.cv {
        CvName::Loo => CvScheme::LeaveOneOut,
        CvName::Auto if n <= 200 => CvScheme::LeaveOneOut,
        CvName::Auto | CvName::Kfold => CvScheme::KFold {
            k: sc.folds,
            seed: cfg.require_seed("shrink with k-fold cross-validation")?,
        },
    };
    let mut r = Report::new("shrink");
    header(&mut r, cfg, &loaded)?;
    let spec = match cfg.method {
        Method::None => ModelSpec::new(start_terms(cfg, &loaded, true)?)?,
        Method::Mfp => {
            let res = mfp(&loaded.data, &loaded.names(), &mfp_config(cfg, &loaded))?;
            r.section("mfp", &res)?;
            res.final_spec
        }
        _ => {
            let trace = run_selection(cfg, &loaded)?;
            trace_lines(&mut r, &trace);
            let spec = trace.final_spec.clone();
            r.section("selection", &trace)?;
            spec
        }
    };
    r.line(format!("model: {}", model_line(&spec)));
    r.line(format!("cross-validation: {cv:?}").to_lowercase());
    if spec.is_empty() {
        r.warn("selected model is empty; nothing to shrink");
        return Ok(r);
    }
    let factors = match sc.mode {
        ShrinkMode::Global => global_shrinkage(&loaded.data, &spec, cv)?,
        ShrinkMode::Parameterwise => parameterwise_shrinkage(&loaded.data, &spec, cv)?,
        ShrinkMode::Joint => joint_shrinkage(&loaded.data, &spec, None, cv)?,
    };
    r.blank();
    r.line("shrinkage factors:");
    for (name, c) in factors.names.iter().zip(&factors.factors) {
        r.line(format!("  {name:<28} {}", num(*c)));
    }
    r.blank();
    r.line(format!("{:<24} {:>16} {:>16}", "term", "estimate", "shrunken"));
    for (i, l) in factors.labels.iter().enumerate() {
        r.line(format!(
            "{l:<24} {:>16} {:>16}",
            num(factors.coefficients[i]),
            num(factors.shrunken_coefficients[i])
        ));
    }
    r.line(format!(
        "deviance {} -> {}",
        num(factors.deviance),
        num(factors.shrunken_deviance)
    ));
    r.section("shrinkage", &factors)?;
    Ok(r)
}

fn type1_lines(r: &mut Report, label: &str, t: &Type1Result, alpha: f64) {
    r.line(format!(
        "{label}: type I error {} (Monte Carlo s.e. {}) at nominal {}; {} of {} rejections; quantile range [{}, {}]",
        num(t.rate),
        num(t.mc_se),
        num(alpha),
        t.rejections,
        t.replications,
        num(t.search_range.0),
        num(t.search_range.1)
    ));
}

pub fn cutpoint_command(cfg: &AnalysisConfig) -> CliResult<Report> {
    let seed = cfg.require_seed("cutpoint-demo")?;
    let c = &cfg.cutpoint;
    let tc = Type1Config {
        n: c.n,
        replications: c.replications,
        alpha: c.alpha,
        search_range: (c.range[0], c.range[1]),
        seed,
        family: c.family,
    };
    let scan = type1_simulation(&tc)?;
    let fixed = type1_simulation(&Type1Config {
        search_range: (0.5, 0.5),
        ..tc.clone()
    })?;
    let mut r = Report::new("cutpoint-demo");
    r.line(format!(
        "null data: n {}, {} replications, seed {seed}, family {:?}",
        c.n, c.replications, c.family
    )
    .to_lowercase());
    r.blank();
    type1_lines(&mut r, "minimum p-value cutpoint", &scan, c.alpha);
    type1_lines(&mut r, "fixed median cutpoint", &fixed, c.alpha);
    r.warn(scan.warning.clone());
    r.section("config", cfg)?;
    r.section("min_p", &scan)?;
    r.section("fixed_cut", &fixed)?;
    Ok(r)
}

pub fn simulate_command(cfg: &AnalysisConfig, out: &Path) -> CliResult<Report> {
    let seed = cfg.require_seed("simulate")?;
    let mut table = cfg
        .simulate
        .scenario
        .clone()
        .ok_or_else(|| CliError::Config("simulate.scenario: missing scenario table".into()))?;
    if table.contains_key("seed") {
        return Err(CliError::Config(
            "simulate.scenario.seed: set the seed with --seed or the top-level `seed` key".into(),
        ));
    }
    table.insert("seed".into(), toml::Value::Integer(seed as i64));
    let scenario: Scenario = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Config(format!("simulate.scenario: {e}")))?;
    scenario.validate()?;
    let data = simlab::generate(&scenario)?;
    let csv_path = out.join("data.csv");
    write_csv(&data, &csv_path)?;

    let mut r = Report::new("simulate");
    r.line(format!(
        "scenario: n {}, {} covariates, family {:?}, seed {seed}",
        scenario.n,
        scenario.covariates.len(),
        scenario.family
    )
    .to_lowercase());
    r.line(format!("true model: {}", model_line(&scenario.true_spec()?)));
    r.line(format!("dataset written to {}", csv_path.display()));
    r.section("config", cfg)?;
    r.section("scenario", &scenario)?;
    let reps = cfg.simulate.replications;
    if reps > 0 {
        let names = scenario.names();
        let procedure = match cfg.method {
            Method::None => Procedure::Oracle,
            _ => {
                let loaded = Loaded {
                    summary: LoadSummary {
                        path: csv_path.display().to_string(),
                        rows_read: data.n(),
                        rows_used: data.n(),
                        rows_dropped: 0,
                        columns: data.names().to_vec(),
                    },
                    candidates: names.iter().map(|s| s.to_string()).collect(),
                    data: data.clone(),
                };
                Procedure::Select(selector(cfg, &loaded)?)
            }
        };
        let eval = simlab::evaluate(&procedure, &scenario, reps)?;
        r.blank();
        r.line(format!(
            "evaluation of {:?} over {} replications ({} successful)",
            cfg.method, reps, eval.successful
        )
        .to_lowercase());
        r.line(format!(
            "{:<16} {:>9} {:>16} {:>16} {:>16} {:>16}",
            "variable", "relevant", "inclusion", "s.e.", "shape distance", "slope rmse"
        ));
        for v in &eval.variables {
            r.line(format!(
                "{:<16} {:>9} {:>16} {:>16} {:>16} {:>16}",
                v.name,
                v.relevant,
                num(v.inclusion.mean),
                num(v.inclusion.se),
                num(v.shape_distance.mean),
                num(v.slope_rmse.mean)
            ));
        }
        r.line(format!(
            "exact model {} (s.e. {}), mean model size {}",
            num(eval.exact_model.mean),
            num(eval.exact_model.se),
            num(eval.model_size.mean)
        ));
        for (i, e) in &eval.failures {
            r.warn(format!("replication {i} failed: {e}"));
        }
        r.section("evaluation", &eval)?;
    }
    Ok(r)
}

fn write_csv(data: &Dataset, path: &Path) -> CliResult<()> {
    let io = |e: &dyn std::fmt::Display| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io(&e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io(&e))?;
    w.write_record(data.names()).map_err(|e| io(&e))?;
    let cols: Vec<&[f64]> = data
        .names()
        .iter()
        .map(|n| data.column(n).expect("own column"))
        .collect();
    for i in 0..data.n() {
        // `{}` prints the shortest string that parses back to the same f64
        w.write_record(cols.iter().map(|c| c[i].to_string())).map_err(|e| io(&e))?;
    }
    w.flush().map_err(|e| io(&e))
}
