//! Analysis configuration file (TOML).

use crate::error::{CliError, CliResult};
use mfpkit::selection::Criterion;
use mfpkit::{Family, TestKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Backward,
    Forward,
    Stepwise,
    Mfp,
    /// Keep every candidate (shrink only).
    None,
}

/// A criterion written either as a p-value or as "aic"/"bic".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CriterionValue {
    Level(f64),
    Name(String),
}

impl CriterionValue {
    pub fn parse(&self) -> CliResult<Criterion> {
        let c = match self {
            CriterionValue::Level(a) => Criterion::PValue(*a),
            CriterionValue::Name(s) => s
                .parse()
                .map_err(|_| CliError::Config(format!("criterion: expected aic, bic or a p-value, got `{s}`")))?,
        };
        mfpkit::criterion_threshold(c, 1000, 1)
            .map_err(|e| CliError::Config(format!("criterion: {e}")))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableAttrs {
    pub max_degree: Option<usize>,
    #[serde(default)]
    pub force_in: bool,
    #[serde(default)]
    pub spike: bool,
    #[serde(default)]
    pub categorical: bool,
    /// Fixed FP powers, used by `fit`.
    pub powers: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeName {
    #[default]
    Bootstrap,
    Subsample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResampleConfig {
    pub scheme: SchemeName,
    pub rate: f64,
    pub replications: usize,
    pub bif_threshold: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig {
            scheme: SchemeName::Bootstrap,
            rate: 0.632,
            replications: 100,
            bif_threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShrinkMode {
    #[default]
    Global,
    Parameterwise,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvName {
    /// Leave-one-out up to 200 rows, 10-fold beyond.
    #[default]
    Auto,
    Loo,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShrinkageConfig {
    pub mode: ShrinkMode,
    pub cv: CvName,
    pub folds: usize,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        ShrinkageConfig {
            mode: ShrinkMode::Global,
            cv: CvName::Auto,
            folds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutpointConfig {
    pub n: usize,
    pub replications: usize,
    pub alpha: f64,
    pub range: [f64; 2],
    pub family: Family,
}

impl Default for CutpointConfig {
    fn default() -> Self {
        CutpointConfig {
            n: 100,
            replications: 1000,
            alpha: 0.05,
            range: [0.10, 0.90],
            family: Family::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Scenario table; its `seed` may be omitted in favour of the global seed.
    pub scenario: Option<toml::Table>,
    /// When positive, evaluate `method` over this many replications.
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub data: Option<PathBuf>,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default = "default_family")]
    pub family: Family,
    /// Defaults to every column except the outcome.
    pub candidates: Option<Vec<String>>,
    #[serde(default = "default_alpha")]
    pub alpha_select: f64,
    #[serde(default = "default_alpha")]
    pub alpha_fp: f64,
    #[serde(default = "default_criterion")]
    pub criterion: CriterionValue,
    #[serde(default = "default_degree")]
    pub max_degree: usize,
    #[serde(default = "default_cycles")]
    pub max_cycles: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub test: TestKind,
    pub seed: Option<u64>,
    /// Execution settings; left out of reports so they stay byte-identical.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub variables: BTreeMap<String, VariableAttrs>,
    #[serde(default)]
    pub resample: ResampleConfig,
    #[serde(default)]
    pub shrinkage: ShrinkageConfig,
    #[serde(default)]
    pub cutpoint: CutpointConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

fn default_outcome() -> String {
    "y".into()
}
fn default_family() -> Family {
    Family::Gaussian
}
fn default_alpha() -> f64 {
    0.05
}
fn default_criterion() -> CriterionValue {
    CriterionValue::Level(0.05)
}
fn default_degree() -> usize {
    2
}
fn default_cycles() -> usize {
    5
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

impl AnalysisConfig {
    /// Parse a config file. A relative `data` path is resolved against the
    /// directory of the config file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: AnalysisConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(data), Some(dir)) = (&cfg.data, path.parent()) {
            if data.is_relative() {
                cfg.data = Some(dir.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |field: &str, msg: String| Err(CliError::Config(format!("{field}: {msg}")));
        for (field, a) in [("alpha_select", self.alpha_select), ("alpha_fp", self.alpha_fp)] {
            if !(a > 0.0 && a <= 1.0) {
                return bad(field, format!("{a} outside (0, 1]"));
            }
        }
        self.criterion.parse()?;
        if !(1..=2).contains(&self.max_degree) {
            return bad("max_degree", format!("{} not in 1..=2", self.max_degree));
        }
        if self.max_cycles == 0 {
            return bad("max_cycles", "must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers", "must be at least 1".into());
        }
        for (name, v) in &self.variables {
            if let Some(d) = v.max_degree {
                if !(1..=2).contains(&d) {
                    return bad(&format!("variables.{name}.max_degree"), format!("{d} not in 1..=2"));
                }
            }
            if v.spike && v.categorical {
                return bad(&format!("variables.{name}"), "spike and categorical are exclusive".into());
            }
            if name == &self.outcome {
                return bad(&format!("variables.{name}"), "the outcome cannot carry variable attributes".into());
            }
            if let Some(c) = &self.candidates {
                if !c.contains(name) {
                    return bad(&format!("variables.{name}"), "not listed in candidates".into());
                }
            }
        }
        if let Some(c) = &self.candidates {
            if c.is_empty() {
                return bad("candidates", "empty list".into());
            }
            if c.contains(&self.outcome) {
                return bad("candidates", format!("outcome `{}` listed as a candidate", self.outcome));
            }
            for (i, a) in c.iter().enumerate() {
                if c[..i].contains(a) {
                    return bad("candidates", format!("`{a}` listed twice"));
                }
            }
        }
        let r = &self.resample;
        if r.replications == 0 {
            return bad("resample.replications", "must be at least 1".into());
        }
        if r.scheme == SchemeName::Subsample && !(r.rate > 0.0 && r.rate < 1.0) {
            return bad("resample.rate", format!("{} outside (0, 1)", r.rate));
        }
        if !(0.0..=1.0).contains(&r.bif_threshold) {
            return bad("resample.bif_threshold", format!("{} outside [0, 1]", r.bif_threshold));
        }
        if self.shrinkage.folds < 2 {
            return bad("shrinkage.folds", "must be at least 2".into());
        }
        let c = &self.cutpoint;
        if !(c.alpha > 0.0 && c.alpha < 1.0) {
            return bad("cutpoint.alpha", format!("{} outside (0, 1)", c.alpha));
        }
        let [lo, hi] = c.range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad("cutpoint.range", format!("[{lo}, {hi}] is not a quantile interval"));
        }
        Ok(())
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion.parse().expect("validated")
    }

    /// Seed for stochastic commands; there is no clock-based fallback.
    pub fn require_seed(&self, command: &str) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::Config(format!("`{command}` is stochastic and needs a seed (--seed or `seed`)")))
    }

    pub fn attrs(&self, var: &str) -> VariableAttrs {
        self.variables.get(var).cloned().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = AnalysisConfig::default();
        c.validate().unwrap();
        assert_eq!(c.outcome, "y");
        assert_eq!(c.criterion(), Criterion::PValue(0.05));
        assert_eq!(c.resample.rate, 0.632);
    }

    #[test]
    fn criterion_accepts_names_and_levels() {
        let c: AnalysisConfig = toml::from_str("criterion = \"bic\"").unwrap();
        assert_eq!(c.criterion(), Criterion::Bic);
        let c: AnalysisConfig = toml::from_str("criterion = 0.157").unwrap();
        assert_eq!(c.criterion(), Criterion::PValue(0.157));
        let c: AnalysisConfig = toml::from_str("criterion = \"cp\"").unwrap();
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<AnalysisConfig>("alpha = 0.05").unwrap_err();
        assert!(err.to_string().contains("alpha"));
    }

    #[test]
    fn variable_tables_are_checked() {
        let c: AnalysisConfig = toml::from_str(
            "candidates = [\"a\"]\n[variables.b]\nforce_in = true\n",
        )
        .unwrap();
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("variables.b"), "{err}");
        let c: AnalysisConfig = toml::from_str("[variables.a]\nmax_degree = 3\n").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn out_of_range_levels_name_the_field() {
        let c: AnalysisConfig = toml::from_str("alpha_fp = 1.5").unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("alpha_fp"));
    }
}
