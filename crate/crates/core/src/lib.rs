//! Multivariable regression model building for continuous covariates.
//!
//! Combines variable selection (backward elimination and relatives) with
//! functional-form selection by fractional polynomials (FP), including
//! spike-at-zero covariates, post-selection shrinkage and resampling-based
//! stability analysis. Gaussian (identity link) and binomial (logit link)
//! outcomes are supported.

pub mod categorize;
pub mod data;
pub mod error;
pub mod fp;
pub mod fsp;
pub mod glm;
pub mod linalg;
pub mod mfp;
pub mod model;
pub mod resample;
pub mod rng;
pub mod selection;
pub mod shrinkage;
pub mod simlab;
pub mod special;
pub mod spike;

pub use categorize::{min_p_cutpoint, type1_simulation, CutScheme, Type1Config};
pub use data::{Dataset, Family};
pub use error::{Error, Result};
pub use fp::{best_fp, enumerate_fp, fp_basis, pretransform, FpPowers, FpSearchResult, PreTransform};
pub use fsp::{fsp_degrees_of_freedom, fsp_select, fsp_select_with, FspLevels, FspOptions, FunctionDecision, Verdict};
pub use glm::{deviance_test, fit, FitResult, TestKind};
pub use mfp::{mfp, removal_order, MfpConfig, MfpResult, VariableKind};
pub use model::{ModelSpec, Term, Transform};
pub use resample::{bif_select, stability, ResamplePlan, ResampleScheme, SelectionMethod, Selector, StabilityReport};
pub use selection::{
    augmented_backward_eliminate, backward_eliminate, criterion_threshold, forward_select, stepwise,
    univariable_screen, ChangeInEstimate, Criterion, SelectionTrace,
};
pub use shrinkage::{global_shrinkage, joint_shrinkage, parameterwise_shrinkage, CvScheme, ShrinkageFactors};
pub use simlab::{evaluate, generate, Procedure, Scenario};
pub use special::chi2_sf;
pub use spike::{spike_decompose, spike_fsp, SpikeDecision, SpikeVerdict};
