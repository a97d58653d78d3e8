//! Rule-ensemble estimation of heterogeneous treatment effects (HTE) for
//! right-censored survival data from two-arm studies.
//!
//! The pipeline:
//!
//! 1. **Rule generation** ([`boost`]): gradient boosting on the Cox partial
//!    likelihood over covariates plus the treatment indicator; every inner
//!    and leaf node of every tree becomes a candidate rule.
//! 2. **Rule partition** ([`partition`]): rules conditioning on the
//!    treatment indicator become arm-specific *treatment rules* (with the
//!    indicator condition stripped); the rest are shared *main rules*.
//! 3. **Basis assembly** ([`basis`], [`linear`]): deduplicated rules plus
//!    winsorized linear terms form a design matrix in which every treatment
//!    rule and linear term appears as a `(treated, control)` column pair.
//! 4. **Paired fitting** ([`solver`]): a group-lasso-penalized Cox fit
//!    selects each pair jointly — a treatment term is either in the model
//!    for both arms or absent from both — with λ chosen by cross-validation.
//! 5. **Prediction** ([`baseline`], [`model`]): a Breslow baseline hazard
//!    turns the arm-specific linear predictors into survival curves;
//!    the estimated HTE is `Δ̂(t₀|x) = S₁(t₀|x) − S₀(t₀|x)`.
//! 6. **Interpretation** ([`interpret`]): per-rule hazard ratios and
//!    importances, linear-term importances, and per-covariate totals.
//! 7. **Benchmarking** ([`sim`]): a nine-scenario synthetic-trial generator
//!    with a Monte-Carlo true-HTE oracle and evaluation metrics.
//!
//! All fitting, generation, and prediction is deterministic in the inputs
//! and seed under any thread count.

pub mod baseline;
pub mod basis;
pub mod boost;
mod cox;
pub mod data;
pub mod error;
pub mod fit;
pub mod interpret;
pub mod linear;
pub mod model;
pub mod partition;
mod rng;
pub mod rule;
pub mod sim;
pub mod solver;
mod tree;

pub use data::{FeatureKind, SurvivalDataset};
pub use error::{Error, Result};
pub use fit::{fit, FitConfig, LambdaChoice};
pub use model::{HteModel, HtePrediction, SCHEMA_VERSION};
