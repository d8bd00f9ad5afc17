//! Marginal policy effects for nonseparable outcome models.
//!
//! A policy perturbs a continuous treatment `D` along a path `π_t`; the
//! marginal policy effect is the derivative at `t = 0` of a functional of the
//! counterfactual outcome distribution. The crate provides
//!
//! * empirical-distribution primitives ([`distkit`]),
//! * policy paths with closed-form derivatives ([`policy`]),
//! * functionals and their Hadamard derivatives ([`functionals`]),
//! * structural simulation designs with brute-force oracles ([`dgp`]),
//! * kernel-based plug-in, reweighting and debiased estimators ([`estimators`]),
//! * configuration, ingestion and Monte Carlo orchestration ([`harness`]).

pub mod dgp;
pub mod distkit;
pub mod error;
pub mod estimators;
pub mod functionals;
pub mod harness;
pub mod policy;
pub mod rng;
pub mod smoothing;

pub use dgp::{DgpSample, StructuralDgp};
pub use distkit::{Bandwidth, EmpiricalDistribution, Kernel, KernelSpec, TauGrid};
pub use error::{MpeError, Result};
pub use estimators::{Dataset, FirstStageConfig, Method, MpeEstimate};
pub use functionals::{DensityProfile, DirectionFunction, FunctionalSpec};
pub use harness::{ExperimentConfig, Mode, ResultRecord};
pub use policy::{PolicyDescriptor, PolicySpec, TargetDistribution};
