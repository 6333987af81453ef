//! Travelling waves of nonlocal traffic flow models and their follow-the-leaders
//! particle counterparts.

// negated comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ftls;
pub mod micromacro;
pub mod model;
pub mod pde;
pub mod profile;
pub mod profile_macro;
pub mod profile_micro;
pub mod rates;
pub mod roots;
pub mod scalar;

pub use error::{Error, Result};
pub use model::{
    conjugate_endpoint, flux, kernel_integral, stagnation_point, EndpointPair, Kernel, KernelShape, ModelConfig,
    ModelVariant, VelocityLaw,
};
pub use ftls::{CarState, PhiDiagnostic};
pub use micromacro::{run_study, ConvergenceReport};
pub use pde::{FieldState, Scheme};
pub use profile::{shift_align, Profile, ProfileKind};
pub use profile_macro::solve_asymptotic;
pub use profile_micro::{solve_p_asymptotic, CarDistribution};
pub use rates::{continuous_rate, discrete_rate, symmetric_rate_check, RateResult, Side};
pub use scalar::Real;

pub type Kernel64 = Kernel<f64>;
pub type Kernel32 = Kernel<f32>;
pub type ModelConfig64 = ModelConfig<f64>;
pub type ModelConfig32 = ModelConfig<f32>;
pub type Profile64 = Profile<f64>;
pub type Profile32 = Profile<f32>;
pub type CarState64 = CarState<f64>;
pub type FieldState64 = FieldState<f64>;
pub type ConvergenceReport64 = ConvergenceReport<f64>;
