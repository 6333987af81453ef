//! Kernels, velocity laws and model parameters.

pub mod config;
pub mod kernel;
pub mod velocity;

pub use config::{EndpointPair, KernelShapeName, KernelSpec, ModelConfig, ModelSpec, ModelVariant, VelocitySpec};
pub use kernel::{kernel_integral, Kernel, KernelShape};
pub use velocity::{conjugate_endpoint, flux, stagnation_point, CustomVelocity, ScalarFn, VelocityLaw};
