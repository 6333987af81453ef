//! Model configuration and admissible endpoint pairs.

use serde::{Deserialize, Serialize};

use super::kernel::{Kernel, KernelShape};
use super::velocity::{conjugate_endpoint, stagnation_point, VelocityLaw};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// Velocity of the averaged density.
    DensityAveraged,
    /// Average of the velocities.
    VelocityAveraged,
}

#[derive(Debug, Clone)]
pub struct ModelConfig<T> {
    pub kernel: Kernel<T>,
    pub velocity: VelocityLaw<T>,
    /// Car length.
    pub ell: T,
    pub variant: ModelVariant,
    /// Travelling wave speed, which is also the moving frame speed.
    pub sigma: T,
}

impl<T: Real> ModelConfig<T> {
    pub fn new(kernel: Kernel<T>, velocity: VelocityLaw<T>, ell: T, variant: ModelVariant, sigma: T) -> Result<Self> {
        let cfg = Self { kernel, velocity, ell, variant, sigma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell > T::zero()) || !self.ell.is_finite() {
            return Err(Error::InvalidConfig(format!("car length must be positive, got {}", self.ell)));
        }
        if !(self.sigma >= T::zero() && self.sigma < self.velocity.v(T::zero())) {
            return Err(Error::InvalidConfig(format!("wave speed must lie in [0, v(0)), got {}", self.sigma)));
        }
        self.velocity.validate()
    }

    pub fn h(&self) -> T {
        self.kernel.h()
    }

    /// Number of leaders fully inside the horizon, `ceil(h / ell) - 1`.
    pub fn m(&self) -> usize {
        let r = (self.h() / self.ell).ceil().to_usize().unwrap_or(1);
        r.saturating_sub(1)
    }

    /// Frame flux `f(rho) - sigma rho`.
    pub fn frame_flux(&self, rho: T) -> T {
        self.velocity.flux(rho) - self.sigma * rho
    }

    /// `-rho v'(rho) / (v(rho) - sigma)`.
    pub fn beta(&self, rho: T) -> T {
        -rho * self.velocity.dv(rho) / (self.velocity.v(rho) - self.sigma)
    }

    pub fn stagnation_point(&self) -> Result<T> {
        stagnation_point(&self.velocity, self.sigma)
    }

    /// Endpoint pair with the given downstream state.
    pub fn endpoints_from_plus(&self, rho_plus: T) -> Result<EndpointPair<T>> {
        let rho_minus = conjugate_endpoint(&self.velocity, rho_plus, self.sigma)?;
        EndpointPair::new(rho_minus, rho_plus, self)
    }
}

/// Upstream and downstream states `rho_minus < rho_hat < rho_plus` with equal
/// frame flux `fbar`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointPair<T> {
    pub rho_minus: T,
    pub rho_plus: T,
    pub rho_hat: T,
    pub fbar: T,
}

impl<T: Real> EndpointPair<T> {
    pub fn new(rho_minus: T, rho_plus: T, cfg: &ModelConfig<T>) -> Result<Self> {
        let rho_hat = cfg.stagnation_point()?;
        if !(T::zero() < rho_minus && rho_minus < rho_hat && rho_hat < rho_plus && rho_plus < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "endpoints must satisfy 0 < {} < {} < {} < 1",
                rho_minus, rho_hat, rho_plus
            )));
        }
        let fm = cfg.frame_flux(rho_minus);
        let fp = cfg.frame_flux(rho_plus);
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        if (fm - fp).abs() > tol {
            return Err(Error::InvalidConfig(format!(
                "endpoints carry different frame flux: {} vs {}",
                fm, fp
            )));
        }
        Ok(Self { rho_minus, rho_plus, rho_hat, fbar: T::lit(0.5) * (fm + fp) })
    }
}

/// Serialisable description of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub shape: KernelShapeName,
    pub h: f64,
    /// One-sided shape for `symmetric_even`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half: Option<KernelShapeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShapeName {
    LinearDecreasing,
    LinearIncreasing,
    Uniform,
    Tabulated,
    SymmetricEven,
}

impl KernelSpec {
    pub fn build<T: Real>(&self) -> Result<Kernel<T>> {
        let one_sided = |name: KernelShapeName| -> Result<KernelShape<T>> {
            Ok(match name {
                KernelShapeName::LinearDecreasing => KernelShape::LinearDecreasing,
                KernelShapeName::LinearIncreasing => KernelShape::LinearIncreasing,
                KernelShapeName::Uniform => KernelShape::Uniform,
                KernelShapeName::Tabulated => {
                    let s = self
                        .samples
                        .as_ref()
                        .ok_or_else(|| Error::InvalidConfig("tabulated kernel needs samples".into()))?;
                    KernelShape::Tabulated(s.iter().map(|&x| T::lit(x)).collect())
                }
                KernelShapeName::SymmetricEven => {
                    return Err(Error::InvalidConfig("symmetric kernel needs a one-sided half".into()))
                }
            })
        };
        let shape = match self.shape {
            KernelShapeName::SymmetricEven => {
                let half = self
                    .half
                    .ok_or_else(|| Error::InvalidConfig("symmetric kernel needs a `half` shape".into()))?;
                KernelShape::SymmetricEven(Box::new(one_sided(half)?))
            }
            s => one_sided(s)?,
        };
        Kernel::new(shape, T::lit(self.h))
    }
}

/// Serialisable velocity family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    #[default]
    Linear,
    ConcaveQuadratic { c: f64 },
}

impl VelocitySpec {
    pub fn build<T: Real>(&self) -> Result<VelocityLaw<T>> {
        match self {
            Self::Linear => Ok(VelocityLaw::Linear),
            Self::ConcaveQuadratic { c } => VelocityLaw::concave_quadratic(T::lit(*c)),
        }
    }
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kernel: KernelSpec,
    #[serde(default)]
    pub velocity: VelocitySpec,
    pub ell: f64,
    pub variant: ModelVariant,
    #[serde(default)]
    pub sigma: f64,
}

impl ModelSpec {
    pub fn build<T: Real>(&self) -> Result<ModelConfig<T>> {
        ModelConfig::new(
            self.kernel.build()?,
            self.velocity.build()?,
            T::lit(self.ell),
            self.variant,
            T::lit(self.sigma),
        )
    }
}
