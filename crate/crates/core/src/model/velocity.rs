//! Velocity laws and flux helpers.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::roots::{bisect, ROOT_TOL};
use crate::scalar::Real;

pub type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// User supplied law with its derivatives.
#[derive(Clone)]
pub struct CustomVelocity<T> {
    pub name: String,
    pub v: ScalarFn<T>,
    pub dv: ScalarFn<T>,
    pub d2v: Option<ScalarFn<T>>,
}

impl<T> fmt::Debug for CustomVelocity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomVelocity").field("name", &self.name).finish_non_exhaustive()
    }
}

/// Decreasing `v` on `[0, 1]` with `v(0) = 1` and `v(1) = 0`.
#[derive(Debug, Clone)]
pub enum VelocityLaw<T> {
    /// `v = 1 - rho`
    Linear,
    /// `v = (1 - rho)(1 + c rho)` for `0 <= c < 1`.
    ConcaveQuadratic { c: T },
    Custom(CustomVelocity<T>),
}

const VALIDATION_SAMPLES: usize = 1024;

impl<T: Real> VelocityLaw<T> {
    pub fn linear() -> Self {
        Self::Linear
    }

    pub fn concave_quadratic(c: T) -> Result<Self> {
        let law = Self::ConcaveQuadratic { c };
        law.validate()?;
        Ok(law)
    }

    pub fn custom(custom: CustomVelocity<T>) -> Result<Self> {
        let law = Self::Custom(custom);
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::ConcaveQuadratic { c } = self {
            if !(*c >= T::zero() && *c < T::one()) {
                return Err(Error::InvalidConfig(format!("quadratic velocity needs 0 <= c < 1, got {}", c)));
            }
        }
        let tol = T::lit(1e-12).max(T::epsilon() * T::lit(16.0));
        if (self.v(T::zero()) - T::one()).abs() > tol || self.v(T::one()).abs() > tol {
            return Err(Error::InvalidConfig("velocity law must satisfy v(0) = 1 and v(1) = 0".into()));
        }
        for j in 0..=VALIDATION_SAMPLES {
            let rho = T::from_usize_lossy(j) / T::from_usize_lossy(VALIDATION_SAMPLES);
            let d = self.dv(rho);
            if !(d < T::zero()) {
                return Err(Error::InvalidConfig(format!("velocity derivative must be negative, v'({}) = {}", rho, d)));
            }
        }
        Ok(())
    }

    pub fn v(&self, rho: T) -> T {
        match self {
            Self::Linear => T::one() - rho,
            Self::ConcaveQuadratic { c } => (T::one() - rho) * (T::one() + *c * rho),
            Self::Custom(cv) => (cv.v)(rho),
        }
    }

    pub fn dv(&self, rho: T) -> T {
        match self {
            Self::Linear => -T::one(),
            Self::ConcaveQuadratic { c } => *c - T::one() - T::lit(2.0) * *c * rho,
            Self::Custom(cv) => (cv.dv)(rho),
        }
    }

    /// Second derivative when known.
    pub fn d2v(&self, rho: T) -> Option<T> {
        match self {
            Self::Linear => Some(T::zero()),
            Self::ConcaveQuadratic { c } => Some(-T::lit(2.0) * *c),
            Self::Custom(cv) => cv.d2v.as_ref().map(|f| f(rho)),
        }
    }

    /// Whether `v'' <= 0` on `[0, 1]`. Custom laws without a second derivative
    /// are reported as not concave.
    pub fn is_concave(&self) -> bool {
        match self {
            Self::Linear | Self::ConcaveQuadratic { .. } => true,
            Self::Custom(cv) => match &cv.d2v {
                None => false,
                Some(f) => (0..=VALIDATION_SAMPLES)
                    .all(|j| f(T::from_usize_lossy(j) / T::from_usize_lossy(VALIDATION_SAMPLES)) <= T::zero()),
            },
        }
    }

    pub fn flux(&self, rho: T) -> T {
        rho * self.v(rho)
    }

    pub fn dflux(&self, rho: T) -> T {
        self.v(rho) + rho * self.dv(rho)
    }

    /// `max |v'(r)| / v(r)^2` over `[lo, hi]`, sampled densely.
    pub fn inverse_lipschitz(&self, lo: T, hi: T) -> T {
        let n = VALIDATION_SAMPLES;
        let mut best = T::zero();
        for j in 0..=n {
            let r = lo + (hi - lo) * T::from_usize_lossy(j) / T::from_usize_lossy(n);
            let vv = self.v(r);
            best = best.max(self.dv(r).abs() / (vv * vv));
        }
        best
    }
}

/// `f(rho) = rho v(rho)`.
pub fn flux<T: Real>(law: &VelocityLaw<T>, rho: T) -> T {
    law.flux(rho)
}

/// Unique root of `f'(rho) = sigma` in `(0, 1)`.
pub fn stagnation_point<T: Real>(law: &VelocityLaw<T>, sigma: T) -> Result<T> {
    let (g0, g1) = (law.dflux(T::zero()) - sigma, law.dflux(T::one()) - sigma);
    if !(g0 > T::zero() && g1 < T::zero()) {
        return Err(Error::NoBracket {
            lo: 0.0,
            hi: 1.0,
            context: format!("f' - sigma does not change sign for sigma = {}", sigma),
        });
    }
    bisect(|r| law.dflux(r) - sigma, T::zero(), T::one(), T::lit(ROOT_TOL))
}

/// The other density with the same frame flux `f(rho) - sigma rho`.
pub fn conjugate_endpoint<T: Real>(law: &VelocityLaw<T>, rho: T, sigma: T) -> Result<T> {
    let hat = stagnation_point(law, sigma)?;
    if !(rho > T::zero() && rho < T::one()) || rho == hat {
        return Err(Error::NoConjugate { rho: rho.as_f64() });
    }
    let g = |r: T| law.flux(r) - sigma * r - (law.flux(rho) - sigma * rho);
    let (lo, hi) = if rho < hat { (hat, T::one()) } else { (T::zero(), hat) };
    // the frame flux at the far end must undershoot the target
    let far = if rho < hat { hi } else { lo };
    if g(far) * g(hat) > T::zero() {
        return Err(Error::NoConjugate { rho: rho.as_f64() });
    }
    bisect(g, lo, hi, T::lit(ROOT_TOL))
}
