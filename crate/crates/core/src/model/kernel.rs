//! Nonnegative weight functions with compact support.
//!
//! One-sided kernels live on `[0, h]` and integrate to one. The symmetric
//! kernel is `w(s) = 0.5 * inner(|s|)` on `[-h, h]`, so each half carries mass
//! one half.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest accepted normalisation defect of raw tabulated samples.
pub const TABULATED_MASS_DEFECT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelShape<T> {
    /// `w(x) = 2/h - 2x/h^2`
    LinearDecreasing,
    /// `w(x) = 2x/h^2`
    LinearIncreasing,
    /// `w(x) = 1/h`
    Uniform,
    /// Piecewise linear through samples at uniform abscissae `j h / n`.
    Tabulated(Vec<T>),
    /// Even extension of a one-sided shape to `[-h, h]`.
    SymmetricEven(Box<KernelShape<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<T> {
    shape: KernelShape<T>,
    h: T,
    /// Cumulative mass and first moment at the tabulation nodes.
    table: Option<Table<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Table<T> {
    samples: Vec<T>,
    mass: Vec<T>,
    moment: Vec<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(shape: KernelShape<T>, h: T) -> Result<Self> {
        if !(h > T::zero()) || !h.is_finite() {
            return Err(Error::InvalidConfig(format!("kernel horizon h must be positive, got {}", h)));
        }
        let table = match &shape {
            KernelShape::Tabulated(samples) => Some(Table::build(samples, h, T::one())?),
            KernelShape::SymmetricEven(inner) => match inner.as_ref() {
                KernelShape::SymmetricEven(_) => {
                    return Err(Error::InvalidConfig("symmetric kernel cannot nest another symmetric kernel".into()))
                }
                KernelShape::Tabulated(samples) => Some(Table::build(samples, h, T::one())?),
                _ => None,
            },
            _ => None,
        };
        let shape = match (shape, &table) {
            (KernelShape::Tabulated(_), Some(t)) => KernelShape::Tabulated(t.samples.clone()),
            (KernelShape::SymmetricEven(inner), Some(t)) if matches!(*inner, KernelShape::Tabulated(_)) => {
                KernelShape::SymmetricEven(Box::new(KernelShape::Tabulated(t.samples.clone())))
            }
            (s, _) => s,
        };
        Ok(Self { shape, h, table })
    }

    pub fn linear_decreasing(h: T) -> Result<Self> {
        Self::new(KernelShape::LinearDecreasing, h)
    }

    pub fn linear_increasing(h: T) -> Result<Self> {
        Self::new(KernelShape::LinearIncreasing, h)
    }

    pub fn uniform(h: T) -> Result<Self> {
        Self::new(KernelShape::Uniform, h)
    }

    pub fn tabulated(samples: Vec<T>, h: T) -> Result<Self> {
        Self::new(KernelShape::Tabulated(samples), h)
    }

    pub fn symmetric(inner: KernelShape<T>, h: T) -> Result<Self> {
        Self::new(KernelShape::SymmetricEven(Box::new(inner)), h)
    }

    pub fn shape(&self) -> &KernelShape<T> {
        &self.shape
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self.shape, KernelShape::SymmetricEven(_))
    }

    /// Support interval, `[0, h]` or `[-h, h]`.
    pub fn support(&self) -> (T, T) {
        if self.is_symmetric() {
            (-self.h, self.h)
        } else {
            (T::zero(), self.h)
        }
    }

    /// `w(x)`, zero outside the support.
    pub fn weight(&self, x: T) -> T {
        match &self.shape {
            KernelShape::SymmetricEven(inner) => T::lit(0.5) * self.one_sided_weight(inner, x.abs()),
            s => self.one_sided_weight(s, x),
        }
    }

    /// `sup |w|`.
    pub fn sup_norm(&self) -> T {
        let two_over_h = T::lit(2.0) / self.h;
        let one_sided = |s: &KernelShape<T>| match s {
            KernelShape::LinearDecreasing | KernelShape::LinearIncreasing => two_over_h,
            KernelShape::Uniform => T::one() / self.h,
            KernelShape::Tabulated(_) => self
                .table
                .as_ref()
                .map(|t| t.samples.iter().fold(T::zero(), |m, &v| m.max(v)))
                .unwrap_or_else(T::zero),
            KernelShape::SymmetricEven(_) => unreachable!("nested symmetric kernels are rejected"),
        };
        match &self.shape {
            KernelShape::SymmetricEven(inner) => T::lit(0.5) * one_sided(inner),
            s => one_sided(s),
        }
    }

    /// Whether `w' <= 0` on the interior of `[0, h]` (right half for symmetric).
    pub fn is_nonincreasing(&self) -> bool {
        let shape = match &self.shape {
            KernelShape::SymmetricEven(inner) => inner.as_ref(),
            s => s,
        };
        match shape {
            KernelShape::LinearDecreasing | KernelShape::Uniform => true,
            KernelShape::LinearIncreasing => false,
            KernelShape::Tabulated(s) => s.windows(2).all(|p| p[1] <= p[0]),
            KernelShape::SymmetricEven(_) => unreachable!(),
        }
    }

    /// `int_a^b w(s) ds`; the integrand is zero outside the support.
    pub fn integral(&self, a: T, b: T) -> T {
        if b <= a {
            return T::zero();
        }
        match &self.shape {
            KernelShape::SymmetricEven(inner) => {
                // split at zero and fold the negative half onto the positive one
                let half = T::lit(0.5);
                let mut acc = T::zero();
                if b > T::zero() {
                    let lo = a.max(T::zero());
                    acc = acc + self.one_sided_mass(inner, b) - self.one_sided_mass(inner, lo);
                }
                if a < T::zero() {
                    let hi = b.min(T::zero());
                    acc = acc + self.one_sided_mass(inner, -a) - self.one_sided_mass(inner, -hi);
                }
                half * acc
            }
            s => self.one_sided_mass(s, b) - self.one_sided_mass(s, a),
        }
    }

    /// `int_a^b s w(s) ds`.
    pub fn moment1(&self, a: T, b: T) -> T {
        if b <= a {
            return T::zero();
        }
        match &self.shape {
            KernelShape::SymmetricEven(inner) => {
                let half = T::lit(0.5);
                let mut acc = T::zero();
                if b > T::zero() {
                    let lo = a.max(T::zero());
                    acc = acc + self.one_sided_moment(inner, b) - self.one_sided_moment(inner, lo);
                }
                if a < T::zero() {
                    // int_a^hi s w(|s|) ds = -int_{-hi}^{-a} u w(u) du
                    let hi = b.min(T::zero());
                    acc = acc - (self.one_sided_moment(inner, -a) - self.one_sided_moment(inner, -hi));
                }
                half * acc
            }
            s => self.one_sided_moment(s, b) - self.one_sided_moment(s, a),
        }
    }

    /// Laplace transform over the support, `int e^{-lambda s} w(s) ds`.
    ///
    /// For the symmetric kernel this is `int_0^h 2 cosh(lambda s) w(s) ds`.
    pub fn laplace(&self, lambda: T) -> T {
        match &self.shape {
            KernelShape::SymmetricEven(inner) => {
                T::lit(0.5) * (self.one_sided_laplace(inner, lambda) + self.one_sided_laplace(inner, -lambda))
            }
            s => self.one_sided_laplace(s, lambda),
        }
    }

    fn one_sided_weight(&self, shape: &KernelShape<T>, x: T) -> T {
        let h = self.h;
        if x < T::zero() || x > h {
            return T::zero();
        }
        let two = T::lit(2.0);
        match shape {
            KernelShape::LinearDecreasing => two / h - two * x / (h * h),
            KernelShape::LinearIncreasing => two * x / (h * h),
            KernelShape::Uniform => T::one() / h,
            KernelShape::Tabulated(_) => self.table.as_ref().expect("tabulated kernel has a table").weight(x, h),
            KernelShape::SymmetricEven(_) => unreachable!(),
        }
    }

    /// `int_0^x w` for a one-sided shape, clamped to the support.
    fn one_sided_mass(&self, shape: &KernelShape<T>, x: T) -> T {
        let h = self.h;
        let x = x.max(T::zero()).min(h);
        let u = x / h;
        match shape {
            KernelShape::LinearDecreasing => T::lit(2.0) * u - u * u,
            KernelShape::LinearIncreasing => u * u,
            KernelShape::Uniform => u,
            KernelShape::Tabulated(_) => self.table.as_ref().expect("table").mass_at(x, h),
            KernelShape::SymmetricEven(_) => unreachable!(),
        }
    }

    /// `int_0^x s w(s) ds` for a one-sided shape, clamped to the support.
    fn one_sided_moment(&self, shape: &KernelShape<T>, x: T) -> T {
        let h = self.h;
        let x = x.max(T::zero()).min(h);
        let u = x / h;
        let third = T::one() / T::lit(3.0);
        match shape {
            KernelShape::LinearDecreasing => h * (u * u - T::lit(2.0) * third * u * u * u),
            KernelShape::LinearIncreasing => h * T::lit(2.0) * third * u * u * u,
            KernelShape::Uniform => h * T::lit(0.5) * u * u,
            KernelShape::Tabulated(_) => self.table.as_ref().expect("table").moment_at(x, h),
            KernelShape::SymmetricEven(_) => unreachable!(),
        }
    }

    fn one_sided_laplace(&self, shape: &KernelShape<T>, lambda: T) -> T {
        let u = lambda * self.h;
        let small = T::lit(1e-3);
        let two = T::lit(2.0);
        match shape {
            KernelShape::Uniform => uniform_laplace(u),
            KernelShape::LinearDecreasing => {
                if u.abs() < small {
                    T::one() - u / T::lit(3.0) + u * u / T::lit(12.0) - u * u * u / T::lit(60.0)
                } else {
                    two * (u + (-u).exp_m1()) / (u * u)
                }
            }
            KernelShape::LinearIncreasing => increasing_laplace(u),
            KernelShape::Tabulated(samples) => {
                // exact on every linear segment
                let n = samples.len() - 1;
                let dx = self.h / T::from_usize_lossy(n);
                let ud = lambda * dx;
                let (l0, l1) = (uniform_laplace(ud), increasing_laplace(ud) * T::lit(0.5));
                let mut acc = T::zero();
                for j in 0..n {
                    let s0 = dx * T::from_usize_lossy(j);
                    let (w0, w1) = (samples[j], samples[j + 1]);
                    acc = acc + (-lambda * s0).exp() * dx * (w0 * l0 + (w1 - w0) * l1);
                }
                acc
            }
            KernelShape::SymmetricEven(_) => unreachable!(),
        }
    }
}

impl<T: Real> Table<T> {
    /// Validates and renormalises raw samples so the interpolant has mass `target`.
    fn build(raw: &[T], h: T, target: T) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::InvalidConfig("tabulated kernel needs at least two samples".into()));
        }
        if raw.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidConfig("tabulated kernel samples must be finite and nonnegative".into()));
        }
        let n = raw.len() - 1;
        let dx = h / T::from_usize_lossy(n);
        let half = T::lit(0.5);
        let raw_mass: T = raw.windows(2).map(|p| half * (p[0] + p[1]) * dx).sum();
        let defect = (raw_mass - target).abs();
        if !(defect <= T::lit(TABULATED_MASS_DEFECT)) {
            return Err(Error::InvalidConfig(format!(
                "tabulated kernel mass {} deviates from {} by more than {}",
                raw_mass, target, TABULATED_MASS_DEFECT
            )));
        }
        let samples: Vec<T> = raw.iter().map(|&v| v * target / raw_mass).collect();
        let mut mass = Vec::with_capacity(n + 1);
        let mut moment = Vec::with_capacity(n + 1);
        mass.push(T::zero());
        moment.push(T::zero());
        for j in 0..n {
            let s0 = dx * T::from_usize_lossy(j);
            let (dm, d1) = segment_integrals(s0, samples[j], samples[j + 1], dx, dx);
            mass.push(mass[j] + dm);
            moment.push(moment[j] + d1);
        }
        Ok(Self { samples, mass, moment })
    }

    fn locate(&self, x: T, h: T) -> (usize, T, T) {
        let n = self.samples.len() - 1;
        let dx = h / T::from_usize_lossy(n);
        let j = (x / dx).floor().to_usize().unwrap_or(0).min(n - 1);
        let s0 = dx * T::from_usize_lossy(j);
        (j, s0, dx)
    }

    fn weight(&self, x: T, h: T) -> T {
        let (j, s0, dx) = self.locate(x, h);
        let t = (x - s0) / dx;
        self.samples[j] * (T::one() - t) + self.samples[j + 1] * t
    }

    fn mass_at(&self, x: T, h: T) -> T {
        let (j, s0, dx) = self.locate(x, h);
        self.mass[j] + segment_integrals(s0, self.samples[j], self.samples[j + 1], dx, x - s0).0
    }

    fn moment_at(&self, x: T, h: T) -> T {
        let (j, s0, dx) = self.locate(x, h);
        self.moment[j] + segment_integrals(s0, self.samples[j], self.samples[j + 1], dx, x - s0).1
    }
}

/// `(1 - e^{-u}) / u`
fn uniform_laplace<T: Real>(u: T) -> T {
    if u.abs() < T::lit(1e-3) {
        T::one() - u / T::lit(2.0) + u * u / T::lit(6.0) - u * u * u / T::lit(24.0)
    } else {
        -(-u).exp_m1() / u
    }
}

/// `2 (1 - e^{-u}(1 + u)) / u^2`
fn increasing_laplace<T: Real>(u: T) -> T {
    let two = T::lit(2.0);
    if u.abs() < T::lit(1e-3) {
        T::one() - two * u / T::lit(3.0) + u * u / T::lit(4.0) - u * u * u / T::lit(15.0)
    } else {
        two * (-(-u).exp_m1() - u * (-u).exp()) / (u * u)
    }
}

/// Exact `(int w, int s w)` over `[s0, s0 + tau]` for `w` linear from `w0` to
/// `w1` across a segment of width `dx`.
fn segment_integrals<T: Real>(s0: T, w0: T, w1: T, dx: T, tau: T) -> (T, T) {
    let g = (w1 - w0) / dx;
    let half = T::lit(0.5);
    let third = T::one() / T::lit(3.0);
    let m0 = w0 * tau + g * tau * tau * half;
    let m1 = s0 * w0 * tau + (s0 * g + w0) * tau * tau * half + g * tau * tau * tau * third;
    (m0, m1)
}

/// `int_a^b w(s) ds`.
pub fn kernel_integral<T: Real>(kernel: &Kernel<T>, a: T, b: T) -> T {
    kernel.integral(a, b)
}
