//! Sampled monotone profiles, nonlocal averages on a grid, and shift alignment.

use crate::error::{Error, Result};
use crate::model::{Kernel, ModelConfig, ModelVariant, VelocityLaw};
use crate::roots::{bisect, golden_min};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    /// Solution of the nonlocal conservation law.
    Macro,
    /// Discrete profile of the particle model.
    Micro,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ProfileMeta<T> {
    pub kind: ProfileKind,
    pub variant: ModelVariant,
    pub sigma: T,
    pub ell: Option<T>,
    /// Frame flux carried by the computed profile.
    pub fbar: T,
    /// `sup |w|`
    pub kappa: T,
    /// Lipschitz constant of `1/v` on the endpoint interval.
    pub lipschitz_v: T,
    /// Where the seed was attached and its exponential rate.
    pub seed_x: T,
    pub seed_rate: T,
    pub outer_iterations: usize,
}

/// Nondecreasing samples on the uniform grid `x_start + i dx`.
///
/// Evaluation outside the grid returns the asymptotic endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile<T> {
    x_start: T,
    dx: T,
    values: Vec<T>,
    /// Node derivatives; when present smooth evaluation is cubic Hermite.
    slopes: Option<Vec<T>>,
    pub rho_minus: T,
    pub rho_plus: T,
    pub rho_hat: T,
    pub meta: ProfileMeta<T>,
}

impl<T: Real> Profile<T> {
    pub fn new(
        x_start: T,
        dx: T,
        values: Vec<T>,
        slopes: Option<Vec<T>>,
        endpoints: (T, T, T),
        meta: ProfileMeta<T>,
    ) -> Result<Self> {
        if values.len() < 2 || !(dx > T::zero()) {
            return Err(Error::Domain("a profile needs at least two samples and dx > 0".into()));
        }
        if let Some(s) = &slopes {
            if s.len() != values.len() {
                return Err(Error::Domain("slope and value arrays differ in length".into()));
            }
        }
        let (rho_minus, rho_hat, rho_plus) = endpoints;
        Ok(Self { x_start, dx, values, slopes, rho_minus, rho_plus, rho_hat, meta })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn x(&self, i: usize) -> T {
        self.x_start + self.dx * T::from_usize_lossy(i)
    }

    pub fn x_start(&self) -> T {
        self.x_start
    }

    pub fn x_end(&self) -> T {
        self.x(self.len() - 1)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn slopes(&self) -> Option<&[T]> {
        self.slopes.as_deref()
    }

    pub fn points(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| (self.x(i), v))
    }

    /// Cell index and local coordinate in `[0, 1]`, or `None` outside the grid.
    fn locate(&self, x: T) -> Option<(usize, T)> {
        let u = (x - self.x_start) / self.dx;
        let last = self.len() - 1;
        if !(u >= T::zero()) || u > T::from_usize_lossy(last) {
            return None;
        }
        let i = u.floor().to_usize().unwrap_or(0).min(last - 1);
        Some((i, u - T::from_usize_lossy(i)))
    }

    fn outside(&self, x: T) -> T {
        if x < self.x_start {
            self.rho_minus
        } else {
            self.rho_plus
        }
    }

    /// Piecewise linear evaluation.
    pub fn eval(&self, x: T) -> T {
        match self.locate(x) {
            None => self.outside(x),
            Some((i, t)) => self.values[i] * (T::one() - t) + self.values[i + 1] * t,
        }
    }

    /// Cubic evaluation: Hermite with stored slopes, otherwise four-point Lagrange.
    pub fn eval_smooth(&self, x: T) -> T {
        let Some((i, t)) = self.locate(x) else {
            return self.outside(x);
        };
        if let Some(s) = &self.slopes {
            return hermite(self.values[i], self.values[i + 1], s[i] * self.dx, s[i + 1] * self.dx, t);
        }
        let n = self.len();
        if n < 4 {
            return self.values[i] * (T::one() - t) + self.values[i + 1] * t;
        }
        // stencil i-1..i+2 shifted inwards at the ends
        let base = i.saturating_sub(1).min(n - 4);
        let u = t + T::from_usize_lossy(i) - T::from_usize_lossy(base);
        let y = &self.values[base..base + 4];
        let one = T::one();
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let six = T::lit(6.0);
        let l0 = -(u - one) * (u - two) * (u - three) / six;
        let l1 = u * (u - two) * (u - three) / two;
        let l2 = -u * (u - one) * (u - three) / two;
        let l3 = u * (u - one) * (u - two) / six;
        y[0] * l0 + y[1] * l1 + y[2] * l2 + y[3] * l3
    }

    /// Smallest `x` on the grid range with `eval_smooth(x) = r`.
    pub fn inverse(&self, r: T) -> Result<T> {
        let n = self.len();
        if !(r > self.values[0] && r < self.values[n - 1]) {
            return Err(Error::Domain(format!(
                "value {} outside the sampled range ({}, {})",
                r,
                self.values[0],
                self.values[n - 1]
            )));
        }
        // first node at or above r
        let j = self.values.partition_point(|&v| v < r).max(1);
        let (a, b) = (self.x(j - 1), self.x(j));
        let g = |x: T| self.eval_smooth(x) - r;
        if g(a) * g(b) <= T::zero() {
            let tol = T::lit(1e-14).max(T::epsilon() * T::lit(8.0)) * (T::one() + a.abs());
            bisect(g, a, b, tol)
        } else {
            let (va, vb) = (self.values[j - 1], self.values[j]);
            Ok(a + (b - a) * (r - va) / (vb - va))
        }
    }

    /// Location of the stagnation value.
    pub fn anchor(&self) -> Result<T> {
        self.inverse(self.rho_hat)
    }

    /// The profile `x -> self(x - c)`.
    pub fn shifted(&self, c: T) -> Self {
        let mut p = self.clone();
        p.x_start = p.x_start + c;
        p.meta.seed_x = p.meta.seed_x + c;
        p
    }

    /// Nodes covering `[lo, hi]`.
    pub fn restricted(&self, lo: T, hi: T) -> Self {
        let n = self.len();
        let first = ((lo - self.x_start) / self.dx).floor().to_isize().unwrap_or(0).clamp(0, n as isize - 2) as usize;
        let last = ((hi - self.x_start) / self.dx).ceil().to_isize().unwrap_or(0).clamp(first as isize + 1, n as isize - 1)
            as usize;
        let mut p = self.clone();
        p.x_start = self.x(first);
        p.values = self.values[first..=last].to_vec();
        p.slopes = self.slopes.as_ref().map(|s| s[first..=last].to_vec());
        p
    }

    /// `max |self(x_i) - other(x_i + c)|` over nodes of `self` in `[lo, hi]`.
    pub fn sup_distance(&self, other: &Profile<T>, c: T, lo: T, hi: T) -> T {
        self.points()
            .filter(|(x, _)| *x >= lo && *x <= hi)
            .map(|(x, v)| (v - other.eval_smooth(x + c)).abs())
            .fold(T::zero(), |m, d| m.max(d))
    }

    pub fn total_variation(&self) -> T {
        self.values.windows(2).map(|p| (p[1] - p[0]).abs()).sum()
    }

    /// Largest forward difference quotient.
    pub fn max_slope(&self) -> T {
        self.values.windows(2).map(|p| (p[1] - p[0]) / self.dx).fold(T::neg_infinity(), |m, d| m.max(d))
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|p| p[1] >= p[0])
    }
}

fn hermite<T: Real>(y0: T, y1: T, m0: T, m1: T, t: T) -> T {
    let t2 = t * t;
    let t3 = t2 * t;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let h00 = two * t3 - three * t2 + T::one();
    let h10 = t3 - two * t2 + t;
    let h01 = -two * t3 + three * t2;
    let h11 = t3 - t2;
    y0 * h00 + m0 * h10 + y1 * h01 + m1 * h11
}

/// Shift `c` minimising `sup_x |p1(x) - p2(x + c)|`, with the residual.
///
/// Starts from the offset of the stagnation crossings and polishes with a
/// golden-section search. Without a window the comparison runs over the part of
/// `p1`'s grid that maps into `p2`'s grid.
pub fn shift_align<T: Real>(p1: &Profile<T>, p2: &Profile<T>, window: Option<(T, T)>) -> Result<(T, T)> {
    let c0 = p2.anchor()? - p1.anchor()?;
    let (lo, hi) = match window {
        Some(w) => w,
        None => (p1.x_start().max(p2.x_start() - c0), p1.x_end().min(p2.x_end() - c0)),
    };
    let span = p1.dx().max(p2.dx()) * T::lit(4.0);
    let lo = lo + span;
    let hi = hi - span;
    let obj = |c: T| p1.sup_distance(p2, c, lo, hi);
    let (c, err) = golden_min(obj, c0 - span, c0 + span, T::lit(1e-12).max(T::epsilon() * T::lit(16.0)));
    // never report worse than the crossing alignment itself
    let e0 = obj(c0);
    Ok(if e0 <= err { (c0, e0) } else { (c, err) })
}

/// Grid weights `c_k` with `int_0^h q(s) w(s) ds = sum_k c_k q(k dx)` exactly for
/// piecewise linear `q` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil<T> {
    coeffs: Vec<T>,
    dx: T,
}

impl<T: Real> Stencil<T> {
    pub fn new(kernel: &Kernel<T>, dx: T) -> Result<Self> {
        if kernel.is_symmetric() {
            return Err(Error::Domain("profile solvers need a one-sided kernel".into()));
        }
        if !(dx > T::zero()) {
            return Err(Error::StepSize(format!("grid spacing must be positive, got {}", dx)));
        }
        let h = kernel.h();
        let cells = (h / dx - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
        let mut coeffs = vec![T::zero(); cells + 1];
        for k in 0..cells {
            let a = dx * T::from_usize_lossy(k);
            let b = (a + dx).min(h);
            let m0 = kernel.integral(a, b);
            let m1 = kernel.moment1(a, b);
            let beta = (m1 - a * m0) / dx;
            coeffs[k] = coeffs[k] + m0 - beta;
            coeffs[k + 1] = coeffs[k + 1] + beta;
        }
        Ok(Self { coeffs, dx })
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// Number of grid cells spanned, `ceil(h / dx)`.
    pub fn reach(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    /// `sum_k c_k values[j + k]`.
    pub fn apply(&self, values: &[T], j: usize) -> T {
        self.coeffs.iter().zip(&values[j..j + self.coeffs.len()]).map(|(&c, &v)| c * v).sum()
    }

    /// Same sum with a value closure, for ghost-extended data.
    pub fn apply_with(&self, mut f: impl FnMut(usize) -> T) -> T {
        self.coeffs.iter().enumerate().map(|(k, &c)| c * f(k)).sum()
    }
}

/// `A(Q; x) = int_0^h Q(x + s) w(s) ds` of the piecewise linear interpolant of a
/// profile (or of `v(Q)` for the velocity-averaged variant).
pub struct NonlocalAverage<'a, T> {
    pub profile: &'a Profile<T>,
    pub kernel: &'a Kernel<T>,
    pub velocity: &'a VelocityLaw<T>,
    pub variant: ModelVariant,
}

impl<'a, T: Real> NonlocalAverage<'a, T> {
    pub fn from_config(profile: &'a Profile<T>, config: &'a ModelConfig<T>) -> Self {
        Self { profile, kernel: &config.kernel, velocity: &config.velocity, variant: config.variant }
    }

    fn integrand(&self, x: T) -> T {
        let q = self.profile.eval(x);
        match self.variant {
            ModelVariant::DensityAveraged => q,
            ModelVariant::VelocityAveraged => self.velocity.v(q),
        }
    }

    /// The averaged quantity at `x`: `A(Q)` or `A(v(Q))`.
    pub fn eval(&self, x: T) -> T {
        let p = self.profile;
        let h = self.kernel.h();
        let mut cuts = vec![T::zero()];
        let first = ((x - p.x_start()) / p.dx()).floor() + T::one();
        let mut k = first;
        loop {
            let s = p.x_start() + k * p.dx() - x;
            if s >= h {
                break;
            }
            if s > T::zero() {
                cuts.push(s);
            }
            k = k + T::one();
        }
        cuts.push(h);
        let mut acc = T::zero();
        for seg in cuts.windows(2) {
            let (sa, sb) = (seg[0], seg[1]);
            if sb <= sa {
                continue;
            }
            let qa = self.integrand(x + sa);
            let qb = self.integrand(x + sb);
            let m0 = self.kernel.integral(sa, sb);
            let m1 = self.kernel.moment1(sa, sb);
            acc = acc + qa * m0 + (qb - qa) * (m1 - sa * m0) / (sb - sa);
        }
        acc
    }

    /// Frame velocity `V(x) - sigma`.
    pub fn frame_velocity(&self, x: T, sigma: T) -> T {
        let a = self.eval(x);
        match self.variant {
            ModelVariant::DensityAveraged => self.velocity.v(a) - sigma,
            ModelVariant::VelocityAveraged => a - sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ProfileMeta<f64> {
        ProfileMeta {
            kind: ProfileKind::Macro,
            variant: ModelVariant::DensityAveraged,
            sigma: 0.0,
            ell: None,
            fbar: 0.16,
            kappa: 10.0,
            lipschitz_v: 25.0,
            seed_x: 1.0,
            seed_rate: 1.0,
            outer_iterations: 0,
        }
    }

    fn tanh_profile(dx: f64, shift: f64) -> Profile<f64> {
        let x0 = -2.0;
        let n = (4.0 / dx) as usize + 1;
        let vals = (0..n).map(|i| 0.5 + 0.3 * (5.0 * (x0 + i as f64 * dx - shift)).tanh()).collect();
        Profile::new(x0, dx, vals, None, (0.2, 0.5, 0.8), meta()).unwrap()
    }

    #[test]
    fn eval_and_inverse() {
        let p = tanh_profile(0.01, 0.0);
        assert!((p.eval_smooth(0.123) - (0.5 + 0.3 * (0.615f64).tanh())).abs() < 1e-6);
        assert!(p.anchor().unwrap().abs() < 1e-10);
        assert_eq!(p.eval(-5.0), 0.2);
        assert_eq!(p.eval(5.0), 0.8);
        let x = p.inverse(0.7).unwrap();
        assert!((p.eval_smooth(x) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn align_identity_and_shift() {
        let p = tanh_profile(0.01, 0.0);
        let (c, e) = shift_align(&p, &p, None).unwrap();
        assert!(c.abs() < 1e-12 && e < 1e-12);
        let q = p.shifted(0.05);
        let (c, e) = shift_align(&p, &q, None).unwrap();
        assert!((c - 0.05).abs() < 0.01, "{c}");
        assert!(e < 1e-10);
        let r = tanh_profile(0.01, 0.0537);
        let (c, e) = shift_align(&p, &r, None).unwrap();
        assert!((c - 0.0537).abs() < 1e-6 && e < 1e-6, "{c} {e}");
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| 0.5 + 0.01 * x * x * x - 0.02 * x;
        let df = |x: f64| 0.03 * x * x - 0.02;
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let p = Profile::new(
            0.0,
            0.1,
            xs.iter().map(|&x| f(x)).collect(),
            Some(xs.iter().map(|&x| df(x)).collect()),
            (0.2, 0.5, 0.8),
            meta(),
        )
        .unwrap();
        for &x in &[0.05, 0.33, 0.77] {
            assert!((p.eval_smooth(x) - f(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn stencil_integrates_linear_functions_exactly() {
        for k in [Kernel::linear_decreasing(0.2).unwrap(), Kernel::linear_increasing(0.2).unwrap()] {
            for dx in [0.2 / 64.0, 0.2 / 7.3] {
                let s = Stencil::new(&k, dx).unwrap();
                let ones: f64 = s.coeffs().iter().sum();
                assert!((ones - 1.0).abs() < 1e-13);
                // int_0^h s w(s) ds from the closed form
                let first: f64 = s.coeffs().iter().enumerate().map(|(i, c)| c * i as f64 * dx).sum();
                assert!((first - k.moment1(0.0, 0.2)).abs() < 1e-13);
            }
        }
        let s = Stencil::new(&Kernel::<f64>::linear_decreasing(0.2).unwrap(), 0.2 / 64.0).unwrap();
        assert_eq!(s.reach(), 64);
    }

    #[test]
    fn average_matches_stencil_on_nodes() {
        let p = tanh_profile(0.2 / 64.0, 0.0);
        let k = Kernel::linear_decreasing(0.2).unwrap();
        let v = VelocityLaw::linear();
        let avg = NonlocalAverage { profile: &p, kernel: &k, velocity: &v, variant: ModelVariant::DensityAveraged };
        let s = Stencil::new(&k, p.dx()).unwrap();
        for j in [10usize, 300, 600] {
            let a = avg.eval(p.x(j));
            assert!((a - s.apply(p.values(), j)).abs() < 1e-13);
            assert!(a > p.values()[j]);
        }
    }
}
