//! Scalar root finding and minimisation used throughout the crate.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Absolute tolerance for bracketed scalar roots.
pub const ROOT_TOL: f64 = 1e-12;
/// Iteration cap for bisection.
pub const MAX_BISECTIONS: usize = 200;

/// Bisection on `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign (a zero at
/// either end is accepted).
pub fn bisect<T: Real>(mut f: impl FnMut(T) -> T, lo: T, hi: T, tol: T) -> Result<T> {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::NoBracket {
            lo: a.as_f64(),
            hi: b.as_f64(),
            context: format!("f(lo) = {}, f(hi) = {}", fa.as_f64(), fb.as_f64()),
        });
    }
    let half = T::lit(0.5);
    for _ in 0..MAX_BISECTIONS {
        let m = a + (b - a) * half;
        if b - a <= tol || m <= a || m >= b {
            return Ok(m);
        }
        let fm = f(m);
        if fm == T::zero() {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(a + (b - a) * half)
}

/// Grows `hi` by doubling its distance from `lo` until `f` changes sign
/// relative to `f(lo)`. Returns the bracket.
pub fn expand_upper<T: Real>(
    mut f: impl FnMut(T) -> T,
    lo: T,
    first_hi: T,
    max_doublings: usize,
) -> Result<(T, T)> {
    let f_lo = f(lo);
    let mut prev = lo;
    let mut hi = first_hi;
    for _ in 0..=max_doublings {
        let fh = f(hi);
        if fh == T::zero() || fh.signum() != f_lo.signum() {
            return Ok((prev, hi));
        }
        prev = hi;
        hi = lo + (hi - lo) * T::lit(2.0);
    }
    Err(Error::NoBracket {
        lo: lo.as_f64(),
        hi: hi.as_f64(),
        context: format!("no sign change after {max_doublings} doublings"),
    })
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub fn golden_min<T: Real>(mut f: impl FnMut(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T) {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
