//! Discrete profiles against the macroscopic profile as the car length shrinks.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EndpointPair, ModelConfig};
use crate::profile::{shift_align, Profile};
use crate::profile_macro::solve_asymptotic;
use crate::profile_micro::{solve_p_asymptotic, DEFAULT_STEPS_PER_CAR};
use crate::rates::{continuous_rate, discrete_rate, linearized_weights, Side};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyEntry<T> {
    pub ell: T,
    /// `sup |Q - P^ell|` after alignment, away from the domain edges.
    pub sup_error: T,
    pub shift: T,
    pub lambda_plus_ell: T,
    pub lambda_minus_ell: T,
    pub rate_error_plus: T,
    pub rate_error_minus: T,
    /// `|sum_k w_k e^{-k a lambda} - L(lambda)|` at `lambda = lambda_plus_ell`, `a = ell / rho_plus`.
    pub riemann_gap: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport<T> {
    pub lambda_plus: T,
    pub lambda_minus: T,
    pub entries: Vec<StudyEntry<T>>,
    /// Car lengths whose solve failed, with the reason.
    pub failures: Vec<(T, String)>,
}

impl<T: Real> ConvergenceReport<T> {
    pub fn ells(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.ell).collect()
    }

    pub fn sup_errors(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.sup_error).collect()
    }

    pub fn rate_errors_plus(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.rate_error_plus).collect()
    }

    pub fn rate_errors_minus(&self) -> Vec<T> {
        self.entries.iter().map(|e| e.rate_error_minus).collect()
    }

    /// Successive quotients `e_{n+1} / e_n` of the `+inf` rate errors.
    pub fn ratios(&self) -> Vec<T> {
        quotients(&self.rate_errors_plus())
    }

    pub fn sup_ratios(&self) -> Vec<T> {
        quotients(&self.sup_errors())
    }

    /// `riemann_gap / a` per entry.
    pub fn riemann_constants(&self, rho_plus: T) -> Vec<T> {
        self.entries.iter().map(|e| e.riemann_gap * rho_plus / e.ell).collect()
    }
}

fn quotients<T: Real>(v: &[T]) -> Vec<T> {
    v.windows(2).map(|w| w[1] / w[0]).collect()
}

pub fn strictly_decreasing<T: Real>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Solves `P^ell` for every car length and compares with `Q` on `Q`'s grid of
/// spacing `dx`. Per-ell failures are collected rather than aborting.
pub fn run_study<T: Real>(
    base: &ModelConfig<T>,
    ells: &[T],
    rho: (T, T),
    domain: (T, T),
    dx: T,
) -> Result<ConvergenceReport<T>> {
    if ells.is_empty() {
        return Err(Error::InvalidConfig("no car lengths given".into()));
    }
    if ells.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidConfig("car lengths must be strictly decreasing".into()));
    }
    let h = base.h();
    if ells[0] > h / T::lit(4.0) {
        return Err(Error::InvalidConfig(format!("ell = {} exceeds h / 4", ells[0])));
    }
    let min_ell = ells[ells.len() - 1];
    if dx > min_ell / T::lit(8.0) {
        return Err(Error::StepSize(format!("dx = {} exceeds min(ell) / 8 = {}", dx, min_ell / T::lit(8.0))));
    }
    let (rho_minus, rho_plus) = rho;
    let pair = EndpointPair::new(rho_minus, rho_plus, base)?;
    let q = solve_asymptotic(base, &pair, domain, dx)?;
    let lambda_plus = continuous_rate(base, rho_plus, Side::PlusInfinity)?.lambda;
    let lambda_minus = continuous_rate(base, rho_minus, Side::MinusInfinity)?.lambda;
    let band = h + ells[0];
    let window = (domain.0 + band, domain.1 - band);

    let results: Vec<Result<StudyEntry<T>>> = ells
        .par_iter()
        .map(|&ell| {
            let mut cfg = base.clone();
            cfg.ell = ell;
            cfg.validate()?;
            study_entry(&cfg, &pair, &q, domain, window, (lambda_plus, lambda_minus))
        })
        .collect();

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (&ell, r) in ells.iter().zip(results) {
        match r {
            Ok(e) => entries.push(e),
            Err(e) => failures.push((ell, e.to_string())),
        }
    }
    Ok(ConvergenceReport { lambda_plus, lambda_minus, entries, failures })
}

fn study_entry<T: Real>(
    cfg: &ModelConfig<T>,
    pair: &EndpointPair<T>,
    q: &Profile<T>,
    domain: (T, T),
    window: (T, T),
    lambdas: (T, T),
) -> Result<StudyEntry<T>> {
    let ell = cfg.ell;
    let p = solve_p_asymptotic(cfg, pair, domain, DEFAULT_STEPS_PER_CAR)?;
    let (shift, sup_error) = shift_align(q, &p, Some(window))?;
    let lp = discrete_rate(cfg, pair.rho_plus, Side::PlusInfinity)?.lambda;
    let lm = discrete_rate(cfg, pair.rho_minus, Side::MinusInfinity)?.lambda;
    let a = ell / pair.rho_plus;
    let riemann = linearized_weights(&cfg.kernel, a)
        .iter()
        .enumerate()
        .fold(T::zero(), |s, (k, &w)| s + w * (-(a * lp) * T::from_usize_lossy(k)).exp());
    let riemann_gap = (riemann - cfg.kernel.laplace(lp)).abs();
    Ok(StudyEntry {
        ell,
        sup_error,
        shift,
        lambda_plus_ell: lp,
        lambda_minus_ell: lm,
        rate_error_plus: (lp - lambdas.0).abs(),
        rate_error_minus: (lm - lambdas.1).abs(),
        riemann_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Kernel, ModelVariant, VelocityLaw};

    fn base() -> ModelConfig<f64> {
        ModelConfig::new(Kernel::linear_decreasing(0.2).unwrap(), VelocityLaw::linear(), 0.04, ModelVariant::DensityAveraged, 0.0)
            .unwrap()
    }

    #[test]
    fn argument_checks() {
        let c = base();
        assert!(run_study(&c, &[], (0.2, 0.8), (-0.7, 0.4), 0.001).is_err());
        assert!(run_study(&c, &[0.02, 0.04], (0.2, 0.8), (-0.7, 0.4), 0.001).is_err());
        assert!(run_study(&c, &[0.08], (0.2, 0.8), (-0.7, 0.4), 0.001).is_err());
        assert!(matches!(run_study(&c, &[0.04, 0.02], (0.2, 0.8), (-0.7, 0.4), 0.003), Err(Error::StepSize(_))));
    }

    #[test]
    fn single_ell_is_deterministic() {
        let c = base();
        let a = run_study(&c, &[0.04], (0.2, 0.8), (-1.2, 0.4), 0.2 / 64.0).unwrap();
        let b = run_study(&c, &[0.04], (0.2, 0.8), (-1.2, 0.4), 0.2 / 64.0).unwrap();
        assert_eq!(a, b);
        assert!(a.failures.is_empty(), "{:?}", a.failures);
    }
}
