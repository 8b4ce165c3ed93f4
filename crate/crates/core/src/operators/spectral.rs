use rand::Rng;

use super::{Charge, SpdOperator};
use crate::error::{Error, Result};
use crate::theory::{SpectralBounds, SpectralSource};
use crate::vector::{dot, norm};

/// Result of [`extreme_eigen_estimate`].
#[derive(Debug, Clone, Copy)]
pub struct EigenEstimate {
    pub bounds: SpectralBounds,
    /// Set when either Rayleigh quotient was still moving by more than
    /// `1e-6` (relative) on the final iteration.
    pub low_confidence: bool,
}

const CONFIDENCE_RTOL: f64 = 1e-6;

/// Power iteration on `x ↦ shift·x − A·x` (plain power iteration when
/// `shift` is zero). Returns the last Rayleigh quotient of the shifted map
/// and its final relative change.
fn power_iteration(op: &SpdOperator, shift: f64, iters: usize, start: Vec<f64>) -> Result<(f64, f64)> {
    let mut v = start;
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut w = vec![0.0; v.len()];
    let mut rq = f64::NAN;
    let mut change = f64::INFINITY;
    for _ in 0..iters {
        op.apply_into(&v, &mut w, Charge::Diagnostic)?;
        if shift != 0.0 {
            for (wi, vi) in w.iter_mut().zip(&v) {
                *wi = shift * vi - *wi;
            }
        }
        let next = dot(&v, &w);
        change = if rq.is_nan() {
            f64::INFINITY
        } else {
            (next - rq).abs() / next.abs().max(f64::MIN_POSITIVE)
        };
        rq = next;
        let nw = norm(&w);
        if nw == 0.0 {
            // v is an exact eigenvector of the shifted map with eigenvalue 0.
            change = 0.0;
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    Ok((rq, change))
}

/// Estimates `(λ1, λn)` by power iteration on `A` and on `σI − A` with
/// `σ = 1.01·λ1_est`. Every application is charged as diagnostic.
///
/// Both estimates are Rayleigh quotients, so `λ1_est ≤ λ1` and
/// `λn_est ≥ λn` hold up to rounding.
pub fn extreme_eigen_estimate(op: &SpdOperator, iters: usize, seed: u64) -> Result<EigenEstimate> {
    if iters == 0 {
        return Err(Error::invalid("power iteration needs at least one iteration"));
    }
    let mut rng = crate::problems::rng(seed);
    let n = op.dim();
    let mut start = || -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() + 0.5).collect() };

    let (lmax, change_max) = power_iteration(op, 0.0, iters, start())?;
    if !(lmax > 0.0 && lmax.is_finite()) {
        return Err(Error::invalid(format!(
            "largest Rayleigh quotient {lmax} is not positive"
        )));
    }
    let shift = 1.01 * lmax;
    let (mu, change_min) = power_iteration(op, shift, iters, start())?;
    let mut lmin = shift - mu;
    if !(lmin > 0.0) {
        return Err(Error::invalid(format!(
            "smallest eigenvalue estimate {lmin} is not positive"
        )));
    }
    // rounding can push the shifted estimate a few ulps past λ1_est
    lmin = lmin.min(lmax);
    // the shifted iteration measures σ−λn; its relative change is rescaled to λn
    let change_min = change_min * mu.abs() / lmin;
    Ok(EigenEstimate {
        bounds: SpectralBounds::new(lmax, lmin, SpectralSource::Estimated)?,
        low_confidence: change_max > CONFIDENCE_RTOL || change_min > CONFIDENCE_RTOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_five() {
        let op = SpdOperator::diagonal(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let est = extreme_eigen_estimate(&op, 500, 0).unwrap();
        assert!((4.999..=5.0).contains(&est.bounds.lambda_max), "{:?}", est);
        assert!((1.0..=1.001).contains(&est.bounds.lambda_min), "{:?}", est);
        assert_eq!(est.bounds.source, SpectralSource::Estimated);
        assert_eq!(op.counters().algorithmic, 0);
        assert_eq!(op.counters().diagnostic, 1000);
    }

    #[test]
    fn identity_has_unit_bounds() {
        let op = SpdOperator::identity(4).unwrap();
        let est = extreme_eigen_estimate(&op, 3, 1).unwrap();
        assert!((est.bounds.lambda_max - 1.0).abs() < 1e-14);
        assert!((est.bounds.lambda_min - 1.0).abs() < 1e-14);
        assert!(est.bounds.kappa >= 1.0);
    }

    #[test]
    fn kappa_thousand_within_one_percent() {
        let op = SpdOperator::diagonal((1..=1000).map(f64::from).collect()).unwrap();
        let est = extreme_eigen_estimate(&op, 20_000, 5).unwrap();
        assert!((est.bounds.kappa - 1000.0).abs() <= 10.0, "{:?}", est);
        assert!(est.bounds.lambda_max <= 1000.0 && est.bounds.lambda_min >= 1.0);
    }

    #[test]
    fn few_iterations_flag_low_confidence() {
        let op = SpdOperator::diagonal((1..=1000).map(f64::from).collect()).unwrap();
        let est = extreme_eigen_estimate(&op, 5, 5).unwrap();
        assert!(est.low_confidence);
    }

    #[test]
    fn zero_iterations_rejected() {
        let op = SpdOperator::identity(2).unwrap();
        assert!(extreme_eigen_estimate(&op, 0, 0).is_err());
    }
}
