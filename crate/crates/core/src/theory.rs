//! Closed-form contraction rates, complexity thresholds and dense checks of
//! the inequalities they rest on.
//!
//! Every rate takes [`SpectralBounds`] explicitly. Bounds built from
//! estimated eigenvalues carry [`SpectralSource::Estimated`] so reports can
//! say which kind of spectrum they used.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralSource {
    Exact,
    Estimated,
}

/// Extreme eigenvalues `λ1 ≥ λn > 0` and `κ = λ1/λn`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralBounds {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub kappa: f64,
    pub source: SpectralSource,
}

impl SpectralBounds {
    pub fn new(lambda_max: f64, lambda_min: f64, source: SpectralSource) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_min <= lambda_max && lambda_max.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < lambda_min <= lambda_max, got ({lambda_max}, {lambda_min})"
            )));
        }
        Ok(Self {
            lambda_max,
            lambda_min,
            kappa: lambda_max / lambda_min,
            source,
        })
    }

    pub fn exact(lambda_max: f64, lambda_min: f64) -> Result<Self> {
        Self::new(lambda_max, lambda_min, SpectralSource::Exact)
    }

    /// Bounds with `λn = 1`, `λ1 = κ`; rates only depend on the ratio.
    pub fn from_kappa(kappa: f64) -> Result<Self> {
        if !(kappa >= 1.0) {
            return Err(Error::invalid(format!("condition number must be >= 1, got {kappa}")));
        }
        Self::exact(kappa, 1.0)
    }

    /// `(λ1+λn)² / (4λ1λn)`
    pub fn kantorovich(&self) -> f64 {
        let (a, b) = (self.lambda_max, self.lambda_min);
        (a + b) * (a + b) / (4.0 * a * b)
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega < 2.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("relaxation must lie in (0, 2), got {omega}")))
    }
}

/// `c(ω) = 1 − ω(2−ω)·4λ1λn/(λ1+λn)²`, the per-step contraction of
/// `‖g_k‖²` in the `A^{2ℓ−1}` norm.
pub fn contraction_factor(omega: f64, bounds: &SpectralBounds) -> Result<f64> {
    check_omega(omega)?;
    let (a, b) = (bounds.lambda_max, bounds.lambda_min);
    let c = 1.0 - omega * (2.0 - omega) * 4.0 * a * b / ((a + b) * (a + b));
    Ok(c.max(0.0))
}

/// `(1 − ω(2−ω)/κ)^k · f0gap`; independent of ℓ.
pub fn rate1_fgap_bound(k: usize, omega: f64, bounds: &SpectralBounds, f0gap: f64) -> f64 {
    let factor = 1.0 - omega * (2.0 - omega) / bounds.kappa;
    factor.powf(k as f64) * f0gap
}

/// `κ^{2ℓ} · c(ω)^k · f0gap`.
pub fn rate2_fgap_bound(k: usize, omega: f64, two_ell: u32, bounds: &SpectralBounds, f0gap: f64) -> Result<f64> {
    let c = contraction_factor(omega, bounds)?;
    Ok(bounds.kappa.powf(two_ell as f64) * c.powf(k as f64) * f0gap)
}

/// Bound on `‖g_k‖₂²`: the smaller of the ℓ-free rate
/// `κ(1 − ω(2−ω)/κ)^k` and the Kantorovich-type rate, whose prefactor is
/// `κ` for ℓ = 0 and `κ^{2ℓ−1}` otherwise.
pub fn gnorm2_bound(k: usize, omega: f64, two_ell: u32, bounds: &SpectralBounds, g0norm_sq: f64) -> Result<f64> {
    let kappa = bounds.kappa;
    let rate1 = kappa * rate1_fgap_bound(k, omega, bounds, g0norm_sq);
    let prefactor = if two_ell == 0 {
        kappa
    } else {
        kappa.powf(two_ell as f64 - 1.0)
    };
    let rate2 = prefactor * contraction_factor(omega, bounds)?.powf(k as f64) * g0norm_sq;
    Ok(rate1.min(rate2))
}

/// Iteration threshold `κ/(ω(2−ω)) · ln(f0gap/ε)` from the ℓ-free rate.
/// Any `K` strictly above it guarantees `f(x_K) − f* ≤ ε`.
pub fn complexity_k(epsilon: f64, omega: f64, bounds: &SpectralBounds, f0gap: f64) -> Result<f64> {
    check_omega(omega)?;
    if !(epsilon > 0.0) || !(f0gap > 0.0) {
        return Err(Error::invalid("epsilon and f0gap must be positive"));
    }
    if epsilon >= f0gap {
        return Ok(0.0);
    }
    Ok(bounds.kappa / (omega * (2.0 - omega)) * (f0gap / epsilon).ln())
}

/// Iteration threshold `(κ+1)²/(4κ) / (ω(2−ω)) · ln(κ^{2ℓ}·f0gap/ε̂)`.
pub fn complexity_khat(epsilon_hat: f64, omega: f64, two_ell: u32, bounds: &SpectralBounds, f0gap: f64) -> Result<f64> {
    check_omega(omega)?;
    if !(epsilon_hat > 0.0) || !(f0gap > 0.0) {
        return Err(Error::invalid("epsilon and f0gap must be positive"));
    }
    let kappa = bounds.kappa;
    // κ^{2ℓ} taken in log space so large ℓ does not overflow
    let log_arg = two_ell as f64 * kappa.ln() + (f0gap / epsilon_hat).ln();
    if log_arg <= 0.0 {
        return Ok(0.0);
    }
    let pre = (kappa + 1.0) * (kappa + 1.0) / (4.0 * kappa);
    Ok(pre / (omega * (2.0 - omega)) * log_arg)
}

/// The rate constants for one `(ω, ℓ)` pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateReport {
    pub c_omega: f64,
    pub kantorovich: f64,
    pub rate1_factor: f64,
    pub rate2_prefactor: f64,
    pub source: SpectralSource,
}

impl RateReport {
    pub fn new(omega: f64, two_ell: u32, bounds: &SpectralBounds) -> Result<Self> {
        Ok(Self {
            c_omega: contraction_factor(omega, bounds)?,
            kantorovich: bounds.kantorovich(),
            rate1_factor: 1.0 - omega * (2.0 - omega) / bounds.kappa,
            rate2_prefactor: bounds.kappa.powf(two_ell as f64),
            source: bounds.source,
        })
    }
}

/// `L = ‖y‖²_A · ‖y‖²_{A⁻¹} / ‖y‖₂⁴`. With ω = 1 the weighted gradient norm
/// contracts by exactly `1 − 1/L` in one step.
pub fn pronzato_lk(y2: f64, y_a: f64, y_ainv: f64) -> f64 {
    y_a * y_ainv / (y2 * y2)
}

fn extreme_eigenvalues(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    (max, min)
}

fn check_square(a: &DMatrix<f64>, x: &[f64]) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid("matrix must be square"));
    }
    check_dim(a.nrows(), x.len())
}

/// `gᵀA^p g` via `w_j = A^j g`, pairing `w_{⌊p/2⌋}` with `w_{⌈p/2⌉}`.
pub(crate) fn power_form(a: &DMatrix<f64>, g: &[f64], p: u32) -> f64 {
    let mut powers = vec![DVector::from_column_slice(g)];
    for _ in 0..p.div_ceil(2) {
        let next = a * powers.last().expect("non-empty");
        powers.push(next);
    }
    powers[(p / 2) as usize].dot(&powers[p.div_ceil(2) as usize])
}

/// Kantorovich slack `(λ1+λn)²/(4λ1λn) − (xᵀBx)(xᵀB⁻¹x)/‖x‖⁴`, which is
/// non-negative for SPD `B`. `B⁻¹x` comes from a Cholesky solve.
pub fn kantorovich_check(b: &DMatrix<f64>, x: &[f64]) -> Result<f64> {
    check_square(b, x)?;
    let xv = DVector::from_column_slice(x);
    let xx = xv.norm_squared();
    if xx == 0.0 {
        return Err(Error::invalid("x must be nonzero"));
    }
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("matrix is singular or not positive definite"))?;
    let binv_x = chol.solve(&xv);
    let (l1, ln) = extreme_eigenvalues(b);
    let bound = (l1 + ln) * (l1 + ln) / (4.0 * l1 * ln);
    let lhs = xv.dot(&(b * &xv)) * xv.dot(&binv_x) / (xx * xx);
    Ok(bound - lhs)
}

/// `(gᵀA^{2ℓ}g / gᵀA^{2ℓ+1}g)·(gᵀAg / gᵀg)`, which never exceeds 1 and
/// equals 1 at ℓ = 0.
pub fn rayleigh_ratio_check(a: &DMatrix<f64>, g: &[f64], two_ell: u32) -> Result<f64> {
    check_square(a, g)?;
    let gg = power_form(a, g, 0);
    if gg == 0.0 {
        return Err(Error::invalid("g must be nonzero"));
    }
    Ok(power_form(a, g, two_ell) / power_form(a, g, two_ell + 1) * power_form(a, g, 1) / gg)
}

/// Slacks of `λn^{2ℓ}·zᵀAz ≤ zᵀA^{2ℓ+1}z ≤ λ1^{2ℓ}·zᵀAz` as `(lo, hi)`;
/// both are non-negative up to rounding.
pub fn power_sandwich_check(a: &DMatrix<f64>, z: &[f64], two_ell: u32) -> Result<(f64, f64)> {
    check_square(a, z)?;
    let (l1, ln) = extreme_eigenvalues(a);
    let zaz = power_form(a, z, 1);
    let mid = power_form(a, z, two_ell + 1);
    let p = two_ell as f64;
    Ok((mid - ln.powf(p) * zaz, l1.powf(p) * zaz - mid))
}
