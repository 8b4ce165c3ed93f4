//! Seeded invariant battery behind the `verify` command.
//!
//! Each suite runs `trials` independent cases; case `i` uses seed
//! `seed + i`, so any reported failure can be replayed alone.

use std::fmt;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::{identity_checks, oracle_compare, weighted_gnorm_sq};
use crate::error::{Error, Result};
use crate::operators::SpdOperator;
use crate::problems::{random_spd, random_spd_matrix, rng};
use crate::solver::{Ell, SolverState};
use crate::theory::{contraction_factor, kantorovich_check, power_sandwich_check, rayleigh_ratio_check};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Kantorovich,
    RayleighRatio,
    PowerSandwich,
    StepSize,
    Recursion,
    OneMatvec,
    Contraction,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::Kantorovich,
        Suite::RayleighRatio,
        Suite::PowerSandwich,
        Suite::StepSize,
        Suite::Recursion,
        Suite::OneMatvec,
        Suite::Contraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kantorovich => "kantorovich",
            Suite::RayleighRatio => "rayleigh_ratio",
            Suite::PowerSandwich => "power_sandwich",
            Suite::StepSize => "step_size",
            Suite::Recursion => "recursion",
            Suite::OneMatvec => "one_matvec",
            Suite::Contraction => "contraction",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown suite '{s}'")))
    }

    /// Largest acceptable value of the suite's normalized violation measure.
    pub fn tolerance(self) -> f64 {
        match self {
            Suite::Kantorovich | Suite::RayleighRatio | Suite::PowerSandwich | Suite::StepSize => 1e-12,
            Suite::Recursion | Suite::Contraction => 1e-8,
            Suite::OneMatvec => 0.0,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub suites: Vec<Suite>,
    pub trials: usize,
    pub seed: u64,
    /// Perturb the cached vectors so the recursion oracle must fire.
    pub inject_drift: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            suites: Suite::ALL.to_vec(),
            trials: 100,
            seed: 0,
            inject_drift: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub suite: Suite,
    pub trials: usize,
    pub tolerance: f64,
    pub violations: usize,
    /// Largest violation measure seen (≤ tolerance means pass).
    pub worst: f64,
    /// First few failures, in seed order.
    pub failures: Vec<Failure>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub inject_drift: bool,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

const MAX_REPORTED: usize = 10;

struct Outcome {
    value: f64,
    detail: String,
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let checks = opts
        .suites
        .iter()
        .map(|&suite| run_suite(suite, opts))
        .collect::<Result<Vec<_>>>()?;
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        seed: opts.seed,
        inject_drift: opts.inject_drift,
        checks,
        passed,
    })
}

pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<CheckResult> {
    let outcomes: Vec<(u64, Outcome)> = (0..opts.trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed + i;
            run_case(suite, seed, opts.inject_drift).map(|o| (seed, o))
        })
        .collect::<Result<_>>()?;
    let tol = suite.tolerance();
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let mut violations = 0;
    for (seed, o) in outcomes {
        worst = worst.max(o.value);
        if !(o.value <= tol) {
            violations += 1;
            if failures.len() < MAX_REPORTED {
                failures.push(Failure {
                    seed,
                    value: o.value,
                    detail: o.detail,
                });
            }
        }
    }
    Ok(CheckResult {
        suite,
        trials: opts.trials,
        tolerance: tol,
        violations,
        worst,
        failures,
        passed: violations == 0,
    })
}

fn run_case(suite: Suite, seed: u64, inject: bool) -> Result<Outcome> {
    match suite {
        Suite::Kantorovich => kantorovich_case(seed),
        Suite::RayleighRatio => rayleigh_ratio_case(seed),
        Suite::PowerSandwich => power_sandwich_case(seed),
        Suite::StepSize => step_size_case(seed),
        Suite::Recursion => recursion_case(seed, inject),
        Suite::OneMatvec => one_matvec_case(seed),
        Suite::Contraction => contraction_case(seed),
    }
}

/// Dimension in `2..=12` and a spectrum `[1, 10^u]`, `u ∈ [0, 3)`.
fn random_shape(r: &mut impl Rng) -> (usize, f64) {
    (r.random_range(2..=12), 10f64.powf(3.0 * r.random::<f64>()))
}

fn random_nonzero(r: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| 2.0 * r.random::<f64>() - 1.0).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn kantorovich_case(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed);
    let (n, lmax) = random_shape(&mut r);
    let (a, bounds) = random_spd_matrix(n, 1.0, lmax, &mut r)?;
    let x = random_nonzero(&mut r, n);
    let slack = kantorovich_check(&a, &x)?;
    Ok(Outcome {
        value: -slack / bounds.kantorovich(),
        detail: format!("n={n} kappa={lmax:.3e} slack={slack:e}"),
    })
}

fn rayleigh_ratio_case(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed);
    let (n, lmax) = random_shape(&mut r);
    let (a, _) = random_spd_matrix(n, 1.0, lmax, &mut r)?;
    let g = random_nonzero(&mut r, n);
    let two_ell = r.random_range(0..=6);
    let ratio = rayleigh_ratio_check(&a, &g, two_ell)?;
    Ok(Outcome {
        value: ratio - 1.0,
        detail: format!("n={n} 2ell={two_ell} ratio={ratio}"),
    })
}

fn power_sandwich_case(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed);
    let (n, lmax) = random_shape(&mut r);
    let (a, _) = random_spd_matrix(n, 1.0, lmax, &mut r)?;
    let z = random_nonzero(&mut r, n);
    let two_ell = r.random_range(0..=6);
    let (lo, hi) = power_sandwich_check(&a, &z, two_ell)?;
    let zv = DVector::from_column_slice(&z);
    let scale = zv.dot(&(&a * &zv)) * lmax.powi(two_ell as i32);
    Ok(Outcome {
        value: -(lo.min(hi)) / scale,
        detail: format!("n={n} 2ell={two_ell} lo={lo:e} hi={hi:e}"),
    })
}

/// `α_k ∈ [1/λ1, 1/λn]` along a short trajectory.
fn step_size_case(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed);
    let (n, lmax) = random_shape(&mut r);
    let two_ell = r.random_range(0..=6);
    let p = random_spd(n, 1.0, lmax, seed)?;
    let op = p.operator.fork();
    let mut s = SolverState::new(&op, &p.b, &p.x0, Ell::from_two_ell(two_ell))?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let Some(alpha) = s.step_size()? else { break };
        let excess = ((1.0 / lmax - alpha) * lmax).max((alpha - 1.0) / 1.0);
        worst = worst.max(excess);
        s.step(&op, 1.0)?;
    }
    Ok(Outcome {
        value: worst,
        detail: format!("n={n} kappa={lmax:.3e} 2ell={two_ell}"),
    })
}

const OMEGAS: [f64; 4] = [0.5, 0.95, 1.0, 1.5];

/// Spectrum bound for the recursion suite. The cached powers drift by
/// roughly `eps·κ^{2ℓ+1}` relative to their size, so 1e-8 over 50 steps
/// with `2ℓ ≤ 6` needs a well-conditioned instance.
pub const RECURSION_KAPPA_MAX: f64 = 2.0;

fn recursion_case(seed: u64, inject: bool) -> Result<Outcome> {
    let mut r = rng(seed);
    let n = r.random_range(2..=20);
    let kappa = 1.0 + (RECURSION_KAPPA_MAX - 1.0) * r.random::<f64>();
    let two_ell = r.random_range(0..=6);
    let omega = OMEGAS[r.random_range(0..OMEGAS.len())];
    let p = random_spd(n, 1.0, kappa, seed)?;
    let a = p.operator.to_dense();
    let op = p.operator.fork();
    let mut s = SolverState::new(&op, &p.b, &p.x0, Ell::from_two_ell(two_ell))?;
    let mut worst = oracle_compare(&s, &a, &p.b)?;
    for k in 0..50 {
        if s.step_size()?.is_none() {
            break;
        }
        s.step(&op, omega)?;
        if inject && k == 0 {
            s.v_mut()[1][0] += 1e-3;
        }
        worst = worst.max(oracle_compare(&s, &a, &p.b)?);
    }
    Ok(Outcome {
        value: worst,
        detail: format!("n={n} kappa={kappa:.2} 2ell={two_ell} omega={omega}"),
    })
}

fn one_matvec_case(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed);
    let n = r.random_range(2..=30);
    let two_ell = r.random_range(0..=6);
    let ell = Ell::from_two_ell(two_ell);
    let p = random_spd(n, 1.0, 50.0, seed)?;
    let op = p.operator.fork();
    let mut s = SolverState::new(&op, &p.b, &p.x0, ell)?;
    let mut steps = 0u64;
    for _ in 0..20 {
        if s.step_size()?.is_none() {
            break;
        }
        s.step(&op, 1.0)?;
        steps += 1;
    }
    let expected = ell.num_vectors() as u64 + steps;
    let got = op.counters().algorithmic;
    Ok(Outcome {
        value: got.abs_diff(expected) as f64,
        detail: format!("n={n} 2ell={two_ell} matvecs={got} expected={expected}"),
    })
}

/// Weighted gradient norm within `c(ω)^k` of its start, and the per-step
/// conjugacy and contraction identities.
fn contraction_case(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed);
    let n = r.random_range(2..=20);
    let kappa = 1.0 + 99.0 * r.random::<f64>();
    // same ℓ range as the convergence acceptance runs; higher orders drift
    // past 1e-8 near convergence once κ approaches 100
    let two_ell = r.random_range(0..=3);
    let omega = OMEGAS[r.random_range(0..OMEGAS.len())];
    // b = 0 puts x* at the origin: the iteration is translation invariant,
    // and 2(f - f*) for ℓ = 0 then carries no cancellation
    let (a, bounds) = random_spd_matrix(n, 1.0, kappa, &mut r)?;
    let op = SpdOperator::dense(a)?;
    let b = vec![0.0; n];
    let fstar = Some(0.0);
    let x0 = random_nonzero(&mut r, n);
    let c = contraction_factor(omega, &bounds)?;
    let mut s = SolverState::new(&op, &b, &x0, Ell::from_two_ell(two_ell))?;
    let w0 = weighted_gnorm_sq(&s, &b, fstar).expect("f* known");
    let mut worst: f64 = 0.0;
    for k in 1..=40 {
        if s.gnorm_sq() <= 1e-8 || s.step_size()?.is_none() {
            break;
        }
        let prev = s.clone();
        s.step(&op, omega)?;
        let w = weighted_gnorm_sq(&s, &b, fstar).expect("f* known");
        worst = worst.max(w / (c.powi(k) * w0) - 1.0 - 1e-10);
        if let Some(rep) = identity_checks(&prev, &s, &b, fstar) {
            worst = worst.max(rep.conjugacy);
            worst = worst.max(rep.contraction.unwrap_or(0.0));
        }
    }
    Ok(Outcome {
        value: worst,
        detail: format!("n={n} kappa={kappa:.2} 2ell={two_ell} omega={omega}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes() {
        let report = run_verify(&VerifyOptions {
            trials: 30,
            ..Default::default()
        })
        .unwrap();
        for c in &report.checks {
            assert!(c.passed, "{}: {:?}", c.suite, c.failures);
        }
        assert!(report.passed);
    }

    #[test]
    fn injected_drift_is_caught() {
        let opts = VerifyOptions {
            suites: vec![Suite::Recursion],
            trials: 10,
            seed: 0,
            inject_drift: true,
        };
        let report = run_verify(&opts).unwrap();
        assert!(!report.passed);
        assert!(report.checks[0].violations > 0);
        assert!(!report.checks[0].failures.is_empty());
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), s);
        }
        assert_eq!(Suite::parse("rayleigh-ratio").unwrap(), Suite::RayleighRatio);
        assert!(Suite::parse("nope").is_err());
    }
}
