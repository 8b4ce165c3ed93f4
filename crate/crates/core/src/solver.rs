//! Relaxed ℓ-minimal gradient descent with one operator application per
//! iteration.
//!
//! The state caches `v[j] = A^j g_k` for `j = 0..=⌊ℓ⌋+1`. The step size is a
//! ratio of inner products of those vectors, and after a step of length
//! `ω_k α_k` every cached vector except the last follows from
//! `v[j] ← v[j] − ω_k α_k v[j+1]`; the last one is recomputed as
//! `A·v[⌊ℓ⌋]`. Half-integer powers of `A` never appear.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{fvalue, weighted_gnorm_sq, Trace, TraceRecord};
use crate::error::{check_dim, Error, Result};
use crate::operators::{Charge, MatvecCounters, SpdOperator};
use crate::vector::{axpy, dot, norm_sq};

/// The family parameter ℓ ∈ {0, ½, 1, 3/2, …}, stored as the integer 2ℓ.
/// Serializes as the number ℓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Ell(u32);

impl Ell {
    pub const STEEPEST_DESCENT: Ell = Ell(0);
    pub const MINIMAL_GRADIENT: Ell = Ell(1);

    pub const fn from_two_ell(two_ell: u32) -> Self {
        Ell(two_ell)
    }

    pub const fn two_ell(self) -> u32 {
        self.0
    }

    /// `⌊ℓ⌋`
    pub const fn floor(self) -> usize {
        (self.0 / 2) as usize
    }

    /// `⌊ℓ + ½⌋`
    pub const fn floor_plus_half(self) -> usize {
        self.0.div_ceil(2) as usize
    }

    /// `⌊ℓ + 1⌋`
    pub const fn floor_plus_one(self) -> usize {
        self.floor() + 1
    }

    /// Number of cached vectors, `⌊ℓ⌋ + 2`; also the matvec cost of
    /// initialization and of every restart.
    pub const fn num_vectors(self) -> usize {
        self.floor() + 2
    }

    pub const fn is_integer(self) -> bool {
        self.0.is_multiple_of(2)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Parses `"0"`, `"0.5"`, `"1/2"`, `"5/2"`, `"3"` and similar.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let value = if let Some((num, den)) = s.split_once('/') {
            let num: f64 = num
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad ell '{s}'")))?;
            let den: f64 = den
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad ell '{s}'")))?;
            num / den
        } else {
            s.parse().map_err(|_| Error::invalid(format!("bad ell '{s}'")))?
        };
        let twice = 2.0 * value;
        if !(twice >= 0.0) || twice.fract() != 0.0 || twice > u32::MAX as f64 {
            return Err(Error::invalid(format!(
                "ell must be a non-negative multiple of 1/2, got '{s}'"
            )));
        }
        Ok(Ell(twice as u32))
    }
}

impl From<Ell> for f64 {
    fn from(e: Ell) -> f64 {
        e.value()
    }
}

impl TryFrom<f64> for Ell {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Ell::parse(&value.to_string())
    }
}

impl fmt::Display for Ell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RelaxationMode {
    Fixed {
        omega: f64,
    },
    /// `ω_k` drawn uniformly from the open interval (0, 2) each iteration.
    RandomUniform {
        seed: u64,
    },
}

impl RelaxationMode {
    pub fn fixed(omega: f64) -> Self {
        RelaxationMode::Fixed { omega }
    }

    pub fn label(&self) -> String {
        match self {
            RelaxationMode::Fixed { omega } => format!("{omega}"),
            RelaxationMode::RandomUniform { .. } => "random".to_string(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RelaxationMode::Fixed { omega } if !(omega > 0.0 && omega < 2.0) => {
                Err(Error::invalid(format!("relaxation must lie in (0, 2), got {omega}")))
            }
            _ => Ok(()),
        }
    }
}

/// Produces the relaxation sequence `ω_0, ω_1, …`.
#[derive(Debug, Clone)]
pub struct OmegaSchedule {
    mode: RelaxationMode,
    rng: Option<ChaCha8Rng>,
}

impl OmegaSchedule {
    pub fn new(mode: RelaxationMode) -> Self {
        let rng = match mode {
            RelaxationMode::RandomUniform { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            RelaxationMode::Fixed { .. } => None,
        };
        Self { mode, rng }
    }

    pub fn next_omega(&mut self) -> f64 {
        match (&self.mode, self.rng.as_mut()) {
            (RelaxationMode::Fixed { omega }, _) => *omega,
            (RelaxationMode::RandomUniform { .. }, Some(rng)) => loop {
                // [0, 1) scaled to [0, 2); the endpoint 0 is rejected
                let w = 2.0 * rng.random::<f64>();
                if w > 0.0 {
                    break w;
                }
            },
            (RelaxationMode::RandomUniform { .. }, None) => unreachable!("random mode always owns an rng"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub ell: Ell,
    pub relaxation: RelaxationMode,
    /// Stop once `‖g_k‖₂² ≤ tol_gnorm_sq`.
    pub tol_gnorm_sq: f64,
    pub max_iter: usize,
    /// Recompute all cached vectors from scratch every `q` iterations.
    #[serde(default)]
    pub restart_period: Option<usize>,
    /// Record every `trace_stride`-th iteration (the final one is always kept).
    #[serde(default = "default_stride")]
    pub trace_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl SolverConfig {
    pub fn new(ell: Ell, relaxation: RelaxationMode, tol_gnorm_sq: f64, max_iter: usize) -> Self {
        Self {
            ell,
            relaxation,
            tol_gnorm_sq,
            max_iter,
            restart_period: None,
            trace_stride: 1,
        }
    }

    pub fn with_restart(mut self, q: usize) -> Self {
        self.restart_period = Some(q);
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.trace_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_gnorm_sq > 0.0) {
            return Err(Error::invalid(format!(
                "tolerance must be positive, got {}",
                self.tol_gnorm_sq
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if self.restart_period == Some(0) {
            return Err(Error::invalid("restart period must be at least 1"));
        }
        if self.trace_stride == 0 {
            return Err(Error::invalid("trace stride must be at least 1"));
        }
        self.relaxation.validate()
    }
}

/// Iterate `x_k` plus the cached vectors `v[j] = A^j g_k`.
#[derive(Debug, Clone)]
pub struct SolverState {
    ell: Ell,
    x: Vec<f64>,
    v: Vec<Vec<f64>>,
    k: usize,
    last_alpha: Option<f64>,
    last_omega: Option<f64>,
}

impl SolverState {
    /// Computes `g_0 = A x_0 − b` and its powers: `⌊ℓ⌋+2` algorithmic matvecs.
    pub fn new(op: &SpdOperator, b: &[f64], x0: &[f64], ell: Ell) -> Result<Self> {
        check_dim(op.dim(), b.len())?;
        check_dim(op.dim(), x0.len())?;
        let mut state = Self {
            ell,
            x: x0.to_vec(),
            v: Vec::with_capacity(ell.num_vectors()),
            k: 0,
            last_alpha: None,
            last_omega: None,
        };
        state.recompute(op, b)?;
        Ok(state)
    }

    fn recompute(&mut self, op: &SpdOperator, b: &[f64]) -> Result<()> {
        let mut g = op.apply(&self.x, Charge::Algorithmic)?;
        for (gi, bi) in g.iter_mut().zip(b) {
            *gi -= bi;
        }
        self.v.clear();
        self.v.push(g);
        for j in 1..self.ell.num_vectors() {
            let next = op.apply(&self.v[j - 1], Charge::Algorithmic)?;
            self.v.push(next);
        }
        Ok(())
    }

    pub fn ell(&self) -> Ell {
        self.ell
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn gradient(&self) -> &[f64] {
        &self.v[0]
    }

    pub fn v(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Mutable access to the cached vectors, for fault injection in tests
    /// and diagnostics.
    pub fn v_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.v
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn last_alpha(&self) -> Option<f64> {
        self.last_alpha
    }

    pub fn last_omega(&self) -> Option<f64> {
        self.last_omega
    }

    pub fn gnorm_sq(&self) -> f64 {
        norm_sq(&self.v[0])
    }

    /// `‖y_k‖₂² = g_kᵀA^{2ℓ}g_k`.
    pub fn y_norm_sq(&self) -> f64 {
        dot(&self.v[self.ell.floor()], &self.v[self.ell.floor_plus_half()])
    }

    /// `‖y_k‖²_A = g_kᵀA^{2ℓ+1}g_k`.
    pub fn y_a_norm_sq(&self) -> f64 {
        dot(&self.v[self.ell.floor_plus_half()], &self.v[self.ell.floor_plus_one()])
    }

    /// `‖g_k‖²_{A^{2ℓ−1}}` from the cached vectors; `None` for ℓ = 0, where
    /// it needs `A⁻¹`.
    pub fn stored_weighted_gnorm_sq(&self) -> Option<f64> {
        let two_ell = self.ell.two_ell();
        if two_ell == 0 {
            None
        } else if self.ell.is_integer() {
            let m = self.ell.floor();
            Some(dot(&self.v[m - 1], &self.v[m]))
        } else {
            Some(norm_sq(&self.v[self.ell.floor()]))
        }
    }

    /// `α_k = ‖y_k‖₂² / ‖y_k‖²_A`. `Ok(None)` when the gradient is exactly
    /// zero.
    pub fn step_size(&self) -> Result<Option<f64>> {
        if self.v[0].iter().all(|&g| g == 0.0) {
            return Ok(None);
        }
        let num = self.y_norm_sq();
        let den = self.y_a_norm_sq();
        if !(den > 0.0 && den.is_finite()) || !(num > 0.0 && num.is_finite()) {
            return Err(Error::NumericalBreakdown {
                iteration: self.k,
                reason: format!("step-size ratio {num} / {den} is not positive and finite"),
            });
        }
        Ok(Some(num / den))
    }

    /// One relaxed step. Costs exactly one algorithmic matvec, or none when
    /// the gradient is already zero.
    pub fn step(&mut self, op: &SpdOperator, omega: f64) -> Result<()> {
        if !(omega > 0.0 && omega < 2.0) {
            return Err(Error::invalid(format!("relaxation must lie in (0, 2), got {omega}")));
        }
        match self.step_size()? {
            Some(alpha) => self.advance(op, alpha, omega),
            None => Ok(()),
        }
    }

    fn advance(&mut self, op: &SpdOperator, alpha: f64, omega: f64) -> Result<()> {
        let t = omega * alpha;
        axpy(-t, &self.v[0], &mut self.x);
        let top = self.ell.floor_plus_one();
        for j in 0..top {
            let (lo, hi) = self.v.split_at_mut(j + 1);
            axpy(-t, &hi[0], &mut lo[j]);
        }
        let (lo, hi) = self.v.split_at_mut(top);
        op.apply_into(&lo[top - 1], &mut hi[0], Charge::Algorithmic)?;
        self.k += 1;
        self.last_alpha = Some(alpha);
        self.last_omega = Some(omega);
        Ok(())
    }

    /// Recomputes `g_k = A x_k − b` and every cached power from scratch
    /// (`⌊ℓ⌋+2` algorithmic matvecs). `k` is unchanged.
    pub fn restart(&mut self, op: &SpdOperator, b: &[f64]) -> Result<()> {
        check_dim(op.dim(), b.len())?;
        self.recompute(op, b)
    }
}

pub fn init_state(op: &SpdOperator, b: &[f64], x0: &[f64], config: &SolverConfig) -> Result<SolverState> {
    SolverState::new(op, b, x0, config.ell)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterReached,
    NumericalBreakdown,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub iterations: usize,
    pub restarts: usize,
    pub x_final: Vec<f64>,
    pub gnorm_sq_final: f64,
    /// Matvecs charged during this solve.
    pub matvecs: MatvecCounters,
    pub trace: Trace,
    pub breakdown: Option<String>,
}

impl SolveResult {
    /// `(⌊ℓ⌋+2)·(1 + restarts) + iterations`.
    pub fn expected_algorithmic_matvecs(&self) -> u64 {
        let per = self.trace.config.ell.num_vectors() as u64;
        per * (1 + self.restarts as u64) + self.iterations as u64
    }
}

pub fn solve(op: &SpdOperator, b: &[f64], x0: &[f64], config: &SolverConfig) -> Result<SolveResult> {
    solve_with_reference(op, b, x0, config, None, "")
}

/// [`solve`] with an optional known optimal value `f*`, used for the
/// `fgap` trace column and for the ℓ = 0 weighted gradient norm.
pub fn solve_with_reference(
    op: &SpdOperator,
    b: &[f64],
    x0: &[f64],
    config: &SolverConfig,
    fstar: Option<f64>,
    label: &str,
) -> Result<SolveResult> {
    config.validate()?;
    let start = op.counters();
    let mut state = init_state(op, b, x0, config)?;
    let mut omegas = OmegaSchedule::new(config.relaxation);
    let mut trace = Trace::new(label, config.clone());
    let mut restarts = 0usize;
    let mut breakdown = None;

    let record = |state: &SolverState, alpha: Option<f64>, omega: Option<f64>| {
        let now = op.counters();
        let fval = fvalue(state.x(), state.gradient(), b);
        TraceRecord {
            k: state.k(),
            fval,
            fgap: fstar.map(|fs| fval - fs),
            gnorm2_sq: state.gnorm_sq(),
            gnorm_w_sq: weighted_gnorm_sq(state, b, fstar),
            alpha,
            omega,
            matvecs_alg: now.algorithmic - start.algorithmic,
            matvecs_diag: now.diagnostic - start.diagnostic,
        }
    };

    let status = loop {
        let k = state.k();
        if let Some(q) = config.restart_period {
            if k > 0 && k % q == 0 && k < config.max_iter {
                state.restart(op, b)?;
                restarts += 1;
            }
        }
        if state.gnorm_sq() <= config.tol_gnorm_sq {
            trace.push(record(&state, None, None));
            break SolveStatus::Converged;
        }
        if k >= config.max_iter {
            trace.push(record(&state, None, None));
            break SolveStatus::MaxIterReached;
        }
        let alpha = match state.step_size() {
            Ok(Some(alpha)) => alpha,
            Ok(None) => {
                trace.push(record(&state, None, None));
                break SolveStatus::Converged;
            }
            Err(Error::NumericalBreakdown { reason, .. }) => {
                trace.push(record(&state, None, None));
                breakdown = Some(reason);
                break SolveStatus::NumericalBreakdown;
            }
            Err(e) => return Err(e),
        };
        let omega = omegas.next_omega();
        if k % config.trace_stride == 0 {
            trace.push(record(&state, Some(alpha), Some(omega)));
        }
        state.advance(op, alpha, omega)?;
    };

    let end = op.counters();
    Ok(SolveResult {
        status,
        iterations: state.k(),
        restarts,
        gnorm_sq_final: state.gnorm_sq(),
        x_final: state.x,
        matvecs: MatvecCounters {
            algorithmic: end.algorithmic - start.algorithmic,
            diagnostic: end.diagnostic - start.diagnostic,
        },
        trace,
        breakdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::fletcher_counterexample;

    fn fletcher_op() -> SpdOperator {
        SpdOperator::diagonal(vec![20.0, 2.0]).unwrap()
    }

    #[test]
    fn ell_index_arithmetic() {
        let e = Ell::from_two_ell(5);
        assert_eq!(
            (e.floor(), e.floor_plus_half(), e.floor_plus_one(), e.num_vectors()),
            (2, 3, 3, 4)
        );
        let e = Ell::from_two_ell(4);
        assert_eq!(
            (e.floor(), e.floor_plus_half(), e.floor_plus_one(), e.num_vectors()),
            (2, 2, 3, 4)
        );
        assert_eq!(Ell::parse("5/2").unwrap(), Ell::from_two_ell(5));
        assert_eq!(Ell::parse("0.5").unwrap(), Ell::MINIMAL_GRADIENT);
        assert_eq!(Ell::parse("3").unwrap().two_ell(), 6);
        assert!(Ell::parse("0.3").is_err());
        assert!(Ell::parse("-1").is_err());
        assert_eq!(Ell::from_two_ell(3).to_string(), "1.5");
        assert_eq!(Ell::from_two_ell(4).to_string(), "2");
        assert_eq!(serde_json::to_string(&Ell::from_two_ell(3)).unwrap(), "1.5");
        assert_eq!(serde_json::from_str::<Ell>("2.5").unwrap(), Ell::from_two_ell(5));
        assert!(serde_json::from_str::<Ell>("0.7").is_err());
    }

    #[test]
    fn init_fletcher_sd() {
        let op = fletcher_op();
        let s = SolverState::new(&op, &[0.0, 0.0], &[0.1, 1.0], Ell::STEEPEST_DESCENT).unwrap();
        assert_eq!(s.v(), &[vec![2.0, 2.0], vec![40.0, 4.0]]);
        assert_eq!(op.counters().algorithmic, 2);
        assert_eq!(s.k(), 0);
    }

    #[test]
    fn init_five_halves_stores_four_vectors() {
        let op = SpdOperator::diagonal(vec![3.0, 1.0, 2.0]).unwrap();
        let s = SolverState::new(&op, &[1.0, 0.0, 0.0], &[1.0, 1.0, 1.0], Ell::from_two_ell(5)).unwrap();
        assert_eq!(s.v().len(), 4);
        assert_eq!(op.counters().algorithmic, 4);
        assert_eq!(s.v()[3], vec![2.0 * 27.0, 1.0, 2.0 * 8.0]);
    }

    #[test]
    fn init_with_two_ell_two_costs_three() {
        let op = SpdOperator::identity(10).unwrap();
        SolverState::new(&op, &[0.0; 10], &[1.0; 10], Ell::from_two_ell(2)).unwrap();
        assert_eq!(op.counters().algorithmic, 3);
    }

    #[test]
    fn step_size_examples() {
        let op = fletcher_op();
        let sd = SolverState::new(&op, &[0.0, 0.0], &[0.1, 1.0], Ell::STEEPEST_DESCENT).unwrap();
        assert!((sd.step_size().unwrap().unwrap() - 1.0 / 11.0).abs() < 1e-16);
        let mg = SolverState::new(&op, &[0.0, 0.0], &[0.1, 1.0], Ell::MINIMAL_GRADIENT).unwrap();
        assert!((mg.step_size().unwrap().unwrap() - 88.0 / 1616.0).abs() < 1e-16);
        let id = SpdOperator::identity(3).unwrap();
        for t in 0..6 {
            let s = SolverState::new(&id, &[0.5, 0.0, 1.0], &[1.0, -2.0, 3.0], Ell::from_two_ell(t)).unwrap();
            assert_eq!(s.step_size().unwrap(), Some(1.0));
        }
    }

    #[test]
    fn zero_gradient_is_a_signal_not_an_error() {
        let op = fletcher_op();
        let mut s = SolverState::new(&op, &[0.0, 0.0], &[0.0, 0.0], Ell::MINIMAL_GRADIENT).unwrap();
        assert_eq!(s.step_size().unwrap(), None);
        let before = op.counters();
        s.step(&op, 1.3).unwrap();
        assert_eq!(s.x(), &[0.0, 0.0]);
        assert_eq!(op.counters(), before);
    }

    #[test]
    fn first_sd_step_on_fletcher() {
        let op = fletcher_op();
        let mut s = SolverState::new(&op, &[0.0, 0.0], &[0.1, 1.0], Ell::STEEPEST_DESCENT).unwrap();
        s.step(&op, 1.0).unwrap();
        assert!((s.x()[0] + 0.9 / 11.0).abs() < 1e-15);
        assert!((s.x()[1] - 9.0 / 11.0).abs() < 1e-15);
        let f = fvalue(s.x(), s.gradient(), &[0.0, 0.0]);
        assert!((f - 0.7364).abs() < 5e-5);
        assert_eq!(op.counters().algorithmic, 3);
        assert_eq!(s.last_alpha(), Some(1.0 / 11.0));
    }

    #[test]
    fn five_halves_step_keeps_powers() {
        let op = SpdOperator::diagonal(vec![1.5, 0.5, 1.0, 2.0]).unwrap();
        let mut s = SolverState::new(&op, &[0.0; 4], &[1.0, 1.0, 1.0, 1.0], Ell::from_two_ell(5)).unwrap();
        s.step(&op, 1.0).unwrap();
        assert_eq!(op.counters().algorithmic, 5);
        let d: [f64; 4] = [1.5, 0.5, 1.0, 2.0];
        for j in 0..4 {
            for (i, di) in d.iter().enumerate() {
                let expect = di.powi(j as i32) * s.gradient()[i];
                assert!((s.v()[j][i] - expect).abs() < 1e-14 * (1.0 + expect.abs()));
            }
        }
    }

    #[test]
    fn rejects_bad_relaxation_and_dimensions() {
        let op = fletcher_op();
        let mut s = SolverState::new(&op, &[0.0, 0.0], &[0.1, 1.0], Ell::STEEPEST_DESCENT).unwrap();
        assert!(s.step(&op, 2.0).is_err());
        assert!(SolverState::new(&op, &[0.0], &[0.1, 1.0], Ell::STEEPEST_DESCENT).is_err());
        let cfg = SolverConfig::new(Ell::STEEPEST_DESCENT, RelaxationMode::fixed(0.0), 1e-8, 10);
        assert!(solve(&op, &[0.0, 0.0], &[1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn non_spd_operator_breaks_down() {
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let op = SpdOperator::dense(a).unwrap();
        let cfg = SolverConfig::new(Ell::MINIMAL_GRADIENT, RelaxationMode::fixed(1.0), 1e-12, 10);
        let r = solve(&op, &[0.0, 0.0], &[1.0, 1.0], &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::NumericalBreakdown);
        assert!(r.breakdown.is_some());
    }

    #[test]
    fn restart_recomputes_and_charges() {
        let op = fletcher_op();
        let mut s = SolverState::new(&op, &[0.0, 0.0], &[0.1, 1.0], Ell::from_two_ell(2)).unwrap();
        let fresh = s.clone();
        s.restart(&op, &[0.0, 0.0]).unwrap();
        assert_eq!(s.v(), fresh.v());
        assert_eq!(op.counters().algorithmic, 6);

        s.step(&op, 1.0).unwrap();
        s.v_mut()[1][0] += 1e-3;
        s.restart(&op, &[0.0, 0.0]).unwrap();
        assert_eq!(s.v()[1][0], 20.0 * s.gradient()[0]);
        assert_eq!(s.k(), 1);
    }

    #[test]
    fn solve_table_values() {
        let p = fletcher_counterexample();
        for (two_ell, f1, f2) in [(0, 0.7364, 0.4929), (1, 0.7948, 0.1769), (2, 0.8084, 0.0060)] {
            let cfg = SolverConfig::new(Ell::from_two_ell(two_ell), RelaxationMode::fixed(1.0), 1e-30, 2);
            let r = p.solve(&cfg).unwrap();
            let f: Vec<f64> = r.trace.records.iter().map(|t| t.fval).collect();
            assert_eq!(f.len(), 3);
            assert!((f[0] - 1.1).abs() < 1e-14);
            assert!((f[1] - f1).abs() < 5e-5, "{two_ell}: {f:?}");
            assert!((f[2] - f2).abs() < 5e-5, "{two_ell}: {f:?}");
            assert_eq!(r.status, SolveStatus::MaxIterReached);
        }
    }

    #[test]
    fn identity_converges_in_one_step() {
        let op = SpdOperator::identity(4).unwrap();
        for t in 0..5 {
            let cfg = SolverConfig::new(Ell::from_two_ell(t), RelaxationMode::fixed(1.0), 1e-20, 10);
            let r = solve(&op, &[0.0; 4], &[1.0, -2.0, 0.5, 3.0], &cfg).unwrap();
            assert_eq!(r.status, SolveStatus::Converged);
            assert_eq!(r.iterations, 1);
            assert_eq!(r.x_final, vec![0.0; 4]);
        }
    }

    #[test]
    fn start_at_optimum_costs_no_step() {
        let op = fletcher_op();
        let cfg = SolverConfig::new(Ell::from_two_ell(3), RelaxationMode::fixed(0.9), 1e-10, 10);
        let r = solve(&op, &[2.0, 4.0], &[0.1, 2.0], &cfg).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.matvecs.algorithmic, 3);
        assert_eq!(r.trace.records.len(), 1);
    }

    #[test]
    fn random_relaxation_stays_open_and_reproducible() {
        let mut a = OmegaSchedule::new(RelaxationMode::RandomUniform { seed: 9 });
        let mut b = OmegaSchedule::new(RelaxationMode::RandomUniform { seed: 9 });
        for _ in 0..10_000 {
            let w = a.next_omega();
            assert!(w > 0.0 && w < 2.0);
            assert_eq!(w, b.next_omega());
        }
    }

    #[test]
    fn matvec_formula_with_restarts() {
        let op = SpdOperator::diagonal((1..=30).map(f64::from).collect()).unwrap();
        let cfg = SolverConfig::new(Ell::from_two_ell(3), RelaxationMode::fixed(0.95), 1e-300, 57).with_restart(10);
        let r = solve(&op, &[1.0; 30], &[0.0; 30], &cfg).unwrap();
        assert_eq!(r.iterations, 57);
        assert_eq!(r.restarts, 5);
        assert_eq!(r.matvecs.algorithmic, r.expected_algorithmic_matvecs());
        assert_eq!(r.matvecs.algorithmic, 3 * 6 + 57);
    }
}
