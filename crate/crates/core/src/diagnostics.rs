//! Per-iteration telemetry and the checks that compare solver state against
//! explicit dense computations.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::solver::{SolverConfig, SolverState};
use crate::theory::{power_form, pronzato_lk};
use crate::vector::dot;

/// One row of a convergence trace. `alpha`/`omega` describe the step taken
/// *from* `x_k` and are absent on the terminal record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub fval: f64,
    pub fgap: Option<f64>,
    pub gnorm2_sq: f64,
    pub gnorm_w_sq: Option<f64>,
    pub alpha: Option<f64>,
    pub omega: Option<f64>,
    pub matvecs_alg: u64,
    pub matvecs_diag: u64,
}

pub const TRACE_HEADER: &str = "k,fval,fgap,gnorm2_sq,gnorm_w_sq,alpha,omega,matvecs_alg,matvecs_diag";

#[derive(Debug, Clone)]
pub struct Trace {
    pub label: String,
    pub config: SolverConfig,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(label: &str, config: SolverConfig) -> Self {
        Self {
            label: label.to_string(),
            config,
            records: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, record: TraceRecord) {
        // the terminal record can coincide with a strided one
        if let Some(last) = self.records.last_mut() {
            if last.k == record.k {
                *last = record;
                return;
            }
        }
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Writes the trace as CSV with [`TRACE_HEADER`]. Floats use the shortest
    /// representation that round-trips; absent optionals are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r)?;
        }
        if self.records.is_empty() {
            w.write_record(TRACE_HEADER.split(','))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// `f(x) = ½ xᵀ(g − b)` with `g = Ax − b`; costs no matvec.
pub fn fvalue(x: &[f64], g: &[f64], b: &[f64]) -> f64 {
    0.5 * x.iter().zip(g).zip(b).map(|((xi, gi), bi)| xi * (gi - bi)).sum::<f64>()
}

/// `‖g_k‖²_{A^{2ℓ−1}}` from the cached vectors, or `2(f(x_k) − f*)` for
/// ℓ = 0 when `f*` is known.
pub fn weighted_gnorm_sq(state: &SolverState, b: &[f64], fstar: Option<f64>) -> Option<f64> {
    state
        .stored_weighted_gnorm_sq()
        .or_else(|| fstar.map(|fs| 2.0 * (fvalue(state.x(), state.gradient(), b) - fs)))
}

/// `(x − x*)ᵀA^{2ℓ+1}(x − x*)` by explicit powering.
pub fn distance_norm_sq(x: &[f64], xstar: &[f64], a: &DMatrix<f64>, two_ell: u32) -> Result<f64> {
    check_dim(a.nrows(), x.len())?;
    check_dim(a.nrows(), xstar.len())?;
    let d = crate::vector::sub(x, xstar);
    Ok(power_form(a, &d, two_ell + 1))
}

/// `max_j ‖v[j] − A^j(Ax − b)‖ / (1 + ‖A^j(Ax − b)‖)` against an explicit
/// dense `A`.
pub fn oracle_compare(state: &SolverState, a: &DMatrix<f64>, b: &[f64]) -> Result<f64> {
    check_dim(a.nrows(), state.x().len())?;
    check_dim(a.nrows(), b.len())?;
    let mut p = a * DVector::from_column_slice(state.x()) - DVector::from_column_slice(b);
    let mut worst = 0.0f64;
    for v in state.v() {
        let err = (DVector::from_column_slice(v) - &p).norm();
        worst = worst.max(err / (1.0 + p.norm()));
        p = a * p;
    }
    Ok(worst)
}

/// Residuals of the per-step identities between consecutive states.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityReport {
    pub k: usize,
    pub omega: f64,
    /// `|y_{k+1}ᵀy_k − (1−ω)‖y_k‖²| / (‖y_k‖(‖y_{k+1}‖ + ‖y_k‖))`.
    pub conjugacy: f64,
    /// Relative error of
    /// `‖g_{k+1}‖²_W = (1 − ω(2−ω)‖y_k‖⁴/(‖y_k‖²_A‖y_k‖²_{A⁻¹}))‖g_k‖²_W`,
    /// `W = A^{2ℓ−1}`; absent when the weighted norm is unavailable.
    pub contraction: Option<f64>,
    /// For ω = 1, relative error of the ratio against `1 − 1/L_k`.
    pub pronzato: Option<f64>,
    /// Observed `‖g_{k+1}‖²_W / ‖g_k‖²_W`.
    pub ratio: Option<f64>,
}

/// Compares `prev` (at `x_k`) with `next` (at `x_{k+1}`). `b` and `f*` are
/// only needed for ℓ = 0.
pub fn identity_checks(
    prev: &SolverState,
    next: &SolverState,
    b: &[f64],
    fstar: Option<f64>,
) -> Option<IdentityReport> {
    let omega = next.last_omega()?;
    let ell = prev.ell();
    let m = ell.floor();
    let cross = if ell.is_integer() {
        dot(&next.v()[m], &prev.v()[m])
    } else {
        dot(&next.v()[m], &prev.v()[m + 1])
    };
    let y2 = prev.y_norm_sq();
    let y2_next = next.y_norm_sq();
    let scale = y2.sqrt() * (y2_next.max(0.0).sqrt() + y2.sqrt());
    let conjugacy = (cross - (1.0 - omega) * y2).abs() / scale;

    let (contraction, pronzato, ratio) = match (weighted_gnorm_sq(prev, b, fstar), weighted_gnorm_sq(next, b, fstar)) {
        (Some(w), Some(w_next)) if w > 0.0 => {
            let y_a = prev.y_a_norm_sq();
            let predicted = (1.0 - omega * (2.0 - omega) * y2 * y2 / (y_a * w)) * w;
            let pron = (omega == 1.0).then(|| {
                let l = pronzato_lk(y2, y_a, w);
                (w_next / w - (1.0 - 1.0 / l)).abs()
            });
            (Some((w_next - predicted).abs() / w), pron, Some(w_next / w))
        }
        _ => (None, None, None),
    };
    Some(IdentityReport {
        k: prev.k(),
        omega,
        conjugacy,
        contraction,
        pronzato,
        ratio,
    })
}

/// `‖g‖²_{A^p}` for an explicit dense `A`.
pub fn dense_power_norm_sq(a: &DMatrix<f64>, g: &[f64], p: u32) -> f64 {
    power_form(a, g, p)
}

/// `½ xᵀAx − xᵀb` evaluated explicitly.
pub fn dense_fvalue(a: &DMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    0.5 * xv.dot(&(a * &xv)) - dot(x, b)
}
