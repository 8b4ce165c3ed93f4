//! Matrix-free symmetric positive definite operators.
//!
//! Every application of an operator is charged to one of two counters so the
//! cost of the solver itself can be asserted exactly, independent of any
//! instrumentation that also touches the operator.

mod csr;
mod gram;
pub mod matrix_market;
mod spectral;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVectorView, DVectorViewMut};
use serde::Serialize;

pub use csr::CsrMatrix;
pub use gram::{GramPlusRidge, RectMatrix};
pub use spectral::{extreme_eigen_estimate, EigenEstimate};

use crate::error::{check_dim, Error, Result};

/// Which counter an application is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Charge {
    Algorithmic,
    Diagnostic,
}

/// Snapshot of the matvec counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatvecCounters {
    pub algorithmic: u64,
    pub diagnostic: u64,
}

#[derive(Debug, Default)]
struct Counters {
    algorithmic: AtomicU64,
    diagnostic: AtomicU64,
}

impl Counters {
    fn bump(&self, charge: Charge) {
        let c = match charge {
            Charge::Algorithmic => &self.algorithmic,
            Charge::Diagnostic => &self.diagnostic,
        };
        c.fetch_add(1, Ordering::Relaxed);
    }

    fn snapshot(&self) -> MatvecCounters {
        MatvecCounters {
            algorithmic: self.algorithmic.load(Ordering::Relaxed),
            diagnostic: self.diagnostic.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug)]
pub enum Backend {
    DenseSymmetric(DMatrix<f64>),
    Diagonal(Vec<f64>),
    /// Both triangles stored.
    SparseSymmetricCsr(CsrMatrix),
    GramPlusRidge(GramPlusRidge),
}

impl Backend {
    fn name(&self) -> &'static str {
        match self {
            Backend::DenseSymmetric(_) => "dense",
            Backend::Diagonal(_) => "diagonal",
            Backend::SparseSymmetricCsr(_) => "sparse-csr",
            Backend::GramPlusRidge(_) => "gram-plus-ridge",
        }
    }
}

/// A symmetric positive definite linear map `A` with matvec accounting.
///
/// The matrix data is shared behind an `Arc`; [`SpdOperator::fork`] hands out
/// a handle onto the same data with fresh counters for an independent run.
#[derive(Debug)]
pub struct SpdOperator {
    dim: usize,
    backend: Arc<Backend>,
    counters: Counters,
}

const SYMMETRY_RTOL: f64 = 1e-12;

impl SpdOperator {
    fn from_backend(dim: usize, backend: Backend) -> Self {
        Self {
            dim,
            backend: Arc::new(backend),
            counters: Counters::default(),
        }
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::diagonal(vec![1.0; n])
    }

    /// Diagonal operator; all entries must be finite and strictly positive.
    pub fn diagonal(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::invalid("operator dimension must be positive"));
        }
        if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::invalid(format!("diagonal entry {i} = {d} is not positive")));
        }
        Ok(Self::from_backend(diag.len(), Backend::Diagonal(diag)))
    }

    /// Dense symmetric operator. Symmetry is checked entrywise; positive
    /// definiteness is the caller's contract (see [`SpdOperator::probe_spd`]).
    pub fn dense(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::invalid(format!(
                "dense operator must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..i {
                let (u, l) = (a[(i, j)], a[(j, i)]);
                if (u - l).abs() > SYMMETRY_RTOL * u.abs().max(l.abs()) {
                    return Err(Error::invalid(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_backend(n, Backend::DenseSymmetric(a)))
    }

    pub fn sparse(a: CsrMatrix) -> Result<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return Err(Error::invalid(format!(
                "sparse operator must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !a.is_symmetric(SYMMETRY_RTOL) {
            return Err(Error::invalid("sparse matrix is not symmetric"));
        }
        Ok(Self::from_backend(a.nrows(), Backend::SparseSymmetricCsr(a)))
    }

    pub fn gram(g: GramPlusRidge) -> Self {
        Self::from_backend(g.dim(), Backend::GramPlusRidge(g))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn backend_name(&self) -> &'static str {
        self.backend.name()
    }

    /// Same matrix data, counters reset to zero.
    pub fn fork(&self) -> Self {
        Self {
            dim: self.dim,
            backend: Arc::clone(&self.backend),
            counters: Counters::default(),
        }
    }

    pub fn counters(&self) -> MatvecCounters {
        self.counters.snapshot()
    }

    /// `out ← A·v`, charged to `charge`.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64], charge: Charge) -> Result<()> {
        check_dim(self.dim, v.len())?;
        check_dim(self.dim, out.len())?;
        match &*self.backend {
            Backend::DenseSymmetric(a) => {
                let vv = DVectorView::from_slice(v, self.dim);
                let mut ov = DVectorViewMut::from_slice(out, self.dim);
                ov.gemv(1.0, a, &vv, 0.0);
            }
            Backend::Diagonal(d) => {
                for ((o, di), vi) in out.iter_mut().zip(d).zip(v) {
                    *o = di * vi;
                }
            }
            Backend::SparseSymmetricCsr(a) => a.matvec_into(v, out)?,
            Backend::GramPlusRidge(g) => g.apply_into(v, out)?,
        }
        self.counters.bump(charge);
        Ok(())
    }

    pub fn apply(&self, v: &[f64], charge: Charge) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(v, &mut out, charge)?;
        Ok(out)
    }

    /// `vᵀAv / vᵀv`, one diagnostic matvec.
    pub fn rayleigh_quotient(&self, v: &[f64]) -> Result<f64> {
        let av = self.apply(v, Charge::Diagnostic)?;
        Ok(crate::vector::dot(v, &av) / crate::vector::norm_sq(v))
    }

    /// Explicit dense copy of `A`, built from the stored structure (no
    /// applications charged). Intended for oracle-scale checks.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match &*self.backend {
            Backend::DenseSymmetric(a) => a.clone(),
            Backend::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            Backend::SparseSymmetricCsr(a) => a.to_dense(),
            Backend::GramPlusRidge(g) => g.to_dense(),
        }
    }

    /// Checks `vᵀAv > 0` on `probes` random vectors (diagnostic matvecs).
    /// Returns the smallest observed Rayleigh quotient.
    pub fn probe_spd(&self, probes: usize, seed: u64) -> Result<f64> {
        use rand::Rng;
        let mut rng = crate::problems::rng(seed);
        let mut min_rq = f64::INFINITY;
        for _ in 0..probes {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let rq = self.rayleigh_quotient(&v)?;
            if !(rq > 0.0) {
                return Err(Error::invalid(format!(
                    "operator is not positive definite: Rayleigh quotient {rq}"
                )));
            }
            min_rq = min_rq.min(rq);
        }
        Ok(min_rq)
    }
}

impl Clone for SpdOperator {
    /// Clones share matrix data and start from the current counter values.
    fn clone(&self) -> Self {
        let snap = self.counters();
        Self {
            dim: self.dim,
            backend: Arc::clone(&self.backend),
            counters: Counters {
                algorithmic: AtomicU64::new(snap.algorithmic),
                diagnostic: AtomicU64::new(snap.diagnostic),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::dot;
    use rand::Rng;

    fn backends() -> Vec<SpdOperator> {
        let b = DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 2.0, 0.5, 1.0, 0.0, 0.0, 3.0, 1.0, 1.0, 1.0, 1.0]);
        let dense = b.transpose() * &b + DMatrix::identity(3, 3);
        let csr = CsrMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 0, 4.0),
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 1, 3.0),
                (2, 2, 2.0),
                (1, 2, -0.5),
                (2, 1, -0.5),
            ],
        )
        .unwrap();
        vec![
            SpdOperator::diagonal(vec![1.0, 5.0, 9.0]).unwrap(),
            SpdOperator::dense(dense).unwrap(),
            SpdOperator::sparse(csr).unwrap(),
            SpdOperator::gram(GramPlusRidge::new(RectMatrix::Dense(b), 0.1).unwrap()),
        ]
    }

    #[test]
    fn diagonal_scaling() {
        let op = SpdOperator::diagonal(vec![20.0, 2.0]).unwrap();
        assert_eq!(op.apply(&[2.0, 2.0], Charge::Algorithmic).unwrap(), vec![40.0, 4.0]);
    }

    #[test]
    fn identity_is_identity() {
        let op = SpdOperator::identity(3).unwrap();
        let v = [1.5, -2.0, 0.25];
        assert_eq!(op.apply(&v, Charge::Algorithmic).unwrap(), v.to_vec());
    }

    #[test]
    fn gram_hand_expansion() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let g = GramPlusRidge::new(RectMatrix::Dense(b.clone()), 0.5).unwrap();
        let op = SpdOperator::gram(g);
        let y = op.apply(&[1.0, 1.0], Charge::Algorithmic).unwrap();
        assert_eq!(y, vec![3.5, 2.5]);
        // materialization oracle
        let explicit = b.transpose() * &b + DMatrix::identity(2, 2) * 0.5;
        let z = explicit * nalgebra::DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(z.as_slice(), &y[..]);
    }

    #[test]
    fn counters_track_charges() {
        let op = SpdOperator::identity(2).unwrap();
        assert_eq!(op.counters(), MatvecCounters::default());
        op.apply(&[1.0, 0.0], Charge::Algorithmic).unwrap();
        assert_eq!(
            op.counters(),
            MatvecCounters {
                algorithmic: 1,
                diagnostic: 0
            }
        );
        op.apply(&[1.0, 0.0], Charge::Diagnostic).unwrap();
        assert_eq!(
            op.counters(),
            MatvecCounters {
                algorithmic: 1,
                diagnostic: 1
            }
        );
        assert_eq!(op.fork().counters(), MatvecCounters::default());
        assert_eq!(op.clone().counters(), op.counters());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let op = SpdOperator::identity(3).unwrap();
        assert!(matches!(
            op.apply(&[1.0, 2.0], Charge::Algorithmic),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
        assert_eq!(op.counters().algorithmic, 0);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(SpdOperator::diagonal(vec![1.0, 0.0]).is_err());
        assert!(SpdOperator::diagonal(vec![]).is_err());
        assert!(SpdOperator::dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])).is_err());
        let asym = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0)]).unwrap();
        assert!(SpdOperator::sparse(asym).is_err());
    }

    #[test]
    fn linearity_symmetry_and_definiteness_probes() {
        let mut rng = crate::problems::rng(7);
        for op in backends() {
            let n = op.dim();
            for _ in 0..100 {
                let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
                let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
                let (a, b) = (rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0);
                let combo: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
                let lhs = op.apply(&combo, Charge::Diagnostic).unwrap();
                let au = op.apply(&u, Charge::Diagnostic).unwrap();
                let av = op.apply(&v, Charge::Diagnostic).unwrap();
                let rhs: Vec<f64> = au.iter().zip(&av).map(|(x, y)| a * x + b * y).collect();
                let scale = crate::vector::norm(&rhs).max(crate::vector::norm(&lhs)).max(1e-300);
                assert!(crate::vector::norm(&crate::vector::sub(&lhs, &rhs)) <= 1e-12 * scale);

                let (uav, vau) = (dot(&u, &av), dot(&v, &au));
                assert!((uav - vau).abs() <= 1e-10 * uav.abs().max(vau.abs()).max(1e-300));
                assert!(dot(&v, &av) > 0.0, "{}", op.backend_name());
            }
        }
    }

    #[test]
    fn rayleigh_quotient_within_spectrum() {
        let op = SpdOperator::diagonal(vec![1.0, 5.0, 9.0]).unwrap();
        let mut rng = crate::problems::rng(3);
        for _ in 0..100 {
            let v: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let rq = op.rayleigh_quotient(&v).unwrap();
            assert!((1.0..=9.0).contains(&rq));
        }
    }

    #[test]
    fn gram_matches_materialized_on_random_sizes() {
        let mut rng = crate::problems::rng(11);
        for &(m, n) in &[(5, 3), (20, 20), (50, 40), (7, 50)] {
            let b = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>());
            let g = GramPlusRidge::new(RectMatrix::Dense(b.clone()), 0.3).unwrap();
            let explicit = b.transpose() * &b + DMatrix::identity(n, n) * 0.3;
            let op = SpdOperator::gram(g);
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let y = op.apply(&x, Charge::Diagnostic).unwrap();
            let z = &explicit * nalgebra::DVector::from_column_slice(&x);
            let err = (nalgebra::DVector::from_column_slice(&y) - &z).norm();
            assert!(err <= 1e-10 * z.norm());
        }
    }
}
