use nalgebra::{DMatrix, DVectorView, DVectorViewMut};

use super::csr::CsrMatrix;
use crate::error::{check_dim, Error, Result};

/// Rectangular data matrix `B` (m rows, n columns).
#[derive(Debug, Clone)]
pub enum RectMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl RectMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            RectMatrix::Dense(m) => m.nrows(),
            RectMatrix::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            RectMatrix::Dense(m) => m.ncols(),
            RectMatrix::Sparse(m) => m.ncols(),
        }
    }

    /// `out ← B·x`
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            RectMatrix::Dense(m) => {
                check_dim(m.ncols(), x.len())?;
                check_dim(m.nrows(), out.len())?;
                let xv = DVectorView::from_slice(x, x.len());
                let n = out.len();
                let mut ov = DVectorViewMut::from_slice(out, n);
                ov.gemv(1.0, m, &xv, 0.0);
                Ok(())
            }
            RectMatrix::Sparse(m) => m.matvec_into(x, out),
        }
    }

    /// `out ← Bᵀ·x`
    pub fn matvec_transpose_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            RectMatrix::Dense(m) => {
                check_dim(m.nrows(), x.len())?;
                check_dim(m.ncols(), out.len())?;
                let xv = DVectorView::from_slice(x, x.len());
                let n = out.len();
                let mut ov = DVectorViewMut::from_slice(out, n);
                ov.gemv_tr(1.0, m, &xv, 0.0);
                Ok(())
            }
            RectMatrix::Sparse(m) => m.matvec_transpose_into(x, out),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            RectMatrix::Dense(m) => m.clone(),
            RectMatrix::Sparse(m) => m.to_dense(),
        }
    }
}

/// `x ↦ scale·(Bᵀ(Bx) + ridge·x)`, never forming `BᵀB`.
#[derive(Debug, Clone)]
pub struct GramPlusRidge {
    data: RectMatrix,
    ridge: f64,
    scale: f64,
}

impl GramPlusRidge {
    pub fn new(data: RectMatrix, ridge: f64) -> Result<Self> {
        Self::scaled(data, ridge, 1.0)
    }

    pub fn scaled(data: RectMatrix, ridge: f64, scale: f64) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge must be finite and >= 0, got {ridge}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be finite and > 0, got {scale}")));
        }
        if data.ncols() == 0 {
            return Err(Error::invalid("data matrix has no columns"));
        }
        Ok(Self { data, ridge, scale })
    }

    pub fn data(&self) -> &RectMatrix {
        &self.data
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let mut bx = vec![0.0; self.data.nrows()];
        self.data.matvec_into(x, &mut bx)?;
        self.data.matvec_transpose_into(&bx, out)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.scale * (*o + self.ridge * xi);
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let b = self.data.to_dense();
        let n = b.ncols();
        (b.transpose() * &b + DMatrix::identity(n, n) * self.ridge) * self.scale
    }
}
