use crate::error::{check_dim, Error, Result};

/// Compressed-sparse-row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from 0-based `(row, col, value)` triplets.
    /// Duplicate coordinates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= nrows || c >= ncols {
                return Err(Error::invalid(format!("entry ({r}, {c}) outside {nrows}x{ncols}")));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
            last = Some((r, c));
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(i) => vals[i],
            Err(_) => 0.0,
        }
    }

    /// 0-based triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(r, c, v)| (c, r, v)))
            .expect("transposed coordinates stay in range")
    }

    /// `out ← M·x`
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.ncols, x.len())?;
        check_dim(self.nrows, out.len())?;
        for (r, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *o = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
        Ok(())
    }

    /// `out ← Mᵀ·x`
    pub fn matvec_transpose_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.nrows, x.len())?;
        check_dim(self.ncols, out.len())?;
        out.fill(0.0);
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * xr;
            }
        }
        Ok(())
    }

    pub fn is_symmetric(&self, rtol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        self.triplets().all(|(r, c, v)| {
            let w = self.get(c, r);
            (v - w).abs() <= rtol * v.abs().max(w.abs())
        })
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_are_sorted_and_summed() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(1, 2, 1.0), (0, 1, 2.0), (1, 0, 3.0), (1, 2, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.row(1), (&[0usize, 2][..], &[3.0, 1.5][..]));
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn out_of_range_entry_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn matvec_and_transpose_agree_with_dense() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0)]).unwrap();
        let mut y = vec![0.0; 2];
        m.matvec_into(&[1.0, 2.0, 3.0], &mut y).unwrap();
        assert_eq!(y, vec![7.0, -2.0]);
        let mut z = vec![0.0; 3];
        m.matvec_transpose_into(&[1.0, 1.0], &mut z).unwrap();
        assert_eq!(z, vec![1.0, -1.0, 2.0]);
        assert_eq!(m.transpose().to_dense(), m.to_dense().transpose());
    }
}
