//! Problem generators and dataset ingestion.
//!
//! All randomness comes from [`rng`], a ChaCha8 stream seeded from a `u64`,
//! so a given `(generator, parameters, seed)` always yields the same
//! instance. "Random" entries are uniform on `[0, 1)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::operators::{matrix_market, Charge, CsrMatrix, GramPlusRidge, RectMatrix, SpdOperator};
use crate::solver::{solve_with_reference, SolveResult, SolverConfig};
use crate::theory::SpectralBounds;
use crate::vector::{dot, norm, sub};

/// The project-wide seeded generator.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// Where a problem's `f*` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FstarSource {
    /// Known by construction (`b = A x*`).
    Generator,
    /// Dense normal-equations solve.
    DirectSolve,
    Absent,
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub label: String,
    pub operator: SpdOperator,
    pub b: Vec<f64>,
    pub x0: Vec<f64>,
    pub xstar: Option<Vec<f64>>,
    pub fstar: Option<f64>,
    pub fstar_source: FstarSource,
    pub spectrum: Option<SpectralBounds>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemMetadata {
    pub label: String,
    pub dim: usize,
    pub backend: &'static str,
    pub fstar: Option<f64>,
    pub fstar_source: FstarSource,
    pub f0: f64,
    pub spectrum: Option<SpectralBounds>,
}

impl ProblemInstance {
    fn with_known_solution(
        label: String,
        operator: SpdOperator,
        xstar: Vec<f64>,
        x0: Vec<f64>,
        spectrum: Option<SpectralBounds>,
    ) -> Result<Self> {
        let b = operator.apply(&xstar, Charge::Diagnostic)?;
        let fstar = -0.5 * dot(&xstar, &b);
        Ok(Self {
            label,
            operator: operator.fork(),
            b,
            x0,
            xstar: Some(xstar),
            fstar: Some(fstar),
            fstar_source: FstarSource::Generator,
            spectrum,
        })
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    /// Runs the solver on a fresh operator handle (independent counters).
    pub fn solve(&self, config: &SolverConfig) -> Result<SolveResult> {
        self.solve_from(&self.x0, config)
    }

    pub fn solve_from(&self, x0: &[f64], config: &SolverConfig) -> Result<SolveResult> {
        let op = self.operator.fork();
        solve_with_reference(&op, &self.b, x0, config, self.fstar, &self.label)
    }

    /// `f(x) = ½ xᵀAx − xᵀb`, one diagnostic matvec.
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        let ax = self.operator.apply(x, Charge::Diagnostic)?;
        Ok(0.5 * dot(x, &ax) - dot(x, &self.b))
    }

    /// `‖A x* − b‖₂ / (1 + ‖b‖₂)`, when `x*` is known.
    pub fn solution_residual(&self) -> Result<Option<f64>> {
        let Some(xs) = &self.xstar else { return Ok(None) };
        let ax = self.operator.apply(xs, Charge::Diagnostic)?;
        Ok(Some(norm(&sub(&ax, &self.b)) / (1.0 + norm(&self.b))))
    }

    pub fn metadata(&self) -> Result<ProblemMetadata> {
        Ok(ProblemMetadata {
            label: self.label.clone(),
            dim: self.dim(),
            backend: self.operator.backend_name(),
            fstar: self.fstar,
            fstar_source: self.fstar_source,
            f0: self.objective(&self.x0)?,
            spectrum: self.spectrum,
        })
    }
}

/// `f(x) = 10x₁² + x₂²` from `x₀ = (0.1, 1)`: `A = diag(20, 2)`, `b = 0`.
pub fn fletcher_counterexample() -> ProblemInstance {
    let operator = SpdOperator::diagonal(vec![20.0, 2.0]).expect("positive diagonal");
    ProblemInstance {
        label: "fletcher".to_string(),
        operator,
        b: vec![0.0, 0.0],
        x0: vec![0.1, 1.0],
        xstar: Some(vec![0.0, 0.0]),
        fstar: Some(0.0),
        fstar_source: FstarSource::Generator,
        spectrum: Some(SpectralBounds::exact(20.0, 2.0).expect("valid bounds")),
    }
}

/// Starting points on the Fletcher problem that weight both eigenvectors of
/// `y_0` equally, for ℓ ∈ {0, ½, 1}.
pub fn worst_case_start(two_ell: u32) -> Result<[f64; 2]> {
    match two_ell {
        0 => Ok([0.1, 1.0]),
        1 => Ok([1.0 / (10.0 * 10f64.sqrt()), 1.0]),
        2 => Ok([0.01, 1.0]),
        _ => Err(Error::Unsupported(format!(
            "worst-case start known only for 2ell in {{0, 1, 2}}, got {two_ell}"
        ))),
    }
}

/// `A = diag(1, …, n)`, `b = 0`, random `x₀`.
pub fn diagonal_spectrum(n: usize, seed: u64) -> Result<ProblemInstance> {
    if n < 2 {
        return Err(Error::invalid(format!("diagonal problem needs n >= 2, got {n}")));
    }
    let operator = SpdOperator::diagonal((1..=n).map(|i| i as f64).collect())?;
    let x0 = uniform_vec(&mut rng(seed), n);
    Ok(ProblemInstance {
        label: format!("diag{n}"),
        operator,
        b: vec![0.0; n],
        x0,
        xstar: Some(vec![0.0; n]),
        fstar: Some(0.0),
        fstar_source: FstarSource::Generator,
        spectrum: Some(SpectralBounds::exact(n as f64, 1.0)?),
    })
}

/// Above this dimension dense Gram matrices are applied in factor form.
pub const DENSE_MATERIALIZE_LIMIT: usize = 2000;

/// `A = BᵀB` with `B ∈ [0,1)^{m×n}`; random `x*`, `b = A x*`, random `x₀`.
pub fn dense_random(m: usize, n: usize, seed: u64) -> Result<ProblemInstance> {
    if !(m > n && n >= 2) {
        return Err(Error::invalid(format!(
            "dense problem needs m > n >= 2, got ({m}, {n})"
        )));
    }
    let mut r = rng(seed);
    let b = DMatrix::from_fn(m, n, |_, _| r.random::<f64>());
    let xstar = uniform_vec(&mut r, n);
    let x0 = uniform_vec(&mut r, n);
    let operator = if n <= DENSE_MATERIALIZE_LIMIT {
        SpdOperator::dense(b.tr_mul(&b))?
    } else {
        SpdOperator::gram(GramPlusRidge::new(RectMatrix::Dense(b), 0.0)?)
    };
    ProblemInstance::with_known_solution(format!("dense{m}x{n}"), operator, xstar, x0, None)
}

/// `A = B + diag(Be + z)` with `B = C + Cᵀ`, where every row of `C` holds
/// exactly `nnz_per_row` uniform entries at distinct random columns and `z`
/// is uniform on `(0, 1000)`. The result is strictly diagonally dominant.
pub fn sparse_random(n: usize, nnz_per_row: usize, seed: u64) -> Result<ProblemInstance> {
    if n < 2 {
        return Err(Error::invalid(format!("sparse problem needs n >= 2, got {n}")));
    }
    if nnz_per_row == 0 || nnz_per_row > n {
        return Err(Error::invalid(format!(
            "nnz per row must be in 1..={n}, got {nnz_per_row}"
        )));
    }
    let mut r = rng(seed);
    let mut triplets = Vec::with_capacity(2 * n * nnz_per_row + n);
    let mut row_sums = vec![0.0; n];
    for i in 0..n {
        for j in sample(&mut r, n, nnz_per_row).into_iter() {
            let v = r.random::<f64>();
            triplets.push((i, j, v));
            triplets.push((j, i, v));
            row_sums[i] += v;
            row_sums[j] += v;
        }
    }
    for (i, s) in row_sums.iter().enumerate() {
        let z = loop {
            let z = 1000.0 * r.random::<f64>();
            if z > 0.0 {
                break z;
            }
        };
        triplets.push((i, i, s + z));
    }
    let a = CsrMatrix::from_triplets(n, n, triplets)?;
    let xstar = uniform_vec(&mut r, n);
    let x0 = uniform_vec(&mut r, n);
    let operator = SpdOperator::sparse(a)?;
    ProblemInstance::with_known_solution(format!("sparse{n}"), operator, xstar, x0, None)
}

/// Dense `A = Q diag(λ) Qᵀ` with `Q` orthogonal (QR of a uniform matrix) and
/// eigenvalues uniform in `[λn, λ1]`, both endpoints included. Returns the
/// matrix and its exact spectral bounds.
pub fn random_spd_matrix(
    n: usize,
    lambda_min: f64,
    lambda_max: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<f64>, SpectralBounds)> {
    if n < 2 {
        return Err(Error::invalid(format!("need n >= 2, got {n}")));
    }
    let bounds = SpectralBounds::exact(lambda_max, lambda_min)?;
    let q = DMatrix::from_fn(n, n, |_, _| 2.0 * rng.random::<f64>() - 1.0).qr().q();
    let mut eig: Vec<f64> = (0..n)
        .map(|_| lambda_min + (lambda_max - lambda_min) * rng.random::<f64>())
        .collect();
    eig[0] = lambda_max;
    eig[n - 1] = lambda_min;
    let a = &q * DMatrix::from_diagonal(&DVector::from_vec(eig)) * q.transpose();
    // exact symmetry so the dense backend accepts it
    let a = (&a + a.transpose()) * 0.5;
    Ok((a, bounds))
}

/// [`random_spd_matrix`] as a problem with random `x*` and `x₀`.
pub fn random_spd(n: usize, lambda_min: f64, lambda_max: f64, seed: u64) -> Result<ProblemInstance> {
    let mut r = rng(seed);
    let (a, bounds) = random_spd_matrix(n, lambda_min, lambda_max, &mut r)?;
    let xstar = uniform_vec(&mut r, n);
    let x0 = uniform_vec(&mut r, n);
    ProblemInstance::with_known_solution(format!("spd{n}"), SpdOperator::dense(a)?, xstar, x0, Some(bounds))
}

/// Strict diagonal dominance with a positive diagonal: `A_ii > Σ_{j≠i} |A_ij|`.
pub fn is_strictly_diagonally_dominant(a: &CsrMatrix) -> bool {
    (0..a.nrows()).all(|i| {
        let (cols, vals) = a.row(i);
        let mut diag = 0.0;
        let mut off = 0.0;
        for (&c, &v) in cols.iter().zip(vals) {
            if c == i {
                diag = v;
            } else {
                off += v.abs();
            }
        }
        diag > off
    })
}

/// Rows of a LIBSVM file: sparse features `B` and labels `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSparseData {
    pub features: CsrMatrix,
    pub labels: Vec<f64>,
}

fn libsvm_err(origin: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: origin.to_string(),
        line,
        message: message.into(),
    }
}

pub fn parse_libsvm(path: impl AsRef<Path>) -> Result<LabeledSparseData> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_libsvm_str(&text, &path.display().to_string())
}

/// Parses `<label> <index>:<value> …` lines with 1-based, strictly
/// ascending indices. Text after `#` is ignored, as are blank lines.
pub fn parse_libsvm_str(text: &str, origin: &str) -> Result<LabeledSparseData> {
    let mut labels = Vec::new();
    let mut triplets = Vec::new();
    let mut ncols = 0usize;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| libsvm_err(origin, lineno, format!("bad label '{label_tok}'")))?;
        let row = labels.len();
        let mut prev = 0usize;
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| libsvm_err(origin, lineno, format!("malformed feature '{tok}'")))?;
            let index: usize = i
                .parse()
                .map_err(|_| libsvm_err(origin, lineno, format!("bad index in '{tok}'")))?;
            let value: f64 = v
                .parse()
                .map_err(|_| libsvm_err(origin, lineno, format!("bad value in '{tok}'")))?;
            if index < 1 {
                return Err(libsvm_err(origin, lineno, "feature indices start at 1"));
            }
            if index <= prev {
                return Err(libsvm_err(
                    origin,
                    lineno,
                    format!("index {index} is not ascending (previous {prev})"),
                ));
            }
            prev = index;
            ncols = ncols.max(index);
            triplets.push((row, index - 1, value));
        }
        labels.push(label);
    }
    Ok(LabeledSparseData {
        features: CsrMatrix::from_triplets(labels.len(), ncols, triplets)?,
        labels,
    })
}

pub fn format_libsvm(data: &LabeledSparseData) -> String {
    let mut out = String::new();
    for (r, label) in data.labels.iter().enumerate() {
        let _ = write!(out, "{label}");
        let (cols, vals) = data.features.row(r);
        for (c, v) in cols.iter().zip(vals) {
            let _ = write!(out, " {}:{v}", c + 1);
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(path: impl AsRef<Path>, data: &LabeledSparseData) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_libsvm(data)).map_err(|e| Error::io(path, e))
}

/// `min ‖Bx − d‖² + λ‖x‖²` as `½xᵀAx − xᵀb` with `A = 2(BᵀB + λI)` and
/// `b = 2Bᵀd`, so `f` equals the regression loss minus `‖d‖²`.
///
/// `x*` comes from a dense normal-equations solve when `n ≤ 2000`.
pub fn regularized_ls(data: &LabeledSparseData, lambda: f64, seed: u64) -> Result<ProblemInstance> {
    check_dim(data.features.nrows(), data.labels.len())?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let n = data.features.ncols();
    let gram = GramPlusRidge::scaled(RectMatrix::Sparse(data.features.clone()), lambda, 2.0)?;
    let operator = SpdOperator::gram(gram);

    let mut btd = vec![0.0; n];
    data.features.matvec_transpose_into(&data.labels, &mut btd)?;
    let b: Vec<f64> = btd.iter().map(|v| 2.0 * v).collect();
    let x0 = uniform_vec(&mut rng(seed), n);

    let (xstar, fstar, source) = if n <= DENSE_MATERIALIZE_LIMIT {
        let dense = data.features.to_dense();
        let normal = dense.tr_mul(&dense) + DMatrix::identity(n, n) * lambda;
        let chol = normal
            .cholesky()
            .ok_or_else(|| Error::invalid("BᵀB + λI is not positive definite; increase lambda"))?;
        let xs = chol.solve(&DVector::from_column_slice(&btd));
        let xs = xs.as_slice().to_vec();
        let fs = -0.5 * dot(&xs, &b);
        (Some(xs), Some(fs), FstarSource::DirectSolve)
    } else {
        if lambda == 0.0 {
            operator.probe_spd(16, seed)?;
        }
        (None, None, FstarSource::Absent)
    };
    Ok(ProblemInstance {
        label: "libsvm".to_string(),
        operator: operator.fork(),
        b,
        x0,
        xstar,
        fstar,
        fstar_source: source,
        spectrum: None,
    })
}

/// Operator from a Matrix Market file. Without a right-hand side, `b = A·e`
/// so that `x* = e` is known.
pub fn from_matrix_market(matrix: impl AsRef<Path>, rhs: Option<&Path>, seed: u64) -> Result<ProblemInstance> {
    let a = matrix_market::read_matrix_market(matrix.as_ref())?;
    let operator = SpdOperator::sparse(a)?;
    let n = operator.dim();
    let x0 = uniform_vec(&mut rng(seed), n);
    let label = matrix
        .as_ref()
        .file_stem()
        .map_or_else(|| "matrix".to_string(), |s| s.to_string_lossy().into_owned());
    match rhs {
        None => ProblemInstance::with_known_solution(label, operator, vec![1.0; n], x0, None),
        Some(path) => {
            let m = matrix_market::read_dense_text(path)?;
            let b: Vec<f64> = m.iter().copied().collect();
            check_dim(n, b.len())?;
            Ok(ProblemInstance {
                label,
                operator,
                b,
                x0,
                xstar: None,
                fstar: None,
                fstar_source: FstarSource::Absent,
                spectrum: None,
            })
        }
    }
}
