//! Dense complex matrix kernels shared by the rest of the crate.
//!
//! Matrices are plain [`faer::Mat`]s over [`C64`]. Hermiticity, unit trace and
//! positivity are checked by the `check_*` functions rather than encoded in
//! wrapper types: intermediate Runge-Kutta stages are Hermitian but not
//! necessarily positive, and the integrators need to carry them around.

use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

use crate::error::{QllgError, Result};

pub type CMat = Mat<C64>;

/// Largest matrix dimension the crate will materialize (n <= 12 spins).
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Relative Hermiticity tolerance, scaled by `max(1, ||A||_F)`.
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
/// Smallest eigenvalue accepted for a numerically projected density matrix.
pub const MIN_EIGENVALUE_TOL: f64 = -1e-10;

pub fn zeros(dim: usize) -> CMat {
    Mat::zeros(dim, dim)
}

pub fn identity(dim: usize) -> CMat {
    Mat::from_fn(dim, dim, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

pub fn from_real_diagonal(diag: &[f64]) -> CMat {
    let n = diag.len();
    Mat::from_fn(n, n, |i, j| if i == j { C64::new(diag[i], 0.0) } else { C64::new(0.0, 0.0) })
}

/// Row-major construction, mostly for tests and small literal matrices.
pub fn from_rows(rows: &[Vec<C64>]) -> CMat {
    let n = rows.len();
    Mat::from_fn(n, rows.first().map_or(0, Vec::len), |i, j| rows[i][j])
}

/// `|psi><psi|`
pub fn outer(psi: &[C64]) -> CMat {
    let n = psi.len();
    Mat::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
}

pub fn adjoint(a: MatRef<'_, C64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn frobenius_norm(a: MatRef<'_, C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn frobenius_distance(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += (a[(i, j)] - b[(i, j)]).norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn trace(a: MatRef<'_, C64>) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// `Tr(A B)` without forming the product.
pub fn trace_of_product(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn is_finite(a: MatRef<'_, C64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// `max_{jk} |A_jk - conj(A_kj)|`
pub fn hermiticity_residual(a: MatRef<'_, C64>) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in j..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(A + A*) / 2`
pub fn hermitize(a: MatRef<'_, C64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

fn check_square(a: MatRef<'_, C64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(QllgError::DimensionMismatch(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn check_hermitian(a: MatRef<'_, C64>) -> Result<()> {
    check_square(a)?;
    let residual = hermiticity_residual(a);
    if !residual.is_finite() || residual > HERMITIAN_TOL * frobenius_norm(a).max(1.0) {
        return Err(QllgError::NotHermitian { residual });
    }
    Ok(())
}

/// Hermitian, unit trace and positive semi-definite up to [`MIN_EIGENVALUE_TOL`].
pub fn check_density_matrix(rho: MatRef<'_, C64>) -> Result<()> {
    check_hermitian(rho)?;
    let tr = trace(rho).re;
    if (tr - 1.0).abs() > TRACE_TOL {
        return Err(QllgError::InvalidDensityMatrix(format!("trace is {tr}")));
    }
    let spectrum = hermitian_eigendecomposition(rho)?;
    let min = spectrum.eigenvalues[0];
    if min < MIN_EIGENVALUE_TOL {
        return Err(QllgError::InvalidDensityMatrix(format!("minimum eigenvalue is {min:e}")));
    }
    Ok(())
}

/// Ascending eigenvalues and the matching unitary eigenvector matrix.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub vectors: CMat,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(lambda) V*`
    pub fn reconstruct(&self) -> CMat {
        self.reconstruct_with(&self.eigenvalues)
    }

    /// `V diag(values) V*` for a replacement spectrum, paired column by column.
    pub fn reconstruct_with(&self, values: &[f64]) -> CMat {
        debug_assert_eq!(values.len(), self.dim());
        let v = &self.vectors;
        let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, k| v[(i, k)] * values[k]);
        &scaled * v.adjoint()
    }
}

/// Hermitian eigendecomposition with a deterministic output convention.
///
/// Eigenvalues come back ascending (stable with respect to the solver's own
/// order on ties). Each eigenvector is rotated so that its largest-magnitude
/// entry, the first one on ties, is real and non-negative. Only the lower
/// triangle of `a` is read.
pub fn hermitian_eigendecomposition(a: MatRef<'_, C64>) -> Result<SpectralDecomposition> {
    check_square(a)?;
    if !is_finite(a) {
        return Err(QllgError::NonConvergence);
    }
    let n = a.nrows();
    let (evd, shift) = self_adjoint_eigen_with_retry(a)?;
    let raw_values = evd.S().column_vector();
    let raw_vectors = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw_values[x].re.total_cmp(&raw_values[y].re));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| raw_values[k].re - shift).collect();
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(QllgError::NonConvergence);
    }
    let mut vectors = Mat::from_fn(n, n, |i, k| raw_vectors[(i, order[k])]);
    for k in 0..n {
        fix_phase(vectors.as_mut().col_mut(k));
    }
    Ok(SpectralDecomposition { eigenvalues, vectors })
}

/// Shifts tried, as multiples of `||A||_F`, when the solver does not converge
/// on `A` itself. Highly degenerate inputs such as the 9-site W state
/// projector trip it; `A + sigma I` has the same eigenvectors.
const RETRY_SHIFTS: [f64; 3] = [0.5, -0.375, 1.25];

fn self_adjoint_eigen_with_retry(a: MatRef<'_, C64>) -> Result<(faer::linalg::solvers::SelfAdjointEigen<C64>, f64)> {
    if let Ok(evd) = a.self_adjoint_eigen(Side::Lower) {
        return Ok((evd, 0.0));
    }
    let scale = frobenius_norm(a).max(f64::MIN_POSITIVE);
    for factor in RETRY_SHIFTS {
        let shift = factor * scale;
        let shifted = Mat::from_fn(a.nrows(), a.ncols(), |i, j| if i == j { a[(i, j)] + shift } else { a[(i, j)] });
        if let Ok(evd) = shifted.as_ref().self_adjoint_eigen(Side::Lower) {
            return Ok((evd, shift));
        }
    }
    Err(QllgError::NonConvergence)
}

fn fix_phase(mut col: faer::ColMut<'_, C64>) {
    let mut pivot = 0;
    let mut best = -1.0;
    for i in 0..col.nrows() {
        let m = col[i].norm();
        if m > best {
            best = m;
            pivot = i;
        }
    }
    if best <= 0.0 {
        return;
    }
    let rotation = col[pivot].conj() / best;
    for i in 0..col.nrows() {
        col[i] *= rotation;
    }
    col[pivot] = C64::new(col[pivot].re, 0.0);
}

/// Kronecker product with the default dimension cap.
pub fn kron(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Result<CMat> {
    kron_with_cap(a, b, DEFAULT_DIM_CAP)
}

pub fn kron_with_cap(a: MatRef<'_, C64>, b: MatRef<'_, C64>, cap: usize) -> Result<CMat> {
    let rows = a.nrows() * b.nrows();
    let cols = a.ncols() * b.ncols();
    if rows.max(cols) > cap {
        return Err(QllgError::DimensionOverflow { dim: rows.max(cols), cap });
    }
    let (p, q) = (b.nrows(), b.ncols());
    Ok(Mat::from_fn(rows, cols, |i, j| a[(i / p, j / q)] * b[(i % p, j % q)]))
}

/// `[A, B] = AB - BA`
pub fn commutator(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> Result<CMat> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() || a.nrows() != a.ncols() {
        return Err(QllgError::DimensionMismatch(format!(
            "commutator of {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a * b - b * a)
}

fn check_sites(dim: usize, n: usize, sites: &[usize]) -> Result<()> {
    if n == 0 || n >= usize::BITS as usize || dim != 1usize << n {
        return Err(QllgError::DimensionMismatch(format!("matrix of dimension {dim} does not hold {n} qubits")));
    }
    for (idx, &s) in sites.iter().enumerate() {
        if s == 0 || s > n {
            return Err(QllgError::IndexOutOfRange(format!("site {s} not in 1..={n}")));
        }
        if idx > 0 && sites[idx - 1] >= s {
            return Err(QllgError::IndexOutOfRange(format!("sites {sites:?} must be strictly increasing")));
        }
    }
    Ok(())
}

/// Reduced density matrix of the 1-based `sites` (strictly increasing).
///
/// Site 1 is the most significant tensor factor, both in `rho` and in the
/// output.
pub fn reduce_to_sites(rho: MatRef<'_, C64>, n: usize, sites: &[usize]) -> Result<CMat> {
    check_square(rho)?;
    check_sites(rho.nrows(), n, sites)?;
    let kept = sites.len();
    let traced: Vec<usize> = (1..=n).filter(|s| !sites.contains(s)).collect();
    let bit = |site: usize| n - site;

    let embed = |local: usize, env: usize| -> usize {
        let mut full = 0usize;
        for (pos, &s) in sites.iter().enumerate() {
            if (local >> (kept - 1 - pos)) & 1 == 1 {
                full |= 1 << bit(s);
            }
        }
        for (pos, &s) in traced.iter().enumerate() {
            if (env >> pos) & 1 == 1 {
                full |= 1 << bit(s);
            }
        }
        full
    };

    let out_dim = 1usize << kept;
    let env_dim = 1usize << traced.len();
    let mut out = zeros(out_dim);
    for env in 0..env_dim {
        for c in 0..out_dim {
            let fc = embed(c, env);
            for r in 0..out_dim {
                out[(r, c)] += rho[(embed(r, env), fc)];
            }
        }
    }
    Ok(out)
}

/// Two-site reduced state over the 1-based pair `(k, l)`, `k < l`.
pub fn partial_trace(rho: MatRef<'_, C64>, n: usize, keep: (usize, usize)) -> Result<CMat> {
    reduce_to_sites(rho, n, &[keep.0, keep.1])
}

/// Conservation diagnostics for a (candidate) density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    pub trace: f64,
    pub trace_sq: f64,
    pub trace_cube: f64,
    pub min_eigenvalue: f64,
    pub hermiticity_residual: f64,
}

impl Diagnostics {
    pub fn is_finite(&self) -> bool {
        self.trace.is_finite()
            && self.trace_sq.is_finite()
            && self.trace_cube.is_finite()
            && self.min_eigenvalue.is_finite()
            && self.hermiticity_residual.is_finite()
    }
}

/// Trace powers are summed directly from matrix entries, independently of the
/// eigendecomposition used for the minimum eigenvalue. A failed eigensolve
/// reports a NaN minimum eigenvalue.
pub fn diagnostics(rho: MatRef<'_, C64>) -> Diagnostics {
    let square = rho * rho;
    let min_eigenvalue = hermitian_eigendecomposition(rho).map(|d| d.eigenvalues[0]).unwrap_or(f64::NAN);
    Diagnostics {
        trace: trace(rho).re,
        trace_sq: trace(square.as_ref()).re,
        trace_cube: trace_of_product(square.as_ref(), rho).re,
        min_eigenvalue,
        hermiticity_residual: hermiticity_residual(rho),
    }
}
