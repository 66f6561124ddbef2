//! Right-hand side of the quantum LLG equation
//!
//! `rho' = (i/hbar)[rho, H] + i kappa [rho, rho']`
//!
//! made explicit through the eigendecomposition `rho = V diag(lambda) V*`. In
//! that basis `X = V* rho' V` satisfies the diagonal Sylvester equation
//! `(I + S) X - X S = D` with `s_l = -i kappa lambda_l` and
//! `D = (i/hbar) V* [rho, H] V`, so every entry is a single division.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{QllgError, Result};
use crate::linalg::{self, hermitian_eigendecomposition, CMat, SpectralDecomposition};

/// Smallest admissible `|1 + s_j - s_l|`.
pub const DENOMINATOR_FLOOR: f64 = 1e-14;

/// Hamiltonian (meV), dimensionless damping and hbar (meV ps).
#[derive(Clone, Debug)]
pub struct QllgContext {
    pub hamiltonian: CMat,
    pub kappa: f64,
    pub hbar: f64,
}

impl QllgContext {
    pub fn new(hamiltonian: CMat, kappa: f64, hbar: f64) -> Result<Self> {
        linalg::check_hermitian(hamiltonian.as_ref())?;
        if !kappa.is_finite() {
            return Err(QllgError::InvalidConfig(format!("kappa must be finite, got {kappa}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(QllgError::InvalidConfig(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { hamiltonian, kappa, hbar })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(QllgError::DimensionMismatch(format!(
                "state of dimension {dim}, Hamiltonian of dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Solves `(I + S) X - X S = D` for diagonal `S = diag(s)`:
/// `X_jl = D_jl / (1 + s_j - s_l)`.
pub fn sylvester_diagonal_solve(s: &[C64], d: &CMat) -> Result<CMat> {
    let n = s.len();
    if d.nrows() != n || d.ncols() != n {
        return Err(QllgError::DimensionMismatch(format!(
            "diagonal of length {n} with a {}x{} right-hand side",
            d.nrows(),
            d.ncols()
        )));
    }
    let mut x = linalg::zeros(n);
    for l in 0..n {
        for j in 0..n {
            let denom = 1.0 + s[j] - s[l];
            let magnitude = denom.norm();
            if magnitude <= DENOMINATOR_FLOOR {
                return Err(QllgError::SingularDenominator { row: j, col: l, magnitude });
            }
            x[(j, l)] = d[(j, l)] / denom;
        }
    }
    Ok(x)
}

/// `f(rho) = V X V*` for a state given by its eigendecomposition.
///
/// With `H_V = V* H V`, the rotated commutator is
/// `V* [rho, H] V = diag(lambda) H_V - H_V diag(lambda)`, which has an exactly
/// zero diagonal.
pub fn qllg_rhs_decomposed(decomp: &SpectralDecomposition, ctx: &QllgContext) -> Result<CMat> {
    ctx.check_dim(decomp.dim())?;
    let v = &decomp.vectors;
    let lambda = &decomp.eigenvalues;
    let rotated = v.adjoint() * &ctx.hamiltonian * v;

    let n = lambda.len();
    let i_over_hbar = C64::new(0.0, 1.0 / ctx.hbar);
    let d = Mat::from_fn(n, n, |j, l| i_over_hbar * (lambda[j] - lambda[l]) * rotated[(j, l)]);
    let d = linalg::hermitize(d.as_ref());

    let s: Vec<C64> = lambda.iter().map(|&x| C64::new(0.0, -ctx.kappa * x)).collect();
    let x = sylvester_diagonal_solve(&s, &d)?;
    Ok(v * x * v.adjoint())
}

/// `f(rho)`, recomputing the eigendecomposition of `rho`.
pub fn qllg_rhs(rho: &CMat, ctx: &QllgContext) -> Result<CMat> {
    ctx.check_dim(rho.nrows())?;
    let decomp = hermitian_eigendecomposition(rho.as_ref())?;
    qllg_rhs_decomposed(&decomp, ctx)
}

/// A matrix-valued vector field `rho -> f(rho)` for the integrators.
pub trait VectorField {
    fn eval(&self, state: &CMat) -> Result<CMat>;

    /// Evaluation at `V diag(lambda) V*` when the factorization is already
    /// known. The default reassembles the matrix.
    fn eval_decomposed(&self, decomp: &SpectralDecomposition) -> Result<CMat> {
        self.eval(&decomp.reconstruct())
    }
}

impl VectorField for QllgContext {
    fn eval(&self, state: &CMat) -> Result<CMat> {
        qllg_rhs(state, self)
    }

    fn eval_decomposed(&self, decomp: &SpectralDecomposition) -> Result<CMat> {
        qllg_rhs_decomposed(decomp, self)
    }
}

impl<F> VectorField for F
where
    F: Fn(&CMat) -> Result<CMat>,
{
    fn eval(&self, state: &CMat) -> Result<CMat> {
        self(state)
    }
}
