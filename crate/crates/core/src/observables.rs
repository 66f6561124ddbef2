//! Measurements on density matrices: expectation values, average
//! magnetization and pairwise (Wootters) concurrence.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{QllgError, Result};
use crate::integrators::Observer;
use crate::linalg::{self, hermitian_eigendecomposition, CMat};
use crate::pauli;
use crate::spin::{Axis, SpinOperators};

/// Absolute imaginary part tolerated in `Tr(A rho)`.
pub const IMAG_ABS_TOL: f64 = 1e-9;
/// Relative imaginary part tolerated in `Tr(A rho)`.
pub const IMAG_REL_TOL: f64 = 1e-11;
/// Eigenvalues of `sqrt(rho) rho~ sqrt(rho)` at or below this are treated as
/// zero before taking square roots. Rounding residues of order 1e-16 would
/// otherwise surface as ~1e-8 in the concurrence.
pub const CONCURRENCE_CLIP: f64 = 1e-13;

fn check_same_dim(a: &CMat, rho: &CMat) -> Result<()> {
    if a.nrows() != rho.nrows() || a.ncols() != rho.ncols() || a.nrows() != a.ncols() {
        return Err(QllgError::DimensionMismatch(format!(
            "operator {}x{} against state {}x{}",
            a.nrows(),
            a.ncols(),
            rho.nrows(),
            rho.ncols()
        )));
    }
    Ok(())
}

/// `Tr(A rho)`, which must be real for Hermitian `A` and `rho`.
pub fn expectation(a: &CMat, rho: &CMat) -> Result<f64> {
    check_same_dim(a, rho)?;
    let value = linalg::trace_of_product(a.as_ref(), rho.as_ref());
    if value.im.abs() > IMAG_ABS_TOL && value.im.abs() > IMAG_REL_TOL * value.re.abs() {
        return Err(QllgError::NonNegligibleImaginaryPart { real: value.re, imag: value.im });
    }
    Ok(value.re)
}

/// `<M_v> = (1/n) sum_i <S_i^v>`, in meV ps.
pub fn magnetization(rho: &CMat, ops: &SpinOperators, axis: Axis) -> Result<f64> {
    Ok(expectation(&ops.total(axis), rho)? / ops.sites() as f64)
}

fn sigma_yy() -> CMat {
    let y = pauli::y();
    linalg::kron(y.as_ref(), y.as_ref()).expect("4x4 fits the cap")
}

fn check_two_qubit(rho: &CMat) -> Result<()> {
    if rho.nrows() != 4 || rho.ncols() != 4 {
        return Err(QllgError::DimensionMismatch(format!(
            "two-qubit state must be 4x4, got {}x{}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    Ok(())
}

/// `(sigma_y x sigma_y) conj(rho) (sigma_y x sigma_y)` in the computational basis.
pub fn spin_flip(rho: &CMat) -> Result<CMat> {
    check_two_qubit(rho)?;
    let yy = sigma_yy();
    let conj = rho.conjugate().to_owned();
    Ok(&yy * conj * &yy)
}

/// Wootters concurrence `max(0, l1 - l2 - l3 - l4)`, where `l` are the
/// decreasing square roots of the eigenvalues of `rho rho~`.
///
/// Those eigenvalues are taken from the Hermitian, positive semi-definite
/// `sqrt(rho) rho~ sqrt(rho)`, which shares them.
pub fn concurrence(rho: &CMat) -> Result<f64> {
    check_two_qubit(rho)?;
    let flipped = spin_flip(rho)?;

    let rd = hermitian_eigendecomposition(rho.as_ref())?;
    let roots: Vec<f64> = rd.eigenvalues.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let sqrt_rho = rd.reconstruct_with(&roots);
    let m = linalg::hermitize((&sqrt_rho * &flipped * &sqrt_rho).as_ref());

    let mu = hermitian_eigendecomposition(m.as_ref())?.eigenvalues;
    let scale = mu.last().copied().unwrap_or(0.0).max(1.0);
    let mut l: Vec<f64> = mu.iter().map(|&x| if x <= CONCURRENCE_CLIP * scale { 0.0 } else { x.sqrt() }).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    let c = l[0] - l[1] - l[2] - l[3];
    if !c.is_finite() || c > 1.0 + 1e-10 {
        return Err(QllgError::InvalidDensityMatrix(format!("concurrence {c} out of range")));
    }
    Ok(c.clamp(0.0, 1.0))
}

/// Concurrence of the reduced state of the 1-based sites `k < l`.
pub fn two_spin_concurrence(rho: &CMat, n: usize, k: usize, l: usize) -> Result<f64> {
    concurrence(&linalg::partial_trace(rho.as_ref(), n, (k, l))?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservableSpec {
    Energy,
    Magnetization(Axis),
    Concurrence(usize, usize),
    TracePower(u32),
}

impl ObservableSpec {
    /// Column label used in trajectory outputs.
    pub fn label(&self) -> String {
        match self {
            ObservableSpec::Energy => "energy_meV".into(),
            ObservableSpec::Magnetization(Axis::X) => "mag_x".into(),
            ObservableSpec::Magnetization(Axis::Y) => "mag_y".into(),
            ObservableSpec::Magnetization(Axis::Z) => "mag_z".into(),
            ObservableSpec::Concurrence(k, l) => format!("concurrence_{k}_{l}"),
            ObservableSpec::TracePower(m) => format!("trace_power_{m}"),
        }
    }

    /// Resolves the spec against a concrete Hamiltonian and spin system.
    pub fn bind(&self, hamiltonian: &CMat, ops: &SpinOperators) -> Result<BoundObservable> {
        let n = ops.sites();
        let operator = match *self {
            ObservableSpec::Energy => {
                if hamiltonian.nrows() != ops.dim() {
                    return Err(QllgError::DimensionMismatch("Hamiltonian does not match the spin system".into()));
                }
                Some(hamiltonian.clone())
            }
            ObservableSpec::Magnetization(axis) => Some(ops.total(axis) * faer::Scale(C64::new(1.0 / n as f64, 0.0))),
            ObservableSpec::Concurrence(k, l) => {
                if !(1 <= k && k < l && l <= n) {
                    return Err(QllgError::IndexOutOfRange(format!("pair ({k}, {l}) invalid for {n} sites")));
                }
                None
            }
            ObservableSpec::TracePower(m) => {
                if !(1..=3).contains(&m) {
                    return Err(QllgError::IndexOutOfRange(format!("trace power {m} not in 1..=3")));
                }
                None
            }
        };
        Ok(BoundObservable { spec: *self, operator, sites: n })
    }
}

#[derive(Clone, Debug)]
pub struct BoundObservable {
    spec: ObservableSpec,
    operator: Option<CMat>,
    sites: usize,
}

impl Observer for BoundObservable {
    fn name(&self) -> String {
        self.spec.label()
    }

    fn observe(&self, rho: &CMat) -> Result<f64> {
        match (self.spec, &self.operator) {
            (ObservableSpec::Concurrence(k, l), _) => two_spin_concurrence(rho, self.sites, k, l),
            (ObservableSpec::TracePower(m), _) => {
                let mut power: CMat = Mat::identity(rho.nrows(), rho.ncols());
                for _ in 0..m {
                    power = power * rho;
                }
                Ok(linalg::trace(power.as_ref()).re)
            }
            (_, Some(op)) => expectation(op, rho),
            (_, None) => unreachable!("operator observables are bound with their operator"),
        }
    }
}
