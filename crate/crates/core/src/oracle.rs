//! Reference solutions for verification: the closed-form trajectory of a
//! rank-one initial state, a right-hand side obtained by solving the
//! vectorized implicit equation directly, and a convergence-order harness.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::dynamics::QllgContext;
use crate::error::{QllgError, Result};
use crate::integrators::{integrate, preset_tableau, ButcherTableau, IntegratorConfig};
use crate::linalg::{self, hermitian_eigendecomposition, CMat};

/// Largest state dimension accepted by [`brute_force_rhs`].
pub const BRUTE_FORCE_MAX_DIM: usize = 64;
/// Errors at or below this are treated as exact when fitting orders.
pub const CONSERVED_ERROR: f64 = 1e-12;

/// `rho(t) = E rho0 E^dagger / Tr(E rho0 E^dagger)` with
/// `E = exp(-(i/hbar) H~ t)` and `H~ = (1 - i kappa) / (1 + kappa^2) H`.
///
/// `E` is built from the eigendecomposition of `H`. Real parts of the
/// exponents are shifted by a common constant, which cancels in the
/// normalization and keeps the exponentials in range.
pub fn exact_rank1_solution(rho0: &CMat, ctx: &QllgContext, t: f64) -> Result<CMat> {
    if rho0.nrows() != ctx.dim() {
        return Err(QllgError::DimensionMismatch(format!(
            "state of dimension {}, Hamiltonian of dimension {}",
            rho0.nrows(),
            ctx.dim()
        )));
    }
    let spectrum = hermitian_eigendecomposition(rho0.as_ref())?.eigenvalues;
    let second = if spectrum.len() >= 2 { spectrum[spectrum.len() - 2] } else { 0.0 };
    if second > 1e-10 {
        return Err(QllgError::NotRankOne(second));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }

    let hd = hermitian_eigendecomposition(ctx.hamiltonian.as_ref())?;
    let c = C64::new(1.0, -ctx.kappa) / (1.0 + ctx.kappa * ctx.kappa);
    let exponents: Vec<C64> = hd.eigenvalues.iter().map(|&e| C64::new(0.0, -1.0 / ctx.hbar) * c * e * t).collect();
    let shift = exponents.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let v = &hd.vectors;
    let n = v.nrows();
    let scaled = Mat::from_fn(n, n, |i, k| v[(i, k)] * (exponents[k] - shift).exp());
    let propagator = scaled * v.adjoint();

    let evolved = &propagator * rho0 * propagator.adjoint();
    let norm = linalg::trace(evolved.as_ref()).re;
    Ok(linalg::hermitize(evolved.as_ref()) * faer::Scale(C64::new(1.0 / norm, 0.0)))
}

/// Solves `M vec(f) = vec((i/hbar)[rho, H])` with
/// `M = I x I - i kappa (I x rho - rho^T x I)` (column-stacking `vec`) by
/// dense LU, then symmetrizes.
pub fn brute_force_rhs(rho: &CMat, ctx: &QllgContext) -> Result<CMat> {
    let n = rho.nrows();
    if n > BRUTE_FORCE_MAX_DIM {
        return Err(QllgError::DimensionOverflow { dim: n * n, cap: BRUTE_FORCE_MAX_DIM * BRUTE_FORCE_MAX_DIM });
    }
    if n != ctx.dim() || rho.ncols() != n {
        return Err(QllgError::DimensionMismatch(format!(
            "state of dimension {n}, Hamiltonian of dimension {}",
            ctx.dim()
        )));
    }
    let big = n * n;
    let ik = C64::new(0.0, ctx.kappa);
    let system = Mat::from_fn(big, big, |row, col| {
        let (i, j) = (row % n, row / n);
        let (k, l) = (col % n, col / n);
        let mut m = C64::new(0.0, 0.0);
        if row == col {
            m += 1.0;
        }
        if j == l {
            m -= ik * rho[(i, k)];
        }
        if i == k {
            m += ik * rho[(l, j)];
        }
        m
    });
    let commutator = linalg::commutator(rho.as_ref(), ctx.hamiltonian.as_ref())?;
    let i_over_hbar = C64::new(0.0, 1.0 / ctx.hbar);
    let rhs = Mat::from_fn(big, 1, |row, _| i_over_hbar * commutator[(row % n, row / n)]);

    let solution = system.partial_piv_lu().solve(&rhs);
    let residual = &system * &solution - &rhs;
    let scale = linalg::frobenius_norm(rhs.as_ref()).max(1.0);
    if !linalg::is_finite(solution.as_ref()) || linalg::frobenius_norm(residual.as_ref()) > 1e-8 * scale {
        return Err(QllgError::SingularSystem);
    }
    let f = Mat::from_fn(n, n, |i, j| solution[(i + j * n, 0)]);
    Ok(linalg::hermitize(f.as_ref()))
}

#[derive(Clone, Debug)]
pub struct Method {
    pub tableau: ButcherTableau,
    pub conservative: bool,
}

impl Method {
    pub fn preset(name: &str, conservative: bool) -> Result<Self> {
        Ok(Self { tableau: preset_tableau(name)?, conservative })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    /// Closed-form rank-one solution.
    ExactRank1,
    /// Conservative RK4 at a tenth of the smallest step.
    FineRk4,
}

#[derive(Clone, Debug)]
pub struct MethodConvergence {
    pub method: String,
    pub conservative: bool,
    pub nominal_order: usize,
    /// Frobenius distance to the reference at `t_final`, one per step size.
    pub errors: Vec<f64>,
    /// `ln(e_{i-1}/e_i) / ln(h_{i-1}/h_i)`; `None` for the first step size or
    /// when either error is exact.
    pub pairwise_orders: Vec<Option<f64>>,
    /// Least-squares slope of `ln e` against `ln h`.
    pub slope: Option<f64>,
    /// Every error is at or below [`CONSERVED_ERROR`].
    pub conserved: bool,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub step_sizes: Vec<f64>,
    pub t_final: f64,
    pub reference: Reference,
    pub methods: Vec<MethodConvergence>,
}

/// Least-squares slope of `ln y` against `ln x`, if at least two points.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, &e)| e > 0.0).map(|(&h, &e)| (h.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

fn final_state(rho0: &CMat, ctx: &QllgContext, method: &Method, h: f64, t_final: f64) -> Result<CMat> {
    let mut cfg = IntegratorConfig::new(method.tableau.clone(), method.conservative, h, t_final);
    cfg.sample_stride = usize::MAX;
    Ok(integrate(rho0, ctx, &cfg, &[])?.final_state)
}

/// Errors at `t_final` against the chosen reference for every method and
/// step size, with fitted and pairwise orders.
pub fn convergence_study(
    rho0: &CMat,
    ctx: &QllgContext,
    methods: &[Method],
    step_sizes: &[f64],
    t_final: f64,
    reference: Reference,
) -> Result<ConvergenceReport> {
    if step_sizes.is_empty() {
        return Err(QllgError::InvalidConfig("need at least one step size".into()));
    }
    if step_sizes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(QllgError::InvalidConfig("step sizes must be strictly decreasing".into()));
    }
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(QllgError::InvalidConfig(format!("t_final must be positive, got {t_final}")));
    }

    let target = match reference {
        Reference::ExactRank1 => exact_rank1_solution(rho0, ctx, t_final)?,
        Reference::FineRk4 => {
            let fine = step_sizes[step_sizes.len() - 1] / 10.0;
            final_state(rho0, ctx, &Method::preset("rk4", true)?, fine, t_final)?
        }
    };

    let mut results = Vec::with_capacity(methods.len());
    for method in methods {
        let errors = step_sizes
            .iter()
            .map(|&h| {
                let state = final_state(rho0, ctx, method, h, t_final)?;
                Ok(linalg::frobenius_distance(state.as_ref(), target.as_ref()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let conserved = errors.iter().all(|&e| e <= CONSERVED_ERROR);
        let pairwise_orders = (0..errors.len())
            .map(|i| {
                if i == 0 || conserved || errors[i] <= 0.0 || errors[i - 1] <= 0.0 {
                    None
                } else {
                    Some((errors[i - 1] / errors[i]).ln() / (step_sizes[i - 1] / step_sizes[i]).ln())
                }
            })
            .collect();
        let slope = if conserved { None } else { log_log_slope(step_sizes, &errors) };
        results.push(MethodConvergence {
            method: method.tableau.name().to_string(),
            conservative: method.conservative,
            nominal_order: method.tableau.nominal_order(),
            errors,
            pairwise_orders,
            slope,
            conserved,
        });
    }
    Ok(ConvergenceReport { step_sizes: step_sizes.to_vec(), t_final, reference, methods: results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::qllg_rhs;
    use crate::linalg::testing::{random_density, random_hermitian};
    use crate::linalg::{commutator, frobenius_distance, frobenius_norm, outer};
    use crate::spin::{self, DmiMode, HamiltonianSpec, LatticeSpec, PhysicalConstants};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair_context(kappa: f64) -> QllgContext {
        let spec = HamiltonianSpec {
            exchange: 1.0,
            dmi_magnitude: 0.4,
            dmi_mode: DmiMode::ZAligned,
            dmi_sign: 1.0,
            field: [1.0, 0.0, 0.0],
            lattice: LatticeSpec::pair(),
            constants: PhysicalConstants::default(),
        };
        let ops = spin::build_spin_operators(2, &spec.constants).unwrap();
        let h = spin::build_hamiltonian(&spec, &ops, &spec.bonds().unwrap()).unwrap();
        QllgContext::new(h, kappa, spec.constants.hbar).unwrap()
    }

    fn af1() -> CMat {
        outer(&spin::af_state(1, 2).unwrap())
    }

    #[test]
    fn exact_solution_at_zero_is_identity_map() {
        let ctx = pair_context(0.5);
        assert!(exact_rank1_solution(&af1(), &ctx, 0.0).unwrap() == af1());
    }

    #[test]
    fn exact_solution_rejects_mixed_states() {
        let ctx = pair_context(0.5);
        let mixed = linalg::from_real_diagonal(&[0.25; 4]);
        assert!(matches!(exact_rank1_solution(&mixed, &ctx, 1.0), Err(QllgError::NotRankOne(_))));
    }

    #[test]
    fn exact_solution_conserves_spectrum() {
        let ctx = pair_context(0.5);
        for t in [0.1, 0.5, 1.0, 3.0] {
            let rho = exact_rank1_solution(&af1(), &ctx, t).unwrap();
            let spectrum = hermitian_eigendecomposition(rho.as_ref()).unwrap().eigenvalues;
            for (a, b) in spectrum.iter().zip([0.0, 0.0, 0.0, 1.0]) {
                assert!((a - b).abs() <= 1e-11);
            }
        }
    }

    #[test]
    fn undamped_exact_solution_is_unitary() {
        let ctx = pair_context(0.0);
        let e0 = linalg::trace_of_product(ctx.hamiltonian.as_ref(), af1().as_ref()).re;
        for t in [0.3, 1.0, 2.0] {
            let rho = exact_rank1_solution(&af1(), &ctx, t).unwrap();
            let e = linalg::trace_of_product(ctx.hamiltonian.as_ref(), rho.as_ref()).re;
            assert!((e - e0).abs() <= 1e-11);
        }
    }

    #[test]
    fn damped_exact_solution_dissipates_energy() {
        let ctx = pair_context(0.5);
        let energy = |t: f64| {
            let rho = exact_rank1_solution(&af1(), &ctx, t).unwrap();
            linalg::trace_of_product(ctx.hamiltonian.as_ref(), rho.as_ref()).re
        };
        assert!(energy(1.0) < energy(0.0));
    }

    #[test]
    fn exact_solution_satisfies_the_equation() {
        // Central difference of the closed form against the RHS.
        let ctx = pair_context(0.5);
        let t = 0.7;
        let dt = 1e-4;
        let plus = exact_rank1_solution(&af1(), &ctx, t + dt).unwrap();
        let minus = exact_rank1_solution(&af1(), &ctx, t - dt).unwrap();
        let derivative = (plus - minus) * faer::Scale(C64::new(0.5 / dt, 0.0));
        let rho = exact_rank1_solution(&af1(), &ctx, t).unwrap();
        let f = qllg_rhs(&rho, &ctx).unwrap();
        assert!(frobenius_distance(derivative.as_ref(), f.as_ref()) <= 1e-6 * frobenius_norm(f.as_ref()));
    }

    #[test]
    fn brute_force_basic_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ctx0 = QllgContext::new(random_hermitian(&mut rng, 4), 0.0, 0.658).unwrap();
        let rho = random_density(&mut rng, 4);
        let f = brute_force_rhs(&rho, &ctx0).unwrap();
        let vn = commutator(rho.as_ref(), ctx0.hamiltonian.as_ref()).unwrap() * faer::Scale(C64::new(0.0, 1.0 / 0.658));
        assert!(frobenius_distance(f.as_ref(), vn.as_ref()) <= 1e-13 * frobenius_norm(vn.as_ref()));

        let ctx = QllgContext::new(ctx0.hamiltonian.clone(), 0.5, 0.658).unwrap();
        let mixed = linalg::from_real_diagonal(&[0.25; 4]);
        assert!(frobenius_norm(brute_force_rhs(&mixed, &ctx).unwrap().as_ref()) <= 1e-15);
    }

    #[test]
    fn brute_force_agrees_with_sylvester_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ctx = pair_context(0.5);
        let rho = random_density(&mut rng, 4);
        let a = brute_force_rhs(&rho, &ctx).unwrap();
        let b = qllg_rhs(&rho, &ctx).unwrap();
        assert!(frobenius_distance(a.as_ref(), b.as_ref()) <= 1e-10 * frobenius_norm(a.as_ref()).max(1.0));
    }

    #[test]
    fn brute_force_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ctx = QllgContext::new(random_hermitian(&mut rng, 8), 2.0, 0.658).unwrap();
        let rho = random_density(&mut rng, 8);
        let f = brute_force_rhs(&rho, &ctx).unwrap();
        let vn = commutator(rho.as_ref(), ctx.hamiltonian.as_ref()).unwrap() * faer::Scale(C64::new(0.0, 1.0 / 0.658));
        let damping = commutator(rho.as_ref(), f.as_ref()).unwrap() * faer::Scale(C64::new(0.0, 2.0));
        let residual = &f - vn - damping;
        assert!(frobenius_norm(residual.as_ref()) <= 1e-11 * frobenius_norm(f.as_ref()).max(1.0));
    }

    #[test]
    fn brute_force_dimension_cap() {
        let ctx = QllgContext::new(linalg::identity(128), 0.5, 0.658).unwrap();
        let rho = linalg::from_real_diagonal(&[1.0 / 128.0; 128]);
        assert!(matches!(brute_force_rhs(&rho, &ctx), Err(QllgError::DimensionOverflow { .. })));
    }

    #[test]
    fn slope_fit() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((log_log_slope(&h, &e).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&[0.1], &[1.0]), None);
    }

    #[test]
    fn stationary_problem_is_conserved() {
        let ctx = pair_context(0.0);
        let hd = hermitian_eigendecomposition(ctx.hamiltonian.as_ref()).unwrap();
        let ground = (0..4).map(|i| hd.vectors[(i, 0)]).collect::<Vec<_>>();
        let rho0 = outer(&ground);
        let methods: Vec<Method> = ["euler", "rk4"].iter().map(|m| Method::preset(m, false).unwrap()).collect();
        let report = convergence_study(&rho0, &ctx, &methods, &[0.1, 0.05, 0.025], 1.0, Reference::ExactRank1).unwrap();
        for m in &report.methods {
            assert!(m.conserved, "{}: {:?}", m.method, m.errors);
            assert!(m.slope.is_none());
        }
    }

    #[test]
    fn conservative_orders_on_pair() {
        let ctx = pair_context(0.5);
        let methods: Vec<Method> = ["euler", "rk4"].iter().map(|m| Method::preset(m, true).unwrap()).collect();
        let report =
            convergence_study(&af1(), &ctx, &methods, &[0.1, 0.05, 0.025, 0.0125], 1.0, Reference::ExactRank1).unwrap();
        let euler = report.methods[0].slope.unwrap();
        let rk4 = report.methods[1].slope.unwrap();
        assert!((0.7..=1.3).contains(&euler), "euler slope {euler}");
        assert!((3.7..=4.3).contains(&rk4), "rk4 slope {rk4}");
        assert_eq!(report.methods[0].pairwise_orders[0], None);
    }

    #[test]
    fn fine_reference_and_single_step_size() {
        let ctx = pair_context(0.5);
        let rho0 = spin::build_initial_state(&spin::InitialStateSpec { p: [0.5, 0.0, 0.0, 0.0, 0.5] }, 2).unwrap();
        let methods = vec![Method::preset("rk2", true).unwrap()];
        let report = convergence_study(&rho0, &ctx, &methods, &[0.05], 0.5, Reference::FineRk4).unwrap();
        assert_eq!(report.methods[0].errors.len(), 1);
        assert!(report.methods[0].slope.is_none());
        assert!(convergence_study(&rho0, &ctx, &methods, &[0.05], 0.5, Reference::ExactRank1).is_err());
        assert!(convergence_study(&rho0, &ctx, &methods, &[0.05, 0.1], 0.5, Reference::FineRk4).is_err());
    }
}
