//! Explicit Runge-Kutta stepping for matrix-valued flows, plus the
//! isospectral variant that projects every stage back onto the spectrum of
//! the initial state.

use faer::Scale;
use num_complex::Complex64 as C64;

use crate::dynamics::VectorField;
use crate::error::{QllgError, Result};
use crate::linalg::{self, hermitian_eigendecomposition, CMat, Diagnostics, SpectralDecomposition};

/// Frobenius norm beyond which a trajectory is declared blown up.
pub const BLOWUP_NORM: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau {
    name: String,
    /// Full `s x s` matrix, zero on and above the diagonal.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    nominal_order: usize,
}

impl ButcherTableau {
    pub fn new(name: impl Into<String>, a: Vec<Vec<f64>>, b: Vec<f64>, nominal_order: usize) -> Result<Self> {
        let s = b.len();
        if s == 0 {
            return Err(QllgError::InvalidTableau("no stages".into()));
        }
        if a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(QllgError::InvalidTableau(format!("`a` must be {s}x{s}")));
        }
        for (l, row) in a.iter().enumerate() {
            if row[l..].iter().any(|&x| x != 0.0) {
                return Err(QllgError::InvalidTableau(format!("row {} is not strictly lower triangular", l + 1)));
            }
        }
        let sum: f64 = b.iter().sum();
        if (sum - 1.0).abs() > 1e-14 {
            return Err(QllgError::InvalidTableau(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { name: name.into(), a, b, nominal_order })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self, stage: usize, j: usize) -> f64 {
        self.a[stage][j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.b
    }

    pub fn nominal_order(&self) -> usize {
        self.nominal_order
    }
}

/// `euler`, `rk2` (Heun), `rk3` (Kutta) or `rk4` (classical).
pub fn preset_tableau(name: &str) -> Result<ButcherTableau> {
    let (a, b, order) = match name {
        "euler" => (vec![vec![0.0]], vec![1.0], 1),
        "rk2" => (vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![0.5, 0.5], 2),
        "rk3" => (
            vec![vec![0.0, 0.0, 0.0], vec![0.5, 0.0, 0.0], vec![-1.0, 2.0, 0.0]],
            vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            3,
        ),
        "rk4" => (
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![0.5, 0.0, 0.0, 0.0],
                vec![0.0, 0.5, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
            4,
        ),
        other => return Err(QllgError::UnknownTableau(other.to_string())),
    };
    ButcherTableau::new(name, a, b, order)
}

pub const PRESET_NAMES: [&str; 4] = ["euler", "rk2", "rk3", "rk4"];

/// `base + h sum_j coeffs[j] slopes[j]`, skipping zero coefficients.
fn combine(base: &CMat, h: f64, coeffs: impl Iterator<Item = f64>, slopes: &[CMat]) -> CMat {
    let mut out = base.clone();
    for (coeff, slope) in coeffs.zip(slopes) {
        if coeff != 0.0 {
            out += slope * Scale(C64::new(h * coeff, 0.0));
        }
    }
    out
}

/// One explicit RK step. Preserves Hermiticity and trace; does not preserve
/// positivity or the traces of higher powers.
pub fn rk_step<F: VectorField + ?Sized>(rho: &CMat, h: f64, tableau: &ButcherTableau, rhs: &F) -> Result<CMat> {
    check_step(h)?;
    let mut slopes: Vec<CMat> = Vec::with_capacity(tableau.stages());
    for stage in 0..tableau.stages() {
        let z = if stage == 0 {
            rhs.eval(rho)?
        } else {
            let z = combine(rho, h, (0..stage).map(|j| tableau.a(stage, j)), &slopes);
            rhs.eval(&z)?
        };
        slopes.push(z);
    }
    Ok(combine(rho, h, tableau.weights().iter().copied(), &slopes))
}

fn check_step(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(QllgError::InvalidConfig(format!("step size must be positive, got {h}")));
    }
    Ok(())
}

/// Ascending spectrum that the conservative scheme pins every stage to.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSpectrum {
    lambda0: Vec<f64>,
}

impl ReferenceSpectrum {
    pub fn new(mut lambda0: Vec<f64>) -> Result<Self> {
        lambda0.sort_by(f64::total_cmp);
        if lambda0.is_empty() || lambda0.iter().any(|x| !x.is_finite()) {
            return Err(QllgError::InvalidDensityMatrix("reference spectrum must be finite and non-empty".into()));
        }
        if lambda0[0] < linalg::MIN_EIGENVALUE_TOL {
            return Err(QllgError::InvalidDensityMatrix(format!(
                "reference spectrum has negative eigenvalue {:e}",
                lambda0[0]
            )));
        }
        let sum: f64 = lambda0.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(QllgError::InvalidDensityMatrix(format!("reference spectrum sums to {sum}")));
        }
        Ok(Self { lambda0 })
    }

    pub fn from_state(rho: &CMat) -> Result<Self> {
        Self::new(hermitian_eigendecomposition(rho.as_ref())?.eigenvalues)
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda0
    }
}

fn project(z: &CMat, lambda0: &ReferenceSpectrum) -> Result<SpectralDecomposition> {
    if z.nrows() != lambda0.values().len() {
        return Err(QllgError::DimensionMismatch(format!(
            "state of dimension {} against a spectrum of length {}",
            z.nrows(),
            lambda0.values().len()
        )));
    }
    let decomp = hermitian_eigendecomposition(z.as_ref())?;
    Ok(SpectralDecomposition { eigenvalues: lambda0.values().to_vec(), vectors: decomp.vectors })
}

/// Replaces the ascending eigenvalues of `z` by the ascending `lambda0`,
/// keeping the eigenvectors: `V diag(lambda0) V*`.
pub fn spectral_projection(z: &CMat, lambda0: &ReferenceSpectrum) -> Result<CMat> {
    Ok(project(z, lambda0)?.reconstruct())
}

/// Conservative step starting from a state with known factorization
/// (`current.eigenvalues` must be the reference spectrum) or from a plain
/// matrix. Returns the projected output in factored form.
fn conservative_step_factored<F: VectorField + ?Sized>(
    rho: &CMat,
    current: Option<&SpectralDecomposition>,
    h: f64,
    tableau: &ButcherTableau,
    lambda0: &ReferenceSpectrum,
    rhs: &F,
) -> Result<SpectralDecomposition> {
    check_step(h)?;
    let mut slopes: Vec<CMat> = Vec::with_capacity(tableau.stages());
    for stage in 0..tableau.stages() {
        let slope = if stage == 0 {
            match current {
                Some(decomp) => rhs.eval_decomposed(decomp)?,
                None => rhs.eval(rho)?,
            }
        } else {
            let z_tilde = combine(rho, h, (0..stage).map(|j| tableau.a(stage, j)), &slopes);
            let z = project(&z_tilde, lambda0)?;
            rhs.eval_decomposed(&z)?
        };
        slopes.push(slope);
    }
    let rho_tilde = combine(rho, h, tableau.weights().iter().copied(), &slopes);
    project(&rho_tilde, lambda0)
}

/// One spectrum-preserving RK step: every stage state after the first, and
/// the combined update, are passed through [`spectral_projection`].
pub fn conservative_rk_step<F: VectorField + ?Sized>(
    rho: &CMat,
    h: f64,
    tableau: &ButcherTableau,
    lambda0: &ReferenceSpectrum,
    rhs: &F,
) -> Result<CMat> {
    Ok(conservative_step_factored(rho, None, h, tableau, lambda0, rhs)?.reconstruct())
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub tableau: ButcherTableau,
    pub conservative: bool,
    /// ps
    pub h: f64,
    /// ps
    pub t_final: f64,
    /// Record every `sample_stride`-th step; the last step is always recorded.
    pub sample_stride: usize,
}

impl IntegratorConfig {
    pub fn new(tableau: ButcherTableau, conservative: bool, h: f64, t_final: f64) -> Self {
        Self { tableau, conservative, h, t_final, sample_stride: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        check_step(self.h)?;
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(QllgError::InvalidConfig(format!("t_final must be non-negative, got {}", self.t_final)));
        }
        if self.t_final > 0.0 && self.h > self.t_final {
            return Err(QllgError::InvalidConfig(format!("step size {} exceeds t_final {}", self.h, self.t_final)));
        }
        if self.sample_stride == 0 {
            return Err(QllgError::InvalidConfig("sample_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Step end times; the last one is exactly `t_final`, and a final partial
    /// step is appended when `t_final` is not a multiple of `h`.
    pub fn schedule(&self) -> Vec<f64> {
        if self.t_final == 0.0 {
            return Vec::new();
        }
        let ratio = self.t_final / self.h;
        let mut full = ratio.round();
        if (ratio - full).abs() > 1e-9 * ratio.max(1.0) {
            full = ratio.floor();
        }
        let full = full as usize;
        let mut times: Vec<f64> = (1..=full).map(|k| k as f64 * self.h).collect();
        let covered = full as f64 * self.h;
        if self.t_final - covered > 1e-12 * self.t_final.max(1.0) {
            times.push(self.t_final);
        } else if let Some(last) = times.last_mut() {
            *last = self.t_final;
        }
        times
    }
}

/// A scalar measurement taken at every recorded sample.
pub trait Observer {
    fn name(&self) -> String;
    fn observe(&self, rho: &CMat) -> Result<f64>;
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    /// ps, strictly increasing
    pub times: Vec<f64>,
    pub diagnostics: Vec<Diagnostics>,
    pub observable_names: Vec<String>,
    /// One row per sample, one column per observer.
    pub observables: Vec<Vec<f64>>,
    pub final_state: CMat,
    pub steps_taken: usize,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.observable_names.iter().position(|n| n == name)?;
        Some(self.observables.iter().map(|row| row[idx]).collect())
    }
}

fn sample(record: &mut TrajectoryRecord, t: f64, rho: &CMat, observers: &[&dyn Observer]) -> Result<()> {
    let diag = linalg::diagnostics(rho.as_ref());
    let mut row = Vec::with_capacity(observers.len());
    for o in observers {
        match o.observe(rho) {
            Ok(x) => row.push(x),
            Err(e) => return Err(blowup(record, t, format!("observer {} failed: {e}", o.name()))),
        }
    }
    record.times.push(t);
    record.diagnostics.push(diag);
    record.observables.push(row);
    record.final_state = rho.clone();
    if !diag.is_finite() {
        return Err(blowup(record, t, "non-finite diagnostics".into()));
    }
    Ok(())
}

fn blowup(record: &TrajectoryRecord, time: f64, reason: String) -> QllgError {
    QllgError::NumericalBlowup { time, reason, partial: Box::new(record.clone()) }
}

/// Drives `rhs` from `rho0` to `config.t_final`.
///
/// The conservative family pins the spectrum of `rho0`. Once stepping has
/// started, any failure aborts the run with [`QllgError::NumericalBlowup`],
/// which carries the samples recorded so far: a non-finite state, a Frobenius
/// norm above [`BLOWUP_NORM`], non-finite diagnostics, a failed step or a
/// failed observer.
pub fn integrate<F: VectorField + ?Sized>(
    rho0: &CMat,
    rhs: &F,
    config: &IntegratorConfig,
    observers: &[&dyn Observer],
) -> Result<TrajectoryRecord> {
    config.validate()?;
    linalg::check_density_matrix(rho0.as_ref())?;
    let reference = if config.conservative { Some(ReferenceSpectrum::from_state(rho0)?) } else { None };

    let mut record = TrajectoryRecord {
        times: Vec::new(),
        diagnostics: Vec::new(),
        observable_names: observers.iter().map(|o| o.name()).collect(),
        observables: Vec::new(),
        final_state: rho0.clone(),
        steps_taken: 0,
    };
    sample(&mut record, 0.0, rho0, observers)?;

    let schedule = config.schedule();
    let mut rho = rho0.clone();
    let mut factored: Option<SpectralDecomposition> = None;
    let mut t_prev = 0.0;
    for (k, &t) in schedule.iter().enumerate() {
        let last = k + 1 == schedule.len();
        let is_partial = last && (t - t_prev) < config.h * (1.0 - 1e-9);
        let h = if is_partial { t - t_prev } else { config.h };

        let stepped = match &reference {
            Some(lambda0) => {
                conservative_step_factored(&rho, factored.as_ref(), h, &config.tableau, lambda0, rhs).map(|next| {
                    let m = next.reconstruct();
                    factored = Some(next);
                    m
                })
            }
            None => rk_step(&rho, h, &config.tableau, rhs),
        };
        rho = stepped.map_err(|e| blowup(&record, t, format!("step failed: {e}")))?;
        record.steps_taken = k + 1;

        let norm = linalg::frobenius_norm(rho.as_ref());
        if !norm.is_finite() || norm > BLOWUP_NORM {
            return Err(blowup(&record, t, format!("state norm {norm:e}")));
        }
        if last || (k + 1) % config.sample_stride == 0 {
            sample(&mut record, t, &rho, observers)?;
        }
        t_prev = t;
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QllgContext;
    use crate::linalg::testing::{random_density, random_hermitian};
    use crate::linalg::{frobenius_distance, frobenius_norm, hermiticity_residual, outer, trace};
    use crate::spin::{self, DmiMode, HamiltonianSpec, LatticeSpec, PhysicalConstants};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

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

    fn af1_pair() -> CMat {
        outer(&spin::af_state(1, 2).unwrap())
    }

    #[test]
    fn presets() {
        let euler = preset_tableau("euler").unwrap();
        assert_eq!((euler.stages(), euler.nominal_order()), (1, 1));
        let rk4 = preset_tableau("rk4").unwrap();
        assert_eq!((rk4.stages(), rk4.nominal_order()), (4, 4));
        let rk3 = preset_tableau("rk3").unwrap();
        assert!((rk3.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-15);
        assert_eq!(preset_tableau("rk2").unwrap().a(1, 0), 1.0);
        assert!(matches!(preset_tableau("dopri"), Err(QllgError::UnknownTableau(_))));
    }

    #[test]
    fn tableau_validation() {
        assert!(matches!(ButcherTableau::new("bad", vec![vec![0.0]], vec![0.9], 1), Err(QllgError::InvalidTableau(_))));
        assert!(matches!(
            ButcherTableau::new("implicit", vec![vec![0.5, 0.0], vec![0.5, 0.0]], vec![0.5, 0.5], 2),
            Err(QllgError::InvalidTableau(_))
        ));
    }

    #[test]
    fn stationary_state_is_fixed() {
        let rhs = |s: &CMat| -> Result<CMat> { Ok(linalg::zeros(s.nrows())) };
        let rho = af1_pair();
        for name in PRESET_NAMES {
            let tab = preset_tableau(name).unwrap();
            assert!(rk_step(&rho, 0.1, &tab, &rhs).unwrap() == rho);
            let lambda0 = ReferenceSpectrum::from_state(&rho).unwrap();
            let out = conservative_rk_step(&rho, 0.1, &tab, &lambda0, &rhs).unwrap();
            assert!(frobenius_distance(out.as_ref(), rho.as_ref()) <= 1e-12);
        }
    }

    #[test]
    fn euler_is_one_stage_expansion() {
        let ctx = pair_context(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(&mut rng, 4);
        let out = rk_step(&rho, 0.01, &preset_tableau("euler").unwrap(), &ctx).unwrap();
        let f = ctx.eval(&rho).unwrap();
        let expected = &rho + f * Scale(c(0.01, 0.0));
        assert!(frobenius_distance(out.as_ref(), expected.as_ref()) == 0.0);
    }

    #[test]
    fn standard_euler_keeps_trace_but_loses_purity() {
        let ctx = pair_context(0.5);
        let tab = preset_tableau("euler").unwrap();
        let mut rho = af1_pair();
        let mut max_purity_drift: f64 = 0.0;
        for _ in 0..100 {
            rho = rk_step(&rho, 0.01, &tab, &ctx).unwrap();
            assert!((trace(rho.as_ref()).re - 1.0).abs() <= 1e-12);
            let d = linalg::diagnostics(rho.as_ref());
            max_purity_drift = max_purity_drift.max((d.trace_sq - 1.0).abs());
        }
        assert!(max_purity_drift > 1e-6, "purity drift {max_purity_drift:e}");
    }

    #[test]
    fn standard_steps_preserve_hermiticity_and_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ctx = QllgContext::new(random_hermitian(&mut rng, 8), 0.5, 0.658).unwrap();
        for name in PRESET_NAMES {
            let tab = preset_tableau(name).unwrap();
            let rho = random_density(&mut rng, 8);
            let out = rk_step(&rho, 0.01, &tab, &ctx).unwrap();
            assert!(hermiticity_residual(out.as_ref()) <= 1e-12 * frobenius_norm(out.as_ref()).max(1.0));
            assert!((trace(out.as_ref()) - trace(rho.as_ref())).norm() <= 1e-13);
        }
    }

    #[test]
    fn conservative_step_pins_rank_one_spectrum() {
        let ctx = pair_context(0.5);
        let rho = af1_pair();
        let lambda0 = ReferenceSpectrum::from_state(&rho).unwrap();
        for name in PRESET_NAMES {
            let out = conservative_rk_step(&rho, 0.05, &preset_tableau(name).unwrap(), &lambda0, &ctx).unwrap();
            let spectrum = hermitian_eigendecomposition(out.as_ref()).unwrap().eigenvalues;
            let expected = [0.0, 0.0, 0.0, 1.0];
            for (a, b) in spectrum.iter().zip(expected) {
                assert!((a - b).abs() <= 1e-11, "{name}: {spectrum:?}");
            }
        }
    }

    /// Unitary propagation through the eigendecomposition of H.
    fn unitary_evolution(rho: &CMat, ctx: &QllgContext, t: f64) -> CMat {
        let hd = hermitian_eigendecomposition(ctx.hamiltonian.as_ref()).unwrap();
        let v = &hd.vectors;
        let n = v.nrows();
        let phases =
            faer::Mat::from_fn(n, n, |i, k| v[(i, k)] * C64::from_polar(1.0, -hd.eigenvalues[k] * t / ctx.hbar));
        let u = phases * v.adjoint();
        &u * rho * u.adjoint()
    }

    #[test]
    fn conservative_rk4_local_error_is_fifth_order_without_damping() {
        let ctx = pair_context(0.0);
        let rho = af1_pair();
        let lambda0 = ReferenceSpectrum::from_state(&rho).unwrap();
        let tab = preset_tableau("rk4").unwrap();
        let err = |h: f64| {
            let out = conservative_rk_step(&rho, h, &tab, &lambda0, &ctx).unwrap();
            frobenius_distance(out.as_ref(), unitary_evolution(&rho, &ctx, h).as_ref())
        };
        let ratio = err(0.1) / err(0.05);
        // local error O(h^5): halving h divides it by ~32
        assert!((24.0..40.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn projection_examples() {
        let z = linalg::from_real_diagonal(&[0.6, 0.4]);
        let lambda0 = ReferenceSpectrum::new(vec![0.0, 1.0]).unwrap();
        let out = spectral_projection(&z, &lambda0).unwrap();
        assert!(frobenius_distance(out.as_ref(), linalg::from_real_diagonal(&[1.0, 0.0]).as_ref()) <= 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho = random_density(&mut rng, 8);
        let lambda0 = ReferenceSpectrum::from_state(&rho).unwrap();
        let again = spectral_projection(&rho, &lambda0).unwrap();
        assert!(frobenius_distance(again.as_ref(), rho.as_ref()) <= 1e-12);

        let arbitrary = random_hermitian(&mut rng, 8);
        let out = spectral_projection(&arbitrary, &lambda0).unwrap();
        assert!((trace(out.as_ref()).re - 1.0).abs() <= 1e-13);
    }

    #[test]
    fn reference_spectrum_validation() {
        assert!(ReferenceSpectrum::new(vec![0.5, 0.4]).is_err());
        assert!(ReferenceSpectrum::new(vec![1.1, -0.1]).is_err());
        assert_eq!(ReferenceSpectrum::new(vec![0.7, 0.3]).unwrap().values(), &[0.3, 0.7]);
    }

    #[test]
    fn schedules() {
        let tab = preset_tableau("euler").unwrap();
        assert!(IntegratorConfig::new(tab.clone(), false, 0.02, 0.0).schedule().is_empty());
        let s = IntegratorConfig::new(tab.clone(), false, 0.02, 0.05).schedule();
        assert_eq!(s, vec![0.02, 0.04, 0.05]);
        let s = IntegratorConfig::new(tab.clone(), false, 0.02, 1.0).schedule();
        assert_eq!(s.len(), 50);
        assert_eq!(*s.last().unwrap(), 1.0);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(IntegratorConfig::new(tab.clone(), false, 0.5, 0.2).validate().is_err());
        assert!(IntegratorConfig::new(tab, false, -0.1, 1.0).validate().is_err());
    }

    #[test]
    fn integrate_zero_time_records_initial_sample() {
        let ctx = pair_context(0.5);
        let cfg = IntegratorConfig::new(preset_tableau("rk4").unwrap(), true, 0.02, 0.0);
        let rec = integrate(&af1_pair(), &ctx, &cfg, &[]).unwrap();
        assert_eq!(rec.times, vec![0.0]);
        assert_eq!(rec.steps_taken, 0);
    }

    #[test]
    fn integrate_truncates_final_step() {
        let ctx = pair_context(0.5);
        let cfg = IntegratorConfig::new(preset_tableau("rk4").unwrap(), true, 0.02, 0.05);
        let rec = integrate(&af1_pair(), &ctx, &cfg, &[]).unwrap();
        assert_eq!(rec.times, vec![0.0, 0.02, 0.04, 0.05]);
        // the partial step matches a direct step of 0.01 from the t = 0.04 state
        let cfg4 = IntegratorConfig::new(preset_tableau("rk4").unwrap(), true, 0.02, 0.04);
        let at4 = integrate(&af1_pair(), &ctx, &cfg4, &[]).unwrap().final_state;
        let lambda0 = ReferenceSpectrum::from_state(&af1_pair()).unwrap();
        let direct = conservative_rk_step(&at4, 0.01, &preset_tableau("rk4").unwrap(), &lambda0, &ctx).unwrap();
        assert!(frobenius_distance(direct.as_ref(), rec.final_state.as_ref()) <= 1e-13);
    }

    #[test]
    fn integrate_paper_pair_conservative_rk4() {
        let ctx = pair_context(0.5);
        let cfg = IntegratorConfig::new(preset_tableau("rk4").unwrap(), true, 0.02, 1.0);
        let rec = integrate(&af1_pair(), &ctx, &cfg, &[]).unwrap();
        assert_eq!(rec.steps_taken, 50);
        assert_eq!(rec.len(), 51);
        for d in &rec.diagnostics {
            assert!((d.trace - 1.0).abs() <= 1e-12);
            assert!((d.trace_sq - 1.0).abs() <= 1e-10);
            assert!((d.trace_cube - 1.0).abs() <= 1e-10);
            assert!(d.min_eigenvalue >= -1e-10);
            assert!(d.hermiticity_residual <= 1e-12);
        }
    }

    #[test]
    fn sample_stride_keeps_last_step() {
        let ctx = pair_context(0.5);
        let mut cfg = IntegratorConfig::new(preset_tableau("rk2").unwrap(), true, 0.1, 1.0);
        cfg.sample_stride = 3;
        let rec = integrate(&af1_pair(), &ctx, &cfg, &[]).unwrap();
        // steps 3, 6, 9 plus the final step 10
        assert_eq!(rec.len(), 5);
        assert_eq!(*rec.times.last().unwrap(), 1.0);
        cfg.sample_stride = 5;
        assert_eq!(integrate(&af1_pair(), &ctx, &cfg, &[]).unwrap().len(), 3);
    }

    struct FailsAfter(std::cell::Cell<usize>);

    impl Observer for FailsAfter {
        fn name(&self) -> String {
            "flaky".into()
        }

        fn observe(&self, _: &CMat) -> Result<f64> {
            let left = self.0.get();
            if left == 0 {
                return Err(QllgError::NonConvergence);
            }
            self.0.set(left - 1);
            Ok(left as f64)
        }
    }

    #[test]
    fn observer_failure_keeps_earlier_samples() {
        let ctx = pair_context(0.5);
        let cfg = IntegratorConfig::new(preset_tableau("rk2").unwrap(), true, 0.1, 1.0);
        let flaky = FailsAfter(std::cell::Cell::new(3));
        match integrate(&af1_pair(), &ctx, &cfg, &[&flaky]) {
            Err(QllgError::NumericalBlowup { partial, reason, .. }) => {
                assert_eq!(partial.len(), 3);
                assert_eq!(partial.column("flaky").unwrap(), vec![3.0, 2.0, 1.0]);
                assert!(reason.contains("flaky"), "{reason}");
            }
            other => panic!("expected an aborted run, got {other:?}"),
        }
    }

    #[test]
    fn blowup_returns_partial_record() {
        let rhs = |s: &CMat| -> Result<CMat> { Ok(s * Scale(c(100.0, 0.0))) };
        let cfg = IntegratorConfig::new(preset_tableau("euler").unwrap(), false, 0.5, 10.0);
        match integrate(&af1_pair(), &rhs, &cfg, &[]) {
            Err(QllgError::NumericalBlowup { partial, time, .. }) => {
                assert!(!partial.is_empty());
                assert!(time > 0.0 && time < 10.0);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn integrate_rejects_invalid_initial_state() {
        let ctx = pair_context(0.5);
        let cfg = IntegratorConfig::new(preset_tableau("rk4").unwrap(), false, 0.02, 0.1);
        let bad = linalg::from_real_diagonal(&[0.5, 0.5, 0.5, 0.5]);
        assert!(matches!(integrate(&bad, &ctx, &cfg, &[]), Err(QllgError::InvalidDensityMatrix(_))));
    }
}
