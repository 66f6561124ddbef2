//! Spin-1/2 lattice model: spin operators, bonds, the Heisenberg + DMI +
//! Zeeman Hamiltonian and the family of initial states.
//!
//! Units: energies in meV, time in ps, fields in T. Site indices are 1-based
//! and site 1 is the most significant qubit of a basis index.

use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{QllgError, Result};
use crate::linalg::{self, CMat};
use crate::pauli::Pauli;

/// Largest number of sites the dense representation supports.
pub const MAX_SITES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    /// meV ps
    pub hbar: f64,
    /// Bohr magneton, meV/T
    pub mu_b: f64,
    /// Lande g-factor
    pub g: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: 0.658, mu_b: 5.8e-2, g: 2.0 }
    }
}

impl PhysicalConstants {
    /// `mu = -mu_B g / hbar`, in 1/(T ps).
    pub fn mu(&self) -> f64 {
        -self.mu_b * self.g / self.hbar
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(QllgError::InvalidHamiltonian(format!("hbar must be positive, got {}", self.hbar)));
        }
        if !(self.mu_b.is_finite() && self.g.is_finite()) {
            return Err(QllgError::InvalidHamiltonian("mu_B and g must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Geometry {
    /// rows x cols grid with neighbor offsets (1,0), (0,1), (1,1).
    Triangular,
    /// Two sites joined by a single bond along x.
    Pair,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatticeSpec {
    pub geometry: Geometry,
    pub rows: usize,
    pub cols: usize,
    pub periodic: bool,
}

impl LatticeSpec {
    pub fn pair() -> Self {
        Self { geometry: Geometry::Pair, rows: 1, cols: 2, periodic: false }
    }

    pub fn triangular(rows: usize, cols: usize, periodic: bool) -> Self {
        Self { geometry: Geometry::Triangular, rows, cols, periodic }
    }

    pub fn sites(&self) -> usize {
        match self.geometry {
            Geometry::Pair => 2,
            Geometry::Triangular => self.rows * self.cols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.geometry == Geometry::Triangular {
            if self.rows == 0 || self.cols == 0 {
                return Err(QllgError::InvalidLattice(format!(
                    "dimensions must be positive, got {}x{}",
                    self.rows, self.cols
                )));
            }
            if self.sites() > MAX_SITES {
                return Err(QllgError::InvalidLattice(format!(
                    "{} sites exceed the dense limit of {MAX_SITES}",
                    self.sites()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DmiMode {
    /// `D_ij = |D| (z x r_ij)`, in-plane and perpendicular to the bond.
    InplanePerp,
    /// `D_ij = |D| z` for every bond with i < j.
    ZAligned,
}

/// An unordered nearest-neighbor pair, stored with `i < j`. `d_vector` is
/// `D_ij` for that orientation; `D_ji = -D_ij` is implied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub d_vector: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianSpec {
    /// Exchange, meV. Negative is ferromagnetic.
    pub exchange: f64,
    /// `|D|`, meV.
    pub dmi_magnitude: f64,
    pub dmi_mode: DmiMode,
    /// +1 or -1, flips the chirality of every DMI vector.
    pub dmi_sign: f64,
    /// Tesla.
    pub field: [f64; 3],
    pub lattice: LatticeSpec,
    pub constants: PhysicalConstants,
}

impl HamiltonianSpec {
    pub fn validate(&self) -> Result<()> {
        self.lattice.validate()?;
        self.constants.validate()?;
        if !self.exchange.is_finite() || self.field.iter().any(|b| !b.is_finite()) {
            return Err(QllgError::InvalidHamiltonian("exchange and field must be finite".into()));
        }
        if !(self.dmi_magnitude.is_finite() && self.dmi_magnitude >= 0.0) {
            return Err(QllgError::InvalidHamiltonian(format!(
                "DMI magnitude must be finite and non-negative, got {}",
                self.dmi_magnitude
            )));
        }
        if self.dmi_sign != 1.0 && self.dmi_sign != -1.0 {
            return Err(QllgError::InvalidHamiltonian(format!("dmi_sign must be +1 or -1, got {}", self.dmi_sign)));
        }
        Ok(())
    }

    pub fn bonds(&self) -> Result<Vec<Bond>> {
        build_bonds(&self.lattice, self.dmi_magnitude * self.dmi_sign, self.dmi_mode)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn pauli(self) -> Pauli {
        match self {
            Axis::X => Pauli::X,
            Axis::Y => Pauli::Y,
            Axis::Z => Pauli::Z,
        }
    }
}

fn check_site_count(n: usize) -> Result<usize> {
    if n == 0 {
        return Err(QllgError::InvalidLattice("need at least one site".into()));
    }
    if n > MAX_SITES {
        return Err(QllgError::DimensionOverflow { dim: 1usize << n.min(63), cap: linalg::DEFAULT_DIM_CAP });
    }
    Ok(1usize << n)
}

/// A product of single-site Pauli matrices with a complex prefactor.
#[derive(Clone, Debug)]
struct PauliString {
    coeff: C64,
    factors: Vec<(usize, Pauli)>,
}

impl PauliString {
    /// Image of basis state `index` as `(index', amplitude)`.
    fn apply_basis(&self, n: usize, index: usize) -> (usize, C64) {
        let mut out = index;
        let mut amp = self.coeff;
        for &(site, p) in &self.factors {
            let shift = n - site;
            let (bit, phase) = p.act((out >> shift) & 1);
            out = (out & !(1 << shift)) | (bit << shift);
            amp *= phase;
        }
        (out, amp)
    }
}

/// Accumulates `sum_k P_k` as a dense matrix, one nonzero per column per string.
fn assemble(n: usize, terms: &[PauliString]) -> CMat {
    let dim = 1usize << n;
    let mut m = linalg::zeros(dim);
    for col in 0..dim {
        for t in terms {
            if t.coeff == C64::new(0.0, 0.0) {
                continue;
            }
            let (row, amp) = t.apply_basis(n, col);
            m[(row, col)] += amp;
        }
    }
    m
}

/// `S_i^v = I x ... x (hbar/2) sigma_v x ... x I`, generated on demand.
///
/// Dense copies of all `3n` operators would cost `3n 4^n` entries, so this
/// keeps only the scale and materializes individual operators when asked.
#[derive(Clone, Copy, Debug)]
pub struct SpinOperators {
    n: usize,
    hbar: f64,
}

pub fn build_spin_operators(n: usize, constants: &PhysicalConstants) -> Result<SpinOperators> {
    check_site_count(n)?;
    constants.validate()?;
    Ok(SpinOperators { n, hbar: constants.hbar })
}

impl SpinOperators {
    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site == 0 || site > self.n {
            return Err(QllgError::IndexOutOfRange(format!("site {site} not in 1..={}", self.n)));
        }
        Ok(())
    }

    /// Dense `S_site^axis` in meV ps.
    pub fn get(&self, site: usize, axis: Axis) -> Result<CMat> {
        self.check_site(site)?;
        let term = PauliString { coeff: C64::new(self.hbar / 2.0, 0.0), factors: vec![(site, axis.pauli())] };
        Ok(assemble(self.n, &[term]))
    }

    /// `sum_i S_i^axis`
    pub fn total(&self, axis: Axis) -> CMat {
        let terms: Vec<PauliString> = (1..=self.n)
            .map(|site| PauliString { coeff: C64::new(self.hbar / 2.0, 0.0), factors: vec![(site, axis.pauli())] })
            .collect();
        assemble(self.n, &terms)
    }

    /// `S_site^axis |psi>`
    pub fn apply(&self, site: usize, axis: Axis, psi: &[C64]) -> Result<Vec<C64>> {
        self.check_site(site)?;
        if psi.len() != self.dim() {
            return Err(QllgError::DimensionMismatch(format!("state of length {} for {} sites", psi.len(), self.n)));
        }
        let term = PauliString { coeff: C64::new(self.hbar / 2.0, 0.0), factors: vec![(site, axis.pauli())] };
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        for (idx, &amp) in psi.iter().enumerate() {
            let (target, phase) = term.apply_basis(self.n, idx);
            out[target] += phase * amp;
        }
        Ok(out)
    }
}

/// Nearest-neighbor bonds. `signed_dmi` is `dmi_sign * |D|`.
pub fn build_bonds(lattice: &LatticeSpec, signed_dmi: f64, mode: DmiMode) -> Result<Vec<Bond>> {
    lattice.validate()?;
    let d_for = |direction: [f64; 2]| -> [f64; 3] {
        match mode {
            // z x (rx, ry, 0) = (-ry, rx, 0)
            DmiMode::InplanePerp => [-signed_dmi * direction[1], signed_dmi * direction[0], 0.0],
            DmiMode::ZAligned => [0.0, 0.0, signed_dmi],
        }
    };

    if lattice.geometry == Geometry::Pair {
        return Ok(vec![Bond { i: 1, j: 2, d_vector: d_for([1.0, 0.0]) }]);
    }

    // Offsets (dc, dr) embed as dc * (1, 0) + dr * (-1/2, sqrt(3)/2), which
    // makes all three unit-length nearest-neighbor directions.
    let half_sqrt3 = 3f64.sqrt() / 2.0;
    let offsets: [((isize, isize), [f64; 2]); 3] =
        [((1, 0), [1.0, 0.0]), ((0, 1), [-0.5, half_sqrt3]), ((1, 1), [0.5, half_sqrt3])];

    let (rows, cols) = (lattice.rows as isize, lattice.cols as isize);
    let mut bonds: Vec<Bond> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            for &((dc, dr), direction) in &offsets {
                let (mut nc, mut nr) = (c + dc, r + dr);
                if lattice.periodic {
                    nc = nc.rem_euclid(cols);
                    nr = nr.rem_euclid(rows);
                } else if nc >= cols || nr >= rows {
                    continue;
                }
                let from = (r * cols + c) as usize + 1;
                let to = (nr * cols + nc) as usize + 1;
                if from == to {
                    continue;
                }
                let (i, j, dir) =
                    if from < to { (from, to, direction) } else { (to, from, [-direction[0], -direction[1]]) };
                // Small periodic grids can reach the same pair twice; keep the first.
                if bonds.iter().any(|b| b.i == i && b.j == j) {
                    continue;
                }
                bonds.push(Bond { i, j, d_vector: d_for(dir) });
            }
        }
    }
    Ok(bonds)
}

/// Dense Hamiltonian in meV, summed once per unordered bond:
///
/// `H = (2J/hbar^2) sum S_i.S_j + (2/hbar^2) sum D_ij.(S_i x S_j) - mu sum B.S_i`
pub fn build_hamiltonian(spec: &HamiltonianSpec, ops: &SpinOperators, bonds: &[Bond]) -> Result<CMat> {
    spec.validate()?;
    let n = spec.lattice.sites();
    if ops.sites() != n {
        return Err(QllgError::DimensionMismatch(format!("spin operators for {} sites, lattice has {n}", ops.sites())));
    }
    if let Some(b) = bonds.iter().find(|b| b.i == 0 || b.j > n || b.i >= b.j) {
        return Err(QllgError::DimensionMismatch(format!("bond ({}, {}) invalid for {n} sites", b.i, b.j)));
    }
    let hbar = spec.constants.hbar;
    let spin = hbar / 2.0;
    let pair_scale = 2.0 / (hbar * hbar) * spin * spin;
    let exchange = spec.exchange * pair_scale;
    let zeeman = -spec.constants.mu() * spin;

    let real = |x: f64| C64::new(x, 0.0);
    let mut terms = Vec::new();
    for b in bonds {
        for p in Pauli::ALL {
            terms.push(PauliString { coeff: real(exchange), factors: vec![(b.i, p), (b.j, p)] });
        }
        // D . (S_i x S_j): component a pairs (b, c) cyclically.
        let cyclic = [(Pauli::Y, Pauli::Z), (Pauli::Z, Pauli::X), (Pauli::X, Pauli::Y)];
        for (component, &(p, q)) in cyclic.iter().enumerate() {
            let d = b.d_vector[component] * pair_scale;
            terms.push(PauliString { coeff: real(d), factors: vec![(b.i, p), (b.j, q)] });
            terms.push(PauliString { coeff: real(-d), factors: vec![(b.i, q), (b.j, p)] });
        }
    }
    for site in 1..=n {
        for (component, p) in Pauli::ALL.into_iter().enumerate() {
            terms.push(PauliString { coeff: real(zeeman * spec.field[component]), factors: vec![(site, p)] });
        }
    }
    Ok(assemble(n, &terms))
}

/// Mixing weights over `I/2^n`, AF1, AF2, GHZ and W.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialStateSpec {
    pub p: [f64; 5],
}

impl InitialStateSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some((k, x)) = self.p.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
            return Err(QllgError::InvalidProbabilityVector(format!("p[{k}] = {x} is outside [0, 1]")));
        }
        let sum: f64 = self.p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(QllgError::InvalidProbabilityVector(format!("entries sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn is_pure(&self) -> bool {
        self.p.iter().filter(|&&x| x > 0.0).count() == 1 && self.p[0] == 0.0
    }
}

fn basis_vector(dim: usize, index: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[index] = C64::new(1.0, 0.0);
    v
}

/// Basis index of `|AF_variant>`: site `l` carries `(l + variant) mod 2`.
pub fn af_index(variant: usize, n: usize) -> usize {
    (1..=n).filter(|l| (l + variant) % 2 == 1).fold(0, |acc, l| acc | 1 << (n - l))
}

pub fn af_state(variant: usize, n: usize) -> Result<Vec<C64>> {
    if variant != 1 && variant != 2 {
        return Err(QllgError::InvalidProbabilityVector(format!("AF variant must be 1 or 2, got {variant}")));
    }
    let dim = check_site_count(n)?;
    Ok(basis_vector(dim, af_index(variant, n)))
}

pub fn ghz_state(n: usize) -> Result<Vec<C64>> {
    let dim = check_site_count(n)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = vec![C64::new(0.0, 0.0); dim];
    v[0] += s;
    v[dim - 1] += s;
    Ok(v)
}

/// `X |0...0>` with `X = (2 / (hbar sqrt n)) sum_i S_i^x`, renormalized.
pub fn w_state(n: usize) -> Result<Vec<C64>> {
    let ops = build_spin_operators(n, &PhysicalConstants::default())?;
    let vacuum = basis_vector(ops.dim(), 0);
    let mut acc = vec![C64::new(0.0, 0.0); ops.dim()];
    for site in 1..=n {
        for (a, b) in acc.iter_mut().zip(ops.apply(site, Axis::X, &vacuum)?) {
            *a += b;
        }
    }
    let norm = acc.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(acc.into_iter().map(|z| z / norm).collect())
}

/// `p0 I/2^n + p1 |AF1><AF1| + p2 |AF2><AF2| + p3 |GHZ><GHZ| + p4 |W><W|`
pub fn build_initial_state(spec: &InitialStateSpec, n: usize) -> Result<CMat> {
    spec.validate()?;
    let dim = check_site_count(n)?;
    let [p0, p1, p2, p3, p4] = spec.p;
    let mut rho: CMat =
        Mat::from_fn(dim, dim, |i, j| if i == j { C64::new(p0 / dim as f64, 0.0) } else { C64::new(0.0, 0.0) });
    let mut add = |weight: f64, psi: Vec<C64>| {
        if weight > 0.0 {
            rho += linalg::outer(&psi) * faer::Scale(C64::new(weight, 0.0));
        }
    };
    add(p1, af_state(1, n)?);
    add(p2, af_state(2, n)?);
    add(p3, ghz_state(n)?);
    add(p4, w_state(n)?);
    Ok(rho)
}
