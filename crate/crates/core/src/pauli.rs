//! Single-qubit Pauli matrices and their action on computational basis states.
//!
//! Basis convention: `|0> = |up>`, `|1> = |down>`, so `sigma_z |b> = (-1)^b |b>`.

use num_complex::Complex64 as C64;

use crate::linalg::{from_rows, CMat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    /// `sigma |bit> = phase |bit'>`, returned as `(bit', phase)`.
    pub fn act(self, bit: usize) -> (usize, C64) {
        match (self, bit) {
            (Pauli::X, b) => (b ^ 1, C64::new(1.0, 0.0)),
            (Pauli::Y, 0) => (1, C64::new(0.0, 1.0)),
            (Pauli::Y, _) => (0, C64::new(0.0, -1.0)),
            (Pauli::Z, 0) => (0, C64::new(1.0, 0.0)),
            (Pauli::Z, _) => (1, C64::new(-1.0, 0.0)),
        }
    }

    pub fn matrix(self) -> CMat {
        match self {
            Pauli::X => x(),
            Pauli::Y => y(),
            Pauli::Z => z(),
        }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn x() -> CMat {
    from_rows(&[vec![c(0., 0.), c(1., 0.)], vec![c(1., 0.), c(0., 0.)]])
}

pub fn y() -> CMat {
    from_rows(&[vec![c(0., 0.), c(0., -1.)], vec![c(0., 1.), c(0., 0.)]])
}

pub fn z() -> CMat {
    from_rows(&[vec![c(1., 0.), c(0., 0.)], vec![c(0., 0.), c(-1., 0.)]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_matches_matrix_columns() {
        for p in Pauli::ALL {
            let m = p.matrix();
            for b in 0..2 {
                let (out, phase) = p.act(b);
                assert_eq!(m[(out, b)], phase);
                assert_eq!(m[(out ^ 1, b)], c(0., 0.));
            }
        }
    }
}
