//! Pauli-string algebra, dense realization, and the projection of 4-qubit
//! operators onto the two-electron, Sz = 0 subspace encoded in 2 qubits.
//!
//! Bit convention: qubit 0 is the least-significant bit of basis-state
//! labels, |q_{n-1}..q_1 q_0>.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const PRUNE_TOL: f64 = 1e-14;

/// Default qubit cap for dense realization.
pub const DENSE_CAP: usize = 20;

/// Pauli letters for one qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn bits(self) -> (u64, u64) {
        match self {
            Pauli::I => (0, 0),
            Pauli::X => (1, 0),
            Pauli::Y => (1, 1),
            Pauli::Z => (0, 1),
        }
    }
}

/// A Pauli string in symplectic form: per-qubit X and Z mask bits.
/// The represented operator is the literal letter product, with
/// `Y = i X Z` handled internally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    pub x: u64,
    pub z: u64,
}

impl PauliString {
    pub fn identity() -> Self {
        PauliString { x: 0, z: 0 }
    }

    pub fn from_letters(letters: &[Pauli]) -> Self {
        let mut x = 0u64;
        let mut z = 0u64;
        for (j, p) in letters.iter().enumerate() {
            let (xb, zb) = p.bits();
            x |= xb << j;
            z |= zb << j;
        }
        PauliString { x, z }
    }

    pub fn letter(&self, j: usize) -> Pauli {
        match ((self.x >> j) & 1, (self.z >> j) & 1) {
            (0, 0) => Pauli::I,
            (1, 0) => Pauli::X,
            (1, 1) => Pauli::Y,
            _ => Pauli::Z,
        }
    }

    /// Product with phase: returns (string, i^k) such that
    /// self * other == i^k * string.
    fn mul(&self, other: &PauliString) -> (PauliString, u8) {
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        // phases from Y = i X Z bookkeeping plus Z-past-X transposition
        let ph = (self.x & self.z).count_ones()
            + (other.x & other.z).count_ones()
            + 2 * (self.z & other.x).count_ones()
            + 3 * (x & z).count_ones();
        (PauliString { x, z }, (ph % 4) as u8)
    }

    /// Action on a computational basis state: P|s> = phase * |s ^ x>.
    pub fn apply_to_basis(&self, state: u64) -> (u64, Complex64) {
        let k = (self.x & self.z).count_ones() % 4;
        let mut phase = match k {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        if (self.z & state).count_ones() & 1 == 1 {
            phase = -phase;
        }
        (state ^ self.x, phase)
    }
}

/// Linear combination of Pauli strings on a fixed qubit count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: BTreeMap<PauliString, Complex64>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Self {
        PauliSum {
            n_qubits,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar_op(n_qubits: usize, c: Complex64) -> Self {
        let mut s = PauliSum::zero(n_qubits);
        s.add_term(PauliString::identity(), c);
        s
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, s: &PauliString) -> Complex64 {
        self.terms
            .get(s)
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    pub fn add_term(&mut self, s: PauliString, c: Complex64) {
        debug_assert!(
            self.n_qubits >= 64
                || ((s.x | s.z) >> self.n_qubits) == 0,
            "letters beyond n_qubits"
        );
        let e = self
            .terms
            .entry(s)
            .or_insert_with(|| Complex64::new(0.0, 0.0));
        *e += c;
        if e.norm() <= PRUNE_TOL {
            self.terms.remove(&s);
        }
    }

    pub fn add_assign(&mut self, other: &PauliSum) {
        assert_eq!(self.n_qubits, other.n_qubits);
        for (s, c) in &other.terms {
            self.add_term(*s, *c);
        }
    }

    pub fn add(&self, other: &PauliSum) -> PauliSum {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn scale(&self, c: Complex64) -> PauliSum {
        let mut out = PauliSum::zero(self.n_qubits);
        for (s, v) in &self.terms {
            out.add_term(*s, v * c);
        }
        out
    }

    pub fn multiply(&self, other: &PauliSum) -> PauliSum {
        assert_eq!(self.n_qubits, other.n_qubits);
        let mut out = PauliSum::zero(self.n_qubits);
        for (s1, c1) in &self.terms {
            for (s2, c2) in &other.terms {
                let (s, k) = s1.mul(s2);
                let phase = match k {
                    0 => Complex64::new(1.0, 0.0),
                    1 => Complex64::new(0.0, 1.0),
                    2 => Complex64::new(-1.0, 0.0),
                    _ => Complex64::new(0.0, -1.0),
                };
                out.add_term(s, c1 * c2 * phase);
            }
        }
        out
    }

    pub fn simplify(&mut self) {
        self.terms.retain(|_, c| c.norm() > PRUNE_TOL);
    }

    /// All coefficients real within `tol`?
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.terms.values().all(|c| c.im.abs() <= tol)
    }

    /// Dense matrix realization; errors above the cap.
    pub fn dense_matrix_capped(&self, cap: usize) -> Result<DMatrix<Complex64>> {
        if self.n_qubits > cap {
            return Err(Error::DimensionCap(format!(
                "dense matrix for {} qubits exceeds cap {}",
                self.n_qubits, cap
            )));
        }
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        for (s, c) in &self.terms {
            for col in 0..dim {
                let (row, phase) = s.apply_to_basis(col as u64);
                m[(row as usize, col)] += c * phase;
            }
        }
        Ok(m)
    }

    pub fn dense_matrix(&self) -> Result<DMatrix<Complex64>> {
        self.dense_matrix_capped(DENSE_CAP)
    }
}

impl fmt::Display for PauliSum {
    /// `coeff PQRS` lines, qubit 0 leftmost.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, c) in &self.terms {
            let letters: String = (0..self.n_qubits).map(|j| s.letter(j).as_char()).collect();
            if c.im.abs() > PRUNE_TOL {
                writeln!(f, "{:+e}{:+e}i {}", c.re, c.im, letters)?;
            } else {
                writeln!(f, "{:+e} {}", c.re, letters)?;
            }
        }
        Ok(())
    }
}

/// The four Sz = 0 double-occupation basis states of the 4-qubit register,
/// in the order mapped to 2-qubit |00>, |01>, |10>, |11>.
pub const PAIR_SECTOR_MASKS: [u64; 4] = [0b0011, 0b0110, 0b1001, 0b1100];

/// Project a 4-qubit operator onto the two-electron opposite-spin sector,
/// re-encoded on 2 qubits: M[k][l] = <b_k| op4 |b_l> over the sector basis,
/// then expanded in the 16-element 2-qubit Pauli basis via tr(M P)/4.
pub fn project_to_pair_subspace(op4: &PauliSum) -> Result<PauliSum> {
    if op4.n_qubits() != 4 {
        return Err(Error::Numerical(format!(
            "pair-subspace projection expects 4 qubits, got {}",
            op4.n_qubits()
        )));
    }
    let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
    for (s, c) in op4.terms() {
        for (l, &mask) in PAIR_SECTOR_MASKS.iter().enumerate() {
            let (out, phase) = s.apply_to_basis(mask);
            if let Some(k) = PAIR_SECTOR_MASKS.iter().position(|&b| b == out) {
                m[k][l] += c * phase;
            }
        }
    }
    Ok(pauli_expand_2q(&m))
}

/// Expand a 4x4 matrix over the 2-qubit Pauli basis.
pub fn pauli_expand_2q(m: &[[Complex64; 4]; 4]) -> PauliSum {
    let mut out = PauliSum::zero(2);
    for p0 in Pauli::ALL {
        for p1 in Pauli::ALL {
            let s = PauliString::from_letters(&[p0, p1]);
            // tr(M P) / 4
            let mut tr = Complex64::new(0.0, 0.0);
            for col in 0..4usize {
                let (row, phase) = s.apply_to_basis(col as u64);
                tr += m[col][row as usize] * phase;
            }
            out.add_term(s, tr / 4.0);
        }
    }
    out
}

/// Full table of 2-qubit Pauli-pair expectation values; entry (I, I) is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTable {
    values: [f64; 16],
}

impl PauliTable {
    pub fn index(p0: Pauli, p1: Pauli) -> usize {
        let k = |p: Pauli| match p {
            Pauli::I => 0usize,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        };
        4 * k(p0) + k(p1)
    }

    pub fn new(values: [f64; 16]) -> Self {
        PauliTable { values }
    }

    pub fn from_fn(mut f: impl FnMut(Pauli, Pauli) -> f64) -> Self {
        let mut values = [0.0; 16];
        for p0 in Pauli::ALL {
            for p1 in Pauli::ALL {
                values[Self::index(p0, p1)] = f(p0, p1);
            }
        }
        PauliTable { values }
    }

    /// Build from a string-keyed map (e.g. parsed JSON); every one of the
    /// 16 pairs must be present.
    pub fn from_map(map: &std::collections::BTreeMap<String, f64>) -> Result<Self> {
        let mut values = [f64::NAN; 16];
        for (k, v) in map {
            let mut it = k.chars();
            let (a, b) = (it.next(), it.next());
            match (a.and_then(Pauli::from_char), b.and_then(Pauli::from_char)) {
                (Some(p0), Some(p1)) if it.next().is_none() => {
                    values[Self::index(p0, p1)] = *v;
                }
                _ => return Err(Error::Data(format!("bad Pauli pair key '{k}'"))),
            }
        }
        for p0 in Pauli::ALL {
            for p1 in Pauli::ALL {
                if values[Self::index(p0, p1)].is_nan() {
                    return Err(Error::Data(format!(
                        "missing Pauli pair <{}{}>",
                        p0.as_char(),
                        p1.as_char()
                    )));
                }
            }
        }
        Ok(PauliTable { values })
    }

    pub fn get(&self, p0: Pauli, p1: Pauli) -> f64 {
        self.values[Self::index(p0, p1)]
    }

    /// Project onto the nearest physical tomography data: the 4x4 density
    /// matrix implied by the table has its negative eigenvalues clipped and
    /// the trace renormalized, then the 16 expectations are rebuilt. Exact
    /// pure-state tables are fixed points.
    pub fn project_physical(&self) -> PauliTable {
        use nalgebra::DMatrix;
        let mut rho = DMatrix::<Complex64>::zeros(4, 4);
        for p0 in Pauli::ALL {
            for p1 in Pauli::ALL {
                let s = PauliString::from_letters(&[p0, p1]);
                let t = self.get(p0, p1);
                for col in 0..4usize {
                    let (row, phase) = s.apply_to_basis(col as u64);
                    rho[(row as usize, col)] += phase * t / 4.0;
                }
            }
        }
        let eig = rho.symmetric_eigen();
        let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&w| w.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        let mut fixed = DMatrix::<Complex64>::zeros(4, 4);
        for (k, &w) in clipped.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            fixed += &v * v.adjoint() * Complex64::new(w / total, 0.0);
        }
        PauliTable::from_fn(|p0, p1| {
            let s = PauliString::from_letters(&[p0, p1]);
            let mut tr = Complex64::new(0.0, 0.0);
            for col in 0..4usize {
                let (row, phase) = s.apply_to_basis(col as u64);
                tr += fixed[(col, row as usize)] * phase;
            }
            tr.re
        })
    }

    pub fn to_map(&self) -> std::collections::BTreeMap<String, f64> {
        let mut m = std::collections::BTreeMap::new();
        for p0 in Pauli::ALL {
            for p1 in Pauli::ALL {
                m.insert(
                    format!("{}{}", p0.as_char(), p1.as_char()),
                    self.get(p0, p1),
                );
            }
        }
        m
    }
}

/// Contract a 2-qubit operator against a measured expectation table.
/// The imaginary residue of Hermitian inputs is discarded.
pub fn expectation_from_pauli_table(op2: &PauliSum, table: &PauliTable) -> Result<f64> {
    if op2.n_qubits() != 2 {
        return Err(Error::Numerical(format!(
            "expected 2-qubit operator, got {} qubits",
            op2.n_qubits()
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (s, c) in op2.terms() {
        acc += c * table.get(s.letter(0), s.letter(1));
    }
    Ok(acc.re)
}

/// Complex-valued table contraction, for operators that are not Hermitian
/// (off-diagonal pencil entries keep their phases).
pub fn complex_expectation_from_pauli_table(op2: &PauliSum, table: &PauliTable) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (s, c) in op2.terms() {
        acc += c * table.get(s.letter(0), s.letter(1));
    }
    acc
}

/// The five-coefficient projected molecular Hamiltonian
/// `g1 I + g2 Z1 + g3 Z2 + g4 Z1 Z2 + g5 Y1 Y2`.
#[derive(Clone, Debug)]
pub struct ProjectedHamiltonian {
    coeffs: PauliSum,
}

impl ProjectedHamiltonian {
    /// Wraps a projected 2-qubit Hamiltonian, verifying that every
    /// component outside the five-term structure is negligible.
    pub fn new(coeffs: PauliSum, tol: f64) -> Result<Self> {
        let allowed = [
            PauliString::from_letters(&[Pauli::I, Pauli::I]),
            PauliString::from_letters(&[Pauli::Z, Pauli::I]),
            PauliString::from_letters(&[Pauli::I, Pauli::Z]),
            PauliString::from_letters(&[Pauli::Z, Pauli::Z]),
            PauliString::from_letters(&[Pauli::Y, Pauli::Y]),
        ];
        for (s, c) in coeffs.terms() {
            if !allowed.contains(s) && c.norm() > tol {
                return Err(Error::Numerical(format!(
                    "unexpected Pauli component {}{} with weight {:.3e}",
                    s.letter(0).as_char(),
                    s.letter(1).as_char(),
                    c.norm()
                )));
            }
            if c.im.abs() > tol {
                return Err(Error::Numerical(format!(
                    "non-Hermitian projected Hamiltonian component {:.3e}",
                    c.im
                )));
            }
        }
        Ok(ProjectedHamiltonian { coeffs })
    }

    pub fn coeffs(&self) -> &PauliSum {
        &self.coeffs
    }

    pub fn g1(&self) -> f64 {
        self.letter_coeff(Pauli::I, Pauli::I)
    }

    pub fn g2(&self) -> f64 {
        self.letter_coeff(Pauli::Z, Pauli::I)
    }

    pub fn g3(&self) -> f64 {
        self.letter_coeff(Pauli::I, Pauli::Z)
    }

    pub fn g4(&self) -> f64 {
        self.letter_coeff(Pauli::Z, Pauli::Z)
    }

    pub fn g5(&self) -> f64 {
        self.letter_coeff(Pauli::Y, Pauli::Y)
    }

    fn letter_coeff(&self, p0: Pauli, p1: Pauli) -> f64 {
        self.coeffs
            .coeff(&PauliString::from_letters(&[p0, p1]))
            .re
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_string(rng: &mut ChaCha8Rng, n: usize) -> PauliString {
        let letters: Vec<Pauli> = (0..n)
            .map(|_| Pauli::ALL[rng.gen_range(0..4)])
            .collect();
        PauliString::from_letters(&letters)
    }

    #[test]
    fn x_dense() {
        let mut p = PauliSum::zero(1);
        p.add_term(PauliString::from_letters(&[Pauli::X]), c(1.0));
        let m = p.dense_matrix().unwrap();
        assert_eq!(m[(0, 1)], c(1.0));
        assert_eq!(m[(1, 0)], c(1.0));
        assert_eq!(m[(0, 0)], c(0.0));
    }

    #[test]
    fn zz_dense_diag() {
        let mut p = PauliSum::zero(2);
        p.add_term(PauliString::from_letters(&[Pauli::Z, Pauli::Z]), c(1.0));
        let m = p.dense_matrix().unwrap();
        let d: Vec<f64> = (0..4).map(|k| m[(k, k)].re).collect();
        assert_eq!(d, vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn dense_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = PauliSum::zero(3);
        let mut b = PauliSum::zero(3);
        for _ in 0..5 {
            a.add_term(random_string(&mut rng, 3), c(rng.gen_range(-1.0..1.0)));
            b.add_term(random_string(&mut rng, 3), c(rng.gen_range(-1.0..1.0)));
        }
        let lhs = a.add(&b).dense_matrix().unwrap();
        let rhs = a.dense_matrix().unwrap() + b.dense_matrix().unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn string_product_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let s1 = random_string(&mut rng, 3);
            let s2 = random_string(&mut rng, 3);
            let mut a = PauliSum::zero(3);
            a.add_term(s1, c(1.0));
            let mut b = PauliSum::zero(3);
            b.add_term(s2, c(1.0));
            let prod = a.multiply(&b);
            let lhs = prod.dense_matrix().unwrap();
            let rhs = a.dense_matrix().unwrap() * b.dense_matrix().unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn dense_cap_enforced() {
        let p = PauliSum::zero(25);
        assert!(p.dense_matrix().is_err());
    }

    #[test]
    fn projection_of_identity() {
        let p = PauliSum::scalar_op(4, c(1.0));
        let q = project_to_pair_subspace(&p).unwrap();
        assert!((q.coeff(&PauliString::identity()) - c(1.0)).norm() < 1e-14);
        assert_eq!(q.num_terms(), 1);
    }

    #[test]
    fn projection_of_total_number_operator() {
        use crate::fermion::FermionSum;
        let mut n_tot = FermionSum::zero();
        for m in 0..4 {
            n_tot.add_assign(&FermionSum::number_op(m));
        }
        let q = project_to_pair_subspace(&n_tot.jordan_wigner(4)).unwrap();
        assert!((q.coeff(&PauliString::identity()) - c(2.0)).norm() < 1e-12);
        assert_eq!(q.num_terms(), 1, "total number is 2 on the whole sector");
    }

    #[test]
    fn projection_linear_and_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut a = PauliSum::zero(4);
        for _ in 0..6 {
            // Hermitian: real coefficients on Pauli strings
            a.add_term(random_string(&mut rng, 4), c(rng.gen_range(-1.0..1.0)));
        }
        let q = project_to_pair_subspace(&a).unwrap();
        assert!(q.is_hermitian(1e-12));
        let b = a.scale(c(2.5));
        let qb = project_to_pair_subspace(&b).unwrap();
        let diff = (qb.dense_matrix().unwrap() - q.dense_matrix().unwrap() * c(2.5)).norm();
        assert!(diff < 1e-12);
    }

    #[test]
    fn spectral_containment_in_sector() {
        // eigenvalues of the projected operator must appear among the
        // eigenvalues of the 4-qubit operator restricted to the sector
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = PauliSum::zero(4);
        for _ in 0..8 {
            a.add_term(random_string(&mut rng, 4), c(rng.gen_range(-1.0..1.0)));
        }
        // restrict: P_sector A P_sector eigenvalues on the 4-dim block
        let dense = a.dense_matrix().unwrap();
        let mut block = DMatrix::<Complex64>::zeros(4, 4);
        for (k, &bk) in PAIR_SECTOR_MASKS.iter().enumerate() {
            for (l, &bl) in PAIR_SECTOR_MASKS.iter().enumerate() {
                block[(k, l)] = dense[(bk as usize, bl as usize)];
            }
        }
        let proj = project_to_pair_subspace(&a).unwrap();
        let e1 = block.symmetric_eigen().eigenvalues;
        let e2 = proj.dense_matrix().unwrap().symmetric_eigen().eigenvalues;
        let mut v1: Vec<f64> = e1.iter().copied().collect();
        let mut v2: Vec<f64> = e2.iter().copied().collect();
        v1.sort_by(f64::total_cmp);
        v2.sort_by(f64::total_cmp);
        for (x, y) in v1.iter().zip(&v2) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn table_lookup_examples() {
        let table = PauliTable::from_fn(|p0, p1| match (p0, p1) {
            (Pauli::I, Pauli::I) => 1.0,
            (Pauli::Z, Pauli::Z) => -0.5,
            _ => 0.25,
        });
        // identity -> 1
        let id = PauliSum::scalar_op(2, c(1.0));
        assert_eq!(expectation_from_pauli_table(&id, &table).unwrap(), 1.0);
        // Z1 Z2 with <Z1Z2> = -0.5 -> -0.5
        let mut zz = PauliSum::zero(2);
        zz.add_term(PauliString::from_letters(&[Pauli::Z, Pauli::Z]), c(1.0));
        assert_eq!(expectation_from_pauli_table(&zz, &table).unwrap(), -0.5);
    }

    #[test]
    fn table_missing_entry_detected() {
        let mut m = std::collections::BTreeMap::new();
        m.insert("II".to_string(), 1.0);
        let err = PauliTable::from_map(&m).unwrap_err();
        assert!(err.to_string().contains("missing Pauli pair"));
    }
}
