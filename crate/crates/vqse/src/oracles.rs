//! Independent exact references: determinant-basis configuration
//! interaction in fixed particle-number / Sz sectors.
//!
//! Determinants are occupation bitmasks over spin-orbital modes (bit j =
//! mode j, interleaved spin convention). A determinant's phase is defined
//! by applying creation operators in descending mode order, which matches
//! the Jordan-Wigner parity convention used across the crate.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fermion::{FermionSum, LadderOp};

/// Sector dimension cap for the oracle builders.
pub const SECTOR_DIM_CAP: usize = 100_000;

/// Determinant basis of a fixed (n_electrons, 2*Sz) sector.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    pub n_modes: usize,
    pub determinants: Vec<u64>,
    index: HashMap<u64, u32>,
}

impl SectorBasis {
    /// Enumerate all determinants with the given electron count and twice
    /// the spin projection (n_up - n_down).
    pub fn new(n_modes: usize, n_electrons: usize, twice_sz: i32) -> Result<Self> {
        if n_modes % 2 != 0 || n_modes > 64 {
            return Err(Error::Config(format!(
                "sector basis needs an even mode count <= 64, got {n_modes}"
            )));
        }
        let n_orb = n_modes / 2;
        let up_minus_dn = twice_sz;
        let total = n_electrons as i32;
        let twice_up = total + up_minus_dn;
        if twice_up % 2 != 0 || twice_up < 0 || twice_up > 2 * total {
            return Err(Error::Config(format!(
                "no sector with {n_electrons} electrons and 2Sz = {twice_sz}"
            )));
        }
        let n_up = (twice_up / 2) as usize;
        let n_dn = n_electrons - n_up;
        if n_up > n_orb || n_dn > n_orb {
            return Err(Error::Config("more electrons than orbitals".into()));
        }
        let ups = combinations_masks(n_orb, n_up, 0);
        let dns = combinations_masks(n_orb, n_dn, 1);
        let dim = ups.len() * dns.len();
        if dim > SECTOR_DIM_CAP {
            return Err(Error::DimensionCap(format!(
                "sector dimension {dim} exceeds cap {SECTOR_DIM_CAP}"
            )));
        }
        let mut determinants = Vec::with_capacity(dim);
        for &u in &ups {
            for &d in &dns {
                determinants.push(u | d);
            }
        }
        determinants.sort_unstable();
        let index = determinants
            .iter()
            .enumerate()
            .map(|(i, &m)| (m, i as u32))
            .collect();
        Ok(SectorBasis {
            n_modes,
            determinants,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.determinants.len()
    }

    pub fn index_of(&self, det: u64) -> Option<usize> {
        self.index.get(&det).map(|&i| i as usize)
    }

    /// The Hartree-Fock determinant: lowest orbitals doubly occupied first,
    /// a leftover up electron on the next orbital for odd counts.
    pub fn hartree_fock_det(n_electrons: usize, twice_sz: i32) -> Result<u64> {
        let total = n_electrons as i32;
        let twice_up = total + twice_sz;
        if twice_up % 2 != 0 || twice_up < 0 || twice_up > 2 * total {
            return Err(Error::Config("inconsistent electron/spin counts".into()));
        }
        let n_up = (twice_up / 2) as usize;
        let n_dn = n_electrons - n_up;
        let mut det = 0u64;
        for p in 0..n_up {
            det |= 1 << (2 * p);
        }
        for p in 0..n_dn {
            det |= 1 << (2 * p + 1);
        }
        Ok(det)
    }
}

fn combinations_masks(n_orb: usize, k: usize, spin: usize) -> Vec<u64> {
    let mut out = Vec::new();
    let mut pick = vec![0usize; k];
    fn rec(
        n_orb: usize,
        k: usize,
        spin: usize,
        start: usize,
        depth: usize,
        pick: &mut Vec<usize>,
        out: &mut Vec<u64>,
    ) {
        if depth == k {
            let mut m = 0u64;
            for &p in pick.iter() {
                m |= 1 << (2 * p + spin);
            }
            out.push(m);
            return;
        }
        for p in start..n_orb {
            pick[depth] = p;
            rec(n_orb, k, spin, p + 1, depth + 1, pick, out);
        }
    }
    rec(n_orb, k, spin, 0, 0, &mut pick, &mut out);
    out
}

/// Apply a normal-ordered ladder monomial (operator order, leftmost first)
/// to a determinant; None when annihilated.
#[inline]
pub fn apply_ladder_ops(det: u64, ops: &[LadderOp]) -> Option<(u64, f64)> {
    let mut d = det;
    let mut sign = 1.0;
    for op in ops.iter().rev() {
        let bit = 1u64 << op.mode;
        let occupied = d & bit != 0;
        if op.dagger == occupied {
            return None;
        }
        if ((d & (bit - 1)).count_ones() & 1) == 1 {
            sign = -sign;
        }
        d ^= bit;
    }
    Some((d, sign))
}

/// Sparse sector realization of a real-coefficient fermionic operator,
/// stored column-wise.
pub struct SectorMatrix {
    pub dim: usize,
    cols: Vec<Vec<(u32, f64)>>,
}

impl SectorMatrix {
    /// Build the matrix of `op` in the sector basis. Coefficients must be
    /// real within 1e-12 (molecular Hamiltonians and excitation generators
    /// are).
    pub fn build(op: &FermionSum, basis: &SectorBasis) -> Result<SectorMatrix> {
        let terms: Vec<(Vec<LadderOp>, f64)> = op
            .terms()
            .map(|(t, c)| {
                if c.im.abs() > 1e-12 {
                    Err(Error::Numerical(
                        "sector matrices require real coefficients".into(),
                    ))
                } else {
                    Ok((t.clone(), c.re))
                }
            })
            .collect::<Result<_>>()?;
        let dim = basis.dim();
        let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for (col, &det) in basis.determinants.iter().enumerate() {
            let entries = &mut cols[col];
            for (ops, v) in &terms {
                if let Some((out, sign)) = apply_ladder_ops(det, ops) {
                    if let Some(row) = basis.index_of(out) {
                        entries.push((row as u32, sign * v));
                    }
                }
            }
            entries.sort_unstable_by_key(|e| e.0);
            // merge duplicates
            let mut w = 0;
            for r in 0..entries.len() {
                if w > 0 && entries[w - 1].0 == entries[r].0 {
                    entries[w - 1].1 += entries[r].1;
                } else {
                    entries[w] = entries[r];
                    w += 1;
                }
            }
            entries.truncate(w);
            entries.retain(|e| e.1.abs() > 1e-15);
        }
        Ok(SectorMatrix { dim, cols })
    }

    pub fn column(&self, j: usize) -> &[(u32, f64)] {
        &self.cols[j]
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (j, col) in self.cols.iter().enumerate() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for &(i, v) in col {
                y[i as usize] += v * xj;
            }
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                m[(i as usize, j)] += v;
            }
        }
        m
    }

    pub fn quadratic_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (j, col) in self.cols.iter().enumerate() {
            let yj = y[j];
            if yj == 0.0 {
                continue;
            }
            for &(i, v) in col {
                acc += x[i as usize] * v * yj;
            }
        }
        acc
    }
}

/// Threshold between dense diagonalization and the iterative path.
const DENSE_EIG_LIMIT: usize = 1500;

/// The n_lowest ascending eigenvalues of `h` in the
/// (n_electrons, twice_sz) sector.
pub fn fci_spectrum(
    h: &FermionSum,
    n_modes: usize,
    n_electrons: usize,
    twice_sz: i32,
    n_lowest: usize,
) -> Result<Vec<f64>> {
    let basis = SectorBasis::new(n_modes, n_electrons, twice_sz)?;
    let m = SectorMatrix::build(h, &basis)?;
    lowest_eigenvalues(&m, n_lowest)
}

/// FCI restricted to the Hartree-Fock determinant and its single and double
/// excitations.
pub fn cisd_spectrum(
    h: &FermionSum,
    n_modes: usize,
    n_electrons: usize,
    twice_sz: i32,
    n_lowest: usize,
) -> Result<Vec<f64>> {
    let basis = cisd_basis(n_modes, n_electrons, twice_sz)?;
    let m = SectorMatrix::build(h, &basis)?;
    lowest_eigenvalues(&m, n_lowest)
}

/// Sector basis truncated to excitation rank <= 2 from the HF determinant.
pub fn cisd_basis(n_modes: usize, n_electrons: usize, twice_sz: i32) -> Result<SectorBasis> {
    let full = SectorBasis::new(n_modes, n_electrons, twice_sz)?;
    let hf = SectorBasis::hartree_fock_det(n_electrons, twice_sz)?;
    let determinants: Vec<u64> = full
        .determinants
        .iter()
        .copied()
        .filter(|d| (d ^ hf).count_ones() <= 4)
        .collect();
    let index = determinants
        .iter()
        .enumerate()
        .map(|(i, &m)| (m, i as u32))
        .collect();
    Ok(SectorBasis {
        n_modes,
        determinants,
        index,
    })
}

/// <HF| h |HF>.
pub fn hf_energy(h: &FermionSum, n_electrons: usize, twice_sz: i32) -> Result<f64> {
    let hf = SectorBasis::hartree_fock_det(n_electrons, twice_sz)?;
    let mut e = 0.0;
    for (ops, c) in h.terms() {
        if let Some((out, sign)) = apply_ladder_ops(hf, ops) {
            if out == hf {
                e += sign * c.re;
            }
        }
    }
    Ok(e)
}

/// Lowest eigenvalues of a sector matrix: dense for small dimensions,
/// Lanczos with full reorthogonalization above.
pub fn lowest_eigenvalues(m: &SectorMatrix, n_lowest: usize) -> Result<Vec<f64>> {
    if m.dim == 0 {
        return Err(Error::Config("empty sector".into()));
    }
    let want = n_lowest.min(m.dim);
    if m.dim <= DENSE_EIG_LIMIT {
        let (mut vals, _) = crate::eigh::eigh_real(&m.dense())?;
        vals.truncate(want);
        return Ok(vals);
    }
    lanczos_lowest(m, want)
}

fn lanczos_lowest(m: &SectorMatrix, want: usize) -> Result<Vec<f64>> {
    let n = m.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(0x517_0b5e);
    let mut v0: DVector<f64> = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    v0 /= v0.norm();

    let mut basis: Vec<DVector<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let max_iter = (6 * want + 120).min(n);
    let mut work = vec![0.0; n];
    for j in 0..max_iter {
        let vj = basis[j].clone();
        m.matvec(vj.as_slice(), &mut work);
        let mut w = DVector::from_column_slice(&work);
        let alpha = vj.dot(&w);
        alphas.push(alpha);
        w -= &vj * alpha;
        if j > 0 {
            let beta_prev = betas[j - 1];
            w -= &basis[j - 1] * beta_prev;
        }
        // full reorthogonalization, twice for stability
        for _ in 0..2 {
            for b in &basis {
                let overlap = b.dot(&w);
                w -= b * overlap;
            }
        }
        let beta = w.norm();
        if beta < 1e-12 || j + 1 == max_iter {
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let (tvals, tvecs) = crate::eigh::eigh_real(&t)?;
    let mut out = Vec::with_capacity(want);
    let mut y = vec![0.0; n];
    for col in 0..want.min(k) {
        let lambda = tvals[col];
        // residual check on the Ritz vector
        let mut x = DVector::<f64>::zeros(n);
        for (j, b) in basis.iter().enumerate() {
            x += b * tvecs[(j, col)];
        }
        m.matvec(x.as_slice(), &mut y);
        let res = (DVector::from_column_slice(&y) - &x * lambda).norm();
        if res > 1e-8 {
            return Err(Error::Numerical(format!(
                "Lanczos residual {res:.2e} too large for eigenvalue {lambda}"
            )));
        }
        out.push(lambda);
    }
    Ok(out)
}

/// Ground eigenpair of a sector matrix (dense path only).
pub fn ground_state_dense(m: &SectorMatrix) -> Result<(f64, Vec<f64>)> {
    if m.dim > DENSE_EIG_LIMIT {
        return Err(Error::DimensionCap(format!(
            "dense ground state limited to dimension {DENSE_EIG_LIMIT}"
        )));
    }
    let (vals, vecs) = crate::eigh::eigh_real(&m.dense())?;
    let vec = vecs.column(0).iter().copied().collect();
    Ok((vals[0], vec))
}

/// Dense matrix of a fermionic operator restricted to a sector, in the
/// complex field (cross-checks against the Jordan-Wigner dense form).
pub fn sector_dense_complex(
    op: &FermionSum,
    basis: &SectorBasis,
) -> DMatrix<Complex64> {
    let dim = basis.dim();
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    for (col, &det) in basis.determinants.iter().enumerate() {
        for (ops, c) in op.terms() {
            if let Some((out, sign)) = apply_ladder_ops(det, ops) {
                if let Some(row) = basis.index_of(out) {
                    m[(row, col)] += c * sign;
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrals::{assemble_hamiltonian, parse_fcidump};

    fn two_orbital_fixture() -> FermionSum {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n\
                    0.674 1 1 1 1\n0.697 2 2 2 2\n0.663 1 1 2 2\n0.181 2 1 2 1\n\
                    -1.252 1 1 0 0\n-0.475 2 2 0 0\n0.713 0 0 0 0\n";
        assemble_hamiltonian(&parse_fcidump(text).unwrap())
    }

    #[test]
    fn closed_shell_single_orbital() {
        // 1 orbital, 2 electrons, Sz=0: single determinant,
        // E = 2 h00 + (00|00) + e_const
        let text = "&FCI NORB=1,NELEC=2,MS2=0,\n&END\n\
                    0.55 1 1 1 1\n-1.1 1 1 0 0\n0.4 0 0 0 0\n";
        let h = assemble_hamiltonian(&parse_fcidump(text).unwrap());
        let e = fci_spectrum(&h, 2, 2, 0, 1).unwrap();
        assert_eq!(e.len(), 1);
        assert!((e[0] - (2.0 * -1.1 + 0.55 + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn sector_dimension_is_binomial_product() {
        // 10 orbitals, 2 electrons, Sz = 0: 10 x 10 determinants
        let b = SectorBasis::new(20, 2, 0).unwrap();
        assert_eq!(b.dim(), 100);
    }

    #[test]
    fn sector_build_matches_jw_dense() {
        let h = two_orbital_fixture();
        let basis = SectorBasis::new(4, 2, 0).unwrap();
        let sm = SectorMatrix::build(&h, &basis).unwrap();
        // restrict the JW dense matrix to the sector determinants
        let dense = h.jordan_wigner(4).dense_matrix().unwrap();
        for (j, &dj) in basis.determinants.iter().enumerate() {
            for (i, &di) in basis.determinants.iter().enumerate() {
                let got = sm.dense()[(i, j)];
                let want = dense[(di as usize, dj as usize)].re;
                assert!((got - want).abs() < 1e-10, "({i},{j})");
            }
        }
    }

    #[test]
    fn cisd_equals_fci_for_two_electrons() {
        let h = two_orbital_fixture();
        let f = fci_spectrum(&h, 4, 2, 0, 4).unwrap();
        let c = cisd_spectrum(&h, 4, 2, 0, 4).unwrap();
        assert_eq!(f.len(), c.len());
        for (a, b) in f.iter().zip(&c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hf_energy_matches_single_determinant_expectation() {
        let h = two_orbital_fixture();
        let e = hf_energy(&h, 2, 0).unwrap();
        let basis = SectorBasis::new(4, 2, 0).unwrap();
        let sm = SectorMatrix::build(&h, &basis).unwrap();
        let hf = SectorBasis::hartree_fock_det(2, 0).unwrap();
        let k = basis.index_of(hf).unwrap();
        assert!((e - sm.dense()[(k, k)]).abs() < 1e-12);
        // variational ordering
        let fci = fci_spectrum(&h, 4, 2, 0, 1).unwrap()[0];
        let cisd = cisd_spectrum(&h, 4, 2, 0, 1).unwrap()[0];
        assert!(e >= cisd - 1e-10);
        assert!(cisd >= fci - 1e-10);
    }

    #[test]
    fn lanczos_agrees_with_dense_on_random_sparse() {
        // random symmetric operator in a sector big enough to be meaningful
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let basis = SectorBasis::new(12, 3, 1).unwrap();
        let mut h = FermionSum::zero();
        for _ in 0..40 {
            let p = rng.gen_range(0..12u32);
            let q = rng.gen_range(0..12u32);
            let v = rng.gen_range(-1.0..1.0);
            let t = FermionSum::from_ops(
                Complex64::new(v, 0.0),
                &[LadderOp::create(p), LadderOp::destroy(q)],
            );
            h.add_assign(&t);
            h.add_assign(&t.hermitian_conjugate());
        }
        let m = SectorMatrix::build(&h, &basis).unwrap();
        let dense_vals = {
            let eig = m.dense().symmetric_eigen();
            let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let lv = lanczos_lowest(&m, 3).unwrap();
        for (a, b) in lv.iter().zip(&dense_vals) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn fci_invariant_under_virtual_relabeling() {
        // permuting virtual orbital labels must not change the spectrum
        let text = "&FCI NORB=3,NELEC=2,MS2=0,\n&END\n\
                    0.674 1 1 1 1\n0.697 2 2 2 2\n0.69 3 3 3 3\n0.663 1 1 2 2\n\
                    0.62 1 1 3 3\n0.61 2 2 3 3\n0.181 2 1 2 1\n0.15 3 1 3 1\n0.14 3 2 3 2\n\
                    -1.252 1 1 0 0\n-0.475 2 2 0 0\n-0.41 3 3 0 0\n0.713 0 0 0 0\n";
        let m = parse_fcidump(text).unwrap();
        let h1 = assemble_hamiltonian(&m);
        let perm = m.restrict(&[0, 2, 1]);
        let h2 = assemble_hamiltonian(&perm);
        let e1 = fci_spectrum(&h1, 6, 2, 0, 4).unwrap();
        let e2 = fci_spectrum(&h2, 6, 2, 0, 4).unwrap();
        for (a, b) in e1.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sector_cap_enforced() {
        // 16 orbitals, 8 electrons, Sz=0: (16 choose 4)^2 = 3.3e6 >> cap
        assert!(matches!(
            SectorBasis::new(32, 8, 0),
            Err(Error::DimensionCap(_))
        ));
    }
}
