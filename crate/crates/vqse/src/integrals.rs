//! Molecular integral ingestion: FCIDUMP parsing, frozen-core reduction, and
//! assembly of the second-quantized Hamiltonian over spin-orbitals.
//!
//! Two-electron integrals are stored in the chemists' (pq|rs) convention as
//! they appear in FCIDUMP files; conversion to physicists' ordering happens
//! only inside [`assemble_hamiltonian`].

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fermion::{FermionSum, LadderOp};

/// One- and two-electron integrals over spatial orbitals.
#[derive(Clone, Debug)]
pub struct MolecularIntegrals {
    pub n_spatial: usize,
    /// Scalar energy offset in Hartree (nuclear repulsion plus core shift).
    pub e_const: f64,
    /// h1[p * n + q], symmetric.
    pub h1: Vec<f64>,
    /// h2[((p n + q) n + r) n + s] = (pq|rs), 8-fold symmetric.
    pub h2: Vec<f64>,
    pub n_electrons: usize,
    /// Internuclear separation label in Angstrom (as named by the fixture).
    pub geometry_label: String,
}

/// Spatial-orbital partition into core, active, and virtual sets.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OrbitalPartition {
    pub core: Vec<usize>,
    pub active: Vec<usize>,
    pub virtual_: Vec<usize>,
}

impl OrbitalPartition {
    pub fn new(core: Vec<usize>, active: Vec<usize>, virtual_: Vec<usize>) -> Self {
        OrbitalPartition {
            core,
            active,
            virtual_,
        }
    }

    /// Disjointness, completeness over 0..n_spatial, non-empty active.
    pub fn validate(&self, n_spatial: usize) -> Result<()> {
        if self.active.is_empty() {
            return Err(Error::Config("active space is empty".into()));
        }
        let mut seen = vec![false; n_spatial];
        for &p in self
            .core
            .iter()
            .chain(self.active.iter())
            .chain(self.virtual_.iter())
        {
            if p >= n_spatial {
                return Err(Error::Config(format!(
                    "orbital index {p} out of range (n_spatial = {n_spatial})"
                )));
            }
            if seen[p] {
                return Err(Error::Config(format!("orbital {p} listed twice")));
            }
            seen[p] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::Config(
                "partition does not cover all orbitals".into(),
            ));
        }
        Ok(())
    }
}

impl MolecularIntegrals {
    #[inline]
    pub fn h1_at(&self, p: usize, q: usize) -> f64 {
        self.h1[p * self.n_spatial + q]
    }

    /// Chemists' (pq|rs).
    #[inline]
    pub fn h2_at(&self, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let n = self.n_spatial;
        self.h2[((p * n + q) * n + r) * n + s]
    }

    /// Check the stated tensor symmetries.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_spatial;
        if n == 0 {
            return Err(Error::Config("n_spatial must be positive".into()));
        }
        for p in 0..n {
            for q in 0..p {
                if (self.h1_at(p, q) - self.h1_at(q, p)).abs() > 1e-10 {
                    return Err(Error::Numerical(format!(
                        "h1 not symmetric at ({p},{q})"
                    )));
                }
            }
        }
        for p in 0..n {
            for q in 0..n {
                for r in 0..n {
                    for s in 0..n {
                        let v = self.h2_at(p, q, r, s);
                        for w in [
                            self.h2_at(q, p, r, s),
                            self.h2_at(p, q, s, r),
                            self.h2_at(r, s, p, q),
                        ] {
                            if (v - w).abs() > 1e-10 {
                                return Err(Error::Numerical(format!(
                                    "h2 symmetry violated near ({p},{q},{r},{s})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Keep only `orbitals` (in the given order), relabelled 0..len-1.
    /// The dropped orbitals are treated as empty; no mean-field folding.
    pub fn restrict(&self, orbitals: &[usize]) -> MolecularIntegrals {
        let n = orbitals.len();
        let mut h1 = vec![0.0; n * n];
        let mut h2 = vec![0.0; n * n * n * n];
        for (i, &p) in orbitals.iter().enumerate() {
            for (j, &q) in orbitals.iter().enumerate() {
                h1[i * n + j] = self.h1_at(p, q);
            }
        }
        for (i, &p) in orbitals.iter().enumerate() {
            for (j, &q) in orbitals.iter().enumerate() {
                for (k, &r) in orbitals.iter().enumerate() {
                    for (l, &s) in orbitals.iter().enumerate() {
                        h2[((i * n + j) * n + k) * n + l] = self.h2_at(p, q, r, s);
                    }
                }
            }
        }
        MolecularIntegrals {
            n_spatial: n,
            e_const: self.e_const,
            h1,
            h2,
            n_electrons: self.n_electrons,
            geometry_label: self.geometry_label.clone(),
        }
    }

    /// Canonical FCIDUMP text (header + unique entries), round-trippable.
    pub fn to_fcidump_string(&self) -> String {
        let n = self.n_spatial;
        let mut out = String::new();
        out.push_str(&format!(
            "&FCI NORB={},NELEC={},MS2=0,\n ORBSYM={}\n ISYM=1,\n&END\n",
            n,
            self.n_electrons,
            "1,".repeat(n)
        ));
        let pair = |p: usize, q: usize| p * (p + 1) / 2 + q;
        for p in 0..n {
            for q in 0..=p {
                for r in 0..n {
                    for s in 0..=r {
                        if pair(p, q) < pair(r, s) {
                            continue;
                        }
                        let v = self.h2_at(p, q, r, s);
                        if v.abs() > 1e-12 {
                            out.push_str(&format!(
                                "{:.16e} {} {} {} {}\n",
                                v,
                                p + 1,
                                q + 1,
                                r + 1,
                                s + 1
                            ));
                        }
                    }
                }
            }
        }
        for p in 0..n {
            for q in 0..=p {
                let v = self.h1_at(p, q);
                if v.abs() > 1e-12 {
                    out.push_str(&format!("{:.16e} {} {} 0 0\n", v, p + 1, q + 1));
                }
            }
        }
        out.push_str(&format!("{:.16e} 0 0 0 0\n", self.e_const));
        out
    }
}

fn canonical_h2_key(p: usize, q: usize, r: usize, s: usize) -> (usize, usize, usize, usize) {
    let mut images = [
        (p, q, r, s),
        (q, p, r, s),
        (p, q, s, r),
        (q, p, s, r),
        (r, s, p, q),
        (s, r, p, q),
        (r, s, q, p),
        (s, r, q, p),
    ];
    images.sort_unstable();
    images[0]
}

/// Parse FCIDUMP text: namelist header with NORB, NELEC, MS2 (ORBSYM, ISYM
/// and unknown keys are accepted and ignored), then `value p q r s` entries
/// with 1-based indices. `p q 0 0` lines are one-electron integrals and
/// `0 0 0 0` is the scalar constant.
pub fn parse_fcidump(text: &str) -> Result<MolecularIntegrals> {
    let mut lines = text.lines().enumerate();

    // collect the namelist header up to &END or /
    let mut header = String::new();
    let mut header_end_line = 0;
    for (lineno, line) in lines.by_ref() {
        header.push_str(line);
        header.push(' ');
        header_end_line = lineno;
        let up = line.to_uppercase();
        if up.contains("&END") || up.trim_end().ends_with('/') {
            break;
        }
        if lineno > 200 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "unterminated FCIDUMP header".into(),
            });
        }
    }
    let up = header.to_uppercase();
    if !up.trim_start().starts_with("&FCI") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with &FCI".into(),
        });
    }
    let grab_int = |key: &str| -> Option<i64> {
        let pos = up.find(key)?;
        let rest = &up[pos + key.len()..];
        let rest = rest.trim_start();
        let rest = rest.strip_prefix('=')?.trim_start();
        let end = rest
            .find(|c: char| !(c.is_ascii_digit() || c == '-' || c == '+'))
            .unwrap_or(rest.len());
        rest[..end].parse().ok()
    };
    let norb = grab_int("NORB").ok_or(Error::Parse {
        line: 1,
        msg: "missing NORB in header".into(),
    })?;
    let nelec = grab_int("NELEC").ok_or(Error::Parse {
        line: 1,
        msg: "missing NELEC in header".into(),
    })?;
    if norb <= 0 || nelec < 0 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("bad NORB={norb} or NELEC={nelec}"),
        });
    }
    let n = norb as usize;

    let mut e_const = 0.0;
    let mut h1_entries: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    let mut h2_entries: HashMap<(usize, usize, usize, usize), (f64, usize)> = HashMap::new();

    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno1 = lineno + 1;
        let mut toks = line.split_whitespace();
        let vs = toks.next().unwrap();
        // Fortran-style D exponents appear in the wild
        let v: f64 = vs
            .replace(['D', 'd'], "E")
            .parse()
            .map_err(|_| Error::Parse {
                line: lineno1,
                msg: format!("bad value '{vs}'"),
            })?;
        let idx: Vec<i64> = toks
            .map(|t| {
                t.parse::<i64>().map_err(|_| Error::Parse {
                    line: lineno1,
                    msg: format!("bad index '{t}'"),
                })
            })
            .collect::<Result<_>>()?;
        if idx.len() != 4 {
            return Err(Error::Parse {
                line: lineno1,
                msg: format!("expected 4 indices, found {}", idx.len()),
            });
        }
        let (p, q, r, s) = (idx[0], idx[1], idx[2], idx[3]);
        let check = |i: i64| -> Result<usize> {
            if i < 1 || i > norb {
                Err(Error::Parse {
                    line: lineno1,
                    msg: format!("index {i} out of range 1..{norb}"),
                })
            } else {
                Ok((i - 1) as usize)
            }
        };
        if p == 0 && q == 0 && r == 0 && s == 0 {
            e_const = v;
        } else if r == 0 && s == 0 {
            let (p, q) = (check(p)?, check(q)?);
            let key = (p.max(q), p.min(q));
            if let Some((old, old_line)) = h1_entries.get(&key) {
                if (old - v).abs() > 1e-9 {
                    return Err(Error::Parse {
                        line: lineno1,
                        msg: format!(
                            "conflicting h1 entry for ({},{}) vs line {}",
                            p + 1,
                            q + 1,
                            old_line
                        ),
                    });
                }
            }
            h1_entries.insert(key, (v, lineno1));
        } else if p > 0 && q > 0 && r > 0 && s > 0 {
            let (p, q, r, s) = (check(p)?, check(q)?, check(r)?, check(s)?);
            let key = canonical_h2_key(p, q, r, s);
            if let Some((old, old_line)) = h2_entries.get(&key) {
                if (old - v).abs() > 1e-9 {
                    return Err(Error::Parse {
                        line: lineno1,
                        msg: format!(
                            "conflicting h2 entry for ({},{},{},{}) vs line {}",
                            p + 1,
                            q + 1,
                            r + 1,
                            s + 1,
                            old_line
                        ),
                    });
                }
            }
            h2_entries.insert(key, (v, lineno1));
        } else {
            return Err(Error::Parse {
                line: lineno1,
                msg: "mixed zero and nonzero indices".into(),
            });
        }
        let _ = header_end_line;
    }

    let mut h1 = vec![0.0; n * n];
    for (&(p, q), &(v, _)) in &h1_entries {
        h1[p * n + q] = v;
        h1[q * n + p] = v;
    }
    let mut h2 = vec![0.0; n * n * n * n];
    let at = |p: usize, q: usize, r: usize, s: usize| ((p * n + q) * n + r) * n + s;
    for (&(p, q, r, s), &(v, _)) in &h2_entries {
        for (a, b, c, d) in [
            (p, q, r, s),
            (q, p, r, s),
            (p, q, s, r),
            (q, p, s, r),
            (r, s, p, q),
            (s, r, p, q),
            (r, s, q, p),
            (s, r, q, p),
        ] {
            h2[at(a, b, c, d)] = v;
        }
    }

    Ok(MolecularIntegrals {
        n_spatial: n,
        e_const,
        h1,
        h2,
        n_electrons: nelec as usize,
        geometry_label: String::new(),
    })
}

/// Fold doubly-occupied core orbitals into the scalar constant and an
/// effective one-body field; returns integrals over the remaining orbitals
/// (relative order preserved) with the electron count reduced.
pub fn freeze_core(m: &MolecularIntegrals, core: &[usize]) -> Result<MolecularIntegrals> {
    let n = m.n_spatial;
    let mut is_core = vec![false; n];
    for &c in core {
        if c >= n {
            return Err(Error::Config(format!("core orbital {c} out of range")));
        }
        if is_core[c] {
            return Err(Error::Config(format!("core orbital {c} listed twice")));
        }
        is_core[c] = true;
    }
    if m.n_electrons < 2 * core.len() {
        return Err(Error::Config(format!(
            "cannot freeze {} orbitals with only {} electrons",
            core.len(),
            m.n_electrons
        )));
    }
    let rest: Vec<usize> = (0..n).filter(|&p| !is_core[p]).collect();
    let mut e = m.e_const;
    for &c in core {
        e += 2.0 * m.h1_at(c, c);
    }
    for &c in core {
        for &d in core {
            e += 2.0 * m.h2_at(c, c, d, d) - m.h2_at(c, d, d, c);
        }
    }
    let nr = rest.len();
    let mut h1 = vec![0.0; nr * nr];
    for (i, &p) in rest.iter().enumerate() {
        for (j, &q) in rest.iter().enumerate() {
            let mut v = m.h1_at(p, q);
            for &c in core {
                v += 2.0 * m.h2_at(p, q, c, c) - m.h2_at(p, c, c, q);
            }
            h1[i * nr + j] = v;
        }
    }
    let mut h2 = vec![0.0; nr * nr * nr * nr];
    for (i, &p) in rest.iter().enumerate() {
        for (j, &q) in rest.iter().enumerate() {
            for (k, &r) in rest.iter().enumerate() {
                for (l, &s) in rest.iter().enumerate() {
                    h2[((i * nr + j) * nr + k) * nr + l] = m.h2_at(p, q, r, s);
                }
            }
        }
    }
    Ok(MolecularIntegrals {
        n_spatial: nr,
        e_const: e,
        h1,
        h2,
        n_electrons: m.n_electrons - 2 * core.len(),
        geometry_label: m.geometry_label.clone(),
    })
}

/// Interleaved spin convention: spin-orbital 2p is spatial p spin-up,
/// 2p+1 is spin-down.
#[inline]
pub fn spin_orbital(spatial: usize, spin_down: bool) -> u32 {
    (2 * spatial + spin_down as usize) as u32
}

/// Second-quantized Hamiltonian over spin-orbitals,
/// `e_const + sum h_pq a_p^ a_q + 1/2 sum <pq|rs> a_p^ a_q^ a_s a_r`
/// with physicists' <pq|rs> = chemists' (pr|qs).
pub fn assemble_hamiltonian(m: &MolecularIntegrals) -> FermionSum {
    let n = m.n_spatial;
    let mut h = FermionSum::scalar(Complex64::new(m.e_const, 0.0));
    for p in 0..n {
        for q in 0..n {
            let v = m.h1_at(p, q);
            if v.abs() <= 1e-14 {
                continue;
            }
            for spin in [false, true] {
                h.add_assign(&FermionSum::from_ops(
                    Complex64::new(v, 0.0),
                    &[
                        LadderOp::create(spin_orbital(p, spin)),
                        LadderOp::destroy(spin_orbital(q, spin)),
                    ],
                ));
            }
        }
    }
    // 1/2 sum_{pqrs} (pq|rs) a^_{p,sa} a^_{r,sb} a_{s,sb} a_{q,sa}
    for p in 0..n {
        for q in 0..n {
            for r in 0..n {
                for s in 0..n {
                    let v = m.h2_at(p, q, r, s);
                    if v.abs() <= 1e-14 {
                        continue;
                    }
                    for sa in [false, true] {
                        for sb in [false, true] {
                            h.add_assign(&FermionSum::from_ops(
                                Complex64::new(0.5 * v, 0.0),
                                &[
                                    LadderOp::create(spin_orbital(p, sa)),
                                    LadderOp::create(spin_orbital(r, sb)),
                                    LadderOp::destroy(spin_orbital(s, sb)),
                                    LadderOp::destroy(spin_orbital(q, sa)),
                                ],
                            ));
                        }
                    }
                }
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_orbital_text() -> &'static str {
        "&FCI NORB=1,NELEC=2,MS2=0,\n ORBSYM=1,\n ISYM=1,\n&END\n-1.0 1 1 0 0\n0.0 0 0 0 0\n"
    }

    #[test]
    fn parse_single_orbital() {
        let m = parse_fcidump(single_orbital_text()).unwrap();
        assert_eq!(m.n_spatial, 1);
        assert_eq!(m.n_electrons, 2);
        assert_eq!(m.h1_at(0, 0), -1.0);
        assert_eq!(m.e_const, 0.0);
        // assembled Hamiltonian is -(n_up + n_down)
        let h = assemble_hamiltonian(&m);
        let expect = FermionSum::number_op(0)
            .add(&FermionSum::number_op(1))
            .scale(Complex64::new(-1.0, 0.0));
        assert_eq!(h, expect);
    }

    #[test]
    fn one_orbital_hubbard_form() {
        let text = "&FCI NORB=1,NELEC=2,MS2=0,\n&END\n\
                    0.5 1 1 1 1\n-1.0 1 1 0 0\n0.0 0 0 0 0\n";
        let m = parse_fcidump(text).unwrap();
        let h = assemble_hamiltonian(&m);
        // -(n0 + n1) + 0.5 * n0 n1
        let n0 = FermionSum::number_op(0);
        let n1 = FermionSum::number_op(1);
        let expect = n0
            .add(&n1)
            .scale(Complex64::new(-1.0, 0.0))
            .add(&n0.multiply(&n1).scale(Complex64::new(0.5, 0.0)));
        assert_eq!(h, expect);
    }

    #[test]
    fn hermiticity_of_assembled_hamiltonian() {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n\
                    0.6 1 1 1 1\n0.6 2 2 2 2\n0.3 1 1 2 2\n0.1 2 1 2 1\n0.05 2 1 1 1\n\
                    -1.2 1 1 0 0\n-0.9 2 2 0 0\n-0.05 2 1 0 0\n0.7 0 0 0 0\n";
        let m = parse_fcidump(text).unwrap();
        m.validate().unwrap();
        let h = assemble_hamiltonian(&m);
        let mut diff = h.hermitian_conjugate();
        diff.add_assign(&h.scale(Complex64::new(-1.0, 0.0)));
        assert!(diff.is_zero(), "H != H^dagger: {diff}");
    }

    #[test]
    fn parse_errors_name_lines() {
        let bad = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n1.0 3 1 0 0\n";
        match parse_fcidump(bad) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("out of range"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let conflict = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n\
                        1.0 1 2 0 0\n1.5 2 1 0 0\n";
        match parse_fcidump(conflict) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected conflict error, got {other:?}"),
        }
        let no_header = "1.0 1 1 0 0\n";
        assert!(parse_fcidump(no_header).is_err());
    }

    #[test]
    fn equal_duplicates_are_tolerated() {
        let dup = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n\
                   1.0 1 2 0 0\n1.0 2 1 0 0\n0.0 0 0 0 0\n";
        let m = parse_fcidump(dup).unwrap();
        assert_eq!(m.h1_at(0, 1), 1.0);
    }

    #[test]
    fn fcidump_roundtrip() {
        let text = "&FCI NORB=3,NELEC=2,MS2=0,\n&END\n\
                    0.61 1 1 1 1\n0.56 2 2 2 2\n0.31 1 1 2 2\n0.11 2 1 2 1\n\
                    0.07 3 1 2 1\n0.42 3 3 1 1\n\
                    -1.21 1 1 0 0\n-0.93 2 2 0 0\n-0.4 3 3 0 0\n-0.08 3 2 0 0\n\
                    0.71 0 0 0 0\n";
        let m = parse_fcidump(text).unwrap();
        let m2 = parse_fcidump(&m.to_fcidump_string()).unwrap();
        assert_eq!(m.n_spatial, m2.n_spatial);
        assert_eq!(m.n_electrons, m2.n_electrons);
        for (a, b) in m.h1.iter().zip(&m2.h1) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in m.h2.iter().zip(&m2.h2) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((m.e_const - m2.e_const).abs() < 1e-12);
    }

    #[test]
    fn freeze_core_empty_is_identity() {
        let m = parse_fcidump(single_orbital_text()).unwrap();
        let f = freeze_core(&m, &[]).unwrap();
        assert_eq!(f.n_spatial, m.n_spatial);
        assert_eq!(f.h1, m.h1);
        assert_eq!(f.e_const, m.e_const);
        assert_eq!(f.n_electrons, m.n_electrons);
    }

    #[test]
    fn freeze_core_rejects_bad_input() {
        let m = parse_fcidump(single_orbital_text()).unwrap();
        assert!(freeze_core(&m, &[5]).is_err());
        assert!(freeze_core(&m, &[0, 0]).is_err());
    }

    #[test]
    fn partition_validation() {
        let p = OrbitalPartition::new(vec![0], vec![1, 2], vec![3]);
        p.validate(4).unwrap();
        assert!(p.validate(3).is_err());
        let q = OrbitalPartition::new(vec![0], vec![], vec![1]);
        assert!(q.validate(2).is_err());
        let r = OrbitalPartition::new(vec![0], vec![0, 1], vec![2]);
        assert!(r.validate(3).is_err());
        let s = OrbitalPartition::new(vec![], vec![0], vec![2]);
        assert!(s.validate(3).is_err());
    }

    #[test]
    fn freeze_core_composes() {
        let text = "&FCI NORB=3,NELEC=6,MS2=0,\n&END\n\
                    0.61 1 1 1 1\n0.56 2 2 2 2\n0.31 1 1 2 2\n0.11 2 1 2 1\n\
                    0.07 3 1 2 1\n0.42 3 3 1 1\n0.55 3 3 3 3\n0.33 3 3 2 2\n\
                    -1.21 1 1 0 0\n-0.93 2 2 0 0\n-0.4 3 3 0 0\n-0.08 3 2 0 0\n\
                    0.71 0 0 0 0\n";
        let m = parse_fcidump(text).unwrap();
        // freezing {0} then {0 of the remainder, i.e. original 1} equals
        // freezing {0, 1} in one step
        let two_step = freeze_core(&freeze_core(&m, &[0]).unwrap(), &[0]).unwrap();
        let one_step = freeze_core(&m, &[0, 1]).unwrap();
        assert_eq!(two_step.n_spatial, one_step.n_spatial);
        assert_eq!(two_step.n_electrons, one_step.n_electrons);
        assert!((two_step.e_const - one_step.e_const).abs() < 1e-10);
        for (a, b) in two_step.h1.iter().zip(&one_step.h1) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in two_step.h2.iter().zip(&one_step.h2) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn spin_symmetry_of_assembled_hamiltonian() {
        // [H, Sz] = 0 on dense matrices
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n\
                    0.6 1 1 1 1\n0.5 2 2 2 2\n0.3 1 1 2 2\n0.1 2 1 2 1\n\
                    -1.2 1 1 0 0\n-0.9 2 2 0 0\n0.7 0 0 0 0\n";
        let m = parse_fcidump(text).unwrap();
        let h = assemble_hamiltonian(&m).dense_matrix(4);
        let mut sz = FermionSum::zero();
        for p in 0..2 {
            sz.add_assign(&FermionSum::number_op(spin_orbital(p, false)));
            sz.add_assign(
                &FermionSum::number_op(spin_orbital(p, true)).scale(Complex64::new(-1.0, 0.0)),
            );
        }
        let szm = sz.dense_matrix(4);
        let comm = (&h * &szm) - (&szm * &h);
        assert!(comm.norm() < 1e-10);
    }

    #[test]
    fn particle_conservation_term_structure() {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n\
                    0.6 1 1 1 1\n0.3 1 1 2 2\n0.1 2 1 2 1\n-1.2 1 1 0 0\n0.7 0 0 0 0\n";
        let m = parse_fcidump(text).unwrap();
        let h = assemble_hamiltonian(&m);
        for (t, _) in h.terms() {
            let nc = t.iter().filter(|o| o.dagger).count();
            let na = t.len() - nc;
            assert_eq!(nc, na, "term not particle conserving");
        }
    }
}
