//! Symbolic algebra of fermionic ladder operators.
//!
//! A [`FermionSum`] is a linear combination of normal-ordered ladder-operator
//! products: within each term all creations precede annihilations, creations
//! are strictly descending by mode, annihilations strictly ascending. The
//! anticommutation relations `{a_p, a_q^} = delta_pq` are applied during
//! multiplication, so every sum is always held in canonical form.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::qubitops::{PauliString, PauliSum};

/// Coefficients below this magnitude are pruned.
pub const PRUNE_TOL: f64 = 1e-14;

/// A single creation or annihilation operator on a spin-orbital mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LadderOp {
    pub mode: u32,
    pub dagger: bool,
}

impl LadderOp {
    pub fn create(mode: u32) -> Self {
        LadderOp { mode, dagger: true }
    }

    pub fn destroy(mode: u32) -> Self {
        LadderOp { mode, dagger: false }
    }
}

type Term = Vec<LadderOp>;

/// Linear combination of normal-ordered ladder-operator products.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FermionSum {
    terms: BTreeMap<Term, Complex64>,
}

impl FermionSum {
    pub fn zero() -> Self {
        FermionSum::default()
    }

    /// The scalar `c * 1`.
    pub fn scalar(c: Complex64) -> Self {
        let mut s = FermionSum::zero();
        if c.norm() > PRUNE_TOL {
            s.terms.insert(Vec::new(), c);
        }
        s
    }

    pub fn identity() -> Self {
        FermionSum::scalar(Complex64::new(1.0, 0.0))
    }

    /// Build from a single operator product (any order); normal-orders.
    pub fn from_ops(coeff: Complex64, ops: &[LadderOp]) -> Self {
        let mut s = FermionSum::zero();
        s.accumulate(coeff, ops.to_vec());
        s.prune();
        s
    }

    /// `c * a_mode^ a_mode` convenience (number operator).
    pub fn number_op(mode: u32) -> Self {
        FermionSum::from_ops(
            Complex64::new(1.0, 0.0),
            &[LadderOp::create(mode), LadderOp::destroy(mode)],
        )
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Term, &Complex64)> {
        self.terms.iter()
    }

    /// Coefficient of the canonical term, zero if absent.
    pub fn coeff(&self, ops: &[LadderOp]) -> Complex64 {
        self.terms
            .get(ops)
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    /// Largest mode index appearing, if any.
    pub fn max_mode(&self) -> Option<u32> {
        self.terms
            .keys()
            .flat_map(|t| t.iter().map(|o| o.mode))
            .max()
    }

    pub fn add_assign(&mut self, other: &FermionSum) {
        for (t, c) in &other.terms {
            let e = self
                .terms
                .entry(t.clone())
                .or_insert_with(|| Complex64::new(0.0, 0.0));
            *e += c;
        }
        self.prune();
    }

    pub fn add(&self, other: &FermionSum) -> FermionSum {
        let mut s = self.clone();
        s.add_assign(other);
        s
    }

    pub fn scale(&self, c: Complex64) -> FermionSum {
        let mut s = FermionSum::zero();
        for (t, v) in &self.terms {
            let cv = v * c;
            if cv.norm() > PRUNE_TOL {
                s.terms.insert(t.clone(), cv);
            }
        }
        s
    }

    /// Distributive product, normal-ordered.
    pub fn multiply(&self, other: &FermionSum) -> FermionSum {
        let mut out = FermionSum::zero();
        for (t1, c1) in &self.terms {
            for (t2, c2) in &other.terms {
                let mut ops = Vec::with_capacity(t1.len() + t2.len());
                ops.extend_from_slice(t1);
                ops.extend_from_slice(t2);
                out.accumulate(c1 * c2, ops);
            }
        }
        out.prune();
        out
    }

    /// Reverses each product, flips daggers, conjugates coefficients.
    pub fn hermitian_conjugate(&self) -> FermionSum {
        let mut out = FermionSum::zero();
        for (t, c) in &self.terms {
            let ops: Vec<LadderOp> = t
                .iter()
                .rev()
                .map(|o| LadderOp {
                    mode: o.mode,
                    dagger: !o.dagger,
                })
                .collect();
            out.accumulate(c.conj(), ops);
        }
        out.prune();
        out
    }

    /// Effective operator on the non-virtual modes after sandwiching between
    /// virtual vacua: normal ordering already pushes virtual creations left
    /// and virtual annihilations right, so every normal-ordered term that
    /// still touches a virtual mode has a vanishing vacuum sandwich and is
    /// dropped.
    pub fn contract_virtual_vacuum(&self, virtual_modes: &[u32]) -> FermionSum {
        let mut mask = [false; 64];
        for &m in virtual_modes {
            mask[m as usize] = true;
        }
        let mut out = FermionSum::zero();
        for (t, c) in &self.terms {
            if t.iter().any(|o| mask[o.mode as usize]) {
                continue;
            }
            out.terms.insert(t.clone(), *c);
        }
        out
    }

    /// Jordan-Wigner transform: `a_j^ -> Z_0..Z_{j-1} (X_j - i Y_j)/2`.
    pub fn jordan_wigner(&self, n_modes: usize) -> PauliSum {
        let mut out = PauliSum::zero(n_modes);
        for (t, c) in &self.terms {
            let mut acc = PauliSum::scalar_op(n_modes, *c);
            for op in t {
                debug_assert!((op.mode as usize) < n_modes);
                let j = op.mode;
                let zchain: u64 = (1u64 << j) - 1;
                let mut factor = PauliSum::zero(n_modes);
                // X_j Z_chain with +1/2, Y_j Z_chain with -i/2 (dagger) or +i/2
                let half = Complex64::new(0.5, 0.0);
                let ihalf = if op.dagger {
                    Complex64::new(0.0, -0.5)
                } else {
                    Complex64::new(0.0, 0.5)
                };
                factor.add_term(
                    PauliString {
                        x: 1u64 << j,
                        z: zchain,
                    },
                    half,
                );
                factor.add_term(
                    PauliString {
                        x: 1u64 << j,
                        z: zchain | (1u64 << j),
                    },
                    ihalf,
                );
                acc = acc.multiply(&factor);
            }
            out.add_assign(&acc);
        }
        out.simplify();
        out
    }

    /// Dense matrix in the occupation-number basis (bit j of the basis index
    /// is the occupation of mode j); phases follow the convention that a
    /// determinant is built by applying creations in descending mode order.
    pub fn dense_matrix(&self, n_modes: usize) -> DMatrix<Complex64> {
        assert!(n_modes <= 12, "dense fermion matrices are for small tests");
        let dim = 1usize << n_modes;
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        for (t, c) in &self.terms {
            for col in 0..dim {
                let mut state = col as u64;
                let mut amp = *c;
                let mut dead = false;
                for op in t.iter().rev() {
                    let bit = 1u64 << op.mode;
                    let occupied = state & bit != 0;
                    if op.dagger == occupied {
                        dead = true;
                        break;
                    }
                    let parity = (state & (bit - 1)).count_ones() & 1;
                    if parity == 1 {
                        amp = -amp;
                    }
                    state ^= bit;
                }
                if !dead {
                    m[(state as usize, col)] += amp;
                }
            }
        }
        m
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.norm() > PRUNE_TOL);
    }

    /// Normal-order `ops` with coefficient `coeff` and accumulate.
    fn accumulate(&mut self, coeff: Complex64, ops: Vec<LadderOp>) {
        let mut stack: Vec<(Vec<LadderOp>, Complex64)> = vec![(ops, coeff)];
        'outer: while let Some((mut t, c)) = stack.pop() {
            if c.norm() <= PRUNE_TOL {
                continue;
            }
            for i in 0..t.len().saturating_sub(1) {
                let (a, b) = (t[i], t[i + 1]);
                if !a.dagger && b.dagger {
                    // a_p a_q^ = delta_pq - a_q^ a_p
                    if a.mode == b.mode {
                        let mut contracted = t.clone();
                        contracted.drain(i..i + 2);
                        stack.push((contracted, c));
                    }
                    t.swap(i, i + 1);
                    stack.push((t, -c));
                    continue 'outer;
                }
                if a.dagger && b.dagger && a.mode <= b.mode {
                    if a.mode == b.mode {
                        continue 'outer; // zero
                    }
                    t.swap(i, i + 1);
                    stack.push((t, -c));
                    continue 'outer;
                }
                if !a.dagger && !b.dagger && a.mode >= b.mode {
                    if a.mode == b.mode {
                        continue 'outer;
                    }
                    t.swap(i, i + 1);
                    stack.push((t, -c));
                    continue 'outer;
                }
            }
            let e = self
                .terms
                .entry(t)
                .or_insert_with(|| Complex64::new(0.0, 0.0));
            *e += c;
        }
    }
}

impl fmt::Display for FermionSum {
    /// One term per line: `(+1.5) 3^ 2^ 1 0` with caret marking creation.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return writeln!(f, "(0)");
        }
        for (t, c) in &self.terms {
            if c.im.abs() > PRUNE_TOL {
                write!(f, "({:+}{:+}i)", c.re, c.im)?;
            } else {
                write!(f, "({:+})", c.re)?;
            }
            for op in t {
                write!(f, " {}{}", op.mode, if op.dagger { "^" } else { "" })?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for FermionSum {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut sum = FermionSum::zero();
        for (lineno, line) in s.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "(0)" {
                continue;
            }
            let err = |msg: &str| crate::error::Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let close = line.find(')').ok_or_else(|| err("missing ')'"))?;
            if !line.starts_with('(') {
                return Err(err("missing '('"));
            }
            let coeff_str = &line[1..close];
            let coeff = parse_complex(coeff_str)
                .ok_or_else(|| err("bad coefficient"))?;
            let mut ops = Vec::new();
            for tok in line[close + 1..].split_whitespace() {
                let (num, dag) = match tok.strip_suffix('^') {
                    Some(n) => (n, true),
                    None => (tok, false),
                };
                let mode: u32 = num.parse().map_err(|_| err("bad mode index"))?;
                ops.push(LadderOp { mode, dagger: dag });
            }
            sum.accumulate(coeff, ops);
        }
        sum.prune();
        Ok(sum)
    }
}

fn parse_complex(s: &str) -> Option<Complex64> {
    let s = s.trim();
    if let Some(body) = s.strip_suffix('i') {
        // forms like +1.5+0.5 with the final sign splitting re/im
        let split = body
            .char_indices()
            .skip(1)
            .filter(|(k, ch)| {
                (*ch == '+' || *ch == '-')
                    && !matches!(body.as_bytes()[k - 1], b'e' | b'E')
            })
            .map(|(k, _)| k)
            .last()?;
        let re: f64 = body[..split].parse().ok()?;
        let im: f64 = body[split..].parse().ok()?;
        Some(Complex64::new(re, im))
    } else {
        s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0))
    }
}
