//! Expansion-operator generation and assembly of the Hermitian pencil
//! (A, B) by two interchangeable paths: the measurement path (vacuum
//! contraction, Jordan-Wigner on the active modes, pair-subspace
//! projection, Pauli-table lookup) and the full-statevector oracle path.
//!
//! Mode convention inside this module: the active spin-orbitals occupy
//! modes 0..2a-1 and the virtual spin-orbitals follow, so the Hamiltonian
//! handed in must be assembled from integrals ordered active-then-virtual.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermion::{FermionSum, LadderOp};
use crate::oracles::{apply_ladder_ops, SectorBasis, SectorMatrix};
use crate::qubitops::{
    complex_expectation_from_pauli_table, project_to_pair_subspace, PauliSum, PauliTable,
    PAIR_SECTOR_MASKS,
};
use crate::simulator::StateVector;

/// Expansion-operator species.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpKind {
    Identity,
    Single,
    Double,
}

/// One expansion operator: the identity, a single `a_i^ a_p`, or a double
/// `a_mu^ a_q a_nu^ a_r` in couple order (spin-orbital mode indices).
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionOperator {
    pub kind: OpKind,
    pub indices: Vec<u32>,
    pub op: FermionSum,
}

impl ExpansionOperator {
    pub fn identity() -> Self {
        ExpansionOperator {
            kind: OpKind::Identity,
            indices: Vec::new(),
            op: FermionSum::identity(),
        }
    }

    pub fn single(i: u32, p: u32) -> Self {
        ExpansionOperator {
            kind: OpKind::Single,
            indices: vec![i, p],
            op: FermionSum::from_ops(
                Complex64::new(1.0, 0.0),
                &[LadderOp::create(i), LadderOp::destroy(p)],
            ),
        }
    }

    pub fn double(mu: u32, q: u32, nu: u32, r: u32) -> Self {
        ExpansionOperator {
            kind: OpKind::Double,
            indices: vec![mu, q, nu, r],
            op: FermionSum::from_ops(
                Complex64::new(1.0, 0.0),
                &[
                    LadderOp::create(mu),
                    LadderOp::destroy(q),
                    LadderOp::create(nu),
                    LadderOp::destroy(r),
                ],
            ),
        }
    }

    pub fn from_indices(kind: OpKind, indices: &[u32]) -> Result<Self> {
        match (kind, indices) {
            (OpKind::Identity, []) => Ok(Self::identity()),
            (OpKind::Single, &[i, p]) => Ok(Self::single(i, p)),
            (OpKind::Double, &[mu, q, nu, r]) => Ok(Self::double(mu, q, nu, r)),
            _ => Err(Error::Data("inconsistent operator kind/indices".into())),
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            OpKind::Identity => "I".to_string(),
            OpKind::Single => format!("{}^ {}", self.indices[0], self.indices[1]),
            OpKind::Double => format!(
                "{}^ {} {}^ {}",
                self.indices[0], self.indices[1], self.indices[2], self.indices[3]
            ),
        }
    }

    /// Virtual modes created by this operator (modes >= the active count).
    fn virtual_creations(&self, n_active_modes: u32) -> Vec<u32> {
        let mut v: Vec<u32> = self
            .indices
            .iter()
            .step_by(2)
            .copied()
            .filter(|&m| m >= n_active_modes)
            .collect();
        v.sort_unstable();
        v
    }

    /// Net spin-z change in half units: creations add, annihilations
    /// subtract; up modes are even.
    pub fn spin_z_weight(&self) -> i32 {
        let mut w = 0;
        if let Some((t, _)) = self.op.terms().next() {
            for op in t {
                let s = if op.mode % 2 == 0 { 1 } else { -1 };
                w += if op.dagger { s } else { -s };
            }
        }
        w
    }
}

/// Geometry of the spin-orbital layout used by the subspace machinery.
#[derive(Clone, Copy, Debug)]
pub struct ModeLayout {
    pub n_active_modes: u32,
    pub n_virtual_modes: u32,
}

impl ModeLayout {
    pub fn new(n_active_orbitals: usize, n_virtual_orbitals: usize) -> Self {
        ModeLayout {
            n_active_modes: 2 * n_active_orbitals as u32,
            n_virtual_modes: 2 * n_virtual_orbitals as u32,
        }
    }

    pub fn total_modes(&self) -> usize {
        (self.n_active_modes + self.n_virtual_modes) as usize
    }

    pub fn virtual_modes(&self) -> Vec<u32> {
        (self.n_active_modes..self.n_active_modes + self.n_virtual_modes).collect()
    }
}

/// Enumerate the identity, all Sz-conserving singles `a_i^ a_p`
/// (i anywhere, p active), and all Sz-conserving doubles
/// `a_mu^ a_q a_nu^ a_r` (mu, nu virtual; q, r active). Doubles are kept in
/// couple form: unordered pairs of (creation, annihilation) couples with the
/// identically-zero ones (mu = nu or q = r) dropped. Deterministic order.
pub fn generate_expansion_ops(layout: &ModeLayout) -> Vec<ExpansionOperator> {
    let spin = |m: u32| m % 2;
    let n_act = layout.n_active_modes;
    let n_tot = n_act + layout.n_virtual_modes;
    let mut ops = vec![ExpansionOperator::identity()];
    for i in 0..n_tot {
        for p in 0..n_act {
            if spin(i) == spin(p) {
                ops.push(ExpansionOperator::single(i, p));
            }
        }
    }
    let mut couples = Vec::new();
    for mu in n_act..n_tot {
        for q in 0..n_act {
            couples.push((mu, q));
        }
    }
    for (a, &(mu, q)) in couples.iter().enumerate() {
        for &(nu, r) in couples.iter().skip(a + 1) {
            if mu == nu || q == r {
                continue;
            }
            let dsz = (spin(mu) as i32 - spin(q) as i32) + (spin(nu) as i32 - spin(r) as i32);
            if dsz != 0 {
                continue;
            }
            ops.push(ExpansionOperator::double(mu, q, nu, r));
        }
    }
    ops
}

/// Reduce an operator on active + virtual modes to its 2-qubit form:
/// contract the virtual vacuum, Jordan-Wigner on the four active modes,
/// then project onto the pair subspace.
pub fn reduce_operator(x: &FermionSum, layout: &ModeLayout) -> Result<PauliSum> {
    if layout.n_active_modes != 4 {
        return Err(Error::Config(format!(
            "two-qubit reduction needs a 2-orbital active space, got {} modes",
            layout.n_active_modes
        )));
    }
    let contracted = x.contract_virtual_vacuum(&layout.virtual_modes());
    let encoded = contracted.jordan_wigner(4);
    project_to_pair_subspace(&encoded)
}

/// Where a pencil's entries came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PencilSource {
    Measured,
    Oracle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PencilDiagnostics {
    /// Norm of (M - M^dagger)/2; zero for construction by conjugate fill,
    /// possibly nonzero for pencils loaded from external data.
    pub asymmetry_a: f64,
    pub asymmetry_b: f64,
    /// True when the underlying data was deterministic and unbiased.
    pub exact_data: bool,
    /// True when the pencil is variationally contained (exact data, or a
    /// measured table projected onto physical tomography data): its
    /// generalized eigenvalues cannot dip below the sector spectrum, so
    /// rank selection may keep every usable eigenvalue.
    #[serde(default)]
    pub variational_safe: bool,
    pub norm_cutoff: f64,
    pub n_enumerated: usize,
    /// Surviving operators, identity included.
    pub n_surviving: usize,
    pub warnings: Vec<String>,
}

/// The Hermitian pencil (A, B) with labels and provenance.
#[derive(Clone, Debug)]
pub struct PencilProblem {
    pub a: DMatrix<Complex64>,
    pub b: DMatrix<Complex64>,
    pub labels: Vec<ExpansionOperator>,
    pub source: PencilSource,
    pub diagnostics: PencilDiagnostics,
}

impl PencilProblem {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

/// Hamiltonian terms grouped by their virtual-mode support
/// (sorted creations, sorted annihilations); only groups compatible with a
/// pair's virtual transfer can contribute to its contracted product.
struct GroupedHamiltonian {
    groups: HashMap<(Vec<u32>, Vec<u32>), FermionSum>,
}

impl GroupedHamiltonian {
    fn new(h: &FermionSum, n_active_modes: u32) -> Self {
        let mut groups: HashMap<(Vec<u32>, Vec<u32>), FermionSum> = HashMap::new();
        for (t, c) in h.terms() {
            let mut cre: Vec<u32> = t
                .iter()
                .filter(|o| o.dagger && o.mode >= n_active_modes)
                .map(|o| o.mode)
                .collect();
            let mut ann: Vec<u32> = t
                .iter()
                .filter(|o| !o.dagger && o.mode >= n_active_modes)
                .map(|o| o.mode)
                .collect();
            cre.sort_unstable();
            ann.sort_unstable();
            groups
                .entry((cre, ann))
                .or_insert_with(FermionSum::zero)
                .add_assign(&FermionSum::from_ops(*c, t));
        }
        GroupedHamiltonian { groups }
    }

    /// Sum of groups that can bridge O_i^ (annihilating virtual set `ci`)
    /// and O_j (creating virtual set `cj`).
    fn bridging(&self, ci: &[u32], cj: &[u32]) -> FermionSum {
        let need_cre: Vec<u32> = ci.iter().copied().filter(|m| !cj.contains(m)).collect();
        let need_ann: Vec<u32> = cj.iter().copied().filter(|m| !ci.contains(m)).collect();
        let shared: Vec<u32> = ci.iter().copied().filter(|m| cj.contains(m)).collect();
        let mut acc = FermionSum::zero();
        for subset_bits in 0..(1u32 << shared.len()) {
            let mut cre = need_cre.clone();
            let mut ann = need_ann.clone();
            for (k, &m) in shared.iter().enumerate() {
                if subset_bits >> k & 1 == 1 {
                    cre.push(m);
                    ann.push(m);
                }
            }
            cre.sort_unstable();
            ann.sort_unstable();
            if let Some(g) = self.groups.get(&(cre, ann)) {
                acc.add_assign(g);
            }
        }
        acc
    }
}

/// Per-pair reduced coefficient block: the 16 Pauli-pair coefficients of
/// reduce(O_i^ X O_j), contractable against any measured table.
type CoeffBlock = [Complex64; 16];

fn coeff_block(op2: &PauliSum) -> CoeffBlock {
    let mut out = [Complex64::new(0.0, 0.0); 16];
    for (s, c) in op2.terms() {
        out[PauliTable::index(s.letter(0), s.letter(1))] = *c;
    }
    out
}

fn eval_block(block: &CoeffBlock, table: &PauliTable) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for p0 in crate::qubitops::Pauli::ALL {
        for p1 in crate::qubitops::Pauli::ALL {
            let k = PauliTable::index(p0, p1);
            if block[k].norm_sqr() != 0.0 {
                acc += block[k] * table.get(p0, p1);
            }
        }
    }
    acc
}

/// Precomputed reduced coefficient blocks for a fixed operator list and
/// Hamiltonian; assembling a pencil for a given measured table is then a
/// cheap contraction, so seed ensembles reuse the symbolic work.
pub struct PencilAssembler {
    layout: ModeLayout,
    ops: Vec<ExpansionOperator>,
    /// Upper triangle (i <= j), row-major: blocks for A and B.
    a_blocks: Vec<CoeffBlock>,
    b_blocks: Vec<CoeffBlock>,
}

impl PencilAssembler {
    pub fn new(
        ops: Vec<ExpansionOperator>,
        hamiltonian: &FermionSum,
        layout: ModeLayout,
    ) -> Result<Self> {
        if layout.n_active_modes != 4 {
            return Err(Error::Config(
                "measured pencils need a 2-orbital active space".into(),
            ));
        }
        if let Some(max_mode) = hamiltonian.max_mode() {
            if max_mode as usize >= layout.total_modes() {
                return Err(Error::Config(format!(
                    "Hamiltonian touches mode {max_mode}, beyond the layout"
                )));
            }
        }
        let grouped = GroupedHamiltonian::new(hamiltonian, layout.n_active_modes);
        let n = ops.len();
        let daggers: Vec<FermionSum> = ops.iter().map(|o| o.op.hermitian_conjugate()).collect();
        let creations: Vec<Vec<u32>> = ops
            .iter()
            .map(|o| o.virtual_creations(layout.n_active_modes))
            .collect();
        let virtual_modes = layout.virtual_modes();

        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .collect();
        let blocks: Vec<(CoeffBlock, CoeffBlock)> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let ci = &creations[i];
                let cj = &creations[j];
                // B block: O_i^ O_j contracts only when the virtual sets match
                let b_block = if ci == cj {
                    let prod = daggers[i].multiply(&ops[j].op);
                    let reduced = reduce_on(&prod, &virtual_modes);
                    coeff_block(&reduced)
                } else {
                    [Complex64::new(0.0, 0.0); 16]
                };
                // A block: bridgeable Hamiltonian groups only
                let h_part = grouped.bridging(ci, cj);
                let a_block = if h_part.is_zero() {
                    [Complex64::new(0.0, 0.0); 16]
                } else {
                    let prod = daggers[i].multiply(&h_part).multiply(&ops[j].op);
                    let reduced = reduce_on(&prod, &virtual_modes);
                    coeff_block(&reduced)
                };
                (a_block, b_block)
            })
            .collect();
        let mut a_blocks = Vec::with_capacity(blocks.len());
        let mut b_blocks = Vec::with_capacity(blocks.len());
        for (a, b) in blocks {
            a_blocks.push(a);
            b_blocks.push(b);
        }
        Ok(PencilAssembler {
            layout,
            ops,
            a_blocks,
            b_blocks,
        })
    }

    fn pair_index(&self, i: usize, j: usize, n: usize) -> usize {
        // upper triangle, i <= j: row i starts after sum_{r<i} (n - r)
        i * (2 * n - i + 1) / 2 + (j - i)
    }

    pub fn ops(&self) -> &[ExpansionOperator] {
        &self.ops
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    /// Contract the precomputed blocks against a measured table, filter by
    /// the diagonal norm, and return the Hermitian pencil.
    pub fn assemble(
        &self,
        table: &PauliTable,
        norm_cutoff: f64,
        exact_data: bool,
    ) -> Result<PencilProblem> {
        let n = self.ops.len();
        let mut keep = Vec::new();
        for j in 0..n {
            let bjj = eval_block(&self.b_blocks[self.pair_index(j, j, n)], table).re;
            if bjj >= norm_cutoff {
                keep.push(j);
            }
        }
        if keep.is_empty() {
            return Err(Error::EmptyPencil(format!(
                "all {n} operators fall below the norm cutoff {norm_cutoff}"
            )));
        }
        let m = keep.len();
        let mut a = DMatrix::<Complex64>::zeros(m, m);
        let mut b = DMatrix::<Complex64>::zeros(m, m);
        for (ii, &i) in keep.iter().enumerate() {
            for (jj, &j) in keep.iter().enumerate().skip(ii) {
                let pk = self.pair_index(i, j, n);
                let av = eval_block(&self.a_blocks[pk], table);
                let bv = eval_block(&self.b_blocks[pk], table);
                a[(ii, jj)] = av;
                a[(jj, ii)] = av.conj();
                b[(ii, jj)] = bv;
                b[(jj, ii)] = bv.conj();
            }
        }
        let labels: Vec<ExpansionOperator> = keep.iter().map(|&k| self.ops[k].clone()).collect();
        Ok(PencilProblem {
            a,
            b,
            labels,
            source: PencilSource::Measured,
            diagnostics: PencilDiagnostics {
                asymmetry_a: 0.0,
                asymmetry_b: 0.0,
                exact_data,
                variational_safe: exact_data,
                norm_cutoff,
                n_enumerated: n,
                n_surviving: m,
                warnings: Vec::new(),
            },
        })
    }
}

fn reduce_on(x: &FermionSum, virtual_modes: &[u32]) -> PauliSum {
    let contracted = x.contract_virtual_vacuum(virtual_modes);
    let encoded = contracted.jordan_wigner(4);
    project_to_pair_subspace(&encoded).expect("4 active modes")
}

/// Measurement-path pencil: every entry is a table evaluation of
/// reduce(O_i^ H O_j) and reduce(O_i^ O_j); operators whose diagonal
/// overlap falls below `norm_cutoff` are removed with their rows and
/// columns.
pub fn build_pencil(
    ops: Vec<ExpansionOperator>,
    hamiltonian: &FermionSum,
    table: &PauliTable,
    norm_cutoff: f64,
    layout: ModeLayout,
    exact_data: bool,
) -> Result<PencilProblem> {
    // filter first on the cheap diagonal blocks, then assemble survivors
    let n_enumerated = ops.len();
    let virtual_modes = layout.virtual_modes();
    let survivors: Vec<ExpansionOperator> = ops
        .into_par_iter()
        .filter(|o| {
            let prod = o.op.hermitian_conjugate().multiply(&o.op);
            let reduced = reduce_on(&prod, &virtual_modes);
            complex_expectation_from_pauli_table(&reduced, table).re >= norm_cutoff
        })
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptyPencil(format!(
            "all {n_enumerated} operators fall below the norm cutoff {norm_cutoff}"
        )));
    }
    let assembler = PencilAssembler::new(survivors, hamiltonian, layout)?;
    let mut pencil = assembler.assemble(table, norm_cutoff, exact_data)?;
    pencil.diagnostics.n_enumerated = n_enumerated;
    Ok(pencil)
}

/// A real active-space state expressed over the sector determinant basis,
/// ready for embedding against the virtual vacuum.
#[derive(Clone, Debug)]
pub struct OracleState {
    pub n_active_modes: usize,
    pub n_electrons: usize,
    pub amplitudes: Vec<f64>,
}

impl OracleState {
    pub fn new(n_active_modes: usize, n_electrons: usize, amplitudes: Vec<f64>) -> Result<Self> {
        let basis = SectorBasis::new(n_active_modes, n_electrons, 0)?;
        if basis.dim() != amplitudes.len() {
            return Err(Error::Config(format!(
                "state has {} amplitudes, sector dimension is {}",
                amplitudes.len(),
                basis.dim()
            )));
        }
        Ok(OracleState {
            n_active_modes,
            n_electrons,
            amplitudes,
        })
    }

    /// Lift a 2-qubit pair-ansatz state onto the 4-mode sector basis.
    /// The state must be real up to a global phase.
    pub fn from_pair_state(state: &StateVector) -> Result<Self> {
        if state.n_qubits() != 2 {
            return Err(Error::Config("pair states live on 2 qubits".into()));
        }
        let amps = state.amplitudes();
        // strip the global phase using the largest amplitude
        let pivot = amps
            .iter()
            .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
            .copied()
            .unwrap();
        let phase = pivot / pivot.norm();
        let basis = SectorBasis::new(4, 2, 0)?;
        debug_assert_eq!(basis.determinants, PAIR_SECTOR_MASKS.to_vec());
        let mut out = vec![0.0; 4];
        for (k, &mask) in PAIR_SECTOR_MASKS.iter().enumerate() {
            let v = amps[k] / phase;
            if v.im.abs() > 1e-10 {
                return Err(Error::Numerical(
                    "pair state is not real up to a global phase".into(),
                ));
            }
            let idx = basis.index_of(mask).expect("sector mask");
            out[idx] = v.re;
        }
        OracleState::new(4, 2, out)
    }
}

/// Oracle-path pencil: embed the active state against the virtual vacuum,
/// apply each operator exactly in the full-register determinant basis, and
/// take exact expectations. Same norm filtering as the measured path.
pub fn build_pencil_oracle(
    ops: Vec<ExpansionOperator>,
    hamiltonian: &FermionSum,
    state: &OracleState,
    layout: ModeLayout,
    norm_cutoff: f64,
) -> Result<PencilProblem> {
    let n_modes = layout.total_modes();
    if n_modes > crate::simulator::STATEVECTOR_CAP {
        return Err(Error::DimensionCap(format!(
            "{n_modes} modes exceed the oracle register cap"
        )));
    }
    if state.n_active_modes != layout.n_active_modes as usize {
        return Err(Error::Config("state/layout active size mismatch".into()));
    }
    let n_enumerated = ops.len();
    let active_basis = SectorBasis::new(state.n_active_modes, state.n_electrons, 0)?;
    let full_basis = SectorBasis::new(n_modes, state.n_electrons, 0)?;
    let h_sec = SectorMatrix::build(hamiltonian, &full_basis)?;

    // embedded state: identical masks, virtual modes empty
    let dim = full_basis.dim();
    let mut psi = vec![0.0; dim];
    for (k, &mask) in active_basis.determinants.iter().enumerate() {
        if let Some(idx) = full_basis.index_of(mask) {
            psi[idx] = state.amplitudes[k];
        }
    }

    // apply each operator to the embedded state
    let columns: Vec<Vec<f64>> = ops
        .par_iter()
        .map(|op| {
            let mut col = vec![0.0; dim];
            for (t, c) in op.op.terms() {
                debug_assert!(c.im.abs() < 1e-14);
                for (k, &mask) in full_basis.determinants.iter().enumerate() {
                    let x = psi[k];
                    if x == 0.0 {
                        continue;
                    }
                    if let Some((out, sign)) = apply_ladder_ops(mask, t) {
                        if let Some(idx) = full_basis.index_of(out) {
                            col[idx] += c.re * sign * x;
                        }
                    }
                }
            }
            col
        })
        .collect();

    let keep: Vec<usize> = (0..ops.len())
        .filter(|&j| {
            let nrm: f64 = columns[j].iter().map(|x| x * x).sum();
            nrm >= norm_cutoff
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyPencil(format!(
            "all {n_enumerated} operators fall below the norm cutoff {norm_cutoff}"
        )));
    }
    let m = keep.len();
    let h_cols: Vec<Vec<f64>> = keep
        .par_iter()
        .map(|&j| {
            let mut y = vec![0.0; dim];
            h_sec.matvec(&columns[j], &mut y);
            y
        })
        .collect();
    let mut a = DMatrix::<Complex64>::zeros(m, m);
    let mut b = DMatrix::<Complex64>::zeros(m, m);
    for ii in 0..m {
        let xi = &columns[keep[ii]];
        for jj in ii..m {
            let av: f64 = xi.iter().zip(&h_cols[jj]).map(|(x, y)| x * y).sum();
            let bv: f64 = xi.iter().zip(&columns[keep[jj]]).map(|(x, y)| x * y).sum();
            a[(ii, jj)] = Complex64::new(av, 0.0);
            a[(jj, ii)] = Complex64::new(av, 0.0);
            b[(ii, jj)] = Complex64::new(bv, 0.0);
            b[(jj, ii)] = Complex64::new(bv, 0.0);
        }
    }
    let labels: Vec<ExpansionOperator> = keep.iter().map(|&k| ops[k].clone()).collect();
    Ok(PencilProblem {
        a,
        b,
        labels,
        source: PencilSource::Oracle,
        diagnostics: PencilDiagnostics {
            asymmetry_a: 0.0,
            asymmetry_b: 0.0,
            exact_data: true,
            variational_safe: true,
            norm_cutoff,
            n_enumerated,
            n_surviving: m,
            warnings: Vec::new(),
        },
    })
}

// --- JSON interchange --------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PencilJson {
    labels: Vec<(OpKind, Vec<u32>)>,
    a_re: Vec<f64>,
    a_im: Vec<f64>,
    b_re: Vec<f64>,
    b_im: Vec<f64>,
    source: PencilSource,
    diagnostics: PencilDiagnostics,
}

impl PencilProblem {
    pub fn to_json(&self) -> serde_json::Value {
        let n = self.dim();
        let mut a_re = Vec::with_capacity(n * n);
        let mut a_im = Vec::with_capacity(n * n);
        let mut b_re = Vec::with_capacity(n * n);
        let mut b_im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                a_re.push(self.a[(i, j)].re);
                a_im.push(self.a[(i, j)].im);
                b_re.push(self.b[(i, j)].re);
                b_im.push(self.b[(i, j)].im);
            }
        }
        serde_json::to_value(PencilJson {
            labels: self
                .labels
                .iter()
                .map(|l| (l.kind, l.indices.clone()))
                .collect(),
            a_re,
            a_im,
            b_re,
            b_im,
            source: self.source,
            diagnostics: self.diagnostics.clone(),
        })
        .expect("serializable")
    }

    /// Load a pencil from JSON; the matrices are re-Hermitized and the
    /// asymmetry recorded (large asymmetry earns a data-quality warning).
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let raw: PencilJson = serde_json::from_value(value.clone())?;
        let n = raw.labels.len();
        if raw.a_re.len() != n * n || raw.b_re.len() != n * n {
            return Err(Error::Data("pencil matrix size mismatch".into()));
        }
        let read = |re: &[f64], im: &[f64]| {
            DMatrix::from_fn(n, n, |i, j| Complex64::new(re[i * n + j], im[i * n + j]))
        };
        let a_raw = read(&raw.a_re, &raw.a_im);
        let b_raw = read(&raw.b_re, &raw.b_im);
        let herm = |m: &DMatrix<Complex64>| -> (DMatrix<Complex64>, f64) {
            let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
            let asym = (m - m.adjoint()).norm() * 0.5;
            (sym, asym)
        };
        let (a, asymmetry_a) = herm(&a_raw);
        let (b, asymmetry_b) = herm(&b_raw);
        let labels: Vec<ExpansionOperator> = raw
            .labels
            .iter()
            .map(|(k, idx)| ExpansionOperator::from_indices(*k, idx))
            .collect::<Result<_>>()?;
        let mut diagnostics = raw.diagnostics;
        diagnostics.asymmetry_a = asymmetry_a;
        diagnostics.asymmetry_b = asymmetry_b;
        if asymmetry_a > 0.1 || asymmetry_b > 0.1 {
            diagnostics.warnings.push(format!(
                "large pencil asymmetry (A: {asymmetry_a:.3e}, B: {asymmetry_b:.3e}); data quality suspect"
            ));
        }
        Ok(PencilProblem {
            a,
            b,
            labels,
            source: raw.source,
            diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrals::{assemble_hamiltonian, parse_fcidump};
    use crate::oracles::ground_state_dense;
    use crate::qubitops::Pauli;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qse_set_is_identity_plus_active_singles() {
        let layout = ModeLayout::new(2, 0);
        let ops = generate_expansion_ops(&layout);
        assert_eq!(ops.len(), 9);
        assert_eq!(ops[0].kind, OpKind::Identity);
        assert!(ops[1..].iter().all(|o| o.kind == OpKind::Single));
    }

    #[test]
    fn enumeration_counts_for_the_molecular_layouts() {
        // 2 active + 8 virtual orbitals: 40 singles + 624 couple doubles
        let ops = generate_expansion_ops(&ModeLayout::new(2, 8));
        let singles = ops.iter().filter(|o| o.kind == OpKind::Single).count();
        let doubles = ops.iter().filter(|o| o.kind == OpKind::Double).count();
        assert_eq!(singles, 40);
        assert_eq!(doubles, 624);
        // 2 active + 6 virtual
        let ops = generate_expansion_ops(&ModeLayout::new(2, 6));
        let singles = ops.iter().filter(|o| o.kind == OpKind::Single).count();
        let doubles = ops.iter().filter(|o| o.kind == OpKind::Double).count();
        assert_eq!(singles, 32);
        assert_eq!(doubles, 348);
    }

    #[test]
    fn every_operator_conserves_spin_z() {
        for layout in [ModeLayout::new(2, 3), ModeLayout::new(2, 0)] {
            for op in generate_expansion_ops(&layout) {
                assert_eq!(op.spin_z_weight(), 0, "{}", op.label());
                assert!(!op.op.is_zero() || op.kind == OpKind::Identity);
            }
        }
    }

    #[test]
    fn reduce_identity_and_dead_virtual() {
        let layout = ModeLayout::new(2, 2);
        let id = reduce_operator(&FermionSum::identity(), &layout).unwrap();
        assert_eq!(id.num_terms(), 1);
        assert!(
            (id.coeff(&crate::qubitops::PauliString::identity()) - Complex64::new(1.0, 0.0))
                .norm()
                < 1e-14
        );
        // virtual number operator dies on the vacuum
        let n_virt = FermionSum::number_op(5);
        let red = reduce_operator(&n_virt, &layout).unwrap();
        assert!(red.is_zero());
    }

    #[test]
    fn reduction_matches_full_embedding_on_random_states() {
        // <psi (x) vac| x |psi (x) vac> computed in the full determinant
        // space equals <psi_2q| reduce(x) |psi_2q>
        let layout = ModeLayout::new(2, 2);
        let full_basis = SectorBasis::new(8, 2, 0).unwrap();
        let active_basis = SectorBasis::new(4, 2, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let ops = generate_expansion_ops(&layout);
        for trial in 0..20 {
            // random real active state
            let mut amps = [0.0; 4];
            for a in amps.iter_mut() {
                *a = rng.gen_range(-1.0..1.0);
            }
            let nrm: f64 = amps.iter().map(|x| x * x).sum::<f64>().sqrt();
            for a in amps.iter_mut() {
                *a /= nrm;
            }
            // pick an operator product O_i^ O_j at random
            let i = rng.gen_range(0..ops.len());
            let j = rng.gen_range(0..ops.len());
            let x = ops[i].op.hermitian_conjugate().multiply(&ops[j].op);
            // full-space expectation
            let mut psi = vec![0.0; full_basis.dim()];
            for (k, &mask) in active_basis.determinants.iter().enumerate() {
                psi[full_basis.index_of(mask).unwrap()] = amps[k];
            }
            let m = SectorMatrix::build(&x, &full_basis).unwrap();
            let lhs = m.quadratic_form(&psi, &psi);
            // reduced expectation
            let red = reduce_operator(&x, &layout).unwrap();
            let dense = red.dense_matrix().unwrap();
            let mut rhs = Complex64::new(0.0, 0.0);
            for (k, &mk) in PAIR_SECTOR_MASKS.iter().enumerate() {
                for (l, &ml) in PAIR_SECTOR_MASKS.iter().enumerate() {
                    let ak = amps[active_basis.index_of(mk).unwrap()];
                    let al = amps[active_basis.index_of(ml).unwrap()];
                    rhs += Complex64::new(ak * al, 0.0) * dense[(k, l)];
                }
            }
            assert!(
                (lhs - rhs.re).abs() < 1e-10 && rhs.im.abs() < 1e-10,
                "trial {trial}: {lhs} vs {rhs}"
            );
        }
    }

    fn small_system() -> (FermionSum, ModeLayout) {
        // 2 active + 2 virtual orbitals with synthetic but symmetric
        // integrals; orbital ordering is already active-then-virtual
        let text = "&FCI NORB=4,NELEC=2,MS2=0,\n&END\n\
                    0.674 1 1 1 1\n0.697 2 2 2 2\n0.671 3 3 3 3\n0.669 4 4 4 4\n\
                    0.663 1 1 2 2\n0.636 1 1 3 3\n0.624 1 1 4 4\n0.615 2 2 3 3\n\
                    0.606 2 2 4 4\n0.6 3 3 4 4\n\
                    0.181 2 1 2 1\n0.11 3 1 3 1\n0.09 4 1 4 1\n0.08 3 2 3 2\n\
                    0.07 4 2 4 2\n0.065 4 3 4 3\n0.05 3 1 2 1\n0.04 4 2 3 2\n\
                    -1.252 1 1 0 0\n-0.475 2 2 0 0\n-0.25 3 3 0 0\n-0.2 4 4 0 0\n\
                    -0.03 2 1 0 0\n0.713 0 0 0 0\n";
        let m = parse_fcidump(text).unwrap();
        (assemble_hamiltonian(&m), ModeLayout::new(2, 2))
    }

    fn active_ground_and_table(h: &FermionSum) -> (OracleState, PauliTable) {
        // active Hamiltonian: drop terms touching virtual modes
        let h_act = h.contract_virtual_vacuum(&[4, 5, 6, 7]);
        let basis = SectorBasis::new(4, 2, 0).unwrap();
        let m = SectorMatrix::build(&h_act, &basis).unwrap();
        let (_, vec) = ground_state_dense(&m).unwrap();
        let state = OracleState::new(4, 2, vec.clone()).unwrap();
        // exact tomography table of the 2-qubit image of the state
        let table = PauliTable::from_fn(|p0: Pauli, p1: Pauli| {
            let s = crate::qubitops::PauliString::from_letters(&[p0, p1]);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..4usize {
                let (out, phase) = s.apply_to_basis(k as u64);
                let bl = basis.index_of(PAIR_SECTOR_MASKS[out as usize]).unwrap();
                let bk = basis.index_of(PAIR_SECTOR_MASKS[k]).unwrap();
                acc += Complex64::new(vec[bl] * vec[bk], 0.0) * phase;
            }
            acc.re
        });
        (state, table)
    }

    #[test]
    fn identity_only_pencil_recovers_energy_and_norm() {
        let (h, layout) = small_system();
        let (state, table) = active_ground_and_table(&h);
        let ops = vec![ExpansionOperator::identity()];
        let p = build_pencil(ops, &h, &table, 1e-6, layout, true).unwrap();
        assert_eq!(p.dim(), 1);
        assert!((p.b[(0, 0)].re - 1.0).abs() < 1e-10);
        // the active ground energy of the embedded state
        let h_act = h.contract_virtual_vacuum(&[4, 5, 6, 7]);
        let basis = SectorBasis::new(4, 2, 0).unwrap();
        let m = SectorMatrix::build(&h_act, &basis).unwrap();
        let e = m.quadratic_form(&state.amplitudes, &state.amplitudes);
        assert!((p.a[(0, 0)].re - e).abs() < 1e-10);
    }

    #[test]
    fn measured_and_oracle_pencils_agree() {
        let (h, layout) = small_system();
        let (state, table) = active_ground_and_table(&h);
        let ops = generate_expansion_ops(&layout);
        let measured = build_pencil(ops.clone(), &h, &table, 1e-8, layout, true).unwrap();
        let oracle = build_pencil_oracle(ops, &h, &state, layout, 1e-8).unwrap();
        assert_eq!(measured.dim(), oracle.dim());
        for i in 0..measured.dim() {
            for j in 0..measured.dim() {
                assert!(
                    (measured.a[(i, j)] - oracle.a[(i, j)]).norm() < 1e-10,
                    "A({i},{j}): {} vs {}",
                    measured.a[(i, j)],
                    oracle.a[(i, j)]
                );
                assert!((measured.b[(i, j)] - oracle.b[(i, j)]).norm() < 1e-10);
            }
        }
        // B from exact data is positive semidefinite
        let eig = measured.b.clone().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&v| v > -1e-10));
        // identity row reproduces the variational quantities
        assert!((measured.b[(0, 0)].re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn assembler_reuse_matches_one_shot_build() {
        let (h, layout) = small_system();
        let (_, table) = active_ground_and_table(&h);
        let ops = generate_expansion_ops(&layout);
        let assembler = PencilAssembler::new(ops.clone(), &h, layout).unwrap();
        let via_assembler = assembler.assemble(&table, 1e-8, true).unwrap();
        let direct = build_pencil(ops, &h, &table, 1e-8, layout, true).unwrap();
        assert_eq!(via_assembler.dim(), direct.dim());
        for i in 0..direct.dim() {
            for j in 0..direct.dim() {
                assert!((via_assembler.a[(i, j)] - direct.a[(i, j)]).norm() < 1e-12);
                assert!((via_assembler.b[(i, j)] - direct.b[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_pencil_is_an_error() {
        let (h, layout) = small_system();
        let table = PauliTable::from_fn(|_, _| 0.0);
        let ops = vec![ExpansionOperator::single(4, 0)];
        assert!(matches!(
            build_pencil(ops, &h, &table, 1e-3, layout, false),
            Err(Error::EmptyPencil(_))
        ));
    }

    #[test]
    fn pencil_json_roundtrip_and_asymmetry_warning() {
        let (h, layout) = small_system();
        let (_, table) = active_ground_and_table(&h);
        let ops = generate_expansion_ops(&layout);
        let p = build_pencil(ops, &h, &table, 1e-8, layout, true).unwrap();
        let back = PencilProblem::from_json(&p.to_json()).unwrap();
        assert_eq!(back.dim(), p.dim());
        for i in 0..p.dim() {
            for j in 0..p.dim() {
                assert!((back.a[(i, j)] - p.a[(i, j)]).norm() < 1e-12);
                assert!((back.b[(i, j)] - p.b[(i, j)]).norm() < 1e-12);
            }
        }
        assert!(back.diagnostics.warnings.is_empty());
        // corrupt one off-diagonal to trip the asymmetry warning
        let mut json = p.to_json();
        json["a_re"][1] = serde_json::json!(5.0);
        let warned = PencilProblem::from_json(&json).unwrap();
        assert!(!warned.diagnostics.warnings.is_empty());
        assert!(warned.diagnostics.asymmetry_a > 0.1);
    }
}
