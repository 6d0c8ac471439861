//! Statevector simulation of the one-parameter pair ansatz, shot sampling
//! under a readout-noise model, unfolding correction, and the Pauli
//! expectation table over the theta grid.
//!
//! Randomness is drawn from per-task streams derived from
//! (seed, theta index, setting index) so parallel and serial sweeps agree
//! bit for bit.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubitops::{Pauli, PauliSum, PauliTable};

/// Qubit cap for dense statevectors.
pub const STATEVECTOR_CAP: usize = 20;

/// Dense complex statevector on `n_qubits`, unit norm.
#[derive(Clone, Debug)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// |0...0>
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        if n_qubits > STATEVECTOR_CAP {
            return Err(Error::DimensionCap(format!(
                "{n_qubits} qubits exceeds statevector cap {STATEVECTOR_CAP}"
            )));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::Numerical("amplitude count mismatch".into()));
        }
        let sv = StateVector { n_qubits, amps };
        if (sv.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Numerical(format!(
                "state not normalized: norm = {}",
                sv.norm()
            )));
        }
        Ok(sv)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// |<a|b>|, insensitive to global phase.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm()
    }

    /// Expectation value of an operator.
    pub fn expectation(&self, op: &PauliSum) -> Complex64 {
        let applied = statevector_apply(op, self);
        self.inner(&applied)
    }
}

/// Linear action of a Pauli sum on a state (not necessarily unitary).
pub fn statevector_apply(op: &PauliSum, state: &StateVector) -> StateVector {
    assert_eq!(op.n_qubits(), state.n_qubits);
    let mut amps = vec![Complex64::new(0.0, 0.0); state.amps.len()];
    for (s, c) in op.terms() {
        for (basis, a) in state.amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let (out, phase) = s.apply_to_basis(basis as u64);
            amps[out as usize] += c * phase * a;
        }
    }
    StateVector {
        n_qubits: state.n_qubits,
        amps,
    }
}

/// Apply `exp(G)` for an anti-Hermitian generator G (all Pauli coefficients
/// purely imaginary), by a scaled, converged power series; truncation error
/// below 1e-12 in norm.
pub fn statevector_apply_exp(generator: &PauliSum, state: &StateVector) -> Result<StateVector> {
    for (_, c) in generator.terms() {
        if c.re.abs() > 1e-12 {
            return Err(Error::Numerical(format!(
                "generator is not anti-Hermitian (real Pauli coefficient {:.3e})",
                c.re
            )));
        }
    }
    let l1: f64 = generator.terms().map(|(_, c)| c.norm()).sum();
    let squarings = if l1 > 1.0 {
        (l1.log2().ceil() as u32).min(30)
    } else {
        0
    };
    let scale = Complex64::new(1.0 / f64::powi(2.0, squarings as i32), 0.0);
    let scaled = generator.scale(scale);
    let mut psi = state.clone();
    for _ in 0..(1u64 << squarings) {
        let mut acc = psi.clone();
        let mut term = psi.clone();
        for k in 1..200 {
            term = statevector_apply(&scaled, &term);
            let f = Complex64::new(1.0 / k as f64, 0.0);
            for a in term.amps.iter_mut() {
                *a *= f;
            }
            for (x, t) in acc.amps.iter_mut().zip(&term.amps) {
                *x += t;
            }
            if term.norm() < 1e-16 {
                break;
            }
        }
        psi = acc;
    }
    Ok(psi)
}

/// Measurement-noise model: shot count (0 = exact expectations), per-qubit
/// readout confusion, optional depolarizing mixing, RNG seed.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NoiseModel {
    pub shots: u64,
    /// Per qubit: probability of reading 1 given true 0.
    pub p01: [f64; 2],
    /// Per qubit: probability of reading 0 given true 1.
    pub p10: [f64; 2],
    pub depolarizing: f64,
    pub seed: u64,
}

impl NoiseModel {
    /// Exact expectations, no noise.
    pub fn exact() -> Self {
        NoiseModel {
            shots: 0,
            p01: [0.0; 2],
            p10: [0.0; 2],
            depolarizing: 0.0,
            seed: 0,
        }
    }

    /// The defaults used for noisy runs: 8192 shots, 2% symmetric readout.
    pub fn default_noisy(seed: u64) -> Self {
        NoiseModel {
            shots: 8192,
            p01: [0.02; 2],
            p10: [0.02; 2],
            depolarizing: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for q in 0..2 {
            for p in [self.p01[q], self.p10[q]] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!(
                        "readout probability {p} not in [0,1]"
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.depolarizing) {
            return Err(Error::Config("depolarizing probability not in [0,1]".into()));
        }
        Ok(())
    }

    pub fn has_readout_noise(&self) -> bool {
        self.p01.iter().any(|&p| p != 0.0) || self.p10.iter().any(|&p| p != 0.0)
    }

    /// Data is deterministic and unbiased: exact mode without depolarizing.
    pub fn is_exact(&self) -> bool {
        self.shots == 0 && self.depolarizing == 0.0
    }
}

/// The nine measurement settings, canonical order.
pub fn measurement_settings() -> Vec<(Pauli, Pauli)> {
    let axes = [Pauli::X, Pauli::Y, Pauli::Z];
    let mut v = Vec::with_capacity(9);
    for a in axes {
        for b in axes {
            v.push((a, b));
        }
    }
    v
}

fn setting_index(setting: (Pauli, Pauli)) -> u32 {
    measurement_settings()
        .iter()
        .position(|&s| s == setting)
        .expect("setting must use X/Y/Z letters") as u32
}

/// The default sweep grid: 257 values spanning [-pi, pi].
pub fn default_theta_grid() -> Vec<f64> {
    theta_grid(257)
}

pub fn theta_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2);
    (0..points)
        .map(|k| -PI + 2.0 * PI * k as f64 / (points - 1) as f64)
        .collect()
}

/// `exp(-i theta Y_1 X_2 / 2) |00>`, evaluated through the generic
/// exponential kernel.
pub fn prepare_ansatz(theta: f64) -> StateVector {
    let mut gen = PauliSum::zero(2);
    gen.add_term(
        crate::qubitops::PauliString::from_letters(&[Pauli::Y, Pauli::X]),
        Complex64::new(0.0, -theta / 2.0),
    );
    statevector_apply_exp(&gen, &StateVector::zero_state(2).expect("2 qubits"))
        .expect("anti-Hermitian by construction")
}

fn single_qubit_gate(state: &StateVector, qubit: usize, m: [[Complex64; 2]; 2]) -> StateVector {
    let mut amps = state.amps.clone();
    let bit = 1usize << qubit;
    for base in 0..amps.len() {
        if base & bit != 0 {
            continue;
        }
        let a0 = amps[base];
        let a1 = amps[base | bit];
        amps[base] = m[0][0] * a0 + m[0][1] * a1;
        amps[base | bit] = m[1][0] * a0 + m[1][1] * a1;
    }
    StateVector {
        n_qubits: state.n_qubits,
        amps,
    }
}

fn basis_rotation(state: &StateVector, qubit: usize, basis: Pauli) -> StateVector {
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let ic = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    match basis {
        Pauli::Z | Pauli::I => state.clone(),
        // R_y(-pi/2) maps the X eigenbasis onto Z
        Pauli::X => single_qubit_gate(state, qubit, [[c, c], [-c, c]]),
        // R_x(pi/2) maps the Y eigenbasis onto Z
        Pauli::Y => single_qubit_gate(state, qubit, [[c, -ic], [-ic, c]]),
    }
}

fn confusion_2x2(p01: f64, p10: f64) -> [[f64; 2]; 2] {
    [[1.0 - p01, p10], [p01, 1.0 - p10]]
}

fn apply_confusion(noise: &NoiseModel, p: [f64; 4]) -> [f64; 4] {
    let c0 = confusion_2x2(noise.p01[0], noise.p10[0]);
    let c1 = confusion_2x2(noise.p01[1], noise.p10[1]);
    let mut out = [0.0; 4];
    for meas in 0..4usize {
        let (m0, m1) = (meas & 1, meas >> 1);
        for truth in 0..4usize {
            let (t0, t1) = (truth & 1, truth >> 1);
            out[meas] += c0[m0][t0] * c1[m1][t1] * p[truth];
        }
    }
    out
}

/// Rotate to the requested basis, compute Born probabilities, mix in noise,
/// and sample. Exact mode (shots = 0) returns the post-noise probabilities.
/// Counts are indexed by bitstring value (qubit 0 is the low bit).
pub fn measure_setting(
    state: &StateVector,
    setting: (Pauli, Pauli),
    noise: &NoiseModel,
    theta_index: u32,
) -> [f64; 4] {
    assert_eq!(state.n_qubits, 2);
    let rotated = basis_rotation(&basis_rotation(state, 0, setting.0), 1, setting.1);
    let mut p = [0.0; 4];
    for (b, a) in rotated.amps.iter().enumerate() {
        p[b] = a.norm_sqr();
    }
    if noise.depolarizing > 0.0 {
        let d = noise.depolarizing;
        for v in p.iter_mut() {
            *v = (1.0 - d) * *v + d * 0.25;
        }
    }
    let p = apply_confusion(noise, p);
    if noise.shots == 0 {
        return p;
    }
    let mut rng = task_rng(noise.seed, theta_index, setting_index(setting));
    let mut counts = [0.0; 4];
    let cdf = [p[0], p[0] + p[1], p[0] + p[1] + p[2]];
    for _ in 0..noise.shots {
        let u: f64 = rng.gen();
        let b = if u < cdf[0] {
            0
        } else if u < cdf[1] {
            1
        } else if u < cdf[2] {
            2
        } else {
            3
        };
        counts[b] += 1.0;
    }
    counts
}

fn task_rng(seed: u64, theta_index: u32, setting_index: u32) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..12].copy_from_slice(&theta_index.to_le_bytes());
    bytes[12..16].copy_from_slice(&setting_index.to_le_bytes());
    bytes[16] = 0x5e;
    ChaCha8Rng::from_seed(bytes)
}

/// Invert the tensor-product confusion channel on empirical frequencies;
/// negative entries are clipped and the vector renormalized.
pub fn unfold_readout(counts: &[f64; 4], noise: &NoiseModel) -> Result<[f64; 4]> {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(Error::Data("empty counts".into()));
    }
    let freq = [
        counts[0] / total,
        counts[1] / total,
        counts[2] / total,
        counts[3] / total,
    ];
    if !noise.has_readout_noise() {
        return Ok(freq);
    }
    let mut inv = [[[0.0; 2]; 2]; 2];
    for q in 0..2 {
        let det = 1.0 - noise.p01[q] - noise.p10[q];
        if det <= 0.0 {
            return Err(Error::Calibration(format!(
                "confusion matrix singular on qubit {q} (p01 + p10 >= 1)"
            )));
        }
        let c = confusion_2x2(noise.p01[q], noise.p10[q]);
        inv[q] = [
            [c[1][1] / det, -c[0][1] / det],
            [-c[1][0] / det, c[0][0] / det],
        ];
    }
    let mut p = [0.0; 4];
    for out in 0..4usize {
        let (o0, o1) = (out & 1, out >> 1);
        for meas in 0..4usize {
            let (m0, m1) = (meas & 1, meas >> 1);
            p[out] += inv[0][o0][m0] * inv[1][o1][m1] * freq[meas];
        }
    }
    let mut clipped = false;
    for v in p.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            clipped = true;
        }
    }
    if clipped {
        let s: f64 = p.iter().sum();
        if s <= 0.0 {
            return Err(Error::Data(
                "unfolding produced an empty distribution".into(),
            ));
        }
        for v in p.iter_mut() {
            *v /= s;
        }
    }
    Ok(p)
}

/// Measured/simulated counts and derived Pauli expectations over the theta
/// grid. In exact mode counts hold probabilities instead of integers.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub thetas: Vec<f64>,
    pub settings: Vec<(Pauli, Pauli)>,
    /// counts[theta_index][setting_index][bitstring]
    pub counts: Vec<Vec<[f64; 4]>>,
    /// Corrected 16-entry Pauli table per theta.
    pub expectations: Vec<PauliTable>,
    pub noise: NoiseModel,
}

/// Run the ansatz circuit over the grid for all nine settings and derive the
/// full Pauli table per theta. Identity positions are marginalized from the
/// setting that reads Z in the identity slot (<Z1 I> from ZZ, <X1 Z2> from
/// XZ, and so on); <II> is 1 exactly.
pub fn run_sweep(grid: &[f64], noise: &NoiseModel) -> Result<SweepRecord> {
    if grid.is_empty() {
        return Err(Error::Config("empty theta grid".into()));
    }
    noise.validate()?;
    let settings = measurement_settings();
    let tasks: Vec<(u32, u32)> = (0..grid.len() as u32)
        .flat_map(|ti| (0..settings.len() as u32).map(move |si| (ti, si)))
        .collect();
    let mut counts = vec![vec![[0.0; 4]; settings.len()]; grid.len()];
    let results: Vec<((u32, u32), [f64; 4])> = tasks
        .par_iter()
        .map(|&(ti, si)| {
            let state = prepare_ansatz(grid[ti as usize]);
            let c = measure_setting(&state, settings[si as usize], noise, ti);
            ((ti, si), c)
        })
        .collect();
    for ((ti, si), c) in results {
        counts[ti as usize][si as usize] = c;
    }

    let mut expectations = Vec::with_capacity(grid.len());
    for theta_counts in &counts {
        let mut freqs = Vec::with_capacity(settings.len());
        for c in theta_counts {
            freqs.push(unfold_readout(c, noise)?);
        }
        let setting_for = |p0: Pauli, p1: Pauli| -> usize {
            let want = (
                if p0 == Pauli::I { Pauli::Z } else { p0 },
                if p1 == Pauli::I { Pauli::Z } else { p1 },
            );
            settings
                .iter()
                .position(|&s| s == want)
                .expect("core setting")
        };
        let table = PauliTable::from_fn(|p0, p1| {
            if p0 == Pauli::I && p1 == Pauli::I {
                return 1.0;
            }
            let f = &freqs[setting_for(p0, p1)];
            let mut e = 0.0;
            for (b, v) in f.iter().enumerate() {
                let mut sign = 1.0;
                if p0 != Pauli::I && b & 1 != 0 {
                    sign = -sign;
                }
                if p1 != Pauli::I && b & 2 != 0 {
                    sign = -sign;
                }
                e += sign * v;
            }
            e
        });
        expectations.push(table);
    }
    Ok(SweepRecord {
        thetas: grid.to_vec(),
        settings,
        counts,
        expectations,
        noise: noise.clone(),
    })
}

// --- JSON interchange -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SweepRecordJson {
    thetas: Vec<f64>,
    settings: Vec<String>,
    counts: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    expectations: BTreeMap<String, BTreeMap<String, f64>>,
    noise: NoiseModel,
}

impl SweepRecord {
    pub fn to_json(&self) -> serde_json::Value {
        let setting_name = |s: (Pauli, Pauli)| format!("{}{}", s.0.as_char(), s.1.as_char());
        let mut counts = BTreeMap::new();
        for (ti, per_setting) in self.counts.iter().enumerate() {
            let mut m = BTreeMap::new();
            for (si, c) in per_setting.iter().enumerate() {
                let mut b = BTreeMap::new();
                for (bits, v) in c.iter().enumerate() {
                    // bitstring rendered as q1 q0
                    b.insert(format!("{}{}", (bits >> 1) & 1, bits & 1), *v);
                }
                m.insert(setting_name(self.settings[si]), b);
            }
            counts.insert(ti.to_string(), m);
        }
        let mut expectations = BTreeMap::new();
        for (ti, t) in self.expectations.iter().enumerate() {
            expectations.insert(ti.to_string(), t.to_map());
        }
        serde_json::to_value(SweepRecordJson {
            thetas: self.thetas.clone(),
            settings: self.settings.iter().map(|&s| setting_name(s)).collect(),
            counts,
            expectations,
            noise: self.noise.clone(),
        })
        .expect("serializable")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let raw: SweepRecordJson = serde_json::from_value(value.clone())?;
        let parse_setting = |s: &str| -> Result<(Pauli, Pauli)> {
            let mut it = s.chars();
            match (
                it.next().and_then(Pauli::from_char),
                it.next().and_then(Pauli::from_char),
                it.next(),
            ) {
                (Some(a), Some(b), None) => Ok((a, b)),
                _ => Err(Error::Data(format!("bad setting '{s}'"))),
            }
        };
        let settings: Vec<(Pauli, Pauli)> = raw
            .settings
            .iter()
            .map(|s| parse_setting(s))
            .collect::<Result<_>>()?;
        let mut counts = vec![vec![[0.0; 4]; settings.len()]; raw.thetas.len()];
        for (ti_s, per_setting) in &raw.counts {
            let ti: usize = ti_s
                .parse()
                .map_err(|_| Error::Data(format!("bad theta index '{ti_s}'")))?;
            if ti >= raw.thetas.len() {
                return Err(Error::Data(format!("theta index {ti} out of range")));
            }
            for (sname, bits_map) in per_setting {
                let s = parse_setting(sname)?;
                let si = settings
                    .iter()
                    .position(|&x| x == s)
                    .ok_or_else(|| Error::Data(format!("unknown setting '{sname}'")))?;
                for (bstr, v) in bits_map {
                    if bstr.len() != 2 {
                        return Err(Error::Data(format!("bad bitstring '{bstr}'")));
                    }
                    // rendered as q1 q0, so the binary value is the index
                    let idx = usize::from_str_radix(bstr, 2)
                        .map_err(|_| Error::Data(format!("bad bitstring '{bstr}'")))?;
                    counts[ti][si][idx] = *v;
                }
            }
        }
        let mut expectations = Vec::with_capacity(raw.thetas.len());
        for ti in 0..raw.thetas.len() {
            let m = raw
                .expectations
                .get(&ti.to_string())
                .ok_or_else(|| Error::Data(format!("missing expectations for theta {ti}")))?;
            expectations.push(PauliTable::from_map(m)?);
        }
        Ok(SweepRecord {
            thetas: raw.thetas,
            settings,
            counts,
            expectations,
            noise: raw.noise,
        })
    }
}
