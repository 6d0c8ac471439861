//! End-to-end potential-energy-curve scans: ingest fixtures, prepare the
//! variational ground state, assemble pencils (measured or oracle path),
//! solve the regularized spectra, and emit analysis-ready outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermion::FermionSum;
use crate::integrals::{assemble_hamiltonian, freeze_core, parse_fcidump, OrbitalPartition};
use crate::oracles::{cisd_spectrum, fci_spectrum, hf_energy};
use crate::qubitops::ProjectedHamiltonian;
use crate::simulator::{run_sweep, theta_grid, NoiseModel, SweepRecord};
use crate::spectra::{
    max_clean_rank, rank_scan_full, select_rank_ground, solve_fixed_rank, JumpOptions,
    SpectrumResult,
};
use crate::subspace::{
    build_pencil, build_pencil_oracle, generate_expansion_ops, ModeLayout, OracleState,
    PencilAssembler, PencilProblem,
};
use crate::vqe::{
    build_uccsd, fit_and_minimize, optimize_uccsd, OptimizerOptions, UccsdEvaluator,
};

/// Scan methods; each contributes one or more states per geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hf,
    Vqe,
    Qse,
    Vqse,
    Cisd,
    Fci,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Hf => "hf",
            Method::Vqe => "vqe",
            Method::Qse => "qse",
            Method::Vqse => "vqse",
            Method::Cisd => "cisd",
            Method::Fci => "fci",
        }
    }

    fn parse(s: &str) -> Result<Method> {
        match s {
            "hf" => Ok(Method::Hf),
            "vqe" => Ok(Method::Vqe),
            "qse" => Ok(Method::Qse),
            "vqse" => Ok(Method::Vqse),
            "cisd" => Ok(Method::Cisd),
            "fci" => Ok(Method::Fci),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }
}

/// Ground-state preparation flavor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    /// One-parameter pair rotation on 2 qubits, driven by the theta sweep.
    Pair,
    /// Exact UCCSD statevector with quasi-Newton optimization (oracle path).
    Uccsd,
}

/// Which orbital set the CISD reference uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CisdSpace {
    Active,
    Full,
}

/// Scan configuration, read from a flat key-value text file.
#[derive(Clone, Debug, Serialize)]
pub struct ScanConfig {
    pub molecule: String,
    pub fixture_dir: PathBuf,
    pub geometries: Vec<String>,
    pub partition: OrbitalPartition,
    pub ansatz: AnsatzKind,
    pub theta_points: usize,
    pub shots: u64,
    pub readout_p01: f64,
    pub readout_p10: f64,
    pub depolarizing: f64,
    pub seed: u64,
    pub seeds: u64,
    pub norm_cutoff: Option<f64>,
    pub jump: JumpOptions,
    pub excited_count: usize,
    pub fixed_rank: Option<usize>,
    pub methods: Vec<Method>,
    pub out_dir: PathBuf,
    pub cisd_space: CisdSpace,
    pub optimizer: OptimizerOptions,
    /// Persist first-seed subspace pencils for offline solver runs.
    pub save_pencils: bool,
    /// Optional pinned fixture checksums (file name -> fnv1a hex).
    pub pinned_checksums: BTreeMap<String, String>,
    /// Hash of the raw config text.
    pub config_hash: String,
}

impl ScanConfig {
    pub fn noise_for(&self, ensemble_index: u64) -> NoiseModel {
        NoiseModel {
            shots: self.shots,
            p01: [self.readout_p01; 2],
            p10: [self.readout_p10; 2],
            depolarizing: self.depolarizing,
            seed: self.seed.wrapping_add(ensemble_index),
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.shots == 0 && self.depolarizing == 0.0
    }

    pub fn effective_norm_cutoff(&self) -> f64 {
        self.norm_cutoff
            .unwrap_or(if self.is_noiseless() { 1e-6 } else { 1e-3 })
    }

    pub fn fixture_path(&self, r_label: &str) -> PathBuf {
        self.fixture_dir
            .join(format!("{}_R{}.fcidump", self.molecule, r_label))
    }

    /// Parse the flat key = value format; `overrides` are applied after the
    /// file content (CLI flags).
    pub fn from_text(text: &str, base_dir: &Path) -> Result<ScanConfig> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        let mut checksums = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: lineno + 1,
                msg: "expected 'key = value'".into(),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key == "checksum" {
                let (f, h) = value.split_once(char::is_whitespace).ok_or(Error::Parse {
                    line: lineno + 1,
                    msg: "checksum wants '<file> <hex>'".into(),
                })?;
                checksums.insert(f.trim().to_string(), h.trim().to_string());
            } else {
                kv.insert(key, value);
            }
        }
        let get = |k: &str| kv.get(k).map(|s| s.as_str());
        let require = |k: &str| {
            get(k).ok_or_else(|| Error::Config(format!("missing required config key '{k}'")))
        };
        let parse_usize = |k: &str, d: usize| -> Result<usize> {
            match get(k) {
                None => Ok(d),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad integer for '{k}': {v}"))),
            }
        };
        let parse_f64 = |k: &str, d: f64| -> Result<f64> {
            match get(k) {
                None => Ok(d),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::Config(format!("bad number for '{k}': {v}"))),
            }
        };
        let parse_list = |k: &str| -> Vec<usize> {
            get(k)
                .map(|v| {
                    v.split_whitespace()
                        .filter_map(|t| t.parse().ok())
                        .collect()
                })
                .unwrap_or_default()
        };

        let molecule = require("molecule")?.to_string();
        let geometries: Vec<String> = require("geometries")?
            .split_whitespace()
            .map(|s| s.to_string())
            .collect();
        if geometries.is_empty() {
            return Err(Error::Config("no geometries listed".into()));
        }
        let methods: Vec<Method> = require("methods")?
            .split_whitespace()
            .map(Method::parse)
            .collect::<Result<_>>()?;
        if methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        let ansatz = match get("ansatz").unwrap_or("pair") {
            "pair" => AnsatzKind::Pair,
            "uccsd" => AnsatzKind::Uccsd,
            other => return Err(Error::Config(format!("unknown ansatz '{other}'"))),
        };
        let cisd_space = match get("cisd_space").unwrap_or("full") {
            "active" => CisdSpace::Active,
            "full" => CisdSpace::Full,
            other => return Err(Error::Config(format!("unknown cisd_space '{other}'"))),
        };
        let norm_cutoff = match get("norm_cutoff") {
            None | Some("auto") => None,
            Some(v) => Some(v.parse().map_err(|_| {
                Error::Config(format!("bad number for 'norm_cutoff': {v}"))
            })?),
        };
        let fixed_rank = match get("fixed_rank") {
            None | Some("auto") => None,
            Some(v) => Some(v.parse().map_err(|_| {
                Error::Config(format!("bad integer for 'fixed_rank': {v}"))
            })?),
        };
        let fixture_dir = base_dir.join(get("fixture_dir").unwrap_or("fixtures"));
        let out_dir = base_dir.join(get("out_dir").unwrap_or("out"));
        let config = ScanConfig {
            molecule,
            fixture_dir,
            geometries,
            partition: OrbitalPartition::new(
                parse_list("core"),
                parse_list("active"),
                parse_list("virtual"),
            ),
            ansatz,
            theta_points: parse_usize("theta_points", 257)?,
            shots: parse_usize("shots", 0)? as u64,
            readout_p01: parse_f64("readout_p01", 0.0)?,
            readout_p10: parse_f64("readout_p10", 0.0)?,
            depolarizing: parse_f64("depolarizing", 0.0)?,
            seed: parse_usize("seed", 1)? as u64,
            seeds: parse_usize("seeds", 1)?.max(1) as u64,
            norm_cutoff,
            jump: JumpOptions {
                median_factor: parse_f64("jump_median_factor", 10.0)?,
                abs_floor: parse_f64("jump_abs_floor", 0.020)?,
            },
            excited_count: parse_usize("excited_count", 5)?,
            fixed_rank,
            methods,
            out_dir,
            cisd_space,
            save_pencils: matches!(get("save_pencils"), Some("true") | Some("1") | Some("yes")),
            optimizer: OptimizerOptions {
                max_iter: parse_usize("opt_max_iter", 500)?,
                grad_tol: parse_f64("opt_grad_tol", 1e-6)?,
                fd_step: parse_f64("opt_fd_step", 1e-5)?,
            },
            pinned_checksums: checksums,
            config_hash: fnv1a_hex(text.as_bytes()),
        };
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<ScanConfig> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        ScanConfig::from_text(&text, base)
    }
}

/// FNV-1a 64-bit hash, hex encoded; used for config and fixture provenance.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

/// Validate fixtures and partition without running anything.
pub fn validate(config: &ScanConfig) -> Result<BTreeMap<String, String>> {
    let mut checksums = BTreeMap::new();
    for r in &config.geometries {
        let path = config.fixture_path(r);
        let bytes = fs::read(&path)
            .map_err(|e| Error::Config(format!("fixture {} unreadable: {e}", path.display())))?;
        let hash = fnv1a_hex(&bytes);
        let name = path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if let Some(pinned) = config.pinned_checksums.get(&name) {
            if pinned != &hash {
                return Err(Error::Config(format!(
                    "fixture checksum mismatch for {name}: pinned {pinned}, found {hash}"
                )));
            }
        }
        let m = parse_fcidump(&String::from_utf8_lossy(&bytes))?;
        config.partition.validate(m.n_spatial)?;
        if config.ansatz == AnsatzKind::Pair && config.partition.active.len() != 2 {
            return Err(Error::Config(
                "the pair ansatz needs exactly 2 active orbitals".into(),
            ));
        }
        checksums.insert(name, hash);
    }
    Ok(checksums)
}

/// Per-geometry outcome.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeometryResult {
    pub r_label: String,
    /// method name -> ascending state energies (Hartree).
    pub energies: BTreeMap<String, Vec<f64>>,
    /// Seed-ensemble standard deviations, present when seeds >= 2.
    pub energy_std: BTreeMap<String, Vec<f64>>,
    /// Per-seed ground energies for the ensemble methods (seeds >= 2).
    pub ensemble_ground: BTreeMap<String, Vec<f64>>,
    pub theta_min: Option<f64>,
    pub k_retained: Option<usize>,
    pub spurious_k: Option<usize>,
    pub e0_trace: Vec<f64>,
    pub n_surviving_ops: Option<usize>,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

/// Scan output with provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanResult {
    pub molecule: String,
    pub config_hash: String,
    pub seed: u64,
    pub fixture_checksums: BTreeMap<String, String>,
    pub geometries: Vec<GeometryResult>,
}

struct GeometryWork {
    r_label: String,
    /// Hamiltonian over active-then-virtual orbitals after core freezing.
    h_av: FermionSum,
    layout: ModeLayout,
    n_electrons: usize,
    n_remaining_orbitals: usize,
    h_active: FermionSum,
}

fn prepare_geometry(config: &ScanConfig, r_label: &str) -> Result<GeometryWork> {
    let path = config.fixture_path(r_label);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("fixture {} unreadable: {e}", path.display())))?;
    let mut m = parse_fcidump(&text)?;
    m.geometry_label = r_label.to_string();
    config.partition.validate(m.n_spatial)?;
    let frozen = freeze_core(&m, &config.partition.core)?;
    // indices of active/virtual orbitals in the frozen tensor
    let mut map = vec![usize::MAX; m.n_spatial];
    let mut next = 0;
    for p in 0..m.n_spatial {
        if !config.partition.core.contains(&p) {
            map[p] = next;
            next += 1;
        }
    }
    let order: Vec<usize> = config
        .partition
        .active
        .iter()
        .chain(config.partition.virtual_.iter())
        .map(|&p| map[p])
        .collect();
    let restricted = frozen.restrict(&order);
    let h_av = assemble_hamiltonian(&restricted);
    let active_only = restricted.restrict(&(0..config.partition.active.len()).collect::<Vec<_>>());
    let h_active = assemble_hamiltonian(&active_only);
    Ok(GeometryWork {
        r_label: r_label.to_string(),
        h_av,
        layout: ModeLayout::new(
            config.partition.active.len(),
            config.partition.virtual_.len(),
        ),
        n_electrons: restricted.n_electrons,
        n_remaining_orbitals: restricted.n_spatial,
        h_active,
    })
}

fn projected_hamiltonian(work: &GeometryWork) -> Result<ProjectedHamiltonian> {
    let h4 = work.h_active.jordan_wigner(4);
    let reduced = crate::qubitops::project_to_pair_subspace(&h4)?;
    ProjectedHamiltonian::new(reduced, 1e-10)
}

/// Pencils produced for one geometry/seed, plus the scalar results.
struct PipelineOutput {
    vqe_energy: f64,
    theta_min: Option<f64>,
    qse: Option<PencilProblem>,
    vqse: Option<PencilProblem>,
    n_surviving_ops: Option<usize>,
}

fn pair_pipeline(
    config: &ScanConfig,
    work: &GeometryWork,
    record: &SweepRecord,
    assembler: Option<&PencilAssembler>,
) -> Result<PipelineOutput> {
    let h2q = projected_hamiltonian(work)?;
    let vmin = fit_and_minimize(record, &h2q)?;
    let cutoff = config.effective_norm_cutoff();
    let exact = config.is_noiseless();
    // tomography cleanup: the pencil entries are linear in the implied
    // density matrix, so clipping its negative eigenvalues restores the
    // variational containment of the generalized eigenvalues (exact tables
    // are unchanged)
    let table = vmin.table_at_min.project_physical();
    let mark = |mut p: PencilProblem| {
        p.diagnostics.variational_safe = true;
        p
    };
    let want_qse = config.methods.contains(&Method::Qse);
    let want_vqse = config.methods.contains(&Method::Vqse);
    let qse = if want_qse {
        let layout = ModeLayout::new(config.partition.active.len(), 0);
        let ops = generate_expansion_ops(&layout);
        Some(mark(build_pencil(
            ops,
            &work.h_active,
            &table,
            cutoff,
            layout,
            exact,
        )?))
    } else {
        None
    };
    let vqse = if want_vqse {
        let pencil = match assembler {
            Some(asm) => asm.assemble(&table, cutoff, exact)?,
            None => build_pencil(
                generate_expansion_ops(&work.layout),
                &work.h_av,
                &table,
                cutoff,
                work.layout,
                exact,
            )?,
        };
        Some(mark(pencil))
    } else {
        None
    };
    let n_surviving_ops = vqse.as_ref().map(|p| p.diagnostics.n_surviving);
    Ok(PipelineOutput {
        vqe_energy: vmin.e_min,
        theta_min: Some(vmin.theta_min),
        qse,
        vqse,
        n_surviving_ops,
    })
}

fn uccsd_pipeline(config: &ScanConfig, work: &GeometryWork) -> Result<PipelineOutput> {
    let n_act = config.partition.active.len();
    let ansatz = build_uccsd(n_act, work.n_electrons)?;
    let opt = optimize_uccsd(&ansatz, &work.h_active, &config.optimizer)?;
    if !opt.converged {
        eprintln!(
            "optimizer did not converge for R = {} (grad norm {:.3e} after {} iterations)",
            work.r_label, opt.grad_norm, opt.iterations
        );
    }
    // optimization trace as JSON lines
    if fs::create_dir_all(&config.out_dir).is_ok() {
        let mut lines = String::new();
        for row in &opt.trace {
            if let Ok(j) = serde_json::to_string(row) {
                lines.push_str(&j);
                lines.push('\n');
            }
        }
        let _ = fs::write(
            config.out_dir.join(format!("opt_trace_R{}.jsonl", work.r_label)),
            lines,
        );
    }
    let evaluator = UccsdEvaluator::new(&ansatz, &work.h_active)?;
    let state = OracleState::new(2 * n_act, work.n_electrons, evaluator.state(&opt.parameters))?;
    let cutoff = config.effective_norm_cutoff();
    let want_qse = config.methods.contains(&Method::Qse);
    let want_vqse = config.methods.contains(&Method::Vqse);
    let qse = if want_qse {
        let layout = ModeLayout::new(n_act, 0);
        Some(build_pencil_oracle(
            generate_expansion_ops(&layout),
            &work.h_active,
            &state,
            layout,
            cutoff,
        )?)
    } else {
        None
    };
    let vqse = if want_vqse {
        Some(build_pencil_oracle(
            generate_expansion_ops(&work.layout),
            &work.h_av,
            &state,
            work.layout,
            cutoff,
        )?)
    } else {
        None
    };
    let n_surviving_ops = vqse.as_ref().map(|p| p.diagnostics.n_surviving);
    Ok(PipelineOutput {
        vqe_energy: opt.energy,
        theta_min: None,
        qse,
        vqse,
        n_surviving_ops,
    })
}

fn spectrum_for(
    config: &ScanConfig,
    pencil: &PencilProblem,
    scan_trace: bool,
) -> Result<SpectrumResult> {
    if scan_trace && !pencil.diagnostics.variational_safe {
        select_rank_ground(pencil, &config.jump)
    } else {
        // exact data: keep everything above the null floor, no scan needed
        let full = solve_fixed_rank(std::slice::from_ref(pencil), usable_rank(pencil)?, &config.jump)?;
        Ok(full.into_iter().next().expect("one pencil"))
    }
}

fn usable_rank(p: &PencilProblem) -> Result<usize> {
    // mirror of the solver's internal rank rule, used to pick "full rank"
    let mut vals = crate::eigh::eigh_values(&p.b)?;
    vals.reverse();
    let lambda_max = vals.first().copied().unwrap_or(0.0);
    if lambda_max <= 0.0 {
        return Err(Error::EmptyPencil("overlap has no positive eigenvalues".into()));
    }
    let tol = crate::spectra::EXACT_NULL_RELATIVE_TOL * lambda_max;
    Ok(vals.iter().take_while(|&&v| v > tol).count())
}

/// Run the full scan: all geometries, all requested methods, the configured
/// seed ensemble, ground and excited spectra.
pub fn run_scan(config: &ScanConfig) -> Result<ScanResult> {
    let fixture_checksums = validate(config)?;
    let n_seeds = if config.is_noiseless() { 1 } else { config.seeds };

    // geometry-independent preparation
    let works: Vec<Result<GeometryWork>> = config
        .geometries
        .par_iter()
        .map(|r| prepare_geometry(config, r))
        .collect();

    // the measured sweep is shared across geometries (and molecules):
    // one record per ensemble seed
    let records: Vec<SweepRecord> = if config.ansatz == AnsatzKind::Pair {
        (0..n_seeds)
            .map(|s| run_sweep(&theta_grid(config.theta_points), &config.noise_for(s)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let needs_pencil_reuse = config.ansatz == AnsatzKind::Pair
        && n_seeds > 1
        && config.methods.contains(&Method::Vqse);

    struct PerGeometry {
        result: GeometryResult,
        vqse_pencils: Vec<PencilProblem>,
        qse_pencils: Vec<PencilProblem>,
    }

    let per_geometry: Vec<PerGeometry> = works
        .into_iter()
        .zip(&config.geometries)
        .map(|(work, r_label)| {
            let mut gr = GeometryResult {
                r_label: r_label.clone(),
                energies: BTreeMap::new(),
                energy_std: BTreeMap::new(),
                ensemble_ground: BTreeMap::new(),
                theta_min: None,
                k_retained: None,
                spurious_k: None,
                e0_trace: Vec::new(),
                n_surviving_ops: None,
                warnings: Vec::new(),
                error: None,
            };
            let work = match work {
                Ok(w) => w,
                Err(e) => {
                    gr.error = Some(format!("ingest: {e}"));
                    return PerGeometry {
                        result: gr,
                        vqse_pencils: Vec::new(),
                        qse_pencils: Vec::new(),
                    };
                }
            };
            match run_geometry(config, &work, &records, needs_pencil_reuse, &mut gr) {
                Ok((vqse_pencils, qse_pencils)) => PerGeometry {
                    result: gr,
                    vqse_pencils,
                    qse_pencils,
                },
                Err(e) => {
                    gr.error = Some(e.to_string());
                    PerGeometry {
                        result: gr,
                        vqse_pencils: Vec::new(),
                        qse_pencils: Vec::new(),
                    }
                }
            }
        })
        .collect();

    // excited states: fixed retained rank across geometries (first-seed
    // pencils), for the subspace methods present
    let mut results: Vec<GeometryResult> = Vec::new();
    let mut vqse_first: Vec<PencilProblem> = Vec::new();
    let mut qse_first: Vec<PencilProblem> = Vec::new();
    let mut complete = true;
    for pg in &per_geometry {
        if pg.vqse_pencils.is_empty() && config.methods.contains(&Method::Vqse) {
            complete = false;
        }
        if let Some(p) = pg.vqse_pencils.first() {
            vqse_first.push(p.clone());
        }
        if let Some(p) = pg.qse_pencils.first() {
            qse_first.push(p.clone());
        }
    }
    if config.save_pencils {
        fs::create_dir_all(&config.out_dir)?;
        for (pg, r) in per_geometry.iter().zip(&config.geometries) {
            if let Some(p) = pg.vqse_pencils.first() {
                let path = config.out_dir.join(format!("pencil_R{r}.json"));
                let mut json = p.to_json();
                json["config_hash"] = serde_json::json!(config.config_hash);
                fs::write(&path, serde_json::to_string(&json)?)?;
            }
        }
    }

    let excited = config.excited_count;
    let mut vqse_excited: Vec<Option<Vec<f64>>> = vec![None; per_geometry.len()];
    let mut qse_excited: Vec<Option<Vec<f64>>> = vec![None; per_geometry.len()];
    if excited > 1 && complete && !vqse_first.is_empty() {
        let k = match config.fixed_rank {
            Some(k) => k,
            None => max_clean_rank(&vqse_first, &config.jump)?,
        };
        if let Ok(specs) = solve_fixed_rank(&vqse_first, k, &config.jump) {
            for (slot, spec) in vqse_excited.iter_mut().zip(specs) {
                *slot = Some(spec.eigenvalues.into_iter().take(excited).collect());
            }
        }
    }
    if excited > 1 && !qse_first.is_empty() && qse_first.len() == per_geometry.len() {
        let k = max_clean_rank(&qse_first, &config.jump)?;
        if let Ok(specs) = solve_fixed_rank(&qse_first, k, &config.jump) {
            for (slot, spec) in qse_excited.iter_mut().zip(specs) {
                *slot = Some(spec.eigenvalues.into_iter().take(excited).collect());
            }
        }
    }

    for (g, pg) in per_geometry.into_iter().enumerate() {
        let mut gr = pg.result;
        if let Some(ex) = vqse_excited[g].take() {
            if let Some(e) = gr.energies.get_mut("vqse") {
                *e = ex;
            }
        }
        if let Some(ex) = qse_excited[g].take() {
            if let Some(e) = gr.energies.get_mut("qse") {
                *e = ex;
            }
        }
        results.push(gr);
    }

    Ok(ScanResult {
        molecule: config.molecule.clone(),
        config_hash: config.config_hash.clone(),
        seed: config.seed,
        fixture_checksums,
        geometries: results,
    })
}

/// Per-geometry pipeline over the seed ensemble; returns the per-seed
/// pencils for VQSE and QSE (first seed first).
fn run_geometry(
    config: &ScanConfig,
    work: &GeometryWork,
    records: &[SweepRecord],
    reuse_assembler: bool,
    gr: &mut GeometryResult,
) -> Result<(Vec<PencilProblem>, Vec<PencilProblem>)> {
    let stage = |name: &'static str| move |e: Error| Error::Data(format!("{name}: {e}"));
    // oracle references over the remaining orbital space
    if config.methods.contains(&Method::Hf) {
        gr.energies.insert(
            "hf".into(),
            vec![hf_energy(&work.h_av, work.n_electrons, 0).map_err(stage("hf"))?],
        );
    }
    if config.methods.contains(&Method::Fci) {
        gr.energies.insert(
            "fci".into(),
            fci_spectrum(
                &work.h_av,
                2 * work.n_remaining_orbitals,
                work.n_electrons,
                0,
                config.excited_count.max(1),
            )
            .map_err(stage("fci"))?,
        );
    }
    if config.methods.contains(&Method::Cisd) {
        let (h, modes) = match config.cisd_space {
            CisdSpace::Active => (&work.h_active, work.layout.n_active_modes as usize),
            CisdSpace::Full => (&work.h_av, 2 * work.n_remaining_orbitals),
        };
        gr.energies.insert(
            "cisd".into(),
            cisd_spectrum(h, modes, work.n_electrons, 0, config.excited_count.max(1))
                .map_err(stage("cisd"))?,
        );
    }

    let subspace_needed = config.methods.contains(&Method::Vqe)
        || config.methods.contains(&Method::Qse)
        || config.methods.contains(&Method::Vqse);
    if !subspace_needed {
        return Ok((Vec::new(), Vec::new()));
    }

    let n_seeds = if config.is_noiseless() { 1 } else { config.seeds } as usize;
    let mut vqe_energies = Vec::with_capacity(n_seeds);
    let mut qse_pencils = Vec::new();
    let mut vqse_pencils = Vec::new();

    let assembler = if reuse_assembler && config.ansatz == AnsatzKind::Pair {
        Some(PencilAssembler::new(
            generate_expansion_ops(&work.layout),
            &work.h_av,
            work.layout,
        )?)
    } else {
        None
    };

    let mut qse_ground: Vec<f64> = Vec::new();
    let mut vqse_ground: Vec<f64> = Vec::new();
    for s in 0..n_seeds {
        let out = match config.ansatz {
            AnsatzKind::Pair => pair_pipeline(config, work, &records[s], assembler.as_ref())
                .map_err(stage("pencil"))?,
            AnsatzKind::Uccsd => uccsd_pipeline(config, work).map_err(stage("pencil"))?,
        };
        vqe_energies.push(out.vqe_energy);
        if s == 0 {
            gr.theta_min = out.theta_min;
            gr.n_surviving_ops = out.n_surviving_ops;
        }
        // ground-state spectra; jump scanning is only needed for data
        // without the variational-containment guarantee
        let scan_trace = !config.is_noiseless();
        if let Some(p) = out.qse {
            let spec = spectrum_for(config, &p, scan_trace).map_err(stage("spectra"))?;
            qse_ground.push(spec.eigenvalues[0]);
            qse_pencils.push(p);
        }
        if let Some(p) = out.vqse {
            let spec = spectrum_for(config, &p, scan_trace).map_err(stage("spectra"))?;
            vqse_ground.push(spec.eigenvalues[0]);
            if s == 0 {
                gr.k_retained = Some(spec.k_retained);
                gr.spurious_k = spec.spurious_k;
                gr.e0_trace = spec.e0_trace.clone();
                gr.warnings.extend(p.diagnostics.warnings.clone());
            }
            vqse_pencils.push(p);
        }
    }

    let std_of = |xs: &[f64]| -> Option<f64> {
        if xs.len() < 2 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        Some(
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt(),
        )
    };
    if config.methods.contains(&Method::Vqe) {
        gr.energies.insert("vqe".into(), vec![vqe_energies[0]]);
        if let Some(sd) = std_of(&vqe_energies) {
            gr.energy_std.insert("vqe".into(), vec![sd]);
            gr.ensemble_ground.insert("vqe".into(), vqe_energies.clone());
        }
    }
    if config.methods.contains(&Method::Qse) && !qse_ground.is_empty() {
        gr.energies.insert("qse".into(), vec![qse_ground[0]]);
        if let Some(sd) = std_of(&qse_ground) {
            gr.energy_std.insert("qse".into(), vec![sd]);
            gr.ensemble_ground.insert("qse".into(), qse_ground.clone());
        }
    }
    if config.methods.contains(&Method::Vqse) && !vqse_ground.is_empty() {
        gr.energies.insert("vqse".into(), vec![vqse_ground[0]]);
        if let Some(sd) = std_of(&vqse_ground) {
            gr.energy_std.insert("vqse".into(), vec![sd]);
            gr.ensemble_ground.insert("vqse".into(), vqse_ground.clone());
        }
    }
    Ok((vqse_pencils, qse_pencils))
}

/// Emit curves.csv, diagnostics.json, and optional gnuplot data blocks.
pub fn emit_outputs(result: &ScanResult, out_dir: &Path, gnuplot: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let mut csv = String::new();
    writeln!(csv, "# config_hash={}", result.config_hash).ok();
    writeln!(csv, "R,method,state_index,energy_hartree").ok();
    for g in &result.geometries {
        for (method, energies) in &g.energies {
            for (k, e) in energies.iter().enumerate() {
                writeln!(csv, "{},{},{},{:.12}", g.r_label, method, k, e).ok();
            }
        }
    }
    let csv_path = out_dir.join("curves.csv");
    fs::write(&csv_path, csv)?;
    written.push(csv_path);

    let diag = serde_json::json!({
        "config_hash": result.config_hash,
        "seed": result.seed,
        "molecule": result.molecule,
        "fixture_checksums": result.fixture_checksums,
        "geometries": result.geometries,
    });
    let diag_path = out_dir.join("diagnostics.json");
    fs::write(&diag_path, serde_json::to_string_pretty(&diag)?)?;
    written.push(diag_path);

    if gnuplot {
        let mut dat = String::new();
        writeln!(dat, "# config_hash={}", result.config_hash).ok();
        let methods: std::collections::BTreeSet<String> = result
            .geometries
            .iter()
            .flat_map(|g| g.energies.keys().cloned())
            .collect();
        for method in methods {
            writeln!(dat, "# method: {method}").ok();
            for g in &result.geometries {
                if let Some(es) = g.energies.get(&method) {
                    let row: Vec<String> = es.iter().map(|e| format!("{e:.12}")).collect();
                    writeln!(dat, "{} {}", g.r_label, row.join(" ")).ok();
                }
            }
            writeln!(dat).ok();
            writeln!(dat).ok();
        }
        let dat_path = out_dir.join("curves.gnuplot.dat");
        fs::write(&dat_path, dat)?;
        written.push(dat_path);
    }
    Ok(written)
}

/// Persist the scan result itself.
pub fn write_scan_result(result: &ScanResult, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("scan_result.json");
    fs::write(&path, serde_json::to_string_pretty(result)?)?;
    Ok(path)
}

/// Re-solve spectra from a persisted pencil JSON (the `solve` verb).
pub fn solve_pencil_file(path: &Path, k: Option<usize>, jump: &JumpOptions) -> Result<SpectrumResult> {
    let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let pencil = PencilProblem::from_json(&value)?;
    match k {
        Some(k) => {
            let specs = solve_fixed_rank(std::slice::from_ref(&pencil), k, jump)?;
            Ok(specs.into_iter().next().expect("one pencil"))
        }
        None => select_rank_ground(&pencil, jump),
    }
}

/// Produce the E0(k) trace data for a single geometry (the `trace` verb):
/// writes `trace_R<label>.dat` with `k E0(k)` rows and returns the path.
pub fn trace_geometry(config: &ScanConfig, r_label: &str) -> Result<PathBuf> {
    if !config.geometries.iter().any(|g| g == r_label) {
        return Err(Error::Config(format!(
            "geometry {r_label} not listed in the config"
        )));
    }
    let work = prepare_geometry(config, r_label)?;
    let pencil = match config.ansatz {
        AnsatzKind::Pair => {
            let record = run_sweep(&theta_grid(config.theta_points), &config.noise_for(0))?;
            let out = pair_pipeline(config, &work, &record, None)?;
            out.vqse
                .or(out.qse)
                .ok_or_else(|| Error::Config("trace needs qse or vqse in methods".into()))?
        }
        AnsatzKind::Uccsd => {
            let out = uccsd_pipeline(config, &work)?;
            out.vqse
                .or(out.qse)
                .ok_or_else(|| Error::Config("trace needs qse or vqse in methods".into()))?
        }
    };
    let scan = rank_scan_full(&pencil, &config.jump)?;
    let mut dat = String::new();
    writeln!(dat, "# config_hash={}", config.config_hash).ok();
    writeln!(dat, "# R={r_label} k_retained={} spurious_k={:?}", scan.k_retained, scan.spurious_k).ok();
    writeln!(dat, "# k e0_hartree").ok();
    for (k, e) in scan.e0_trace.iter().enumerate() {
        writeln!(dat, "{} {:.12}", k + 1, e).ok();
    }
    fs::create_dir_all(&config.out_dir)?;
    let path = config.out_dir.join(format!("trace_R{r_label}.dat"));
    fs::write(&path, dat)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_text() -> String {
        "\
# scan configuration
molecule = h2
fixture_dir = fixtures
geometries = 0.75
core =
active = 0 1
virtual = 2 3 4 5 6 7 8 9
methods = vqe qse vqse fci hf
theta_points = 33
shots = 0
seed = 7
out_dir = out/test
"
        .to_string()
    }

    #[test]
    fn config_parses_and_hashes() {
        let c = ScanConfig::from_text(&config_text(), Path::new("/tmp")).unwrap();
        assert_eq!(c.molecule, "h2");
        assert_eq!(c.geometries, vec!["0.75".to_string()]);
        assert_eq!(c.theta_points, 33);
        assert_eq!(c.partition.active, vec![0, 1]);
        assert_eq!(c.partition.virtual_.len(), 8);
        assert!(c.is_noiseless());
        assert_eq!(c.effective_norm_cutoff(), 1e-6);
        assert_eq!(c.methods.len(), 5);
        // identical text hashes identically, different text differently
        let c2 = ScanConfig::from_text(&config_text(), Path::new("/tmp")).unwrap();
        assert_eq!(c.config_hash, c2.config_hash);
        let c3 =
            ScanConfig::from_text(&(config_text() + "\nseeds = 2\n"), Path::new("/tmp")).unwrap();
        assert_ne!(c.config_hash, c3.config_hash);
    }

    #[test]
    fn config_rejects_bad_input() {
        let no_methods = "molecule = x\ngeometries = 1.0\nmethods =\n";
        assert!(ScanConfig::from_text(no_methods, Path::new("/tmp")).is_err());
        let bad_method = "molecule = x\ngeometries = 1.0\nmethods = magic\n";
        assert!(ScanConfig::from_text(bad_method, Path::new("/tmp")).is_err());
        let no_geom = "molecule = x\ngeometries =\nmethods = fci\n";
        assert!(ScanConfig::from_text(no_geom, Path::new("/tmp")).is_err());
    }

    #[test]
    fn fnv_hash_is_stable() {
        assert_eq!(fnv1a_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv1a_hex(b"a"), "af63dc4c8601ec8c");
    }
}
