//! Manifest-driven experiments. A [`RunManifest`] fixes every input of the
//! protocol; [`Experiment`] runs the stages and writes CSV tables plus a TOML
//! summary into an output directory.
//!
//! All randomness derives from the manifest's master seed: each stage hashes
//! its name together with the seed (FNV-1a) and seeds its own ChaCha stream.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block_lcu::{build_compiled_lcu, lcu_plan, naive_select_gate_count, prepare_circuit, BlockEncoding};
use crate::block_variational::{optimize, OptimizerConfig};
use crate::circuits::{count_two_qubit_gates, Circuit, NoiseMode, NoiseModel, StateVector};
use crate::error::{Error, Result};
use crate::operators::{exact_propagator, HamiltonianSpec, PauliSum, RescaledHamiltonian};
use crate::pipeline::{
    assemble_qsp_circuit, entropies, measure_subsystem, postselect, postselect_pure, reduced_state, run, run_pure,
    state_infidelity, tomograph, Estimator, MitigationContext,
};
use crate::planner::{depolarizing_p, plan_degrees, verify_heuristic, DegreePlan, HeuristicRow, PhaseCache, PlannerPreset};
use crate::qsp::{PhaseSolverConfig, QspPhases};

pub const STAGES: [&str; 5] = ["preprocess", "block-encode", "angles", "plan", "simulate"];

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Seed of one stage, derived from the master seed and the stage name.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut bytes = master.to_le_bytes().to_vec();
    bytes.extend_from_slice(stage.as_bytes());
    fnv1a(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// Exact LCU block encoding with the compiled select oracle.
    Lcu,
    Variational {
        ancillas: usize,
        layers: usize,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
}

/// Planner settings: a named base preset with optional overrides. With
/// `from_block`, the gate counts and `ε_BE` are measured on the block
/// encoding instead of taken from the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub preset: Option<String>,
    pub p_tq: Option<f64>,
    pub n_tq: Option<Vec<(usize, usize)>>,
    pub epsilon_be: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub candidates: Option<Vec<usize>>,
    #[serde(default)]
    pub from_block: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Plus,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DegreeSource {
    /// `"planner"`: the optimal degree of every time.
    Named(String),
    /// One degree per planner time.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSpec {
    pub initial_state: InitialState,
    pub subsystem: Vec<usize>,
    pub noise: NoiseMode,
    /// Defaults to the planner's `p_tq`.
    pub p_tq: Option<f64>,
    pub shots: u64,
    pub bootstrap: usize,
    pub degrees: DegreeSource,
    /// Emit the bound-versus-emulation table.
    pub heuristic: bool,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            initial_state: InitialState::Plus,
            subsystem: vec![0],
            noise: NoiseMode::PerGate,
            p_tq: None,
            shots: 1000,
            bootstrap: 200,
            degrees: DegreeSource::Named("planner".into()),
            heuristic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub hamiltonian: HamiltonianSpec,
    pub backend: BackendSpec,
    #[serde(default)]
    pub phases: PhaseSolverConfig,
    #[serde(default)]
    pub planner: PlannerSection,
    #[serde(default)]
    pub simulation: SimulationSpec,
}

impl RunManifest {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let m: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.hamiltonian.n;
        if n == 0 || self.hamiltonian.h.len() != n {
            return Err(Error::Config(format!("hamiltonian needs n >= 1 and {n} transverse fields")));
        }
        if let BackendSpec::Variational { ancillas, layers, optimizer } = &self.backend {
            if *ancillas == 0 || *layers == 0 {
                return Err(Error::Config("variational backend needs ancillas >= 1 and layers >= 1".into()));
            }
            optimizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        let sim = &self.simulation;
        if sim.subsystem.is_empty() || sim.subsystem.iter().any(|&q| q >= n) {
            return Err(Error::Config(format!("subsystem must be a nonempty set of sites below {n}")));
        }
        let mut sorted = sim.subsystem.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sim.subsystem.len() {
            return Err(Error::Config("subsystem repeats a site".into()));
        }
        if sim.shots < 2 {
            return Err(Error::Config("simulation needs at least two shots per setting".into()));
        }
        if let Some(p) = sim.p_tq {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("simulation p_tq = {p} outside [0, 1)")));
            }
        }
        if let DegreeSource::Named(s) = &sim.degrees {
            if s != "planner" {
                return Err(Error::Config(format!("unknown degree source `{s}`; use \"planner\" or a list")));
            }
        }
        if let Some(name) = &self.planner.preset {
            PlannerPreset::by_name(name)?;
        }
        Ok(())
    }

    /// Hash of the manifest, used to decide whether stored artifacts can be reused.
    pub fn fingerprint(&self) -> Result<String> {
        Ok(format!("{:016x}", fnv1a(self.to_toml()?.as_bytes())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub n: usize,
    pub terms: usize,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub interval: [f64; 2],
    pub time_factor: f64,
    pub global_phase_rate: f64,
    pub h_tilde: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub fingerprint: String,
    pub backend: String,
    pub n: usize,
    pub a: usize,
    pub epsilon_be: f64,
    pub normalization: f64,
    pub two_qubit_gates: usize,
    pub naive_two_qubit_gates: Option<usize>,
    pub layers: Option<usize>,
    pub restart_epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub t: f64,
    pub t_tilde: f64,
    pub d: usize,
    pub epsilon_poly: f64,
    pub converged: bool,
    pub phases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PhaseFile {
    fingerprint: String,
    interval: [f64; 2],
    entries: Vec<PhaseEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnglesReport {
    pub entries: usize,
    pub max_epsilon_poly: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalDegree {
    pub t: f64,
    pub d: usize,
    pub epsilon_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub preset: String,
    pub p_tq: f64,
    pub epsilon_be: f64,
    pub optimal: Vec<OptimalDegree>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Exact,
    Noiseless,
    Unmitigated,
    Mitigated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub t: f64,
    pub d: usize,
    pub n_tq: usize,
    pub p: f64,
    pub success_prob: f64,
    pub s_vn: f64,
    pub s_vn_sigma: f64,
    pub s_r2: f64,
    pub s_r2_sigma: f64,
    pub projected: bool,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeReport {
    pub t: f64,
    pub d: usize,
    pub n_tq: usize,
    /// Infidelity of the noiseless post-selected state to `e^{−iHt}|ψ₀⟩`.
    pub noiseless_infidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub noise: NoiseMode,
    pub p_tq: f64,
    pub shots: u64,
    pub bootstrap: usize,
    pub times: Vec<TimeReport>,
    pub heuristic_agreements: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub seed: u64,
    pub fingerprint: String,
    pub preprocess: Option<PreprocessReport>,
    pub block_encoding: Option<BlockReport>,
    pub angles: Option<AnglesReport>,
    pub plan: Option<PlanReport>,
    pub simulate: Option<SimulateReport>,
}

pub struct SimulationOutput {
    pub rows: Vec<EntropyRow>,
    pub heuristic: Option<Vec<HeuristicRow>>,
    pub report: SimulateReport,
}

/// One manifest bound to an output directory. Stage results are memoized,
/// and the block encoding and phase table are reused from the output
/// directory when their stored fingerprint matches the manifest.
pub struct Experiment {
    manifest: RunManifest,
    out: PathBuf,
    fingerprint: String,
    summary: Summary,
    rescaled: Option<RescaledHamiltonian>,
    block: Option<BlockEncoding>,
    cache: Option<PhaseCache>,
    phase_table: Option<Vec<PhaseEntry>>,
    plan: Option<DegreePlan>,
}

const BLOCK_CIRCUIT: &str = "block_encoding.circuit";
const BLOCK_REPORT: &str = "block_encoding.toml";
const PHASES: &str = "phases.toml";

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Numerical(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, text)?;
    Ok(())
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Option<T> {
    toml::from_str(&fs::read_to_string(path).ok()?).ok()
}

impl Experiment {
    pub fn new(manifest: RunManifest, out: impl Into<PathBuf>) -> Result<Self> {
        manifest.validate()?;
        let out = out.into();
        fs::create_dir_all(&out)?;
        let fingerprint = manifest.fingerprint()?;
        let summary = Summary { name: manifest.name.clone(), seed: manifest.seed, fingerprint: fingerprint.clone(), ..Default::default() };
        Ok(Self { manifest, out, fingerprint, summary, rescaled: None, block: None, cache: None, phase_table: None, plan: None })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn summary(&self) -> &Summary {
        &self.summary
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn write_summary(&self) -> Result<()> {
        write_toml(&self.out.join("summary.toml"), &self.summary)
    }

    fn rescaled(&mut self) -> Result<RescaledHamiltonian> {
        if self.rescaled.is_none() {
            self.rescaled = Some(self.manifest.hamiltonian.rescaled()?);
        }
        Ok(self.rescaled.clone().expect("set above"))
    }

    /// Spectral bounds, time rescaling, and `H̃`; writes `preprocess.toml`.
    pub fn preprocess(&mut self) -> Result<PreprocessReport> {
        let r = self.rescaled()?;
        let report = PreprocessReport {
            n: self.manifest.hamiltonian.n,
            terms: self.manifest.hamiltonian.build()?.terms().len(),
            lambda_minus: r.bounds.lambda_minus,
            lambda_plus: r.bounds.lambda_plus,
            interval: [r.interval_a, r.interval_b],
            time_factor: r.time_factor,
            global_phase_rate: r.global_phase_rate,
            h_tilde: r.h_tilde.terms().iter().map(|(c, p)| (p.to_string(), *c)).collect(),
        };
        write_toml(&self.out.join("preprocess.toml"), &report)?;
        self.summary.preprocess = Some(report.clone());
        Ok(report)
    }

    fn stored_block(&self) -> Option<(BlockEncoding, BlockReport)> {
        let report: BlockReport = read_toml(&self.out.join(BLOCK_REPORT))?;
        if report.fingerprint != self.fingerprint {
            return None;
        }
        let circuit = Circuit::parse(&fs::read_to_string(self.out.join(BLOCK_CIRCUIT)).ok()?).ok()?;
        let block = BlockEncoding {
            circuit,
            a: report.a,
            epsilon_be: report.epsilon_be,
            is_reflection: true,
            normalization: report.normalization,
        };
        Some((block, report))
    }

    /// Builds (or reloads) the block encoding; writes the circuit text, a
    /// report, and `gate_counts.csv`.
    pub fn block_encode(&mut self) -> Result<BlockReport> {
        if let Some(report) = &self.summary.block_encoding {
            return Ok(report.clone());
        }
        if let Some((block, report)) = self.stored_block() {
            self.block = Some(block);
            self.summary.block_encoding = Some(report.clone());
            return Ok(report);
        }
        let h_tilde = self.rescaled()?.h_tilde;
        let n = self.manifest.hamiltonian.n;
        let (block, report) = match self.manifest.backend.clone() {
            BackendSpec::Lcu => {
                let plan = lcu_plan(&h_tilde, true).or_else(|_| lcu_plan(&h_tilde, false))?;
                let prep = count_two_qubit_gates(&prepare_circuit(&plan)?.decomposed())?;
                let naive = naive_select_gate_count(&plan)? + 2 * prep;
                let (block, _) = build_compiled_lcu(&plan)?;
                let report = BlockReport {
                    fingerprint: self.fingerprint.clone(),
                    backend: "lcu".into(),
                    n,
                    a: block.a,
                    epsilon_be: block.epsilon_be,
                    normalization: block.normalization,
                    two_qubit_gates: count_two_qubit_gates(&block.circuit)?,
                    naive_two_qubit_gates: Some(naive),
                    layers: None,
                    restart_epsilons: None,
                };
                (block, report)
            }
            BackendSpec::Variational { ancillas, layers, mut optimizer } => {
                optimizer.init_seed = stage_seed(self.manifest.seed, "block-encode");
                let res = optimize(&h_tilde, n, ancillas, layers, &optimizer)?;
                let block = res.block_encoding()?;
                let report = BlockReport {
                    fingerprint: self.fingerprint.clone(),
                    backend: "variational".into(),
                    n,
                    a: block.a,
                    epsilon_be: block.epsilon_be,
                    normalization: block.normalization,
                    two_qubit_gates: count_two_qubit_gates(&block.circuit)?,
                    naive_two_qubit_gates: None,
                    layers: Some(layers),
                    restart_epsilons: Some(res.restart_epsilons.clone()),
                };
                (block, report)
            }
        };
        fs::write(self.out.join(BLOCK_CIRCUIT), block.circuit.to_string())?;
        write_toml(&self.out.join(BLOCK_REPORT), &report)?;
        #[derive(Serialize)]
        struct GateCount<'a> {
            component: &'a str,
            two_qubit_gates: usize,
        }
        let mut counts = vec![GateCount { component: "block_encoding", two_qubit_gates: report.two_qubit_gates }];
        if let Some(naive) = report.naive_two_qubit_gates {
            counts.push(GateCount { component: "naive_baseline", two_qubit_gates: naive });
        }
        write_csv(&self.out.join("gate_counts.csv"), &counts)?;
        self.block = Some(block);
        self.summary.block_encoding = Some(report.clone());
        Ok(report)
    }

    fn block(&mut self) -> Result<BlockEncoding> {
        if self.block.is_none() {
            self.block_encode()?;
        }
        Ok(self.block.clone().expect("set by block_encode"))
    }

    /// The planner preset after overrides, with `n`, `a`, interval, and time
    /// factor taken from the Hamiltonian and the block encoding.
    pub fn preset(&mut self) -> Result<PlannerPreset> {
        let sec = self.manifest.planner.clone();
        let r = self.rescaled()?;
        let block = self.block()?;
        let mut p = match &sec.preset {
            Some(name) => PlannerPreset::by_name(name)?,
            None => PlannerPreset {
                name: self.manifest.name.clone(),
                p_tq: 0.0,
                n_tq: Vec::new(),
                epsilon_be: 0.0,
                time_factor: 1.0,
                n: 0,
                a: 0,
                interval: [0.0, 1.0],
                times: Vec::new(),
                candidates: Vec::new(),
            },
        };
        let c = block.normalization;
        p.n = self.manifest.hamiltonian.n;
        p.a = block.a;
        p.time_factor = r.time_factor * c;
        p.interval = [r.interval_a / c, r.interval_b / c];
        if let Some(v) = sec.p_tq {
            p.p_tq = v;
        }
        if let Some(v) = sec.times {
            p.times = v;
        }
        if let Some(v) = sec.candidates {
            p.candidates = v;
        }
        if let Some(v) = sec.n_tq {
            p.n_tq = v;
        }
        if let Some(v) = sec.epsilon_be {
            p.epsilon_be = v;
        }
        if sec.from_block {
            p.epsilon_be = block.epsilon_be;
            let mut table = Vec::with_capacity(p.candidates.len());
            for &d in &p.candidates {
                let probe = QspPhases { phases: vec![0.5; d], t_tilde: 0.0, interval: p.interval, epsilon_poly: 0.0, converged: true };
                table.push((d, assemble_qsp_circuit(&block, &probe)?.n_tq));
            }
            p.n_tq = table;
        }
        if p.times.is_empty() {
            return Err(Error::Config("planner needs at least one time".into()));
        }
        p.validate()?;
        Ok(p)
    }

    fn degrees_needed(&mut self) -> Result<Vec<usize>> {
        let mut ds = self.preset()?.candidates;
        if let DegreeSource::Explicit(list) = &self.manifest.simulation.degrees {
            ds.extend(list);
        }
        ds.sort_unstable();
        ds.dedup();
        Ok(ds)
    }

    fn phase_cache(&mut self) -> &PhaseCache {
        let seed = stage_seed(self.manifest.seed, "angles");
        let solver = PhaseSolverConfig { seed, ..self.manifest.phases.clone() };
        self.cache.get_or_insert_with(|| PhaseCache::new(solver))
    }

    /// Phase factors for every planner time and needed degree; writes
    /// `phases.toml` and `epsilon_poly.csv`.
    pub fn angles(&mut self) -> Result<AnglesReport> {
        if let Some(report) = &self.summary.angles {
            return Ok(report.clone());
        }
        let preset = self.preset()?;
        let degrees = self.degrees_needed()?;
        let stored: Option<PhaseFile> = read_toml(&self.out.join(PHASES));
        let entries = match stored.filter(|f| f.fingerprint == self.fingerprint && f.interval == preset.interval) {
            Some(file) => file.entries,
            None => {
                let interval = preset.interval;
                let cache = self.phase_cache();
                let per_time: Vec<Vec<PhaseEntry>> = preset
                    .times
                    .par_iter()
                    .map(|&t| {
                        let t_tilde = preset.time_factor * t;
                        degrees
                            .iter()
                            .map(|&d| {
                                let ph = cache.get(d, t_tilde, interval)?;
                                Ok(PhaseEntry { t, t_tilde, d, epsilon_poly: ph.epsilon_poly, converged: ph.converged, phases: ph.phases })
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<_>>()?;
                let entries: Vec<PhaseEntry> = per_time.into_iter().flatten().collect();
                write_toml(&self.out.join(PHASES), &PhaseFile { fingerprint: self.fingerprint.clone(), interval, entries: entries.clone() })?;
                entries
            }
        };
        #[derive(Serialize)]
        struct Row {
            t: f64,
            t_tilde: f64,
            d: usize,
            epsilon_poly: f64,
        }
        let rows: Vec<Row> = entries.iter().map(|e| Row { t: e.t, t_tilde: e.t_tilde, d: e.d, epsilon_poly: e.epsilon_poly }).collect();
        write_csv(&self.out.join("epsilon_poly.csv"), &rows)?;
        let report = AnglesReport { entries: entries.len(), max_epsilon_poly: entries.iter().map(|e| e.epsilon_poly).fold(0.0, f64::max) };
        self.phase_table = Some(entries);
        self.summary.angles = Some(report.clone());
        Ok(report)
    }

    fn phases_for(&mut self, t: f64, d: usize) -> Result<QspPhases> {
        if self.phase_table.is_none() {
            self.angles()?;
        }
        let interval = self.preset()?.interval;
        self.phase_table
            .as_ref()
            .expect("set by angles")
            .iter()
            .find(|e| e.t == t && e.d == d)
            .map(|e| QspPhases { phases: e.phases.clone(), t_tilde: e.t_tilde, interval, epsilon_poly: e.epsilon_poly, converged: e.converged })
            .ok_or_else(|| Error::MissingEntry(format!("phases for t = {t}, d = {d}")))
    }

    /// Noise-aware degree selection; writes `epsilon_total.csv` and
    /// `optimal_degree.csv`.
    pub fn plan(&mut self) -> Result<PlanReport> {
        if let Some(report) = &self.summary.plan {
            return Ok(report.clone());
        }
        let preset = self.preset()?;
        self.angles()?;
        let table = self.phase_table.clone().expect("set by angles");
        let plan = plan_degrees(&preset, |d, t_tilde| {
            table
                .iter()
                .find(|e| e.d == d && e.t_tilde == t_tilde)
                .map(|e| (preset.epsilon_be, e.epsilon_poly))
                .ok_or_else(|| Error::MissingEntry(format!("phases for t̃ = {t_tilde}, d = {d}")))
        })?;
        write_csv(&self.out.join("epsilon_total.csv"), &plan.grid)?;
        let optimal: Vec<OptimalDegree> = plan.optimal.iter().map(|r| OptimalDegree { t: r.t, d: r.d, epsilon_total: r.epsilon_total }).collect();
        write_csv(&self.out.join("optimal_degree.csv"), &optimal)?;
        let report = PlanReport { preset: preset.name.clone(), p_tq: preset.p_tq, epsilon_be: preset.epsilon_be, optimal };
        self.plan = Some(plan);
        self.summary.plan = Some(report.clone());
        Ok(report)
    }

    fn simulation_degrees(&mut self) -> Result<Vec<(f64, usize)>> {
        let times = self.preset()?.times;
        match self.manifest.simulation.degrees.clone() {
            DegreeSource::Explicit(list) => {
                if list.len() != times.len() {
                    return Err(Error::Config(format!("{} explicit degrees for {} times", list.len(), times.len())));
                }
                Ok(times.into_iter().zip(list).collect())
            }
            DegreeSource::Named(_) => Ok(self.plan()?.optimal.iter().map(|o| (o.t, o.d)).collect()),
        }
    }

    fn initial_state(&self) -> Result<StateVector> {
        let n = self.manifest.hamiltonian.n;
        match self.manifest.simulation.initial_state {
            InitialState::Plus => StateVector::plus(n),
            InitialState::Zero => StateVector::zero(n),
        }
    }

    /// Runs the four entropy series at every time and, if enabled, the
    /// bound-versus-emulation comparison.
    pub fn simulate_data(&mut self) -> Result<SimulationOutput> {
        let schedule = self.simulation_degrees()?;
        let preset = self.preset()?;
        let block = self.block()?;
        let sim = self.manifest.simulation.clone();
        let p_tq = sim.p_tq.unwrap_or(preset.p_tq);
        let noise = NoiseModel { p_tq, mode: sim.noise };
        let psi0 = self.initial_state()?;
        let h: PauliSum = self.manifest.hamiltonian.build()?;
        let a = block.a;
        let mut jobs = Vec::with_capacity(schedule.len());
        for &(t, d) in &schedule {
            jobs.push((t, assemble_qsp_circuit(&block, &self.phases_for(t, d)?)?));
        }
        let seed = stage_seed(self.manifest.seed, "simulate");
        let per_time: Vec<(Vec<EntropyRow>, TimeReport)> = jobs
            .par_iter()
            .enumerate()
            .map(|(k, (t, qc))| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let d = qc.phases.degree();
                let exact = StateVector::from_amplitudes(exact_propagator(&h, *t)? * psi0.amplitudes())?;
                let (s_vn, s_r2) = entropies(&reduced_state(&exact, &sim.subsystem)?);
                let base = EntropyRow {
                    t: *t,
                    d,
                    n_tq: 0,
                    p: 0.0,
                    success_prob: 1.0,
                    s_vn,
                    s_vn_sigma: 0.0,
                    s_r2,
                    s_r2_sigma: 0.0,
                    projected: false,
                    variant: Variant::Exact,
                };
                let (post, _) = postselect_pure(&run_pure(qc, &psi0)?, a)?;
                let infidelity = state_infidelity(&post, &exact);
                let clean = run(qc, &psi0, &NoiseModel::noiseless())?;
                let noisy = run(qc, &psi0, &noise)?;
                let (p, mitigation_ptq) = match sim.noise {
                    NoiseMode::None => (0.0, 0.0),
                    _ => (depolarizing_p(p_tq, qc.n_tq)?, p_tq),
                };
                let mitigated = MitigationContext { estimator: Estimator::Mitigated, p_tq: mitigation_ptq, n_tq: qc.n_tq, a };
                let clean_data = measure_subsystem(&clean, a, &sim.subsystem, sim.shots, &mut rng)?;
                let noisy_data = measure_subsystem(&noisy, a, &sim.subsystem, sim.shots, &mut rng)?;
                let series = [
                    (Variant::Noiseless, &clean, &clean_data, MitigationContext::raw(a), 0.0),
                    (Variant::Unmitigated, &noisy, &noisy_data, MitigationContext::raw(a), p),
                    (Variant::Mitigated, &noisy, &noisy_data, mitigated, p),
                ];
                let mut rows = vec![base];
                for (variant, rho, data, ctx, p_row) in series {
                    let (_, success_prob) = postselect(rho, a)?;
                    let tomo = tomograph(data, &sim.subsystem, &ctx, sim.bootstrap, &mut rng)?;
                    rows.push(EntropyRow {
                        t: *t,
                        d,
                        n_tq: qc.n_tq,
                        p: p_row,
                        success_prob,
                        s_vn: tomo.s_vn,
                        s_vn_sigma: tomo.s_vn_sigma,
                        s_r2: tomo.s_r2,
                        s_r2_sigma: tomo.s_r2_sigma,
                        projected: tomo.projected,
                        variant,
                    });
                }
                Ok((rows, TimeReport { t: *t, d, n_tq: qc.n_tq, noiseless_infidelity: infidelity }))
            })
            .collect::<Result<_>>()?;
        let (rows, times): (Vec<Vec<EntropyRow>>, Vec<TimeReport>) = per_time.into_iter().unzip();
        let heuristic = if sim.heuristic {
            self.angles()?;
            let table = self.phase_table.clone().expect("set by angles");
            let cache = PhaseCache::new(self.manifest.phases.clone());
            let h_tilde = self.rescaled()?.h_tilde;
            let w_tilde = PauliSum::new(h_tilde.n(), h_tilde.terms().iter().map(|(c, p)| (c / block.normalization, p.clone())).collect())?;
            let report = verify_heuristic_from_table(&block, &w_tilde, &psi0, &preset, &table, &cache, p_tq)?;
            Some(report)
        } else {
            None
        };
        let report = SimulateReport {
            noise: sim.noise,
            p_tq,
            shots: sim.shots,
            bootstrap: sim.bootstrap,
            times,
            heuristic_agreements: heuristic.as_ref().map(|h| h.1),
        };
        Ok(SimulationOutput { rows: rows.into_iter().flatten().collect(), heuristic: heuristic.map(|h| h.0), report })
    }

    /// [`Experiment::simulate_data`], writing `entropies.csv` and
    /// `heuristic.csv`.
    pub fn simulate(&mut self) -> Result<SimulateReport> {
        let out = self.simulate_data()?;
        write_csv(&self.out.join("entropies.csv"), &out.rows)?;
        if let Some(rows) = &out.heuristic {
            write_csv(&self.out.join("heuristic.csv"), rows)?;
        }
        self.summary.simulate = Some(out.report.clone());
        Ok(out.report)
    }

    /// Every stage in order.
    pub fn run_all(&mut self) -> Result<&Summary> {
        self.preprocess()?;
        self.block_encode()?;
        self.angles()?;
        self.plan()?;
        self.simulate()?;
        Ok(&self.summary)
    }

    /// Runs one stage by its command name and writes the summary.
    pub fn run_stage(&mut self, stage: &str) -> Result<&Summary> {
        match stage {
            "preprocess" => {
                self.preprocess()?;
            }
            "block-encode" => {
                self.block_encode()?;
            }
            "angles" => {
                self.angles()?;
            }
            "plan" => {
                self.plan()?;
            }
            "simulate" => {
                self.simulate()?;
            }
            "run-all" => {
                self.run_all()?;
            }
            other => return Err(Error::Config(format!("unknown stage `{other}`"))),
        }
        self.write_summary()?;
        Ok(&self.summary)
    }
}

/// [`verify_heuristic`] with phases served from a precomputed table.
fn verify_heuristic_from_table(
    block: &BlockEncoding,
    h_tilde: &PauliSum,
    psi0: &StateVector,
    preset: &PlannerPreset,
    table: &[PhaseEntry],
    cache: &PhaseCache,
    p_tq: f64,
) -> Result<(Vec<HeuristicRow>, usize)> {
    for e in table {
        cache.insert(e.d, e.t_tilde, preset.interval, QspPhases {
            phases: e.phases.clone(),
            t_tilde: e.t_tilde,
            interval: preset.interval,
            epsilon_poly: e.epsilon_poly,
            converged: e.converged,
        });
    }
    let report = verify_heuristic(block, h_tilde, psi0, preset, cache, p_tq)?;
    Ok((report.rows, report.agreements))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
name = "chain-2"
seed = 11

[hamiltonian]
n = 2
J = 1.0
h = [0.7, 0.7]
m = 0.3

[backend]
kind = "lcu"

[phases]
restarts = 1
max_iters = 300

[planner]
p_tq = 2e-3
times = [0.0, 0.1, 0.2]
candidates = [0, 2, 4]
from_block = true

[simulation]
subsystem = [0]
shots = 400
bootstrap = 20
"#;

    const EXPERIMENT_ONE: &str = r#"
name = "experiment-1"
[hamiltonian]
n = 3
J = 1.0
h = [-1.05, -1.05, -1.05]
m = 0.5
[backend]
kind = "variational"
ancillas = 2
layers = 3
[planner]
preset = "five-qubit"
"#;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x8594_4171_f739_67e8);
        assert_ne!(stage_seed(1, "angles"), stage_seed(1, "simulate"));
        assert_ne!(stage_seed(1, "angles"), stage_seed(2, "angles"));
    }

    #[test]
    fn manifest_validation() {
        let m = RunManifest::from_toml_str(SMALL).unwrap();
        assert_eq!(RunManifest::from_toml_str(&m.to_toml().unwrap()).unwrap(), m);
        let bad = [
            SMALL.replace("shots = 400", "shots = 400\ncolour = 1"),
            SMALL.replace("subsystem = [0]", "subsystem = [2]"),
            SMALL.replace("subsystem = [0]", "subsystem = [0, 0]"),
            SMALL.replace("from_block = true", "from_block = true\npreset = \"nine-qubit\""),
            SMALL.replace("bootstrap = 20", "bootstrap = 20\ndegrees = \"fastest\""),
            SMALL.replace("h = [0.7, 0.7]", "h = [0.7]"),
            SMALL.replace("kind = \"lcu\"", "kind = \"teleport\""),
        ];
        for text in bad {
            assert!(matches!(RunManifest::from_toml_str(&text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn preprocess_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = Experiment::new(RunManifest::from_toml_str(EXPERIMENT_ONE).unwrap(), dir.path()).unwrap();
        let r = e.preprocess().unwrap();
        assert!((r.lambda_plus - 6.65).abs() < 1e-12 && (r.lambda_minus + 6.65).abs() < 1e-12);
        assert!((r.time_factor - 13.3).abs() < 1e-12);
        assert!(dir.path().join("preprocess.toml").exists());

        let narrow = EXPERIMENT_ONE.replace("m = 0.5", "m = 0.5\ninterval = [0.1, 0.9]");
        let mut e = Experiment::new(RunManifest::from_toml_str(&narrow).unwrap(), dir.path()).unwrap();
        assert!((e.preprocess().unwrap().time_factor - 13.3 / 0.8).abs() < 1e-12);

        let zero = EXPERIMENT_ONE.replace("J = 1.0", "J = 0.0").replace("[-1.05, -1.05, -1.05]", "[0.0, 0.0, 0.0]").replace("m = 0.5", "m = 0.0");
        let mut e = Experiment::new(RunManifest::from_toml_str(&zero).unwrap(), dir.path()).unwrap();
        assert!(e.preprocess().is_err());
    }

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap()
    }

    #[test]
    fn small_run_is_complete_and_replayable() {
        let m = RunManifest::from_toml_str(SMALL).unwrap();
        let first = tempfile::tempdir().unwrap();
        let mut e = Experiment::new(m.clone(), first.path()).unwrap();
        let summary = e.run_stage("run-all").unwrap().clone();
        let block = summary.block_encoding.as_ref().unwrap();
        assert!(block.epsilon_be < 1e-10);
        assert!(block.naive_two_qubit_gates.unwrap() > block.two_qubit_gates);
        let plan = summary.plan.as_ref().unwrap();
        assert_eq!(plan.optimal.len(), 3);
        assert_eq!(plan.optimal[0].d, 0);

        let sim = summary.simulate.as_ref().unwrap();
        for t in &sim.times {
            assert!(t.noiseless_infidelity < 0.05, "{t:?}");
        }
        let mut rdr = csv::Reader::from_path(first.path().join("entropies.csv")).unwrap();
        let rows: Vec<EntropyRow> = rdr.deserialize().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(rows.len(), 12);
        let exact0 = rows.iter().find(|r| r.t == 0.0 && r.variant == Variant::Exact).unwrap();
        assert!(exact0.s_vn.abs() < 1e-9 && exact0.s_r2.abs() < 1e-9);
        for v in [Variant::Exact, Variant::Noiseless, Variant::Unmitigated, Variant::Mitigated] {
            assert_eq!(rows.iter().filter(|r| r.variant == v).count(), 3);
        }
        let heuristic = read(first.path(), "heuristic.csv");
        assert_eq!(heuristic.lines().count(), 1 + 3 * 3);

        let second = tempfile::tempdir().unwrap();
        Experiment::new(m.clone(), second.path()).unwrap().run_stage("run-all").unwrap();
        for f in ["epsilon_poly.csv", "epsilon_total.csv", "optimal_degree.csv", "entropies.csv", "heuristic.csv", "gate_counts.csv", "summary.toml"] {
            assert_eq!(read(first.path(), f), read(second.path(), f), "{f}");
        }

        let mut reused = Experiment::new(m, first.path()).unwrap();
        reused.run_stage("simulate").unwrap();
        assert_eq!(read(first.path(), "entropies.csv"), read(second.path(), "entropies.csv"));
    }

    #[test]
    fn explicit_degrees_and_stale_artifacts() {
        let text = SMALL.replace("bootstrap = 20", "bootstrap = 5\nheuristic = false\ndegrees = [0, 2, 2]");
        let dir = tempfile::tempdir().unwrap();
        let mut e = Experiment::new(RunManifest::from_toml_str(&text).unwrap(), dir.path()).unwrap();
        let report = e.simulate().unwrap();
        assert_eq!(report.times.iter().map(|t| t.d).collect::<Vec<_>>(), vec![0, 2, 2]);
        assert!(!dir.path().join("heuristic.csv").exists());

        let other = text.replace("seed = 11", "seed = 12");
        let e = Experiment::new(RunManifest::from_toml_str(&other).unwrap(), dir.path()).unwrap();
        assert!(e.stored_block().is_none());

        let wrong = text.replace("degrees = [0, 2, 2]", "degrees = [0, 2]");
        let mut e = Experiment::new(RunManifest::from_toml_str(&wrong).unwrap(), dir.path()).unwrap();
        assert!(matches!(e.simulate(), Err(Error::Config(_))));
    }
}
