//! Error accounting and noise-aware degree selection.
//!
//! The algorithmic error `ε_QSP = t̃·ε_BE + ε_poly` and a global depolarizing
//! model with `p = 1 − (1 − p_TQ)^{N_TQ}` give the infidelity bound
//! `ε_total = 1 − (1 − p)(1 − ε_QSP)² − p/2^{n+a}`; the planner picks the
//! degree minimizing it at each time.

use std::collections::HashMap;
use std::sync::RwLock;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::block_lcu::BlockEncoding;
use crate::circuits::{NoiseModel, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{self, C64};
use crate::operators::PauliSum;
use crate::pipeline::{assemble_qsp_circuit, run};
use crate::qsp::{optimize_phases, PhaseSolverConfig, QspPhases};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub epsilon_be: f64,
    pub epsilon_poly: f64,
    pub t_tilde: f64,
    pub epsilon_qsp: f64,
}

impl ErrorBudget {
    pub fn new(epsilon_be: f64, epsilon_poly: f64, t_tilde: f64) -> Self {
        Self { epsilon_be, epsilon_poly, t_tilde, epsilon_qsp: qsp_error(epsilon_be, epsilon_poly, t_tilde) }
    }
}

pub fn qsp_error(epsilon_be: f64, epsilon_poly: f64, t_tilde: f64) -> f64 {
    t_tilde.abs() * epsilon_be + epsilon_poly
}

pub fn depolarizing_p(p_tq: f64, n_tq: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&p_tq) {
        return Err(Error::invalid(format!("two-qubit error {p_tq} outside [0, 1)")));
    }
    Ok(1.0 - (1.0 - p_tq).powf(n_tq as f64))
}

/// Converts a reported two-qubit fault rate `p₂` into the depolarizing
/// parameter `(16/15)·p₂`.
pub fn h1_fault_to_ptq(p2: f64) -> Result<f64> {
    if !(0.0..15.0 / 16.0).contains(&p2) {
        return Err(Error::invalid(format!("fault rate {p2} outside [0, 15/16)")));
    }
    Ok(16.0 / 15.0 * p2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalError {
    pub value: f64,
    /// `ε_QSP` exceeded 1 and was clamped.
    pub clamped: bool,
}

pub fn total_error(epsilon_qsp: f64, p: f64, n: usize, a: usize) -> Result<TotalError> {
    if !(0.0..=1.0).contains(&p) || !(epsilon_qsp >= 0.0) {
        return Err(Error::invalid("total_error needs 0 <= p <= 1 and epsilon_qsp >= 0"));
    }
    let clamped = epsilon_qsp > 1.0;
    let e = epsilon_qsp.min(1.0);
    let value = 1.0 - (1.0 - p) * (1.0 - e).powi(2) - p / 2f64.powi((n + a) as i32);
    Ok(TotalError { value, clamped })
}

/// Experimental setting for degree planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerPreset {
    pub name: String,
    pub p_tq: f64,
    /// `(d, N_TQ)` pairs.
    pub n_tq: Vec<(usize, usize)>,
    pub epsilon_be: f64,
    /// `t̃ = time_factor · t`.
    pub time_factor: f64,
    pub n: usize,
    pub a: usize,
    pub interval: [f64; 2],
    pub times: Vec<f64>,
    pub candidates: Vec<usize>,
}

impl PlannerPreset {
    /// Three-site chain, variational block encoding with two ancillas.
    pub fn five_qubit() -> Self {
        Self {
            name: "five-qubit".into(),
            p_tq: 2.577e-3,
            n_tq: vec![(0, 0), (2, 52), (4, 98), (6, 144), (8, 190), (10, 236), (12, 282), (14, 328)],
            epsilon_be: 1.8e-2,
            time_factor: 13.3,
            n: 3,
            a: 2,
            interval: [0.0, 1.0],
            times: (0..8).map(|i| i as f64 / 10.0).collect(),
            candidates: (0..=14).step_by(2).collect(),
        }
    }

    /// Four-site chain, exact compiled LCU block encoding with three ancillas.
    pub fn seven_qubit() -> Self {
        Self {
            name: "seven-qubit".into(),
            p_tq: 2.185e-3,
            n_tq: vec![(2, 102), (4, 204), (8, 408)],
            epsilon_be: 0.0,
            time_factor: 8.0,
            n: 4,
            a: 3,
            interval: [0.0, 1.0],
            times: vec![0.1, 0.4, 0.7],
            candidates: vec![2, 4, 8],
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "five-qubit" => Ok(Self::five_qubit()),
            "seven-qubit" => Ok(Self::seven_qubit()),
            other => Err(Error::Config(format!("unknown planner preset `{other}`"))),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() || self.candidates.iter().any(|d| d % 2 != 0) {
            return Err(Error::Config("candidate degrees must be a nonempty list of even integers".into()));
        }
        if !(0.0..1.0).contains(&self.p_tq) || self.epsilon_be < 0.0 || !(self.time_factor > 0.0) {
            return Err(Error::Config("preset needs 0 <= p_tq < 1, epsilon_be >= 0, time_factor > 0".into()));
        }
        for &d in &self.candidates {
            self.n_tq_of(d)?;
        }
        Ok(())
    }

    pub fn n_tq_of(&self, d: usize) -> Result<usize> {
        self.n_tq
            .iter()
            .find(|(k, _)| *k == d)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::MissingEntry(format!("N_TQ for degree {d} in preset `{}`", self.name)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct PhaseKey {
    d: usize,
    t_tilde: u64,
    a: u64,
    b: u64,
    grid_factor: usize,
    validation_factor: usize,
    seed: u64,
}

/// Phase solutions keyed by degree, time, interval, grid sizes, and seed.
/// Each degree is warm-started from the cached degree below it, so cached
/// `ε_poly` values are non-increasing in `d`.
#[derive(Debug)]
pub struct PhaseCache {
    solver: PhaseSolverConfig,
    entries: RwLock<HashMap<PhaseKey, QspPhases>>,
}

impl PhaseCache {
    pub fn new(solver: PhaseSolverConfig) -> Self {
        Self { solver, entries: RwLock::new(HashMap::new()) }
    }

    pub fn solver(&self) -> &PhaseSolverConfig {
        &self.solver
    }

    fn key(&self, d: usize, t_tilde: f64, interval: [f64; 2]) -> PhaseKey {
        PhaseKey {
            d,
            t_tilde: t_tilde.to_bits(),
            a: interval[0].to_bits(),
            b: interval[1].to_bits(),
            grid_factor: self.solver.grid_factor,
            validation_factor: self.solver.validation_factor,
            seed: self.solver.seed,
        }
    }

    fn lookup(&self, key: &PhaseKey) -> Option<QspPhases> {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).get(key).cloned()
    }

    pub fn get(&self, d: usize, t_tilde: f64, interval: [f64; 2]) -> Result<QspPhases> {
        if let Some(hit) = self.lookup(&self.key(d, t_tilde, interval)) {
            return Ok(hit);
        }
        let mut prev: Option<QspPhases> = None;
        for k in (d % 2..=d).step_by(2) {
            let key = self.key(k, t_tilde, interval);
            let sol = match self.lookup(&key) {
                Some(hit) => hit,
                None => {
                    let warm = prev.as_ref().filter(|p| p.degree() > 0).map(|p| {
                        let mut w = p.phases.clone();
                        w.resize(k, 0.0);
                        w
                    });
                    let sol = optimize_phases(k, t_tilde, interval, &self.solver, warm.as_deref())?;
                    self.entries.write().unwrap_or_else(|e| e.into_inner()).entry(key).or_insert(sol).clone()
                }
            };
            prev = Some(sol);
        }
        Ok(prev.expect("loop runs at least once"))
    }

    /// Stores a known solution, e.g. one loaded from disk.
    pub fn insert(&self, d: usize, t_tilde: f64, interval: [f64; 2], phases: QspPhases) {
        let key = self.key(d, t_tilde, interval);
        self.entries.write().unwrap_or_else(|e| e.into_inner()).insert(key, phases);
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    pub t: f64,
    pub t_tilde: f64,
    pub d: usize,
    pub n_tq: usize,
    pub p: f64,
    pub epsilon_be: f64,
    pub epsilon_poly: f64,
    pub epsilon_qsp: f64,
    pub epsilon_total: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreePlan {
    /// Every `(t, d)` cell, ordered by time then degree.
    pub grid: Vec<PlanRow>,
    /// The minimizing row for each time.
    pub optimal: Vec<PlanRow>,
}

impl DegreePlan {
    pub fn optimal_degrees(&self) -> Vec<usize> {
        self.optimal.iter().map(|r| r.d).collect()
    }
}

/// Index of the smallest value, preferring the earliest on ties.
fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Evaluates `ε_total` on the preset's grid. `error_model(d, t̃)` returns
/// `(ε_BE, ε_poly)`.
pub fn plan_degrees<F>(preset: &PlannerPreset, error_model: F) -> Result<DegreePlan>
where
    F: Fn(usize, f64) -> Result<(f64, f64)>,
{
    preset.validate()?;
    let mut candidates = preset.candidates.clone();
    candidates.sort_unstable();
    candidates.dedup();
    let mut grid = Vec::new();
    let mut optimal = Vec::new();
    for &t in &preset.times {
        let t_tilde = preset.time_factor * t;
        let mut rows = Vec::with_capacity(candidates.len());
        for &d in &candidates {
            let n_tq = preset.n_tq_of(d)?;
            let p = depolarizing_p(preset.p_tq, n_tq)?;
            let (epsilon_be, epsilon_poly) = error_model(d, t_tilde)?;
            let epsilon_qsp = qsp_error(epsilon_be, epsilon_poly, t_tilde);
            let total = total_error(epsilon_qsp, p, preset.n, preset.a)?;
            if total.clamped {
                warn!("epsilon_qsp = {epsilon_qsp:.3} clamped to 1 at t = {t}, d = {d}");
            }
            rows.push(PlanRow { t, t_tilde, d, n_tq, p, epsilon_be, epsilon_poly, epsilon_qsp, epsilon_total: total.value, clamped: total.clamped });
        }
        optimal.push(rows[argmin(rows.iter().map(|r| r.epsilon_total))]);
        grid.extend(rows);
    }
    Ok(DegreePlan { grid, optimal })
}

/// [`plan_degrees`] with the preset's `ε_BE` and `ε_poly` from `cache`.
pub fn plan_with_cache(preset: &PlannerPreset, cache: &PhaseCache) -> Result<DegreePlan> {
    plan_degrees(preset, |d, t_tilde| Ok((preset.epsilon_be, cache.get(d, t_tilde, preset.interval)?.epsilon_poly)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicRow {
    pub t: f64,
    pub d: usize,
    /// Two-qubit gates of the assembled circuit.
    pub n_tq: usize,
    pub bound: f64,
    /// `1 − ⟨0^a, ψ_t̃| η |0^a, ψ_t̃⟩` under per-gate depolarizing noise.
    pub exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicReport {
    pub rows: Vec<HeuristicRow>,
    /// `(t, argmin of the bound, argmin of the emulated infidelity)`.
    pub argmins: Vec<(f64, usize, usize)>,
    /// Times whose two argmins lie within one candidate step.
    pub agreements: usize,
}

/// Compares the bound's argmin with the argmin of the infidelity obtained by
/// density-matrix emulation with depolarizing noise after every two-qubit
/// gate. Both use the gate counts of the assembled circuits and the
/// block encoding's own `ε_BE`.
pub fn verify_heuristic(
    block: &BlockEncoding,
    h_tilde: &PauliSum,
    psi0: &StateVector,
    preset: &PlannerPreset,
    cache: &PhaseCache,
    p_tq: f64,
) -> Result<HeuristicReport> {
    preset.validate()?;
    let a = block.circuit.n_ancilla();
    let n = block.circuit.n_system();
    if h_tilde.n() != n || psi0.width() != n {
        return Err(Error::WidthMismatch { expected: n, got: psi0.width() });
    }
    let h = h_tilde.to_matrix()?;
    let mut candidates = preset.candidates.clone();
    candidates.sort_unstable();
    candidates.dedup();
    let noise = NoiseModel::per_gate(p_tq);
    let mut rows = Vec::new();
    let mut argmins = Vec::new();
    let mut agreements = 0;
    for &t in &preset.times {
        let t_tilde = preset.time_factor * t;
        let target = StateVector::from_amplitudes(linalg::expm_hermitian(&h, t_tilde) * psi0.amplitudes())?.with_ancillas(a)?;
        let mut at_t = Vec::with_capacity(candidates.len());
        for &d in &candidates {
            let phases = cache.get(d, t_tilde, preset.interval)?;
            let qc = assemble_qsp_circuit(block, &phases)?;
            let eta = run(&qc, psi0, &noise)?;
            let v = target.amplitudes();
            let overlap: C64 = v.dotc(&(eta.matrix() * v));
            let p = depolarizing_p(p_tq, qc.n_tq)?;
            let bound = total_error(qsp_error(block.epsilon_be, phases.epsilon_poly, t_tilde), p, n, a)?.value;
            at_t.push(HeuristicRow { t, d, n_tq: qc.n_tq, bound, exact: 1.0 - overlap.re });
        }
        let ib = argmin(at_t.iter().map(|r| r.bound));
        let ie = argmin(at_t.iter().map(|r| r.exact));
        if ib.abs_diff(ie) <= 1 {
            agreements += 1;
        }
        argmins.push((t, candidates[ib], candidates[ie]));
        rows.extend(at_t);
    }
    Ok(HeuristicReport { rows, argmins, agreements })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn survival_by_product(p_tq: f64, n: usize) -> f64 {
        (0..n).fold(1.0, |acc, _| acc * (1.0 - p_tq))
    }

    #[test]
    fn error_arithmetic() {
        assert_eq!(qsp_error(0.0, 0.3, 5.0), 0.3);
        assert_eq!(qsp_error(0.2, 0.3, 0.0), 0.3);
        assert!((qsp_error(1.8e-2, 1e-3, 13.3 * 0.5) - 0.1207).abs() < 1e-12);
        let b = ErrorBudget::new(1.8e-2, 1e-3, 6.65);
        assert_eq!(b.epsilon_qsp, qsp_error(1.8e-2, 1e-3, 6.65));
    }

    #[test]
    fn depolarizing_probability() {
        assert_eq!(depolarizing_p(0.3, 0).unwrap(), 0.0);
        for (p_tq, n) in [(2.577e-3, 98), (2.185e-3, 408), (0.01, 7)] {
            assert!((depolarizing_p(p_tq, n).unwrap() - (1.0 - survival_by_product(p_tq, n))).abs() < 1e-12);
        }
        assert!((depolarizing_p(2.577e-3, 98).unwrap() - 0.2233).abs() < 2e-4);
        assert!((depolarizing_p(2.185e-3, 408).unwrap() - 0.590351).abs() < 1e-6);
        assert!(depolarizing_p(1.0, 3).is_err());
    }

    #[test]
    fn fault_rate_conversion() {
        let v = h1_fault_to_ptq(2.416e-3).unwrap();
        assert_eq!(format!("{v:.3e}"), "2.577e-3");
        assert_eq!(h1_fault_to_ptq(0.0).unwrap(), 0.0);
        assert!((h1_fault_to_ptq(15.0 / 32.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(h1_fault_to_ptq(0.95).is_err());
    }

    #[test]
    fn total_error_cases() {
        assert_eq!(total_error(0.0, 0.0, 3, 2).unwrap().value, 0.0);
        assert!((total_error(0.4, 1.0, 3, 2).unwrap().value - (1.0 - 1.0 / 32.0)).abs() < 1e-15);
        let v = total_error(0.05, 0.2233, 3, 2).unwrap().value;
        assert!((v - (1.0 - 0.7767 * 0.9025 - 0.2233 / 32.0)).abs() < 1e-12);
        assert!((v - 0.2920).abs() < 1e-4);
        let c = total_error(1.7, 0.1, 3, 2).unwrap();
        assert!(c.clamped);
        assert_eq!(c.value, total_error(1.0, 0.1, 3, 2).unwrap().value);
    }

    proptest! {
        #[test]
        fn total_error_monotone_in_p(e in 0.0f64..0.4, p in 0.0f64..0.9, dp in 1e-6f64..0.1) {
            let lo = total_error(e, p, 3, 2).unwrap().value;
            let hi = total_error(e, (p + dp).min(1.0), 3, 2).unwrap().value;
            prop_assert!(hi >= lo - 1e-15);
        }

        #[test]
        fn total_error_monotone_in_qsp(e in 0.0f64..0.9, de in 1e-6f64..0.1, p in 0.0f64..0.99) {
            let lo = total_error(e, p, 3, 2).unwrap().value;
            let hi = total_error(e + de, p, 3, 2).unwrap().value;
            prop_assert!(hi >= lo - 1e-15);
        }
    }

    fn toy_preset(p_tq: f64) -> PlannerPreset {
        PlannerPreset {
            name: "toy".into(),
            p_tq,
            n_tq: vec![(0, 0), (2, 10), (4, 20), (6, 30)],
            epsilon_be: 0.01,
            time_factor: 2.0,
            n: 2,
            a: 1,
            interval: [0.0, 1.0],
            times: vec![0.0, 0.5, 1.0],
            candidates: vec![0, 2, 4, 6],
        }
    }

    fn toy_poly(d: usize, t: f64) -> f64 {
        (t / (d as f64 + 1.0)).min(1.5)
    }

    #[test]
    fn plan_matches_exhaustive_scan() {
        let preset = toy_preset(0.01);
        let plan = plan_degrees(&preset, |d, t| Ok((0.01, toy_poly(d, t)))).unwrap();
        assert_eq!(plan.grid.len(), 12);
        for row in &plan.optimal {
            let best = preset
                .candidates
                .iter()
                .map(|&d| {
                    let p = 1.0 - survival_by_product(0.01, preset.n_tq_of(d).unwrap());
                    let e = (row.t_tilde * 0.01 + toy_poly(d, row.t_tilde)).min(1.0);
                    (d, 1.0 - (1.0 - p) * (1.0 - e).powi(2) - p / 8.0)
                })
                .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            assert_eq!(row.d, best.0);
        }
        assert_eq!(plan.optimal[0].d, 0);
    }

    #[test]
    fn noiseless_plan_takes_largest_degree() {
        let plan = plan_degrees(&toy_preset(0.0), |d, t| Ok((0.0, toy_poly(d, t)))).unwrap();
        assert_eq!(plan.optimal_degrees()[1..], [6, 6]);
    }

    #[test]
    fn ties_prefer_smaller_degree() {
        let plan = plan_degrees(&toy_preset(0.0), |_, _| Ok((0.0, 0.1))).unwrap();
        assert!(plan.optimal_degrees().iter().all(|&d| d == 0));
    }

    #[test]
    fn missing_table_entry() {
        let mut preset = toy_preset(0.01);
        preset.candidates.push(8);
        assert!(matches!(plan_degrees(&preset, |_, _| Ok((0.0, 0.0))), Err(Error::MissingEntry(_))));
    }

    #[test]
    fn preset_round_trip() {
        for p in [PlannerPreset::five_qubit(), PlannerPreset::seven_qubit()] {
            let s = toml::to_string(&p).unwrap();
            assert_eq!(PlannerPreset::from_toml_str(&s).unwrap(), p);
        }
        assert!(PlannerPreset::by_name("nine-qubit").is_err());
        assert_eq!(PlannerPreset::five_qubit().n_tq_of(4).unwrap(), 98);
    }

    #[test]
    fn cache_reuses_and_orders_degrees() {
        let cache = PhaseCache::new(PhaseSolverConfig { restarts: 1, max_iters: 200, ..Default::default() });
        let a = cache.get(4, 1.0, [0.0, 1.0]).unwrap();
        assert_eq!(cache.len(), 3);
        let b = cache.get(4, 1.0, [0.0, 1.0]).unwrap();
        assert_eq!(a, b);
        let two = cache.get(2, 1.0, [0.0, 1.0]).unwrap();
        assert!(a.epsilon_poly <= two.epsilon_poly + 1e-12);
        assert_eq!(cache.len(), 3);
    }
}
