//! Protocol assembly and post-processing: the QSP circuit built from a block
//! encoding and phases, noisy or noiseless simulation, post-selection,
//! depolarizing-noise mitigation, Pauli tomography, and entanglement
//! entropies with bootstrap error bars.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::block_lcu::BlockEncoding;
use crate::circuits::{
    apply_density, apply_statevector, count_two_qubit_gates, multinomial, pauli_outcome_probabilities,
    sample_pauli_measurement, Circuit, DensityMatrix, Gate, MeasurementCounts, NoiseModel, StateVector,
};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};
use crate::operators::PauliString;
use crate::planner::depolarizing_p;
use crate::qsp::QspPhases;

#[derive(Debug, Clone, PartialEq)]
pub struct QspCircuit {
    /// Native-gate circuit of `U_QSP`.
    pub circuit: Circuit,
    pub block: BlockEncoding,
    pub phases: QspPhases,
    pub n_tq: usize,
}

impl QspCircuit {
    pub fn n_ancilla(&self) -> usize {
        self.circuit.n_ancilla()
    }

    pub fn n_system(&self) -> usize {
        self.circuit.n_system()
    }
}

/// `U_QSP = S(φ_1) W† S(φ_2) W ⋯ S(φ_{d−1}) W† S(φ_d) W`, so the gates run
/// `W, S(φ_d), W†, S(φ_{d−1}), …, W†, S(φ_1)` in time order. `S(φ)` is the
/// ancilla phase `e^{iφ(2|0^a⟩⟨0^a| − I)}`.
pub fn assemble_qsp_circuit(block: &BlockEncoding, phases: &QspPhases) -> Result<QspCircuit> {
    let d = phases.degree();
    if d % 2 != 0 {
        return Err(Error::invalid(format!("QSP degree {d} must be even")));
    }
    let w = &block.circuit;
    let (a, n) = (w.n_ancilla(), w.n_system());
    let w_dag = w.inverse();
    let ancillas: Vec<usize> = (0..a).collect();
    let mut gates: Vec<Gate> = Vec::new();
    for (i, &phi) in phases.phases.iter().rev().enumerate() {
        let oracle = if i % 2 == 0 { w } else { &w_dag };
        gates.extend(oracle.gates().iter().cloned());
        gates.push(if a == 0 { Gate::GlobalPhase { phi } } else { Gate::AncillaPhase { qubits: ancillas.clone(), phi } });
    }
    let circuit = Circuit::from_gates(a, n, gates)?.decomposed();
    let n_tq = count_two_qubit_gates(&circuit)?;
    Ok(QspCircuit { circuit, block: block.clone(), phases: phases.clone(), n_tq })
}

fn check_system_state(qc: &QspCircuit, psi0: &StateVector) -> Result<()> {
    if psi0.width() != qc.n_system() {
        return Err(Error::WidthMismatch { expected: qc.n_system(), got: psi0.width() });
    }
    Ok(())
}

/// `U_QSP (|0^a⟩ ⊗ |ψ₀⟩)`.
pub fn run_pure(qc: &QspCircuit, psi0: &StateVector) -> Result<StateVector> {
    check_system_state(qc, psi0)?;
    apply_statevector(&qc.circuit, &psi0.with_ancillas(qc.n_ancilla())?)
}

/// `σ = U_QSP (|0^a⟩⟨0^a| ⊗ |ψ₀⟩⟨ψ₀|) U_QSP†` under `noise`.
pub fn run(qc: &QspCircuit, psi0: &StateVector, noise: &NoiseModel) -> Result<DensityMatrix> {
    check_system_state(qc, psi0)?;
    let rho0 = psi0.with_ancillas(qc.n_ancilla())?.to_density();
    apply_density(&qc.circuit, &rho0, noise)
}

/// Normalized `⟨0^a|ρ|0^a⟩` and its probability.
pub fn postselect(rho: &DensityMatrix, a: usize) -> Result<(DensityMatrix, f64)> {
    if a > rho.width() {
        return Err(Error::invalid("more ancillas than qubits"));
    }
    let dim = 1usize << (rho.width() - a);
    let block = rho.matrix().view((0, 0), (dim, dim)).into_owned();
    let prob = block.trace().re;
    if prob < 1e-12 {
        return Err(Error::PostSelectionImpossible(prob));
    }
    DensityMatrix::from_matrix(block / C64::from(prob)).map(|r| (r, prob))
}

/// Normalized system state `⟨0^a|ψ⟩ / ‖⟨0^a|ψ⟩‖` and its probability.
pub fn postselect_pure(psi: &StateVector, a: usize) -> Result<(StateVector, f64)> {
    let dim = 1usize << (psi.width() - a);
    let amps: CVec = psi.amplitudes().rows(0, dim).into_owned();
    let prob = amps.norm_squared();
    if prob < 1e-12 {
        return Err(Error::PostSelectionImpossible(prob));
    }
    StateVector::from_amplitudes(amps / C64::from(prob.sqrt())).map(|s| (s, prob))
}

/// `1 − |⟨φ|ψ⟩|²`.
pub fn state_infidelity(psi: &StateVector, phi: &StateVector) -> f64 {
    1.0 - psi.amplitudes().dotc(phi.amplitudes()).norm_sqr()
}

/// `⟨P̄⟩ = Tr[(|0^a⟩⟨0^a| ⊗ P)η]` and `⟨Ī⟩ = Tr[(|0^a⟩⟨0^a| ⊗ I)η]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauliMoments {
    pub p_bar: f64,
    pub i_bar: f64,
}

pub fn pauli_moments(rho: &DensityMatrix, a: usize, observable: &PauliString) -> Result<PauliMoments> {
    let probs = pauli_outcome_probabilities(rho, a, observable)?;
    Ok(PauliMoments { p_bar: probs[0][0] - probs[0][1], i_bar: probs[0][0] + probs[0][1] })
}

pub fn pauli_moments_from_counts(counts: &MeasurementCounts) -> Result<PauliMoments> {
    let shots = counts.shots();
    if shots == 0 {
        return Err(Error::invalid("no shots recorded"));
    }
    let [plus, minus] = counts.post_selected();
    let n = shots as f64;
    Ok(PauliMoments { p_bar: (plus as f64 - minus as f64) / n, i_bar: (plus + minus) as f64 / n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigatedExpectation {
    /// `⟨P̄⟩ / ⟨Ī⟩`.
    pub raw_mean: f64,
    /// `⟨P̄⟩ / (⟨Ī⟩ − p/2^a)`.
    pub mitigated_mean: f64,
    pub raw_variance: f64,
    pub variance: f64,
    /// `⟨P̄⟩ / (1 − p)`.
    pub unnormalized_mean: f64,
    /// Variance of `⟨P̄⟩` and of `⟨P̄⟩ / (1 − p)`.
    pub unnormalized_raw_variance: f64,
    pub unnormalized_variance: f64,
    pub p: f64,
    /// Zero for exact moments, which carry no sampling variance.
    pub shots: u64,
}

/// Raw and depolarizing-mitigated estimates of `⟨P⟩` on the post-selected
/// state, with `p = 1 − (1 − p_tq)^{n_tq}`. Sample variances use
/// `Var_P̄ = (⟨Ī⟩ − ⟨P̄⟩²)/(shots − 1)` and `Var_Ī = (⟨Ī⟩ − ⟨Ī⟩²)/(shots − 1)`
/// propagated through each ratio to first order.
pub fn mitigated_pauli(m: PauliMoments, shots: u64, p_tq: f64, n_tq: usize, a: usize) -> Result<MitigatedExpectation> {
    let p = depolarizing_p(p_tq, n_tq)?;
    if p >= 1.0 {
        return Err(Error::invalid("depolarizing probability must be below 1"));
    }
    if m.i_bar <= 0.0 {
        return Err(Error::PostSelectionImpossible(m.i_bar));
    }
    let denom = m.i_bar - p / (1u64 << a) as f64;
    if denom <= 0.0 {
        return Err(Error::OverMitigation { denominator: denom, p });
    }
    let raw_mean = m.p_bar / m.i_bar;
    let mitigated_mean = m.p_bar / denom;
    let (var_p, var_i) = if shots > 1 {
        let k = (shots - 1) as f64;
        ((m.i_bar - m.p_bar * m.p_bar).max(0.0) / k, (m.i_bar - m.i_bar * m.i_bar).max(0.0) / k)
    } else {
        (0.0, 0.0)
    };
    let survival = 1.0 - p;
    Ok(MitigatedExpectation {
        raw_mean,
        mitigated_mean,
        raw_variance: (var_p + raw_mean * raw_mean * var_i) / (m.i_bar * m.i_bar),
        variance: (var_p + mitigated_mean * mitigated_mean * var_i) / (denom * denom),
        unnormalized_mean: m.p_bar / survival,
        unnormalized_raw_variance: var_p,
        unnormalized_variance: var_p / (survival * survival),
        p,
        shots: if shots > 1 { shots } else { 0 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Raw,
    Mitigated,
}

/// Mitigation settings applied to every Pauli setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationContext {
    pub estimator: Estimator,
    pub p_tq: f64,
    pub n_tq: usize,
    pub a: usize,
}

impl MitigationContext {
    pub fn raw(a: usize) -> Self {
        Self { estimator: Estimator::Raw, p_tq: 0.0, n_tq: 0, a }
    }

    fn coefficient(&self, m: PauliMoments) -> Result<f64> {
        let e = mitigated_pauli(m, 0, self.p_tq, self.n_tq, self.a)?;
        Ok(match self.estimator {
            Estimator::Raw => e.raw_mean,
            Estimator::Mitigated => e.mitigated_mean,
        })
    }
}

/// `ρ_A = (I + Σ_P c_P P) / 2^{n_A}`, projected onto the physical set by
/// clipping negative eigenvalues and renormalizing. The flag reports whether
/// the projection changed anything.
pub fn reconstruct_density(n_a: usize, coefficients: &[(PauliString, f64)]) -> Result<(CMat, bool)> {
    let expected = PauliString::all_nonidentity(n_a);
    if coefficients.len() != expected.len() {
        return Err(Error::MissingEntry(format!("expected {} Pauli settings, got {}", expected.len(), coefficients.len())));
    }
    let dim = 1usize << n_a;
    let mut rho = linalg::identity(dim);
    for p in &expected {
        let (_, c) = coefficients
            .iter()
            .find(|(q, _)| q == p)
            .ok_or_else(|| Error::MissingEntry(format!("Pauli setting {p}")))?;
        rho += p.to_matrix()? * C64::from(*c);
    }
    rho /= C64::from(dim as f64);
    let rho = (&rho + rho.adjoint()) * C64::from(0.5);
    let (vals, vecs) = linalg::eigh(&rho);
    if vals[0] >= 0.0 {
        return Ok((rho, false));
    }
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return Err(Error::NonPhysical("reconstructed state has no positive spectrum".into()));
    }
    let mut out = CMat::zeros(dim, dim);
    for (k, v) in clipped.iter().enumerate() {
        if *v > 0.0 {
            let col = vecs.column(k);
            out += col * col.adjoint() * C64::from(v / total);
        }
    }
    Ok((out, true))
}

/// Von Neumann and second Rényi entropies in nats.
pub fn entropies(rho: &CMat) -> (f64, f64) {
    let (vals, _) = linalg::eigh(rho);
    let s_vn = -vals.iter().filter(|&&v| v > 1e-15).map(|v| v * v.ln()).sum::<f64>();
    let purity: f64 = vals.iter().map(|v| v * v).sum();
    (s_vn.max(0.0), (-purity.ln()).max(0.0))
}

/// Measured outcomes for one Pauli setting on the subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSetting {
    pub pauli: PauliString,
    pub counts: MeasurementCounts,
}

/// Samples every non-identity Pauli on `subsystem` (system-qubit indices).
pub fn measure_subsystem<R: Rng + ?Sized>(rho: &DensityMatrix, a: usize, subsystem: &[usize], shots: u64, rng: &mut R) -> Result<Vec<PauliSetting>> {
    let n = rho.width() - a;
    if subsystem.iter().any(|&q| q >= n) {
        return Err(Error::invalid("subsystem qubit outside the system register"));
    }
    PauliString::all_nonidentity(subsystem.len())
        .into_iter()
        .map(|pauli| {
            let obs = pauli.embed(n, subsystem)?;
            Ok(PauliSetting { counts: sample_pauli_measurement(rho, a, &obs, shots, rng)?, pauli })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyResult {
    pub subsystem: Vec<usize>,
    pub coefficients: Vec<(PauliString, f64)>,
    pub rho_a: CMat,
    /// True when the raw reconstruction had negative eigenvalues.
    pub projected: bool,
    pub s_vn: f64,
    pub s_r2: f64,
    pub s_vn_sigma: f64,
    pub s_r2_sigma: f64,
}

fn coefficients_of(data: &[PauliSetting], ctx: &MitigationContext) -> Result<Vec<(PauliString, f64)>> {
    data.iter()
        .map(|s| Ok((s.pauli.clone(), ctx.coefficient(pauli_moments_from_counts(&s.counts)?)?)))
        .collect()
}

/// Resamples the post-selected `[+, −, rest]` outcome counts of one setting.
fn resample<R: Rng + ?Sized>(counts: &MeasurementCounts, rng: &mut R) -> Result<MeasurementCounts> {
    let shots = counts.shots();
    let [plus, minus] = counts.post_selected();
    let n = shots as f64;
    let probs = [plus as f64 / n, minus as f64 / n, (shots - plus - minus) as f64 / n];
    let drawn = multinomial(shots, &probs, rng)?;
    let mut out = vec![[0u64; 2]; counts.counts.len()];
    out[0] = [drawn[0], drawn[1]];
    if out.len() > 1 {
        out[1] = [drawn[2], 0];
    } else if drawn[2] > 0 {
        return Err(Error::Numerical("counts outside the post-selected sector without ancillas".into()));
    }
    Ok(MeasurementCounts { n_ancilla: counts.n_ancilla, counts: out })
}

/// Tomography of the subsystem from measured settings. Error bars are the
/// standard deviation of the entropies over `bootstrap` parametric
/// resamples of the counts.
pub fn tomograph<R: Rng + ?Sized>(
    data: &[PauliSetting],
    subsystem: &[usize],
    ctx: &MitigationContext,
    bootstrap: usize,
    rng: &mut R,
) -> Result<TomographyResult> {
    let coefficients = coefficients_of(data, ctx)?;
    let (rho_a, projected) = reconstruct_density(subsystem.len(), &coefficients)?;
    let (s_vn, s_r2) = entropies(&rho_a);
    let mut samples = Vec::with_capacity(bootstrap);
    for _ in 0..bootstrap {
        let resampled: Vec<PauliSetting> = data
            .iter()
            .map(|s| Ok(PauliSetting { pauli: s.pauli.clone(), counts: resample(&s.counts, rng)? }))
            .collect::<Result<_>>()?;
        let (rho, _) = reconstruct_density(subsystem.len(), &coefficients_of(&resampled, ctx)?)?;
        samples.push(entropies(&rho));
    }
    let sd = |f: fn(&(f64, f64)) -> f64| {
        if samples.len() < 2 {
            return 0.0;
        }
        let m = samples.iter().map(f).sum::<f64>() / samples.len() as f64;
        (samples.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64).sqrt()
    };
    Ok(TomographyResult {
        subsystem: subsystem.to_vec(),
        coefficients,
        rho_a,
        projected,
        s_vn,
        s_r2,
        s_vn_sigma: sd(|s| s.0),
        s_r2_sigma: sd(|s| s.1),
    })
}

/// Reduced state of a system state vector on `subsystem`.
pub fn reduced_state(psi: &StateVector, subsystem: &[usize]) -> Result<CMat> {
    linalg::partial_trace(psi.to_density().matrix(), psi.width(), subsystem)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_lcu::{build_compiled_lcu, lcu_plan};
    use crate::circuits::global_depolarize;
    use crate::linalg::{identity, max_abs_diff};
    use crate::operators::PauliSum;
    use crate::qsp::qsp_value;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lcu_block(terms: &[(f64, &str)], n: usize) -> BlockEncoding {
        let h = PauliSum::new(n, terms.iter().map(|(c, s)| (*c, s.parse().unwrap())).collect()).unwrap();
        build_compiled_lcu(&lcu_plan(&h, true).unwrap()).unwrap().0
    }

    fn phases(values: Vec<f64>) -> QspPhases {
        QspPhases { phases: values, t_tilde: 0.0, interval: [0.0, 1.0], epsilon_poly: 0.0, converged: true }
    }

    #[test]
    fn zero_degree_is_identity() {
        let block = lcu_block(&[(0.5, "II"), (0.25, "ZI"), (0.25, "XX")], 2);
        let qc = assemble_qsp_circuit(&block, &phases(vec![])).unwrap();
        assert!(qc.circuit.is_empty());
        assert_eq!(qc.n_tq, 0);
        let psi = StateVector::plus(2).unwrap();
        let out = run(&qc, &psi, &NoiseModel::noiseless()).unwrap();
        assert!(max_abs_diff(out.matrix(), psi.with_ancillas(block.a).unwrap().to_density().matrix()) < 1e-14);
        assert!(assemble_qsp_circuit(&block, &phases(vec![0.1])).is_err());
    }

    #[test]
    fn eigenvalue_probe() {
        let block = lcu_block(&[(0.5, "II"), (0.125, "ZI"), (-0.25, "XY"), (0.125, "IZ")], 2);
        let wt = block.block().unwrap();
        let (vals, vecs) = linalg::eigh(&wt);
        for ph in [vec![0.3, -1.1], vec![0.2, 0.7, -0.4, 1.3]] {
            let qc = assemble_qsp_circuit(&block, &phases(ph.clone())).unwrap();
            let u = crate::circuits::circuit_unitary(&qc.circuit).unwrap();
            let dim = 1 << block.circuit.n_system();
            let ublock = u.view((0, 0), (dim, dim)).into_owned();
            for (k, &lam) in vals.iter().enumerate() {
                let v = vecs.column(k);
                let got = v.dotc(&(&ublock * v));
                assert!((got - qsp_value(lam, &ph)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn postselection_cases() {
        let tau = StateVector::plus(1).unwrap().to_density();
        let rho = StateVector::plus(1).unwrap().with_ancillas(2).unwrap().to_density();
        let (sys, prob) = postselect(&rho, 2).unwrap();
        assert!((prob - 1.0).abs() < 1e-14 && max_abs_diff(sys.matrix(), tau.matrix()) < 1e-14);
        let mixed = DensityMatrix::maximally_mixed(3).unwrap();
        let (sys, prob) = postselect(&mixed, 2).unwrap();
        assert!((prob - 0.25).abs() < 1e-14);
        assert!(max_abs_diff(sys.matrix(), &(identity(2) * C64::from(0.5))) < 1e-14);
        let mut one = CMat::zeros(4, 4);
        one[(3, 3)] = C64::from(1.0);
        assert!(matches!(postselect(&DensityMatrix::from_matrix(one).unwrap(), 1), Err(Error::PostSelectionImpossible(_))));
    }

    #[test]
    fn mitigation_round_trip_and_inflation() {
        let block = lcu_block(&[(0.5, "II"), (0.25, "ZZ"), (0.25, "XI")], 2);
        let qc = assemble_qsp_circuit(&block, &phases(vec![0.4, -0.9, 0.3, 1.2])).unwrap();
        let sigma = run(&qc, &StateVector::plus(2).unwrap(), &NoiseModel::noiseless()).unwrap();
        let (p_tq, n_tq) = (2.577e-3, qc.n_tq);
        let p = depolarizing_p(p_tq, n_tq).unwrap();
        let noisy = global_depolarize(&sigma, p).unwrap();
        let (post, _) = postselect(&sigma, block.a).unwrap();
        for pauli in ["XI", "ZZ", "YX"] {
            let obs: PauliString = pauli.parse().unwrap();
            let truth = crate::linalg::trace_product(&obs.to_matrix().unwrap(), post.matrix()).re;
            let m = pauli_moments(&noisy, block.a, &obs).unwrap();
            let e = mitigated_pauli(m, 1000, p_tq, n_tq, block.a).unwrap();
            assert!((e.mitigated_mean - truth).abs() < 1e-9);
            let inflation = e.unnormalized_variance / e.unnormalized_raw_variance;
            assert!((inflation / (1.0 - p_tq).powf(-2.0 * n_tq as f64) - 1.0).abs() < 1e-12);
            let clean = mitigated_pauli(pauli_moments(&sigma, block.a, &obs).unwrap(), 1000, 0.0, n_tq, block.a).unwrap();
            assert_eq!(clean.raw_mean, clean.mitigated_mean);
        }
    }

    #[test]
    fn over_mitigation_is_reported() {
        let m = PauliMoments { p_bar: 0.01, i_bar: 0.1 };
        assert!(matches!(mitigated_pauli(m, 100, 0.01, 200, 1), Err(Error::OverMitigation { .. })));
    }

    #[test]
    fn reconstruction_and_entropies() {
        let x: PauliString = "X".parse().unwrap();
        let plus = [(x.clone(), 1.0), ("Y".parse().unwrap(), 0.0), ("Z".parse().unwrap(), 0.0)];
        let (rho, projected) = reconstruct_density(1, &plus).unwrap();
        assert!(!projected);
        assert!(max_abs_diff(&rho, StateVector::plus(1).unwrap().to_density().matrix()) < 1e-14);
        let (s1, s2) = entropies(&rho);
        assert!(s1.abs() < 1e-9 && s2.abs() < 1e-9);
        let half = [(x, 0.0), ("Y".parse().unwrap(), 0.0), ("Z".parse().unwrap(), 0.0)];
        let (rho, _) = reconstruct_density(1, &half).unwrap();
        let (s1, s2) = entropies(&rho);
        assert!((s1 - 2f64.ln()).abs() < 1e-12 && (s2 - 2f64.ln()).abs() < 1e-12);
        let mut diag = CMat::zeros(2, 2);
        diag[(0, 0)] = C64::from(0.75);
        diag[(1, 1)] = C64::from(0.25);
        let (s1, s2) = entropies(&diag);
        assert!((s1 - (-(0.75f64) * 0.75f64.ln() - 0.25 * 0.25f64.ln())).abs() < 1e-12);
        assert!((s1 - 0.5623).abs() < 5e-5 && (s2 + (0.625f64).ln()).abs() < 1e-12);
        let over = [("X".parse().unwrap(), 1.0), ("Y".parse().unwrap(), 0.2), ("Z".parse().unwrap(), 0.0)];
        let (rho, projected) = reconstruct_density(1, &over).unwrap();
        assert!(projected);
        assert!((rho.trace().re - 1.0).abs() < 1e-12 && linalg::eigh(&rho).0[0] >= -1e-12);
        assert!(matches!(reconstruct_density(1, &over[..2]), Err(Error::MissingEntry(_))));
    }

    #[test]
    fn sampled_tomography_tracks_exact_state() {
        let block = lcu_block(&[(0.5, "II"), (0.25, "ZZ"), (0.25, "XI")], 2);
        let qc = assemble_qsp_circuit(&block, &phases(vec![0.4, -0.9])).unwrap();
        let psi = StateVector::plus(2).unwrap();
        let sigma = run(&qc, &psi, &NoiseModel::noiseless()).unwrap();
        let (post, _) = postselect(&sigma, block.a).unwrap();
        let exact = linalg::partial_trace(post.matrix(), 2, &[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = measure_subsystem(&sigma, block.a, &[0], 20_000, &mut rng).unwrap();
        let res = tomograph(&data, &[0], &MitigationContext::raw(block.a), 50, &mut rng).unwrap();
        assert!(max_abs_diff(&res.rho_a, &exact) < 0.03);
        assert!(res.s_vn_sigma > 0.0 && res.s_vn >= 0.0 && res.s_vn <= 2f64.ln() + 1e-12);
    }

    #[test]
    fn bootstrap_sigma_has_nominal_coverage() {
        let block = lcu_block(&[(0.5, "II"), (0.25, "ZZ"), (0.25, "XI")], 2);
        let qc = assemble_qsp_circuit(&block, &phases(vec![0.4, -0.9])).unwrap();
        let sigma = run(&qc, &StateVector::plus(2).unwrap(), &NoiseModel::noiseless()).unwrap();
        let (post, _) = postselect(&sigma, block.a).unwrap();
        let (_, s_r2) = entropies(&linalg::partial_trace(post.matrix(), 2, &[0]).unwrap());
        let reps = 100;
        let covered = (0..reps)
            .filter(|&k| {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
                let data = measure_subsystem(&sigma, block.a, &[0], 1000, &mut rng).unwrap();
                let res = tomograph(&data, &[0], &MitigationContext::raw(block.a), 200, &mut rng).unwrap();
                (res.s_r2 - s_r2).abs() <= res.s_r2_sigma
            })
            .count();
        assert!((50..=80).contains(&covered), "1σ coverage {covered}/{reps}");
    }
}
