use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::noise::{self, NoiseMode, NoiseModel};
use super::{count_two_qubit_gates, Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64, I, ONE, ZERO};
use crate::operators::{Pauli, PauliString};

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    width: usize,
    amps: CVec,
}

impl StateVector {
    pub fn zero(width: usize) -> Result<Self> {
        linalg::check_dense(width)?;
        let mut amps = CVec::zeros(1 << width);
        amps[0] = ONE;
        Ok(Self { width, amps })
    }

    /// Normalizes `amps`; fails on a zero vector or a non-power-of-two length.
    pub fn from_amplitudes(amps: CVec) -> Result<Self> {
        let len = amps.len();
        if !len.is_power_of_two() {
            return Err(Error::invalid(format!("state length {len} is not a power of two")));
        }
        let norm = amps.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("state has zero or non-finite norm"));
        }
        Ok(Self { width: len.trailing_zeros() as usize, amps: amps / C64::from(norm) })
    }

    /// `|+⟩^{⊗n}`.
    pub fn plus(width: usize) -> Result<Self> {
        linalg::check_dense(width)?;
        let dim = 1usize << width;
        Ok(Self { width, amps: CVec::from_element(dim, C64::from((dim as f64).sqrt().recip())) })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    /// `|0^a⟩ ⊗ self`.
    pub fn with_ancillas(&self, a: usize) -> Result<StateVector> {
        linalg::check_dense(a + self.width)?;
        let mut amps = CVec::zeros(1 << (a + self.width));
        amps.rows_mut(0, self.amps.len()).copy_from(&self.amps);
        Ok(Self { width: a + self.width, amps })
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix { width: self.width, rho: &self.amps * self.amps.adjoint() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    width: usize,
    rho: CMat,
}

impl DensityMatrix {
    pub fn from_matrix(rho: CMat) -> Result<Self> {
        let dim = rho.nrows();
        if rho.ncols() != dim || !dim.is_power_of_two() {
            return Err(Error::invalid("density matrix must be square with power-of-two dimension"));
        }
        Ok(Self { width: dim.trailing_zeros() as usize, rho })
    }

    pub fn maximally_mixed(width: usize) -> Result<Self> {
        linalg::check_dense(width)?;
        let dim = 1usize << width;
        Ok(Self { width, rho: linalg::identity(dim) / C64::from(dim as f64) })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn matrix(&self) -> &CMat {
        &self.rho
    }

    pub fn into_matrix(self) -> CMat {
        self.rho
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.rho, &self.rho).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigh(&self.rho).0[0]
    }

    /// Hermiticity, unit trace, and eigenvalues above `-1e-9`.
    pub fn check_physical(&self) -> Result<()> {
        if linalg::hermiticity_error(&self.rho) > 1e-10 {
            return Err(Error::NonPhysical("density matrix is not Hermitian".into()));
        }
        if (self.trace() - ONE).norm() > 1e-10 {
            return Err(Error::NonPhysical(format!("trace {} differs from 1", self.trace())));
        }
        let min = self.min_eigenvalue();
        if min < -1e-9 {
            return Err(Error::NonPhysical(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut CMat {
        &mut self.rho
    }
}

fn phase_of(y_count: usize) -> C64 {
    match y_count % 4 {
        0 => ONE,
        1 => I,
        2 => -ONE,
        _ => -I,
    }
}

fn single_qubit_matrix(g: &Gate) -> Option<[C64; 4]> {
    let rot = |theta: f64, axis: Pauli| {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        match axis {
            Pauli::X => [C64::from(c), C64::new(0.0, -s), C64::new(0.0, -s), C64::from(c)],
            Pauli::Y => [C64::from(c), C64::from(-s), C64::from(s), C64::from(c)],
            _ => unreachable!(),
        }
    };
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match *g {
        Gate::Rx { theta, .. } => Some(rot(theta, Pauli::X)),
        Gate::Ry { theta, .. } => Some(rot(theta, Pauli::Y)),
        Gate::Had { .. } => Some([C64::from(h), C64::from(h), C64::from(h), C64::from(-h)]),
        Gate::X { .. } => Some([ZERO, ONE, ONE, ZERO]),
        Gate::Y { .. } => Some([ZERO, -I, I, ZERO]),
        _ => None,
    }
}

/// Applies `g` (or its complex conjugate) to the register whose qubit `q`
/// lives at bit `base + width - 1 - q` of the flat index into `data`. The
/// remaining bits are spectators, so the same kernel acts on state vectors,
/// on the rows of a matrix (`base = 0`), or on its columns (`base = width`,
/// `conj = true`) when the matrix is stored column-major.
pub(crate) fn apply_gate_raw(g: &Gate, data: &mut [C64], width: usize, base: usize, conj: bool) {
    let bit = |q: usize| 1usize << (base + width - 1 - q);
    let cj = |z: C64| if conj { z.conj() } else { z };
    if let Some(m) = single_qubit_matrix(g) {
        let m = m.map(cj);
        let b = bit(g.qubits()[0]);
        for i in 0..data.len() {
            if i & b == 0 {
                let (x, y) = (data[i], data[i | b]);
                data[i] = m[0] * x + m[1] * y;
                data[i | b] = m[2] * x + m[3] * y;
            }
        }
        return;
    }
    match g {
        Gate::Rz { q, theta } => {
            let b = bit(*q);
            let (p0, p1) = (cj(C64::from_polar(1.0, -theta / 2.0)), cj(C64::from_polar(1.0, theta / 2.0)));
            for (i, z) in data.iter_mut().enumerate() {
                *z *= if i & b == 0 { p0 } else { p1 };
            }
        }
        Gate::Z { q } => {
            let b = bit(*q);
            for (i, z) in data.iter_mut().enumerate() {
                if i & b != 0 {
                    *z = -*z;
                }
            }
        }
        Gate::Rzz { q0, q1, theta } => {
            let m = bit(*q0) | bit(*q1);
            let (even, odd) = (cj(C64::from_polar(1.0, -theta / 2.0)), cj(C64::from_polar(1.0, theta / 2.0)));
            for (i, z) in data.iter_mut().enumerate() {
                *z *= if (i & m).count_ones() % 2 == 0 { even } else { odd };
            }
        }
        Gate::Cz { q0, q1 } => {
            let m = bit(*q0) | bit(*q1);
            for (i, z) in data.iter_mut().enumerate() {
                if i & m == m {
                    *z = -*z;
                }
            }
        }
        Gate::AncillaPhase { qubits, phi } => {
            let m = qubits.iter().fold(0, |acc, &q| acc | bit(q));
            let (inside, outside) = (cj(C64::from_polar(1.0, *phi)), cj(C64::from_polar(1.0, -phi)));
            for (i, z) in data.iter_mut().enumerate() {
                *z *= if i & m == 0 { inside } else { outside };
            }
        }
        Gate::GlobalPhase { phi } => {
            let p = cj(C64::from_polar(1.0, *phi));
            for z in data.iter_mut() {
                *z *= p;
            }
        }
        Gate::McPauli { controls, pattern, targets, paulis, negate } => {
            let cmask = controls.iter().fold(0, |acc, &q| acc | bit(q));
            let cval = controls.iter().zip(pattern).fold(0, |acc, (&q, &p)| if p { acc | bit(q) } else { acc });
            let (mut xm, mut zm, mut ny) = (0usize, 0usize, 0usize);
            for (&q, &p) in targets.iter().zip(paulis) {
                if p.has_x() {
                    xm |= bit(q);
                }
                if p.has_z() {
                    zm |= bit(q);
                }
                if p == Pauli::Y {
                    ny += 1;
                }
            }
            let base_phase = if *negate { -phase_of(ny) } else { phase_of(ny) };
            let ph = |i: usize| {
                let p = if (i & zm).count_ones() % 2 == 1 { -base_phase } else { base_phase };
                cj(p)
            };
            let low = if xm == 0 { 0 } else { 1usize << xm.trailing_zeros() };
            for i in 0..data.len() {
                if i & cmask != cval {
                    continue;
                }
                if xm == 0 {
                    data[i] *= ph(i);
                } else if i & low == 0 {
                    let j = i ^ xm;
                    let (a, b) = (data[i], data[j]);
                    data[j] = ph(i) * a;
                    data[i] = ph(j) * b;
                }
            }
        }
        _ => unreachable!("single-qubit gates handled above"),
    }
}

/// `ρ → UρU†` for one gate on a column-major density matrix.
pub(crate) fn conjugate_matrix(g: &Gate, m: &mut CMat, width: usize) {
    let data = m.as_mut_slice();
    apply_gate_raw(g, data, width, 0, false);
    apply_gate_raw(g, data, width, width, true);
}

/// `M → GM`.
pub(crate) fn apply_left(g: &Gate, m: &mut CMat, width: usize) {
    apply_gate_raw(g, m.as_mut_slice(), width, 0, false);
}

/// `M → MG`.
pub(crate) fn apply_right(g: &Gate, m: &mut CMat, width: usize) {
    apply_gate_raw(&g.inverse(), m.as_mut_slice(), width, width, true);
}

fn check_width(c: &Circuit, got: usize) -> Result<()> {
    if c.width() != got {
        return Err(Error::WidthMismatch { expected: c.width(), got });
    }
    Ok(())
}

pub fn apply_statevector(c: &Circuit, s: &StateVector) -> Result<StateVector> {
    check_width(c, s.width)?;
    let mut out = s.clone();
    for g in c.gates() {
        apply_gate_raw(g, out.amps.as_mut_slice(), s.width, 0, false);
    }
    Ok(out)
}

pub fn circuit_unitary(c: &Circuit) -> Result<CMat> {
    linalg::check_dense(c.width())?;
    let mut u = linalg::identity(1 << c.width());
    for g in c.gates() {
        apply_gate_raw(g, u.as_mut_slice(), c.width(), 0, false);
    }
    Ok(u)
}

/// Evolves `rho` through `c` under `noise`. Per-gate noise requires a fully
/// decomposed circuit; global noise uses `p = 1 − (1 − p_tq)^{N_TQ}`.
pub fn apply_density(c: &Circuit, rho: &DensityMatrix, noise: &NoiseModel) -> Result<DensityMatrix> {
    check_width(c, rho.width)?;
    noise.validate()?;
    if noise.mode != NoiseMode::None && noise.p_tq > 0.0 {
        if let Some(g) = c.gates().iter().find(|g| g.is_composite()) {
            return Err(Error::DecompositionRequired(g.name().to_string()));
        }
    }
    let width = rho.width;
    let mut out = rho.clone();
    for g in c.gates() {
        conjugate_matrix(g, &mut out.rho, width);
        if noise.mode == NoiseMode::PerGate && g.is_two_qubit() && noise.p_tq > 0.0 {
            let qs = g.qubits();
            noise::pair_depolarize(&mut out.rho, width, qs[0], qs[1], noise.p_tq);
        }
    }
    if noise.mode == NoiseMode::Global && noise.p_tq > 0.0 {
        let n_tq = count_two_qubit_gates(c)?;
        let p = 1.0 - (1.0 - noise.p_tq).powi(n_tq as i32);
        out = noise::global_depolarize(&out, p)?;
    }
    Ok(out)
}

/// Outcome counts indexed by ancilla bitstring, each split into `[+1, −1]`
/// eigenvalue outcomes of the measured Pauli.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasurementCounts {
    pub n_ancilla: usize,
    pub counts: Vec<[u64; 2]>,
}

impl MeasurementCounts {
    pub fn shots(&self) -> u64 {
        self.counts.iter().map(|c| c[0] + c[1]).sum()
    }

    /// Counts with the ancilla register reading all zeros.
    pub fn post_selected(&self) -> [u64; 2] {
        self.counts[0]
    }
}

/// Exact Born probabilities of (ancilla bitstring, Pauli eigenvalue) for a
/// Pauli observable on the system register.
pub(crate) fn pauli_outcome_probabilities(rho: &DensityMatrix, n_ancilla: usize, observable: &PauliString) -> Result<Vec<[f64; 2]>> {
    let width = rho.width;
    if n_ancilla + observable.len() != width {
        return Err(Error::WidthMismatch { expected: width, got: n_ancilla + observable.len() });
    }
    let mut m = rho.rho.clone();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut support = 0usize;
    for (k, &p) in observable.letters().iter().enumerate() {
        let q = n_ancilla + k;
        let rotation = match p {
            Pauli::I => continue,
            Pauli::X => Some(Gate::Had { q }),
            Pauli::Y => Some(Gate::Rx { q, theta: half_pi }),
            Pauli::Z => None,
        };
        if let Some(g) = rotation {
            conjugate_matrix(&g, &mut m, width);
        }
        support |= 1 << (width - 1 - q);
    }
    let n_sys = observable.len();
    let mut probs = vec![[0.0; 2]; 1 << n_ancilla];
    for i in 0..(1usize << width) {
        let p = m[(i, i)].re.max(0.0);
        let anc = i >> n_sys;
        let outcome = ((i & support).count_ones() % 2) as usize;
        probs[anc][outcome] += p;
    }
    Ok(probs)
}

/// Draws `shots` joint outcomes of the ancilla computational-basis readout
/// and the system Pauli measurement from their exact distribution.
pub fn sample_pauli_measurement<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    n_ancilla: usize,
    observable: &PauliString,
    shots: u64,
    rng: &mut R,
) -> Result<MeasurementCounts> {
    if shots == 0 {
        return Err(Error::invalid("shots must be at least 1"));
    }
    let probs = pauli_outcome_probabilities(rho, n_ancilla, observable)?;
    let flat: Vec<f64> = probs.iter().flat_map(|p| p.iter().copied()).collect();
    let drawn = multinomial(shots, &flat, rng)?;
    let counts = drawn.chunks(2).map(|c| [c[0], c[1]]).collect();
    Ok(MeasurementCounts { n_ancilla, counts })
}

/// Multinomial draw by sequential conditional binomials.
pub(crate) fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("outcome distribution has zero mass".into()));
    }
    let mut out = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass = total;
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() || mass <= 0.0 {
            out[k] = remaining;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, q).map_err(|e| Error::Numerical(e.to_string()))?.sample(rng);
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_circuit(seed: u64) -> Circuit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Circuit::new(1, 2);
        for _ in 0..3 {
            let q = rng.random_range(0..3);
            let r = (q + 1 + rng.random_range(0..2)) % 3;
            let th: f64 = rng.random_range(-3.0..3.0);
            let g = match rng.random_range(0..6) {
                0 => Gate::Rx { q, theta: th },
                1 => Gate::Rz { q, theta: th },
                2 => Gate::Rzz { q0: q, q1: r, theta: th },
                3 => Gate::Cz { q0: q, q1: r },
                4 => Gate::Had { q },
                _ => Gate::Ry { q, theta: th },
            };
            c.push(g).unwrap();
        }
        c
    }

    #[test]
    fn empty_circuit_is_identity() {
        let c = Circuit::new(0, 2);
        let s = StateVector::plus(2).unwrap();
        assert_eq!(apply_statevector(&c, &s).unwrap(), s);
        assert!(linalg::max_abs_diff(&circuit_unitary(&c).unwrap(), &linalg::identity(4)) < 1e-15);
    }

    #[test]
    fn hadamard_on_zero() {
        let c = Circuit::from_gates(0, 1, vec![Gate::Had { q: 0 }]).unwrap();
        let out = apply_statevector(&c, &StateVector::zero(1).unwrap()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((out.amplitudes()[0] - h).norm() < 1e-15 && (out.amplitudes()[1] - h).norm() < 1e-15);
        let hh = Circuit::from_gates(0, 1, vec![Gate::Had { q: 0 }, Gate::Had { q: 0 }]).unwrap();
        assert!(linalg::max_abs_diff(&circuit_unitary(&hh).unwrap(), &linalg::identity(2)) < 1e-15);
    }

    #[test]
    fn statevector_matches_unitary() {
        for seed in 0..20 {
            let c = random_circuit(seed);
            let s = StateVector::plus(3).unwrap();
            let direct = apply_statevector(&c, &s).unwrap();
            let via_u = circuit_unitary(&c).unwrap() * s.amplitudes();
            assert!((direct.amplitudes() - via_u).norm() < 1e-10);
            assert!((direct.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn single_qubit_gate_matrices() {
        let th = 0.81;
        for (g, p) in [(Gate::Rx { q: 0, theta: th }, Pauli::X), (Gate::Ry { q: 0, theta: th }, Pauli::Y), (Gate::Rz { q: 0, theta: th }, Pauli::Z)] {
            let c = Circuit::from_gates(0, 1, vec![g]).unwrap();
            let expected = linalg::expm_hermitian(&(p.matrix() * C64::from(0.5)), th);
            assert!(linalg::max_abs_diff(&circuit_unitary(&c).unwrap(), &expected) < 1e-14);
        }
    }

    #[test]
    fn mcpauli_matches_projector_sum() {
        let g = Gate::McPauli { controls: vec![1, 0], pattern: vec![true, false], targets: vec![3, 2], paulis: vec![Pauli::Y, Pauli::X], negate: true };
        let c = Circuit::from_gates(2, 2, vec![g]).unwrap();
        // controls read q1=1, q0=0 -> ancilla index 01; P = X on q2, Y on q3
        let p = linalg::kron(&Pauli::X.matrix(), &Pauli::Y.matrix());
        let mut expected = linalg::identity(16);
        for r in 0..4 {
            for col in 0..4 {
                expected[(4 + r, 4 + col)] = -p[(r, col)];
            }
        }
        assert!(linalg::max_abs_diff(&circuit_unitary(&c).unwrap(), &expected) < 1e-15);
    }

    #[test]
    fn density_without_noise_is_conjugation() {
        for seed in 0..10 {
            let c = random_circuit(seed);
            let rho = StateVector::plus(3).unwrap().to_density();
            let out = apply_density(&c, &rho, &NoiseModel::noiseless()).unwrap();
            let u = circuit_unitary(&c).unwrap();
            let expected = &u * rho.matrix() * u.adjoint();
            assert!(linalg::max_abs_diff(out.matrix(), &expected) < 1e-10);
        }
    }

    #[test]
    fn sampling_all_zero_state() {
        let rho = StateVector::zero(3).unwrap().to_density();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let counts = sample_pauli_measurement(&rho, 2, &"Z".parse().unwrap(), 500, &mut rng).unwrap();
        assert_eq!(counts.post_selected(), [500, 0]);
        assert_eq!(counts.shots(), 500);
    }

    #[test]
    fn sampling_matches_born_rule() {
        let c = random_circuit(7);
        let rho = apply_density(&c, &StateVector::plus(3).unwrap().to_density(), &NoiseModel::noiseless()).unwrap();
        let obs: PauliString = "YX".parse().unwrap();
        let probs = pauli_outcome_probabilities(&rho, 1, &obs).unwrap();
        let shots = 10_000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let counts = sample_pauli_measurement(&rho, 1, &obs, shots, &mut rng).unwrap();
        for (p, c) in probs.iter().zip(&counts.counts) {
            for k in 0..2 {
                let se = (p[k] * (1.0 - p[k]) / shots as f64).sqrt().max(1e-6);
                assert!((c[k] as f64 / shots as f64 - p[k]).abs() < 5.0 * se);
            }
        }
        // exact expectation oracle for the ancilla-zero branch
        let full = PauliString::identity(1).tensor(&obs).to_matrix().unwrap();
        let mut proj = linalg::identity(8);
        for i in 4..8 {
            proj[(i, i)] = ZERO;
        }
        let pbar = linalg::trace_product(&(&proj * &full), rho.matrix()).re;
        let ibar = linalg::trace_product(&proj, rho.matrix()).re;
        assert!(((probs[0][0] - probs[0][1]) - pbar).abs() < 1e-12);
        assert!(((probs[0][0] + probs[0][1]) - ibar).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_reproducible() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let obs: PauliString = "Z".parse().unwrap();
        let a = sample_pauli_measurement(&rho, 1, &obs, 100, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_pauli_measurement(&rho, 1, &obs, 100, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixed_state_mean_vanishes() {
        let rho = DensityMatrix::maximally_mixed(1).unwrap();
        let counts = sample_pauli_measurement(&rho, 0, &"Z".parse().unwrap(), 200_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let [plus, minus] = counts.post_selected();
        assert!(((plus as f64 - minus as f64) / 200_000.0).abs() < 0.015);
    }
}
