use serde::{Deserialize, Serialize};

use super::sim::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    None,
    /// Two-qubit depolarizing channel after every RZZ and CZ.
    PerGate,
    /// One global depolarizing channel with `p = 1 − (1 − p_tq)^{N_TQ}`.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p_tq: f64,
    pub mode: NoiseMode,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self { p_tq: 0.0, mode: NoiseMode::None }
    }

    pub fn per_gate(p_tq: f64) -> Self {
        Self { p_tq, mode: NoiseMode::PerGate }
    }

    pub fn global(p_tq: f64) -> Self {
        Self { p_tq, mode: NoiseMode::Global }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_tq) {
            return Err(Error::invalid(format!("p_tq = {} outside [0, 1)", self.p_tq)));
        }
        Ok(())
    }
}

/// `ρ → (1 − p)ρ + p·Tr_pair(ρ) ⊗ I/4` on qubits `q0, q1`.
pub(crate) fn pair_depolarize(rho: &mut CMat, width: usize, q0: usize, q1: usize, p: f64) {
    let dim = rho.nrows();
    let b0 = 1usize << (width - 1 - q0);
    let b1 = 1usize << (width - 1 - q1);
    let offsets = [0, b1, b0, b0 | b1];
    let keep = C64::from(1.0 - p);
    let mix = C64::from(p / 4.0);
    for r in (0..dim).filter(|r| r & (b0 | b1) == 0) {
        for c in (0..dim).filter(|c| c & (b0 | b1) == 0) {
            let tr: C64 = offsets.iter().map(|&o| rho[(r | o, c | o)]).sum();
            for &or in &offsets {
                for &oc in &offsets {
                    let v = rho[(r | or, c | oc)] * keep;
                    rho[(r | or, c | oc)] = if or == oc { v + mix * tr } else { v };
                }
            }
        }
    }
}

/// `(1 − p)ρ + p·I/2^w`.
pub fn global_depolarize(rho: &DensityMatrix, p: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("depolarizing probability {p} outside [0, 1]")));
    }
    let mut out = rho.clone();
    let dim = rho.matrix().nrows();
    let m = out.matrix_mut();
    *m *= C64::from(1.0 - p);
    let add = C64::from(p / dim as f64);
    for i in 0..dim {
        m[(i, i)] += add;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{apply_density, Circuit, Gate, StateVector};
    use crate::linalg::{self, max_abs_diff};

    #[test]
    fn global_endpoints() {
        let rho = StateVector::plus(2).unwrap().to_density();
        assert_eq!(global_depolarize(&rho, 0.0).unwrap(), rho);
        let mixed = global_depolarize(&rho, 1.0).unwrap();
        assert!(max_abs_diff(mixed.matrix(), &(linalg::identity(4) * C64::from(0.25))) < 1e-15);
        assert!(global_depolarize(&rho, 1.5).is_err());
    }

    #[test]
    fn global_purity() {
        let rho = StateVector::plus(5).unwrap().to_density();
        let p = 0.223;
        let dim = 32.0;
        let expected = (1.0 - p) * (1.0 - p) + 2.0 * (1.0 - p) * p / dim + p * p / dim;
        let out = global_depolarize(&rho, p).unwrap();
        assert!((out.purity() - expected).abs() < 1e-12);
    }

    #[test]
    fn mixed_state_is_fixed_point() {
        let c = Circuit::from_gates(0, 2, vec![Gate::Rzz { q0: 0, q1: 1, theta: 0.4 }]).unwrap();
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let out = apply_density(&c, &rho, &NoiseModel::per_gate(0.3)).unwrap();
        assert!(max_abs_diff(out.matrix(), rho.matrix()) < 1e-15);
    }

    #[test]
    fn single_noisy_rzz_formula() {
        let p = 2.577e-3;
        let c = Circuit::from_gates(0, 2, vec![Gate::Rzz { q0: 0, q1: 1, theta: std::f64::consts::FRAC_PI_2 }]).unwrap();
        let rho = StateVector::zero(2).unwrap().to_density();
        let out = apply_density(&c, &rho, &NoiseModel::per_gate(p)).unwrap();
        let ideal = apply_density(&c, &rho, &NoiseModel::noiseless()).unwrap();
        let expected = ideal.matrix() * C64::from(1.0 - p) + linalg::identity(4) * C64::from(p / 4.0);
        assert!(max_abs_diff(out.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn pair_channel_on_subsystem_matches_kraus_sum() {
        // (1/16) Σ_P P ρ P over two-qubit Paulis equals Tr_pair(ρ) ⊗ I/4
        let mut rng_state = 0.1f64;
        let mut next = || {
            rng_state = (rng_state * 9301.0 + 49297.0) % 233280.0;
            rng_state / 233280.0 - 0.5
        };
        let mut a = CMat::zeros(8, 8);
        for v in a.iter_mut() {
            *v = C64::new(next(), next());
        }
        let rho = &a * a.adjoint();
        let rho = &rho / rho.trace();
        let p = 0.37;
        let mut got = rho.clone();
        pair_depolarize(&mut got, 3, 0, 2, p);
        let letters = ['I', 'X', 'Y', 'Z'];
        let mut twirl = CMat::zeros(8, 8);
        for l0 in letters {
            for l2 in letters {
                let s: crate::operators::PauliString = format!("{l0}I{l2}").parse().unwrap();
                let m = s.to_matrix().unwrap();
                twirl += &m * &rho * &m / C64::from(16.0);
            }
        }
        let expected = &rho * C64::from(1.0 - p) + twirl * C64::from(p);
        assert!(max_abs_diff(&got, &expected) < 1e-14);
    }
}
