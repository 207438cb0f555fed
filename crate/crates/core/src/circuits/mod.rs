//! Gate-level circuits over an ancilla register (qubits `0..a`) followed by a
//! system register (qubits `a..a+n`).
//!
//! Rotation conventions: `RX(θ) = e^{-iθX/2}`, `RY(θ) = e^{-iθY/2}`,
//! `RZ(θ) = e^{-iθZ/2}`, `RZZ(θ) = e^{-iθZ⊗Z/2}`.

mod noise;
mod sim;
pub mod synth;
mod text;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Pauli;

pub use noise::{global_depolarize, NoiseMode, NoiseModel};
pub use sim::{
    apply_density, apply_statevector, circuit_unitary, sample_pauli_measurement, DensityMatrix,
    MeasurementCounts, StateVector,
};
pub(crate) use sim::{apply_left, apply_right, conjugate_matrix, multinomial, pauli_outcome_probabilities};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    Rx { q: usize, theta: f64 },
    Ry { q: usize, theta: f64 },
    Rz { q: usize, theta: f64 },
    Had { q: usize },
    X { q: usize },
    Y { q: usize },
    Z { q: usize },
    Rzz { q0: usize, q1: usize, theta: f64 },
    Cz { q0: usize, q1: usize },
    /// Applies `±P` on `targets` when `controls` read `pattern`.
    McPauli {
        controls: Vec<usize>,
        pattern: Vec<bool>,
        targets: Vec<usize>,
        paulis: Vec<Pauli>,
        negate: bool,
    },
    /// `e^{iφ(2|0…0⟩⟨0…0| − I)}` on `qubits`.
    AncillaPhase { qubits: Vec<usize>, phi: f64 },
    /// Scalar `e^{iφ}`.
    GlobalPhase { phi: f64 },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::Rx { q, .. }
            | Gate::Ry { q, .. }
            | Gate::Rz { q, .. }
            | Gate::Had { q }
            | Gate::X { q }
            | Gate::Y { q }
            | Gate::Z { q } => vec![*q],
            Gate::Rzz { q0, q1, .. } | Gate::Cz { q0, q1 } => vec![*q0, *q1],
            Gate::McPauli { controls, targets, .. } => controls.iter().chain(targets).copied().collect(),
            Gate::AncillaPhase { qubits, .. } => qubits.clone(),
            Gate::GlobalPhase { .. } => Vec::new(),
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        matches!(self, Gate::Rzz { .. } | Gate::Cz { .. })
    }

    pub fn is_composite(&self) -> bool {
        matches!(self, Gate::McPauli { .. } | Gate::AncillaPhase { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::Rx { .. } => "RX",
            Gate::Ry { .. } => "RY",
            Gate::Rz { .. } => "RZ",
            Gate::Had { .. } => "HAD",
            Gate::X { .. } => "X",
            Gate::Y { .. } => "Y",
            Gate::Z { .. } => "Z",
            Gate::Rzz { .. } => "RZZ",
            Gate::Cz { .. } => "CZ",
            Gate::McPauli { .. } => "MCPAULI",
            Gate::AncillaPhase { .. } => "APHASE",
            Gate::GlobalPhase { .. } => "GPHASE",
        }
    }

    pub fn inverse(&self) -> Gate {
        match self {
            Gate::Rx { q, theta } => Gate::Rx { q: *q, theta: -theta },
            Gate::Ry { q, theta } => Gate::Ry { q: *q, theta: -theta },
            Gate::Rz { q, theta } => Gate::Rz { q: *q, theta: -theta },
            Gate::Rzz { q0, q1, theta } => Gate::Rzz { q0: *q0, q1: *q1, theta: -theta },
            Gate::AncillaPhase { qubits, phi } => Gate::AncillaPhase { qubits: qubits.clone(), phi: -phi },
            Gate::GlobalPhase { phi } => Gate::GlobalPhase { phi: -phi },
            g => g.clone(),
        }
    }

    fn validate(&self, width: usize) -> Result<()> {
        let qs = self.qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q >= width {
                return Err(Error::invalid(format!("{} acts on qubit {q} outside width {width}", self.name())));
            }
            if qs[..i].contains(&q) {
                return Err(Error::invalid(format!("{} repeats qubit {q}", self.name())));
            }
        }
        match self {
            Gate::McPauli { controls, pattern, targets, paulis, .. } => {
                if controls.len() != pattern.len() || targets.len() != paulis.len() {
                    return Err(Error::invalid("MCPAULI control/pattern or target/letter length mismatch"));
                }
            }
            Gate::AncillaPhase { qubits, .. } if qubits.is_empty() => {
                return Err(Error::invalid("APHASE needs at least one qubit"));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_ancilla: usize,
    n_system: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_ancilla: usize, n_system: usize) -> Self {
        Self { n_ancilla, n_system, gates: Vec::new() }
    }

    pub fn from_gates(n_ancilla: usize, n_system: usize, gates: Vec<Gate>) -> Result<Self> {
        let mut c = Self::new(n_ancilla, n_system);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn n_ancilla(&self) -> usize {
        self.n_ancilla
    }

    pub fn n_system(&self) -> usize {
        self.n_system
    }

    pub fn width(&self) -> usize {
        self.n_ancilla + self.n_system
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, g: Gate) -> Result<()> {
        g.validate(self.width())?;
        self.gates.push(g);
        Ok(())
    }

    /// Appends `other`, which must have the same register layout.
    pub fn append(&mut self, other: &Circuit) -> Result<()> {
        if other.n_ancilla != self.n_ancilla || other.n_system != self.n_system {
            return Err(Error::WidthMismatch { expected: self.width(), got: other.width() });
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    /// The inverse circuit: reversed order, each gate inverted.
    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_ancilla: self.n_ancilla,
            n_system: self.n_system,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }

    pub fn is_decomposed(&self) -> bool {
        !self.gates.iter().any(Gate::is_composite)
    }

    /// Replaces composite gates by native ones (see [`synth::decompose`]).
    pub fn decomposed(&self) -> Circuit {
        let gates = synth::decompose(&self.gates);
        Circuit { n_ancilla: self.n_ancilla, n_system: self.n_system, gates }
    }

    pub fn parse(s: &str) -> Result<Circuit> {
        text::parse(s)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        text::write(self, f)
    }
}

/// Number of RZZ and CZ gates.
pub fn count_two_qubit_gates(c: &Circuit) -> Result<usize> {
    if let Some(g) = c.gates().iter().find(|g| g.is_composite()) {
        return Err(Error::DecompositionRequired(g.name().to_string()));
    }
    Ok(c.gates().iter().filter(|g| g.is_two_qubit()).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff, C64};

    #[test]
    fn count_basics() {
        let mut c = Circuit::new(0, 3);
        assert_eq!(count_two_qubit_gates(&c).unwrap(), 0);
        c.push(Gate::Rzz { q0: 0, q1: 1, theta: 0.3 }).unwrap();
        c.push(Gate::Cz { q0: 1, q1: 2 }).unwrap();
        c.push(Gate::Had { q: 2 }).unwrap();
        assert_eq!(count_two_qubit_gates(&c).unwrap(), 2);
        c.push(Gate::AncillaPhase { qubits: vec![0, 1], phi: 0.2 }).unwrap();
        assert!(matches!(count_two_qubit_gates(&c), Err(Error::DecompositionRequired(_))));
    }

    #[test]
    fn validation() {
        let mut c = Circuit::new(1, 1);
        assert!(c.push(Gate::Had { q: 2 }).is_err());
        assert!(c.push(Gate::Cz { q0: 1, q1: 1 }).is_err());
        let bad = Gate::McPauli { controls: vec![0], pattern: vec![], targets: vec![1], paulis: vec![Pauli::X], negate: false };
        assert!(c.push(bad).is_err());
    }

    #[test]
    fn inverse_undoes() {
        let c = Circuit::from_gates(
            1,
            2,
            vec![
                Gate::Rx { q: 0, theta: 0.3 },
                Gate::Ry { q: 1, theta: -0.7 },
                Gate::Rzz { q0: 0, q1: 2, theta: 1.1 },
                Gate::AncillaPhase { qubits: vec![0], phi: 0.4 },
                Gate::McPauli { controls: vec![0], pattern: vec![true], targets: vec![1, 2], paulis: vec![Pauli::Y, Pauli::X], negate: true },
                Gate::GlobalPhase { phi: 0.9 },
            ],
        )
        .unwrap();
        let mut both = c.clone();
        both.append(&c.inverse()).unwrap();
        assert!(max_abs_diff(&circuit_unitary(&both).unwrap(), &identity(8)) < 1e-12);
    }

    #[test]
    fn rzz_matrix() {
        let th = 0.37;
        let c = Circuit::from_gates(0, 2, vec![Gate::Rzz { q0: 0, q1: 1, theta: th }]).unwrap();
        let u = circuit_unitary(&c).unwrap();
        let m = C64::from_polar(1.0, -th / 2.0);
        let p = C64::from_polar(1.0, th / 2.0);
        let expected = crate::linalg::CMat::from_diagonal(&crate::linalg::CVec::from_vec(vec![m, p, p, m]));
        assert!(max_abs_diff(&u, &expected) < 1e-15);
    }
}
