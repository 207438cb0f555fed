//! Line format: a `QUBITS <n_ancilla> <n_system>` header, then one gate per
//! line. Blank lines and `#` comments are ignored.
//!
//! ```text
//! RX 0 0.5
//! RZZ 0 1 -1.25
//! MCPAULI 0,1 10 2,3 XZ -
//! APHASE 0,1 0.75
//! ```
//!
//! Angles are written in shortest round-trip form, so `parse(write(c)) == c`.

use std::fmt;

use super::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::operators::Pauli;

fn list(qs: &[usize]) -> String {
    if qs.is_empty() {
        "-".to_string()
    } else {
        qs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
    }
}

fn bits(bs: &[bool]) -> String {
    if bs.is_empty() {
        "-".to_string()
    } else {
        bs.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

pub(super) fn write(c: &Circuit, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    writeln!(f, "QUBITS {} {}", c.n_ancilla(), c.n_system())?;
    for g in c.gates() {
        match g {
            Gate::Rx { q, theta } | Gate::Ry { q, theta } | Gate::Rz { q, theta } => {
                writeln!(f, "{} {q} {theta:?}", g.name())?
            }
            Gate::Had { q } | Gate::X { q } | Gate::Y { q } | Gate::Z { q } => writeln!(f, "{} {q}", g.name())?,
            Gate::Rzz { q0, q1, theta } => writeln!(f, "RZZ {q0} {q1} {theta:?}")?,
            Gate::Cz { q0, q1 } => writeln!(f, "CZ {q0} {q1}")?,
            Gate::McPauli { controls, pattern, targets, paulis, negate } => {
                let letters: String = if paulis.is_empty() { "-".into() } else { paulis.iter().map(|p| p.as_char()).collect() };
                writeln!(
                    f,
                    "MCPAULI {} {} {} {} {}",
                    list(controls),
                    bits(pattern),
                    list(targets),
                    letters,
                    if *negate { '-' } else { '+' }
                )?
            }
            Gate::AncillaPhase { qubits, phi } => writeln!(f, "APHASE {} {phi:?}", list(qubits))?,
            Gate::GlobalPhase { phi } => writeln!(f, "GPHASE {phi:?}")?,
        }
    }
    Ok(())
}

struct Line<'a> {
    no: usize,
    tokens: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.no, msg: msg.into() }
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.tokens.len() != n {
            return Err(self.err(format!("`{}` expects {} fields, found {}", self.tokens[0], n - 1, self.tokens.len() - 1)));
        }
        Ok(())
    }

    fn qubit(&self, k: usize) -> Result<usize> {
        self.tokens[k].parse().map_err(|_| self.err(format!("bad qubit index `{}`", self.tokens[k])))
    }

    fn angle(&self, k: usize) -> Result<f64> {
        let v: f64 = self.tokens[k].parse().map_err(|_| self.err(format!("bad angle `{}`", self.tokens[k])))?;
        if !v.is_finite() {
            return Err(self.err("angle must be finite"));
        }
        Ok(v)
    }

    fn qubits(&self, k: usize) -> Result<Vec<usize>> {
        if self.tokens[k] == "-" {
            return Ok(Vec::new());
        }
        self.tokens[k]
            .split(',')
            .map(|s| s.parse().map_err(|_| self.err(format!("bad qubit list `{}`", self.tokens[k]))))
            .collect()
    }
}

pub(super) fn parse(s: &str) -> Result<Circuit> {
    let mut circuit: Option<Circuit> = None;
    for (idx, raw) in s.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let line = Line { no: idx + 1, tokens: content.split_whitespace().collect() };
        let kind = line.tokens[0].to_ascii_uppercase();
        if kind == "QUBITS" {
            if circuit.is_some() {
                return Err(line.err("duplicate QUBITS header"));
            }
            line.expect_len(3)?;
            circuit = Some(Circuit::new(line.qubit(1)?, line.qubit(2)?));
            continue;
        }
        let c = circuit.as_mut().ok_or_else(|| line.err("missing QUBITS header"))?;
        let gate = match kind.as_str() {
            "RX" | "RY" | "RZ" => {
                line.expect_len(3)?;
                let (q, theta) = (line.qubit(1)?, line.angle(2)?);
                match kind.as_str() {
                    "RX" => Gate::Rx { q, theta },
                    "RY" => Gate::Ry { q, theta },
                    _ => Gate::Rz { q, theta },
                }
            }
            "HAD" | "X" | "Y" | "Z" => {
                line.expect_len(2)?;
                let q = line.qubit(1)?;
                match kind.as_str() {
                    "HAD" => Gate::Had { q },
                    "X" => Gate::X { q },
                    "Y" => Gate::Y { q },
                    _ => Gate::Z { q },
                }
            }
            "RZZ" => {
                line.expect_len(4)?;
                Gate::Rzz { q0: line.qubit(1)?, q1: line.qubit(2)?, theta: line.angle(3)? }
            }
            "CZ" => {
                line.expect_len(3)?;
                Gate::Cz { q0: line.qubit(1)?, q1: line.qubit(2)? }
            }
            "MCPAULI" => {
                line.expect_len(6)?;
                let pattern = if line.tokens[2] == "-" {
                    Vec::new()
                } else {
                    line.tokens[2]
                        .chars()
                        .map(|ch| match ch {
                            '0' => Ok(false),
                            '1' => Ok(true),
                            _ => Err(line.err(format!("bad control pattern `{}`", line.tokens[2]))),
                        })
                        .collect::<Result<Vec<_>>>()?
                };
                let paulis = if line.tokens[4] == "-" {
                    Vec::new()
                } else {
                    line.tokens[4]
                        .chars()
                        .map(|ch| Pauli::from_char(ch).ok_or_else(|| line.err(format!("bad Pauli letter `{ch}`"))))
                        .collect::<Result<Vec<_>>>()?
                };
                let negate = match line.tokens[5] {
                    "+" => false,
                    "-" => true,
                    other => return Err(line.err(format!("bad sign `{other}`"))),
                };
                Gate::McPauli { controls: line.qubits(1)?, pattern, targets: line.qubits(3)?, paulis, negate }
            }
            "APHASE" => {
                line.expect_len(3)?;
                Gate::AncillaPhase { qubits: line.qubits(1)?, phi: line.angle(2)? }
            }
            "GPHASE" => {
                line.expect_len(2)?;
                Gate::GlobalPhase { phi: line.angle(1)? }
            }
            other => return Err(line.err(format!("unknown gate `{other}`"))),
        };
        c.push(gate).map_err(|e| line.err(e.to_string()))?;
    }
    circuit.ok_or(Error::Parse { line: 0, msg: "empty circuit text".into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_kinds() {
        let c = Circuit::from_gates(
            2,
            2,
            vec![
                Gate::Rx { q: 0, theta: 0.1 + 0.2 },
                Gate::Ry { q: 1, theta: -1e-300 },
                Gate::Rz { q: 2, theta: std::f64::consts::PI },
                Gate::Had { q: 3 },
                Gate::X { q: 0 },
                Gate::Y { q: 1 },
                Gate::Z { q: 2 },
                Gate::Rzz { q0: 0, q1: 3, theta: 2.0f64.sqrt() },
                Gate::Cz { q0: 1, q1: 2 },
                Gate::McPauli { controls: vec![0, 1], pattern: vec![true, false], targets: vec![2, 3], paulis: vec![Pauli::X, Pauli::Y], negate: true },
                Gate::McPauli { controls: vec![], pattern: vec![], targets: vec![3], paulis: vec![Pauli::Z], negate: false },
                Gate::AncillaPhase { qubits: vec![0, 1], phi: -0.75 },
                Gate::GlobalPhase { phi: 1.0 / 3.0 },
            ],
        )
        .unwrap();
        let text = c.to_string();
        assert_eq!(Circuit::parse(&text).unwrap(), c);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Circuit::parse("QUBITS 0 2\nHAD 0\nFOO 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(matches!(Circuit::parse("HAD 0"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Circuit::parse("QUBITS 0 1\nRX 0 nan"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(Circuit::parse("QUBITS 0 1\nHAD 4"), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = Circuit::parse("# header\nQUBITS 1 1\n\nCZ 0 1  # entangle\n").unwrap();
        assert_eq!(c.gates(), &[Gate::Cz { q0: 0, q1: 1 }]);
    }
}
