//! Exact block encodings `W = A†BA` by linear combination of unitaries, and
//! multiplexor compilation of the select oracle `B`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::synth::{self, DiagonalScheme};
use crate::circuits::{circuit_unitary, count_two_qubit_gates, Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::operators::{Pauli, PauliString, PauliSum};

/// Largest ancilla register tried when splitting terms into equal weights.
const MAX_PADDED_ANCILLAS: usize = 10;
/// Cap on slot arrangements examined by [`optimize_slot_order`].
pub const MAX_ARRANGEMENTS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcuPlan {
    pub n: usize,
    pub a: usize,
    /// `√(|c_ℓ|/c)` for slot `ℓ`; slots `K..2^a` are empty.
    pub amplitudes: Vec<f64>,
    /// `+1` or `−1`.
    pub signs: Vec<i8>,
    pub paulis: Vec<PauliString>,
    pub c: f64,
}

impl LcuPlan {
    pub fn k(&self) -> usize {
        self.paulis.len()
    }

    fn is_uniform(&self) -> bool {
        self.k() == 1 << self.a && self.amplitudes.iter().all(|&x| (x - self.amplitudes[0]).abs() < 1e-12)
    }

    fn permuted(&self, order: &[usize]) -> LcuPlan {
        LcuPlan {
            n: self.n,
            a: self.a,
            amplitudes: order.iter().map(|&i| self.amplitudes[i]).collect(),
            signs: order.iter().map(|&i| self.signs[i]).collect(),
            paulis: order.iter().map(|&i| self.paulis[i].clone()).collect(),
            c: self.c,
        }
    }
}

fn ceil_log2(k: usize) -> usize {
    if k <= 1 {
        0
    } else {
        (usize::BITS - (k - 1).leading_zeros()) as usize
    }
}

/// Builds the prepare/select data for `h_tilde`. With `pad_equal_weights`,
/// terms are split into copies of a common weight `c/2^a` so that the
/// prepare operator is `HAD^{⊗a}`.
pub fn lcu_plan(h_tilde: &PauliSum, pad_equal_weights: bool) -> Result<LcuPlan> {
    let terms = h_tilde.canonical();
    if terms.is_empty() {
        return Err(Error::invalid("LCU plan of an empty Hamiltonian"));
    }
    let c = terms.one_norm();
    if !(c > 0.0) {
        return Err(Error::invalid("LCU plan needs a nonzero coefficient sum"));
    }
    let mut weights: Vec<f64> = Vec::new();
    let mut signs = Vec::new();
    let mut paulis = Vec::new();
    if pad_equal_weights {
        let k = terms.terms().len();
        let a = (ceil_log2(k)..=MAX_PADDED_ANCILLAS)
            .find(|&a| {
                let w = c / (1u64 << a) as f64;
                terms.terms().iter().all(|(x, _)| {
                    let r = x.abs() / w;
                    (r - r.round()).abs() < 1e-9 && r.round() >= 1.0
                })
            })
            .ok_or_else(|| Error::invalid("coefficients admit no equal-weight padding"))?;
        let w = c / (1u64 << a) as f64;
        for (x, p) in terms.terms() {
            for _ in 0..(x.abs() / w).round() as usize {
                weights.push(w);
                signs.push(if *x < 0.0 { -1 } else { 1 });
                paulis.push(p.clone());
            }
        }
        debug_assert_eq!(weights.len(), 1 << a);
    } else {
        for (x, p) in terms.terms() {
            weights.push(x.abs());
            signs.push(if *x < 0.0 { -1 } else { 1 });
            paulis.push(p.clone());
        }
    }
    let a = ceil_log2(paulis.len());
    Ok(LcuPlan { n: terms.n(), a, amplitudes: weights.iter().map(|w| (w / c).sqrt()).collect(), signs, paulis, c })
}

/// Prepare operator `A|0^a⟩ = Σ_ℓ amplitude_ℓ |ℓ⟩` (qubit 0 most significant).
pub fn prepare_circuit(plan: &LcuPlan) -> Result<Circuit> {
    let mut c = Circuit::new(plan.a, plan.n);
    if plan.a == 0 {
        return Ok(c);
    }
    if plan.is_uniform() {
        for q in 0..plan.a {
            c.push(Gate::Had { q })?;
        }
        return Ok(c);
    }
    let mut amps = plan.amplitudes.clone();
    amps.resize(1 << plan.a, 0.0);
    for level in 0..plan.a {
        let block = 1usize << (plan.a - level);
        let angles: Vec<f64> = (0..1usize << level)
            .map(|prefix| {
                let lo = &amps[prefix * block..prefix * block + block / 2];
                let hi = &amps[prefix * block + block / 2..(prefix + 1) * block];
                let norm = |s: &[f64]| s.iter().map(|x| x * x).sum::<f64>().sqrt();
                2.0 * norm(hi).atan2(norm(lo))
            })
            .collect();
        let controls: Vec<usize> = (0..level).collect();
        for g in synth::uniformly_controlled_ry(&controls, level, &angles) {
            c.push(g)?;
        }
    }
    Ok(c)
}

fn slot_pattern(a: usize, slot: usize) -> Vec<bool> {
    (0..a).map(|i| slot >> (a - 1 - i) & 1 == 1).collect()
}

/// Select oracle `B = Σ_ℓ |ℓ⟩⟨ℓ| ⊗ sign_ℓ P_ℓ` with one multi-controlled
/// Pauli per slot; empty slots act as identity.
pub fn naive_select_circuit(plan: &LcuPlan) -> Result<Circuit> {
    let mut c = Circuit::new(plan.a, plan.n);
    for (slot, (p, &s)) in plan.paulis.iter().zip(&plan.signs).enumerate() {
        if p.is_identity() && s > 0 {
            continue;
        }
        c.push(Gate::McPauli {
            controls: (0..plan.a).collect(),
            pattern: slot_pattern(plan.a, slot),
            targets: (plan.a..plan.a + plan.n).collect(),
            paulis: p.letters().to_vec(),
            negate: s < 0,
        })?;
    }
    Ok(c)
}

/// Two-qubit count of the select oracle under the reference decomposition
/// ([`synth::decompose_naive`]): every Pauli letter costs a Gray-code `C^aZ`
/// (`2^{a+1} − 2` gates) and every negative sign a `C^{a−1}Z` on the
/// ancillas (`2^a − 2` gates).
pub fn naive_select_gate_count(plan: &LcuPlan) -> Result<usize> {
    let b = naive_select_circuit(plan)?;
    let expanded = Circuit::from_gates(plan.a, plan.n, synth::decompose_naive(b.gates()))?;
    count_two_qubit_gates(&expanded)
}

fn letter_bits(p: Pauli) -> (bool, bool) {
    (p.has_x(), p.has_z())
}

/// Compiles the select oracle into native gates. Each Pauli is written as
/// `i^{u·v} X^u Z^v`; the `Z^v`, sign, and `i^{u·v}` factors form one
/// diagonal multiplexor over the ancillas and the affected system qubits, and
/// the `X^u` factors another in the Hadamard-rotated basis. Both diagonals are
/// synthesized with Gray-code multiplexors or parity ladders, whichever is
/// cheaper, and the result is peephole-optimized. No ancillas are added.
pub fn multiplexor_compile(plan: &LcuPlan) -> Result<Circuit> {
    let (a, n) = (plan.a, plan.n);
    let bits: Vec<Vec<(bool, bool)>> = plan.paulis.iter().map(|p| p.letters().iter().map(|&l| letter_bits(l)).collect()).collect();
    let z_support: Vec<usize> = (0..n).filter(|&j| bits.iter().any(|b| b[j].1)).collect();
    let x_support: Vec<usize> = (0..n).filter(|&j| bits.iter().any(|b| b[j].0)).collect();

    let table = |support: &[usize], phase: &dyn Fn(usize, &[bool]) -> f64| -> (Vec<usize>, Vec<f64>) {
        let qubits: Vec<usize> = (0..a).chain(support.iter().map(|j| a + j)).collect();
        let m = support.len();
        let phases = (0..1usize << (a + m))
            .map(|idx| {
                let slot = idx >> m;
                if slot >= plan.k() {
                    return 0.0;
                }
                let xs: Vec<bool> = (0..m).map(|i| idx >> (m - 1 - i) & 1 == 1).collect();
                phase(slot, &xs)
            })
            .collect();
        (qubits, phases)
    };

    let (q1, d1) = table(&z_support, &|slot, xs| {
        let b = &bits[slot];
        let mut phi = if plan.signs[slot] < 0 { PI } else { 0.0 };
        phi += FRAC_PI_2 * b.iter().filter(|(u, v)| *u && *v).count() as f64;
        for (i, &j) in z_support.iter().enumerate() {
            if b[j].1 && xs[i] {
                phi += PI;
            }
        }
        phi
    });
    let (q2, d2) = table(&x_support, &|slot, xs| {
        let b = &bits[slot];
        x_support.iter().enumerate().filter(|&(i, &j)| b[j].0 && xs[i]).count() as f64 * PI
    });

    let mut gates = synth::synthesize_diagonal(&q1, &d1, DiagonalScheme::Auto);
    let hadamards: Vec<Gate> = x_support.iter().map(|&j| Gate::Had { q: a + j }).collect();
    gates.extend(hadamards.iter().cloned());
    gates.extend(synth::synthesize_diagonal(&q2, &d2, DiagonalScheme::Auto));
    gates.extend(hadamards);
    Circuit::from_gates(a, n, synth::peephole(&gates))
}

/// Distinct arrangements of a multiset, in lexicographic order, up to `cap`.
fn arrangements(keys: &[usize], cap: usize) -> Vec<Vec<usize>> {
    fn rec(counts: &mut [usize], current: &mut Vec<usize>, len: usize, out: &mut Vec<Vec<usize>>, cap: usize) {
        if out.len() >= cap {
            return;
        }
        if current.len() == len {
            out.push(current.clone());
            return;
        }
        for k in 0..counts.len() {
            if counts[k] > 0 {
                counts[k] -= 1;
                current.push(k);
                rec(counts, current, len, out, cap);
                current.pop();
                counts[k] += 1;
            }
        }
    }
    let distinct = keys.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0; distinct];
    keys.iter().for_each(|&k| counts[k] += 1);
    let mut out = Vec::new();
    rec(&mut counts, &mut Vec::new(), keys.len(), &mut out, cap);
    out
}

/// Reorders the slots of `plan` to minimize the two-qubit count of the
/// compiled block encoding. Identical terms are interchangeable, so only
/// distinct arrangements are tried, at most [`MAX_ARRANGEMENTS`].
pub fn optimize_slot_order(plan: &LcuPlan) -> Result<LcuPlan> {
    let mut classes: Vec<(String, i8, u64)> = Vec::new();
    let keys: Vec<usize> = (0..plan.k())
        .map(|i| {
            let id = (plan.paulis[i].to_string(), plan.signs[i], plan.amplitudes[i].to_bits());
            match classes.iter().position(|c| *c == id) {
                Some(k) => k,
                None => {
                    classes.push(id);
                    classes.len() - 1
                }
            }
        })
        .collect();
    let representatives: Vec<usize> = (0..classes.len()).map(|k| keys.iter().position(|&x| x == k).expect("class member")).collect();
    let candidates = arrangements(&keys, MAX_ARRANGEMENTS);
    let scored: Vec<(usize, usize)> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, arr)| {
            let order: Vec<usize> = arr.iter().map(|&k| representatives[k]).collect();
            let cost = compiled_block_encoding_circuit(&plan.permuted(&order))
                .and_then(|c| count_two_qubit_gates(&c))
                .unwrap_or(usize::MAX);
            (cost, i)
        })
        .collect();
    let best = scored.iter().min().map(|&(_, i)| i).unwrap_or(0);
    let order: Vec<usize> = candidates.get(best).map_or_else(|| (0..plan.k()).collect(), |arr| arr.iter().map(|&k| representatives[k]).collect());
    Ok(plan.permuted(&order))
}

fn compiled_block_encoding_circuit(plan: &LcuPlan) -> Result<Circuit> {
    let prep = prepare_circuit(plan)?;
    let mut gates = prep.gates().to_vec();
    gates.extend(multiplexor_compile(plan)?.gates().iter().cloned());
    gates.extend(prep.inverse().gates().iter().cloned());
    Circuit::from_gates(plan.a, plan.n, synth::peephole(&gates))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEncoding {
    pub circuit: Circuit,
    pub a: usize,
    pub epsilon_be: f64,
    /// `W² = I`.
    pub is_reflection: bool,
    /// The block encodes `H̃ / normalization`.
    pub normalization: f64,
}

impl BlockEncoding {
    /// The `⟨0^a| W |0^a⟩` block.
    pub fn block(&self) -> Result<CMat> {
        block_of(&self.circuit)
    }
}

pub fn block_of(c: &Circuit) -> Result<CMat> {
    let u = circuit_unitary(c)?;
    let dim = 1usize << c.n_system();
    Ok(u.view((0, 0), (dim, dim)).into_owned())
}

fn plan_target(plan: &LcuPlan) -> Result<CMat> {
    let mut m = CMat::zeros(1 << plan.n, 1 << plan.n);
    for ((amp, &s), p) in plan.amplitudes.iter().zip(&plan.signs).zip(&plan.paulis) {
        m += p.to_matrix()? * C64::from(amp * amp * s as f64);
    }
    Ok(m)
}

fn finish(circuit: Circuit, plan: &LcuPlan) -> Result<BlockEncoding> {
    let block = block_of(&circuit)?;
    let epsilon_be = linalg::frobenius_distance(&block, &plan_target(plan)?);
    Ok(BlockEncoding { circuit, a: plan.a, epsilon_be, is_reflection: true, normalization: plan.c })
}

/// `W = A†BA` with the select oracle kept as multi-controlled Paulis.
pub fn build_lcu_circuit(plan: &LcuPlan) -> Result<BlockEncoding> {
    let prep = prepare_circuit(plan)?;
    let mut w = prep.clone();
    w.append(&naive_select_circuit(plan)?)?;
    w.append(&prep.inverse())?;
    finish(w, plan)
}

/// Fully native `W = A†BA` with the slot order chosen by
/// [`optimize_slot_order`] and the select oracle compiled by
/// [`multiplexor_compile`].
pub fn build_compiled_lcu(plan: &LcuPlan) -> Result<(BlockEncoding, LcuPlan)> {
    let ordered = optimize_slot_order(plan)?;
    let circuit = compiled_block_encoding_circuit(&ordered)?;
    Ok((finish(circuit, &ordered)?, ordered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{build_ising_chain, rescale, triangle_bounds};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn four_site_tilde() -> PauliSum {
        let h = build_ising_chain(4, 1.0, &[0.0, 1.0, 0.0, 0.0], 0.0).unwrap();
        rescale(&h, triangle_bounds(&h).unwrap(), 0.0, 1.0).unwrap().h_tilde
    }

    fn sum(n: usize, terms: &[(f64, &str)]) -> PauliSum {
        PauliSum::new(n, terms.iter().map(|(c, s)| (*c, s.parse().unwrap())).collect()).unwrap()
    }

    #[test]
    fn single_term_plan() {
        let plan = lcu_plan(&sum(1, &[(1.0, "X")]), false).unwrap();
        assert_eq!((plan.a, plan.k(), plan.c), (0, 1, 1.0));
        let be = build_lcu_circuit(&plan).unwrap();
        assert_eq!(be.circuit.width(), 1);
        assert!(be.epsilon_be < 1e-15);
        assert_eq!(naive_select_gate_count(&plan).unwrap(), 0);
        let compiled = multiplexor_compile(&plan).unwrap();
        assert_eq!(count_two_qubit_gates(&compiled).unwrap(), 0);
    }

    #[test]
    fn two_term_symmetric_plan() {
        let plan = lcu_plan(&sum(1, &[(0.5, "X"), (-0.5, "Z")]), false).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!(plan.amplitudes.iter().all(|x| (x - h).abs() < 1e-15));
        assert_eq!(plan.signs, vec![1, -1]);
        assert_eq!(plan.c, 1.0);
    }

    #[test]
    fn four_site_padding() {
        let plan = lcu_plan(&four_site_tilde(), true).unwrap();
        assert_eq!(plan.a, 3);
        assert_eq!(plan.k(), 8);
        assert!(plan.amplitudes.iter().all(|x| (x * x - 0.125).abs() < 1e-15));
        let ids = plan.paulis.iter().filter(|p| p.is_identity()).count();
        assert_eq!(ids, 4);
        for (p, s) in plan.paulis.iter().zip(&plan.signs) {
            assert_eq!(*s, if p.is_identity() { 1 } else { -1 });
        }
        let prep = prepare_circuit(&plan).unwrap();
        assert!(prep.gates().iter().all(|g| matches!(g, Gate::Had { .. })));
        assert_eq!(lcu_plan(&sum(1, &[(0.25, "X"), (0.75, "Z")]), true).unwrap().a, 2);
        assert!(lcu_plan(&sum(1, &[(1.0 / 3.0f64.sqrt(), "X"), (0.2, "Z")]), true).is_err());
    }

    #[test]
    fn exact_block_for_four_site() {
        let plan = lcu_plan(&four_site_tilde(), true).unwrap();
        let be = build_lcu_circuit(&plan).unwrap();
        assert!(be.epsilon_be < 1e-10);
        let target = four_site_tilde().to_matrix().unwrap();
        assert!(linalg::max_abs_diff(&be.block().unwrap(), &target) < 1e-12);
        let (compiled, _) = build_compiled_lcu(&plan).unwrap();
        assert!(compiled.epsilon_be < 1e-10);
        let n_tq = count_two_qubit_gates(&compiled.circuit).unwrap();
        eprintln!("compiled two-qubit count {n_tq}");
        assert!(n_tq <= 44);
    }

    #[test]
    fn unpadded_plan_encodes_scaled_operator() {
        let h = sum(2, &[(1.2, "XZ"), (-0.8, "YY"), (0.4, "IZ"), (-0.3, "II")]);
        let plan = lcu_plan(&h, false).unwrap();
        assert!((plan.c - 2.7).abs() < 1e-12);
        let be = build_lcu_circuit(&plan).unwrap();
        let expected = h.to_matrix().unwrap() / C64::from(plan.c);
        assert!(linalg::max_abs_diff(&be.block().unwrap(), &expected) < 1e-12);
        assert!(be.epsilon_be < 1e-12);
        let (compiled, _) = build_compiled_lcu(&plan).unwrap();
        assert!(linalg::max_abs_diff(&compiled.block().unwrap(), &expected) < 1e-10);
    }

    #[test]
    fn compiled_select_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let letters = ['I', 'X', 'Y', 'Z'];
        for trial in 0..40 {
            let n = 1 + trial % 3;
            let k = 1 + rng.random_range(0..8);
            let terms: Vec<(f64, String)> = (0..k)
                .map(|_| {
                    let s: String = (0..n).map(|_| letters[rng.random_range(0..4)]).collect();
                    (rng.random_range(-1.0..1.0), s)
                })
                .collect();
            let plan = LcuPlan {
                n,
                a: ceil_log2(k),
                amplitudes: vec![1.0 / (k as f64).sqrt(); k],
                signs: terms.iter().map(|(c, _)| if *c < 0.0 { -1 } else { 1 }).collect(),
                paulis: terms.iter().map(|(_, s)| s.parse().unwrap()).collect(),
                c: 1.0,
            };
            let naive = circuit_unitary(&naive_select_circuit(&plan).unwrap()).unwrap();
            let compiled = multiplexor_compile(&plan).unwrap();
            assert!(compiled.is_decomposed());
            let diff = linalg::max_abs_diff(&circuit_unitary(&compiled).unwrap(), &naive);
            assert!(diff < 1e-10, "trial {trial}: {diff}");
        }
    }

    #[test]
    fn naive_count_formula() {
        let plan = lcu_plan(&four_site_tilde(), true).unwrap();
        let letters: usize = plan.paulis.iter().map(|p| p.weight()).sum();
        let negatives = plan.signs.iter().filter(|&&s| s < 0).count();
        let a = plan.a as u32;
        let expected = letters * (2usize.pow(a + 1) - 2) + negatives * (2usize.pow(a) - 2);
        assert_eq!(naive_select_gate_count(&plan).unwrap(), expected);
        assert_eq!(expected, 122);
        // two single-qubit Paulis on one ancilla: one Gray-code CZ pair each
        let small = lcu_plan(&sum(1, &[(0.5, "X"), (0.5, "Z")]), false).unwrap();
        assert_eq!(naive_select_gate_count(&small).unwrap(), 4);
    }

    #[test]
    fn nonuniform_prepare_amplitudes() {
        let plan = lcu_plan(&sum(2, &[(0.1, "XI"), (0.2, "IZ"), (0.3, "ZZ"), (0.15, "YX"), (0.25, "XX")]), false).unwrap();
        let prep = prepare_circuit(&plan).unwrap();
        let u = circuit_unitary(&prep).unwrap();
        let dim_sys = 4;
        for (slot, amp) in plan.amplitudes.iter().enumerate() {
            assert!((u[(slot * dim_sys, 0)] - amp).norm() < 1e-12);
        }
        for slot in plan.k()..8 {
            assert!(u[(slot * dim_sys, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn arrangement_enumeration() {
        assert_eq!(arrangements(&[0, 0, 1], 100).len(), 3);
        assert_eq!(arrangements(&[0, 0, 0, 0, 1, 2, 3, 4], 10_000).len(), 1680);
        assert_eq!(arrangements(&[0, 1, 2, 3, 4, 5, 6, 7], 5000).len(), 5000);
    }
}
