//! Native-gate synthesis: diagonal phase operators, uniformly-controlled
//! rotations with Gray-code control order, decomposition of composite gates,
//! and a peephole optimizer.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use super::Gate;
use crate::operators::Pauli;

const ZERO_ANGLE: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalScheme {
    /// Per target group, the cheaper of a Gray-code multiplexor and parity ladders.
    Auto,
    /// Gray-code multiplexors only.
    GrayCode,
}

/// `CNOT(c → t)` as `HAD·CZ·HAD`.
pub fn cnot(c: usize, t: usize) -> [Gate; 3] {
    [Gate::Had { q: t }, Gate::Cz { q0: c, q1: t }, Gate::Had { q: t }]
}

/// In-place Walsh–Hadamard transform, normalized by `1/len`.
pub fn walsh_coefficients(values: &[f64]) -> Vec<f64> {
    let mut a = values.to_vec();
    let n = a.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (x, y) = (a[j], a[j + h]);
                a[j] = x + y;
                a[j + h] = x - y;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / n as f64;
    a.iter_mut().for_each(|v| *v *= scale);
    a
}

fn gray(j: usize) -> usize {
    j ^ (j >> 1)
}

fn gray_flip_bit(j: usize, k: usize) -> usize {
    if j + 1 == 1 << k {
        k - 1
    } else {
        (j + 1).trailing_zeros() as usize
    }
}

/// Uniformly-controlled `RY`: applies `RY(angles[c])` to `target` when the
/// controls (first control most significant) read `c`.
pub fn uniformly_controlled_ry(controls: &[usize], target: usize, angles: &[f64]) -> Vec<Gate> {
    let k = controls.len();
    assert_eq!(angles.len(), 1 << k, "one angle per control value");
    if k == 0 {
        return if angles[0].abs() > ZERO_ANGLE { vec![Gate::Ry { q: target, theta: angles[0] }] } else { Vec::new() };
    }
    let alpha = walsh_coefficients(angles);
    let mut out = Vec::new();
    for j in 0..(1usize << k) {
        let beta = alpha[gray(j)];
        if beta.abs() > ZERO_ANGLE {
            out.push(Gate::Ry { q: target, theta: beta });
        }
        let b = gray_flip_bit(j, k);
        out.extend(cnot(controls[k - 1 - b], target));
    }
    out
}

/// Parity terms `α_S Z_S` keyed by the sorted qubit set `S`.
type Terms = BTreeMap<Vec<usize>, f64>;

/// Synthesizes `Σ_x e^{iθ(x)}|x⟩⟨x|` over `qubits` (first qubit most
/// significant in the index of `phases`), including its global phase.
pub fn synthesize_diagonal(qubits: &[usize], phases: &[f64], scheme: DiagonalScheme) -> Vec<Gate> {
    let k = qubits.len();
    assert_eq!(phases.len(), 1 << k, "one phase per basis state");
    let alpha = walsh_coefficients(phases);
    let mut global = alpha[0];
    let mut terms = Terms::new();
    for (mask, &a) in alpha.iter().enumerate().skip(1) {
        let m = (a / PI).round();
        let reduced = a - m * PI;
        global += m * PI;
        if reduced.abs() > ZERO_ANGLE {
            let mut set: Vec<usize> = (0..k).filter(|i| mask >> (k - 1 - i) & 1 == 1).map(|i| qubits[i]).collect();
            set.sort_unstable();
            terms.insert(set, reduced);
        }
    }
    let mut out = Vec::new();
    while let Some(target) = terms.keys().flat_map(|s| s.iter().copied()).max() {
        let group: Terms = terms.iter().filter(|(s, _)| s.contains(&target)).map(|(s, a)| (s.clone(), *a)).collect();
        terms.retain(|s, _| !s.contains(&target));
        let mut controls: Vec<usize> = group.keys().flatten().copied().filter(|&q| q != target).collect();
        controls.sort_unstable();
        controls.dedup();
        let ladder_cost: usize = group.keys().map(|s| ladder_cost(s.len())).sum();
        let gray_cost = if controls.is_empty() { 0 } else { 1usize << controls.len() };
        if scheme == DiagonalScheme::GrayCode || gray_cost < ladder_cost {
            emit_gray_rz(&mut out, target, &controls, &group);
        } else {
            for (s, &a) in &group {
                emit_ladder(&mut out, s, a);
            }
        }
    }
    let global = wrap_angle(global);
    if global.abs() > ZERO_ANGLE {
        out.push(Gate::GlobalPhase { phi: global });
    }
    out
}

fn ladder_cost(w: usize) -> usize {
    match w {
        0 | 1 => 0,
        2 => 1,
        _ => 2 * w - 3,
    }
}

fn emit_ladder(out: &mut Vec<Gate>, s: &[usize], alpha: f64) {
    let theta = -2.0 * alpha;
    match s.len() {
        1 => out.push(Gate::Rz { q: s[0], theta }),
        2 => out.push(Gate::Rzz { q0: s[0], q1: s[1], theta }),
        w => {
            for i in 0..w - 2 {
                out.extend(cnot(s[i], s[i + 1]));
            }
            out.push(Gate::Rzz { q0: s[w - 2], q1: s[w - 1], theta });
            for i in (0..w - 2).rev() {
                out.extend(cnot(s[i], s[i + 1]));
            }
        }
    }
}

fn emit_gray_rz(out: &mut Vec<Gate>, target: usize, controls: &[usize], group: &Terms) {
    let k = controls.len();
    for j in 0..(1usize << k) {
        let g = gray(j);
        let mut key: Vec<usize> = (0..k).filter(|b| g >> b & 1 == 1).map(|b| controls[b]).collect();
        key.push(target);
        key.sort_unstable();
        if let Some(&a) = group.get(&key) {
            out.push(Gate::Rz { q: target, theta: -2.0 * a });
        }
        if k > 0 {
            out.extend(cnot(controls[gray_flip_bit(j, k)], target));
        }
    }
}

/// Maps an angle into `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let t = a.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

fn basis_change(targets: &[usize], paulis: &[Pauli]) -> (Vec<Gate>, Vec<Gate>) {
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for (&q, &p) in targets.iter().zip(paulis) {
        match p {
            Pauli::X => {
                pre.push(Gate::Had { q });
                post.push(Gate::Had { q });
            }
            Pauli::Y => {
                pre.push(Gate::Rx { q, theta: FRAC_PI_2 });
                post.push(Gate::Rx { q, theta: -FRAC_PI_2 });
            }
            _ => {}
        }
    }
    (pre, post)
}

fn bit(x: usize, k: usize, i: usize) -> bool {
    x >> (k - 1 - i) & 1 == 1
}

/// Phase table for `±Z_targets` controlled on `pattern`, over `controls ++ targets`.
fn controlled_parity_phases(pattern: &[bool], n_targets: usize, negate: bool) -> Vec<f64> {
    let nc = pattern.len();
    let k = nc + n_targets;
    (0..1usize << k)
        .map(|x| {
            let matched = (0..nc).all(|i| bit(x, k, i) == pattern[i]);
            let parity = (nc..k).filter(|&i| bit(x, k, i)).count() % 2 == 1;
            if matched && (parity ^ negate) {
                PI
            } else {
                0.0
            }
        })
        .collect()
}

fn decompose_mcpauli(
    controls: &[usize],
    pattern: &[bool],
    targets: &[usize],
    paulis: &[Pauli],
    negate: bool,
    scheme: DiagonalScheme,
) -> Vec<Gate> {
    let active: Vec<(usize, Pauli)> = targets.iter().copied().zip(paulis.iter().copied()).filter(|(_, p)| *p != Pauli::I).collect();
    let (ts, ps): (Vec<usize>, Vec<Pauli>) = active.into_iter().unzip();
    let mut out = Vec::new();
    match scheme {
        DiagonalScheme::Auto => {
            let (pre, post) = basis_change(&ts, &ps);
            let qubits: Vec<usize> = controls.iter().chain(&ts).copied().collect();
            out.extend(pre);
            out.extend(synthesize_diagonal(&qubits, &controlled_parity_phases(pattern, ts.len(), negate), scheme));
            out.extend(post);
        }
        DiagonalScheme::GrayCode => {
            for (&q, &p) in ts.iter().zip(&ps) {
                let (pre, post) = basis_change(&[q], &[p]);
                let qubits: Vec<usize> = controls.iter().copied().chain([q]).collect();
                out.extend(pre);
                out.extend(synthesize_diagonal(&qubits, &controlled_parity_phases(pattern, 1, false), scheme));
                out.extend(post);
            }
            if negate {
                out.extend(synthesize_diagonal(controls, &controlled_parity_phases(pattern, 0, true), scheme));
            }
        }
    }
    out
}

fn ancilla_phase_table(k: usize, phi: f64) -> Vec<f64> {
    (0..1usize << k).map(|x| if x == 0 { phi } else { -phi }).collect()
}

fn expand(gates: &[Gate], scheme: DiagonalScheme) -> Vec<Gate> {
    let mut out = Vec::with_capacity(gates.len());
    for g in gates {
        match g {
            Gate::McPauli { controls, pattern, targets, paulis, negate } => {
                out.extend(decompose_mcpauli(controls, pattern, targets, paulis, *negate, scheme))
            }
            Gate::AncillaPhase { qubits, phi } => {
                out.extend(synthesize_diagonal(qubits, &ancilla_phase_table(qubits.len(), *phi), scheme))
            }
            g => out.push(g.clone()),
        }
    }
    out
}

/// Expands composite gates into native gates and runs the peephole pass.
pub fn decompose(gates: &[Gate]) -> Vec<Gate> {
    peephole(&expand(gates, DiagonalScheme::Auto))
}

/// Reference decomposition without optimization: each Pauli letter of a
/// multi-controlled Pauli becomes its own Gray-code multi-controlled Z (plus
/// one for a negative sign), and no gates are merged or cancelled.
pub fn decompose_naive(gates: &[Gate]) -> Vec<Gate> {
    expand(gates, DiagonalScheme::GrayCode)
}

fn is_diagonal(g: &Gate) -> bool {
    matches!(g, Gate::Rz { .. } | Gate::Z { .. } | Gate::Rzz { .. } | Gate::Cz { .. } | Gate::GlobalPhase { .. } | Gate::AncillaPhase { .. })
}

fn same_pair(a: &Gate, b: &Gate) -> bool {
    let (mut x, mut y) = (a.qubits(), b.qubits());
    x.sort_unstable();
    y.sort_unstable();
    x == y
}

/// Index of the next live gate after `i` touching any qubit of gate `i`,
/// skipping diagonal gates when `skip_diagonal` is set.
fn next_touching(gates: &[Option<Gate>], i: usize, skip_diagonal: bool) -> Option<usize> {
    let qs = gates[i].as_ref()?.qubits();
    for (j, g) in gates.iter().enumerate().skip(i + 1) {
        let Some(g) = g else { continue };
        if g.qubits().iter().any(|q| qs.contains(q)) {
            if skip_diagonal && is_diagonal(g) && !same_pair(gates[i].as_ref()?, g) {
                continue;
            }
            return Some(j);
        }
    }
    None
}

fn angle_mut(g: &mut Gate) -> Option<&mut f64> {
    match g {
        Gate::Rx { theta, .. } | Gate::Ry { theta, .. } | Gate::Rz { theta, .. } | Gate::Rzz { theta, .. } => Some(theta),
        _ => None,
    }
}

/// Local rewrites preserving the unitary exactly: drops zero rotations,
/// cancels `HAD·HAD` and `CZ·CZ`, merges like rotations, rewrites
/// `HAD·RZ·HAD` to `RX`, and collects global phases into one trailing gate.
pub fn peephole(gates: &[Gate]) -> Vec<Gate> {
    let mut global = 0.0;
    let mut gs: Vec<Option<Gate>> = Vec::with_capacity(gates.len());
    for g in gates {
        match g {
            Gate::GlobalPhase { phi } => global += phi,
            g => gs.push(Some(g.clone())),
        }
    }
    loop {
        let mut changed = false;
        for i in 0..gs.len() {
            let Some(g) = gs[i].clone() else { continue };
            if let Some(t) = angle_mut(&mut g.clone()) {
                if t.abs() <= ZERO_ANGLE {
                    gs[i] = None;
                    changed = true;
                    continue;
                }
            }
            let diagonal = is_diagonal(&g);
            let Some(j) = next_touching(&gs, i, diagonal) else { continue };
            let h = gs[j].clone().expect("live gate");
            match (&g, &h) {
                (Gate::Had { q: a }, Gate::Had { q: b }) | (Gate::X { q: a }, Gate::X { q: b }) | (Gate::Z { q: a }, Gate::Z { q: b })
                    if a == b =>
                {
                    gs[i] = None;
                    gs[j] = None;
                    changed = true;
                }
                (Gate::Cz { .. }, Gate::Cz { .. }) if same_pair(&g, &h) => {
                    gs[i] = None;
                    gs[j] = None;
                    changed = true;
                }
                (Gate::Rx { q: a, theta: x }, Gate::Rx { q: b, theta: y })
                | (Gate::Ry { q: a, theta: x }, Gate::Ry { q: b, theta: y })
                | (Gate::Rz { q: a, theta: x }, Gate::Rz { q: b, theta: y })
                    if a == b =>
                {
                    let mut merged = h.clone();
                    *angle_mut(&mut merged).expect("rotation") = x + y;
                    gs[i] = None;
                    gs[j] = Some(merged);
                    changed = true;
                }
                (Gate::Rzz { theta: x, .. }, Gate::Rzz { theta: y, .. }) if same_pair(&g, &h) => {
                    let mut merged = h.clone();
                    *angle_mut(&mut merged).expect("rotation") = x + y;
                    gs[i] = None;
                    gs[j] = Some(merged);
                    changed = true;
                }
                (Gate::Had { q }, Gate::Rz { q: b, theta }) if q == b => {
                    if let Some(k) = next_touching(&gs, j, false) {
                        if gs[k] == Some(Gate::Had { q: *q }) {
                            gs[i] = None;
                            gs[k] = None;
                            gs[j] = Some(Gate::Rx { q: *q, theta: *theta });
                            changed = true;
                        }
                    }
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
        gs.retain(Option::is_some);
    }
    let mut out: Vec<Gate> = gs.into_iter().flatten().collect();
    let global = wrap_angle(global);
    if global.abs() > ZERO_ANGLE {
        out.push(Gate::GlobalPhase { phi: global });
    }
    out
}
