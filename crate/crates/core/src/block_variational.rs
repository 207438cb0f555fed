//! Variational block encoding with the reflection ansatz `W(θ) = V(θ)·CZ̄·V(θ)†`.
//!
//! `V(θ)` acts on all `a + n` qubits: each of the `L` layers is a column of
//! `RX·RZ·RX` triplets followed by a nearest-neighbour `RZZ` ladder, and a
//! final triplet column closes the circuit. `CZ̄` is the nearest-neighbour
//! `CZ` ladder. The cost is `F(θ) = Tr(W̃†W̃) − 2·Re Tr(H̃W̃)` on the
//! `⟨0^a|W|0^a⟩` block, so that `ε_BE² = F + Tr(H̃²)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block_lcu::BlockEncoding;
use crate::circuits::{apply_left, apply_right, circuit_unitary, conjugate_matrix, Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64};
use crate::operators::PauliSum;
use crate::optim::{self, IterRecord, Method, StopRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzLayout {
    pub n: usize,
    pub a: usize,
    pub layers: usize,
}

impl AnsatzLayout {
    pub fn new(n: usize, a: usize, layers: usize) -> Result<Self> {
        if n == 0 || a == 0 || layers == 0 {
            return Err(Error::invalid("ansatz needs n, a, L >= 1"));
        }
        linalg::check_dense(n + a)?;
        Ok(Self { n, a, layers })
    }

    pub fn width(&self) -> usize {
        self.n + self.a
    }

    pub fn parameter_count(&self) -> usize {
        let w = self.width();
        self.layers * (4 * w - 1) + 3 * w
    }

    pub fn two_qubit_count(&self) -> usize {
        (self.width() - 1) * (2 * self.layers + 1)
    }

    /// Gates of `V(θ)` in time order, each tagged with its parameter index.
    fn v_gates(&self, theta: &[f64]) -> Vec<(Gate, usize)> {
        let w = self.width();
        let mut out = Vec::with_capacity(self.parameter_count());
        let mut k = 0;
        let column = |out: &mut Vec<(Gate, usize)>, k: &mut usize| {
            for q in 0..w {
                out.push((Gate::Rx { q, theta: theta[*k] }, *k));
                out.push((Gate::Rz { q, theta: theta[*k + 1] }, *k + 1));
                out.push((Gate::Rx { q, theta: theta[*k + 2] }, *k + 2));
                *k += 3;
            }
        };
        for _ in 0..self.layers {
            column(&mut out, &mut k);
            for q in 0..w - 1 {
                out.push((Gate::Rzz { q0: q, q1: q + 1, theta: theta[k] }, k));
                k += 1;
            }
        }
        column(&mut out, &mut k);
        out
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.parameter_count() {
            return Err(Error::invalid(format!("expected {} parameters, got {}", self.parameter_count(), theta.len())));
        }
        Ok(())
    }

    /// Zero-initialized parameters of `self` with one more layer, placed
    /// before the final column so that `W` is unchanged.
    pub fn insert_identity_layer(&self, theta: &[f64]) -> Result<(AnsatzLayout, Vec<f64>)> {
        self.check(theta)?;
        let per_layer = 4 * self.width() - 1;
        let split = self.layers * per_layer;
        let mut out = theta[..split].to_vec();
        out.extend(std::iter::repeat_n(0.0, per_layer));
        out.extend_from_slice(&theta[split..]);
        Ok((AnsatzLayout { layers: self.layers + 1, ..*self }, out))
    }
}

/// One gate of `W` with the generator data needed for derivatives.
struct Occurrence {
    gate: Gate,
    /// Parameter index, sign of the angle, and the `X`/`Z` masks of `σ`.
    param: Option<(usize, f64, usize, usize)>,
}

fn occurrences(layout: &AnsatzLayout, theta: &[f64]) -> Vec<Occurrence> {
    let w = layout.width();
    let bit = |q: usize| 1usize << (w - 1 - q);
    let masks = |g: &Gate| match *g {
        Gate::Rx { q, .. } => (bit(q), 0),
        Gate::Rz { q, .. } => (0, bit(q)),
        Gate::Rzz { q0, q1, .. } => (0, bit(q0) | bit(q1)),
        _ => unreachable!("ansatz rotations only"),
    };
    let v = layout.v_gates(theta);
    let mut out = Vec::with_capacity(2 * v.len() + w);
    for (g, k) in v.iter().rev() {
        let (xm, zm) = masks(g);
        out.push(Occurrence { gate: g.inverse(), param: Some((*k, -1.0, xm, zm)) });
    }
    for q in 0..w - 1 {
        out.push(Occurrence { gate: Gate::Cz { q0: q, q1: q + 1 }, param: None });
    }
    for (g, k) in v {
        let (xm, zm) = masks(&g);
        out.push(Occurrence { gate: g, param: Some((k, 1.0, xm, zm)) });
    }
    out
}

/// Native-gate circuit of `W(θ)`.
pub fn build_ansatz(layout: &AnsatzLayout, theta: &[f64]) -> Result<Circuit> {
    layout.check(theta)?;
    let gates = occurrences(layout, theta).into_iter().map(|o| o.gate).collect();
    Circuit::from_gates(layout.a, layout.n, gates)
}

fn sigma_phase(j: usize, zm: usize) -> f64 {
    if (j & zm).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `Tr(σT)` for a real Pauli `σ` given by its masks.
fn trace_sigma(t: &CMat, xm: usize, zm: usize) -> C64 {
    (0..t.nrows()).map(|j| t[(j, j ^ xm)] * sigma_phase(j, zm)).sum()
}

/// `σT`.
fn left_sigma(t: &CMat, xm: usize, zm: usize) -> CMat {
    let dim = t.nrows();
    CMat::from_fn(dim, dim, |k, l| {
        let j = k ^ xm;
        t[(j, l)] * sigma_phase(j, zm)
    })
}

/// Cost, gradient, and Hessian of the compression objective for one target.
#[derive(Debug, Clone)]
pub struct VariationalProblem {
    pub layout: AnsatzLayout,
    h_tilde: CMat,
    h_sq: f64,
}

impl VariationalProblem {
    pub fn new(layout: AnsatzLayout, h_tilde: &PauliSum) -> Result<Self> {
        if h_tilde.n() != layout.n {
            return Err(Error::WidthMismatch { expected: layout.n, got: h_tilde.n() });
        }
        Self::from_matrix(layout, h_tilde.to_matrix()?)
    }

    pub fn from_matrix(layout: AnsatzLayout, h_tilde: CMat) -> Result<Self> {
        let dim = 1usize << layout.n;
        if h_tilde.nrows() != dim || h_tilde.ncols() != dim {
            return Err(Error::invalid("target dimension does not match the system register"));
        }
        let h_sq = linalg::trace_product(&h_tilde, &h_tilde).re;
        Ok(Self { layout, h_tilde, h_sq })
    }

    pub fn parameter_count(&self) -> usize {
        self.layout.parameter_count()
    }

    /// `Tr(H̃²)`.
    pub fn target_norm_sq(&self) -> f64 {
        self.h_sq
    }

    pub fn unitary(&self, theta: &[f64]) -> Result<CMat> {
        circuit_unitary(&build_ansatz(&self.layout, theta)?)
    }

    fn sys_dim(&self) -> usize {
        1 << self.layout.n
    }

    fn block(&self, w: &CMat) -> CMat {
        let d = self.sys_dim();
        w.view((0, 0), (d, d)).into_owned()
    }

    fn cost_of_block(&self, wt: &CMat) -> f64 {
        wt.iter().map(|z| z.norm_sqr()).sum::<f64>() - 2.0 * linalg::trace_product(&self.h_tilde, wt).re
    }

    pub fn cost(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.cost_of_block(&self.block(&self.unitary(theta)?)))
    }

    /// `ε_BE = ‖W̃ − H̃‖_F` from `F + Tr(H̃²)`.
    pub fn epsilon_from_cost(&self, cost: f64) -> f64 {
        (cost + self.h_sq).max(0.0).sqrt()
    }

    pub fn epsilon_be(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.epsilon_from_cost(self.cost(theta)?))
    }

    /// `M = W̃† − H̃` embedded in the top-left block.
    fn embedded_residual(&self, w: &CMat) -> CMat {
        let d = self.sys_dim();
        let dim = w.nrows();
        let r = self.block(w).adjoint() - &self.h_tilde;
        let mut m = CMat::zeros(dim, dim);
        m.view_mut((0, 0), (d, d)).copy_from(&r);
        m
    }

    /// Cost and analytic gradient. With `W = G_K⋯G_1`, each rotation
    /// occurrence contributes `s·Im Tr(σ T_g)` where `T_0 = MW` and
    /// `T_g = G_g T_{g−1} G_g†`.
    pub fn cost_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.layout.check(theta)?;
        let occ = occurrences(&self.layout, theta);
        let w = self.unitary(theta)?;
        let cost = self.cost_of_block(&self.block(&w));
        let width = self.layout.width();
        let mut t = self.embedded_residual(&w) * &w;
        let mut grad = vec![0.0; theta.len()];
        for o in &occ {
            conjugate_matrix(&o.gate, &mut t, width);
            if let Some((k, s, xm, zm)) = o.param {
                grad[k] += s * trace_sigma(&t, xm, zm).im;
            }
        }
        Ok((cost, grad))
    }

    /// Analytic Hessian from the three-trace formula
    /// `∂_j∂_k F = 2Re Tr(∂_jW̃†∂_kW̃) + 2Re Tr((W̃† − H̃)∂_j∂_kW̃)`.
    pub fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.layout.check(theta)?;
        let occ = occurrences(&self.layout, theta);
        let width = self.layout.width();
        let dim = 1usize << width;
        let d = self.sys_dim();
        let p = theta.len();
        let w = self.unitary(theta)?;

        // prefixes B_g = G_g⋯G_1 and suffixes A_g = G_K⋯G_{g+1}
        let mut prefixes = Vec::with_capacity(occ.len());
        let mut acc = linalg::identity(dim);
        for o in &occ {
            apply_left(&o.gate, &mut acc, width);
            prefixes.push(acc.clone());
        }
        let mut suffixes = vec![linalg::identity(dim); occ.len()];
        for g in (0..occ.len().saturating_sub(1)).rev() {
            let mut s = suffixes[g + 1].clone();
            apply_right(&occ[g + 1].gate, &mut s, width);
            suffixes[g] = s;
        }

        // ∂_jW̃ as a sum of occurrence blocks A_g(−isσ/2)B_g
        let mut dblocks = vec![CMat::zeros(d, d); p];
        for (g, o) in occ.iter().enumerate() {
            if let Some((k, s, xm, zm)) = o.param {
                let xb = left_sigma(&prefixes[g], xm, zm) * C64::new(0.0, -s / 2.0);
                let rows = suffixes[g].view((0, 0), (d, dim));
                let cols = xb.view((0, 0), (dim, d));
                dblocks[k] += rows * cols;
            }
        }
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            for k in j..p {
                let v = 2.0 * dblocks[j].iter().zip(dblocks[k].iter()).map(|(x, y)| (x.conj() * y).re).sum::<f64>();
                hess[(j, k)] += v;
                if k != j {
                    hess[(k, j)] += v;
                }
            }
        }

        // second-derivative term: pairs g < h swept as R ← G_h R G_h†
        let m = self.embedded_residual(&w);
        let same = -0.25 * linalg::trace_product(&m, &w);
        let mut t = &m * &w;
        let mut ts = Vec::with_capacity(occ.len());
        for o in &occ {
            conjugate_matrix(&o.gate, &mut t, width);
            ts.push(t.clone());
        }
        for (g, og) in occ.iter().enumerate() {
            let Some((j, sg, xg, zg)) = og.param else { continue };
            hess[(j, j)] += 2.0 * same.re;
            let mut r = left_sigma(&ts[g], xg, zg) * C64::new(0.0, -sg / 2.0);
            for oh in &occ[g + 1..] {
                conjugate_matrix(&oh.gate, &mut r, width);
                if let Some((k, sh, xh, zh)) = oh.param {
                    let v = 2.0 * (C64::new(0.0, -sh / 2.0) * trace_sigma(&r, xh, zh)).re;
                    hess[(j, k)] += v;
                    hess[(k, j)] += v;
                }
            }
        }
        Ok(hess)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub grad_norm_threshold: f64,
    pub hessian_eigen_cutoff: f64,
    pub max_iters: usize,
    pub init_seed: u64,
    pub restarts: usize,
    /// Initial angles are drawn from `U(−init_scale, init_scale)`.
    pub init_scale: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Bfgs,
            learning_rate: 0.1,
            grad_norm_threshold: 1e-5,
            hessian_eigen_cutoff: 1e-5,
            max_iters: 3000,
            init_seed: 0,
            restarts: 10,
            init_scale: 0.1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.grad_norm_threshold > 0.0 && self.hessian_eigen_cutoff > 0.0 && self.init_scale >= 0.0) {
            return Err(Error::invalid("optimizer thresholds must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("at least one restart is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalResult {
    pub layout: AnsatzLayout,
    pub theta: Vec<f64>,
    pub epsilon_be: f64,
    pub cost: f64,
    pub converged: bool,
    /// `ε_BE` reached by every restart, in restart order.
    pub restart_epsilons: Vec<f64>,
    #[serde(skip)]
    pub trace: Vec<IterRecord>,
}

impl VariationalResult {
    pub fn block_encoding(&self) -> Result<BlockEncoding> {
        Ok(BlockEncoding {
            circuit: build_ansatz(&self.layout, &self.theta)?,
            a: self.layout.a,
            epsilon_be: self.epsilon_be,
            is_reflection: true,
            normalization: 1.0,
        })
    }
}

fn minimize(problem: &VariationalProblem, x0: &[f64], cfg: &OptimizerConfig) -> Result<optim::Minimum> {
    let stop = StopRule { max_iters: cfg.max_iters, grad_norm_threshold: cfg.grad_norm_threshold };
    let f = |x: &[f64]| problem.cost_and_gradient(x).unwrap_or((f64::NAN, vec![f64::NAN; x.len()]));
    match cfg.method {
        Method::Bfgs => optim::bfgs(f, x0, stop),
        Method::GradientDescent => optim::gradient_descent(f, x0, cfg.learning_rate, stop),
        Method::Newton => {
            let h = |x: &[f64]| problem.hessian(x).unwrap_or_else(|_| DMatrix::from_element(x.len(), x.len(), f64::NAN));
            optim::newton(f, h, x0, cfg.hessian_eigen_cutoff, stop)
        }
    }
}

fn restart_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
}

/// Best of `cfg.restarts` seeded runs (smallest `ε_BE`, then lowest restart
/// index). `warm_start`, when given, is optimized as an additional candidate.
pub fn optimize_with_start(problem: &VariationalProblem, cfg: &OptimizerConfig, warm_start: Option<&[f64]>) -> Result<VariationalResult> {
    cfg.validate()?;
    let p = problem.parameter_count();
    let mut starts: Vec<Vec<f64>> = (0..cfg.restarts)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(cfg.init_seed, r));
            (0..p).map(|_| if cfg.init_scale > 0.0 { rng.random_range(-cfg.init_scale..cfg.init_scale) } else { 0.0 }).collect()
        })
        .collect();
    if let Some(w) = warm_start {
        problem.layout.check(w)?;
        starts.insert(0, w.to_vec());
    }
    let runs: Vec<optim::Minimum> = starts.par_iter().map(|x0| minimize(problem, x0, cfg)).collect::<Result<_>>()?;
    let eps: Vec<f64> = runs.iter().map(|m| problem.epsilon_from_cost(m.cost)).collect();
    let best = (0..runs.len()).min_by(|&i, &j| eps[i].total_cmp(&eps[j])).expect("at least one restart");
    let m = &runs[best];
    let restart_epsilons = if warm_start.is_some() { eps[1..].to_vec() } else { eps.clone() };
    Ok(VariationalResult {
        layout: problem.layout,
        theta: m.x.clone(),
        epsilon_be: eps[best],
        cost: m.cost,
        converged: m.converged,
        restart_epsilons,
        trace: m.trace.clone(),
    })
}

pub fn optimize(h_tilde: &PauliSum, n: usize, a: usize, layers: usize, cfg: &OptimizerConfig) -> Result<VariationalResult> {
    let problem = VariationalProblem::new(AnsatzLayout::new(n, a, layers)?, h_tilde)?;
    optimize_with_start(&problem, cfg, None)
}

/// Optimizes `L = 1, 2, …, max_layers`, seeding each depth with the previous
/// optimum plus an identity layer in addition to the random restarts.
pub fn optimize_layer_sweep(h_tilde: &PauliSum, n: usize, a: usize, max_layers: usize, cfg: &OptimizerConfig) -> Result<Vec<VariationalResult>> {
    let mut out: Vec<VariationalResult> = Vec::with_capacity(max_layers);
    for layers in 1..=max_layers {
        let layout = AnsatzLayout::new(n, a, layers)?;
        let problem = VariationalProblem::new(layout, h_tilde)?;
        let warm = match out.last() {
            Some(prev) => Some(prev.layout.insert_identity_layer(&prev.theta)?.1),
            None => None,
        };
        out.push(optimize_with_start(&problem, cfg, warm.as_deref())?);
    }
    Ok(out)
}

/// Zero vector of the right length.
pub fn zero_parameters(layout: &AnsatzLayout) -> Vec<f64> {
    vec![0.0; layout.parameter_count()]
}
