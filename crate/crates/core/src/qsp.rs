//! Scalar quantum signal processing: the `2×2` protocol unitary, the
//! Jacobi–Anger reference series, and phase optimization for `e^{−ixt̃}`.
//!
//! Convention: `U = Π_{k=1}^{d} S(φ_k) W(x)` with `S(φ) = diag(e^{iφ}, e^{−iφ})`
//! and the reflection `W(x) = [[x, √(1−x²)], [√(1−x²), −x]]`; `f(x) = U₀₀`.

use std::f64::consts::PI;

use log::warn;
use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{C64, I, ONE, ZERO};
use crate::optim::{self, StopRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QspPhases {
    pub phases: Vec<f64>,
    pub t_tilde: f64,
    pub interval: [f64; 2],
    pub epsilon_poly: f64,
    /// False when no candidate reached a stationary point.
    pub converged: bool,
}

impl QspPhases {
    pub fn degree(&self) -> usize {
        self.phases.len()
    }

    /// `f(x) = ⟨0|U(x)|0⟩`.
    pub fn eval(&self, x: f64) -> C64 {
        qsp_value(x, &self.phases)
    }
}

fn signal(x: f64) -> Matrix2<C64> {
    let s = C64::from((1.0 - x * x).max(0.0).sqrt());
    let x = C64::from(x);
    Matrix2::new(x, s, s, -x)
}

fn phase_gate(phi: f64) -> Matrix2<C64> {
    Matrix2::new(C64::from_polar(1.0, phi), ZERO, ZERO, C64::from_polar(1.0, -phi))
}

pub fn qsp_scalar_unitary(x: f64, phases: &[f64]) -> Matrix2<C64> {
    let w = signal(x);
    phases.iter().fold(Matrix2::identity(), |u, &phi| u * phase_gate(phi) * w)
}

pub fn qsp_value(x: f64, phases: &[f64]) -> C64 {
    qsp_value_grad(x, phases, None)
}

/// `f(x)` and, if requested, `∂f/∂φ_k` for every `k`.
fn qsp_value_grad(x: f64, phases: &[f64], grad: Option<&mut [C64]>) -> C64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    // row vector e₀ᵀ M₁⋯M_k with M = S(φ)W
    let step_left = |r: [C64; 2], phi: f64| {
        let (e, ec) = (C64::from_polar(1.0, phi), C64::from_polar(1.0, -phi));
        let (a, b) = (r[0] * e, r[1] * ec);
        [a * x + b * s, a * s - b * x]
    };
    let Some(grad) = grad else {
        return phases.iter().fold([ONE, ZERO], |r, &phi| step_left(r, phi))[0];
    };
    let d = phases.len();
    let mut left = Vec::with_capacity(d + 1);
    left.push([ONE, ZERO]);
    for &phi in phases {
        let r = *left.last().expect("nonempty");
        left.push(step_left(r, phi));
    }
    // column vector M_k⋯M_d e₀, swept from the right
    let mut right = [ONE, ZERO];
    for k in (0..d).rev() {
        let w = [right[0] * x + right[1] * s, right[0] * s - right[1] * x];
        let (e, ec) = (C64::from_polar(1.0, phases[k]), C64::from_polar(1.0, -phases[k]));
        right = [w[0] * e, w[1] * ec];
        let l = left[k];
        grad[k] = I * (l[0] * right[0] - l[1] * right[1]);
    }
    left[d][0]
}

/// Parity and boundedness checks of `f` on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialReport {
    pub degree: usize,
    pub max_parity_violation: f64,
    pub max_abs: f64,
    pub parity_ok: bool,
    pub bounded_ok: bool,
}

pub fn validate_qsp_polynomial(phases: &[f64], grid_points: usize) -> PolynomialReport {
    let d = phases.len();
    let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
    let mut parity: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let m = grid_points.max(2);
    for i in 0..m {
        let x = -1.0 + 2.0 * i as f64 / (m - 1) as f64;
        let (fp, fm) = (qsp_value(x, phases), qsp_value(-x, phases));
        parity = parity.max((fm - fp * sign).norm());
        max_abs = max_abs.max(fp.norm());
    }
    PolynomialReport { degree: d, max_parity_violation: parity, max_abs, parity_ok: parity < 1e-9, bounded_ok: max_abs <= 1.0 + 1e-9 }
}

/// Bessel functions `J_0(t) … J_{n}(t)` by Miller's backward recurrence,
/// normalized with `J_0 + 2Σ J_{2k} = 1`.
pub fn bessel_j(n: usize, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if t == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = n.max(t.abs().ceil() as usize) + 40 + (10.0 * t.abs().sqrt()) as usize;
    let mut j = vec![0.0; start + 2];
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / t * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            j.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    for (o, v) in out.iter_mut().zip(&j) {
        *o = v / norm;
    }
    out
}

/// Chebyshev series of `e^{−ixt}`: `cos(xt) = Σ_k cos_coeffs[k] T_{2k}(x)`,
/// `sin(xt) = Σ_k sin_coeffs[k] T_{2k+1}(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevSeries {
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
    pub degree: usize,
    pub tail_bound: f64,
}

impl ChebyshevSeries {
    pub fn eval(&self, x: f64) -> C64 {
        let theta = x.clamp(-1.0, 1.0).acos();
        let c: f64 = self.cos_coeffs.iter().enumerate().map(|(k, a)| a * (2.0 * k as f64 * theta).cos()).sum();
        let s: f64 = self.sin_coeffs.iter().enumerate().map(|(k, a)| a * ((2 * k + 1) as f64 * theta).cos()).sum();
        C64::new(c, -s)
    }
}

/// Jacobi–Anger expansion truncated at the smallest degree whose tail bound
/// `Σ_{k>D} 2|J_k(t)|` is at most `epsilon`.
pub fn jacobi_anger(t: f64, epsilon: f64) -> Result<ChebyshevSeries> {
    if !(t >= 0.0) || !(epsilon > 0.0) {
        return Err(Error::invalid("jacobi_anger needs t >= 0 and epsilon > 0"));
    }
    let n_max = (2.0 * t + 60.0 + 4.0 * (1.0 / epsilon).ln().max(0.0)) as usize;
    let j = bessel_j(n_max, t);
    let mut tails = vec![0.0; n_max + 2];
    for k in (0..=n_max).rev() {
        tails[k] = tails[k + 1] + 2.0 * j[k].abs();
    }
    let degree = (0..=n_max).find(|&d| tails[d + 1] <= epsilon).unwrap_or(n_max);
    let sgn = |k: usize| if k % 2 == 0 { 1.0 } else { -1.0 };
    let cos_coeffs = (0..=degree / 2).map(|k| if k == 0 { j[0] } else { 2.0 * sgn(k) * j[2 * k] }).collect();
    let sin_coeffs = (0..(degree + 1) / 2).map(|k| 2.0 * sgn(k) * j[2 * k + 1]).collect();
    Ok(ChebyshevSeries { cos_coeffs, sin_coeffs, degree, tail_bound: tails[degree + 1] })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSolverConfig {
    pub restarts: usize,
    /// Optimization nodes per `d + 1`.
    pub grid_factor: usize,
    /// Validation points per `d + 1`.
    pub validation_factor: usize,
    pub max_iters: usize,
    /// Sharpen the least-squares solution towards the max-norm optimum.
    pub minimax_refine: bool,
    pub seed: u64,
}

impl Default for PhaseSolverConfig {
    fn default() -> Self {
        Self { restarts: 4, grid_factor: 4, validation_factor: 40, max_iters: 800, minimax_refine: true, seed: 0 }
    }
}

fn chebyshev_nodes(m: usize, a: f64, b: f64) -> Vec<f64> {
    (0..m).map(|k| 0.5 * (a + b) + 0.5 * (b - a) * ((2 * k + 1) as f64 * PI / (2 * m) as f64).cos()).collect()
}

fn uniform_grid(m: usize, a: f64, b: f64) -> Vec<f64> {
    (0..m).map(|i| a + (b - a) * i as f64 / (m - 1).max(1) as f64).collect()
}

fn target(x: f64, t: f64) -> C64 {
    C64::from_polar(1.0, -x * t)
}

/// Mean squared error over `nodes` and its gradient.
fn least_squares(phases: &[f64], nodes: &[f64], t: f64) -> (f64, Vec<f64>) {
    let d = phases.len();
    let mut g = vec![0.0; d];
    let mut df = vec![ZERO; d];
    let mut cost = 0.0;
    for &x in nodes {
        let e = qsp_value_grad(x, phases, Some(&mut df)) - target(x, t);
        cost += e.norm_sqr();
        for (gk, dk) in g.iter_mut().zip(&df) {
            *gk += 2.0 * (e.conj() * dk).re;
        }
    }
    let scale = 1.0 / nodes.len() as f64;
    g.iter_mut().for_each(|v| *v *= scale);
    (cost * scale, g)
}

/// `(mean |e|^p)^{1/p}` over `nodes` and its gradient, evaluated with the
/// errors scaled by their maximum to avoid underflow.
fn p_norm(phases: &[f64], nodes: &[f64], t: f64, p: f64) -> (f64, Vec<f64>) {
    let d = phases.len();
    let s = max_error(phases, nodes, t);
    if s == 0.0 {
        return (0.0, vec![0.0; d]);
    }
    let m = nodes.len() as f64;
    let mut df = vec![ZERO; d];
    let mut g = vec![0.0; d];
    let mut mean = 0.0;
    for &x in nodes {
        let es = (qsp_value_grad(x, phases, Some(&mut df)) - target(x, t)) / s;
        let r = es.norm();
        mean += r.powf(p);
        let w = r.powf(p - 2.0);
        for (gk, dk) in g.iter_mut().zip(&df) {
            *gk += w * (es.conj() * dk).re;
        }
    }
    mean /= m;
    let lead = mean.powf(1.0 / p - 1.0) / m;
    g.iter_mut().for_each(|v| *v *= lead);
    (s * mean.powf(1.0 / p), g)
}

/// `max_x |f(x) − e^{−ixt}|` over `nodes`.
pub fn max_error(phases: &[f64], nodes: &[f64], t: f64) -> f64 {
    nodes.iter().map(|&x| (qsp_value(x, phases) - target(x, t)).norm()).fold(0.0, f64::max)
}

fn check_request(d: usize, interval: [f64; 2]) -> Result<()> {
    if d % 2 != 0 {
        return Err(Error::invalid(format!("degree {d} is odd")));
    }
    let [a, b] = interval;
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::invalid(format!("interval [{a}, {b}] must satisfy 0 <= a < b <= 1")));
    }
    Ok(())
}

/// Phases of even degree `d` approximating `e^{−ixt̃}` on `interval`.
///
/// Each restart minimizes the mean squared error on Chebyshev nodes; the
/// best candidates are then refined on the validation grid with increasing
/// `p`-norms. `warm_start` (for example a degree `d−2` solution padded with
/// two zeros, which leaves `f` unchanged because `W² = I`) joins the
/// candidate pool. `epsilon_poly` is the maximum error on a uniform grid of
/// `validation_factor·(d+1)` points. Ties are broken by smaller phase norm.
pub fn optimize_phases(d: usize, t_tilde: f64, interval: [f64; 2], cfg: &PhaseSolverConfig, warm_start: Option<&[f64]>) -> Result<QspPhases> {
    check_request(d, interval)?;
    let [a, b] = interval;
    let validation = uniform_grid(cfg.validation_factor.max(1) * (d + 1), a, b);
    if d == 0 {
        return Ok(QspPhases { phases: Vec::new(), t_tilde, interval, epsilon_poly: max_error(&[], &validation, t_tilde), converged: true });
    }
    let nodes = chebyshev_nodes(cfg.grid_factor.max(1) * (d + 1), a, b);
    let stop = StopRule { max_iters: cfg.max_iters, grad_norm_threshold: 1e-10 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((d as u64) << 32) ^ t_tilde.to_bits().rotate_left(17));

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = warm_start {
        if w.len() != d {
            return Err(Error::invalid(format!("warm start has {} phases, expected {d}", w.len())));
        }
        starts.push(w.to_vec());
    }
    starts.push(vec![0.0; d]);
    for _ in 0..cfg.restarts {
        starts.push((0..d).map(|_| rng.random_range(-PI..PI)).collect());
    }

    let mut pool: Vec<(f64, Vec<f64>, bool)> = Vec::new();
    for (i, x0) in starts.iter().enumerate() {
        let m = optim::bfgs(|p| least_squares(p, &nodes, t_tilde), x0, stop)?;
        let x = if warm_start.is_some() && i == 0 && max_error(x0, &validation, t_tilde) < max_error(&m.x, &validation, t_tilde) {
            x0.clone()
        } else {
            m.x
        };
        pool.push((max_error(&x, &validation, t_tilde), x, m.converged));
    }
    pool.sort_by(|p, q| p.0.total_cmp(&q.0));

    if cfg.minimax_refine {
        let keep = pool.len().min(2);
        let refine_stop = StopRule { max_iters: (cfg.max_iters / 4).max(1), grad_norm_threshold: 1e-12 };
        for entry in pool.iter_mut().take(keep) {
            let mut x = entry.1.clone();
            for p in [4.0, 8.0, 16.0, 32.0, 64.0] {
                let m = optim::bfgs(|ph| p_norm(ph, &validation, t_tilde, p), &x, refine_stop)?;
                x = m.x;
            }
            let err = max_error(&x, &validation, t_tilde);
            if err < entry.0 {
                *entry = (err, x, entry.2);
            }
        }
    }

    let phase_norm = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>();
    let best = pool
        .into_iter()
        .min_by(|p, q| p.0.total_cmp(&q.0).then(phase_norm(&p.1).total_cmp(&phase_norm(&q.1))))
        .expect("at least one candidate");
    let converged = best.2 || best.0 < 1e-8;
    if !converged {
        warn!("phase optimization for d = {d}, t = {t_tilde} stopped before convergence");
    }
    Ok(QspPhases { phases: best.1, t_tilde, interval, epsilon_poly: best.0, converged })
}

/// Solves degrees in ascending order, warm-starting each from the previous
/// solution so that `ε_poly` is non-increasing in `d`.
pub fn optimize_phase_ladder(degrees: &[usize], t_tilde: f64, interval: [f64; 2], cfg: &PhaseSolverConfig) -> Result<Vec<QspPhases>> {
    let mut sorted = degrees.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out: Vec<QspPhases> = Vec::with_capacity(sorted.len());
    for &d in &sorted {
        let warm = out.last().filter(|prev| prev.degree() < d).map(|prev| {
            let mut w = prev.phases.clone();
            w.resize(d, 0.0);
            w
        });
        let sol = optimize_phases(d, t_tilde, interval, cfg, warm.as_deref())?;
        out.push(sol);
    }
    Ok(out)
}
