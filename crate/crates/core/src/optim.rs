//! Unconstrained minimizers shared by phase design and variational
//! compilation: BFGS, gradient descent, and a pseudo-inverse Newton method,
//! each with Armijo backtracking.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GradientDescent,
    Bfgs,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iters: usize,
    pub grad_norm_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
    pub trace: Vec<IterRecord>,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 50;

fn finite(cost: f64, grad: &[f64]) -> Result<()> {
    if !cost.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!("non-finite cost or gradient (cost = {cost})")));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Backtracks from `step` along `dir` until the Armijo condition holds.
fn line_search<F>(f: &F, x: &[f64], cost: f64, grad: &[f64], dir: &[f64], mut step: f64) -> Result<Option<(Vec<f64>, f64, Vec<f64>)>>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let slope: f64 = grad.iter().zip(dir).map(|(g, d)| g * d).sum();
    if slope >= 0.0 {
        return Ok(None);
    }
    for _ in 0..MAX_BACKTRACK {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + step * di).collect();
        let (c, g) = f(&trial);
        if c.is_finite() && c <= cost + ARMIJO * step * slope {
            finite(c, &g)?;
            return Ok(Some((trial, c, g)));
        }
        step *= 0.5;
    }
    Ok(None)
}

struct Run {
    x: Vec<f64>,
    cost: f64,
    grad: Vec<f64>,
    trace: Vec<IterRecord>,
}

impl Run {
    fn start<F: Fn(&[f64]) -> (f64, Vec<f64>)>(f: &F, x0: &[f64]) -> Result<Self> {
        let (cost, grad) = f(x0);
        finite(cost, &grad)?;
        let trace = vec![IterRecord { iter: 0, cost, grad_norm: norm(&grad) }];
        Ok(Self { x: x0.to_vec(), cost, grad, trace })
    }

    fn accept(&mut self, x: Vec<f64>, cost: f64, grad: Vec<f64>) {
        self.x = x;
        self.cost = cost;
        self.grad = grad;
        let iter = self.trace.len();
        self.trace.push(IterRecord { iter, cost, grad_norm: norm(&self.grad) });
    }

    fn finish(self, converged: bool) -> Minimum {
        let grad_norm = norm(&self.grad);
        Minimum { iters: self.trace.len() - 1, x: self.x, cost: self.cost, grad_norm, converged, trace: self.trace }
    }
}

/// BFGS with an inverse-Hessian update; falls back to steepest descent when
/// the quasi-Newton direction fails the line search.
pub fn bfgs<F>(f: F, x0: &[f64], stop: StopRule) -> Result<Minimum>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut run = Run::start(&f, x0)?;
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    for _ in 0..stop.max_iters {
        if norm(&run.grad) < stop.grad_norm_threshold {
            return Ok(run.finish(true));
        }
        let g = DVector::from_column_slice(&run.grad);
        let dir: Vec<f64> = (-(&hinv * &g)).iter().copied().collect();
        let found = match line_search(&f, &run.x, run.cost, &run.grad, &dir, 1.0)? {
            Some(step) => Some(step),
            None if !fresh => {
                hinv.fill_with_identity();
                fresh = true;
                let sd: Vec<f64> = run.grad.iter().map(|x| -x).collect();
                line_search(&f, &run.x, run.cost, &run.grad, &sd, 1.0 / norm(&run.grad).max(1.0))?
            }
            None => None,
        };
        let Some((x, cost, grad)) = found else {
            return Ok(run.finish(false));
        };
        let s = DVector::from_iterator(n, x.iter().zip(&run.x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, grad.iter().zip(&run.grad).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() && sy > 0.0 {
            if fresh {
                hinv *= sy / y.dot(&y);
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        run.accept(x, cost, grad);
    }
    let converged = norm(&run.grad) < stop.grad_norm_threshold;
    Ok(run.finish(converged))
}

/// `x ← x − γ∇F`, halving `γ` for a step until the cost decreases
/// sufficiently, so the cost sequence is non-increasing.
pub fn gradient_descent<F>(f: F, x0: &[f64], learning_rate: f64, stop: StopRule) -> Result<Minimum>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    if !(learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let mut run = Run::start(&f, x0)?;
    for _ in 0..stop.max_iters {
        if norm(&run.grad) < stop.grad_norm_threshold {
            return Ok(run.finish(true));
        }
        let dir: Vec<f64> = run.grad.iter().map(|g| -g).collect();
        let Some((x, cost, grad)) = line_search(&f, &run.x, run.cost, &run.grad, &dir, learning_rate)? else {
            return Ok(run.finish(false));
        };
        run.accept(x, cost, grad);
    }
    let converged = norm(&run.grad) < stop.grad_norm_threshold;
    Ok(run.finish(converged))
}

/// Pseudo-inverse of a symmetric matrix keeping only eigenvalues `μ ≥ cutoff`.
pub fn pseudo_inverse(h: &DMatrix<f64>, cutoff: f64) -> DMatrix<f64> {
    let eig = h.clone().symmetric_eigen();
    let n = h.nrows();
    let mut out = DMatrix::<f64>::zeros(n, n);
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        if mu >= cutoff {
            let v = eig.eigenvectors.column(k);
            out += v * v.transpose() / mu;
        }
    }
    out
}

/// `x ← x − H⁺∇F` with `H⁺` from [`pseudo_inverse`]; backtracks on the
/// Newton direction and falls back to steepest descent when it is not a
/// descent direction.
pub fn newton<F, H>(f: F, hessian: H, x0: &[f64], cutoff: f64, stop: StopRule) -> Result<Minimum>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    H: Fn(&[f64]) -> DMatrix<f64>,
{
    let mut run = Run::start(&f, x0)?;
    for _ in 0..stop.max_iters {
        if norm(&run.grad) < stop.grad_norm_threshold {
            return Ok(run.finish(true));
        }
        let hp = pseudo_inverse(&hessian(&run.x), cutoff);
        let g = DVector::from_column_slice(&run.grad);
        let dir: Vec<f64> = (-(hp * g)).iter().copied().collect();
        let mut found = line_search(&f, &run.x, run.cost, &run.grad, &dir, 1.0)?;
        if found.is_none() {
            let sd: Vec<f64> = run.grad.iter().map(|x| -x).collect();
            found = line_search(&f, &run.x, run.cost, &run.grad, &sd, 1.0)?;
        }
        let Some((x, cost, grad)) = found else {
            return Ok(run.finish(false));
        };
        run.accept(x, cost, grad);
    }
    let converged = norm(&run.grad) < stop.grad_norm_threshold;
    Ok(run.finish(converged))
}
