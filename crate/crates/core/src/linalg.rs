//! Dense complex linear algebra shared by the simulators and the oracles.
//!
//! Qubit ordering is big-endian throughout: in a register of `w` qubits,
//! qubit `q` is bit `w - 1 - q` of the basis index, so `kron(A, B)` puts `A`
//! on the lower-numbered qubits.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Largest register handled by dense routines.
pub const MAX_DENSE_QUBITS: usize = 12;

pub(crate) fn check_dense(qubits: usize) -> Result<()> {
    if qubits > MAX_DENSE_QUBITS {
        return Err(Error::Capability(format!(
            "{qubits} qubits exceeds the dense limit of {MAX_DENSE_QUBITS}"
        )));
    }
    Ok(())
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Applies a scalar function to a Hermitian matrix through its spectrum.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (values, vectors) = eigh(m);
    let mut scaled = vectors.clone();
    for (c, &lambda) in values.iter().enumerate() {
        let fl = f(lambda);
        for r in 0..scaled.nrows() {
            scaled[(r, c)] *= fl;
        }
    }
    &scaled * vectors.adjoint()
}

/// `exp(-i t H)` for Hermitian `H`.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    hermitian_function(h, |lambda| C64::from_polar(1.0, -lambda * t))
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

/// Frobenius norm of `a - b`.
pub fn frobenius_distance(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm()
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Deviation of `u` from unitarity, as the largest entry of `|U†U - I|`.
pub fn unitarity_error(u: &CMat) -> f64 {
    max_abs_diff(&(u.adjoint() * u), &identity(u.nrows()))
}

pub fn hermiticity_error(m: &CMat) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Smallest `phi`-aligned distance: `min_phi |a - e^{i phi} b|_max`, using the
/// phase of the largest entry of `b` as reference.
pub fn max_abs_diff_up_to_phase(a: &CMat, b: &CMat) -> f64 {
    let (idx, _) = b
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .unwrap_or((0, &ZERO));
    let (ra, rb) = (a.as_slice()[idx], b.as_slice()[idx]);
    if rb.norm() < 1e-300 || ra.norm() < 1e-300 {
        return max_abs_diff(a, b);
    }
    let phase = (ra / rb) / (ra / rb).norm();
    max_abs_diff(a, &(b * phase))
}

/// Reduced density matrix on the `keep` qubits (in ascending order) of a
/// `width`-qubit operator.
pub fn partial_trace(rho: &CMat, width: usize, keep: &[usize]) -> Result<CMat> {
    let dim = 1usize << width;
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::WidthMismatch { expected: width, got: rho.nrows().trailing_zeros() as usize });
    }
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&q| q >= width) {
        return Err(Error::invalid("partial trace qubit out of range"));
    }
    let traced: Vec<usize> = (0..width).filter(|q| !keep.contains(q)).collect();
    let bit = |q: usize| 1usize << (width - 1 - q);
    let compose = |kept: usize, env: usize| -> usize {
        let mut idx = 0usize;
        for (k, &q) in keep.iter().enumerate() {
            if kept >> (keep.len() - 1 - k) & 1 == 1 {
                idx |= bit(q);
            }
        }
        for (k, &q) in traced.iter().enumerate() {
            if env >> (traced.len() - 1 - k) & 1 == 1 {
                idx |= bit(q);
            }
        }
        idx
    };
    let dk = 1usize << keep.len();
    let de = 1usize << traced.len();
    let mut out = CMat::zeros(dk, dk);
    for r in 0..dk {
        for c in 0..dk {
            let mut acc = ZERO;
            for e in 0..de {
                acc += rho[(compose(r, e), compose(c, e))];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
