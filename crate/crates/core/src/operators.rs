//! Pauli-sum Hamiltonians, spectral bounds, rescaling into `[a, b]`, and the
//! dense propagator used as ground truth by every other module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, C64, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> CMat {
        match self {
            Pauli::I => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
            Pauli::X => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Pauli::Y => CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Pauli::Z => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// Flip part of the symplectic representation.
    pub fn has_x(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Phase part of the symplectic representation.
    pub fn has_z(self) -> bool {
        matches!(self, Pauli::Z | Pauli::Y)
    }
}

/// Dense Pauli string, one letter per qubit. Letter `k` acts on qubit `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self { letters }
    }

    pub fn identity(n: usize) -> Self {
        Self { letters: vec![Pauli::I; n] }
    }

    /// `n`-qubit string with `ops` placed on the given qubits.
    pub fn from_sparse(n: usize, ops: &[(usize, Pauli)]) -> Result<Self> {
        let mut letters = vec![Pauli::I; n];
        for &(q, p) in ops {
            if q >= n {
                return Err(Error::invalid(format!("qubit {q} out of range for {n}-qubit string")));
            }
            letters[q] = p;
        }
        Ok(Self { letters })
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    pub fn weight(&self) -> usize {
        self.letters.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Bit masks `(x_mask, z_mask)` over an `n`-qubit big-endian index.
    pub fn masks(&self) -> (usize, usize) {
        let n = self.letters.len();
        let mut xm = 0usize;
        let mut zm = 0usize;
        for (q, p) in self.letters.iter().enumerate() {
            let bit = 1usize << (n - 1 - q);
            if p.has_x() {
                xm |= bit;
            }
            if p.has_z() {
                zm |= bit;
            }
        }
        (xm, zm)
    }

    pub fn y_count(&self) -> usize {
        self.letters.iter().filter(|&&p| p == Pauli::Y).count()
    }

    /// `P|j> = phase(j) |j ^ x_mask>`; returns the phase for basis index `j`.
    pub fn phase_on(&self, j: usize, z_mask: usize) -> C64 {
        let base = match self.y_count() % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
        if (j & z_mask).count_ones() % 2 == 1 {
            -base
        } else {
            base
        }
    }

    /// Dense `2^n x 2^n` matrix of the string.
    pub fn to_matrix(&self) -> Result<CMat> {
        let n = self.letters.len();
        linalg::check_dense(n)?;
        let dim = 1usize << n;
        let (xm, zm) = self.masks();
        let mut m = CMat::zeros(dim, dim);
        for j in 0..dim {
            m[(j ^ xm, j)] = self.phase_on(j, zm);
        }
        Ok(m)
    }

    /// Tensor product `self ⊗ other`.
    pub fn tensor(&self, other: &PauliString) -> PauliString {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        PauliString { letters }
    }

    /// All `4^n - 1` non-identity strings on `n` qubits, in lexicographic order.
    pub fn all_nonidentity(n: usize) -> Vec<PauliString> {
        const ALPHABET: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
        (1..(1usize << (2 * n)))
            .map(|code| {
                let letters = (0..n).map(|q| ALPHABET[(code >> (2 * (n - 1 - q))) & 3]).collect();
                PauliString { letters }
            })
            .collect()
    }

    /// Embeds this string on `positions` of an `n`-qubit register.
    pub fn embed(&self, n: usize, positions: &[usize]) -> Result<PauliString> {
        if positions.len() != self.letters.len() {
            return Err(Error::invalid("embedding positions do not match string length"));
        }
        let ops: Vec<(usize, Pauli)> = positions.iter().copied().zip(self.letters.iter().copied()).collect();
        PauliString::from_sparse(n, &ops)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::invalid(format!("bad Pauli letter `{c}`"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { letters })
    }
}

impl TryFrom<String> for PauliString {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PauliString> for String {
    fn from(p: PauliString) -> String {
        p.to_string()
    }
}

/// Weighted sum of Pauli strings on `n` qubits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliSum {
    n: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    pub fn new(n: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        for (c, p) in &terms {
            if !c.is_finite() {
                return Err(Error::invalid(format!("non-finite coefficient on {p}")));
            }
            if p.len() != n {
                return Err(Error::invalid(format!("string {p} has length {} but n = {n}", p.len())));
            }
        }
        Ok(Self { n, terms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Merges duplicate strings (first occurrence keeps its position) and
    /// drops terms that cancel exactly.
    pub fn canonical(&self) -> PauliSum {
        let mut merged: Vec<(f64, PauliString)> = Vec::with_capacity(self.terms.len());
        for (c, p) in &self.terms {
            match merged.iter_mut().find(|(_, q)| q == p) {
                Some(entry) => entry.0 += c,
                None => merged.push((*c, p.clone())),
            }
        }
        merged.retain(|(c, _)| *c != 0.0);
        PauliSum { n: self.n, terms: merged }
    }

    /// `Σ |c_ℓ|`.
    pub fn one_norm(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }

    /// `Σ c_ℓ²`.
    pub fn coefficient_sq_sum(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c * c).sum()
    }

    pub fn identity_coefficient(&self) -> f64 {
        self.terms.iter().filter(|(_, p)| p.is_identity()).map(|(c, _)| c).sum()
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        linalg::check_dense(self.n)?;
        let dim = 1usize << self.n;
        let mut m = CMat::zeros(dim, dim);
        for (c, p) in &self.terms {
            let (xm, zm) = p.masks();
            for j in 0..dim {
                m[(j ^ xm, j)] += p.phase_on(j, zm) * *c;
            }
        }
        Ok(m)
    }
}

/// One-dimensional Ising chain `-J Σ Z_i Z_{i+1} - Σ h_i X_i - m Σ Z_i`.
/// Terms with zero coefficient are omitted.
pub fn build_ising_chain(n: usize, j: f64, h: &[f64], m: f64) -> Result<PauliSum> {
    if n == 0 {
        return Err(Error::invalid("Ising chain needs at least one site"));
    }
    if h.len() != n {
        return Err(Error::invalid(format!("expected {n} transverse fields, got {}", h.len())));
    }
    let mut terms = Vec::new();
    for i in 0..n.saturating_sub(1) {
        if j != 0.0 {
            terms.push((-j, PauliString::from_sparse(n, &[(i, Pauli::Z), (i + 1, Pauli::Z)])?));
        }
    }
    for (i, &hi) in h.iter().enumerate() {
        if hi != 0.0 {
            terms.push((-hi, PauliString::from_sparse(n, &[(i, Pauli::X)])?));
        }
    }
    if m != 0.0 {
        for i in 0..n {
            terms.push((-m, PauliString::from_sparse(n, &[(i, Pauli::Z)])?));
        }
    }
    PauliSum::new(n, terms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    Triangle,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub method: BoundMethod,
}

impl SpectralBounds {
    pub fn width(&self) -> f64 {
        self.lambda_plus - self.lambda_minus
    }
}

/// `λ± = ±Σ|c_k|`: every Pauli string has unit spectral norm. The empty
/// sum is the zero operator.
pub fn triangle_bounds(h: &PauliSum) -> Result<SpectralBounds> {
    let s = h.one_norm();
    Ok(SpectralBounds { lambda_minus: -s, lambda_plus: s, method: BoundMethod::Triangle })
}

/// Extreme eigenvalues from dense diagonalization.
pub fn exact_extremes(h: &PauliSum) -> Result<SpectralBounds> {
    let (values, _) = linalg::eigh(&h.to_matrix()?);
    Ok(SpectralBounds {
        lambda_minus: values[0],
        lambda_plus: values[values.len() - 1],
        method: BoundMethod::Exact,
    })
}

pub fn spectral_bounds(h: &PauliSum, method: BoundMethod) -> Result<SpectralBounds> {
    match method {
        BoundMethod::Triangle => triangle_bounds(h),
        BoundMethod::Exact => exact_extremes(h),
    }
}

/// Hamiltonian mapped into `[a, b]` together with the time rescaling that
/// undoes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledHamiltonian {
    pub h_tilde: PauliSum,
    pub interval_a: f64,
    pub interval_b: f64,
    /// `t̃ = time_factor · t`.
    pub time_factor: f64,
    /// `φ / t` in `e^{-i t̃ H̃} = e^{-iφ} e^{-i t H}`.
    pub global_phase_rate: f64,
    pub bounds: SpectralBounds,
}

impl RescaledHamiltonian {
    pub fn effective_time(&self, t: f64) -> f64 {
        self.time_factor * t
    }

    pub fn global_phase(&self, t: f64) -> f64 {
        self.global_phase_rate * t
    }
}

/// `H̃ = (H - λ₋I)(b - a)/(λ₊ - λ₋) + aI`, with the identity term emitted
/// explicitly as the leading term.
pub fn rescale(h: &PauliSum, bounds: SpectralBounds, a: f64, b: f64) -> Result<RescaledHamiltonian> {
    if !(0.0..1.0).contains(&a) || !(a < b && b <= 1.0) {
        return Err(Error::invalid(format!("interval [{a}, {b}] must satisfy 0 <= a < b <= 1")));
    }
    if bounds.lambda_minus > bounds.lambda_plus {
        return Err(Error::invalid("lambda_minus exceeds lambda_plus"));
    }
    let width = bounds.width();
    if width == 0.0 {
        return Err(Error::DegenerateSpectrum(bounds.lambda_plus));
    }
    let scale = (b - a) / width;
    let shift = a - bounds.lambda_minus * scale;
    let mut terms = vec![(shift, PauliString::identity(h.n()))];
    terms.extend(h.terms().iter().map(|(c, p)| (c * scale, p.clone())));
    let h_tilde = PauliSum::new(h.n(), terms)?.canonical();
    Ok(RescaledHamiltonian {
        h_tilde,
        interval_a: a,
        interval_b: b,
        time_factor: width / (b - a),
        global_phase_rate: (a * bounds.lambda_plus - b * bounds.lambda_minus) / (b - a),
        bounds,
    })
}

/// Both terms of the effective-time estimate for bounds that are `100r%`
/// loose around the exact extremes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTime {
    pub minimal: f64,
    pub overhead: f64,
}

impl EffectiveTime {
    pub fn total(&self) -> f64 {
        self.minimal + self.overhead
    }
}

pub fn effective_time_overhead(t: f64, r: f64, exact: SpectralBounds, a: f64, b: f64) -> Result<EffectiveTime> {
    if t < 0.0 || r < 0.0 {
        return Err(Error::invalid("t and r must be non-negative"));
    }
    if b <= a {
        return Err(Error::invalid("empty interval"));
    }
    let (lmin, lmax) = (exact.lambda_minus, exact.lambda_plus);
    Ok(EffectiveTime {
        minimal: t * (lmax - lmin) / (b - a),
        overhead: r * t * (lmax.abs() + lmin.abs()) / (b - a),
    })
}

/// Dense `exp(-i t H)`.
pub fn exact_propagator(h: &PauliSum, t: f64) -> Result<CMat> {
    Ok(linalg::expm_hermitian(&h.to_matrix()?, t))
}

/// Hamiltonian section of a TOML configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    pub n: usize,
    #[serde(rename = "J", alias = "j")]
    pub j: f64,
    pub h: Vec<f64>,
    pub m: f64,
    #[serde(default = "default_interval")]
    pub interval: [f64; 2],
    #[serde(default = "default_bound_method")]
    pub bounds: BoundMethod,
}

fn default_interval() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_bound_method() -> BoundMethod {
    BoundMethod::Triangle
}

impl HamiltonianSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build(&self) -> Result<PauliSum> {
        build_ising_chain(self.n, self.j, &self.h, self.m)
    }

    pub fn rescaled(&self) -> Result<RescaledHamiltonian> {
        let h = self.build()?;
        let bounds = spectral_bounds(&h, self.bounds)?;
        rescale(&h, bounds, self.interval[0], self.interval[1])
    }
}
