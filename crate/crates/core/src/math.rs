//! Dense f64 vectors/matrices and a deterministic counter-based RNG.
//!
//! Everything downstream (training, sampling, simulation) is built on these
//! three types. All arithmetic is plain scalar f64 so that a fixed seed and a
//! fixed call sequence reproduce results bit-for-bit.

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};

/// Dense vector of f64 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vec64 {
    data: Vec<f64>,
}

impl Vec64 {
    pub fn new(data: Vec<f64>) -> Self {
        Vec64 { data }
    }

    pub fn zeros(n: usize) -> Self {
        Vec64 { data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vec64) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Largest absolute componentwise difference to `other`.
    pub fn linf_dist(&self, other: &Vec64) -> f64 {
        assert_eq!(self.len(), other.len(), "linf_dist: length mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &Vec64) -> Vec64 {
        assert_eq!(self.len(), other.len(), "sub: length mismatch");
        Vec64::new(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn add(&self, other: &Vec64) -> Vec64 {
        assert_eq!(self.len(), other.len(), "add: length mismatch");
        Vec64::new(
            self.data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Vec64 {
        Vec64::new(self.data.iter().map(|x| a * x).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Concatenate several vectors into one.
    pub fn concat(parts: &[&Vec64]) -> Vec64 {
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Vec64 { data }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.clone()
    }
}

impl From<Vec<f64>> for Vec64 {
    fn from(data: Vec<f64>) -> Self {
        Vec64 { data }
    }
}

impl Index<usize> for Vec64 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vec64 {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// Returns `a * x + y` elementwise.
pub fn axpy(a: f64, x: &Vec64, y: &Vec64) -> Vec64 {
    assert_eq!(x.len(), y.len(), "axpy: length mismatch");
    Vec64::new(
        x.as_slice()
            .iter()
            .zip(y.as_slice().iter())
            .map(|(xi, yi)| a * xi + yi)
            .collect(),
    )
}

/// Dense row-major matrix of f64 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Mat64 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat64 {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = if r > 0 { rows[0].len() } else { 0 };
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "from_rows: ragged rows");
            data.extend_from_slice(row);
        }
        Mat64 {
            data,
            rows: r,
            cols: c,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat64::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        assert!(i < self.rows, "row index out of range");
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Mat64 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        assert!(i < self.rows && j < self.cols, "matrix index out of range");
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat64 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        assert!(i < self.rows && j < self.cols, "matrix index out of range");
        &mut self.data[i * self.cols + j]
    }
}

/// Standard matrix-vector product, result length `m.rows()`.
pub fn matvec(m: &Mat64, x: &Vec64) -> Vec64 {
    assert_eq!(m.cols(), x.len(), "matvec: dimension mismatch");
    let mut out = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = m.row(i);
        let mut s = 0.0;
        for (a, b) in row.iter().zip(x.as_slice()) {
            s += a * b;
        }
        out.push(s);
    }
    Vec64::new(out)
}

/// Transposed matrix-vector product `mᵀ·x`, result length `m.cols()`.
pub fn matvec_t(m: &Mat64, x: &Vec64) -> Vec64 {
    assert_eq!(m.rows(), x.len(), "matvec_t: dimension mismatch");
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        let xi = x[i];
        let row = m.row(i);
        for (o, a) in out.iter_mut().zip(row.iter()) {
            *o += xi * a;
        }
    }
    Vec64::new(out)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based pseudorandom generator (SplitMix64).
///
/// The state is a plain 64-bit counter advanced by a fixed increment; each
/// output is a mix of the counter. Identical seed + identical call sequence
/// gives a bit-identical stream, and independent sub-streams are obtained by
/// deriving child seeds rather than sharing one generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rng {
    state: u64,
    seed: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive the seed of an independent child stream.
    pub fn derive_seed(seed: u64, stream: u64) -> u64 {
        mix64(seed ^ mix64(stream.wrapping_add(GOLDEN_GAMMA)))
    }

    /// Independent child generator for stream index `stream`.
    pub fn derive(&self, stream: u64) -> Rng {
        Rng::new(Self::derive_seed(self.seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`.
    pub fn next_below(&mut self, n: usize) -> usize {
        assert!(n > 0, "next_below: empty range");
        (self.next_u64() % n as u64) as usize
    }

    /// One standard-normal draw (Box–Muller, cosine branch).
    ///
    /// Consumes exactly two uniforms per call; no hidden spare is cached, so
    /// the stream position is a pure function of the call count.
    pub fn next_gauss(&mut self) -> f64 {
        let (g, _) = self.next_gauss_pair();
        g
    }

    fn next_gauss_pair(&mut self) -> (f64, f64) {
        // 1 - u ∈ (0, 1] keeps the log argument away from zero.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.next_below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// `n` independent standard-normal draws.
pub fn gauss_sample(rng: &mut Rng, n: usize) -> Vec64 {
    assert!(n >= 1, "gauss_sample: n must be >= 1");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (a, b) = rng.next_gauss_pair();
        out.push(a);
        if out.len() < n {
            out.push(b);
        }
    }
    Vec64::new(out)
}
