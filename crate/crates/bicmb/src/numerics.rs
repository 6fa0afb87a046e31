//! Small dense complex matrices, a one-sided Jacobi SVD, and seeded random
//! number streams. Everything here is sized for antenna-array dimensions
//! (at most 8x8), so simplicity and numerical robustness win over asymptotics.

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Largest matrix dimension the SVD is specified for.
pub const MAX_DIM: usize = 8;

/// Reconstruction tolerance for `svd`, relative to the largest entry of the input.
pub const SVD_RECONSTRUCTION_TOL: f64 = 1e-9;

/// Unitarity tolerance for the factors returned by `svd`.
pub const SVD_UNITARITY_TOL: f64 = 1e-10;

// ---------------------------------------------------------------------------
// complex matrices
// ---------------------------------------------------------------------------

/// Dense complex matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    /// Builds a matrix from row-major data. All entries must be finite.
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "matrix shape {}x{} does not match {} entries",
                rows,
                cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "inner dimensions must agree");
        Self::from_fn(self.rows, rhs.cols, |i, j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..self.cols {
                acc += self[(i, k)] * rhs[(k, j)];
            }
            acc
        })
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "vector length must match columns");
        (0..self.rows)
            .map(|i| {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..self.cols {
                    acc += self[(i, k)] * v[k];
                }
                acc
            })
            .collect()
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// max |self - rhs| over entries.
    pub fn max_abs_diff(&self, rhs: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        self.data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// True when `self^H * self` is within `tol` of the identity (entrywise).
    pub fn is_unitary(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        self.hermitian()
            .mul(self)
            .max_abs_diff(&Self::identity(self.rows))
            <= tol
    }

    /// Copy of the first `k` columns.
    pub fn take_cols(&self, k: usize) -> Self {
        assert!(k <= self.cols);
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    fn col(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    fn set_col(&mut self, j: usize, v: &[Complex64]) {
        for i in 0..self.rows {
            self[(i, j)] = v[i];
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

// ---------------------------------------------------------------------------
// singular value decomposition
// ---------------------------------------------------------------------------

/// Factorization `a = u * diag(sigma) * v^H` with square unitary `u`, `v`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// rows x rows unitary.
    pub u: CMatrix,
    /// Singular values, non-increasing, length min(rows, cols).
    pub sigma: Vec<f64>,
    /// cols x cols unitary.
    pub v: CMatrix,
}

/// One-sided Jacobi SVD for matrices up to [`MAX_DIM`] in each dimension.
///
/// Rotations orthogonalize column pairs of a working copy; accumulated
/// rotations form `v`, normalized columns form the thin part of `u`, and the
/// basis is completed deterministically for the square factors.
pub fn svd(a: &CMatrix) -> Result<SvdResult> {
    if a.rows() > MAX_DIM || a.cols() > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "svd supports at most {MAX_DIM}x{MAX_DIM}, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if a.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    if a.rows() < a.cols() {
        // Work on the conjugate transpose and swap the factors back.
        let t = svd(&a.hermitian())?;
        return Ok(SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }

    let (m, n) = (a.rows(), a.cols());
    let mut b = a.clone();
    let mut v = CMatrix::identity(n);

    const MAX_SWEEPS: usize = 64;
    let tol = 1e-14;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let bp = b.col(p);
                let bq = b.col(q);
                let app: f64 = bp.iter().map(|z| z.norm_sqr()).sum();
                let aqq: f64 = bq.iter().map(|z| z.norm_sqr()).sum();
                let apq: Complex64 = bp.iter().zip(&bq).map(|(x, y)| x.conj() * y).sum();
                let d = apq.norm();
                if d <= tol * (app * aqq).sqrt() || app == 0.0 || aqq == 0.0 {
                    continue;
                }
                rotated = true;
                // Phase factor makes the 2x2 Gram matrix real, then a plain
                // Jacobi rotation annihilates its off-diagonal.
                let phase = apq / d;
                let tau = (aqq - app) / (2.0 * d);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let e = phase.conj();
                let mut new_p = Vec::with_capacity(m);
                let mut new_q = Vec::with_capacity(m);
                for i in 0..m {
                    new_p.push(c * bp[i] - s * e * bq[i]);
                    new_q.push(s * bp[i] + c * e * bq[i]);
                }
                b.set_col(p, &new_p);
                b.set_col(q, &new_q);
                let vp = v.col(p);
                let vq = v.col(q);
                let mut nvp = Vec::with_capacity(n);
                let mut nvq = Vec::with_capacity(n);
                for i in 0..n {
                    nvp.push(c * vp[i] - s * e * vq[i]);
                    nvq.push(s * vp[i] + c * e * vq[i]);
                }
                v.set_col(p, &nvp);
                v.set_col(q, &nvq);
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort them non-increasing.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| b.col(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());

    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut v_sorted = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        v_sorted.set_col(dst, &v.col(src));
    }

    let rank_tol = a.max_abs().max(1.0) * (m as f64) * 1e-14;
    let mut u = CMatrix::zeros(m, m);
    let mut filled = 0;
    for (dst, &src) in order.iter().enumerate() {
        if norms[src] > rank_tol {
            let col: Vec<Complex64> = b.col(src).iter().map(|z| z / norms[src]).collect();
            u.set_col(dst, &col);
            filled = dst + 1;
        } else {
            break;
        }
    }
    complete_basis(&mut u, filled);

    Ok(SvdResult {
        u,
        sigma,
        v: v_sorted,
    })
}

/// Fills columns `filled..` of `u` with an orthonormal completion, drawing
/// candidates from the standard basis (deterministic).
fn complete_basis(u: &mut CMatrix, filled: usize) {
    let m = u.rows();
    let mut have = filled;
    let mut candidate = 0;
    while have < m {
        assert!(candidate < m, "basis completion ran out of candidates");
        let mut w = vec![Complex64::new(0.0, 0.0); m];
        w[candidate] = Complex64::new(1.0, 0.0);
        candidate += 1;
        // Two Gram-Schmidt passes keep the completion orthogonal to 1e-14.
        for _ in 0..2 {
            for j in 0..have {
                let col = u.col(j);
                let proj: Complex64 = col.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                for i in 0..m {
                    w[i] -= proj * col[i];
                }
            }
        }
        let norm: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 0.5 {
            continue; // candidate nearly in the span, try the next one
        }
        let col: Vec<Complex64> = w.iter().map(|z| z / norm).collect();
        u.set_col(have, &col);
        have += 1;
    }
}

// ---------------------------------------------------------------------------
// random number streams
// ---------------------------------------------------------------------------

/// Seeded random stream; `seed` and `stream` fully determine the output, so
/// parallel workers can each own an independent stream without coordination.
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// One draw from the circularly symmetric unit-variance complex Gaussian
/// (variance 1/2 per real dimension).
pub fn gaussian_complex_one(rng: &mut RngStream) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `count` i.i.d. unit-variance complex Gaussian samples.
pub fn gaussian_complex(rng: &mut RngStream, count: usize) -> Vec<Complex64> {
    (0..count).map(|_| gaussian_complex_one(rng)).collect()
}

/// Samples an `m x n` matrix with i.i.d. unit-variance complex Gaussian
/// entries and returns the largest `s` eigenvalues of `h * h^H`, i.e. the
/// squared singular values of `h`, sorted non-increasing.
pub fn wishart_eigs(rng: &mut RngStream, n: usize, m: usize, s: usize) -> Result<Vec<f64>> {
    if s == 0 || s > n.min(m) {
        return Err(Error::InvalidInput(format!(
            "requested {s} eigenvalues from a {m}x{n} channel"
        )));
    }
    let h = CMatrix::from_fn(m, n, |_, _| gaussian_complex_one(rng));
    let dec = svd(&h)?;
    Ok(dec.sigma.iter().take(s).map(|x| x * x).collect())
}
