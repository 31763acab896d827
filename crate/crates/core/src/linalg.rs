//! Symmetric banded storage, Cholesky factorisation and conjugate gradients.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: row `i` keeps columns `i-bw ..= i`.
#[derive(Debug, Clone)]
pub struct BandedSym {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSym {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + self.bw + j - i
    }

    /// Entry `(i, j)` of the full symmetric matrix.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    /// Adds `v` to entry `(i, j)` with `i >= j` (lower triangle only).
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Zeroes row and column `k` and puts 1 on the diagonal.
    pub fn pin(&mut self, k: usize) {
        let lo = k.saturating_sub(self.bw);
        for j in lo..k {
            let id = self.idx(k, j);
            self.data[id] = 0.0;
        }
        for i in (k + 1)..(k + self.bw + 1).min(self.n) {
            let id = self.idx(i, k);
            self.data[id] = 0.0;
        }
        let id = self.idx(k, k);
        self.data[id] = 1.0;
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            let off = self.bw + lo - i;
            let mut acc = row[self.bw] * x[i];
            for (j, a) in (lo..i).zip(&row[off..self.bw]) {
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    /// In-place `L Lᵀ` factorisation.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let bw = self.bw;
        let w = bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                // overlap of rows i and j: columns lo .. j
                let lo_j = j.saturating_sub(bw).max(lo);
                let len = j - lo_j;
                let ri = i * w + bw + lo_j - i;
                let rj = j * w + bw + lo_j - j;
                let mut s = self.data[i * w + bw + j - i];
                let (a, b) = (&self.data[ri..ri + len], &self.data[rj..rj + len]);
                s -= dot(a, b);
                if j == i {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    self.data[i * w + bw] = s.sqrt();
                } else {
                    self.data[i * w + bw + j - i] = s / self.data[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators; fixed order keeps results reproducible
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        for r in 0..4 {
            acc[r] += a[4 * k + r] * b[4 * k + r];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    l: BandedSym,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let (n, bw, w) = (l.n, l.bw, l.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &l.data[i * w + bw + lo - i..i * w + bw];
            let s = dot(row, &y[lo..i]);
            y[i] = (y[i] - s) / l.data[i * w + bw];
        }
        for i in (0..n).rev() {
            y[i] /= l.data[i * w + bw];
            let lo = i.saturating_sub(bw);
            let yi = y[i];
            let row = &l.data[i * w + bw + lo - i..i * w + bw];
            for (yj, a) in y[lo..i].iter_mut().zip(row) {
                *yj -= a * yi;
            }
        }
        y
    }

    pub fn min_pivot(&self) -> f64 {
        self.l.diagonal().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Jacobi-preconditioned conjugate gradients on a banded symmetric matrix.
pub fn conjugate_gradient(a: &BandedSym, b: &[f64], tol: f64, maxit: usize) -> Result<(Vec<f64>, usize)> {
    let n = a.n();
    let diag = a.diagonal();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for it in 1..=maxit {
        a.matvec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: it, value: pap });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return Ok((x, it));
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    Err(Error::CgNoConvergence {
        iterations: maxit,
        residual: rnorm / bnorm,
    })
}

/// Factorisation of a constant symmetric tridiagonal SPD matrix.
#[derive(Debug, Clone)]
pub struct TridiagCholesky {
    diag: Vec<f64>,
    sub: Vec<f64>,
}

impl TridiagCholesky {
    /// `diag` has length n, `off` length n-1.
    pub fn new(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut d = vec![0.0; n];
        let mut s = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let mut v = diag[i];
            if i > 0 {
                s[i - 1] = off[i - 1] / d[i - 1];
                v -= s[i - 1] * s[i - 1];
            }
            if !(v > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: i, value: v });
            }
            d[i] = v.sqrt();
        }
        Ok(Self { diag: d, sub: s })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            if i > 0 {
                b[i] -= self.sub[i - 1] * b[i - 1];
            }
            b[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                b[i] -= self.sub[i] * b[i + 1];
            }
            b[i] /= self.diag[i];
        }
    }
}
