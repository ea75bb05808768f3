//! Banded LU with partial pivoting for the network Jacobians, and small
//! dense helpers built on nalgebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals. Entries outside
/// the band are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // row-major, entry (i, j) at i*(kl+ku+1) + (j + kl − i)
    a: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix { n, kl, ku, a: vec![0.0; n * (kl + ku + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && j + self.kl >= i && j <= i + self.ku
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.a[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if (i, j) lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.a[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.a[k] += v;
    }

    /// Returns a·self + b·I.
    pub fn scaled_plus_identity(&self, a: f64, b: f64) -> Self {
        let mut m = self.clone();
        for v in &mut m.a {
            *v *= a;
        }
        for i in 0..self.n {
            m.add(i, i, b);
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    pub fn lu(&self) -> Result<BandLu> {
        BandLu::factor(self)
    }
}

/// LU factors of a band matrix. Row interchanges widen the upper band to
/// kl + ku.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    w: usize,
    // row i holds columns i−kl ..= i+kl+ku at offset col + kl − i
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn factor(m: &BandMatrix) -> Result<Self> {
        let (n, kl, ku) = (m.n, m.kl, m.ku);
        let w = 2 * kl + ku + 1;
        let mut a = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n.saturating_sub(1));
            for j in lo..=hi {
                a[i * w + (j + kl - i)] = m.get(i, j);
            }
        }
        let at = |i: usize, j: usize| i * w + (j + kl - i);
        let mut piv = vec![0; n];
        let scale = m.a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a[at(k, k)].abs();
            for i in k + 1..=last {
                let v = a[at(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if !(best > f64::EPSILON * scale * n as f64) {
                return Err(Error::Singular("banded LU"));
            }
            let cmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    a.swap(at(k, j), at(p, j));
                }
            }
            let pivot = a[at(k, k)];
            for i in k + 1..=last {
                let l = a[at(i, k)] / pivot;
                a[at(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..=cmax {
                        a[at(i, j)] -= l * a[at(k, j)];
                    }
                }
            }
        }
        Ok(BandLu { n, kl, w, a, piv })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, w) = (self.n, self.kl, self.w);
        let at = |i: usize, j: usize| i * w + (j + kl - i);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.a[at(i, k)] * bk;
                }
            }
        }
        let ubw = w - kl - 1;
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..=(i + ubw).min(n - 1) {
                s -= self.a[at(i, j)] * b[j];
            }
            b[i] = s / self.a[at(i, i)];
        }
    }
}

/// Dense LU solve; errors on a singular matrix.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64], what: &'static str) -> Result<Vec<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(&nalgebra::DVector::from_column_slice(b))
        .ok_or(Error::Singular(what))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what));
    }
    Ok(x.as_slice().to_vec())
}

/// 1-norm condition number estimate from an explicit inverse (fine for the
/// small systems it is used on).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let norm1 = |m: &DMatrix<f64>| {
        (0..m.ncols())
            .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    match a.clone().try_inverse() {
        Some(inv) => norm1(a) * norm1(&inv),
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn band_lu_matches_dense_solve() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (30, 3, 3), (40, 10, 10), (25, 2, 5)] {
            let mut m = BandMatrix::zeros(n, kl, ku);
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    m.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dense = dense_solve(&m.to_dense(), &b, "test").unwrap();
            let mut x = b.clone();
            m.lu().unwrap().solve_in_place(&mut x);
            for (u, v) in x.iter().zip(&dense) {
                assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()), "n={n}");
            }
            let r = m.mul_vec(&x);
            for (u, v) in r.iter().zip(&b) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pivoting_is_required_and_done() {
        // zero leading diagonal forces a row interchange
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.set(0, 0, 0.0);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 1, 0.0);
        m.set(1, 2, 2.0);
        m.set(2, 1, 3.0);
        m.set(2, 2, 1.0);
        let mut x = vec![1.0, 2.0, 3.0];
        m.lu().unwrap().solve_in_place(&mut x);
        let r = m.mul_vec(&x);
        assert!((r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14 && (r[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_band_is_reported() {
        let m = BandMatrix::zeros(4, 1, 1);
        assert!(matches!(m.lu(), Err(Error::Singular(_))));
    }
}
