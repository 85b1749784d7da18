//! Banded symmetric positive definite solves for the Newton systems.

use crate::scalar::Real;

/// Symmetric matrix stored as its lower band: row `i` keeps columns
/// `i - bandwidth ..= i`.
#[derive(Debug, Clone)]
pub(crate) struct BandedSym<T> {
    n: usize,
    bandwidth: usize,
    data: Vec<T>,
}

impl<T: Real> BandedSym<T> {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(n.saturating_sub(1));
        Self { n, bandwidth, data: vec![T::zero(); n * (bandwidth + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn pos(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.bandwidth);
        r * (self.bandwidth + 1) + (self.bandwidth - (r - c))
    }

    /// Entry `(r, c)` with `c <= r`; zero outside the band.
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        if r - c > self.bandwidth {
            T::zero()
        } else {
            self.data[self.pos(r, c)]
        }
    }

    /// Sets entry `(r, c)`, `c <= r`, `r - c <= bandwidth`.
    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        let p = self.pos(r, c);
        self.data[p] = v;
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            let p = self.pos(i, i);
            self.data[p] = self.data[p] + v;
        }
    }

    /// Banded Cholesky factor, or `None` if the matrix is not numerically
    /// positive definite.
    pub fn cholesky(&self) -> Option<BandedCholesky<T>> {
        let mut l = self.clone();
        let bw = self.bandwidth;
        for j in 0..self.n {
            let k0 = j.saturating_sub(bw);
            let mut d = l.get(j, j);
            for k in k0..j {
                let v = l.get(j, k);
                d = d - v * v;
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l.set(j, j, d);
            for i in j + 1..(j + bw + 1).min(self.n) {
                let mut s = l.get(i, j);
                for k in i.saturating_sub(bw).max(k0)..j {
                    s = s - l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / d);
            }
        }
        Some(BandedCholesky { l })
    }
}

pub(crate) struct BandedCholesky<T> {
    l: BandedSym<T>,
}

impl<T: Real> BandedCholesky<T> {
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let (n, bw) = (self.l.n, self.l.bandwidth);
        let mut z = rhs.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in i.saturating_sub(bw)..i {
                s = s - self.l.get(i, k) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s = s - self.l.get(k, i) * z[k];
            }
            z[i] = s / self.l.get(i, i);
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_check(a: &[Vec<f64>], bw: usize) {
        let n = a.len();
        let mut m = BandedSym::<f64>::zeros(n, bw);
        for r in 0..n {
            for c in r.saturating_sub(bw)..=r {
                m.set(r, c, a[r][c]);
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let x = m.cholesky().unwrap().solve(&rhs);
        for r in 0..n {
            let lhs: f64 = (0..n).map(|c| a[r][c] * x[c]).sum();
            assert!((lhs - rhs[r]).abs() < 1e-10, "row {r}: {lhs} vs {}", rhs[r]);
        }
    }

    #[test]
    fn solves_dense_spd_system() {
        let a: Vec<Vec<f64>> = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
        dense_check(&a, 2);
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 7;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c: usize| match r.abs_diff(c) {
                        0 => 4.0,
                        1 => -1.0,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        dense_check(&a, 1);
    }

    #[test]
    fn rejects_indefinite() {
        let mut m = BandedSym::<f64>::zeros(2, 1);
        m.set(0, 0, 1.0);
        m.set(1, 0, 2.0);
        m.set(1, 1, 1.0);
        assert!(m.cholesky().is_none());
    }
}
