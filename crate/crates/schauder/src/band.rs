//! Direct banded LU factorization with partial pivoting.
//!
//! Structured-grid Dirichlet systems ordered lexicographically are banded
//! (tridiagonal in 1-D / radial mode, bandwidth ~ one grid line in 2-D), so a
//! band factorization is the natural desk-scale direct solver. Storage is
//! LAPACK-style: `kl` extra superdiagonal rows absorb pivoting fill-in.

use crate::error::{Error, Result};

/// Band matrix with `kl` subdiagonals and `ku` superdiagonals.
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// data[row * width + (j - i + kl + ku)] = A[i][j], width = 2*kl + ku + 1
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> BandMatrix {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; n * width],
        }
    }

    fn width(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    #[inline]
    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.width() + (j + self.kl + self.ku - i)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        let o = self.offset(i, j);
        self.data[o] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let o = self.offset(i, j);
        self.data[o] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.kl < i || j > i + self.kl + self.ku {
            return 0.0;
        }
        self.data[self.offset(i, j)]
    }

    /// Factor in place (scaled partial pivoting). Rows of very different
    /// magnitude coexist in these systems (unit boundary rows next to 1/h^2
    /// stencil rows), so pivots are judged relative to their own row norms.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let mut row_norm: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(kl);
                let hi = (i + kl + ku).min(n - 1);
                (lo..=hi).map(|j| self.get(i, j).abs()).fold(0.0, f64::max)
            })
            .collect();
        if row_norm.contains(&0.0) {
            return Err(Error::EigenvalueCrossing("zero row".into()));
        }
        let mut pivots = vec![0usize; n];
        for col in 0..n {
            // pivot search within the band below the diagonal, scaled by the
            // original row norms
            let last = (col + kl).min(n - 1);
            let mut p = col;
            let mut best = self.get(col, col).abs() / row_norm[col];
            for r in (col + 1)..=last {
                let v = self.get(r, col).abs() / row_norm[r];
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= 1e-14 {
                return Err(Error::EigenvalueCrossing(format!(
                    "scaled pivot {best:.3e} at column {col}"
                )));
            }
            pivots[col] = p;
            if p != col {
                // swap rows col and p over their shared band extent
                let hi = (col + kl + ku).min(n - 1);
                for j in col..=hi {
                    let a = self.get(col, j);
                    let b = self.get(p, j);
                    self.set(col, j, b);
                    self.set(p, j, a);
                }
                row_norm.swap(col, p);
            }
            let piv = self.get(col, col);
            for r in (col + 1)..=last {
                let m = self.get(r, col) / piv;
                if m != 0.0 {
                    let hi = (col + kl + ku).min(n - 1);
                    for j in (col + 1)..=hi {
                        let v = self.get(r, j) - m * self.get(col, j);
                        self.set(r, j, v);
                    }
                }
                self.set(r, col, m); // store multiplier
            }
        }
        Ok(BandLu { mat: self, pivots })
    }
}

/// Factored system ready for repeated right-hand sides.
pub struct BandLu {
    mat: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let ku = self.mat.ku;
        assert_eq!(b.len(), n);
        // forward: apply permutations and L
        for col in 0..n {
            let p = self.pivots[col];
            if p != col {
                b.swap(col, p);
            }
            let last = (col + kl).min(n - 1);
            for r in (col + 1)..=last {
                b[r] -= self.mat.get(r, col) * b[col];
            }
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let hi = (i + kl + ku).min(n - 1);
            let mut s = b[i];
            for j in (i + 1)..=hi {
                s -= self.mat.get(i, j) * b[j];
            }
            b[i] = s / self.mat.get(i, i);
        }
    }
}

/// Assemble from triplets, sizing the band from the largest index offset.
pub fn band_from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> BandMatrix {
    let mut kl = 0usize;
    let mut ku = 0usize;
    for &(i, j, _) in entries {
        if i > j {
            kl = kl.max(i - j);
        } else {
            ku = ku.max(j - i);
        }
    }
    let mut m = BandMatrix::zeros(n, kl, ku);
    for &(i, j, v) in entries {
        m.add(i, j, v);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_poisson() {
        // -u'' = pi^2 sin(pi x) on (0,1), u(0)=u(1)=0, exact u = sin(pi x)
        let n = 199;
        let h = 1.0 / (n + 1) as f64;
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, 2.0 / (h * h)));
            if i > 0 {
                entries.push((i, i - 1, -1.0 / (h * h)));
            }
            if i + 1 < n {
                entries.push((i, i + 1, -1.0 / (h * h)));
            }
        }
        let lu = band_from_triplets(n, &entries).factor().unwrap();
        let pi = std::f64::consts::PI;
        let mut b: Vec<f64> = (1..=n)
            .map(|i| pi * pi * (pi * i as f64 * h).sin())
            .collect();
        lu.solve(&mut b);
        for (i, v) in b.iter().enumerate() {
            let exact = (pi * (i + 1) as f64 * h).sin();
            assert!((v - exact).abs() < 1e-4, "node {i}: {v} vs {exact}");
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] requires a row swap
        let entries = vec![(0usize, 1usize, 1.0), (1, 0, 1.0)];
        let lu = band_from_triplets(2, &entries).factor().unwrap();
        let mut b = vec![3.0, 5.0];
        lu.solve(&mut b);
        assert!((b[0] - 5.0).abs() < 1e-14);
        assert!((b[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_rejected() {
        let entries = vec![(0usize, 0usize, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)];
        assert!(band_from_triplets(2, &entries).factor().is_err());
    }

    #[test]
    fn random_dense_band_roundtrip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 60usize;
        let (kl, ku) = (4, 3);
        let mut entries = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                entries.push((i, j, rng.gen_range(-1.0..1.0)));
            }
            entries.push((i, i, 8.0)); // keep it comfortably nonsingular
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        // b = A x
        let mut b = vec![0.0; n];
        for &(i, j, v) in &entries {
            b[i] += v * x_true[j];
        }
        let lu = band_from_triplets(n, &entries).factor().unwrap();
        lu.solve(&mut b);
        for i in 0..n {
            assert!((b[i] - x_true[i]).abs() < 1e-11, "x[{i}]");
        }
    }
}
