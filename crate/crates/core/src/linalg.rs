//! Small dense-vector helpers and banded factorizations for the structured
//! meshes (bandwidth 1 in 1D, `nx` in 2D).

use crate::error::{Error, Result};
use crate::form::SymmetricForm;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Cholesky factor of a symmetric positive definite banded matrix.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    // Row i holds L[i][i-bw..=i], left-padded.
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(form: &SymmetricForm) -> Result<Self> {
        let n = form.order();
        let bw = form.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for (i, j, v) in form.upper() {
            // lower entry (j, i)
            l[j * w + bw + i - j] = v;
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l[i * w + bw + j - i];
                let k0 = lo.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + bw + k - i] * l[j * w + bw + k - j];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite("banded Cholesky pivot"));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + bw + j - i] = s / l[j * w + bw];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_in_place(b);
        self.backward_in_place(b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// `b <- L⁻¹ b`
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + bw + k - i] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }

    /// `b <- L⁻ᵀ b`
    pub fn backward_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * w + bw + i - k] * b[k];
            }
            b[i] = s / self.l[i * w + bw];
        }
    }

    /// `sqrt(bᵀ S⁻¹ b)`, the dual norm of `b` with respect to the factored form.
    pub fn dual_norm(&self, b: &[f64]) -> f64 {
        let x = self.solve(b);
        dot(b, &x).max(0.0).sqrt()
    }
}

/// LU factorization with partial pivoting of a banded matrix (LAPACK `gbtf2`
/// layout). Used for symmetric but possibly indefinite Hessians.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab
    }

    pub fn factor(form: &SymmetricForm) -> Result<Self> {
        let n = form.order();
        let bw = form.bandwidth();
        let (kl, ku) = (bw, bw);
        let ldab = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
            ipiv: vec![0; n],
        };
        let scale = form.max_abs().max(f64::MIN_POSITIVE);
        for (i, j, v) in form.upper() {
            let p = lu.at(i, j);
            lu.ab[p] = v;
            let p = lu.at(j, i);
            lu.ab[p] = v;
        }
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = 0.0f64;
            for r in 0..=km {
                let v = lu.ab[lu.at(j + r, j)].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            lu.ipiv[j] = j + jp;
            if best <= 1e-14 * scale {
                return Err(Error::Singular("banded LU pivot"));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let (a, b) = (lu.at(j, c), lu.at(j + jp, c));
                    lu.ab.swap(a, b);
                }
            }
            if km > 0 {
                let piv = lu.ab[lu.at(j, j)];
                for r in 1..=km {
                    let p = lu.at(j + r, j);
                    lu.ab[p] /= piv;
                }
                for c in j + 1..=ju {
                    let ujc = lu.ab[lu.at(j, c)];
                    if ujc == 0.0 {
                        continue;
                    }
                    for r in 1..=km {
                        let lrj = lu.ab[lu.at(j + r, j)];
                        let p = lu.at(j + r, c);
                        lu.ab[p] -= lrj * ujc;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                x.swap(j, p);
            }
            let km = self.kl.min(n - 1 - j);
            let xj = x[j];
            for r in 1..=km {
                x[j + r] -= self.ab[self.at(j + r, j)] * xj;
            }
        }
        let kv = self.kl + self.ku;
        for j in (0..n).rev() {
            x[j] /= self.ab[self.at(j, j)];
            let xj = x[j];
            for i in j.saturating_sub(kv)..j {
                x[i] -= self.ab[self.at(i, j)] * xj;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_banded(n: usize, bw: usize, shift: f64, seed: u64) -> SymmetricForm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, shift + rng.gen_range(-1.0..1.0)));
            for j in i + 1..(i + bw + 1).min(n) {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        SymmetricForm::from_triplets(n, t).unwrap()
    }

    #[test]
    fn cholesky_solves_spd_band() {
        let s = random_banded(40, 5, 12.0, 1);
        let ch = BandedCholesky::factor(&s).unwrap();
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let x = ch.solve(&b);
        let r = sub(&s.apply(&x), &b);
        assert!(norm2(&r) < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = random_banded(20, 2, 0.0, 2);
        assert!(BandedCholesky::factor(&s).is_err());
    }

    #[test]
    fn lu_solves_indefinite_band_against_dense() {
        for (n, bw, seed) in [(1usize, 0usize, 3u64), (7, 1, 4), (50, 6, 5), (33, 32, 6)] {
            let s = random_banded(n, bw, 0.0, seed);
            let lu = BandedLu::factor(&s).unwrap();
            let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
            let x = lu.solve(&b);
            let dense = s
                .to_dense()
                .lu()
                .solve(&DVector::from_column_slice(&b))
                .unwrap();
            for i in 0..n {
                assert!((x[i] - dense[i]).abs() < 1e-8 * (1.0 + dense[i].abs()), "n={n}");
            }
        }
    }

    #[test]
    fn lu_reports_singular() {
        let s = SymmetricForm::from_triplets(3, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 1, 1.0), (2, 2, 1.0)])
            .unwrap();
        assert!(BandedLu::factor(&s).is_err());
    }
}
