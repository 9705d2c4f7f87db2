//! Small dense symmetric linear algebra for the mixed-model fits.

use crate::error::{Error, Result};

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub struct SymMat {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.n + c]
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn decompose(m: &SymMat) -> Result<Cholesky> {
        let n = m.n;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = m.at(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Config(format!(
                            "matrix not positive definite at pivot {i} ({sum:.3e})"
                        )));
                    }
                    l[i * n + j] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>() * 2.0
    }

    /// Solve A x = b in place.
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let mut sum = x[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in i + 1..n {
                sum -= self.l[k * n + i] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        x
    }

    /// A^{-1} via n solves against the identity.
    pub fn inverse(&self) -> SymMat {
        let n = self.n;
        let mut inv = SymMat::zeros(n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve_vec(&e);
            for r in 0..n {
                *inv.at_mut(r, c) = col[r];
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_spd(n: usize, rng: &mut Rng) -> SymMat {
        // A = B Bᵀ + n I
        let b: Vec<f64> = (0..n * n).map(|_| rng.normal()).collect();
        let mut m = SymMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = if i == j { n as f64 } else { 0.0 };
                for k in 0..n {
                    acc += b[i * n + k] * b[j * n + k];
                }
                *m.at_mut(i, j) = acc;
            }
        }
        m
    }

    #[test]
    fn solve_recovers_known_vector() {
        let mut rng = Rng::new(5);
        for n in [1usize, 3, 8, 13] {
            let m = random_spd(n, &mut rng);
            let x_true: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let mut b = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    b[i] += m.at(i, j) * x_true[j];
                }
            }
            let chol = Cholesky::decompose(&m).unwrap();
            let x = chol.solve_vec(&b);
            for (a, e) in x.iter().zip(&x_true) {
                assert!((a - e).abs() < 1e-9 * e.abs().max(1.0), "{a} vs {e}");
            }
        }
    }

    #[test]
    fn log_det_matches_two_by_two_closed_form() {
        let mut m = SymMat::zeros(2);
        *m.at_mut(0, 0) = 4.0;
        *m.at_mut(0, 1) = 1.0;
        *m.at_mut(1, 0) = 1.0;
        *m.at_mut(1, 1) = 3.0;
        let chol = Cholesky::decompose(&m).unwrap();
        assert!((chol.log_det() - (11.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let mut rng = Rng::new(8);
        let m = random_spd(6, &mut rng);
        let inv = Cholesky::decompose(&m).unwrap().inverse();
        for i in 0..6 {
            for j in 0..6 {
                let mut acc = 0.0;
                for k in 0..6 {
                    acc += m.at(i, k) * inv.at(k, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((acc - expect).abs() < 1e-9, "({i},{j}) = {acc}");
            }
        }
    }

    #[test]
    fn non_spd_is_rejected() {
        let mut m = SymMat::zeros(2);
        *m.at_mut(0, 0) = 1.0;
        *m.at_mut(0, 1) = 2.0;
        *m.at_mut(1, 0) = 2.0;
        *m.at_mut(1, 1) = 1.0;
        assert!(Cholesky::decompose(&m).is_err());
    }
}
