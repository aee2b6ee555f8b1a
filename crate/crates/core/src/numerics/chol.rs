use super::Mat;
use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &Mat) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::shape("cholesky of a non-square matrix"));
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for p in 0..j {
                d -= l[j * n + p] * l[j * n + p];
            }
            if !(d > 0.0) {
                return Err(Error::Internal(format!(
                    "matrix is not positive definite (pivot {j} = {d})"
                )));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                let mut s = a.get(i, j);
                for p in 0..j {
                    s -= ri[p] * rj[p];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, lower: l })
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::shape("cholesky solve: rhs length mismatch"));
        }
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for p in 0..i {
                s -= l[i * n + p] * y[p];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for p in (i + 1)..n {
                s -= l[p * n + i] * y[p];
            }
            y[i] = s / l[i * n + i];
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn solves_spd_system() {
        let mut rng = Rng::new(1, 1);
        let n = 12;
        let g = Mat::from_vec(n, n, rng.standard_normal_vec(n * n)).unwrap();
        let mut a = g.matmul(&g.transpose()).unwrap();
        for i in 0..n {
            a.set(i, i, a.get(i, i) + 0.5);
        }
        let x = rng.standard_normal_vec(n);
        let b: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a.get(i, j) * x[j]).sum())
            .collect();
        let sol = Cholesky::factor(&a).unwrap().solve(&b).unwrap();
        for (s, t) in sol.iter().zip(&x) {
            assert!((s - t).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(Cholesky::factor(&a).is_err());
    }
}
