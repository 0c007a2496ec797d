//! Kernels and bias-augmented Gram matrices.
//!
//! The intercept is never a free variable: every sample is mapped to
//! `(phi(x), 1)`, so the augmented kernel is `K(x, x') + 1` and a decision
//! value is `sum_i c_i (K(x_i, x) + 1)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf {
        gamma: f64,
    },
    #[serde(rename = "poly")]
    Polynomial {
        degree: u32,
        coef0: f64,
        scale: f64,
    },
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        let k = KernelSpec::Rbf { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(degree: u32, coef0: f64, scale: f64) -> Result<Self> {
        let k = KernelSpec::Polynomial {
            degree,
            coef0,
            scale,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } => {
                if gamma.is_finite() && gamma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::domain(format!("rbf gamma must be > 0, got {gamma}")))
                }
            }
            KernelSpec::Polynomial {
                degree,
                coef0,
                scale,
            } => {
                if degree < 1 {
                    return Err(Error::domain("polynomial degree must be >= 1"));
                }
                if !coef0.is_finite() {
                    return Err(Error::domain("polynomial coef0 must be finite"));
                }
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::domain(format!(
                        "polynomial scale must be > 0, got {scale}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, KernelSpec::Linear)
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Rbf { .. } => "rbf",
            KernelSpec::Polynomial { .. } => "poly",
        }
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Polynomial {
                degree,
                coef0,
                scale,
            } => (scale * dot(a, b) + coef0).powi(degree as i32),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    if x.len() != x_prime.len() {
        return Err(Error::usage(format!(
            "kernel arguments differ in dimension ({} vs {})",
            x.len(),
            x_prime.len()
        )));
    }
    Ok(spec.eval_unchecked(x, x_prime))
}

/// Dense symmetric Gram matrix, optionally bias-augmented.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram {
    matrix: DMatrix<f64>,
    augmented: bool,
}

impl Gram {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.matrix[(i, i)]
    }

    /// `K c`.
    pub fn apply(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.matrix * c
    }

    /// `c^T K c`, clamped at zero against rounding on near-singular Grams.
    pub fn quad_form(&self, c: &DVector<f64>) -> f64 {
        c.dot(&self.apply(c)).max(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn from_matrix(matrix: DMatrix<f64>, augmented: bool) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::usage("Gram matrix must be square and non-empty"));
        }
        Ok(Gram { matrix, augmented })
    }
}

/// Assembles the Gram matrix of `rows`. Entries are computed independently
/// (upper triangle, then mirrored), so the result does not depend on the
/// thread schedule and is exactly symmetric.
pub fn gram_matrix<R: AsRef<[f64]> + Sync>(
    spec: &KernelSpec,
    rows: &[R],
    augmented: bool,
) -> Result<Gram> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::usage("cannot build a Gram matrix from empty data"));
    }
    let d = rows[0].as_ref().len();
    if rows.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::usage("rows have differing dimensions"));
    }
    let shift = if augmented { 1.0 } else { 0.0 };
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = rows[i].as_ref();
            (i..n)
                .map(|j| spec.eval_unchecked(xi, rows[j].as_ref()) + shift)
                .collect()
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(Gram {
        matrix: m,
        augmented,
    })
}

/// `sum_i c_i (K(x_i, x) + 1)`.
pub fn decision_expansion<R: AsRef<[f64]>>(
    spec: &KernelSpec,
    support: &[R],
    coeffs: &[f64],
    x: &[f64],
) -> Result<f64> {
    if support.len() != coeffs.len() {
        return Err(Error::usage(format!(
            "{} support rows but {} coefficients",
            support.len(),
            coeffs.len()
        )));
    }
    let mut acc = 0.0;
    for (row, &c) in support.iter().zip(coeffs) {
        acc += c * (kernel_eval(spec, row.as_ref(), x)? + 1.0);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let lin = KernelSpec::Linear;
        assert_eq!(kernel_eval(&lin, &[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let rbf = KernelSpec::rbf(3.7).unwrap();
        assert_eq!(kernel_eval(&rbf, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let rbf = KernelSpec::rbf(0.5).unwrap();
        let v = kernel_eval(&rbf, &[0.0], &[1.0]).unwrap();
        assert!((v - 0.606531).abs() < 1e-6);
        let poly = KernelSpec::polynomial(2, 1.0, 0.5).unwrap();
        assert_eq!(kernel_eval(&poly, &[1.0, 2.0], &[2.0, 1.0]).unwrap(), 9.0);
        assert!(kernel_eval(&lin, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::rbf(0.0).is_err());
        assert!(KernelSpec::polynomial(0, 1.0, 1.0).is_err());
        assert!(KernelSpec::polynomial(2, 1.0, -1.0).is_err());
    }

    #[test]
    fn identity_gram() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let plain = gram_matrix(&KernelSpec::Linear, &rows, false).unwrap();
        assert_eq!(plain.matrix(), &DMatrix::identity(2, 2));
        let aug = gram_matrix(&KernelSpec::Linear, &rows, true).unwrap();
        assert_eq!(
            aug.matrix(),
            &DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])
        );
        assert!(aug.is_augmented());
    }

    #[test]
    fn rbf_diagonal_is_one() {
        let rows = vec![vec![5.0, -2.0], vec![0.1, 0.2], vec![100.0, 3.0]];
        let g = gram_matrix(&KernelSpec::rbf(0.7).unwrap(), &rows, false).unwrap();
        for i in 0..3 {
            assert_eq!(g.diag(i), 1.0);
        }
        let empty: Vec<Vec<f64>> = vec![];
        assert!(gram_matrix(&KernelSpec::Linear, &empty, false).is_err());
    }

    #[test]
    fn expansion() {
        let row = vec![vec![0.6, 0.8]];
        assert_eq!(
            decision_expansion(&KernelSpec::Linear, &row, &[0.0], &[0.6, 0.8]).unwrap(),
            0.0
        );
        let v = decision_expansion(&KernelSpec::Linear, &row, &[1.0], &[0.6, 0.8]).unwrap();
        assert!((v - 2.0).abs() < 1e-15);
        assert!(decision_expansion(&KernelSpec::Linear, &row, &[1.0, 2.0], &[0.6, 0.8]).is_err());
    }

    #[test]
    fn serde_shape() {
        let text = serde_json::to_string(&KernelSpec::Rbf { gamma: 0.5 }).unwrap();
        assert_eq!(text, r#"{"kind":"rbf","params":{"gamma":0.5}}"#);
        let lin: KernelSpec = serde_json::from_str(r#"{"kind":"linear"}"#).unwrap();
        assert_eq!(lin, KernelSpec::Linear);
    }
}
