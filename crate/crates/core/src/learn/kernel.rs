use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K(x, z) = (Σₖ exp(−γ (xₖ − zₖ)²))^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaKernel {
    pub gamma: f64,
    pub degree: u32,
}

impl AnovaKernel {
    pub fn new(gamma: f64, degree: u32) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("kernel gamma must be positive, got {gamma}")));
        }
        if degree == 0 {
            return Err(Error::Config("kernel degree must be at least 1".into()));
        }
        Ok(AnovaKernel { gamma, degree })
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        let s: f64 = x
            .iter()
            .zip(z)
            .map(|(a, b)| (-self.gamma * (a - b) * (a - b)).exp())
            .sum();
        s.powi(self.degree as i32)
    }

    pub fn gram(&self, rows: &[Vec<f64>]) -> nalgebra::DMatrix<f64> {
        let n = rows.len();
        let mut k = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval(&rows[i], &rows[j]);
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

pub fn anova_kernel(x: &[f64], z: &[f64], gamma: f64, degree: u32) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::Shape(format!(
            "kernel inputs differ in length ({} vs {})",
            x.len(),
            z.len()
        )));
    }
    Ok(AnovaKernel::new(gamma, degree)?.eval(x, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let x = vec![0.3; 25];
        assert_eq!(anova_kernel(&x, &x, 2.0, 3).unwrap(), 25f64.powi(3));
        let mut z = x.clone();
        z[4] += 1.0;
        let k = anova_kernel(&x, &z, 1.0, 1).unwrap();
        assert!((k - (24.0 + (-1f64).exp())).abs() < 1e-12);
        assert!(anova_kernel(&x, &z[..3], 1.0, 1).is_err());
        assert!(AnovaKernel::new(0.0, 1).is_err());
        assert!(AnovaKernel::new(1.0, 0).is_err());
    }
}
