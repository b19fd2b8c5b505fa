use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// Hyperparameters of an ARD Matérn 5/2 kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let params = KernelParams {
            signal_variance,
            lengthscales,
            noise_variance,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::input(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if self.lengthscales.is_empty() {
            return Err(Error::input("kernel needs at least one lengthscale"));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(**l > 0.0 && l.is_finite()))
        {
            return Err(Error::input(format!("lengthscale must be positive, got {l}")));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::input(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.lengthscales.len()
    }
}

/// Matérn 5/2 covariance between two design vectors.
pub fn matern52(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64> {
    if a.len() != b.len() || a.len() != params.dimension() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {} with {} lengthscales",
            a.len(),
            b.len(),
            params.dimension()
        )));
    }
    params.validate()?;
    Ok(matern52_unchecked(
        a,
        b,
        &params.lengthscales,
        params.signal_variance,
    ))
}

#[inline]
pub(crate) fn scaled_distance(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let d = (x - y) / l;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub(crate) fn matern52_from_distance(r: f64, signal_variance: f64) -> f64 {
    let s5r = SQRT5 * r;
    signal_variance * (1.0 + s5r + 5.0 * r * r / 3.0) * (-s5r).exp()
}

/// `(5/3)·σ²·(1 + √5 r)·exp(−√5 r)`; multiplied by `(Δ_d/ℓ_d)²` this is
/// the derivative of the kernel with respect to `ln ℓ_d`.
#[inline]
pub(crate) fn matern52_lengthscale_factor(r: f64, signal_variance: f64) -> f64 {
    let s5r = SQRT5 * r;
    signal_variance * (5.0 / 3.0) * (1.0 + s5r) * (-s5r).exp()
}

#[inline]
pub(crate) fn matern52_unchecked(a: &[f64], b: &[f64], lengthscales: &[f64], sf2: f64) -> f64 {
    matern52_from_distance(scaled_distance(a, b, lengthscales), sf2)
}

/// Noise-free kernel matrix over a set of points.
pub fn kernel_matrix(points: &[Vec<f64>], params: &KernelParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    if let Some(p) = points.iter().find(|p| p.len() != params.dimension()) {
        return Err(Error::input(format!(
            "point of dimension {} for a {}-dimensional kernel",
            p.len(),
            params.dimension()
        )));
    }
    let m = points.len();
    let mut k = DMatrix::zeros(m, m);
    for i in 0..m {
        k[(i, i)] = params.signal_variance;
        for j in 0..i {
            let v = matern52_unchecked(
                &points[i],
                &points[j],
                &params.lengthscales,
                params.signal_variance,
            );
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize, sf2: f64) -> KernelParams {
        KernelParams::new(sf2, vec![1.0; n], 0.0).unwrap()
    }

    #[test]
    fn zero_distance_gives_signal_variance() {
        let p = unit(3, 2.0);
        let x = [0.3, -1.0, 4.0];
        assert_eq!(matern52(&x, &x, &p).unwrap(), 2.0);
    }

    #[test]
    fn unit_distance_closed_form() {
        // (1 + √5 + 5/3)·exp(−√5)
        let expected = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        let got = matern52(&[0.0], &[1.0], &unit(1, 1.0)).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.52399).abs() < 1e-5);
    }

    #[test]
    fn decays_to_zero_far_away() {
        let got = matern52(&[0.0], &[1e3], &unit(1, 1.0)).unwrap();
        assert!(got < 1e-300);
    }

    #[test]
    fn symmetric_and_checks_dimension() {
        let p = KernelParams::new(1.3, vec![0.4, 2.0], 0.0).unwrap();
        let a = [0.1, 0.7];
        let b = [0.9, -0.2];
        assert_eq!(matern52(&a, &b, &p).unwrap(), matern52(&b, &a, &p).unwrap());
        assert!(matches!(matern52(&a, &[0.0], &p), Err(Error::Input(_))));
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(KernelParams::new(0.0, vec![1.0], 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![-1.0], 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![1.0], -1e-9).is_err());
    }
}
