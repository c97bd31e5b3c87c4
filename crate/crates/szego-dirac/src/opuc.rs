//! Orthogonal polynomials on the unit circle at desk scale.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub struct SchurParameters {
    alpha: Vec<C64>,
}

impl SchurParameters {
    pub fn new(alpha: Vec<C64>) -> Result<Self> {
        if let Some((k, a)) = alpha.iter().enumerate().find(|(_, a)| !(a.norm() < 1.0)) {
            return Err(Error::validation(format!("|alpha_{k}| = {} is not below 1", a.norm())));
        }
        Ok(SchurParameters { alpha })
    }

    pub fn from_real(alpha: &[f64]) -> Result<Self> {
        Self::new(alpha.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    pub fn alpha(&self) -> &[C64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Monic `Phi_n` and its reversal `Phi_n^*`, coefficients in ascending powers.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CirclePolynomials {
    pub degree: usize,
    pub phi: Vec<C64>,
    pub phi_star: Vec<C64>,
}

/// `z^n conj(p(1/conj z))` on coefficient vectors.
pub fn reversal(p: &[C64]) -> Vec<C64> {
    p.iter().rev().map(|c| c.conj()).collect()
}

pub fn horner(p: &[C64], z: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, c| acc * z + c)
}

impl CirclePolynomials {
    pub fn phi_at(&self, z: C64) -> C64 {
        horner(&self.phi, z)
    }

    pub fn phi_star_at(&self, z: C64) -> C64 {
        horner(&self.phi_star, z)
    }
}

pub fn szego_recursion(alpha: &SchurParameters) -> CirclePolynomials {
    let mut phi = vec![C64::new(1.0, 0.0)];
    let mut star = vec![C64::new(1.0, 0.0)];
    for a in alpha.alpha() {
        let n = phi.len();
        let mut next = vec![C64::new(0.0, 0.0); n + 1];
        let mut next_star = vec![C64::new(0.0, 0.0); n + 1];
        for k in 0..n {
            next[k + 1] += phi[k];
            next[k] -= a.conj() * star[k];
            next_star[k] += star[k];
            next_star[k + 1] -= a * phi[k];
        }
        phi = next;
        star = next_star;
    }
    CirclePolynomials { degree: phi.len() - 1, phi, phi_star: star }
}

/// `lambda_n(0)` by the product formula.
pub fn christoffel_lambda0(alpha: &SchurParameters) -> f64 {
    alpha.alpha().iter().map(|a| (-a.norm_sqr()).ln_1p()).sum::<f64>().exp()
}

/// Bernstein-Szegő weight of the parameters sampled at `e^{2 pi i k / n}`,
/// normalized to a probability measure.
pub fn bernstein_szego_density(alpha: &SchurParameters, n: usize) -> Vec<f64> {
    let polys = szego_recursion(alpha);
    let lam = christoffel_lambda0(alpha);
    (0..n)
        .map(|k| {
            let z = C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
            lam / polys.phi_star_at(z).norm_sqr()
        })
        .collect()
}

/// Minimum of `||P||^2` over degree `<= m` with `P(0) = 1`, from the Gram matrix
/// of the monomials against `density` on a uniform circle grid.
pub fn christoffel_gram(density: &[f64], m: usize) -> Result<f64> {
    let n = density.len();
    if n <= 2 * m {
        return Err(Error::validation("grid too coarse for the requested degree"));
    }
    let moment = |d: i64| -> C64 {
        let s: C64 = density
            .iter()
            .enumerate()
            .map(|(k, w)| C64::from_polar(*w, 2.0 * PI * (d * k as i64) as f64 / n as f64))
            .sum();
        s / n as f64
    };
    let gram = DMatrix::from_fn(m + 1, m + 1, |j, k| moment(k as i64 - j as i64));
    let chol = gram.cholesky().ok_or_else(|| Error::numerical("Gram matrix is not positive definite"))?;
    let mut e0 = DVector::from_element(m + 1, C64::new(0.0, 0.0));
    e0[0] = C64::new(1.0, 0.0);
    let x = chol.solve(&e0);
    Ok(1.0 / x[0].re)
}

#[derive(Clone, Debug, Serialize)]
pub struct NevaiTotikReport {
    pub rho: f64,
    pub n_max: usize,
    pub lambda: Vec<f64>,
    pub lambda_inf: f64,
    /// `lambda_n(0) - lambda_inf(0)` for `n = 0..=n_max`.
    pub gap: Vec<f64>,
    pub rate: f64,
    pub expected: f64,
    pub relative_error: f64,
}

/// Decay of `lambda_n(0) - lambda_inf(0)` for `alpha_k = rho^{k+1}`.
pub fn nevai_totik_probe(rho: f64, n_max: usize) -> Result<NevaiTotikReport> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::validation(format!("rho = {rho} must lie in (0, 1)")));
    }
    if n_max < 4 {
        return Err(Error::validation("n_max must be at least 4"));
    }
    let log_factor = |k: usize| (-rho.powi(2 * (k as i32 + 1))).ln_1p();
    let mut tail_from = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let mut s = 0.0;
        let mut k = n;
        loop {
            let t = log_factor(k);
            s += t;
            if t.abs() < 1e-18 * s.abs() || k > n + 100_000 {
                break;
            }
            k += 1;
        }
        tail_from.push(s);
    }
    let lambda_inf = tail_from[0].exp();
    let lambda: Vec<f64> = tail_from.iter().map(|t| (tail_from[0] - t).exp()).collect();
    let gap: Vec<f64> = lambda.iter().zip(&tail_from).map(|(l, t)| -l * t.exp_m1()).collect();
    let lo = n_max / 2;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=n_max).map(|n| (n as f64, gap[n].ln())).unzip();
    let rate = -slope(&xs, &ys);
    let expected = 2.0 * (1.0 / rho).ln();
    Ok(NevaiTotikReport { rho, n_max, lambda, lambda_inf, gap, rate, expected, relative_error: (rate - expected).abs() / expected })
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn small_cases() {
        let p = szego_recursion(&SchurParameters::new(vec![]).unwrap());
        assert_eq!(p.phi, vec![c(1.0, 0.0)]);
        let a0 = c(0.3, -0.4);
        let p = szego_recursion(&SchurParameters::new(vec![a0]).unwrap());
        assert_eq!(p.phi, vec![-a0.conj(), c(1.0, 0.0)]);
        assert_eq!(christoffel_lambda0(&SchurParameters::new(vec![]).unwrap()), 1.0);
        assert!((christoffel_lambda0(&SchurParameters::from_real(&[0.5]).unwrap()) - 0.75).abs() < 1e-15);
        assert!(SchurParameters::from_real(&[0.2, 1.0]).is_err());
    }

    #[test]
    fn two_step_expansion() {
        let p = szego_recursion(&SchurParameters::from_real(&[0.5, 0.25]).unwrap());
        assert_eq!(p.phi, vec![c(-0.25, 0.0), c(-0.375, 0.0), c(1.0, 0.0)]);
        assert_eq!(p.phi_star, vec![c(1.0, 0.0), c(-0.375, 0.0), c(-0.25, 0.0)]);
        let p = szego_recursion(&SchurParameters::new(vec![c(0.0, 0.5), c(0.25, 0.0)]).unwrap());
        assert_eq!(p.phi, vec![c(-0.25, 0.0), c(0.0, 0.625), c(1.0, 0.0)]);
    }

    #[test]
    fn reversal_identity_on_dyadic_parameters() {
        let a = SchurParameters::new(vec![c(0.5, 0.25), c(-0.125, 0.5), c(0.75, 0.0), c(0.0, -0.375)]).unwrap();
        let p = szego_recursion(&a);
        assert_eq!(p.phi_star, reversal(&p.phi));
        assert_eq!(*p.phi.last().unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn product_formula_matches_gram_minimum() {
        let a = SchurParameters::new(vec![c(0.5, 0.1), c(-0.3, 0.4), c(0.2, 0.0), c(0.0, -0.6)]).unwrap();
        let w = bernstein_szego_density(&a, 2048);
        assert!((w.iter().sum::<f64>() / 2048.0 - 1.0).abs() < 1e-12);
        for m in 0..=a.len() {
            let prefix = SchurParameters::new(a.alpha()[..m].to_vec()).unwrap();
            let brute = christoffel_gram(&w, m).unwrap();
            assert!((brute - christoffel_lambda0(&prefix)).abs() < 1e-10, "m = {m}");
        }
    }

    #[test]
    fn nevai_totik_rates() {
        for rho in [0.5, 0.9] {
            let rep = nevai_totik_probe(rho, 40).unwrap();
            assert!(rep.relative_error < 0.1, "rho {rho}: {}", rep.rate);
            assert!(rep.gap.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
            assert!(rep.lambda.windows(2).all(|w| w[1] <= w[0]));
        }
        let a: Vec<C64> = (0..12).map(|k| C64::from_polar(0.3 + 0.05 * k as f64, k as f64)).collect();
        let lam: Vec<f64> =
            (0..=a.len()).map(|m| christoffel_lambda0(&SchurParameters::new(a[..m].to_vec()).unwrap())).collect();
        assert!(lam.windows(2).all(|w| w[1] < w[0]));
        assert!(nevai_totik_probe(1.0, 40).is_err());
    }
}
