//! Quadrature rules and small fitting helpers.

use crate::error::{Error, Result};

/// Number of nodes in the composite Gauss-Lobatto rule used on integration cells.
pub const LOBATTO_NODES: usize = 7;

/// Seven-point Gauss-Lobatto rule mapped to `[0, 1]`: `(fractions, weights)`.
///
/// Exact for polynomials of degree 11.
pub fn lobatto7() -> ([f64; LOBATTO_NODES], [f64; LOBATTO_NODES]) {
    let s = (5.0f64 / 3.0).sqrt();
    let x_outer = (5.0 / 11.0 + 2.0 / 11.0 * s).sqrt();
    let x_inner = (5.0 / 11.0 - 2.0 / 11.0 * s).sqrt();
    let r15 = 15.0f64.sqrt();
    let w_end = 1.0 / 21.0;
    let w_outer = (124.0 - 7.0 * r15) / 350.0;
    let w_inner = (124.0 + 7.0 * r15) / 350.0;
    let w_mid = 256.0 / 525.0;
    let x = [-1.0, -x_outer, -x_inner, 0.0, x_inner, x_outer, 1.0];
    let w = [w_end, w_outer, w_inner, w_mid, w_inner, w_outer, w_end];
    let mut frac = [0.0; LOBATTO_NODES];
    let mut wts = [0.0; LOBATTO_NODES];
    for i in 0..LOBATTO_NODES {
        frac[i] = 0.5 * (x[i] + 1.0);
        wts[i] = 0.5 * w[i];
    }
    (frac, wts)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` computed by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WK[7];
    let mut g = fc * GK_WG[3];
    for j in 0..7 {
        let dx = h * GK_X[j];
        let s = f(c - dx) + f(c + dx);
        k += GK_WK[j] * s;
        if j % 2 == 1 {
            g += GK_WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of a real function on `[a, b]`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    let mut evals = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&f, lo, hi);
        evals += 15;
        let scale = tol * (hi - lo) / (b - a).abs().max(f64::MIN_POSITIVE);
        if err <= scale.max(1e-15 * val.abs()) || depth > 50 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
        if evals > 5_000_000 {
            return Err(Error::numerical("adaptive quadrature exceeded its evaluation budget"));
        }
    }
    Ok(total)
}

/// Ordinary least-squares line through `(x, y)`: returns `(slope, intercept, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::validation("linear fit needs at least two paired samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(Error::validation("linear fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - (slope * xi + intercept);
            r * r
        })
        .sum();
    Ok((slope, intercept, (rss / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lobatto_integrates_degree_eleven_exactly() {
        let (x, w) = lobatto7();
        for deg in 0..=11 {
            let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg)).sum();
            assert_relative_eq!(s, 1.0 / (deg as f64 + 1.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_matches_polynomial_moments() {
        for n in [1, 2, 5, 16, 40] {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert_relative_eq!(total, 2.0, epsilon = 1e-13);
            let deg = 2 * n - 2;
            let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
            assert_relative_eq!(s, 2.0 / (deg as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn adaptive_quadrature_handles_peaked_integrand() {
        let v = integrate_adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12).unwrap();
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert_relative_eq!(v, exact, max_relative = 1e-10);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.5 * v).collect();
        let (s, c, r) = linear_fit(&x, &y).unwrap();
        assert_relative_eq!(s, -2.5, epsilon = 1e-13);
        assert_relative_eq!(c, 3.0, epsilon = 1e-12);
        assert!(r < 1e-12);
    }
}
