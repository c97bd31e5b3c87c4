//! Entropy functionals of Dirac operators.
//!
//! The scaled entropy is
//!
//! ```text
//! E^(l)(r) = det( int_r^{r+2l} X(r,t)^T X(r,t) dt ) / l^2 - 4,
//! ```
//!
//! where `X(r, .)` is the ordered exponent of `JQ` started at `r`. Writing
//! `X = I + Y`, `X^T X = I + D` with `D = Y + Y^T + Y^T Y` and `tr D = -det D`
//! (because `det X = 1`), so with `S = int D` and `T = int -det D`
//!
//! ```text
//! E^(l)(r) = (2l T + det S) / l^2,
//! ```
//!
//! which involves only second-order quantities. When `q = 0` the Hamiltonian is
//! `diag(e^{-2g}, e^{2g})` and the entropy reduces to scalar integrals of the
//! increments of `g`.

use crate::error::{Error, Result};
use crate::krein::fmt17;
use crate::odecore::{integrate, OdeSystem, StepOptions, Tolerance};
use crate::potential::DiracPotential;
use crate::quad::linear_fit;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::PI;

/// Values at or below this are treated as numerical zeros before taking logs.
pub const ZERO_FLOOR: f64 = 1e-13;

/// Past this point the oscillatory family may not be integrated by direct stepping.
pub const OSCILLATORY_STEPPING_LIMIT: f64 = 3.0;

/// Default tolerance for entropy integrations.
pub fn entropy_tolerance() -> Tolerance {
    Tolerance::new(1e-16, 1e-12)
}

fn check_window(r: f64, l: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::validation("scale l must be positive"));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::validation("r must be finite and non-negative"));
    }
    Ok(())
}

/// Scaled entropy `E^(l)(r)`.
pub fn entropy_e(q: &DiracPotential, r: f64, l: f64, tol: Tolerance) -> Result<f64> {
    check_window(r, l)?;
    match q.increment_rule(r, 2.0 * l) {
        Some(rule) => Ok(entropy_from_increments(&rule.w, &rule.d) / (l * l)),
        None => entropy_e_ode(q, r, l, tol),
    }
}

/// `det int e^{-2D} int e^{2D} - (int 1)^2` for a scalar increment `D` given at
/// quadrature nodes.
fn entropy_from_increments(w: &[f64], d: &[f64]) -> f64 {
    let len: f64 = w.iter().sum();
    let mean = w.iter().zip(d).map(|(w, d)| w * d).sum::<f64>() / len;
    let (mut a, mut b, mut s) = (0.0, 0.0, 0.0);
    for (wi, di) in w.iter().zip(d) {
        let x = di - mean;
        a += wi * (2.0 * x).exp_m1();
        b += wi * (-2.0 * x).exp_m1();
        s += wi * 4.0 * x.sinh().powi(2);
    }
    len * s + a * b
}

struct EntropySystem<'a> {
    q: &'a DiracPotential,
}

impl OdeSystem<8> for EntropySystem<'_> {
    fn rhs(&self, t: f64, y: &[C64; 8]) -> [C64; 8] {
        let (p, q) = self.q.pq(t);
        let y11 = y[0].re;
        let y12 = y[1].re;
        let y21 = y[2].re;
        let y22 = y[3].re;
        // JQ = [[-p, -q], [-q, p]]
        let x11 = 1.0 + y11;
        let x22 = 1.0 + y22;
        let dy = [-p * x11 - q * y21, -p * y12 - q * x22, -q * x11 + p * y21, -q * y12 + p * x22];
        let d11 = 2.0 * y11 + y11 * y11 + y21 * y21;
        let d12 = y12 + y21 + y11 * y12 + y21 * y22;
        let d22 = 2.0 * y22 + y12 * y12 + y22 * y22;
        let det = d11 * d22 - d12 * d12;
        [dy[0], dy[1], dy[2], dy[3], d11, d12, d22, -det].map(C64::from)
    }
    fn max_step(&self, t: f64) -> f64 {
        self.q.max_step(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.q.breakpoints()
    }
}

/// Scaled entropy by integrating the ordered exponent relative to `r`.
pub fn entropy_e_ode(q: &DiracPotential, r: f64, l: f64, tol: Tolerance) -> Result<f64> {
    check_window(r, l)?;
    if matches!(q, DiracPotential::Oscillatory { .. }) && r + 2.0 * l > OSCILLATORY_STEPPING_LIMIT {
        return Err(Error::validation(format!(
            "oscillatory potentials are not stepped directly past t = {OSCILLATORY_STEPPING_LIMIT}"
        )));
    }
    let zero = C64::new(0.0, 0.0);
    let y = integrate(&EntropySystem { q }, r, r + 2.0 * l, [zero; 8], StepOptions::with_tol(tol))?;
    let (s11, s12, s22, t) = (y[4].re, y[5].re, y[6].re, y[7].re);
    Ok((2.0 * l * t + (s11 * s22 - s12 * s12)) / (l * l))
}

/// Scaled entropy from `det int H_Q` with `H_Q = N_Q^T N_Q`; loses accuracy as
/// `N_Q(r)` grows, so only suitable for moderate `r`.
pub fn entropy_e_absolute(q: &DiracPotential, r: f64, l: f64, tol: Tolerance) -> Result<f64> {
    check_window(r, l)?;
    let (x, w) = crate::quad::gauss_legendre(16);
    let n = (2.0 * l / 0.125).ceil() as usize;
    let h = 2.0 * l / n as f64;
    let mut acc = [0.0; 3];
    let mut nodes = Vec::with_capacity(n * x.len());
    for k in 0..n {
        let m = r + (k as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push((m + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    let hs: Vec<[f64; 3]> =
        nodes.par_iter().map(|(t, _)| crate::dirac::hamiltonian(q, *t, tol)).collect::<Result<_>>()?;
    for ((_, wt), hv) in nodes.iter().zip(&hs) {
        for j in 0..3 {
            acc[j] += wt * hv[j];
        }
    }
    Ok((acc[0] * acc[2] - acc[1] * acc[1]) / (l * l) - 4.0)
}

/// Sampled entropy values with an optional decay fit.
#[derive(Clone, Debug, Serialize)]
pub struct EntropyProfile {
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub scale_l: f64,
    pub fit: Option<DecayFit>,
}

/// Least-squares fit of `log E` against `r`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    pub residual: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

impl EntropyProfile {
    /// CSV with columns `r, value, scale_l`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,value,scale_l\n");
        for (r, v) in self.r_grid.iter().zip(&self.values) {
            s.push_str(&format!("{},{},{}\n", fmt17(*r), fmt17(*v), fmt17(self.scale_l)));
        }
        s
    }
}

/// `E^(l)` on a grid of base points, evaluated in parallel.
pub fn entropy_profile(q: &DiracPotential, r_grid: &[f64], l: f64, tol: Tolerance) -> Result<EntropyProfile> {
    let values = r_grid.par_iter().map(|r| entropy_e(q, *r, l, tol)).collect::<Result<Vec<_>>>()?;
    Ok(EntropyProfile { r_grid: r_grid.to_vec(), values, scale_l: l, fit: None })
}

/// Exponential decay rate `delta` with `values ~ e^{-delta r}`.
///
/// The default window spans the middle two quartiles of the positive samples.
pub fn fit_decay_rate(profile: &EntropyProfile, window: Option<(f64, f64)>) -> Result<DecayFit> {
    let window = match window {
        Some((lo, hi)) if lo < hi => (lo, hi),
        Some(_) => return Err(Error::validation("fit window must satisfy lo < hi")),
        None => {
            let pos: Vec<f64> =
                profile.r_grid.iter().zip(&profile.values).filter(|(_, v)| **v > ZERO_FLOOR).map(|(r, _)| *r).collect();
            if pos.len() < 5 {
                return Err(Error::validation("need at least 5 positive samples to fit a decay rate"));
            }
            let n = pos.len();
            (pos[n / 4], pos[(3 * n).div_ceil(4) - 1])
        }
    };
    let inside: Vec<(f64, f64)> = profile
        .r_grid
        .iter()
        .zip(&profile.values)
        .filter(|(r, _)| **r >= window.0 - 1e-12 && **r <= window.1 + 1e-12)
        .map(|(r, v)| (*r, *v))
        .collect();
    let bad: Vec<String> = inside.iter().filter(|(_, v)| !(*v > ZERO_FLOOR)).map(|(r, v)| format!("r={r}: {v:e}")).collect();
    if !bad.is_empty() {
        return Err(Error::validation(format!("non-positive entropy samples in fit window: {}", bad.join(", "))));
    }
    if inside.len() < 5 {
        return Err(Error::validation(format!("only {} samples in fit window, need 5", inside.len())));
    }
    let x: Vec<f64> = inside.iter().map(|p| p.0).collect();
    let y: Vec<f64> = inside.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, residual) = linear_fit(&x, &y)?;
    Ok(DecayFit { rate: -slope, intercept, residual, window, samples: inside.len() })
}

/// Decay rate of `E_Q` fitted on `samples` equally spaced points of `window`.
/// Infinite for potentials of compact support.
pub fn estimate_delta(q: &DiracPotential, window: (f64, f64), samples: usize, tol: Tolerance) -> Result<f64> {
    if q.support().is_some() {
        return Ok(f64::INFINITY);
    }
    if samples < 5 {
        return Err(Error::validation("need at least 5 samples"));
    }
    let grid: Vec<f64> =
        (0..samples).map(|k| window.0 + (window.1 - window.0) * k as f64 / (samples - 1) as f64).collect();
    let prof = entropy_profile(q, &grid, 1.0, tol)?;
    Ok(fit_decay_rate(&prof, Some(window))?.rate)
}

/// Partial sum of the Hamiltonian entropy `K_H(r) = sum_n E(r + n)`.
#[derive(Clone, Debug, Serialize)]
pub struct KhValue {
    pub value: f64,
    /// Geometric extrapolation of the omitted terms from the last two.
    pub tail: f64,
    pub terms: Vec<f64>,
}

pub fn entropy_kh(q: &DiracPotential, r: f64, n_max: usize, tol: Tolerance) -> Result<KhValue> {
    if n_max == 0 {
        return Err(Error::validation("n_max must be at least 1"));
    }
    let terms: Vec<f64> =
        (0..n_max).into_par_iter().map(|n| entropy_e(q, r + n as f64, 1.0, tol)).collect::<Result<_>>()?;
    let value = terms.iter().sum();
    let last = terms[n_max - 1].max(0.0);
    let tail = if n_max >= 2 && terms[n_max - 2] > 0.0 && last < terms[n_max - 2] {
        let ratio = last / terms[n_max - 2];
        last * ratio / (1.0 - ratio)
    } else {
        last
    };
    Ok(KhValue { value, tail, terms })
}

/// Comparison of one entropy window against three half-size windows.
#[derive(Clone, Debug, Serialize)]
pub struct RescalingReport {
    pub r: f64,
    pub l: f64,
    /// `E^(2l)(r) / 4`.
    pub lhs: f64,
    /// `max(E^(l)(r), E^(l)(r+l), E^(l)(r+2l)) / 4`.
    pub rhs: f64,
    /// `lhs / rhs`; `None` when both vanish.
    pub ratio: Option<f64>,
}

pub fn rescaling_check(q: &DiracPotential, r: f64, l: f64, tol: Tolerance) -> Result<RescalingReport> {
    let lhs = entropy_e(q, r, 2.0 * l, tol)? / 4.0;
    let mut rhs = f64::NEG_INFINITY;
    for k in 0..3 {
        rhs = rhs.max(entropy_e(q, r + k as f64 * l, l, tol)? / 4.0);
    }
    let ratio = if lhs == 0.0 && rhs == 0.0 { None } else { Some(lhs / rhs) };
    Ok(RescalingReport { r, l, lhs, rhs, ratio })
}

/// `int_{h}^{0} (1 + s/h) e^{-i eta s} ds`, the transform of a left half hat.
fn left_half_hat(eta: f64, h: f64) -> C64 {
    let x = eta * h;
    if x.abs() < 1e-3 {
        C64::new(h / 2.0 - h * x * x / 24.0, h * x / 6.0)
    } else {
        C64::new(0.0, 1.0 / eta) - (C64::new(0.0, x).exp() - 1.0) / (h * eta * eta)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0
    } else {
        x.sin() / x
    }
}

/// `||f_r||` in `W_2^{-1}` for `f_r = (p + iq) 1_{[r, inf)}`.
///
/// `f_r` is sampled at `n_fft` points of `[r, r + grid_len)` and replaced by its
/// piecewise-linear interpolant starting with a jump at `r`, whose isometric
/// Fourier transform (`(2 pi)^{-1/2} int f e^{-i eta x}`) is known exactly from
/// the DFT. The weighted energy `int |f^|^2 / (1 + eta^2)` is summed on a grid
/// of spacing `pi / grid_len` (zero padding by a factor two), including aliases.
pub fn sobolev_tail_norm(q: &DiracPotential, r: f64, grid_len: f64, n_fft: usize) -> Result<f64> {
    if !(grid_len > 0.0) || n_fft < 16 || !(r >= 0.0) {
        return Err(Error::validation("need r >= 0, grid_len > 0 and n_fft >= 16"));
    }
    let h = grid_len / n_fft as f64;
    let samples: Vec<C64> = (0..n_fft)
        .map(|j| {
            let (p, qq) = q.pq(r + j as f64 * h);
            C64::new(p, qq)
        })
        .collect();
    if samples.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::numerical("non-finite potential sample"));
    }
    let total: f64 = samples.iter().map(|v| v.norm_sqr()).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let edge: f64 = samples[n_fft - n_fft / 10..].iter().map(|v| v.norm_sqr()).sum();
    if edge > 0.01 * total {
        return Err(Error::validation(format!(
            "grid too short: {:.2}% of the energy lies in the last tenth of the window",
            100.0 * edge / total
        )));
    }
    let n = 2 * n_fft;
    let mut buf = samples.clone();
    buf.resize(n, C64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let d_eta = 2.0 * PI / (n as f64 * h);
    let f0 = samples[0];
    let mut energy = 0.0;
    for (k, dft) in buf.iter().enumerate() {
        let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        for m in -3..=3 {
            let eta = kk * d_eta + m as f64 * 2.0 * PI / h;
            let s = sinc(0.5 * eta * h);
            let ft = (dft * (h * s * s) - f0 * left_half_hat(eta, h)) / (2.0 * PI).sqrt();
            energy += ft.norm_sqr() / (1.0 + eta * eta);
        }
    }
    Ok((energy * d_eta).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{spectral_dirac, KreinCoefficient};
    use approx::assert_relative_eq;

    fn tol() -> Tolerance {
        entropy_tolerance()
    }

    #[test]
    fn free_entropy_vanishes() {
        assert_eq!(entropy_e(&DiracPotential::Zero, 1.0, 1.0, tol()).unwrap(), 0.0);
        assert!(entropy_e_ode(&DiracPotential::Zero, 1.0, 1.0, tol()).unwrap().abs() < 1e-15);
        let rep = rescaling_check(&DiracPotential::Zero, 0.0, 1.0, tol()).unwrap();
        assert!(rep.ratio.is_none());
        assert_eq!(entropy_kh(&DiracPotential::Zero, 0.0, 5, tol()).unwrap().value, 0.0);
    }

    #[test]
    fn routes_agree() {
        let a = KreinCoefficient::Exp { amp: C64::new(0.7, 0.4), rate: 1.0, cut: f64::INFINITY };
        let q = spectral_dirac(&a);
        for r in [0.0, 0.5, 2.0] {
            let e1 = entropy_e(&q, r, 1.0, tol()).unwrap();
            let e2 = entropy_e_absolute(&q, r, 1.0, tol()).unwrap();
            assert!((e1 - e2).abs() < 1e-7 * e1.abs().max(1e-3), "r={r}: {e1} vs {e2}");
        }
        let od = DiracPotential::OffDiagExp { amp: 2.0, rate: 2.0, cut: f64::INFINITY };
        for r in [0.0, 1.0, 3.0] {
            let e1 = entropy_e(&od, r, 0.7, tol()).unwrap();
            let e2 = entropy_e_ode(&od, r, 0.7, tol()).unwrap();
            assert_relative_eq!(e1, e2, max_relative = 1e-8);
        }
    }

    #[test]
    fn oscillatory_is_not_stepped_far_out() {
        let q = DiracPotential::Oscillatory { amp: 1.0, beta: 1.0, gamma: 2.0, cut: f64::INFINITY };
        assert!(entropy_e_ode(&q, 2.0, 1.0, tol()).is_err());
        let e_ode = entropy_e_ode(&q, 0.2, 1.0, tol()).unwrap();
        let e = entropy_e(&q, 0.2, 1.0, tol()).unwrap();
        assert_relative_eq!(e, e_ode, max_relative = 1e-7);
    }

    #[test]
    fn fit_recovers_synthetic_rates() {
        let r: Vec<f64> = (0..41).map(|k| 0.1 * k as f64).collect();
        let prof = EntropyProfile {
            values: r.iter().map(|x| (-3.0 * x).exp()).collect(),
            r_grid: r.clone(),
            scale_l: 1.0,
            fit: None,
        };
        assert_relative_eq!(fit_decay_rate(&prof, None).unwrap().rate, 3.0, epsilon = 1e-12);
        let wobbly = EntropyProfile { values: r.iter().map(|x| (-3.0 * x).exp() * (1.0 + 0.01 * x.sin())).collect(), ..prof.clone() };
        assert!((fit_decay_rate(&wobbly, Some((0.0, 4.0))).unwrap().rate - 3.0).abs() < 0.02);
        let mut holed = prof.clone();
        holed.values[20] = 0.0;
        let err = fit_decay_rate(&holed, Some((1.0, 3.0))).unwrap_err();
        assert!(err.to_string().contains("r=2"));
    }

    #[test]
    fn kh_terms_are_nonnegative_and_decreasing() {
        let q = spectral_dirac(&KreinCoefficient::Exp { amp: C64::new(1.0, 0.0), rate: 1.0, cut: f64::INFINITY });
        let k0 = entropy_kh(&q, 0.0, 12, tol()).unwrap();
        let k1 = entropy_kh(&q, 1.0, 12, tol()).unwrap();
        assert!(k0.terms.iter().all(|t| *t >= -1e-9));
        assert!(k0.value >= k1.value && k1.value >= 0.0);
        assert!(k0.tail < 1e-12 * k0.value);
    }

    #[test]
    fn sobolev_norm_of_indicator() {
        let q = DiracPotential::Table { t: vec![0.0, 1.0], p: vec![1.0, 1.0], q: vec![0.0, 0.0] };
        let v = sobolev_tail_norm(&q, 0.0, 8.0, 1 << 16).unwrap();
        let f = |eta: f64| {
            let ft2 = sinc(0.5 * eta).powi(2);
            ft2 / (1.0 + eta * eta) / PI
        };
        let oracle = (0..2000)
            .map(|k| crate::quad::integrate_adaptive(f, k as f64, k as f64 + 1.0, 1e-14).unwrap())
            .sum::<f64>()
            + 2.0 / (3.0 * PI * 2000f64.powi(3));
        assert_relative_eq!(oracle, (-1.0f64).exp(), max_relative = 1e-6);
        assert_relative_eq!(v * v, oracle, max_relative = 1e-3);
        assert_eq!(sobolev_tail_norm(&DiracPotential::Zero, 0.0, 4.0, 64).unwrap(), 0.0);
        assert!(sobolev_tail_norm(&q, 0.0, 1.05, 256).is_err());
    }
}
