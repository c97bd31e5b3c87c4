//! Regularized Krein system.
//!
//! The coefficients are built from the Weyl functions `m_t` of the shifted
//! Hamiltonians `H(t + .)` at `z = i`, with `I(t) = Im m_t(i)` and
//! `R(t) = Re m_t(i)`:
//!
//! ```text
//! x        = I h11
//! -K'      = (x + 1/x - 2) + (R'/I)^2 / (4x)
//! I'/I     = x - 1/x - (R'/I)^2 / (4x)
//! u(t)     = int_0^t R' / (2I)
//! f1       = -(1/4) e^{2iu} (R'/I + i I'/I)
//! f2       = K' / 4
//! ```
//!
//! with derivatives in the Dirac variable `t`. In the Krein variable `r = 2t`
//!
//! ```text
//! P~*' = (z - i) f1 P~ + i z f2 P~*
//! P~'  = i z P~ + (z + i) conj(f1) P~* - i z f2 P~
//! ```
//!
//! started from `P~*(0) = P~(0) = I(0)^{-1/2}`.

use crate::dirac::{hamiltonian, weyl_canonical, Hamiltonian};
use crate::error::{Error, Result};
use crate::odecore::{Integrator, OdeSystem, StepOptions, Tolerance};
use crate::potential::DiracPotential;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug)]
pub struct RegularizedOptions {
    /// Sample spacing in the Dirac variable; also the central-difference step for `R'`.
    pub dt: f64,
    /// Target radius of the Weyl disks.
    pub disk_radius: f64,
    pub tol: Tolerance,
}

impl Default for RegularizedOptions {
    fn default() -> Self {
        RegularizedOptions { dt: 0.05, disk_radius: 1e-10, tol: Tolerance::default() }
    }
}

/// Tabulated coefficients of the regularized system on a uniform Dirac-time grid.
#[derive(Clone, Debug)]
pub struct RegularizedInputs {
    pub dt: f64,
    pub t: Vec<f64>,
    pub imag_m: Vec<f64>,
    pub real_m: Vec<f64>,
    pub h11: Vec<f64>,
    pub real_m_prime: Vec<f64>,
    pub k_prime: Vec<f64>,
    pub log_imag_prime: Vec<f64>,
    pub u: Vec<f64>,
    pub f1: Vec<C64>,
    pub f2: Vec<f64>,
    /// Jumps of the potential inside `(0, t_max)`; stencils never straddle them.
    pub breaks: Vec<f64>,
}

fn weyl_at_i(q: &DiracPotential, shift: f64, opts: &RegularizedOptions) -> Result<C64> {
    let h = Hamiltonian::Dirac { q: q.clone(), shift };
    let mut len = 12.0;
    loop {
        let d = weyl_canonical(&h, I, len, opts.tol)?;
        if d.radius < opts.disk_radius {
            return Ok(d.center);
        }
        if len >= 96.0 {
            return Err(Error::numerical(format!(
                "Weyl disk at shift {shift} did not shrink below {} (radius {:.3e})",
                opts.disk_radius, d.radius
            )));
        }
        len *= 2.0;
    }
}

/// Tabulate the regularized coefficients on `[0, t_max]` (Dirac variable).
pub fn regularized_inputs(q: &DiracPotential, t_max: f64, opts: &RegularizedOptions) -> Result<RegularizedInputs> {
    if !(t_max.is_finite() && t_max > 0.0) || !(opts.dt > 0.0) {
        return Err(Error::validation("t_max and dt must be positive"));
    }
    let n = (t_max / opts.dt - 1e-9).ceil() as usize + 1;
    if n < 3 {
        return Err(Error::validation("need at least three samples"));
    }
    let t: Vec<f64> = (0..n).map(|k| k as f64 * opts.dt).collect();
    let m: Vec<C64> = t.par_iter().map(|&s| weyl_at_i(q, s, opts)).collect::<Result<_>>()?;
    let h11: Vec<f64> = t.par_iter().map(|&s| hamiltonian(q, s, opts.tol).map(|h| h[0])).collect::<Result<_>>()?;
    let imag_m: Vec<f64> = m.iter().map(|v| v.im).collect();
    let real_m: Vec<f64> = m.iter().map(|v| v.re).collect();
    if imag_m.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::numerical("Weyl function lost positivity of its imaginary part"));
    }
    let dt = opts.dt;
    let t_end = t[n - 1];
    let mut breaks: Vec<f64> = q.breakpoints().into_iter().filter(|b| *b > 0.0 && *b < t_end).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let seg: Vec<usize> = t.iter().map(|&s| segment(&breaks, s)).collect();
    let rp: Vec<f64> = (0..n).map(|k| derivative(&real_m, &seg, k, dt)).collect();
    let mut k_prime = vec![0.0; n];
    let mut log_ip = vec![0.0; n];
    let mut f1 = vec![C64::new(0.0, 0.0); n];
    let mut f2 = vec![0.0; n];
    let mut u = vec![0.0; n];
    for k in 0..n {
        if k > 0 {
            let g = |j: usize| rp[j] / imag_m[j];
            let cubic = k >= 2 && k + 1 < n && (k - 2..=k + 1).all(|j| seg[j] == seg[k - 1]) && seg[k] == seg[k - 1];
            u[k] = u[k - 1]
                + 0.5 * if cubic {
                    dt / 24.0 * (-g(k - 2) + 13.0 * g(k - 1) + 13.0 * g(k) - g(k + 1))
                } else {
                    0.5 * dt * (g(k - 1) + g(k))
                };
        }
        let x = imag_m[k] * h11[k];
        let rho = rp[k] / imag_m[k];
        let s = rho * rho / (4.0 * x);
        k_prime[k] = -((x + 1.0 / x - 2.0) + s);
        log_ip[k] = x - 1.0 / x - s;
        f1[k] = -0.25 * (2.0 * I * u[k]).exp() * C64::new(rho, log_ip[k]);
        f2[k] = 0.25 * k_prime[k];
    }
    Ok(RegularizedInputs {
        dt,
        t,
        imag_m,
        real_m,
        h11,
        real_m_prime: rp,
        k_prime,
        log_imag_prime: log_ip,
        u,
        f1,
        f2,
        breaks,
    })
}

/// Derivative of samples `v` at index `k` by a five-point stencil inside the
/// smooth piece of `k`, falling back to three points on short pieces.
fn derivative(v: &[f64], seg: &[usize], k: usize, dt: f64) -> f64 {
    let n = v.len();
    let ok = |lo: isize, hi: isize| {
        lo >= 0 && (hi as usize) < n && (lo as usize..=hi as usize).all(|j| seg[j] == seg[k])
    };
    let k_ = k as isize;
    let f = |o: isize| v[(k_ + o) as usize];
    if ok(k_ - 2, k_ + 2) {
        (f(-2) - 8.0 * f(-1) + 8.0 * f(1) - f(2)) / (12.0 * dt)
    } else if ok(k_, k_ + 4) {
        (-25.0 * f(0) + 48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4)) / (12.0 * dt)
    } else if ok(k_ - 4, k_) {
        (25.0 * f(0) - 48.0 * f(-1) + 36.0 * f(-2) - 16.0 * f(-3) + 3.0 * f(-4)) / (12.0 * dt)
    } else if ok(k_ - 1, k_ + 1) {
        (f(1) - f(-1)) / (2.0 * dt)
    } else if ok(k_, k_ + 2) || !ok(k_ - 2, k_) {
        (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * dt)
    } else {
        (3.0 * f(0) - 4.0 * f(-1) + f(-2)) / (2.0 * dt)
    }
}

/// Index of the smooth piece containing `t`; a point on a jump belongs to the right piece.
fn segment(breaks: &[f64], t: f64) -> usize {
    breaks.partition_point(|b| *b <= t + 1e-9)
}

impl RegularizedInputs {
    /// Smallest `C` with `|f1| <= C (sqrt|K'| + |K'|)` on the grid, ignoring
    /// points where both sides are below `floor`.
    pub fn coefficient_bound(&self, floor: f64) -> f64 {
        self.f1
            .iter()
            .zip(&self.k_prime)
            .filter(|(f, k)| f.norm() > floor || k.abs() > floor)
            .map(|(f, k)| f.norm() / (k.abs().sqrt() + k.abs()))
            .fold(0.0, f64::max)
    }

    fn interp<T>(&self, v: &[T], t: f64) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
    {
        let n = v.len();
        let x = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let k = (x.floor() as usize).min(n - 2);
        let centred = k.saturating_sub(1).min(n.saturating_sub(4));
        let piece = segment(&self.breaks, t);
        let fits = |lo: usize| lo + 3 < n && (lo..lo + 4).all(|j| segment(&self.breaks, self.t[j]) == piece);
        let lo = [centred, k.min(n.saturating_sub(4)), k.saturating_sub(2), (k + 1).min(n.saturating_sub(4)), k.saturating_sub(3)]
            .into_iter()
            .find(|&lo| fits(lo))
            .unwrap_or(centred);
        let idx = [lo, lo + 1, lo + 2, lo + 3];
        let mut acc = v[idx[0]] * 0.0;
        for (a, &i) in idx.iter().enumerate() {
            let mut w = 1.0;
            for (b, &j) in idx.iter().enumerate() {
                if a != b {
                    w *= (x - j as f64) / (i as f64 - j as f64);
                }
            }
            acc = acc + v[i] * w;
        }
        acc
    }

    /// `(f1, f2)` at Dirac time `t` by local cubic interpolation.
    pub fn coefficients(&self, t: f64) -> (C64, f64) {
        (self.interp(&self.f1, t), self.interp(&self.f2, t))
    }

    pub fn t_max(&self) -> f64 {
        *self.t.last().unwrap()
    }
}

struct RegSystem<'a> {
    inp: &'a RegularizedInputs,
    z: C64,
}

impl OdeSystem<2> for RegSystem<'_> {
    fn rhs(&self, r: f64, y: &[C64; 2]) -> [C64; 2] {
        let (f1, f2) = self.inp.coefficients(0.5 * r);
        let iz = I * self.z;
        [
            (self.z - I) * f1 * y[1] + iz * f2 * y[0],
            iz * y[1] + (self.z + I) * f1.conj() * y[0] - iz * f2 * y[1],
        ]
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.inp.t.iter().chain(&self.inp.breaks).map(|t| 2.0 * t).collect();
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b
    }
}

/// Solution `(P~*, P~)` of the regularized system at the requested radii.
#[derive(Clone, Debug)]
pub struct RegularizedTrace {
    pub z: C64,
    pub r: Vec<f64>,
    pub pstar: Vec<C64>,
    pub p: Vec<C64>,
}

impl RegularizedTrace {
    /// `|P~*|^2 - |P~|^2` at stop `i`.
    pub fn kernel_gap(&self, i: usize) -> f64 {
        self.pstar[i].norm_sqr() - self.p[i].norm_sqr()
    }
}

/// Integrate the regularized system to each radius in `stops` (Krein variable).
pub fn regularized_solve(inp: &RegularizedInputs, z: C64, stops: &[f64], tol: Tolerance) -> Result<RegularizedTrace> {
    if stops.iter().any(|s| !(*s >= 0.0)) || stops.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("stops must be non-negative and increasing"));
    }
    if let Some(last) = stops.last() {
        if *last > 2.0 * inp.t_max() + 1e-12 {
            return Err(Error::validation(format!(
                "regularized inputs cover r <= {}, requested {last}",
                2.0 * inp.t_max()
            )));
        }
    }
    let c = C64::new(inp.imag_m[0].powf(-0.5), 0.0);
    let sys = RegSystem { inp, z };
    let mut it = Integrator::new(&sys, 0.0, [c, c], StepOptions::with_tol(tol));
    let mut out = RegularizedTrace { z, r: vec![], pstar: vec![], p: vec![] };
    for &s in stops {
        if s > it.t() {
            it.advance_to(s)?;
        }
        out.r.push(s);
        out.pstar.push(it.y()[0]);
        out.p.push(it.y()[1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_case_is_trivial() {
        let inp = regularized_inputs(&DiracPotential::Zero, 2.0, &RegularizedOptions::default()).unwrap();
        for k in 0..inp.t.len() {
            assert!((inp.imag_m[k] - 1.0).abs() < 1e-9);
            assert!(inp.f1[k].norm() < 1e-8 && inp.f2[k].abs() < 1e-8);
        }
        let z = C64::new(0.7, 0.4);
        let tr = regularized_solve(&inp, z, &[1.0, 3.0], Tolerance::default()).unwrap();
        assert!((tr.pstar[1] - 1.0).norm() < 1e-7);
        assert!((tr.p[1] - (I * z * 3.0).exp()).norm() < 1e-7);
    }

    #[test]
    fn reflection_is_preserved() {
        let q = DiracPotential::OffDiagExp { amp: 1.0, rate: 2.0, cut: f64::INFINITY };
        let inp = regularized_inputs(&q, 3.0, &RegularizedOptions::default()).unwrap();
        let z = C64::new(0.8, -0.3);
        let stops = [0.5, 2.0, 5.0];
        let a = regularized_solve(&inp, z, &stops, Tolerance::default()).unwrap();
        let b = regularized_solve(&inp, z.conj(), &stops, Tolerance::default()).unwrap();
        for i in 0..stops.len() {
            let rhs = (I * z * stops[i]).exp() * b.pstar[i].conj();
            assert!((a.p[i] - rhs).norm() < 1e-9 * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn interpolation_is_exact_for_cubics() {
        let mut inp = regularized_inputs(&DiracPotential::Zero, 1.0, &RegularizedOptions::default()).unwrap();
        inp.f2 = inp.t.iter().map(|t| 1.0 + t - 2.0 * t * t + 0.5 * t * t * t).collect();
        for t in [0.0, 0.013, 0.5, 0.777, 1.0] {
            let v = inp.coefficients(t).1;
            assert!((v - (1.0 + t - 2.0 * t * t + 0.5 * t * t * t)).abs() < 1e-12);
        }
    }

    fn kernel_setup() -> (DiracPotential, RegularizedInputs) {
        let q = DiracPotential::OffDiagExp { amp: 1.0, rate: 2.0, cut: f64::INFINITY };
        let inp = regularized_inputs(&q, 6.0, &RegularizedOptions::default()).unwrap();
        (q, inp)
    }

    #[test]
    fn two_kernel_identity_and_convergence() {
        use crate::krein::{solve_krein, KreinOptions};
        use crate::potential::spectral_krein;
        let (q, inp) = kernel_setup();
        let a = spectral_krein(&q);
        let z0 = C64::new(0.4, 0.6);
        let rs = [1.0, 2.0, 4.0];
        let opts = KreinOptions { tol: Tolerance::new(1e-13, 1e-12), max_cell: 0.5, stops: rs.to_vec() };
        let kt = solve_krein(&a, z0, 40.0, &opts).unwrap();
        let pi = kt.pstar(kt.len() - 1);
        let cum = kt.norm_p2();
        let total = *cum.last().unwrap();
        let reg = regularized_solve(&inp, z0, &rs, Tolerance::new(1e-13, 1e-12)).unwrap();
        for (k, &r) in rs.iter().enumerate() {
            let i = kt.index_of(r).unwrap();
            let lhs = 2.0 * z0.im * (total - cum[i]);
            let rhs = pi.norm_sqr() - reg.kernel_gap(k);
            assert!((lhs - rhs).abs() < 1e-6, "r={r}: {lhs} vs {rhs}");
        }
        let far = regularized_solve(&inp, z0, &[12.0], Tolerance::default()).unwrap();
        assert!((far.pstar[0] - pi).norm() < 1e-6);
    }

    #[test]
    fn compact_support_freezes_inputs() {
        use crate::potential::{spectral_dirac, KreinCoefficient};
        let a = KreinCoefficient::Exp { amp: C64::new(0.5, 0.2), rate: 0.0, cut: 2.0 };
        let inp = regularized_inputs(&spectral_dirac(&a), 2.0, &RegularizedOptions::default()).unwrap();
        let k = inp.t.iter().position(|t| *t > 1.2).unwrap();
        for j in k..inp.t.len() {
            assert!((inp.imag_m[j] - inp.imag_m[k]).abs() < 1e-9);
            assert!((inp.real_m[j] - inp.real_m[k]).abs() < 1e-9);
            assert!(inp.k_prime[j].abs() < 1e-8);
        }
        let c = inp.coefficient_bound(1e-8);
        assert!(c.is_finite() && c > 0.0 && c < 10.0, "C = {c}");
    }
}
