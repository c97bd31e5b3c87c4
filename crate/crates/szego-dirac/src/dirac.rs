//! Dirac systems `J N' + Q N = z N`, their canonical-system form and Weyl functions.

use crate::error::{Error, Result};
use crate::krein::{solve_krein, KreinOptions, KreinTrace};
use crate::mat2::Mat2;
use crate::odecore::{integrate, Integrator, OdeSystem, StepOptions, Tolerance};
use crate::potential::{DiracPotential, KreinCoefficient};
use num_complex::Complex64 as C64;

const I: C64 = C64::new(0.0, 1.0);

/// `N' = (JQ - zJ) N` with `JQ = [[-p, -q], [-q, p]]`.
struct DiracSystem<'a> {
    q: &'a DiracPotential,
    z: C64,
}

impl OdeSystem<4> for DiracSystem<'_> {
    fn rhs(&self, t: f64, y: &[C64; 4]) -> [C64; 4] {
        let (p, q) = self.q.pq(t);
        let a = Mat2::new(C64::new(-p, 0.0), self.z - q, -self.z - q, C64::new(p, 0.0));
        (a * Mat2(*y)).0
    }
    fn max_step(&self, t: f64) -> f64 {
        self.q.max_step(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.q.breakpoints()
    }
}

/// Fundamental matrix of a Dirac system sampled on a grid.
#[derive(Clone, Debug)]
pub struct DiracTrace {
    pub z: C64,
    pub grid: Vec<f64>,
    pub n: Vec<Mat2>,
}

/// Fundamental matrix `N(t, z)`, `N(0) = I`, at the points `stops` (increasing, non-negative).
pub fn fundamental_solution(q: &DiracPotential, z: C64, stops: &[f64], tol: Tolerance) -> Result<DiracTrace> {
    if stops.iter().any(|s| !s.is_finite() || *s < 0.0) || stops.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::validation("stops must be finite, non-negative and increasing"));
    }
    let sys = DiracSystem { q, z };
    let mut it = Integrator::new(&sys, 0.0, Mat2::identity().0, StepOptions::with_tol(tol));
    let mut n = Vec::with_capacity(stops.len());
    for &s in stops {
        if s > it.t() {
            it.advance_to(s)?;
        }
        n.push(Mat2(*it.y()));
    }
    Ok(DiracTrace { z, grid: stops.to_vec(), n })
}

/// Largest `|det N - 1|`, relative to the size of the determinant's terms.
pub fn det_residual(tr: &DiracTrace) -> f64 {
    tr.n
        .iter()
        .map(|m| {
            let scale = (m.0[0] * m.0[3]).norm().max((m.0[1] * m.0[2]).norm()).max(1.0);
            (m.det() - 1.0).norm() / scale
        })
        .fold(0.0, f64::max)
}

/// Fundamental matrix of the Dirac partner of `a` assembled from a Krein
/// trace at the grid index `i`; the Dirac time is half the Krein radius.
pub fn fundamental_from_krein(tr: &KreinTrace, i: usize) -> (f64, Mat2) {
    let t = 0.5 * tr.r(i);
    let [p, ps, ph, phs] = tr.state(i);
    let e = (-I * tr.z * t).exp() * 0.5;
    let n = Mat2::new(p + ps, -I * (ph - phs), I * (p - ps), ph + phs).scale(e);
    (t, n)
}

/// Real 2x2 symmetric matrix stored as `[h11, h12, h22]`.
pub type Sym2 = [f64; 3];

/// `N_Q(t)` for `z = 0`, the solution of `N' = JQ N`, `N(0) = I`.
pub fn n_q(q: &DiracPotential, t: f64, tol: Tolerance) -> Result<Mat2> {
    if let Some(g) = q.closed_form_g0(t) {
        return Ok(Mat2::real((-g).exp(), 0.0, 0.0, g.exp()));
    }
    let sys = DiracSystem { q, z: C64::new(0.0, 0.0) };
    Ok(Mat2(integrate(&sys, 0.0, t, Mat2::identity().0, StepOptions::with_tol(tol))?))
}

/// `H_Q(t) = N_Q(t)^T N_Q(t)`.
pub fn hamiltonian(q: &DiracPotential, t: f64, tol: Tolerance) -> Result<Sym2> {
    let n = n_q(q, t, tol)?;
    Ok(gram(&n))
}

fn gram(n: &Mat2) -> Sym2 {
    let h = n.transpose() * *n;
    [h.0[0].re, h.0[1].re, h.0[3].re]
}

/// Hamiltonian of a canonical system `J M' = z H M`.
#[derive(Clone, Debug)]
pub enum Hamiltonian {
    Constant(Sym2),
    /// `H_Q(shift + t)` for a Dirac potential.
    Dirac { q: DiracPotential, shift: f64 },
}

fn canonical_rhs(h: &Sym2, z: C64, m: &[C64]) -> [C64; 4] {
    // M' = -z J H M = z [[h12, h22], [-h11, -h12]] M
    let a = Mat2::real(h[1], h[2], -h[0], -h[1]).scale(z);
    (a * Mat2([m[0], m[1], m[2], m[3]])).0
}

struct ConstCanon(Sym2, C64);
impl OdeSystem<4> for ConstCanon {
    fn rhs(&self, _t: f64, y: &[C64; 4]) -> [C64; 4] {
        canonical_rhs(&self.0, self.1, y)
    }
}

struct DiagCanon<'a> {
    q: &'a DiracPotential,
    shift: f64,
    z: C64,
}
impl OdeSystem<4> for DiagCanon<'_> {
    fn rhs(&self, t: f64, y: &[C64; 4]) -> [C64; 4] {
        let g = self.q.closed_form_g0(self.shift + t).unwrap_or(0.0);
        canonical_rhs(&[(-2.0 * g).exp(), 0.0, (2.0 * g).exp()], self.z, y)
    }
    fn breakpoints(&self) -> Vec<f64> {
        shifted_breaks(self.q, self.shift)
    }
    fn max_step(&self, t: f64) -> f64 {
        self.q.max_step(self.shift + t)
    }
}

/// Joint system for `N_Q` (first four slots) and `M` (last four).
struct JointCanon<'a> {
    q: &'a DiracPotential,
    shift: f64,
    z: C64,
}
impl OdeSystem<8> for JointCanon<'_> {
    fn rhs(&self, t: f64, y: &[C64; 8]) -> [C64; 8] {
        let (p, q) = self.q.pq(self.shift + t);
        let jq = Mat2::real(-p, -q, -q, p);
        let nq = Mat2([y[0], y[1], y[2], y[3]]);
        let dn = (jq * nq).0;
        let h = gram(&nq);
        let dm = canonical_rhs(&h, self.z, &y[4..]);
        [dn[0], dn[1], dn[2], dn[3], dm[0], dm[1], dm[2], dm[3]]
    }
    fn breakpoints(&self) -> Vec<f64> {
        shifted_breaks(self.q, self.shift)
    }
    fn max_step(&self, t: f64) -> f64 {
        self.q.max_step(self.shift + t)
    }
}

fn shifted_breaks(q: &DiracPotential, shift: f64) -> Vec<f64> {
    q.breakpoints().into_iter().map(|b| b - shift).filter(|b| *b > 0.0).collect()
}

/// Solution `M(T, z)` of the canonical system with `M(0) = I`.
pub fn canonical_solution(h: &Hamiltonian, z: C64, tlen: f64, tol: Tolerance) -> Result<Mat2> {
    if !(tlen.is_finite() && tlen > 0.0) {
        return Err(Error::validation("canonical system length must be positive"));
    }
    let opts = StepOptions::with_tol(tol);
    let id = Mat2::identity().0;
    match h {
        Hamiltonian::Constant(hh) => Ok(Mat2(integrate(&ConstCanon(*hh, z), 0.0, tlen, id, opts)?)),
        Hamiltonian::Dirac { q, shift } => {
            if q.closed_form_g0(*shift).is_some() {
                Ok(Mat2(integrate(&DiagCanon { q, shift: *shift, z }, 0.0, tlen, id, opts)?))
            } else {
                let n0 = n_q(q, *shift, tol)?;
                let mut y = [C64::new(0.0, 0.0); 8];
                y[..4].copy_from_slice(&n0.0);
                y[4..].copy_from_slice(&id);
                let out = integrate(&JointCanon { q, shift: *shift, z }, 0.0, tlen, y, opts)?;
                Ok(Mat2([out[4], out[5], out[6], out[7]]))
            }
        }
    }
}

/// Weyl disk of a truncated canonical system: the circle through the images
/// of the boundary parameters `w = 0, 1, inf`.
#[derive(Clone, Copy, Debug)]
pub struct WeylDisk {
    pub center: C64,
    pub radius: f64,
    pub images: [C64; 3],
}

/// Weyl disk of `J M' = z H M` on `[0, T]`.
pub fn weyl_canonical(h: &Hamiltonian, z: C64, tlen: f64, tol: Tolerance) -> Result<WeylDisk> {
    if z.im <= 0.0 {
        return Err(Error::validation("Weyl disks are defined for Im z > 0"));
    }
    let m = canonical_solution(h, z, tlen, tol)?;
    let [t_p, f_p, t_m, f_m] = m.0;
    let images = [f_m / t_m, (f_p + f_m) / (t_p + t_m), f_p / t_p];
    circumcircle(images)
}

fn circumcircle(pts: [C64; 3]) -> Result<WeylDisk> {
    if pts.iter().any(|p| !(p.re.is_finite() && p.im.is_finite())) {
        return Err(Error::numerical("Weyl disk images are not finite"));
    }
    let d1 = pts[1] - pts[0];
    let d2 = pts[2] - pts[0];
    let spread = d1.norm().max(d2.norm());
    let size = pts[0].norm().max(1.0);
    if spread < 1e-13 * size {
        let center = (pts[0] + pts[1] + pts[2]) / 3.0;
        return Ok(WeylDisk { center, radius: spread, images: pts });
    }
    let cross = (d1.conj() * d2).im;
    if cross.abs() < 1e-12 * d1.norm() * d2.norm() {
        return Err(Error::numerical("degenerate Weyl disk: boundary images are collinear"));
    }
    let num = d1.norm_sqr() * d2 - d2.norm_sqr() * d1;
    let c = num / (d1.conj() * d2 - d1 * d2.conj());
    Ok(WeylDisk { center: pts[0] + c, radius: c.norm(), images: pts })
}

/// Weyl function value together with a convergence diagnostic.
#[derive(Clone, Copy, Debug)]
pub struct WeylValue {
    pub m: C64,
    /// Spread of the trailing window of samples.
    pub spread: f64,
    /// Radius (Krein variable) at which the value was read off.
    pub r_used: f64,
}

/// Number of trailing samples used to judge convergence of Weyl limits.
pub const WEYL_WINDOW: usize = 5;

/// Weyl function of the Dirac partner of `a`, through the Krein route
/// `m(z) = i lim P^*(r, z) / P*(r, z)`.
pub fn weyl_direct(a: &KreinCoefficient, z: C64, rmax: f64, tol: Tolerance) -> Result<WeylValue> {
    if z.im <= 0.0 {
        return Err(Error::validation("the Weyl function is evaluated for Im z > 0"));
    }
    let n = 60usize;
    let stops: Vec<f64> = (1..=n).map(|k| rmax * k as f64 / n as f64).collect();
    let opts = KreinOptions { tol, stops: stops.clone(), ..Default::default() };
    let tr = solve_krein(a, z, rmax, &opts)?;
    let idx: Vec<usize> = stops.iter().map(|s| tr.index_of(*s).unwrap()).collect();
    let ms: Vec<C64> = idx.iter().map(|&i| I * tr.phatstar(i) / tr.pstar(i)).collect();
    let size: Vec<f64> = idx.iter().map(|&i| tr.p(i).norm() + tr.phat(i).norm()).collect();
    let mut best = WEYL_WINDOW - 1;
    for k in WEYL_WINDOW - 1..n {
        if size[k] <= size[best] {
            best = k;
        }
    }
    let m = ms[best];
    let spread = ms[best + 1 - WEYL_WINDOW..=best].iter().map(|v| (v - m).norm()).fold(0.0, f64::max);
    if spread > 1e-6 * m.norm().max(1.0) {
        return Err(Error::numerical(format!(
            "Weyl limit has not converged by r = {} (trailing spread {spread:.3e}); increase rmax",
            stops[best]
        )));
    }
    Ok(WeylValue { m, spread, r_used: stops[best] })
}

/// Weyl function `lim phi_+ / theta_+` read directly from the Dirac
/// fundamental matrix.
pub fn weyl_dirac_limit(q: &DiracPotential, z: C64, tmax: f64, tol: Tolerance) -> Result<WeylValue> {
    if z.im <= 0.0 {
        return Err(Error::validation("the Weyl function is evaluated for Im z > 0"));
    }
    let n = 40usize;
    let stops: Vec<f64> = (1..=n).map(|k| tmax * k as f64 / n as f64).collect();
    let tr = fundamental_solution(q, z, &stops, tol)?;
    let ms: Vec<C64> = tr.n.iter().map(|m| m.0[1] / m.0[0]).collect();
    let m = ms[n - 1];
    let spread = ms[n - WEYL_WINDOW..].iter().map(|v| (v - m).norm()).fold(0.0, f64::max);
    if spread > 1e-6 * m.norm().max(1.0) {
        return Err(Error::numerical(format!("Dirac Weyl limit has not converged by t = {tmax}")));
    }
    Ok(WeylValue { m, spread, r_used: tmax })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krein::solve_krein_on_grid;
    use crate::potential::{spectral_dirac, Family, PotentialSpec};
    use approx::assert_relative_eq;

    #[test]
    fn free_dirac_is_rotation() {
        let z = C64::new(1.3, 0.0);
        let tr = fundamental_solution(&DiracPotential::Zero, z, &[0.5, 2.0], Tolerance::default()).unwrap();
        for (t, n) in tr.grid.iter().zip(&tr.n) {
            let (c, s) = ((z.re * t).cos(), (z.re * t).sin());
            let exact = Mat2::real(c, s, -s, c);
            assert!((*n - exact).frobenius() < 1e-10);
        }
    }

    #[test]
    fn krein_assembly_matches_direct_dirac() {
        let a = PotentialSpec::new(Family::CompactConst)
            .param("c", 0.4)
            .param("c_im", 0.3)
            .param("length", 2.0)
            .compile()
            .unwrap()
            .krein();
        let q = spectral_dirac(&a);
        for z in [C64::new(0.7, 0.3), C64::new(-1.1, -0.2), C64::new(0.0, 1.5)] {
            let grid: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
            let kt = solve_krein_on_grid(&a, z, &grid, Tolerance::default()).unwrap();
            let stops: Vec<f64> = grid.iter().map(|r| 0.5 * r).collect();
            let dt = fundamental_solution(&q, z, &stops, Tolerance::default()).unwrap();
            for i in 0..grid.len() {
                let (t, nk) = fundamental_from_krein(&kt, i);
                assert_relative_eq!(t, dt.grid[i]);
                assert!((nk - dt.n[i]).frobenius() < 1e-8 * dt.n[i].frobenius().max(1.0));
            }
        }
    }

    #[test]
    fn weyl_disk_of_identity_hamiltonian() {
        let d = weyl_canonical(&Hamiltonian::Constant([1.0, 0.0, 1.0]), C64::new(0.0, 1.0), 10.0, Tolerance::default())
            .unwrap();
        assert!((d.center - I).norm() < 1e-8);
        assert!(d.radius < 1e-6);
    }

    #[test]
    fn constant_hamiltonian_weyl_function() {
        // det H = 1: m(z) = (i + h12) / h11
        let h = [2.0, 0.5, (1.0 + 0.25) / 2.0];
        let d = weyl_canonical(&Hamiltonian::Constant(h), C64::new(0.3, 1.0), 14.0, Tolerance::default()).unwrap();
        let exact = (I + 0.5) / 2.0;
        assert!((d.center - exact).norm() < 1e-8);
    }

    #[test]
    fn three_routes_to_the_weyl_function_agree() {
        let a = PotentialSpec::new(Family::KreinExp).param("amplitude_im", 0.5).compile().unwrap().krein();
        let q = spectral_dirac(&a);
        for z in [C64::new(0.4, 1.0), C64::new(-1.0, 0.7)] {
            let md = weyl_direct(&a, z, 30.0, Tolerance::default()).unwrap();
            let ml = weyl_dirac_limit(&q, z, 15.0, Tolerance::default()).unwrap();
            let mc = weyl_canonical(&Hamiltonian::Dirac { q: q.clone(), shift: 0.0 }, z, 15.0, Tolerance::default())
                .unwrap();
            assert!(md.m.im > 0.0);
            assert!((md.m - ml.m).norm() < 1e-7, "{} {}", md.m, ml.m);
            assert!((md.m - mc.center).norm() < 1e-7, "{} {}", md.m, mc.center);
        }
    }

    #[test]
    fn free_weyl_function_is_i() {
        let m = weyl_direct(&KreinCoefficient::Zero, C64::new(0.3, 0.8), 30.0, Tolerance::default()).unwrap();
        assert!((m.m - I).norm() < 1e-12);
    }

    #[test]
    fn hamiltonian_closed_form_matches_integration() {
        let q = DiracPotential::OffDiagExp { amp: 2.0, rate: 2.0, cut: f64::INFINITY };
        let h = hamiltonian(&q, 0.8, Tolerance::default()).unwrap();
        let sys = DiracSystem { q: &q, z: C64::new(0.0, 0.0) };
        let n = Mat2(integrate(&sys, 0.0, 0.8, Mat2::identity().0, StepOptions::default()).unwrap());
        let hn = gram(&n);
        for k in 0..3 {
            assert!((h[k] - hn[k]).abs() < 1e-10);
        }
        assert_relative_eq!(h[0] * h[2] - h[1] * h[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn det_n_is_one() {
        let q = DiracPotential::Oscillatory { amp: 1.0, beta: 1.0, gamma: 2.0, cut: f64::INFINITY };
        let tr = fundamental_solution(&q, C64::new(0.5, -0.3), &[0.5, 1.0, 1.5], Tolerance::default()).unwrap();
        assert!(det_residual(&tr) < 1e-10);
    }
}
