//! Krein systems and their classical identities.
//!
//! For a coefficient `a` the Krein system is
//!
//! ```text
//! P'  = i z P - conj(a) P*,   P(0)  = 1,
//! P*' = -a P,                 P*(0) = 1,
//! ```
//!
//! and the dual system is the same system driven by `-a`. Both are solved
//! together; traces store `(P, P*, P^, P^*)` at the nodes of a composite
//! seven-point Gauss-Lobatto rule built on the adaptive step grid, so that
//! integrals of products of traces are computed to the integrator's accuracy.

pub mod regularized;

use crate::error::{Error, Result};
use crate::odecore::{Integrator, OdeSystem, StepOptions, Tolerance};
use crate::potential::KreinCoefficient;
use crate::quad::{lobatto7, LOBATTO_NODES};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;
use std::fmt::Write as _;

const I: C64 = C64::new(0.0, 1.0);

/// The Krein system and its dual as one system on `C^4`:
/// `[P, P*, P^, P^*]`.
pub(crate) struct KreinSystem<'a> {
    pub a: &'a KreinCoefficient,
    pub z: C64,
}

impl OdeSystem<4> for KreinSystem<'_> {
    fn rhs(&self, r: f64, y: &[C64; 4]) -> [C64; 4] {
        let a = self.a.eval(r);
        let ac = a.conj();
        let iz = I * self.z;
        [iz * y[0] - ac * y[1], -a * y[0], iz * y[2] + ac * y[3], a * y[2]]
    }
    fn max_step(&self, r: f64) -> f64 {
        self.a.max_step(r)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.a.breakpoints()
    }
}

pub(crate) const INITIAL: [C64; 4] = [C64::new(1.0, 0.0); 4];

/// Options for [`solve_krein`].
#[derive(Clone, Debug)]
pub struct KreinOptions {
    pub tol: Tolerance,
    /// Largest cell of the output grid.
    pub max_cell: f64,
    /// Radii forced onto the output grid.
    pub stops: Vec<f64>,
}

impl Default for KreinOptions {
    fn default() -> Self {
        KreinOptions { tol: Tolerance::default(), max_cell: 0.5, stops: Vec::new() }
    }
}

/// Solution of the Krein system and its dual along `[0, rmax]`.
#[derive(Clone, Debug)]
pub struct KreinTrace {
    pub z: C64,
    /// Cell boundaries.
    pub grid: Vec<f64>,
    /// Quadrature nodes, `LOBATTO_NODES - 1` per cell plus the final point.
    pub nodes: Vec<f64>,
    /// `[P, P*, P^, P^*]` at every node.
    pub values: Vec<[C64; 4]>,
}

const PER_CELL: usize = LOBATTO_NODES - 1;

impl KreinTrace {
    fn node_index(&self, i: usize) -> usize {
        i * PER_CELL
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn r(&self, i: usize) -> f64 {
        self.grid[i]
    }

    pub fn state(&self, i: usize) -> [C64; 4] {
        self.values[self.node_index(i)]
    }

    pub fn p(&self, i: usize) -> C64 {
        self.state(i)[0]
    }

    pub fn pstar(&self, i: usize) -> C64 {
        self.state(i)[1]
    }

    pub fn phat(&self, i: usize) -> C64 {
        self.state(i)[2]
    }

    pub fn phatstar(&self, i: usize) -> C64 {
        self.state(i)[3]
    }

    /// Index of the grid point equal to `r`.
    pub fn index_of(&self, r: f64) -> Option<usize> {
        let tol = 1e-12 * r.abs().max(1.0);
        let k = self.grid.partition_point(|g| *g < r - tol);
        (k < self.grid.len() && (self.grid[k] - r).abs() <= tol).then_some(k)
    }

    /// Final state.
    pub fn last(&self) -> [C64; 4] {
        *self.values.last().unwrap()
    }

    /// Cumulative `int_0^{grid[i]} f(values)` for a per-node integrand.
    pub fn cumulative<F: Fn(usize) -> C64>(&self, f: F) -> Vec<C64> {
        let (_, w) = lobatto7();
        let mut out = Vec::with_capacity(self.grid.len());
        let mut acc = C64::new(0.0, 0.0);
        out.push(acc);
        for c in 0..self.grid.len() - 1 {
            let h = self.grid[c + 1] - self.grid[c];
            let base = c * PER_CELL;
            let mut s = C64::new(0.0, 0.0);
            for (j, wj) in w.iter().enumerate() {
                s += f(base + j) * *wj;
            }
            acc += s * h;
            out.push(acc);
        }
        out
    }

    /// Cumulative `int_0^r |P|^2` at the grid points.
    pub fn norm_p2(&self) -> Vec<f64> {
        self.cumulative(|k| C64::new(self.values[k][0].norm_sqr(), 0.0)).into_iter().map(|v| v.re).collect()
    }

    /// CSV with columns `r, ReP, ImP, RePstar, ImPstar` and optionally the dual columns.
    pub fn to_csv(&self, dual: bool) -> String {
        let mut s = String::from("r,ReP,ImP,RePstar,ImPstar");
        if dual {
            s.push_str(",RePhat,ImPhat,RePhatstar,ImPhatstar");
        }
        s.push('\n');
        for i in 0..self.len() {
            let v = self.state(i);
            let _ = write!(s, "{}", fmt17(self.grid[i]));
            let cols = if dual { 4 } else { 2 };
            for c in v.iter().take(cols) {
                let _ = write!(s, ",{},{}", fmt17(c.re), fmt17(c.im));
            }
            s.push('\n');
        }
        s
    }
}

/// Float formatting with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn checked_rmax(rmax: f64) -> Result<()> {
    if !(rmax.is_finite() && rmax > 0.0) {
        return Err(Error::validation("rmax must be positive and finite"));
    }
    Ok(())
}

/// Solve the Krein system and its dual on `[0, rmax]` on an adaptive grid.
pub fn solve_krein(a: &KreinCoefficient, z: C64, rmax: f64, opts: &KreinOptions) -> Result<KreinTrace> {
    checked_rmax(rmax)?;
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::validation("spectral parameter must be finite"));
    }
    let sys = KreinSystem { a, z };
    let step = StepOptions::with_tol(opts.tol).max_step(opts.max_cell);
    let mut it = Integrator::new(&sys, 0.0, INITIAL, step);
    let (frac, _) = lobatto7();
    let mut stops: Vec<f64> = opts.stops.iter().copied().filter(|s| *s > 0.0 && *s < rmax).collect();
    stops.push(rmax);
    stops.sort_by(|x, y| x.partial_cmp(y).unwrap());
    stops.dedup();
    let mut trace = KreinTrace { z, grid: vec![0.0], nodes: vec![0.0], values: vec![INITIAL] };
    for &stop in &stops {
        while it.t() < stop {
            let (t0, y0, h) = it.step_toward(stop)?;
            for f in frac.iter().take(LOBATTO_NODES - 1).skip(1) {
                trace.nodes.push(t0 + f * h);
                trace.values.push(it.probe(t0, &y0, f * h));
            }
            trace.nodes.push(it.t());
            trace.values.push(*it.y());
            trace.grid.push(it.t());
        }
    }
    Ok(trace)
}

/// Solve the Krein system on a prescribed grid (for example one shared with
/// another trace).
pub fn solve_krein_on_grid(a: &KreinCoefficient, z: C64, grid: &[f64], tol: Tolerance) -> Result<KreinTrace> {
    if grid.len() < 2 || grid[0] != 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("grid must start at 0 and increase strictly"));
    }
    let sys = KreinSystem { a, z };
    let mut it = Integrator::new(&sys, 0.0, INITIAL, StepOptions::with_tol(tol));
    let (frac, _) = lobatto7();
    let mut trace = KreinTrace { z, grid: grid.to_vec(), nodes: vec![0.0], values: vec![INITIAL] };
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        for f in frac.iter().skip(1) {
            let t = if *f == 1.0 { w[1] } else { w[0] + f * h };
            it.advance_to(t)?;
            trace.nodes.push(t);
            trace.values.push(*it.y());
        }
    }
    Ok(trace)
}

fn same_grid(a: &KreinTrace, b: &KreinTrace, upto: usize) -> Result<()> {
    if a.grid.len() <= upto || b.grid.len() <= upto {
        return Err(Error::validation("traces do not reach the requested radius"));
    }
    for i in 0..=upto {
        if (a.grid[i] - b.grid[i]).abs() > 1e-13 * a.grid[i].abs().max(1.0) {
            return Err(Error::validation("traces must share their grid"));
        }
    }
    Ok(())
}

/// Reproducing kernel `k_r(w, z) = (1/2pi) int_0^r P(s, z) conj(P(s, w)) ds`.
pub fn reproducing_kernel(tr_w: &KreinTrace, tr_z: &KreinTrace, r: f64) -> Result<C64> {
    let i = tr_z.index_of(r).ok_or_else(|| Error::validation("r is not a grid point of the trace"))?;
    same_grid(tr_w, tr_z, i)?;
    let cum = tr_z.cumulative(|k| tr_z.values[k][0] * tr_w.values[k][0].conj());
    Ok(cum[i] / (2.0 * PI))
}

/// Christoffel function `m_r(z) = (int_0^r |P|^2)^{-1}`.
pub fn christoffel_m(tr: &KreinTrace, r: f64) -> Result<f64> {
    let i = tr.index_of(r).ok_or_else(|| Error::validation("r is not a grid point of the trace"))?;
    if i == 0 {
        return Err(Error::validation("Christoffel function needs r > 0"));
    }
    Ok(1.0 / tr.norm_p2()[i])
}

/// Largest relative defect of `|P*|^2 - |P|^2 = 2 Im z int_0^r |P|^2` over the grid.
pub fn cd_residual(tr: &KreinTrace) -> f64 {
    let n2 = tr.norm_p2();
    let y = tr.z.im;
    (0..tr.len())
        .map(|i| {
            let (p, ps) = (tr.p(i).norm_sqr(), tr.pstar(i).norm_sqr());
            ((ps - p) - 2.0 * y * n2[i]).abs() / (ps + p)
        })
        .fold(0.0, f64::max)
}

/// Largest relative defect of the two-point identity
/// `P(z) conj P(w) - P*(z) conj P*(w) = i (z - conj w) int_0^r P(z) conj P(w)`.
pub fn cd_two_point_residual(tr_z: &KreinTrace, tr_w: &KreinTrace) -> Result<f64> {
    let n = tr_z.len().min(tr_w.len());
    same_grid(tr_z, tr_w, n - 1)?;
    let cum = tr_z.cumulative(|k| tr_z.values[k][0] * tr_w.values[k][0].conj());
    let factor = I * (tr_z.z - tr_w.z.conj());
    Ok((0..n)
        .map(|i| {
            let (pz, pw, sz, sw) = (tr_z.p(i), tr_w.p(i), tr_z.pstar(i), tr_w.pstar(i));
            let lhs = pz * pw.conj() - sz * sw.conj();
            (lhs - factor * cum[i]).norm() / (pz.norm() * pw.norm() + sz.norm() * sw.norm())
        })
        .fold(0.0, f64::max))
}

/// Largest relative defect of `P(r, z) = e^{izr} conj(P*(r, conj z))`, and the
/// same for the dual pair, over a shared grid.
pub fn reflection_residual(tr_z: &KreinTrace, tr_zbar: &KreinTrace) -> Result<f64> {
    if (tr_zbar.z - tr_z.z.conj()).norm() > 1e-15 * tr_z.z.norm().max(1.0) {
        return Err(Error::validation("second trace must be taken at the conjugate point"));
    }
    let n = tr_z.len().min(tr_zbar.len());
    same_grid(tr_z, tr_zbar, n - 1)?;
    let mut worst = 0.0f64;
    for i in 0..n {
        let e = (I * tr_z.z * tr_z.r(i)).exp();
        let a = tr_z.state(i);
        let b = tr_zbar.state(i);
        for (x, y) in [(a[0], b[1]), (a[2], b[3])] {
            let rhs = e * y.conj();
            worst = worst.max((x - rhs).norm() / (x.norm() + rhs.norm()));
        }
    }
    Ok(worst)
}

/// Largest relative defect of `P P^* + P^ P* = 2 e^{izr}` over the grid.
pub fn wronskian_residual(tr: &KreinTrace) -> f64 {
    (0..tr.len())
        .map(|i| {
            let v = tr.state(i);
            let e = 2.0 * (I * tr.z * tr.r(i)).exp();
            let (u, w) = (v[0] * v[3], v[2] * v[1]);
            (u + w - e).norm() / (u.norm() + w.norm()).max(e.norm())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Family, PotentialSpec};
    use approx::assert_relative_eq;

    fn exp_coeff() -> KreinCoefficient {
        PotentialSpec::new(Family::KreinExp).param("amplitude_im", 0.4).compile().unwrap().krein()
    }

    #[test]
    fn free_system_is_explicit() {
        let z = C64::new(0.7, -0.4);
        let tr = solve_krein(&KreinCoefficient::Zero, z, 5.0, &KreinOptions::default()).unwrap();
        for i in 0..tr.len() {
            let e = (I * z * tr.r(i)).exp();
            assert!((tr.p(i) - e).norm() < 1e-10 * e.norm());
            assert!((tr.pstar(i) - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_coefficient_matches_matrix_exponential() {
        // For constant a the system matrix is constant; exp via Cayley-Hamilton.
        let c = C64::new(0.8, 0.3);
        let len = 2.0;
        let a = KreinCoefficient::Steps { knots: vec![0.0, len], values: vec![c] };
        for z in [C64::new(1.3, 0.2), C64::new(-2.0, -0.7), C64::new(0.0, 2.0)] {
            let tr = solve_krein(&a, z, len, &KreinOptions::default()).unwrap();
            let m = [I * z, -c.conj(), -c, C64::new(0.0, 0.0)];
            let half = 0.5 * (m[0] + m[3]);
            let det = m[0] * m[3] - m[1] * m[2];
            let d = (half * half - det).sqrt();
            let (ch, sh) = ((d * len).cosh(), if d.norm() < 1e-12 { C64::new(len, 0.0) } else { (d * len).sinh() / d });
            let pre = (half * len).exp();
            let e = [
                pre * (ch + sh * (m[0] - half)),
                pre * sh * m[1],
                pre * sh * m[2],
                pre * (ch + sh * (m[3] - half)),
            ];
            let p = e[0] + e[1];
            let ps = e[2] + e[3];
            let v = tr.last();
            assert!((v[0] - p).norm() < 1e-10 * p.norm().max(1.0));
            assert!((v[1] - ps).norm() < 1e-10 * ps.norm().max(1.0));
        }
    }

    #[test]
    fn identities_hold_for_exponential_coefficient() {
        let a = exp_coeff();
        for z in [C64::new(0.5, 1.0), C64::new(-1.5, 0.3), C64::new(2.0, -0.5)] {
            let opts = KreinOptions { stops: vec![1.0, 2.5], ..Default::default() };
            let tr = solve_krein(&a, z, 6.0, &opts).unwrap();
            assert!(cd_residual(&tr) < 1e-9, "cd {}", cd_residual(&tr));
            assert!(wronskian_residual(&tr) < 1e-9);
            let tb = solve_krein_on_grid(&a, z.conj(), &tr.grid, Tolerance::default()).unwrap();
            assert!(reflection_residual(&tr, &tb).unwrap() < 1e-9);
            let w = C64::new(0.2, 0.8);
            let tw = solve_krein_on_grid(&a, w, &tr.grid, Tolerance::default()).unwrap();
            assert!(cd_two_point_residual(&tr, &tw).unwrap() < 1e-9);
        }
    }

    #[test]
    fn christoffel_free_case() {
        let y = 0.5;
        let tr = solve_krein(&KreinCoefficient::Zero, C64::new(0.3, y), 4.0, &KreinOptions::default()).unwrap();
        let m = christoffel_m(&tr, 4.0).unwrap();
        assert_relative_eq!(m, 2.0 * y / (1.0 - (-2.0 * y * 4.0f64).exp()), max_relative = 1e-10);
    }

    #[test]
    fn reproducing_kernel_free_case() {
        let z = C64::new(0.4, 0.6);
        let w = C64::new(-0.2, 0.9);
        let tz = solve_krein(&KreinCoefficient::Zero, z, 3.0, &KreinOptions::default()).unwrap();
        let tw = solve_krein_on_grid(&KreinCoefficient::Zero, w, &tz.grid, Tolerance::default()).unwrap();
        let k = reproducing_kernel(&tw, &tz, 3.0).unwrap();
        let s = I * (z - w.conj());
        let exact = ((s * 3.0).exp() - 1.0) / s / (2.0 * PI);
        assert!((k - exact).norm() < 1e-11);
    }

    #[test]
    fn csv_has_expected_columns() {
        let tr = solve_krein(&KreinCoefficient::Zero, C64::new(0.0, 1.0), 1.0, &KreinOptions::default()).unwrap();
        let csv = tr.to_csv(true);
        let header = csv.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 9);
        assert_eq!(csv.lines().count(), tr.len() + 1);
    }

    #[test]
    fn nonfinite_inputs_are_rejected() {
        assert!(solve_krein(&KreinCoefficient::Zero, C64::new(f64::NAN, 0.0), 1.0, &KreinOptions::default()).is_err());
        assert!(solve_krein(&KreinCoefficient::Zero, C64::new(0.0, 0.0), -1.0, &KreinOptions::default()).is_err());
    }
}
