//! The inverse Szegő function `Pi` and its continuation below the real line.
//!
//! `Pi` is the limit of `P*(r, z)` as `r -> inf` for `Im z > 0`, normalized by a
//! unimodular constant `e^{-i gamma}` so that `Pi(i) > 0`. Unnormalized ("raw")
//! values are the plain limits; identities such as duality and
//! `m = i Pi^_raw / Pi_raw` are stated for raw values.
//!
//! Three evaluators are provided:
//!
//! * [`Method::Limit`]: the limit itself, on `Im z > 0`;
//! * [`Method::CompactExact`]: `P*(L, z)` for coefficients supported on `[0, L]`,
//!   entire in `z` (exact matrix exponentials for piecewise-constant `a`);
//! * [`Method::CdIntegral`]: the Christoffel-Darboux continuation
//!
//!   ```text
//!   Pi_raw(z) = (z + ih) / (i conj Pi_raw(ih)) int_0^inf P(x, z) conj P(x, ih) dx
//!   ```
//!
//!   valid on `Im z > -delta/4` when the entropy decays like `e^{-delta r}`
//!   and `h > delta/4`.

pub use crate::krein::regularized;

use crate::entropy::{entropy_tolerance, estimate_delta};
use crate::error::{Error, Result};
use crate::krein::{KreinSystem, INITIAL};
use crate::mat2::Mat2;
use crate::odecore::{integrate, Integrator, OdeSystem, StepOptions, Tolerance};
use crate::potential::{spectral_dirac, KreinCoefficient};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const I: C64 = C64::new(0.0, 1.0);

fn finite(z: C64) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::validation("spectral parameter must be finite"))
    }
}

// ---------------------------------------------------------------- limits

#[derive(Clone, Debug)]
pub struct LimitOptions {
    /// Radius at which the limit is read (default 40).
    pub rmax: Option<f64>,
    /// Largest accepted spread of `P*` over the trailing window.
    pub tol: f64,
    pub window: f64,
    pub ode: Tolerance,
}

impl Default for LimitOptions {
    fn default() -> Self {
        LimitOptions { rmax: None, tol: 1e-9, window: 5.0, ode: Tolerance::new(1e-13, 1e-12) }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitValue {
    pub value: C64,
    pub spread: f64,
    pub r_used: f64,
}

/// Raw limit `lim P*(r, z)` for `Im z > 0`.
pub fn pstar_limit(a: &KreinCoefficient, z: C64, opts: &LimitOptions) -> Result<LimitValue> {
    finite(z)?;
    if z.im <= 0.0 {
        return Err(Error::validation("the limit of P* exists only for Im z > 0"));
    }
    if let Some(l) = a.support() {
        let v = pstar_compact(a, z, opts.ode)?;
        return Ok(LimitValue { value: v, spread: 0.0, r_used: l });
    }
    let rmax = opts.rmax.unwrap_or(40.0);
    if !(rmax > opts.window) {
        return Err(Error::validation("rmax must exceed the convergence window"));
    }
    let sys = KreinSystem { a, z };
    let mut it = Integrator::new(&sys, 0.0, INITIAL, StepOptions::with_tol(opts.ode).max_step(0.5));
    it.advance_to(rmax - opts.window)?;
    let mut samples = vec![it.y()[1]];
    for k in 1..=10 {
        it.advance_to(rmax - opts.window * (1.0 - k as f64 / 10.0))?;
        samples.push(it.y()[1]);
    }
    let value = *samples.last().unwrap();
    let spread = samples.iter().map(|s| (s - value).norm()).fold(0.0, f64::max);
    if !(spread < opts.tol * value.norm().max(1.0)) {
        return Err(Error::numerical(format!(
            "P*(r, z) has not settled by r = {rmax}: trailing spread {spread:.3e} at z = {z}"
        )));
    }
    Ok(LimitValue { value, spread, r_used: rmax })
}

/// Normalization angle `gamma` in `[0, 2 pi)` with `e^{-i gamma} Pi_raw(i) > 0`.
pub fn szego_gamma(a: &KreinCoefficient, opts: &LimitOptions) -> Result<f64> {
    Ok(pstar_limit(a, I, opts)?.value.arg().rem_euclid(2.0 * PI))
}

/// Normalized `Pi(z)` for `Im z > 0`.
pub fn szego_limit(a: &KreinCoefficient, z: C64, opts: &LimitOptions) -> Result<C64> {
    let g = szego_gamma(a, opts)?;
    Ok(pstar_limit(a, z, opts)?.value * C64::from_polar(1.0, -g))
}

// ---------------------------------------------------------------- compact support

/// `sinh(l d) / d` as an entire function of `d^2`.
fn sinhc(l: f64, d2: C64) -> C64 {
    if (d2 * l * l).norm() < 1e-6 {
        l * (1.0 + d2 * l * l / 6.0 + d2 * d2 * l.powi(4) / 120.0)
    } else {
        let d = d2.sqrt();
        (d * l).sinh() / d
    }
}

/// Transfer matrix of `(P, P*)` across an interval of length `len` on which
/// `a = c`: `exp(len [[iz, -conj c], [-c, 0]])`.
pub fn constant_transfer(c: C64, len: f64, z: C64) -> Mat2 {
    let d2 = c.norm_sqr() - z * z / 4.0;
    let ch = if (d2 * len * len).norm() < 1e-6 {
        1.0 + d2 * len * len / 2.0 + d2 * d2 * len.powi(4) / 24.0
    } else {
        (d2.sqrt() * len).cosh()
    };
    let sh = sinhc(len, d2);
    let k = Mat2::new(I * z / 2.0, -c.conj(), -c, -I * z / 2.0);
    (Mat2::identity().scale(ch) + k.scale(sh)).scale((I * z * len / 2.0).exp())
}

/// `(P(L, z), P*(L, z))` for `a = c` on `[0, L]`.
pub fn constant_coefficient_solution(c: C64, len: f64, z: C64) -> (C64, C64) {
    let m = constant_transfer(c, len, z);
    (m.0[0] + m.0[1], m.0[2] + m.0[3])
}

fn as_steps(a: &KreinCoefficient) -> Option<(Vec<f64>, Vec<C64>)> {
    match a {
        KreinCoefficient::Zero => Some((vec![0.0], vec![])),
        KreinCoefficient::Steps { knots, values } => Some((knots.clone(), values.clone())),
        KreinCoefficient::Negated(inner) => {
            as_steps(inner).map(|(k, v)| (k, v.into_iter().map(|x| -x).collect()))
        }
        _ => None,
    }
}

/// Raw `P*(L, z)` for a coefficient supported on `[0, L]`.
pub fn pstar_compact(a: &KreinCoefficient, z: C64, tol: Tolerance) -> Result<C64> {
    finite(z)?;
    let l = a.support().ok_or_else(|| Error::validation("coefficient has no finite support"))?;
    if let Some((knots, values)) = as_steps(a) {
        let mut m = constant_transfer(C64::new(0.0, 0.0), knots[0], z);
        for (k, c) in values.iter().enumerate() {
            m = constant_transfer(*c, knots[k + 1] - knots[k], z) * m;
        }
        return Ok(m.0[2] + m.0[3]);
    }
    let y = integrate(&KreinSystem { a, z }, 0.0, l, INITIAL, StepOptions::with_tol(tol))?;
    Ok(y[1])
}

/// Normalized `Pi(z) = e^{-i gamma} P*(L, z)` for compactly supported `a`.
pub fn szego_compact(a: &KreinCoefficient, z: C64) -> Result<C64> {
    let tol = LimitOptions::default().ode;
    let g = pstar_compact(a, I, tol)?.arg();
    Ok(pstar_compact(a, z, tol)? * C64::from_polar(1.0, -g))
}

// ---------------------------------------------------------------- CD continuation

#[derive(Clone, Debug)]
pub struct CdOptions {
    /// Entropy decay rate; infinite for compact support.
    pub delta: f64,
    /// Anchor `h`; defaults to `delta / 2`, or 1 for compact support.
    pub h: Option<f64>,
    /// Required distance from the edge of the strip.
    pub margin: f64,
    /// Relative accuracy of the truncated integral.
    pub tol: f64,
    pub rmax: f64,
    pub ode: Tolerance,
    pub limit: LimitOptions,
}

impl Default for CdOptions {
    fn default() -> Self {
        CdOptions {
            delta: f64::INFINITY,
            h: None,
            margin: 0.01,
            tol: 1e-10,
            rmax: 600.0,
            ode: Tolerance::new(1e-13, 1e-12),
            limit: LimitOptions::default(),
        }
    }
}

impl CdOptions {
    pub fn anchor(&self) -> f64 {
        self.h.unwrap_or(if self.delta.is_finite() { self.delta / 2.0 } else { 1.0 })
    }

    /// Lower edge of the usable strip `Im z > floor`.
    pub fn floor(&self) -> f64 {
        let h = self.anchor();
        let edge = if self.delta.is_finite() { (self.delta / 4.0).min(h) } else { h };
        -edge + self.margin
    }
}

/// Krein system at `z` and at the anchor `ih`, plus the running CD integral.
struct CdSystem<'a> {
    a: &'a KreinCoefficient,
    z: C64,
    w: C64,
}

impl OdeSystem<5> for CdSystem<'_> {
    fn rhs(&self, r: f64, y: &[C64; 5]) -> [C64; 5] {
        let a = self.a.eval(r);
        let ac = a.conj();
        [
            I * self.z * y[0] - ac * y[1],
            -a * y[0],
            I * self.w * y[2] - ac * y[3],
            -a * y[2],
            y[0] * y[2].conj(),
        ]
    }
    fn max_step(&self, r: f64) -> f64 {
        self.a.max_step(r).min(1.0)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.a.breakpoints()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CdValue {
    pub raw: C64,
    pub r_used: f64,
    pub tail: f64,
}

/// Raw CD continuation given the raw anchor value `Pi_raw(ih)`.
pub fn pstar_extend_cd(a: &KreinCoefficient, z: C64, anchor_raw: C64, opts: &CdOptions) -> Result<CdValue> {
    finite(z)?;
    let h = opts.anchor();
    if !(h > 0.0) {
        return Err(Error::validation("anchor h must be positive"));
    }
    if opts.delta.is_finite() && !(h > opts.delta / 4.0) {
        return Err(Error::validation(format!("anchor h = {h} must exceed delta/4 = {}", opts.delta / 4.0)));
    }
    if !(z.im > opts.floor()) {
        return Err(Error::validation(format!(
            "Im z = {} is outside the usable strip Im z > {} (delta = {}, h = {h}, margin = {})",
            z.im,
            opts.floor(),
            opts.delta,
            opts.margin
        )));
    }
    let w = C64::new(0.0, h);
    let sys = CdSystem { a, z, w };
    let one = C64::new(1.0, 0.0);
    let mut it = Integrator::new(&sys, 0.0, [one, one, one, one, C64::new(0.0, 0.0)], StepOptions::with_tol(opts.ode));
    let (integral, r_used, tail) = match a.support() {
        Some(l) => {
            it.advance_to(l)?;
            let y = it.y();
            (y[4] + y[0] * y[2].conj() / (h - I * z), l, 0.0)
        }
        None => {
            let rate = opts.delta.min(4.0 * h) / 4.0 + z.im;
            loop {
                it.advance_to(it.t() + 1.0)?;
                let y = it.y();
                let tail = (y[0] * y[2].conj()).norm() / rate;
                if tail < opts.tol * y[4].norm() {
                    break (y[4], it.t(), tail);
                }
                if it.t() >= opts.rmax {
                    return Err(Error::numerical(format!(
                        "CD integral not converged by r = {} at z = {z}: tail estimate {tail:.3e}",
                        opts.rmax
                    )));
                }
            }
        }
    };
    let raw = (z + I * h) / (I * anchor_raw.conj()) * integral;
    Ok(CdValue { raw, r_used, tail })
}

/// Normalized CD continuation of `Pi` at `z`.
pub fn szego_extend_cd(a: &KreinCoefficient, z: C64, opts: &CdOptions) -> Result<C64> {
    let ev = AnalyticEvaluator::cd(a, opts.clone())?;
    ev.eval(z)
}

// ---------------------------------------------------------------- evaluators

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Limit,
    CdIntegral,
    CompactExact,
}

/// A prepared evaluator of `Pi` for one coefficient.
#[derive(Clone, Debug)]
pub struct AnalyticEvaluator {
    a: KreinCoefficient,
    method: Method,
    gamma: f64,
    anchor_raw: C64,
    limit: LimitOptions,
    cd: CdOptions,
}

impl AnalyticEvaluator {
    pub fn limit(a: &KreinCoefficient, opts: LimitOptions) -> Result<Self> {
        let gamma = szego_gamma(a, &opts)?;
        Ok(AnalyticEvaluator {
            a: a.clone(),
            method: Method::Limit,
            gamma,
            anchor_raw: C64::new(1.0, 0.0),
            limit: opts,
            cd: CdOptions::default(),
        })
    }

    pub fn compact(a: &KreinCoefficient) -> Result<Self> {
        let limit = LimitOptions::default();
        let gamma = pstar_compact(a, I, limit.ode)?.arg().rem_euclid(2.0 * PI);
        Ok(AnalyticEvaluator { a: a.clone(), method: Method::CompactExact, gamma, anchor_raw: C64::new(1.0, 0.0), limit, cd: CdOptions::default() })
    }

    pub fn cd(a: &KreinCoefficient, opts: CdOptions) -> Result<Self> {
        let anchor_raw = pstar_limit(a, C64::new(0.0, opts.anchor()), &opts.limit)?.value;
        let gamma = szego_gamma(a, &opts.limit)?;
        Ok(AnalyticEvaluator { a: a.clone(), method: Method::CdIntegral, gamma, anchor_raw, limit: opts.limit.clone(), cd: opts })
    }

    /// Exact evaluator for compact support, otherwise the CD continuation with
    /// `delta` fitted from the entropy on `r in [1, 4]`.
    pub fn auto(a: &KreinCoefficient) -> Result<Self> {
        if a.support().is_some() {
            return Self::compact(a);
        }
        let delta = estimate_delta(&spectral_dirac(a), (1.0, 4.0), 31, entropy_tolerance())?;
        Self::cd(a, CdOptions { delta, ..Default::default() })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn coefficient(&self) -> &KreinCoefficient {
        &self.a
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn anchor_h(&self) -> Option<f64> {
        (self.method == Method::CdIntegral).then(|| self.cd.anchor())
    }

    /// Lower edge `y0` of the half-plane `Im z > y0` served by this evaluator.
    pub fn region_floor(&self) -> f64 {
        match self.method {
            Method::Limit => 0.0,
            Method::CompactExact => f64::NEG_INFINITY,
            Method::CdIntegral => self.cd.floor(),
        }
    }

    pub fn contains(&self, z: C64) -> bool {
        z.im > self.region_floor()
    }

    pub fn eval_raw(&self, z: C64) -> Result<C64> {
        match self.method {
            Method::Limit => Ok(pstar_limit(&self.a, z, &self.limit)?.value),
            Method::CompactExact => pstar_compact(&self.a, z, self.limit.ode),
            Method::CdIntegral => Ok(pstar_extend_cd(&self.a, z, self.anchor_raw, &self.cd)?.raw),
        }
    }

    pub fn eval(&self, z: C64) -> Result<C64> {
        Ok(self.eval_raw(z)? * C64::from_polar(1.0, -self.gamma))
    }

    /// Evaluator of the same kind for the dual coefficient `-a`.
    pub fn dual(&self) -> Result<Self> {
        let d = self.a.dual();
        match self.method {
            Method::Limit => Self::limit(&d, self.limit.clone()),
            Method::CompactExact => Self::compact(&d),
            Method::CdIntegral => Self::cd(&d, self.cd.clone()),
        }
    }
}

/// Weyl function `m(z) = i Pi^_raw(z) / Pi_raw(z)`, continued wherever both
/// evaluators are valid.
pub fn weyl_ratio(ev: &AnalyticEvaluator, ev_dual: &AnalyticEvaluator, z: C64) -> Result<C64> {
    let p = ev.eval_raw(z)?;
    let pd = ev_dual.eval_raw(z)?;
    if p.norm() < 1e-12 * pd.norm().max(1.0) {
        return Err(Error::numerical(format!("near pole of m at z = {z}: |Pi| = {:.3e}", p.norm())));
    }
    Ok(I * pd / p)
}

/// `|conj Pi(conj z) Pi^(z) + Pi(z) conj Pi^(conj z) - 2|` on raw values.
pub fn duality_residual(ev: &AnalyticEvaluator, ev_dual: &AnalyticEvaluator, z: C64) -> Result<f64> {
    let (p, pc) = (ev.eval_raw(z)?, ev.eval_raw(z.conj())?);
    let (d, dc) = (ev_dual.eval_raw(z)?, ev_dual.eval_raw(z.conj())?);
    Ok((pc.conj() * d + p * dc.conj() - 2.0).norm())
}

/// Spectral density `|Pi(x)|^{-2}` (equal to `Im m(x + i0)`) at real `x`.
pub fn spectral_density(ev: &AnalyticEvaluator, x: f64) -> Result<f64> {
    if ev.method == Method::Limit {
        return Err(Error::validation("the limit evaluator does not reach the real line"));
    }
    Ok(1.0 / ev.eval_raw(C64::new(x, 0.0))?.norm_sqr())
}
