//! Potentials of Dirac operators and coefficients of Krein systems.
//!
//! A Dirac potential is the pair `(p, q)` forming `Q = [[-q, p], [p, q]]`.
//! A Krein coefficient is a complex function `a(r)`. The two are linked by
//! the time change `r = 2t`:
//!
//! * the *spectral* correspondence `a(r) = (p(r/2) + i q(r/2)) / 2` pairs a
//!   Krein system with the Dirac operator sharing its spectral measure;
//! * the *literal* correspondence `Q_a`, with `p = -2 Re a(2t)` and
//!   `q = 2 Im a(2t)`.
//!
//! For real coefficients the spectral partner of `a` is `-Q_a`.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Named families accepted in potential descriptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `Q = 0`.
    Zero,
    /// Krein coefficient `a(r) = A e^{-k r}` with complex amplitude.
    KreinExp,
    /// Krein coefficient constant on `[0, length]`.
    CompactConst,
    /// Piecewise-constant Krein coefficient from a table.
    CompactTable,
    /// Dirac potential `p(t) = A e^{-k t}`, `q = 0`.
    OffDiagonal,
    /// Dirac potential `p(t) = A e^{beta t} sin(e^{gamma t})`, `q = 0`.
    Oscillatory,
    /// Dirac potential linearly interpolated from a table.
    Table,
}

/// Tabulated samples. For `compact_table` the values are `Re a`, `Im a` on
/// the cells `[t_k, t_{k+1})`; for `table` they are `p`, `q` at the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table {
    pub t: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Serializable description of a potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub family: Family,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Truncation radius in the family's own variable; `None` means unbounded.
    #[serde(default)]
    pub support_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Table>,
}

/// Which correspondence links a Krein coefficient to a Dirac potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correspondence {
    Spectral,
    Literal,
}

/// Evaluable Krein coefficient `a(r)`, `r >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum KreinCoefficient {
    Zero,
    Exp { amp: C64, rate: f64, cut: f64 },
    /// Value `values[k]` on `[knots[k], knots[k+1])`, zero beyond the last knot.
    Steps { knots: Vec<f64>, values: Vec<C64> },
    FromDirac { q: Box<DiracPotential>, map: Correspondence },
    Negated(Box<KreinCoefficient>),
}

/// Evaluable Dirac potential `(p, q)(t)`, `t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum DiracPotential {
    Zero,
    OffDiagExp { amp: f64, rate: f64, cut: f64 },
    Oscillatory { amp: f64, beta: f64, gamma: f64, cut: f64 },
    /// Linear interpolation of `(p, q)` between knots, zero outside.
    Table { t: Vec<f64>, p: Vec<f64>, q: Vec<f64> },
    FromKrein { a: Box<KreinCoefficient>, map: Correspondence },
}

/// A compiled potential, remembering which side it was described on.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Krein(KreinCoefficient),
    Dirac(DiracPotential),
}

fn finite_or_inf(x: Option<f64>) -> f64 {
    x.unwrap_or(f64::INFINITY)
}

impl PotentialSpec {
    pub fn new(family: Family) -> Self {
        PotentialSpec { family, params: BTreeMap::new(), support_radius: None, table: None }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_support(mut self, r: f64) -> Self {
        self.support_radius = Some(r);
        self
    }

    pub fn with_table(mut self, table: Table) -> Self {
        self.table = Some(table);
        self
    }

    /// Parse and validate a JSON description.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PotentialSpec =
            serde_json::from_str(text).map_err(|e| Error::validation(format!("invalid potential description: {e}")))?;
        spec.compile()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("potential descriptions always serialize")
    }

    fn allowed_params(&self) -> &'static [&'static str] {
        match self.family {
            Family::Zero | Family::CompactTable | Family::Table => &["scale"],
            Family::KreinExp => &["amplitude", "amplitude_im", "rate", "scale"],
            Family::CompactConst => &["c", "c_im", "length", "scale"],
            Family::OffDiagonal => &["amplitude", "rate", "scale"],
            Family::Oscillatory => &["amplitude", "beta", "gamma", "scale"],
        }
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    /// Validate and build the evaluable potential.
    pub fn compile(&self) -> Result<Potential> {
        let allowed = self.allowed_params();
        for (k, v) in &self.params {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::validation(format!(
                    "unknown parameter '{k}' for family {:?}; expected one of {allowed:?}",
                    self.family
                )));
            }
            if !v.is_finite() {
                return Err(Error::validation(format!("parameter '{k}' must be finite")));
            }
        }
        if let Some(r) = self.support_radius {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::validation("support_radius must be finite and non-negative"));
            }
        }
        let needs_table = matches!(self.family, Family::CompactTable | Family::Table);
        if needs_table != self.table.is_some() {
            return Err(Error::validation(if needs_table {
                "this family requires a 'table' field"
            } else {
                "only table families accept a 'table' field"
            }));
        }
        let scale = self.get("scale", 1.0);
        let cut = finite_or_inf(self.support_radius);
        Ok(match self.family {
            Family::Zero => Potential::Krein(KreinCoefficient::Zero),
            Family::KreinExp => {
                let rate = self.get("rate", 1.0);
                if rate < 0.0 || (rate == 0.0 && !cut.is_finite()) {
                    return Err(Error::validation("rate must be positive unless support_radius is set"));
                }
                let amp = C64::new(self.get("amplitude", 1.0), self.get("amplitude_im", 0.0)) * scale;
                Potential::Krein(KreinCoefficient::Exp { amp, rate, cut })
            }
            Family::CompactConst => {
                let length = self.get("length", 2.0);
                if !(length > 0.0) {
                    return Err(Error::validation("length must be positive"));
                }
                let c = C64::new(self.get("c", 1.0), self.get("c_im", 0.0)) * scale;
                Potential::Krein(KreinCoefficient::Steps { knots: vec![0.0, length.min(cut)], values: vec![c] })
            }
            Family::CompactTable => {
                let t = self.table.as_ref().unwrap();
                check_knots(&t.t)?;
                if t.re.len() + 1 != t.t.len() || t.im.len() + 1 != t.t.len() {
                    return Err(Error::validation("compact_table needs one value per cell (len(t) - 1)"));
                }
                if t.t[0] != 0.0 {
                    return Err(Error::validation("compact_table knots must start at 0"));
                }
                let mut knots = Vec::new();
                let mut values = Vec::new();
                for k in 0..t.re.len() {
                    if t.t[k] >= cut {
                        break;
                    }
                    knots.push(t.t[k]);
                    values.push(C64::new(t.re[k], t.im[k]) * scale);
                }
                knots.push(t.t[values.len()].min(cut));
                Potential::Krein(KreinCoefficient::Steps { knots, values })
            }
            Family::OffDiagonal => {
                let rate = self.get("rate", 2.0);
                if rate < 0.0 || (rate == 0.0 && !cut.is_finite()) {
                    return Err(Error::validation("rate must be positive unless support_radius is set"));
                }
                Potential::Dirac(DiracPotential::OffDiagExp { amp: self.get("amplitude", 2.0) * scale, rate, cut })
            }
            Family::Oscillatory => {
                let gamma = self.get("gamma", 2.0);
                let beta = self.get("beta", 1.0);
                if !(gamma > 0.0) {
                    return Err(Error::validation("gamma must be positive"));
                }
                if beta >= gamma && !cut.is_finite() {
                    return Err(Error::validation("beta must be below gamma unless support_radius is set"));
                }
                Potential::Dirac(DiracPotential::Oscillatory { amp: self.get("amplitude", 1.0) * scale, beta, gamma, cut })
            }
            Family::Table => {
                let tb = self.table.as_ref().unwrap();
                check_knots(&tb.t)?;
                if tb.re.len() != tb.t.len() || tb.im.len() != tb.t.len() {
                    return Err(Error::validation("table needs p and q values at every knot"));
                }
                if tb.t[0] < 0.0 {
                    return Err(Error::validation("table knots must be non-negative"));
                }
                let mut t = Vec::new();
                let mut p = Vec::new();
                let mut q = Vec::new();
                for k in 0..tb.t.len() {
                    if tb.t[k] > cut {
                        break;
                    }
                    t.push(tb.t[k]);
                    p.push(tb.re[k] * scale);
                    q.push(tb.im[k] * scale);
                }
                if t.len() < 2 {
                    return Err(Error::validation("support_radius leaves fewer than two table knots"));
                }
                Potential::Dirac(DiracPotential::Table { t, p, q })
            }
        })
    }
}

fn check_knots(t: &[f64]) -> Result<()> {
    if t.len() < 2 {
        return Err(Error::validation("tables need at least two knots"));
    }
    if t.iter().any(|v| !v.is_finite()) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("table knots must be finite and strictly increasing"));
    }
    Ok(())
}

impl Potential {
    /// Krein coefficient sharing the spectral measure of this potential.
    pub fn krein(&self) -> KreinCoefficient {
        match self {
            Potential::Krein(a) => a.clone(),
            Potential::Dirac(q) => spectral_krein(q),
        }
    }

    /// Dirac potential sharing the spectral measure of this potential.
    pub fn dirac(&self) -> DiracPotential {
        match self {
            Potential::Krein(a) => spectral_dirac(a),
            Potential::Dirac(q) => q.clone(),
        }
    }

    /// Default integration radius in the Krein variable.
    pub fn default_rmax(&self) -> f64 {
        self.krein().default_rmax()
    }
}

/// Literal map `a -> Q_a`: `p(t) = -2 Re a(2t)`, `q(t) = 2 Im a(2t)`.
pub fn krein_to_dirac(a: &KreinCoefficient) -> DiracPotential {
    match a {
        KreinCoefficient::FromDirac { q, map: Correspondence::Literal } => (**q).clone(),
        KreinCoefficient::Zero => DiracPotential::Zero,
        _ => DiracPotential::FromKrein { a: Box::new(a.clone()), map: Correspondence::Literal },
    }
}

/// Inverse of [`krein_to_dirac`].
pub fn dirac_to_krein(q: &DiracPotential) -> KreinCoefficient {
    match q {
        DiracPotential::FromKrein { a, map: Correspondence::Literal } => (**a).clone(),
        DiracPotential::Zero => KreinCoefficient::Zero,
        _ => KreinCoefficient::FromDirac { q: Box::new(q.clone()), map: Correspondence::Literal },
    }
}

/// Dirac potential with the same spectral measure as the Krein system of `a`.
pub fn spectral_dirac(a: &KreinCoefficient) -> DiracPotential {
    match a {
        KreinCoefficient::FromDirac { q, map: Correspondence::Spectral } => (**q).clone(),
        KreinCoefficient::Zero => DiracPotential::Zero,
        _ => DiracPotential::FromKrein { a: Box::new(a.clone()), map: Correspondence::Spectral },
    }
}

/// Krein coefficient with the same spectral measure as `D_Q`.
pub fn spectral_krein(q: &DiracPotential) -> KreinCoefficient {
    match q {
        DiracPotential::FromKrein { a, map: Correspondence::Spectral } => (**a).clone(),
        DiracPotential::Zero => KreinCoefficient::Zero,
        _ => KreinCoefficient::FromDirac { q: Box::new(q.clone()), map: Correspondence::Spectral },
    }
}

impl KreinCoefficient {
    pub fn eval(&self, r: f64) -> C64 {
        match self {
            KreinCoefficient::Zero => C64::new(0.0, 0.0),
            KreinCoefficient::Exp { amp, rate, cut } => {
                if r < *cut {
                    amp * (-rate * r).exp()
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            KreinCoefficient::Steps { knots, values } => {
                if r < knots[0] || r >= knots[knots.len() - 1] {
                    return C64::new(0.0, 0.0);
                }
                let k = knots.partition_point(|x| *x <= r) - 1;
                values[k.min(values.len() - 1)]
            }
            KreinCoefficient::FromDirac { q, map } => {
                let (p, qq) = q.pq(0.5 * r);
                match map {
                    Correspondence::Spectral => C64::new(0.5 * p, 0.5 * qq),
                    Correspondence::Literal => C64::new(-0.5 * p, 0.5 * qq),
                }
            }
            KreinCoefficient::Negated(a) => -a.eval(r),
        }
    }

    /// Coefficient of the dual Krein system.
    pub fn dual(&self) -> KreinCoefficient {
        match self {
            KreinCoefficient::Negated(a) => (**a).clone(),
            KreinCoefficient::Zero => KreinCoefficient::Zero,
            _ => KreinCoefficient::Negated(Box::new(self.clone())),
        }
    }

    /// End of the support, if bounded.
    pub fn support(&self) -> Option<f64> {
        match self {
            KreinCoefficient::Zero => Some(0.0),
            KreinCoefficient::Exp { cut, .. } => cut.is_finite().then_some(*cut),
            KreinCoefficient::Steps { knots, .. } => Some(knots[knots.len() - 1]),
            KreinCoefficient::FromDirac { q, .. } => q.support().map(|s| 2.0 * s),
            KreinCoefficient::Negated(a) => a.support(),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            KreinCoefficient::Zero => vec![],
            KreinCoefficient::Exp { cut, .. } => {
                if cut.is_finite() {
                    vec![*cut]
                } else {
                    vec![]
                }
            }
            KreinCoefficient::Steps { knots, .. } => knots.clone(),
            KreinCoefficient::FromDirac { q, .. } => q.breakpoints().into_iter().map(|t| 2.0 * t).collect(),
            KreinCoefficient::Negated(a) => a.breakpoints(),
        }
    }

    pub fn max_step(&self, r: f64) -> f64 {
        match self {
            KreinCoefficient::FromDirac { q, .. } => 2.0 * q.max_step(0.5 * r),
            KreinCoefficient::Negated(a) => a.max_step(r),
            _ => f64::INFINITY,
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            KreinCoefficient::Zero => true,
            KreinCoefficient::Exp { amp, .. } => amp.im == 0.0,
            KreinCoefficient::Steps { values, .. } => values.iter().all(|v| v.im == 0.0),
            KreinCoefficient::FromDirac { q, .. } => q.is_off_diagonal(),
            KreinCoefficient::Negated(a) => a.is_real(),
        }
    }

    /// Default integration radius: support plus two for compact
    /// coefficients, 30 otherwise.
    pub fn default_rmax(&self) -> f64 {
        match self.support() {
            Some(s) => s + 2.0,
            None => 30.0,
        }
    }
}

impl DiracPotential {
    /// `(p(t), q(t))`.
    pub fn pq(&self, t: f64) -> (f64, f64) {
        match self {
            DiracPotential::Zero => (0.0, 0.0),
            DiracPotential::OffDiagExp { amp, rate, cut } => {
                if t < *cut {
                    (amp * (-rate * t).exp(), 0.0)
                } else {
                    (0.0, 0.0)
                }
            }
            DiracPotential::Oscillatory { amp, beta, gamma, cut } => {
                if t < *cut {
                    (amp * (beta * t).exp() * (gamma * t).exp().sin(), 0.0)
                } else {
                    (0.0, 0.0)
                }
            }
            DiracPotential::Table { t: knots, p, q } => {
                if t < knots[0] || t > knots[knots.len() - 1] {
                    return (0.0, 0.0);
                }
                let k = (knots.partition_point(|x| *x <= t).max(1) - 1).min(knots.len() - 2);
                let w = (t - knots[k]) / (knots[k + 1] - knots[k]);
                (p[k] + w * (p[k + 1] - p[k]), q[k] + w * (q[k + 1] - q[k]))
            }
            DiracPotential::FromKrein { a, map } => {
                let v = a.eval(2.0 * t);
                match map {
                    Correspondence::Spectral => (2.0 * v.re, 2.0 * v.im),
                    Correspondence::Literal => (-2.0 * v.re, 2.0 * v.im),
                }
            }
        }
    }

    pub fn support(&self) -> Option<f64> {
        match self {
            DiracPotential::Zero => Some(0.0),
            DiracPotential::OffDiagExp { cut, .. } | DiracPotential::Oscillatory { cut, .. } => {
                cut.is_finite().then_some(*cut)
            }
            DiracPotential::Table { t, .. } => Some(t[t.len() - 1]),
            DiracPotential::FromKrein { a, .. } => a.support().map(|s| 0.5 * s),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            DiracPotential::Zero => vec![],
            DiracPotential::OffDiagExp { cut, .. } | DiracPotential::Oscillatory { cut, .. } => {
                if cut.is_finite() {
                    vec![*cut]
                } else {
                    vec![]
                }
            }
            DiracPotential::Table { t, .. } => t.clone(),
            DiracPotential::FromKrein { a, .. } => a.breakpoints().into_iter().map(|r| 0.5 * r).collect(),
        }
    }

    /// Step bound for oscillatory potentials, `0.1 / (1 + local frequency)`.
    pub fn max_step(&self, t: f64) -> f64 {
        match self {
            DiracPotential::Oscillatory { gamma, cut, .. } if t < *cut => 0.1 / (1.0 + gamma * (gamma * t).exp()),
            DiracPotential::FromKrein { a, .. } => 0.5 * a.max_step(2.0 * t),
            _ => f64::INFINITY,
        }
    }

    /// True when `q` vanishes identically.
    pub fn is_off_diagonal(&self) -> bool {
        match self {
            DiracPotential::Zero | DiracPotential::OffDiagExp { .. } | DiracPotential::Oscillatory { .. } => true,
            DiracPotential::Table { q, .. } => q.iter().all(|v| *v == 0.0),
            DiracPotential::FromKrein { a, .. } => a.is_real(),
        }
    }

    /// Closed form of `g(t) = int_0^t p` when `q = 0` and the primitive is elementary.
    pub fn closed_form_g0(&self, t: f64) -> Option<f64> {
        match self {
            DiracPotential::Zero => Some(0.0),
            DiracPotential::OffDiagExp { amp, rate, cut } => Some(exp_primitive(*amp, *rate, t.min(*cut))),
            DiracPotential::Table { t: knots, p, q } if q.iter().all(|v| *v == 0.0) => {
                let mut acc = 0.0;
                for k in 0..knots.len() - 1 {
                    let (a, b) = (knots[k], knots[k + 1]);
                    if t <= a {
                        break;
                    }
                    let e = t.min(b);
                    let pe = p[k] + (p[k + 1] - p[k]) * (e - a) / (b - a);
                    acc += 0.5 * (p[k] + pe) * (e - a);
                }
                Some(acc)
            }
            DiracPotential::FromKrein { a, map } => {
                let sign = match map {
                    Correspondence::Spectral => 2.0,
                    Correspondence::Literal => -2.0,
                };
                krein_real_primitive(a, 2.0 * t).map(|v| sign * 0.5 * v)
            }
            _ => None,
        }
    }
}

fn exp_primitive(amp: f64, rate: f64, t: f64) -> f64 {
    if rate == 0.0 {
        amp * t
    } else {
        amp / rate * -(-rate * t).exp_m1()
    }
}

/// `int_0^r Re a` for real coefficients with elementary primitives.
fn krein_real_primitive(a: &KreinCoefficient, r: f64) -> Option<f64> {
    if !a.is_real() {
        return None;
    }
    match a {
        KreinCoefficient::Zero => Some(0.0),
        KreinCoefficient::Exp { amp, rate, cut } => Some(exp_primitive(amp.re, *rate, r.min(*cut))),
        KreinCoefficient::Steps { knots, values } => {
            let mut acc = 0.0;
            for (k, v) in values.iter().enumerate() {
                let (lo, hi) = (knots[k], knots[k + 1]);
                if r <= lo {
                    break;
                }
                acc += v.re * (r.min(hi) - lo);
            }
            Some(acc)
        }
        KreinCoefficient::Negated(inner) => krein_real_primitive(inner, r).map(|v| -v),
        KreinCoefficient::FromDirac { q, map } => {
            let s = match map {
                Correspondence::Spectral => 0.5,
                Correspondence::Literal => -0.5,
            };
            // int_0^r p(s/2) ds = 2 int_0^{r/2} p
            q.closed_form_g0(0.5 * r).map(|g| s * 2.0 * g)
        }
    }
}

/// A quadrature rule on a window `[r, r + len]` together with the increments
/// `D(t) = int_r^t p` at its nodes. Only defined for potentials with `q = 0`.
#[derive(Clone, Debug, Default)]
pub struct IncrementRule {
    pub w: Vec<f64>,
    pub d: Vec<f64>,
}

const SMOOTH_CELL: f64 = 0.125;
const OSC_CELL: f64 = std::f64::consts::FRAC_PI_4;
const GL_ORDER: usize = 10;

fn gl() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| crate::quad::gauss_legendre(GL_ORDER))
}

fn gl_integral<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = gl();
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(xi, wi)| wi * f(m + h * xi)).sum::<f64>() * h
}

/// Integral over `[a, b]` split into pieces no longer than `cell`.
fn gl_composite<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cell: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = ((b - a) / cell).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    (0..n).map(|k| gl_integral(f, a + k as f64 * h, a + (k + 1) as f64 * h)).sum()
}

/// Cells of `[a, b]` of width at most `cell`, cut at `breaks`.
fn cells(a: f64, b: f64, cell: f64, breaks: &[f64]) -> Vec<(f64, f64)> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    pts.push(b);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let n = ((w[1] - w[0]) / cell).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / n as f64;
        for k in 0..n {
            out.push((w[0] + k as f64 * h, if k + 1 == n { w[1] } else { w[0] + (k + 1) as f64 * h }));
        }
    }
    out
}

impl DiracPotential {
    /// Integrand of the oscillatory primitive in the variable `u = e^{gamma t}`.
    fn osc_integrand(amp: f64, beta: f64, gamma: f64) -> impl Fn(f64) -> f64 {
        let e = beta / gamma - 1.0;
        move |u: f64| amp / gamma * u.powf(e) * u.sin()
    }

    /// Quadrature nodes, weights and increments `int_r^t p` on `[r, r + len]`.
    /// `None` when `q` does not vanish.
    pub fn increment_rule(&self, r: f64, len: f64) -> Option<IncrementRule> {
        if !self.is_off_diagonal() {
            return None;
        }
        let end = r + len;
        let mut rule = IncrementRule::default();
        let (x, w) = gl();
        if let DiracPotential::Oscillatory { amp, beta, gamma, cut } = self {
            let stop = end.min(*cut).max(r);
            let h = Self::osc_integrand(*amp, *beta, *gamma);
            let mut acc = 0.0;
            if stop > r {
                for (a, b) in cells((gamma * r).exp(), (gamma * stop).exp(), OSC_CELL, &[]) {
                    let (m, hw) = (0.5 * (a + b), 0.5 * (b - a));
                    for (xi, wi) in x.iter().zip(w) {
                        let u = m + hw * xi;
                        rule.w.push(wi * hw / (gamma * u));
                        rule.d.push(acc + gl_integral(&h, a, u));
                    }
                    acc += gl_integral(&h, a, b);
                }
            }
            if end > stop {
                rule.w.push(end - stop);
                rule.d.push(acc);
            }
            return Some(rule);
        }
        let p = |t: f64| self.pq(t).0;
        let closed = self.closed_form_g0(r);
        let mut acc = 0.0;
        for (a, b) in cells(r, end, SMOOTH_CELL, &self.breakpoints()) {
            let (m, hw) = (0.5 * (a + b), 0.5 * (b - a));
            for (xi, wi) in x.iter().zip(w) {
                let t = m + hw * xi;
                rule.w.push(wi * hw);
                rule.d.push(match closed {
                    Some(g_r) => self.closed_form_g0(t).unwrap() - g_r,
                    None => acc + gl_integral(&p, a, t),
                });
            }
            acc += gl_integral(&p, a, b);
        }
        Some(rule)
    }

    /// `int_r^t p` at each of the increasing points `ts >= r` (`q = 0` only).
    pub fn increments_at(&self, r: f64, ts: &[f64]) -> Result<Vec<f64>> {
        if !self.is_off_diagonal() {
            return Err(Error::validation("increments require a potential with q = 0"));
        }
        if ts.iter().any(|t| *t < r) || ts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation("points must be increasing and not below r"));
        }
        let mut out = Vec::with_capacity(ts.len());
        let mut acc = 0.0;
        let mut prev = r;
        match self {
            DiracPotential::Oscillatory { amp, beta, gamma, cut } => {
                let h = Self::osc_integrand(*amp, *beta, *gamma);
                for &t in ts {
                    let (a, b) = (prev.min(*cut), t.min(*cut));
                    acc += gl_composite(&h, (gamma * a).exp(), (gamma * b).exp(), OSC_CELL);
                    out.push(acc);
                    prev = t;
                }
            }
            _ => {
                if let Some(g_r) = self.closed_form_g0(r) {
                    return Ok(ts.iter().map(|t| self.closed_form_g0(*t).unwrap() - g_r).collect());
                }
                let p = |t: f64| self.pq(t).0;
                let br = self.breakpoints();
                for &t in ts {
                    acc += cells(prev, t, SMOOTH_CELL, &br).into_iter().map(|(a, b)| gl_integral(&p, a, b)).sum::<f64>();
                    out.push(acc);
                    prev = t;
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite primitive of p"));
        }
        Ok(out)
    }
}

/// Lower bound for `sup_{r <= t <= horizon} |int_r^t p|` for a potential with `q = 0`.
///
/// Samples every `step`, adds the zeros of `p` for the oscillatory family
/// (where the supremum is attained), and refines the largest sampled peaks
/// by golden-section search.
pub fn oscillation_sup(q: &DiracPotential, r: f64, horizon: f64, step: f64) -> Result<f64> {
    if !(horizon > r) || !(step > 0.0) || !r.is_finite() || !horizon.is_finite() {
        return Err(Error::validation("need horizon > r and step > 0"));
    }
    let n = ((horizon - r) / step).ceil() as usize;
    if n > 5_000_000 {
        return Err(Error::validation("too many samples; increase step"));
    }
    let mut ts: Vec<f64> = (1..n).map(|k| r + k as f64 * step).collect();
    ts.push(horizon);
    if let DiracPotential::Oscillatory { gamma, cut, .. } = q {
        let hi = horizon.min(*cut);
        let (k0, k1) = (((gamma * r).exp() / PI).floor() as u64 + 1, ((gamma * hi).exp() / PI).floor() as u64);
        if k1.saturating_sub(k0) > 5_000_000 {
            return Err(Error::validation("oscillatory horizon too far"));
        }
        ts.extend((k0..=k1).map(|k| (k as f64 * PI).ln() / gamma).filter(|t| *t > r && *t <= hi));
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let g = q.increments_at(r, &ts)?;
    let mut best = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if matches!(q, DiracPotential::Oscillatory { .. }) {
        return Ok(best);
    }
    let mut peaks: Vec<usize> = (0..g.len())
        .filter(|&k| {
            let left = if k == 0 { 0.0 } else { g[k - 1].abs() };
            let right = g.get(k + 1).map_or(0.0, |v| v.abs());
            g[k].abs() >= left && g[k].abs() >= right
        })
        .collect();
    peaks.sort_by(|a, b| g[*b].abs().partial_cmp(&g[*a].abs()).unwrap());
    let f = |t: f64| q.increments_at(r, &[t]).map(|v| v[0].abs());
    for &k in peaks.iter().take(5) {
        let mut lo = if k == 0 { r } else { ts[k - 1] };
        let mut hi = ts.get(k + 1).copied().unwrap_or(horizon);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..40 {
            let (x1, x2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
            let (f1, f2) = (f(x1)?, f(x2)?);
            best = best.max(f1).max(f2);
            if f1 > f2 {
                hi = x2;
            } else {
                lo = x1;
            }
        }
    }
    Ok(best)
}
