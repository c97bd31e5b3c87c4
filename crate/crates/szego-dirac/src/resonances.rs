//! Resonances as zeros of the continued `Pi`, located by the argument principle.

use crate::error::{Error, Result};
use crate::potential::KreinCoefficient;
use crate::szego::{duality_residual, AnalyticEvaluator};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Axis-parallel rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::validation(format!("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]")));
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    pub fn diameter(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn center(&self) -> C64 {
        C64::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.x0 && z.re <= self.x1 && z.im >= self.y0 && z.im <= self.y1
    }

    /// Split across the longer side at fraction `f`.
    pub fn split(&self, f: f64) -> [Rect; 2] {
        if self.x1 - self.x0 >= self.y1 - self.y0 {
            let xm = self.x0 + f * (self.x1 - self.x0);
            [Rect { x1: xm, ..*self }, Rect { x0: xm, ..*self }]
        } else {
            let ym = self.y0 + f * (self.y1 - self.y0);
            [Rect { y1: ym, ..*self }, Rect { y0: ym, ..*self }]
        }
    }

    /// Counter-clockwise corners starting at the lower left.
    fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.x0, self.y0),
            C64::new(self.x1, self.y0),
            C64::new(self.x1, self.y1),
            C64::new(self.x0, self.y1),
        ]
    }
}

/// Result of a phase continuation along a rectangle boundary.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Winding {
    pub count: i64,
    /// Accumulated phase divided by `2 pi`, before rounding.
    pub turns: f64,
    pub min_abs: f64,
    pub median_abs: f64,
    pub samples: usize,
}

const MAX_BISECTIONS: usize = 40;

/// Winding number of `ev` along the boundary of `rect`, with adaptive
/// bisection wherever consecutive samples differ in phase by more than `pi/2`.
pub fn winding(ev: &AnalyticEvaluator, rect: &Rect, n_boundary: usize) -> Result<Winding> {
    if n_boundary < 8 {
        return Err(Error::validation("need at least 8 boundary samples"));
    }
    let c = rect.corners();
    let perim = 2.0 * ((rect.x1 - rect.x0) + (rect.y1 - rect.y0));
    let mut pts = Vec::with_capacity(n_boundary + 4);
    for k in 0..4 {
        let (a, b) = (c[k], c[(k + 1) % 4]);
        let m = (((b - a).norm() / perim) * n_boundary as f64).ceil().max(2.0) as usize;
        pts.extend((0..m).map(|j| a + (b - a) * (j as f64 / m as f64)));
    }
    let vals: Vec<C64> = pts.par_iter().map(|z| ev.eval_raw(*z)).collect::<Result<_>>()?;
    let n = pts.len();
    let mut phase = 0.0;
    let mut abs: Vec<f64> = vals.iter().map(|v| v.norm()).collect();
    for k in 0..n {
        let (za, zb) = (pts[k], pts[(k + 1) % n]);
        let (fa, fb) = (vals[k], vals[(k + 1) % n]);
        phase += segment_phase(ev, za, zb, fa, fb, 0, &mut abs)?;
    }
    let mut sorted = abs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let min_abs = sorted[0];
    if !(min_abs > 1e-6 * median) {
        return Err(Error::numerical(format!(
            "zero near boundary; perturb rectangle (min |Pi| = {min_abs:.3e}, median {median:.3e})"
        )));
    }
    let turns = phase / (2.0 * PI);
    let count = turns.round();
    if (turns - count).abs() > 0.1 {
        return Err(Error::numerical(format!("winding {turns:.4} is not close to an integer")));
    }
    Ok(Winding { count: count as i64, turns, min_abs, median_abs: median, samples: abs.len() })
}

fn segment_phase(
    ev: &AnalyticEvaluator,
    za: C64,
    zb: C64,
    fa: C64,
    fb: C64,
    depth: usize,
    abs: &mut Vec<f64>,
) -> Result<f64> {
    if fa.norm() == 0.0 || fb.norm() == 0.0 {
        return Err(Error::numerical("zero near boundary; perturb rectangle (exact zero sampled)"));
    }
    let d = (fb / fa).arg();
    if d.abs() <= FRAC_PI_2 {
        return Ok(d);
    }
    if depth >= MAX_BISECTIONS {
        return Err(Error::numerical("zero near boundary; perturb rectangle (phase does not resolve)"));
    }
    let zm = 0.5 * (za + zb);
    let fm = ev.eval_raw(zm)?;
    abs.push(fm.norm());
    Ok(segment_phase(ev, za, zm, fa, fm, depth + 1, abs)? + segment_phase(ev, zm, zb, fm, fb, depth + 1, abs)?)
}

/// Number of zeros of `Pi` inside `rect`.
pub fn count_zeros(ev: &AnalyticEvaluator, rect: &Rect, n_boundary: usize) -> Result<i64> {
    Ok(winding(ev, rect, n_boundary)?.count)
}

#[derive(Clone, Debug)]
pub struct LocateOptions {
    /// Newton stopping tolerance and smallest cell diameter.
    pub tol: f64,
    pub n_boundary: usize,
    pub max_depth: usize,
    /// Radius of the Cauchy circle for derivatives.
    pub cauchy_radius: f64,
    /// Cells with more zeros than this are reported, not resolved.
    pub multiplicity_cap: i64,
    /// Cells are subdivided until smaller than this before Newton starts.
    pub newton_cell: f64,
}

impl Default for LocateOptions {
    fn default() -> Self {
        LocateOptions { tol: 1e-10, n_boundary: 64, max_depth: 40, cauchy_radius: 1e-2, multiplicity_cap: 4, newton_cell: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Zero {
    pub re: f64,
    pub im: f64,
    pub mult: i64,
    /// Length of the last Newton step.
    pub residual: f64,
    pub duality_residual: f64,
}

impl Zero {
    pub fn z(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellLog {
    pub rect: Rect,
    pub count: i64,
    pub depth: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ResonanceReport {
    pub region: [f64; 4],
    pub winding_total: i64,
    pub zeros: Vec<Zero>,
    pub complete: bool,
    pub subdivision_log: Vec<CellLog>,
}

impl ResonanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn multiplicity_total(&self) -> i64 {
        self.zeros.iter().map(|z| z.mult).sum()
    }
}

/// Derivative by the trapezoid rule on a circle of radius `rho`.
fn cauchy_derivative(ev: &AnalyticEvaluator, z: C64, rho: f64) -> Result<C64> {
    const N: usize = 8;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..N {
        let w = C64::from_polar(1.0, 2.0 * PI * k as f64 / N as f64);
        acc += ev.eval_raw(z + w * rho)? / w;
    }
    Ok(acc / (N as f64 * rho))
}

enum Refined {
    Converged(C64, f64),
    Escaped,
}

fn newton(ev: &AnalyticEvaluator, cell: &Rect, mult: i64, opts: &LocateOptions) -> Result<Refined> {
    let mut z = cell.center();
    let rho = opts.cauchy_radius.min(0.25 * cell.diameter()).max(1e-6);
    let slack = 0.25 * cell.diameter();
    let grown = Rect { x0: cell.x0 - slack, x1: cell.x1 + slack, y0: cell.y0 - slack, y1: cell.y1 + slack };
    for _ in 0..60 {
        let f = ev.eval_raw(z)?;
        if f.norm() == 0.0 {
            return Ok(Refined::Converged(z, 0.0));
        }
        let df = cauchy_derivative(ev, z, rho)?;
        let step = mult as f64 * f / df;
        z -= step;
        if !grown.contains(z) || !(z.re.is_finite() && z.im.is_finite()) {
            return Ok(Refined::Escaped);
        }
        if step.norm() < opts.tol * z.norm().max(1.0) {
            return Ok(Refined::Converged(z, step.norm()));
        }
    }
    Ok(Refined::Escaped)
}

enum CellOutcome {
    Empty,
    Zero(C64, i64, f64),
    Split(Vec<(Rect, i64)>),
    Stuck,
}

fn split_counted(ev: &AnalyticEvaluator, cell: &Rect, count: i64, opts: &LocateOptions) -> Result<Option<Vec<(Rect, i64)>>> {
    for f in [0.5, 0.46, 0.54, 0.41, 0.59, 0.37, 0.63] {
        let halves = cell.split(f);
        let counted: Vec<Result<Winding>> = halves.par_iter().map(|h| winding(ev, h, opts.n_boundary)).collect();
        if counted.iter().any(|c| c.is_err()) {
            continue;
        }
        let c: Vec<i64> = counted.into_iter().map(|c| c.unwrap().count).collect();
        if c[0] + c[1] == count {
            return Ok(Some(vec![(halves[0], c[0]), (halves[1], c[1])]));
        }
    }
    Ok(None)
}

fn process(ev: &AnalyticEvaluator, cell: &Rect, count: i64, depth: usize, opts: &LocateOptions) -> Result<CellOutcome> {
    if count == 0 {
        return Ok(CellOutcome::Empty);
    }
    let small = cell.diameter() < opts.newton_cell;
    if small && (count == 1 || cell.diameter() < 1e3 * opts.tol) {
        if let Refined::Converged(z, res) = newton(ev, cell, count, opts)? {
            if cell.contains(z) || count > 1 {
                return Ok(CellOutcome::Zero(z, count, res));
            }
        }
    }
    if depth >= opts.max_depth || cell.diameter() < opts.tol {
        return Ok(CellOutcome::Stuck);
    }
    match split_counted(ev, cell, count, opts)? {
        Some(children) => Ok(CellOutcome::Split(children)),
        None => Ok(CellOutcome::Stuck),
    }
}

/// Locate the zeros of `Pi` in `region` by recursive subdivision and Newton refinement.
pub fn locate_resonances(ev: &AnalyticEvaluator, region: &Rect, opts: &LocateOptions) -> Result<ResonanceReport> {
    if !(region.y0 > ev.region_floor()) {
        return Err(Error::validation(format!(
            "region reaches Im z = {} but the evaluator is valid only for Im z > {}",
            region.y0,
            ev.region_floor()
        )));
    }
    let total = winding(ev, region, opts.n_boundary)?.count;
    let dual = ev.dual()?;
    let mut log = vec![CellLog { rect: *region, count: total, depth: 0 }];
    let mut found: Vec<(C64, i64, f64)> = Vec::new();
    let mut complete = true;
    let mut level = vec![(*region, total)];
    let mut depth = 0;
    while !level.is_empty() {
        let outcomes: Vec<Result<CellOutcome>> = level.par_iter().map(|(c, n)| process(ev, c, *n, depth, opts)).collect();
        let mut next = Vec::new();
        for ((cell, n), out) in level.iter().zip(outcomes) {
            match out? {
                CellOutcome::Empty => {}
                CellOutcome::Zero(z, m, res) => {
                    if m > opts.multiplicity_cap {
                        complete = false;
                    }
                    found.push((z, m, res));
                }
                CellOutcome::Split(children) => {
                    for (r, k) in &children {
                        log.push(CellLog { rect: *r, count: *k, depth: depth + 1 });
                    }
                    next.extend(children);
                }
                CellOutcome::Stuck => {
                    complete = false;
                    log.push(CellLog { rect: *cell, count: *n, depth });
                }
            }
        }
        level = next;
        depth += 1;
    }
    let mut zeros: Vec<Zero> = found
        .par_iter()
        .map(|(z, m, res)| {
            Ok(Zero { re: z.re, im: z.im, mult: *m, residual: *res, duality_residual: duality_residual(ev, &dual, *z)? })
        })
        .collect::<Result<_>>()?;
    zeros.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    let report = ResonanceReport {
        region: [region.x0, region.x1, region.y0, region.y1],
        winding_total: total,
        complete: complete && zeros.iter().map(|z| z.mult).sum::<i64>() == total,
        zeros,
        subdivision_log: log,
    };
    Ok(report)
}

/// Hausdorff distance between two finite point sets; zero for two empty sets
/// and infinite when exactly one is empty.
pub fn hausdorff(a: &[C64], b: &[C64]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let directed = |x: &[C64], y: &[C64]| {
        x.iter().map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Pairwise Hausdorff distances between the resonance sets of `coeffs` in `region`.
pub fn uniqueness_probe(coeffs: &[KreinCoefficient], region: &Rect, opts: &LocateOptions) -> Result<Vec<Vec<f64>>> {
    if coeffs.len() < 2 {
        return Err(Error::validation("need at least two potentials"));
    }
    let sets: Vec<Vec<C64>> = coeffs
        .iter()
        .map(|a| {
            let ev = AnalyticEvaluator::auto(a)?;
            let rep = locate_resonances(&ev, region, opts)?;
            Ok(rep.zeros.iter().map(Zero::z).collect())
        })
        .collect::<Result<_>>()?;
    Ok(sets.iter().map(|x| sets.iter().map(|y| hausdorff(x, y)).collect()).collect())
}
