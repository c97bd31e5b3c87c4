//! Residual checks of the classical identities on sampled `(r, z)`.

use crate::dirac::{det_residual, fundamental_solution};
use crate::error::{Error, Result};
use crate::krein::{cd_residual, cd_two_point_residual, reflection_residual, solve_krein, solve_krein_on_grid, wronskian_residual, KreinOptions};
use crate::odecore::Tolerance;
use crate::potential::{Family, Potential, PotentialSpec};
use crate::szego::{duality_residual, AnalyticEvaluator};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    Cd,
    Reflection,
    Wronskian,
    DetN,
    Duality,
}

impl Identity {
    pub const ALL: [Identity; 5] = [Identity::Cd, Identity::Reflection, Identity::Wronskian, Identity::DetN, Identity::Duality];

    pub fn threshold(self) -> f64 {
        match self {
            Identity::Cd => 1e-8,
            Identity::Reflection | Identity::Wronskian | Identity::DetN => 1e-9,
            Identity::Duality => 1e-6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Identity::Cd => "cd",
            Identity::Reflection => "reflection",
            Identity::Wronskian => "wronskian",
            Identity::DetN => "det_n",
            Identity::Duality => "duality",
        }
    }

    /// Parse a comma-separated list such as `cd,wronskian,duality`.
    pub fn parse_suite(s: &str) -> Result<Vec<Identity>> {
        let mut out: Vec<Identity> = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let id = part.parse()?;
            if !out.contains(&id) {
                out.push(id);
            }
        }
        if out.is_empty() {
            return Err(Error::validation("empty identity suite"));
        }
        Ok(out)
    }
}

impl FromStr for Identity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Err(Error::validation("'all' cannot be mixed into a list")),
            _ => Identity::ALL
                .into_iter()
                .find(|i| i.name() == s || (s == "det" && *i == Identity::DetN))
                .ok_or_else(|| Error::validation(format!("unknown identity '{s}'; expected cd, reflection, wronskian, det_n or duality"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Krein radius of the sampled traces.
    pub rmax: f64,
    /// Spectral parameters for the trace identities.
    pub points: Vec<C64>,
    /// Spectral parameters for the duality identity of `Pi`.
    pub duality_points: Vec<C64>,
    pub tol: Tolerance,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        let points = [-2.0, -0.7, 0.0, 0.9, 2.0]
            .iter()
            .flat_map(|&x| [-0.4, 0.0, 0.3, 1.0].map(|y| C64::new(x, y)))
            .collect();
        let duality_points = (0..25).map(|k| C64::new(-3.0 + 0.25 * k as f64, if k % 2 == 0 { 0.0 } else { 0.05 })).collect();
        VerifyOptions { rmax: 4.0, points, duality_points, tol: Tolerance::new(1e-14, 1e-13) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityResult {
    pub identity: Identity,
    pub worst: f64,
    pub worst_z: [f64; 2],
    pub threshold: f64,
    pub samples: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub label: String,
    pub results: Vec<IdentityResult>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn get(&self, id: Identity) -> Option<&IdentityResult> {
        self.results.iter().find(|r| r.identity == id)
    }
}

struct Acc {
    worst: f64,
    at: C64,
    samples: usize,
}

impl Acc {
    fn new() -> Self {
        Acc { worst: 0.0, at: C64::new(0.0, 0.0), samples: 0 }
    }
    fn add(&mut self, v: f64, z: C64, n: usize) {
        // A NaN residual is sticky so that the check fails.
        if !self.worst.is_nan() && (v.is_nan() || v > self.worst) {
            self.worst = v;
            self.at = z;
        }
        self.samples += n;
    }
}

/// Check the identities of `suite` for one potential.
pub fn verify(label: &str, potential: &Potential, suite: &[Identity], opts: &VerifyOptions) -> Result<VerifyReport> {
    if !(opts.rmax.is_finite() && opts.rmax > 0.0) {
        return Err(Error::validation("rmax must be positive and finite"));
    }
    let a = potential.krein();
    let q = potential.dirac();
    let mut acc: Vec<(Identity, Acc)> = suite.iter().map(|i| (*i, Acc::new())).collect();
    let wants = |id: Identity| suite.contains(&id);
    let stops: Vec<f64> = (0..=8).map(|k| opts.rmax * k as f64 / 8.0).collect();
    let kopts = KreinOptions { tol: opts.tol, max_cell: 0.25, stops: stops.clone() };

    if wants(Identity::Cd) || wants(Identity::Reflection) || wants(Identity::Wronskian) {
        let per_point: Vec<Vec<(Identity, f64, usize)>> = opts
            .points
            .par_iter()
            .map(|&z| {
                let tr = solve_krein(&a, z, opts.rmax, &kopts)?;
                let n = tr.len();
                let mut out = Vec::new();
                if wants(Identity::Cd) {
                    let w = solve_krein_on_grid(&a, C64::new(0.0, 1.0), &tr.grid, opts.tol)?;
                    out.push((Identity::Cd, cd_residual(&tr).max(cd_two_point_residual(&tr, &w)?), n));
                }
                if wants(Identity::Reflection) {
                    let tb = solve_krein_on_grid(&a, z.conj(), &tr.grid, opts.tol)?;
                    out.push((Identity::Reflection, reflection_residual(&tr, &tb)?, n));
                }
                if wants(Identity::Wronskian) {
                    out.push((Identity::Wronskian, wronskian_residual(&tr), n));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        record(&mut acc, &opts.points, per_point);
    }
    if wants(Identity::DetN) {
        let tstops: Vec<f64> = stops.iter().map(|r| 0.5 * r).collect();
        let per_point: Vec<Vec<(Identity, f64, usize)>> = opts
            .points
            .par_iter()
            .map(|&z| {
                let tr = fundamental_solution(&q, z, &tstops, opts.tol)?;
                Ok(vec![(Identity::DetN, det_residual(&tr), tstops.len())])
            })
            .collect::<Result<_>>()?;
        record(&mut acc, &opts.points, per_point);
    }
    if wants(Identity::Duality) {
        let ev = AnalyticEvaluator::auto(&a)?;
        let dual = ev.dual()?;
        let floor = ev.region_floor();
        if let Some(z) = opts.duality_points.iter().find(|z| !(z.im.abs() < -floor)) {
            return Err(Error::validation(format!("duality point {z} and its conjugate must lie above Im z = {floor}")));
        }
        let per_point: Vec<Vec<(Identity, f64, usize)>> = opts
            .duality_points
            .par_iter()
            .map(|&z| Ok(vec![(Identity::Duality, duality_residual(&ev, &dual, z)?, 1)]))
            .collect::<Result<_>>()?;
        record(&mut acc, &opts.duality_points, per_point);
    }
    let results: Vec<IdentityResult> = acc
        .into_iter()
        .map(|(identity, a)| IdentityResult {
            identity,
            worst: a.worst,
            worst_z: [a.at.re, a.at.im],
            threshold: identity.threshold(),
            samples: a.samples,
            passed: a.worst < identity.threshold(),
        })
        .collect();
    let passed = results.iter().all(|r| r.passed);
    Ok(VerifyReport { label: label.to_string(), results, passed })
}

fn record(acc: &mut [(Identity, Acc)], points: &[C64], per_point: Vec<Vec<(Identity, f64, usize)>>) {
    for (z, rows) in points.iter().zip(per_point) {
        for (id, v, n) in rows {
            if let Some((_, a)) = acc.iter_mut().find(|(i, _)| *i == id) {
                a.add(v, *z, n);
            }
        }
    }
}

/// The four families used by the standard identity suite. The oscillatory
/// potential is truncated at `t = 3`.
pub fn standard_families() -> Vec<(String, PotentialSpec)> {
    vec![
        ("krein_exp".into(), PotentialSpec::new(Family::KreinExp).param("amplitude", 0.8).param("amplitude_im", 0.5)),
        (
            "compact_const".into(),
            PotentialSpec::new(Family::CompactConst).param("c", 1.0).param("c_im", 0.5).param("length", 2.0),
        ),
        ("off_diagonal".into(), PotentialSpec::new(Family::OffDiagonal)),
        ("oscillatory".into(), PotentialSpec::new(Family::Oscillatory).with_support(3.0)),
    ]
}
