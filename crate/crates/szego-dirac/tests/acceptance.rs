//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};
use szego_dirac::entropy::{entropy_e, entropy_kh, entropy_profile, entropy_tolerance, fit_decay_rate, sobolev_tail_norm};
use szego_dirac::krein::regularized::{regularized_inputs, regularized_solve, RegularizedOptions};
use szego_dirac::krein::{solve_krein, KreinOptions};
use szego_dirac::odecore::Tolerance;
use szego_dirac::opuc::{bernstein_szego_density, christoffel_gram, christoffel_lambda0, nevai_totik_probe, SchurParameters};
use szego_dirac::potential::{oscillation_sup, spectral_dirac, DiracPotential, Family, KreinCoefficient, PotentialSpec};
use szego_dirac::resonances::{locate_resonances, LocateOptions, Rect};
use szego_dirac::szego::{szego_compact, AnalyticEvaluator, CdOptions};
use szego_dirac::verify::{standard_families, verify, Identity, VerifyOptions};

const DECAY_RATE_TARGET: f64 = 4.0;
const DECAY_RATE_REL_TOL: f64 = 0.05;
const BLOWUP_BAND: f64 = 4.0;
const CD_VS_EXACT_TOL: f64 = 1e-6;
const MIN_IDENTITY_SAMPLES: usize = 100;
const CLOSED_FORM_REL_TOL: f64 = 1e-8;
const RESONANCE_TOL: f64 = 1e-8;
const OSC_SLOPE_MAX: f64 = -0.9;
const OSC_ENTROPY_RATE_MIN: f64 = 1.5;
const SOBOLEV_BAND: f64 = 10.0;
const GRAM_TOL: f64 = 1e-6;
const NEVAI_TOTIK_REL_TOL: f64 = 0.1;
const REGULARIZED_TOL: f64 = 1e-3;

type Outcome = Result<(bool, String), String>;

fn krein_exp() -> KreinCoefficient {
    PotentialSpec::new(Family::KreinExp).compile().unwrap().krein()
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn c1_decay_rate() -> Outcome {
    let q = spectral_dirac(&krein_exp());
    let prof = entropy_profile(&q, &grid(1.0, 4.0, 31), 1.0, entropy_tolerance()).map_err(|e| e.to_string())?;
    let fit = fit_decay_rate(&prof, Some((1.0, 4.0))).map_err(|e| e.to_string())?;
    let rel = (fit.rate - DECAY_RATE_TARGET).abs() / DECAY_RATE_TARGET;
    Ok((rel <= DECAY_RATE_REL_TOL, format!("rate {:.6}, relative deviation {:.2e}", fit.rate, rel)))
}

fn c2_blowup() -> Outcome {
    let ev = AnalyticEvaluator::auto(&krein_exp()).map_err(|e| e.to_string())?;
    let mut scaled = Vec::new();
    for h in [0.5, 0.6, 0.7, 0.8, 0.9, 0.95] {
        let v = ev.eval(C64::new(0.0, -h)).map_err(|e| e.to_string())?;
        scaled.push(v.norm() * (1.0 - h) / h);
    }
    let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
    let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
    let vals: Vec<String> = scaled.iter().map(|v| format!("{v:.4}")).collect();
    Ok((max / min <= BLOWUP_BAND && min > 0.0, format!("|Pi(-ih)|(1-h)/h = [{}], max/min {:.3}", vals.join(", "), max / min)))
}

fn c3_cd_vs_exact() -> Outcome {
    let a = KreinCoefficient::Steps { knots: vec![0.0, 2.0], values: vec![C64::new(1.0, 0.0)] };
    let ev = AnalyticEvaluator::cd(&a, CdOptions::default()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for x in grid(-3.0, 3.0, 21) {
        for y in grid(-0.2, 0.0, 11) {
            let z = C64::new(x, y);
            let cd = ev.eval(z).map_err(|e| e.to_string())?;
            let exact = szego_compact(&a, z).map_err(|e| e.to_string())?;
            worst = worst.max((cd - exact).norm() / exact.norm().max(1.0));
        }
    }
    Ok((worst < CD_VS_EXACT_TOL, format!("worst deviation {worst:.3e} over 231 points")))
}

fn c4_identities() -> Outcome {
    let mut worst = [0.0f64; 5];
    let mut samples = [0usize; 5];
    for (name, spec) in standard_families() {
        let p = spec.compile().map_err(|e| e.to_string())?;
        let rep = verify(&name, &p, &Identity::ALL, &VerifyOptions::default()).map_err(|e| e.to_string())?;
        for (k, id) in Identity::ALL.iter().enumerate() {
            let r = rep.get(*id).unwrap();
            worst[k] = if r.worst.is_nan() { f64::NAN } else { worst[k].max(r.worst) };
            samples[k] += r.samples;
        }
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, id) in Identity::ALL.iter().enumerate() {
        ok &= worst[k] < id.threshold() && samples[k] >= MIN_IDENTITY_SAMPLES;
        parts.push(format!("{} {:.2e} (n={})", id.name(), worst[k], samples[k]));
    }
    Ok((ok, parts.join(", ")))
}

/// `int_r^{r+2} e^{-2g} * int_r^{r+2} e^{2g} - 4` with `g(t) = e^{-2r} - e^{-2t}`,
/// by composite Simpson on the expm1 form to avoid cancellation.
fn off_diagonal_closed_form(r: f64) -> f64 {
    let n = 40_000;
    let h = 2.0 / n as f64;
    let g = |t: f64| (-2.0 * r).exp() * -(-2.0 * (t - r)).exp_m1();
    let (mut sp, mut sm, mut s4) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let gt = g(r + k as f64 * h);
        sp += w * (2.0 * gt).exp_m1();
        sm += w * (-2.0 * gt).exp_m1();
        s4 += w * 4.0 * gt.sinh().powi(2);
    }
    let (a, b, s) = (sp * h / 3.0, sm * h / 3.0, s4 * h / 3.0);
    2.0 * s + a * b
}

fn c5_entropy_closed_form() -> Outcome {
    let q = PotentialSpec::new(Family::OffDiagonal).compile().map_err(|e| e.to_string())?.dirac();
    let mut worst = 0.0f64;
    for r in [0.0, 1.0, 2.0, 3.0] {
        let e = entropy_e(&q, r, 1.0, entropy_tolerance()).map_err(|e| e.to_string())?;
        let oracle = off_diagonal_closed_form(r);
        worst = worst.max((e - oracle).abs() / oracle.abs());
    }
    Ok((worst < CLOSED_FORM_REL_TOL, format!("worst relative deviation {worst:.3e}")))
}

fn closed(c: f64, l: f64, z: C64) -> C64 {
    let i = C64::new(0.0, 1.0);
    let d = (c * c - z * z / 4.0).sqrt();
    (i * z * l / 2.0).exp() * ((l * d).cosh() - (c + i * z / 2.0) * (l * d).sinh() / d)
}

fn oracle_roots(c: f64, l: f64, rect: &Rect) -> Vec<C64> {
    let mut roots: Vec<C64> = Vec::new();
    for i in 0..=80 {
        for j in 0..=40 {
            let mut z = C64::new(rect.x0 + (rect.x1 - rect.x0) * i as f64 / 80.0, rect.y0 + (rect.y1 - rect.y0) * j as f64 / 40.0);
            for _ in 0..60 {
                let h = 1e-7;
                let d = (closed(c, l, z + h) - closed(c, l, z - h)) / (2.0 * h);
                z -= closed(c, l, z) / d;
            }
            if rect.contains(z) && closed(c, l, z).norm() < 1e-12 && roots.iter().all(|r| (r - z).norm() > 1e-6) {
                roots.push(z);
            }
        }
    }
    roots
}

fn c6_resonances() -> Outcome {
    let rect = Rect::new(-3.0, 3.0, -2.0, -0.05).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (c, l) in [(1.0, 2.0), (0.5, 4.0)] {
        let a = KreinCoefficient::Steps { knots: vec![0.0, l], values: vec![C64::new(c, 0.0)] };
        let ev = AnalyticEvaluator::compact(&a).map_err(|e| e.to_string())?;
        let rep = locate_resonances(&ev, &rect, &LocateOptions::default()).map_err(|e| e.to_string())?;
        let oracle = oracle_roots(c, l, &rect);
        let mut worst = 0.0f64;
        for z in &rep.zeros {
            worst = worst.max(oracle.iter().map(|r| (r - z.z()).norm()).fold(f64::INFINITY, f64::min));
        }
        let counts = rep.winding_total == oracle.len() as i64 && rep.multiplicity_total() == rep.winding_total;
        ok &= counts && worst < RESONANCE_TOL && rep.complete;
        parts.push(format!("(c={c}, L={l}): {} zeros, winding {}, worst {worst:.2e}", oracle.len(), rep.winding_total));
    }
    Ok((ok, parts.join("; ")))
}

fn c7_oscillation() -> Outcome {
    let q = DiracPotential::Oscillatory { amp: 1.0, beta: 1.0, gamma: 2.0, cut: f64::INFINITY };
    let rs = grid(1.0, 3.0, 21);
    let mut logs = Vec::new();
    for &r in &rs {
        logs.push(oscillation_sup(&q, r, r + 3.0, 0.005).map_err(|e| e.to_string())?.ln());
    }
    let s = slope(&rs, &logs);
    let prof = entropy_profile(&q, &rs, 1.0, entropy_tolerance()).map_err(|e| e.to_string())?;
    let fit = fit_decay_rate(&prof, Some((1.0, 3.0))).map_err(|e| e.to_string())?;
    Ok((
        s <= OSC_SLOPE_MAX && fit.rate >= OSC_ENTROPY_RATE_MIN,
        format!("oscillation slope {s:.4}, entropy rate {:.4}", fit.rate),
    ))
}

fn c8_sobolev() -> Outcome {
    let q = spectral_dirac(&krein_exp());
    let mut ratios = Vec::new();
    for r in [0.0, 1.0, 2.0, 3.0] {
        let kh = entropy_kh(&q, r, 30, entropy_tolerance()).map_err(|e| e.to_string())?;
        let n = sobolev_tail_norm(&q, r, 16.0, 1 << 14).map_err(|e| e.to_string())?;
        ratios.push(kh.value / (n * n));
    }
    let ok = ratios.iter().all(|v| *v >= 1.0 / SOBOLEV_BAND && *v <= SOBOLEV_BAND);
    let vals: Vec<String> = ratios.iter().map(|v| format!("{v:.4}")).collect();
    Ok((ok, format!("K_H/||f||^2 = [{}]", vals.join(", "))))
}

fn c9_opuc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..=8);
        let alpha: Vec<C64> =
            (0..n).map(|_| C64::from_polar(0.6 * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU))).collect();
        let params = SchurParameters::new(alpha).map_err(|e| e.to_string())?;
        let w = bernstein_szego_density(&params, 2048);
        for m in 0..=n {
            let prefix = SchurParameters::new(params.alpha()[..m].to_vec()).unwrap();
            let brute = christoffel_gram(&w, m).map_err(|e| e.to_string())?;
            worst = worst.max((brute - christoffel_lambda0(&prefix)).abs());
        }
    }
    let mut ok = worst < GRAM_TOL;
    let mut parts = vec![format!("Gram deviation {worst:.2e}")];
    for rho in [0.5, 0.9] {
        let rep = nevai_totik_probe(rho, 40).map_err(|e| e.to_string())?;
        ok &= rep.relative_error < NEVAI_TOTIK_REL_TOL;
        parts.push(format!("rho {rho}: rate {:.5} vs {:.5}", rep.rate, rep.expected));
    }
    Ok((ok, parts.join(", ")))
}

fn c10_regularized() -> Outcome {
    let a = KreinCoefficient::Steps { knots: vec![0.0, 1.0, 2.0], values: vec![C64::new(0.6, 0.3), C64::new(-0.4, 0.2)] };
    let q = spectral_dirac(&a);
    let z = C64::new(0.0, 2.0);
    let rmax = 6.0;
    let inp = regularized_inputs(&q, rmax / 2.0, &RegularizedOptions::default()).map_err(|e| e.to_string())?;
    let tol = Tolerance::new(1e-13, 1e-12);
    let stops = [1.0, 2.0, rmax];
    let reg = regularized_solve(&inp, z, &stops, tol).map_err(|e| e.to_string())?;
    let pi = AnalyticEvaluator::compact(&a).and_then(|ev| ev.eval(z)).map_err(|e| e.to_string())?;
    let conv = (reg.pstar[2] - pi).norm();

    let opts = KreinOptions { tol, max_cell: 0.5, stops: vec![1.0, 2.0] };
    let kt = solve_krein(&a, z, 30.0, &opts).map_err(|e| e.to_string())?;
    let cum = kt.norm_p2();
    let total = *cum.last().unwrap();
    let mut kernel = 0.0f64;
    for (k, r) in [1.0, 2.0].iter().enumerate() {
        let i = kt.index_of(*r).unwrap();
        let lhs = 2.0 * z.im * (total - cum[i]);
        kernel = kernel.max((lhs - (pi.norm_sqr() - reg.kernel_gap(k))).abs());
    }
    Ok((conv < REGULARIZED_TOL && kernel < REGULARIZED_TOL, format!("|P~*(rmax) - Pi| = {conv:.2e}, kernel residual {kernel:.2e}")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("decay rate of the sharpness example", c1_decay_rate, Duration::from_secs(30)),
        ("blow-up of Pi(-ih) in the sharpness example", c2_blowup, Duration::from_secs(120)),
        ("CD continuation against the exact compact evaluator", c3_cd_vs_exact, Duration::from_secs(120)),
        ("identity suite over four families", c4_identities, Duration::from_secs(120)),
        ("off-diagonal entropy against the closed form", c5_entropy_closed_form, Duration::from_secs(10)),
        ("resonances of constant coefficients", c6_resonances, Duration::from_secs(120)),
        ("oscillating potential: oscillation and entropy decay", c7_oscillation, Duration::from_secs(300)),
        ("Hamiltonian entropy against the W^-1_2 tail norm", c8_sobolev, Duration::from_secs(60)),
        ("OPUC Christoffel numbers and decay probe", c9_opuc, Duration::from_secs(60)),
        ("regularized system convergence", c10_regularized, Duration::from_secs(300)),
    ];
    let mut failures = 0;
    for (k, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((ok, d)) => (ok && took <= *budget, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2}: {} | {name} | {detail} | {:.2}s (budget {}s)",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
