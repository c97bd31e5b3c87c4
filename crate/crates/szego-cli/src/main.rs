mod grid;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use szego_dirac::entropy::{entropy_kh, entropy_profile, entropy_tolerance, estimate_delta, fit_decay_rate, sobolev_tail_norm};
use szego_dirac::krein::{fmt17, solve_krein, KreinOptions};
use szego_dirac::opuc::{bernstein_szego_density, christoffel_gram, christoffel_lambda0, nevai_totik_probe, szego_recursion, SchurParameters};
use szego_dirac::potential::{spectral_dirac, Potential, PotentialSpec};
use szego_dirac::resonances::{locate_resonances, uniqueness_probe, LocateOptions, Rect};
use szego_dirac::szego::{spectral_density, weyl_ratio, AnalyticEvaluator, CdOptions, LimitOptions};
use szego_dirac::verify::{standard_families, verify, Identity, VerifyOptions};
use szego_dirac::{Error, Result};

#[derive(Parser)]
#[command(name = "szego", version, about = "Szegő functions, resonances and entropy of Dirac and Krein systems")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Input {
    /// Potential description (JSON).
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Run configuration (JSON) with the potential, output path and tolerance.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EvalArgs {
    #[arg(long, value_enum, default_value = "auto")]
    method: MethodArg,
    /// Anchor `h` of the CD continuation.
    #[arg(long)]
    anchor_h: Option<f64>,
    /// Entropy decay rate used by the CD continuation; estimated when absent.
    #[arg(long)]
    delta: Option<f64>,
    /// Radius at which limits are read.
    #[arg(long)]
    rmax: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Auto,
    Limit,
    Cd,
    Compact,
}

#[derive(Subcommand)]
enum Command {
    /// Krein trace `(P, P*)` along `[0, rmax]` as CSV.
    Simulate {
        #[command(flatten)]
        input: Input,
        /// Spectral parameter `re,im`.
        #[arg(long, allow_hyphen_values = true)]
        z: String,
        #[arg(long)]
        rmax: Option<f64>,
        /// Include the dual columns.
        #[arg(long)]
        dual: bool,
    },
    /// Entropy profile `E^(l)(r)` as CSV, with an optional decay fit.
    Entropy {
        #[command(flatten)]
        input: Input,
        #[arg(long, allow_hyphen_values = true)]
        r: String,
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        /// Fit the decay rate on `lo,hi`.
        #[arg(long, allow_hyphen_values = true)]
        fit_window: Option<String>,
        /// Fit on the default window.
        #[arg(long)]
        fit: bool,
        /// File for the fit (JSON).
        #[arg(long)]
        fit_out: Option<PathBuf>,
    },
    /// Normalized `Pi` on a complex grid as CSV.
    Szego {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        eval: EvalArgs,
        /// `xlo:xhi:xstep,ylo:yhi:ystep`.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
    },
    /// Weyl function on a complex grid, or the spectral density on a real grid.
    Weyl {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, allow_hyphen_values = true, required_unless_present = "density")]
        grid: Option<String>,
        /// Real grid `lo:hi:step` for the spectral density.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "grid")]
        density: Option<String>,
    },
    /// Resonances in a rectangle as JSON.
    Resonances {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        eval: EvalArgs,
        /// `x0,x1,y0,y1`.
        #[arg(long, allow_hyphen_values = true)]
        region: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        n_boundary: usize,
        /// Further potentials; prints pairwise Hausdorff distances of the resonance sets.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        compare: Vec<PathBuf>,
    },
    /// Hamiltonian entropy against the `W_2^{-1}` tail norm as CSV.
    Sobolev {
        #[command(flatten)]
        input: Input,
        #[arg(long, allow_hyphen_values = true)]
        r: String,
        #[arg(long, default_value_t = 40.0)]
        grid_len: f64,
        #[arg(long, default_value_t = 8192)]
        n_fft: usize,
        /// Number of unit windows summed for `K_H`.
        #[arg(long, default_value_t = 30)]
        n_max: usize,
    },
    /// Residuals of the classical identities as JSON; fails unless all pass.
    Verify {
        #[command(flatten)]
        input: Input,
        /// Comma-separated subset of cd, reflection, wronskian, det_n, duality.
        #[arg(long, default_value = "cd,reflection,wronskian,det_n,duality")]
        suite: String,
        #[arg(long, default_value_t = 4.0)]
        rmax: f64,
    },
    /// Szegő recursion and Christoffel numbers on the circle as JSON.
    Opuc {
        /// Real parts of the Schur parameters.
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        /// Imaginary parts of the Schur parameters.
        #[arg(long, allow_hyphen_values = true, requires = "alpha")]
        alpha_im: Option<String>,
        /// Also minimize over polynomials on a circle grid of this size.
        #[arg(long)]
        gram_grid: Option<usize>,
        /// Decay probe for `alpha_k = rho^(k+1)`.
        #[arg(long, conflicts_with = "alpha")]
        rho: Option<f64>,
        #[arg(long, default_value_t = 40)]
        n_max: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    potential: PotentialSpec,
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    tol: Option<f64>,
}

struct Loaded {
    potential: Potential,
    out: Option<PathBuf>,
    tol: Option<f64>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))
}

fn load_potential(path: &Path) -> Result<Potential> {
    PotentialSpec::from_json(&read(path)?)?.compile()
}

impl Input {
    fn load(&self) -> Result<Loaded> {
        match (&self.potential, &self.config) {
            (Some(p), None) => Ok(Loaded { potential: load_potential(p)?, out: self.out.clone(), tol: None }),
            (None, Some(c)) => {
                let cfg: RunConfig = serde_json::from_str(&read(c)?).map_err(|e| Error::validation(format!("invalid run configuration: {e}")))?;
                if let Some(t) = cfg.tol {
                    if !(t > 0.0 && t < 1.0) {
                        return Err(Error::validation("tol must lie in (0, 1)"));
                    }
                }
                Ok(Loaded { potential: cfg.potential.compile()?, out: self.out.clone().or(cfg.output), tol: cfg.tol })
            }
            (Some(_), Some(_)) => Err(Error::validation("give either --potential or --config, not both")),
            (None, None) => Err(Error::validation("--potential or --config is required")),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::numerical(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn evaluator(p: &Potential, e: &EvalArgs) -> Result<AnalyticEvaluator> {
    let a = p.krein();
    let limit = LimitOptions { rmax: e.rmax, ..Default::default() };
    let cd = || -> Result<AnalyticEvaluator> {
        let delta = match e.delta {
            Some(d) if d > 0.0 => d,
            Some(_) => return Err(Error::validation("delta must be positive")),
            None => estimate_delta(&spectral_dirac(&a), (1.0, 4.0), 31, entropy_tolerance())?,
        };
        AnalyticEvaluator::cd(&a, CdOptions { delta, h: e.anchor_h, limit: limit.clone(), ..Default::default() })
    };
    let ev = match e.method {
        MethodArg::Limit => AnalyticEvaluator::limit(&a, limit.clone())?,
        MethodArg::Compact => AnalyticEvaluator::compact(&a)?,
        MethodArg::Cd => cd()?,
        MethodArg::Auto if e.anchor_h.is_some() || e.delta.is_some() => cd()?,
        MethodArg::Auto => AnalyticEvaluator::auto(&a)?,
    };
    eprintln!("method {:?}, region Im z > {}", ev.method(), ev.region_floor());
    Ok(ev)
}

fn outside(ev: &AnalyticEvaluator, pts: &[C64]) -> Result<()> {
    if let Some(z) = pts.iter().find(|z| !ev.contains(**z)) {
        return Err(Error::validation(format!("grid point {z} lies outside Im z > {}", ev.region_floor())));
    }
    Ok(())
}

fn csv_rows(header: &str, rows: &[Vec<f64>]) -> String {
    let mut s = format!("{header}\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::validation(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate { input, z, rmax, dual } => {
            let l = input.load()?;
            let z = grid::point(&z)?;
            let rmax = rmax.unwrap_or_else(|| l.potential.default_rmax());
            let mut opts = KreinOptions::default();
            if let Some(t) = l.tol {
                opts.tol = szego_dirac::odecore::Tolerance::new(t * 1e-2, t);
            }
            let tr = solve_krein(&l.potential.krein(), z, rmax, &opts)?;
            emit(l.out.as_deref(), &tr.to_csv(dual))
        }
        Command::Entropy { input, r, l: scale, fit_window, fit, fit_out } => {
            let l = input.load()?;
            let grid = grid::real_grid(&r)?;
            if !(scale > 0.0) {
                return Err(Error::validation("--l must be positive"));
            }
            let mut prof = entropy_profile(&l.potential.dirac(), &grid, scale, entropy_tolerance())?;
            let window = fit_window.map(|w| grid::list(&w, Some(2))).transpose()?.map(|w| (w[0], w[1]));
            if fit || window.is_some() {
                let f = fit_decay_rate(&prof, window)?;
                eprintln!("fitted rate {:.6} on [{}, {}]", f.rate, f.window.0, f.window.1);
                prof.fit = Some(f);
                match (&fit_out, &l.out) {
                    (Some(p), _) => emit(Some(p), &json(&f))?,
                    (None, Some(_)) => emit(None, &json(&f))?,
                    (None, None) => return Err(Error::validation("with the CSV on standard output the fit needs --fit-out")),
                }
            }
            emit(l.out.as_deref(), &prof.to_csv())
        }
        Command::Szego { input, eval, grid } => {
            let l = input.load()?;
            let pts = grid::complex_grid(&grid)?;
            let ev = evaluator(&l.potential, &eval)?;
            outside(&ev, &pts)?;
            let vals: Vec<C64> = pts.par_iter().map(|z| ev.eval(*z)).collect::<Result<_>>()?;
            let rows: Vec<Vec<f64>> = pts.iter().zip(&vals).map(|(z, v)| vec![z.re, z.im, v.re, v.im]).collect();
            emit(l.out.as_deref(), &csv_rows("re,im,re_pi,im_pi", &rows))
        }
        Command::Weyl { input, eval, grid, density } => {
            let l = input.load()?;
            let ev = evaluator(&l.potential, &eval)?;
            if let Some(d) = density {
                let xs = grid::real_grid(&d)?;
                let rows: Vec<Vec<f64>> =
                    xs.par_iter().map(|x| Ok(vec![*x, spectral_density(&ev, *x)?])).collect::<Result<_>>()?;
                return emit(l.out.as_deref(), &csv_rows("x,density", &rows));
            }
            let pts = grid::complex_grid(grid.as_deref().unwrap_or_default())?;
            outside(&ev, &pts)?;
            let dual = ev.dual()?;
            let rows: Vec<Vec<f64>> = pts
                .par_iter()
                .map(|z| {
                    let m = weyl_ratio(&ev, &dual, *z)?;
                    Ok(vec![z.re, z.im, m.re, m.im])
                })
                .collect::<Result<_>>()?;
            emit(l.out.as_deref(), &csv_rows("re,im,re_m,im_m", &rows))
        }
        Command::Resonances { input, eval, region, tol, n_boundary, compare } => {
            let l = input.load()?;
            let b = grid::list(&region, Some(4))?;
            let rect = Rect::new(b[0], b[1], b[2], b[3])?;
            if !(tol > 0.0) {
                return Err(Error::validation("--tol must be positive"));
            }
            let opts = LocateOptions { tol, n_boundary, ..Default::default() };
            if !compare.is_empty() {
                let mut coeffs = vec![l.potential.krein()];
                for p in &compare {
                    coeffs.push(load_potential(p)?.krein());
                }
                let d = uniqueness_probe(&coeffs, &rect, &opts)?;
                return emit(l.out.as_deref(), &json(&serde_json::json!({ "region": b, "hausdorff": d })));
            }
            let ev = evaluator(&l.potential, &eval)?;
            let rep = locate_resonances(&ev, &rect, &opts)?;
            if !rep.complete {
                eprintln!("warning: subdivision incomplete; see subdivision_log");
            }
            emit(l.out.as_deref(), &format!("{}\n", rep.to_json()))
        }
        Command::Sobolev { input, r, grid_len, n_fft, n_max } => {
            let l = input.load()?;
            let q = l.potential.dirac();
            let rs = grid::real_grid(&r)?;
            let rows: Vec<Vec<f64>> = rs
                .iter()
                .map(|r| {
                    let kh = entropy_kh(&q, *r, n_max, entropy_tolerance())?;
                    let norm2 = sobolev_tail_norm(&q, *r, grid_len, n_fft)?.powi(2);
                    Ok(vec![*r, kh.value, norm2, kh.value / norm2])
                })
                .collect::<Result<_>>()?;
            emit(l.out.as_deref(), &csv_rows("r,k_h,sobolev_norm2,ratio", &rows))
        }
        Command::Verify { input, suite, rmax } => {
            let suite = Identity::parse_suite(&suite)?;
            let opts = VerifyOptions { rmax, ..Default::default() };
            let (reports, out) = if input.potential.is_none() && input.config.is_none() {
                let mut reps = Vec::new();
                for (name, spec) in standard_families() {
                    reps.push(verify(&name, &spec.compile()?, &suite, &opts)?);
                }
                (reps, input.out.clone())
            } else {
                let l = input.load()?;
                let label = input.potential.as_ref().or(input.config.as_ref()).map(|p| p.display().to_string()).unwrap_or_default();
                (vec![verify(&label, &l.potential, &suite, &opts)?], l.out)
            };
            emit(out.as_deref(), &json(&reports))?;
            let failed: Vec<String> = reports
                .iter()
                .flat_map(|r| r.results.iter().filter(|c| !c.passed).map(move |c| format!("{}:{}", r.label, c.identity.name())))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::numerical(format!("identities above threshold: {}", failed.join(", "))))
            }
        }
        Command::Opuc { alpha, alpha_im, gram_grid, rho, n_max, out } => {
            if let Some(rho) = rho {
                return emit(out.as_deref(), &json(&nevai_totik_probe(rho, n_max)?));
            }
            let re = match &alpha {
                Some(s) if !s.trim().is_empty() => grid::list(s, None)?,
                _ => Vec::new(),
            };
            let im = match &alpha_im {
                Some(s) => grid::list(s, Some(re.len()))?,
                None => vec![0.0; re.len()],
            };
            let params = SchurParameters::new(re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect())?;
            let polys = szego_recursion(&params);
            let pairs = |v: &[C64]| v.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>();
            let mut report = serde_json::json!({
                "degree": polys.degree,
                "phi": pairs(&polys.phi),
                "phi_star": pairs(&polys.phi_star),
                "lambda0": christoffel_lambda0(&params),
            });
            if let Some(n) = gram_grid {
                let w = bernstein_szego_density(&params, n);
                report["lambda0_gram"] = serde_json::json!(christoffel_gram(&w, params.len())?);
            }
            emit(out.as_deref(), &json(&report))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
