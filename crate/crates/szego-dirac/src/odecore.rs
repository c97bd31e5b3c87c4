//! Adaptive integration of complex linear systems and ordered exponentials.
//!
//! The stepper is Verner's efficient 9(8) embedded Runge-Kutta pair. Steps
//! never straddle a declared breakpoint of the coefficient, and stage times
//! are clamped to the current smooth segment so that piecewise coefficients
//! are always sampled from the correct side.

use crate::error::{Error, Result};
use crate::mat2::Mat2;
use num_complex::Complex64 as C64;

const STAGES: usize = 16;

#[rustfmt::skip]
const A: [[f64; STAGES]; STAGES] = [
    [0.0; STAGES],
    [0.3571e-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-3.833_735_636_677_017e-2, 0.137_397_637_279_444_32, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.714_760_534_225_28e-2, 0.0, 0.111_442_816_026_758_42, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.674_764_429_871_505, 0.0, -9.982_382_134_885_293, 7.921_017_705_013_789, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [5.242_104_050_577_351e-2, 0.0, 0.0, 0.179_691_118_917_595_32, 6.237_879_371_938_568e-4, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.159_249_222_364_763_22, 0.0, 0.0, -0.429_842_987_724_108_7, 6.665_266_542_726_088e-2, 0.757_805_152_571_522, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [7.283_333_333_333_333e-2, 0.0, 0.0, 0.0, 0.0, 0.335_934_459_066_510_37, 0.246_732_207_600_156_3, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.729755859375e-1, 0.0, 0.0, 0.0, 0.0, 0.334_800_972_969_933_33, 0.118_415_823_905_066_65, -0.345673828125e-1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [4.911_213_663_452_096_4e-2, 0.0, 0.0, 0.0, 0.0, 3.983_857_361_308_652e-2, 0.106_967_528_893_935_49, -2.174_259_165_458_647_7e-2, -0.105_595_647_486_956_49, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-2.707_988_818_641_280_5e-2, 0.0, 0.0, 0.0, 0.0, 0.333e-1, -0.164_552_607_003_605_72, 3.428_266_306_497_39e-2, 0.158_526_406_443_922_1, 0.218_523_425_681_122_5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [5.584_657_769_108_862_5e-2, 0.0, 0.0, 0.0, 0.0, 9.166_533_166_672_539e-2, 0.239_239_965_552_362_7, 1.023_834_712_248_415e-2, -2.679_331_322_859_542_6e-3, 4.235_624_181_474_284_5e-2, 0.225_397_047_016_660_4, 0.0, 0.0, 0.0, 0.0, 0.0],
    [-0.480_251_051_272_519_6, 0.0, 0.0, 0.0, 0.0, -6.359_610_162_555_930_5, -0.276_231_389_804_084_1, -6.500_796_633_979_847, 0.573_476_587_704_095_7, 1.347_125_994_868_138_9, 5.936_840_409_706_221, 6.590_346_245_333_925, 0.0, 0.0, 0.0, 0.0],
    [0.330_753_306_767_140_1, 0.0, 0.0, 0.0, 0.0, 5.956_207_776_829_962, -0.486_831_640_048_152_77, 4.462_055_288_206_771, 0.741_025_823_144_207_2, -0.711_819_203_457_591_3, -5.454_619_594_516_665, -4.140_803_729_244_71, 0.203_831_972_319_038_66, 0.0, 0.0, 0.0],
    [-0.584_711_112_299_894_5, 0.0, 0.0, 0.0, 0.0, -12.412_684_171_162_67, 1.360_245_445_660_928, -22.426_105_311_118_683, -0.882_885_705_586_545_8, 1.770_155_128_538_230_4, 12.158_096_519_185_339, 22.230_375_204_077_607, -0.663_448_376_020_124_9, 0.450_962_378_725_813_74, 0.0, 0.0],
    [1.940_575_549_810_648_7, 0.0, 0.0, 0.0, 0.0, 21.977_984_081_145_564, 0.823_074_732_698_472_9, 68.164_416_836_263_54, -3.117_097_463_620_267, -4.568_841_021_822_44, -18.741_909_871_262_65, -66.577_118_396_378_32, 1.098_915_553_165_441_8, 0.0, 0.0, 0.0],
];

#[rustfmt::skip]
const B_HIGH: [f64; STAGES] = [
    1.500_669_014_979_724_7e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.055_180_992_746_381_3,
    0.238_494_726_378_218_3, 0.128_815_177_428_299_15, 0.227_662_311_104_621_57, 1.229_532_587_437_517_4,
    4.624_976_662_810_384e-2, 0.138_619_631_936_629_38, 3.080_010_168_319_435_5e-2, 0.0,
];

#[rustfmt::skip]
const B_LOW: [f64; STAGES] = [
    1.897_210_532_481_101_4e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.408_110_314_549_493_8,
    0.126_032_388_382_092_1, 0.118_837_506_345_114_97, 0.249_104_199_783_868_75, -3.269_966_219_928_978_3,
    0.302_379_810_022_888_3, 0.0, 0.0, 4.652_989_552_070_924e-2,
];

#[rustfmt::skip]
const C: [f64; STAGES] = [
    0.0, 0.3571e-1, 9.906_028_091_267_415e-2, 0.148_590_421_369_011_2, 0.6134,
    0.232_735_947_360_562_7, 0.553_864_052_639_437_3, 0.6555, 0.491625, 0.6858e-1, 0.253,
    0.662_064_179_541_204_6, 0.8309, 0.8998, 1.0, 1.0,
];

/// Mixed absolute/relative error tolerance, applied per component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-12, rel: 1e-10 }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepOptions {
    pub tol: Tolerance,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { tol: Tolerance::default(), max_step: f64::INFINITY, min_step: 1e-14, max_steps: 20_000_000 }
    }
}

impl StepOptions {
    pub fn with_tol(tol: Tolerance) -> Self {
        StepOptions { tol, ..Default::default() }
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

/// A first-order system `y' = f(t, y)` on `C^N`.
pub trait OdeSystem<const N: usize>: Sync {
    fn rhs(&self, t: f64, y: &[C64; N]) -> [C64; N];

    /// Largest step allowed at `t`.
    fn max_step(&self, _t: f64) -> f64 {
        f64::INFINITY
    }

    /// Points where the coefficients may be discontinuous.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// One step of the 9(8) pair from `(t, y)` with size `h`; stage times are kept
/// strictly below `t_cap`. Returns the 9th-order update and the error estimate.
pub fn rk_step<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &S,
    t: f64,
    y: &[C64; N],
    h: f64,
    t_cap: f64,
) -> ([C64; N], [C64; N]) {
    let mut k = [[C64::new(0.0, 0.0); N]; STAGES];
    for s in 0..STAGES {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += kj[i] * (a * h);
                }
            }
        }
        let ts = (t + C[s] * h).min(t_cap);
        k[s] = sys.rhs(ts, &ys);
    }
    let mut out = *y;
    let mut err = [C64::new(0.0, 0.0); N];
    for s in 0..STAGES {
        let bh = B_HIGH[s];
        let be = B_HIGH[s] - B_LOW[s];
        if bh == 0.0 && be == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += k[s][i] * (bh * h);
            err[i] += k[s][i] * (be * h);
        }
    }
    (out, err)
}

fn just_below(t: f64) -> f64 {
    t - 4.0 * f64::EPSILON * t.abs().max(1.0)
}

/// Stateful forward integrator that lands exactly on requested times and
/// on the system's breakpoints.
pub struct Integrator<'a, S: OdeSystem<N> + ?Sized, const N: usize> {
    sys: &'a S,
    opts: StepOptions,
    t: f64,
    y: [C64; N],
    h: f64,
    breaks: Vec<f64>,
    steps: usize,
}

impl<'a, S: OdeSystem<N> + ?Sized, const N: usize> Integrator<'a, S, N> {
    pub fn new(sys: &'a S, t0: f64, y0: [C64; N], opts: StepOptions) -> Self {
        let mut breaks: Vec<f64> = sys.breakpoints().into_iter().filter(|b| b.is_finite()).collect();
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let h0 = opts.max_step.min(sys.max_step(t0)).min(0.05);
        Integrator { sys, opts, t: t0, y: y0, h: h0, breaks, steps: 0 }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[C64; N] {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn next_break(&self, after: f64) -> f64 {
        let tol = 8.0 * f64::EPSILON * after.abs().max(1.0);
        self.breaks.iter().copied().find(|b| *b > after + tol).unwrap_or(f64::INFINITY)
    }

    fn error_norm(&self, y0: &[C64; N], y1: &[C64; N], e: &[C64; N]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..N {
            let scale = self.opts.tol.abs + self.opts.tol.rel * y0[i].norm().max(y1[i].norm());
            let scale = scale.max(f64::MIN_POSITIVE);
            worst = worst.max(e[i].norm() / scale);
        }
        worst
    }

    /// Take one accepted step that does not pass `target`. Returns the
    /// starting time, starting state and step size of the accepted step.
    pub fn step_toward(&mut self, target: f64) -> Result<(f64, [C64; N], f64)> {
        if target <= self.t {
            return Err(Error::validation("integration target must lie ahead of the current time"));
        }
        let seg_end = self.next_break(self.t).min(target);
        let t_cap = if seg_end < target || self.breaks.iter().any(|b| *b == target) {
            just_below(seg_end)
        } else {
            seg_end
        };
        loop {
            if self.steps >= self.opts.max_steps {
                return Err(Error::numerical(format!("step budget exhausted at t = {}", self.t)));
            }
            let hmax = self.opts.max_step.min(self.sys.max_step(self.t));
            let mut h = self.h.min(hmax);
            let remaining = seg_end - self.t;
            let mut lands = false;
            if h >= remaining * (1.0 - 1e-12) {
                h = remaining;
                lands = true;
            } else if h > 0.5 * remaining {
                h = 0.5 * remaining;
            }
            let (y1, e) = rk_step(self.sys, self.t, &self.y, h, t_cap);
            self.steps += 1;
            let err = self.error_norm(&self.y, &y1, &e);
            if !err.is_finite() {
                self.h = h * 0.2;
                if self.h < self.opts.min_step * self.t.abs().max(1.0) {
                    return Err(Error::numerical(format!("non-finite state near t = {}", self.t)));
                }
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 9.0)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                let start = (self.t, self.y, h);
                self.t = if lands { seg_end } else { self.t + h };
                self.y = y1;
                if !lands || factor > 1.0 {
                    self.h = h * factor;
                } else {
                    self.h = self.h.max(h);
                }
                return Ok(start);
            }
            self.h = h * factor;
            if self.h < self.opts.min_step * self.t.abs().max(1.0) {
                return Err(Error::numerical(format!("step size underflow at t = {}", self.t)));
            }
        }
    }

    /// Integrate until exactly `target`.
    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        while self.t < target {
            self.step_toward(target)?;
        }
        Ok(())
    }

    /// Single unchecked step of size `h` from `(t, y)`, staying in the segment
    /// containing `t`. Used to evaluate the solution inside an accepted step.
    pub fn probe(&self, t: f64, y: &[C64; N], h: f64) -> [C64; N] {
        let seg_end = self.next_break(t);
        let cap = if seg_end.is_finite() { just_below(seg_end) } else { f64::INFINITY };
        rk_step(self.sys, t, y, h, cap).0
    }
}

/// Integrate `sys` from `t0` to `t1` and return the final state.
pub fn integrate<S: OdeSystem<N> + ?Sized, const N: usize>(
    sys: &S,
    t0: f64,
    t1: f64,
    y0: [C64; N],
    opts: StepOptions,
) -> Result<[C64; N]> {
    if t1 == t0 {
        return Ok(y0);
    }
    let mut it = Integrator::new(sys, t0, y0, opts);
    it.advance_to(t1)?;
    Ok(it.y)
}

/// Coefficient `A(t)` of a matrix equation `X' = A(t) X`.
pub trait MatrixField: Sync {
    fn matrix(&self, t: f64) -> Mat2;

    fn max_step(&self, _t: f64) -> f64 {
        f64::INFINITY
    }

    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

struct MatrixSystem<'a, F: MatrixField + ?Sized>(&'a F);

impl<F: MatrixField + ?Sized> OdeSystem<4> for MatrixSystem<'_, F> {
    fn rhs(&self, t: f64, y: &[C64; 4]) -> [C64; 4] {
        (self.0.matrix(t) * Mat2(*y)).0
    }
    fn max_step(&self, t: f64) -> f64 {
        self.0.max_step(t)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.0.breakpoints()
    }
}

/// Ordered exponential `X(t0, t1)`: the solution of `X' = A X`, `X(t0) = I`, at `t1 >= t0`.
pub fn ordered_exponent<F: MatrixField + ?Sized>(field: &F, t0: f64, t1: f64, opts: StepOptions) -> Result<Mat2> {
    if t1 < t0 {
        return Err(Error::validation("ordered exponent requires t1 >= t0"));
    }
    let y = integrate(&MatrixSystem(field), t0, t1, Mat2::identity().0, opts)?;
    Ok(Mat2(y))
}

/// Solve `X' = A X` from `X(t0) = x0` and report the state at each of the
/// increasing times in `stops`.
pub fn propagate_matrix<F: MatrixField + ?Sized>(
    field: &F,
    t0: f64,
    x0: Mat2,
    stops: &[f64],
    opts: StepOptions,
) -> Result<Vec<Mat2>> {
    let sys = MatrixSystem(field);
    let mut it = Integrator::new(&sys, t0, x0.0, opts);
    let mut out = Vec::with_capacity(stops.len());
    for &s in stops {
        if s < it.t() {
            return Err(Error::validation("propagation stops must be increasing"));
        }
        if s > it.t() {
            it.advance_to(s)?;
        }
        out.push(Mat2(*it.y()));
    }
    Ok(out)
}

/// Partial sums of the Dyson series of the ordered exponential on `[t0, t1]`.
///
/// Returns the terms `T_0, ..., T_{m}` evaluated at `t1`, with iterated
/// integrals computed by composite Simpson quadrature on `2 * n_half` cells.
pub fn dyson_terms<F: MatrixField + ?Sized>(field: &F, t0: f64, t1: f64, m: usize, n_half: usize) -> Vec<Mat2> {
    let n = 2 * n_half.max(1);
    let h = (t1 - t0) / n as f64;
    let a: Vec<Mat2> = (0..=n).map(|i| field.matrix(t0 + h * i as f64)).collect();
    let mut prev: Vec<Mat2> = vec![Mat2::identity(); n + 1];
    let mut terms = vec![Mat2::identity()];
    for _ in 0..m {
        let integrand: Vec<Mat2> = (0..=n).map(|i| a[i] * prev[i]).collect();
        let mut cur = vec![Mat2::zero(); n + 1];
        // cumulative integral, local quadratic rule on each cell
        for i in 0..n {
            let f0 = integrand[i];
            let f1 = integrand[i + 1];
            let fm = if i % 2 == 0 && i + 2 <= n {
                // quadratic through i, i+1, i+2 integrated over [i, i+1]
                let f2 = integrand[i + 2];
                f0.scale((5.0 * h / 12.0).into()) + f1.scale((8.0 * h / 12.0).into()) - f2.scale((h / 12.0).into())
            } else {
                let fp = integrand[i - 1];
                fp.scale((-h / 12.0).into()) + f0.scale((8.0 * h / 12.0).into()) + f1.scale((5.0 * h / 12.0).into())
            };
            cur[i + 1] = cur[i] + fm;
        }
        terms.push(cur[n]);
        prev = cur;
    }
    terms
}
