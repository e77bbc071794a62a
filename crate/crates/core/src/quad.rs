//! Globally adaptive 15-point Gauss–Kronrod quadrature.
//!
//! [`integrate`] handles finite intervals. [`integrate_to_infinity`] walks
//! outward over panels of doubling width and stops once a caller-supplied
//! bound on the remaining tail is negligible against the running total.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the 7-point rule living on the odd Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Tail truncation: stop once the tail bound is below this fraction of
    /// the running integral.
    pub tail_rel: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 0.0,
            max_subdivisions: 2000,
            tail_rel: 1e-16,
            max_panels: 1100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    let value = kronrod * half;
    (value, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

/// Integral of `f` over `[a, b]` to `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    integrate_with_floor(&f, a, b, opts, opts.abs_tol)
}

fn integrate_with_floor<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
    abs_floor: f64,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (value, error) = gk15(f, a, b);
    let mut segments = vec![Segment { a, b, value, error }];
    let mut evaluations = 15;
    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::Quadrature {
                estimate: total,
                error: err,
            });
        }
        if err <= abs_floor.max(opts.rel_tol * total.abs()) {
            return Ok(QuadResult {
                value: total,
                error: err,
                evaluations,
            });
        }
        if segments.len() >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: total,
                error: err,
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("nonempty");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval exhausted at machine resolution
            return Err(Error::Quadrature {
                estimate: total,
                error: err,
            });
        }
        let (v1, e1) = gk15(f, seg.a, mid);
        let (v2, e2) = gk15(f, mid, seg.b);
        evaluations += 30;
        segments.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        segments.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }
}

/// Integral of a nonnegative `f` over `[a, inf)`.
///
/// `tail_bound(x)` must bound `∫_x^∞ f`. Panels are `[a, a+w]`, then widths
/// `w, 2w, 4w, ...`; each panel is integrated adaptively, with an absolute
/// floor tied to the running total so negligible panels stay cheap.
pub fn integrate_to_infinity<F, T>(
    f: F,
    a: f64,
    first_width: f64,
    tail_bound: T,
    opts: &QuadOptions,
) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
    T: Fn(f64) -> f64,
{
    if !(first_width > 0.0) {
        return Err(Error::Domain("first panel width must be positive".into()));
    }
    let mut total: f64 = 0.0;
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut lo = a;
    let mut width = first_width;
    for _ in 0..opts.max_panels {
        let hi = lo + width;
        if !hi.is_finite() {
            break;
        }
        let floor = opts.abs_tol.max(0.1 * opts.rel_tol * total.abs());
        let panel = integrate_with_floor(&f, lo, hi, opts, floor)?;
        total += panel.value;
        error += panel.error;
        evaluations += panel.evaluations;
        let tail = tail_bound(hi);
        if tail <= opts.tail_rel * total.abs() || tail <= opts.abs_tol {
            return Ok(QuadResult {
                value: total,
                error: error + tail,
                evaluations,
            });
        }
        lo = hi;
        width *= 2.0;
    }
    Err(Error::Quadrature {
        estimate: total,
        error: error + tail_bound(lo),
    })
}
