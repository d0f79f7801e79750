//! Globally adaptive Gauss-Kronrod (7/15) quadrature over an interval with
//! interior breakpoints and excised bands.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-3,
            abs_tol: 0.0,
            max_intervals: 4000,
        }
    }
}

/// Integral value with its estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Piece {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Splits `[a, b]` at `breakpoints` and removes the `excluded` bands.
pub fn partition(a: f64, b: f64, breakpoints: &[f64], excluded: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = vec![a, b];
    cuts.extend(breakpoints.iter().copied().filter(|&x| x > a && x < b));
    for &(lo, hi) in excluded {
        for x in [lo, hi] {
            if x > a && x < b {
                cuts.push(x);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .map(|w| (w[0], w[1]))
        .filter(|&(lo, hi)| {
            let mid = 0.5 * (lo + hi);
            hi > lo && !excluded.iter().any(|&(el, eh)| mid > el && mid < eh)
        })
        .collect()
}

/// Integrates `f` over `[a, b]` minus the `excluded` bands.
///
/// Breakpoints mark narrow features (resonances) so the first subdivision
/// already resolves them.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    excluded: &[(f64, f64)],
    opts: QuadratureOptions,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::InvalidArgument(format!("bad integration range [{a}, {b}]")));
    }
    let mut heap: BinaryHeap<Piece> = partition(a, b, breakpoints, excluded)
        .into_iter()
        .map(|(lo, hi)| gauss_kronrod(&f, lo, hi))
        .collect();
    let total = |heap: &BinaryHeap<Piece>| {
        heap.iter()
            .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error))
    };
    loop {
        let (value, error) = total(&heap);
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target || heap.is_empty() {
            return Ok(Estimate {
                value,
                error,
                intervals: heap.len(),
            });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::QuadratureNonConvergence {
                achieved: error / value.abs().max(f64::MIN_POSITIVE),
                requested: opts.rel_tol,
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(Piece { error: 0.0, ..worst });
            continue;
        }
        heap.push(gauss_kronrod(&f, worst.a, mid));
        heap.push(gauss_kronrod(&f, mid, worst.b));
    }
}
