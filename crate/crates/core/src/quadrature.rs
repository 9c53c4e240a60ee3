//! Adaptive Gauss–Kronrod (7/15) quadrature with interval bisection on
//! the worst local error estimate. Infinite limits are mapped onto a
//! finite interval before integration.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
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
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances for [`Quadrature::integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

/// Result of a converged integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub subdivisions: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = kronrod.abs();
    for (j, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let raw = ((kronrod - gauss) * half).abs();
    let res_abs = abs_sum * half.abs();
    // |K15 − G7| unscaled: pessimistic for smooth integrands, which only
    // costs extra bisections
    let error = raw.max(50.0 * f64::EPSILON * res_abs);
    Segment { a, b, value, error }
}

impl Quadrature {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Self {
        Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        }
    }

    /// Integrates `f` over `[a, b]`; either limit may be infinite.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<Integral> {
        if a == b {
            return Ok(Integral {
                value: 0.0,
                abs_error: 0.0,
                subdivisions: 0,
            });
        }
        if a > b {
            return self.integrate(f, b, a).map(|r| Integral {
                value: -r.value,
                ..r
            });
        }
        match (a.is_finite(), b.is_finite()) {
            (true, true) => self.integrate_finite(&f, a, b),
            (true, false) => {
                // x = a + t / (1 - t), t in [0, 1)
                let g = |t: f64| {
                    let s = 1.0 - t;
                    let v = f(a + t / s) / (s * s);
                    if v.is_finite() { v } else { 0.0 }
                };
                self.integrate_finite(&g, 0.0, 1.0)
            }
            (false, true) => {
                let g = |t: f64| {
                    let s = 1.0 - t;
                    let v = f(b - t / s) / (s * s);
                    if v.is_finite() { v } else { 0.0 }
                };
                self.integrate_finite(&g, 0.0, 1.0)
            }
            (false, false) => {
                // x = t / (1 - t^2), t in (-1, 1)
                let g = |t: f64| {
                    let s = 1.0 - t * t;
                    let v = f(t / s) * (1.0 + t * t) / (s * s);
                    if v.is_finite() { v } else { 0.0 }
                };
                self.integrate_finite(&g, -1.0, 1.0)
            }
        }
    }

    fn integrate_finite<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> Result<Integral> {
        let first = gauss_kronrod(f, a, b);
        let mut total = first.value;
        let mut total_err = first.error;
        let mut heap = BinaryHeap::new();
        heap.push(first);
        let mut subdivisions = 1;
        loop {
            if !total.is_finite() {
                return Err(Error::Quadrature {
                    value: total,
                    abs_error: total_err,
                });
            }
            if total_err <= self.abs_tol.max(self.rel_tol * total.abs()) {
                return Ok(Integral {
                    value: total,
                    abs_error: total_err,
                    subdivisions,
                });
            }
            if subdivisions >= self.max_subdivisions {
                return Err(Error::Quadrature {
                    value: total,
                    abs_error: total_err,
                });
            }
            let worst = heap.pop().expect("heap holds at least one segment");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // interval no longer splittable in floating point
                return if total_err <= 1e3 * self.abs_tol.max(self.rel_tol * total.abs()) {
                    Ok(Integral {
                        value: total,
                        abs_error: total_err,
                        subdivisions,
                    })
                } else {
                    Err(Error::Quadrature {
                        value: total,
                        abs_error: total_err,
                    })
                };
            }
            let left = gauss_kronrod(f, worst.a, mid);
            let right = gauss_kronrod(f, mid, worst.b);
            total += left.value + right.value - worst.value;
            total_err += left.error + right.error - worst.error;
            heap.push(left);
            heap.push(right);
            subdivisions += 1;
            if subdivisions % 64 == 0 {
                // resum to stop drift from the incremental updates
                total = heap.iter().map(|s| s.value).sum();
                total_err = heap.iter().map(|s| s.error).sum();
            }
        }
    }
}

/// Truncation of the normal-score axis used by [`normal_score_integral`].
pub const Z_LIMIT: f64 = 37.5;

/// `∫_a^b f dx` for a nonnegative integrand on `[a, b] ⊆ [0, 1]`, written in
/// normal scores: `g(z)` must return the integrand at `x = Φ(z)` already
/// multiplied by the density `ϕ(z)`. Returns `+inf` when mass is still
/// arriving at a truncated end or the integrand overflows.
pub fn normal_score_integral<G: Fn(f64) -> f64>(g: G, za: f64, zb: f64) -> Result<f64> {
    let za = za.max(-Z_LIMIT);
    let zb = zb.min(Z_LIMIT);
    if za >= zb {
        return Ok(0.0);
    }
    let mut edge = 0.0;
    if za == -Z_LIMIT {
        edge += g(za);
    }
    if zb == Z_LIMIT {
        edge += g(zb);
    }
    let safe = |z: f64| {
        let v = g(z);
        if v.is_nan() { 0.0 } else { v }
    };
    // unit panels near the bulk, so that mass confined to a few units of z
    // cannot slip between the nodes of one wide panel
    let mut cuts = vec![za];
    cuts.extend(SCORE_BREAKS.iter().copied().filter(|&c| za < c && c < zb));
    cuts.push(zb);
    let quad = Quadrature::default();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        match quad.integrate(safe, w[0], w[1]) {
            Ok(r) => total += r.value,
            Err(Error::Quadrature { value, .. }) if !value.is_finite() || value > 1e300 => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    if !total.is_finite() {
        return Ok(f64::INFINITY);
    }
    if edge <= 1e-10 * total.abs().max(f64::MIN_POSITIVE) || (edge.is_finite() && edge < 1e-200) {
        Ok(total)
    } else {
        Ok(f64::INFINITY)
    }
}

const SCORE_BREAKS: [f64; 23] = [
    -20.0, -10.0, -9.0, -8.0, -7.0, -6.0, -5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 20.0,
];

/// Integrates `f` over `[a, b]` with the default tolerances.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    Quadrature::default().integrate(f, a, b).map(|r| r.value)
}
