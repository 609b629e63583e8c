//! Globally adaptive Gauss–Kronrod (7/15 point) integration.

#![allow(clippy::excessive_precision)]

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

/// Gauss weights for the odd-indexed Kronrod nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    abs: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err.total_cmp(&o.err).is_eq() && self.a.total_cmp(&o.a).is_eq()
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err).then(o.a.total_cmp(&self.a))
    }
}

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for j in 0..7 {
        let (f1, f2) = (f(c - h * XGK[j]), f(c + h * XGK[j]));
        k += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            g += WG[j / 2] * (f1 + f2);
        }
    }
    Piece {
        a,
        b,
        value: k * h,
        err: ((k - g) * h).abs(),
        abs: abs * h.abs(),
    }
}

/// Settings for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub rel_tol: f64,
    /// Equal pieces the range is cut into before adapting.
    pub initial_pieces: usize,
    pub max_pieces: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            rel_tol: 1e-10,
            initial_pieces: 64,
            max_pieces: 4000,
        }
    }
}

impl Quadrature {
    /// `∫_a^b f`. Stops once the summed error estimate is within `rel_tol`
    /// of the result, or within the rounding floor `50·ε·∫|f|` when the
    /// result is dominated by cancellation.
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!("integration range [{a}, {b}]")));
        }
        let n = self.initial_pieces.max(1);
        let width = (b - a) / n as f64;
        let mut heap: BinaryHeap<Piece> = (0..n)
            .map(|i| {
                let lo = a + width * i as f64;
                let hi = if i + 1 == n { b } else { a + width * (i + 1) as f64 };
                gk15(&f, lo, hi)
            })
            .collect();
        loop {
            let (value, err, abs) = heap
                .iter()
                .fold((0.0, 0.0, 0.0), |(v, e, s), p| (v + p.value, e + p.err, s + p.abs));
            if !value.is_finite() || !err.is_finite() {
                return Err(Error::NonFinite("quadrature integrand"));
            }
            let tol = (self.rel_tol * value.abs()).max(50.0 * f64::EPSILON * abs);
            if err <= tol {
                return Ok(value);
            }
            if heap.len() >= self.max_pieces {
                return Err(Error::Quadrature {
                    residual: err,
                    intervals: heap.len(),
                });
            }
            let worst = heap.pop().expect("non-empty");
            let mid = 0.5 * (worst.a + worst.b);
            heap.push(gk15(&f, worst.a, mid));
            heap.push(gk15(&f, mid, worst.b));
        }
    }
}
