//! Globally adaptive 15-point Gauss–Kronrod quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

// Kronrod abscissae (non-negative half) and weights; odd indices are the
// 7-point Gauss nodes.
#[allow(clippy::excessive_precision)]
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

#[allow(clippy::excessive_precision)]
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

#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 2000;

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance<T> {
    pub abs: T,
    pub rel: T,
}

impl<T: Real> Tolerance<T> {
    pub fn absolute(abs: T) -> Self {
        Tolerance {
            abs,
            rel: T::zero(),
        }
    }

    pub fn new(abs: T, rel: T) -> Self {
        Tolerance { abs, rel }
    }
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// Single G7K15 panel: `(kronrod, error, roundoff floor)`.
fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut res_k = fc * T::lit(WGK[7]);
    let mut res_g = fc * T::lit(WG[3]);
    let mut res_abs = res_k.abs();
    let mut fv = [(T::zero(), T::zero()); 7];
    for j in 0..7 {
        let x = half_len * T::lit(XGK[j]);
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv[j] = (f1, f2);
        let w = T::lit(WGK[j]);
        res_k = res_k + w * (f1 + f2);
        res_abs = res_abs + w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g = res_g + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = res_k * half;
    let mut res_asc = T::lit(WGK[7]) * (fc - mean).abs();
    for (j, &(f1, f2)) in fv.iter().enumerate() {
        res_asc = res_asc + T::lit(WGK[j]) * ((f1 - mean).abs() + (f2 - mean).abs());
    }
    let scale = half_len.abs();
    let result = res_k * half_len;
    res_abs = res_abs * scale;
    res_asc = res_asc * scale;
    let mut err = ((res_k - res_g) * half_len).abs();
    if res_asc != T::zero() && err != T::zero() {
        let s = (T::int(200) * err / res_asc).powf(T::lit(1.5));
        err = if s < T::one() { res_asc * s } else { res_asc };
    }
    let floor = T::int(50) * T::epsilon() * res_abs;
    if floor > err {
        err = floor;
    }
    (result, err, floor)
}

/// Adaptively integrate `f` over `[a, b]`.
///
/// Converges once the summed error estimate is below
/// `max(tol.abs, tol.rel · |I|)`, or when it is dominated by roundoff.
pub fn integrate<T: Real, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    tol: Tolerance<T>,
) -> Result<Integral<T>> {
    if a == b {
        return Ok(Integral {
            value: T::zero(),
            error: T::zero(),
            intervals: 0,
        });
    }
    let (v, e, floor) = gk15(&f, a, b);
    if !v.is_finite() {
        return Err(Error::Quadrature {
            achieved: f64::INFINITY,
            requested: tol.abs.as_f64(),
        });
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
    });
    let mut total = v;
    let mut total_err = e;
    let mut round_floor = floor;

    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if total_err <= target || total_err <= round_floor * T::int(2) {
            break;
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::Quadrature {
                achieved: total_err.as_f64(),
                requested: target.as_f64(),
            });
        }
        let seg = heap.pop().expect("heap never empty");
        let mid = T::lit(0.5) * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval cannot be split further in this precision
            return Err(Error::Quadrature {
                achieved: total_err.as_f64(),
                requested: target.as_f64(),
            });
        }
        let (v1, e1, f1) = gk15(&f, seg.a, mid);
        let (v2, e2, f2) = gk15(&f, mid, seg.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Quadrature {
                achieved: f64::INFINITY,
                requested: target.as_f64(),
            });
        }
        total = total - seg.value + v1 + v2;
        total_err = total_err - seg.error + e1 + e2;
        round_floor = round_floor + f1 + f2;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: v2,
            error: e2,
        });
    }

    // Re-sum to shed accumulated cancellation in the running totals.
    let (value, error) = heap.iter().fold((T::zero(), T::zero()), |(v, e), s| {
        (v + s.value, e + s.error)
    });
    Ok(Integral {
        value,
        error,
        intervals: heap.len(),
    })
}
