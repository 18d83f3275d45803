//! Excess free energy `F_d(R)` of the wall-constrained gas, its derivatives,
//! the right tail `H_d(R)`, and diagnostics of the transition at `R*`.
//!
//! In the pushed phase (`R < R*`)
//!
//! ```text
//! F_d(R) = ½ ∫_R^{R*} ( r^{d-1} v'(r)² - 2 v'(r) - φ_d'(r) ) dr
//! ```
//!
//! and `F_d ≡ 0` for `R >= R*`. `F_d` is C² at `R*` while the third
//! derivative jumps from a strictly negative left limit to zero.

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::critical_radius;
use crate::error::{Error, Result};
use crate::kernel::{CoulombKernel, Dimension};
use crate::potential::RadialPotential;
use crate::quadrature::{integrate, Tolerance};
use crate::scalar::Real;

fn rate_tol<T: Real>() -> Tolerance<T> {
    // The relative part keeps F accurate near R* where F ~ (R* - R)³.
    Tolerance::new(T::lit(1e-12), T::lit(1e-13))
}

fn check_radius<T: Real>(d: Dimension, wall: T) -> Result<()> {
    let ok = if d.get() == 1 {
        wall >= T::zero()
    } else {
        wall > T::zero()
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "wall radius {wall} not admissible in d = {d}"
        )))
    }
}

/// `F_d(R)` by adaptive quadrature; exactly zero for `R >= R*`.
pub fn excess_free_energy<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
) -> Result<T> {
    let r_star = critical_radius(pot, d)?;
    excess_free_energy_with(pot, d, wall, r_star)
}

pub(crate) fn excess_free_energy_with<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
    r_star: T,
) -> Result<T> {
    check_radius(d, wall)?;
    if wall >= r_star {
        return Ok(T::zero());
    }
    let k = CoulombKernel::new(d);
    let two = T::int(2);
    let integrand = |r: T| {
        let dv = pot.dv(r);
        let (dphi, _, _) = k.phi_derivatives_unchecked(r);
        r.powi(d.as_i32() - 1) * dv * dv - two * dv - dphi
    };
    let i = integrate(integrand, wall, r_star, rate_tol())?;
    Ok(i.value / two)
}

/// `F_d(R)` for `v = r²/2` in closed form (`R* = 1`).
///
/// `d = 2` uses its own logarithmic branch rather than a limit in `d`.
pub fn quadratic_closed_form<T: Real>(d: Dimension, wall: T) -> Result<T> {
    check_radius(d, wall)?;
    if wall >= T::one() {
        return Ok(T::zero());
    }
    let r = wall;
    if d.is_log() {
        let r2 = r * r;
        return Ok((T::int(4) * r2 - r2 * r2 - T::int(4) * r.ln() - T::int(3)) / T::int(8));
    }
    let k = d.as_i32();
    let dr: T = d.as_real();
    let two = T::int(2);
    let dm = dr - two;
    let dp = dr + two;
    Ok(r.powi(2 - k) / (two * dm) - r.powi(2 + k) / (two * dp)
        + (r * r * dm * dp - dr * dr) / (two * dm * dp))
}

/// `(F', F'', F''')` at a wall radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeTriple<T> {
    pub first: T,
    pub second: T,
    pub third: T,
    /// Set at `R = R*`, where the values are left limits and `F'''` jumps.
    pub third_discontinuous: bool,
}

fn pushed_derivatives<T: Real>(pot: &dyn RadialPotential<T>, d: Dimension, r: T) -> (T, T, T) {
    let k = CoulombKernel::new(d);
    let (p1, p2, p3) = k.phi_derivatives_unchecked(r);
    let (v1, v2, v3) = (pot.dv(r), pot.d2v(r), pot.d3v(r));
    let di = d.as_i32();
    let dr: T = d.as_real();
    let one = T::one();
    let two = T::int(2);
    let half = T::lit(0.5);
    let pw = |e: i32| if e == 0 { one } else { r.powi(e) };

    let first = half * p1 + v1 - half * pw(di - 1) * v1 * v1;
    let second = half * p2 + v2
        - if di == 1 {
            T::zero()
        } else {
            half * (dr - one) * pw(di - 2) * v1 * v1
        }
        - pw(di - 1) * v1 * v2;
    let c3 = (dr - one) * (dr - two);
    let third = half * p3 + v3
        - if c3 == T::zero() {
            T::zero()
        } else {
            half * c3 * pw(di - 3) * v1 * v1
        }
        - if di == 1 {
            T::zero()
        } else {
            two * (dr - one) * pw(di - 2) * v1 * v2
        }
        - pw(di - 1) * v2 * v2
        - pw(di - 1) * v1 * v3;
    (first, second, third)
}

/// Analytic derivatives of `F_d`: closed forms below `R*`, zero above, and
/// the flagged left limits at `R = R*`.
pub fn derivatives<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
) -> Result<DerivativeTriple<T>> {
    let r_star = critical_radius(pot, d)?;
    derivatives_with(pot, d, wall, r_star)
}

pub(crate) fn derivatives_with<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
    r_star: T,
) -> Result<DerivativeTriple<T>> {
    if !(wall > T::zero()) {
        return Err(Error::Domain(format!(
            "wall radius must be positive, got {wall}"
        )));
    }
    if wall > r_star {
        return Ok(DerivativeTriple {
            first: T::zero(),
            second: T::zero(),
            third: T::zero(),
            third_discontinuous: false,
        });
    }
    let (first, second, third) = pushed_derivatives(pot, d, wall);
    Ok(DerivativeTriple {
        first,
        second,
        third,
        third_discontinuous: wall == r_star,
    })
}

/// `lim_{R↑R*} F_d'''(R)`, the pushed-side third derivative evaluated at `R*`.
pub fn third_derivative_left_limit<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
) -> Result<T> {
    let r_star = critical_radius(pot, d)?;
    Ok(pushed_derivatives(pot, d, r_star).2)
}

/// Right tail `H_d(R) = ∫_{R*}^{R} (φ_d' + v') dr`, zero for `R <= R*`.
pub fn right_tail<T: Real>(pot: &dyn RadialPotential<T>, d: Dimension, wall: T) -> Result<T> {
    if !(wall > T::zero()) {
        return Err(Error::Domain(format!(
            "radius must be positive, got {wall}"
        )));
    }
    let r_star = critical_radius(pot, d)?;
    if wall <= r_star {
        return Ok(T::zero());
    }
    let k = CoulombKernel::new(d);
    Ok((k.phi_unchecked(wall) - k.phi_unchecked(r_star)) + (pot.v(wall) - pot.v(r_star)))
}

/// Tabulated `F_d` and its derivatives over a grid of wall radii.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFunctionReport<T> {
    pub d: Dimension,
    pub potential: String,
    pub r_star: T,
    pub grid: Vec<T>,
    pub f: Vec<T>,
    pub df: Vec<T>,
    pub d2f: Vec<T>,
    pub d3f: Vec<T>,
    pub third_left_limit: T,
    pub third_jump: T,
}

impl<T: Real> RateFunctionReport<T> {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Evaluate `F_d` and its analytic derivatives on `grid` (in parallel).
pub fn rate_report<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    grid: &[T],
) -> Result<RateFunctionReport<T>> {
    let r_star = critical_radius(pot, d)?;
    let rows: Vec<(T, DerivativeTriple<T>)> = grid
        .par_iter()
        .map(|&r| {
            let f = excess_free_energy_with(pot, d, r, r_star)?;
            let der = derivatives_with(pot, d, r, r_star)?;
            Ok((f, der))
        })
        .collect::<Result<_>>()?;
    let left = pushed_derivatives(pot, d, r_star).2;
    Ok(RateFunctionReport {
        d,
        potential: pot.label(),
        r_star,
        grid: grid.to_vec(),
        f: rows.iter().map(|r| r.0).collect(),
        df: rows.iter().map(|r| r.1.first).collect(),
        d2f: rows.iter().map(|r| r.1.second).collect(),
        d3f: rows.iter().map(|r| r.1.third).collect(),
        third_left_limit: left,
        third_jump: T::zero() - left,
    })
}

/// One-sided finite differences of `F_d` at `R*` for one step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow<T> {
    pub h: T,
    /// `F(R* - h) / h³`.
    pub cubic_ratio: T,
    /// Backward differences of orders 1..3 on `R*, R* - h, R* - 2h, R* - 3h`.
    pub left: [T; 3],
    /// Forward differences of orders 1..3 on `R*, R* + h, R* + 2h, R* + 3h`.
    pub right: [T; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionScan<T> {
    pub d: Dimension,
    pub potential: String,
    pub r_star: T,
    pub rows: Vec<ScanRow<T>>,
    pub third_left_limit: T,
    pub third_jump: T,
    /// `|third_left_limit| / 6`, the limit of `F(R* - h)/h³`.
    pub cubic_coefficient: T,
    /// Left third differences extrapolated to `h → 0`.
    pub extrapolated_left_third: T,
}

fn differences<T: Real>(f: [T; 4], h: T) -> [T; 3] {
    let three = T::int(3);
    let two = T::int(2);
    [
        (f[0] - f[1]) / h,
        (f[0] - two * f[1] + f[2]) / (h * h),
        (f[0] - three * f[1] + three * f[2] - f[3]) / (h * h * h),
    ]
}

/// Finite-difference scan of `F_d` across `R*` for each step in `h_values`.
///
/// Stencils are one-sided and never straddle `R*`.
pub fn transition_scan<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    h_values: &[T],
) -> Result<TransitionScan<T>> {
    if h_values.is_empty() || h_values.iter().any(|&h| !(h > T::zero())) {
        return Err(Error::Domain("step sizes must be positive".into()));
    }
    let r_star = critical_radius(pot, d)?;
    let rows = h_values
        .par_iter()
        .map(|&h| {
            let at = |s: T| excess_free_energy_with(pot, d, s, r_star);
            let mut lf = [T::zero(); 4];
            let mut rf = [T::zero(); 4];
            for k in 0..4 {
                let off = h * T::int(k as i64);
                lf[k] = at(r_star - off)?;
                rf[k] = at(r_star + off)?;
            }
            // forward differences are backward differences with odd orders negated
            let fwd = differences(rf, h);
            let right = [-fwd[0], fwd[1], -fwd[2]];
            Ok(ScanRow {
                h,
                cubic_ratio: lf[1] / (h * h * h),
                left: differences(lf, h),
                right,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let left = pushed_derivatives(pot, d, r_star).2;
    let hs: Vec<T> = rows.iter().map(|r| r.h).collect();
    let lefts: Vec<T> = rows.iter().map(|r| r.left[2]).collect();
    Ok(TransitionScan {
        d,
        potential: pot.label(),
        r_star,
        third_left_limit: left,
        third_jump: T::zero() - left,
        cubic_coefficient: left.abs() / T::int(6),
        extrapolated_left_third: richardson_to_zero(&hs, &lefts),
        rows,
    })
}

/// Polynomial (Neville) extrapolation of samples `(h_i, y_i)` to `h = 0`.
pub fn richardson_to_zero<T: Real>(hs: &[T], ys: &[T]) -> T {
    assert_eq!(hs.len(), ys.len());
    let mut p = ys.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (hs[i + m] * p[i] - hs[i] * p[i + 1]) / (hs[i + m] - hs[i]);
        }
    }
    p[0]
}
