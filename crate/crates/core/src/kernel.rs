//! The Coulomb interaction in integer dimension `d`.
//!
//! `phi(r)` is the radial profile of the free-space Green's function of
//! `-Δ` normalised so that `-Δ Φ = Ω_d δ`:
//!
//! ```text
//! phi_d(r) = r^(2-d) / (d-2)    d != 2
//! phi_2(r) = -ln r
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Spatial dimension of the gas, `d >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Dimension(u32);

impl Dimension {
    pub fn new(d: u32) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        Ok(Dimension(d))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    /// `d = 2` selects the logarithmic branch of the kernel.
    #[inline]
    pub fn is_log(self) -> bool {
        self.0 == 2
    }

    #[inline]
    pub(crate) fn as_real<T: Real>(self) -> T {
        T::int(i64::from(self.0))
    }

    #[inline]
    pub(crate) fn as_i32(self) -> i32 {
        self.0 as i32
    }
}

impl TryFrom<u32> for Dimension {
    type Error = Error;
    fn try_from(d: u32) -> Result<Self> {
        Dimension::new(d)
    }
}

impl From<Dimension> for u32 {
    fn from(d: Dimension) -> u32 {
        d.0
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `Γ(d/2)` by the half-integer recursion `Γ(x+1) = x Γ(x)` from
/// `Γ(1/2) = √π` and `Γ(1) = 1`.
pub fn half_gamma<T: Real>(d: Dimension) -> T {
    let d = d.get();
    let (mut g, mut x) = if d.is_multiple_of(2) {
        (T::one(), T::one())
    } else {
        (T::PI().sqrt(), T::lit(0.5))
    };
    let target = T::lit(f64::from(d) / 2.0);
    while x < target {
        g = g * x;
        x = x + T::one();
    }
    g
}

/// Surface area of the unit sphere `S^{d-1}`: `2 π^{d/2} / Γ(d/2)`.
pub fn omega<T: Real>(d: Dimension) -> T {
    let k = d.get();
    let mut pow = T::PI().powi((k / 2) as i32);
    if k % 2 == 1 {
        pow = pow * T::PI().sqrt();
    }
    T::int(2) * pow / half_gamma::<T>(d)
}

/// Coulomb kernel `φ_d` together with the sphere area `Ω_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoulombKernel<T> {
    pub d: Dimension,
    pub omega_d: T,
}

impl<T: Real> CoulombKernel<T> {
    pub fn new(d: Dimension) -> Self {
        CoulombKernel {
            d,
            omega_d: omega(d),
        }
    }

    fn check(r: T) -> Result<()> {
        if r > T::zero() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "Coulomb kernel evaluated at r = {r} (requires r > 0)"
            )))
        }
    }

    /// `φ_d(r)` for `r > 0`.
    pub fn phi(&self, r: T) -> Result<T> {
        Self::check(r)?;
        Ok(self.phi_unchecked(r))
    }

    /// `φ_d(r)` without the domain check; `r <= 0` yields inf/NaN for `d >= 2`.
    #[inline]
    pub fn phi_unchecked(&self, r: T) -> T {
        let d = self.d.as_i32();
        if d == 2 {
            -r.ln()
        } else {
            r.powi(2 - d) / T::int(i64::from(d - 2))
        }
    }

    /// `(φ', φ'', φ''') = (-r^{1-d}, (d-1) r^{-d}, d(1-d) r^{-d-1})` at `r > 0`.
    pub fn phi_derivatives(&self, r: T) -> Result<(T, T, T)> {
        Self::check(r)?;
        Ok(self.phi_derivatives_unchecked(r))
    }

    #[inline]
    pub fn phi_derivatives_unchecked(&self, r: T) -> (T, T, T) {
        let d = self.d.as_i32();
        let dr: T = self.d.as_real();
        let one = T::one();
        let first = -one / r.powi(d - 1);
        let second = (dr - one) / r.powi(d);
        let third = dr * (one - dr) / r.powi(d + 1);
        (first, second, third)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn k(d: u32) -> CoulombKernel<f64> {
        CoulombKernel::new(Dimension::new(d).unwrap())
    }

    #[test]
    fn phi_values() {
        assert_eq!(k(3).phi(2.0).unwrap(), 0.5);
        assert_eq!(k(2).phi(1.0).unwrap(), 0.0);
        assert_eq!(k(1).phi(3.0).unwrap(), -3.0);
    }

    #[test]
    fn phi_rejects_nonpositive_radius() {
        assert!(matches!(k(3).phi(0.0), Err(Error::Domain(_))));
        assert!(k(2).phi(-1.0).is_err());
        assert!(k(1).phi_derivatives(0.0).is_err());
    }

    #[test]
    fn phi_derivative_values() {
        assert_eq!(k(2).phi_derivatives(1.0).unwrap(), (-1.0, 1.0, -2.0));
        assert_eq!(k(1).phi_derivatives(5.0).unwrap(), (-1.0, 0.0, 0.0));
        let (a, b, c) = k(3).phi_derivatives(2.0).unwrap();
        assert_relative_eq!(a, -0.25);
        assert_relative_eq!(b, 0.25);
        assert_relative_eq!(c, -0.375);
    }

    #[test]
    fn phi_derivatives_match_central_differences() {
        for d in 1..=8 {
            let k = k(d);
            for &r in &[0.3, 0.9, 1.7, 4.0] {
                let h = 1e-5 * r;
                let (d1, d2, d3) = k.phi_derivatives(r).unwrap();
                let fd1 = (k.phi(r + h).unwrap() - k.phi(r - h).unwrap()) / (2.0 * h);
                let fd2 = (k.phi_derivatives(r + h).unwrap().0
                    - k.phi_derivatives(r - h).unwrap().0)
                    / (2.0 * h);
                let fd3 = (k.phi_derivatives(r + h).unwrap().1
                    - k.phi_derivatives(r - h).unwrap().1)
                    / (2.0 * h);
                let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs().max(1e-3);
                assert!(close(fd1, d1), "d={d} r={r}: {fd1} vs {d1}");
                assert!(close(fd2, d2), "d={d} r={r}: {fd2} vs {d2}");
                assert!(close(fd3, d3), "d={d} r={r}: {fd3} vs {d3}");
            }
        }
    }

    #[test]
    fn phi_is_radially_harmonic() {
        for d in 1..=10 {
            let k = k(d);
            for &r in &[0.05, 0.5, 1.0, 3.0, 20.0] {
                let (d1, d2, _) = k.phi_derivatives(r).unwrap();
                let lap = -d2 - (f64::from(d) - 1.0) / r * d1;
                assert!(lap.abs() <= 1e-12 * d2.abs().max(1.0), "d={d} r={r}: {lap}");
            }
        }
    }

    #[test]
    fn omega_low_dimensions() {
        let w = |d| omega::<f64>(Dimension::new(d).unwrap());
        assert_eq!(w(1), 2.0);
        assert_relative_eq!(w(2), 2.0 * std::f64::consts::PI, max_relative = 1e-15);
        assert_relative_eq!(w(3), 4.0 * std::f64::consts::PI, max_relative = 1e-15);
        assert_relative_eq!(
            w(4),
            2.0 * std::f64::consts::PI.powi(2),
            max_relative = 1e-15
        );
    }

    #[test]
    fn omega_times_gamma() {
        // Γ(n) = (n-1)!, Γ(n + 1/2) = (2n)! √π / (4^n n!)
        fn gamma_half(d: u32) -> f64 {
            let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
            if d.is_multiple_of(2) {
                fact(d / 2 - 1)
            } else {
                let n = (d - 1) / 2;
                fact(2 * n) * std::f64::consts::PI.sqrt() / (4f64.powi(n as i32) * fact(n))
            }
        }
        for d in 1..=10 {
            let dim = Dimension::new(d).unwrap();
            let lhs = omega::<f64>(dim) * gamma_half(d);
            let rhs = 2.0 * std::f64::consts::PI.powf(f64::from(d) / 2.0);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_precision_kernel() {
        let k = CoulombKernel::<f32>::new(Dimension::new(3).unwrap());
        assert_eq!(k.phi(2.0).unwrap(), 0.5f32);
        assert!((k.omega_d - 4.0 * std::f32::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(Dimension::new(0).is_err());
    }
}
