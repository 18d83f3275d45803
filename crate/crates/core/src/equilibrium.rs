//! Critical radius, wall-constrained equilibrium measures and their
//! electrostatic certification.
//!
//! For a wall at radius `R` the minimiser keeps the unconstrained radial
//! density `m(r) = (r^{d-1} v'(r))'` inside the ball and parks the charge
//! that no longer fits, `1 - R^{d-1} v'(R)`, on the sphere `|x| = R`. Once
//! `R >= R*` the wall is inactive and the atom vanishes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{CoulombKernel, Dimension};
use crate::potential::RadialPotential;
use crate::quadrature::{integrate, Tolerance};
use crate::scalar::Real;

const BRACKET_LO: f64 = 1e-9;
const BRACKET_HI: f64 = 1e9;

/// Default absolute tolerance for the radial integrals in this module.
pub const QUAD_TOL: f64 = 1e-10;

fn quad_tol<T: Real>() -> Tolerance<T> {
    Tolerance::new(T::lit(QUAD_TOL * 1e-2), T::lit(1e-13))
}

/// Unique root `R*` of `r^{d-1} v'(r) = 1`.
///
/// Brackets by doubling/halving from `r = 1`, then polishes with a
/// bisection-safeguarded Newton iteration (the derivative of the flux is
/// the bulk density).
pub fn critical_radius<T: Real>(pot: &dyn RadialPotential<T>, d: Dimension) -> Result<T> {
    let g = |r: T| pot.flux(d, r) - T::one();
    let tol = T::lit(1e-12).max(T::int(8) * T::epsilon());
    let two = T::int(2);
    let (lo_cap, hi_cap) = (T::lit(BRACKET_LO), T::lit(BRACKET_HI));
    let unsolvable = Error::Unsolvable {
        lo: BRACKET_LO,
        hi: BRACKET_HI,
    };

    let mut r = T::one();
    let g1 = g(r);
    if g1 == T::zero() {
        return Ok(r);
    }
    let (mut lo, mut hi) = if g1 < T::zero() {
        let mut hi = r;
        loop {
            let next = hi * two;
            if next > hi_cap || !g(next).is_finite() {
                return Err(unsolvable);
            }
            if g(next) > T::zero() {
                break (hi, next);
            }
            hi = next;
        }
    } else {
        let mut lo = r;
        loop {
            let next = lo / two;
            if next < lo_cap {
                return Err(unsolvable);
            }
            if g(next) < T::zero() {
                break (next, lo);
            }
            lo = next;
        }
    };

    r = T::lit(0.5) * (lo + hi);
    for _ in 0..300 {
        let gr = g(r);
        if gr.abs() <= tol {
            return Ok(r);
        }
        if gr < T::zero() {
            lo = r;
        } else {
            hi = r;
        }
        let slope = pot.flux_derivative(d, r);
        let newton = r - gr / slope;
        r = if slope > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            T::lit(0.5) * (lo + hi)
        };
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    // Bracket collapsed to machine width; |g| is as small as representable.
    Ok(r)
}

/// Radial law of the constrained equilibrium measure.
///
/// Bulk density `m(r)` on `(0, edge]` with `edge = min(R, R*)`, plus an atom
/// of weight `surface_weight` at `|x| = R`.
#[derive(Clone, Copy)]
pub struct ConstrainedMeasure<'a, T: Real> {
    pub d: Dimension,
    /// Wall radius `R`.
    pub wall: T,
    pub r_star: T,
    pub surface_weight: T,
    pub pot: &'a dyn RadialPotential<T>,
}

impl<T: Real> std::fmt::Debug for ConstrainedMeasure<'_, T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConstrainedMeasure")
            .field("d", &self.d)
            .field("wall", &self.wall)
            .field("r_star", &self.r_star)
            .field("surface_weight", &self.surface_weight)
            .field("pot", &self.pot.label())
            .finish()
    }
}

pub fn constrained_measure<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
) -> Result<ConstrainedMeasure<'_, T>> {
    let r_star = critical_radius(pot, d)?;
    measure_with_critical_radius(pot, d, wall, r_star)
}

pub(crate) fn measure_with_critical_radius<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
    r_star: T,
) -> Result<ConstrainedMeasure<'_, T>> {
    if !(wall > T::zero()) {
        return Err(Error::Domain(format!(
            "wall radius must be positive, got {wall}"
        )));
    }
    let surface_weight = if wall >= r_star {
        T::zero()
    } else {
        (T::one() - pot.flux(d, wall)).max(T::zero())
    };
    Ok(ConstrainedMeasure {
        d,
        wall,
        r_star,
        surface_weight,
        pot,
    })
}

impl<'a, T: Real> ConstrainedMeasure<'a, T> {
    /// Outer edge of the bulk, `min(R, R*)`.
    pub fn edge(&self) -> T {
        self.wall.min(self.r_star)
    }

    pub fn is_pushed(&self) -> bool {
        self.wall < self.r_star
    }

    fn kernel(&self) -> CoulombKernel<T> {
        CoulombKernel::new(self.d)
    }

    /// Bulk density `m(r)` per unit radius; zero outside `(0, edge]`.
    pub fn bulk_density(&self, r: T) -> T {
        if r <= T::zero() || r > self.edge() {
            T::zero()
        } else {
            self.pot.flux_derivative(self.d, r)
        }
    }

    /// Bulk mass inside radius `r` by the closed form `r^{d-1} v'(r)`.
    pub fn bulk_mass(&self, r: T) -> T {
        if r <= T::zero() {
            T::zero()
        } else {
            self.pot.flux(self.d, r.min(self.edge()))
        }
    }

    /// Total mass inside the closed ball of radius `r`.
    pub fn radial_cdf(&self, r: T) -> T {
        let atom = if r >= self.wall {
            self.surface_weight
        } else {
            T::zero()
        };
        self.bulk_mass(r) + atom
    }

    /// Total energy density `ε_d(x, R)` at `|x| = x_radius` by radial
    /// quadrature of the shell formula.
    ///
    /// At `x = 0` the term `φ_d(|x|) · ∫₀^{|x|} m` is taken at its limit 0.
    pub fn energy_density(&self, x_radius: T) -> Result<T> {
        if x_radius < T::zero() {
            return Err(Error::Domain(format!(
                "radius must be non-negative, got {x_radius}"
            )));
        }
        let k = self.kernel();
        let x = x_radius;
        let edge = self.edge();
        let enclosed = if x > T::zero() {
            k.phi_unchecked(x) * self.bulk_mass(x)
        } else {
            T::zero()
        };
        let outer = if x < edge {
            integrate(
                |r: T| {
                    if r <= T::zero() {
                        T::zero()
                    } else {
                        k.phi_unchecked(r) * self.pot.flux_derivative(self.d, r)
                    }
                },
                x,
                edge,
                quad_tol(),
            )?
            .value
        } else {
            T::zero()
        };
        let atom = if self.surface_weight != T::zero() {
            self.surface_weight * k.phi_unchecked(x.max(self.wall))
        } else {
            T::zero()
        };
        Ok(self.pot.v(x) + enclosed + outer + atom)
    }

    /// Check the electrostatic equilibrium conditions on probe radii.
    ///
    /// `probes` radii spread over `[0, R]` must sit at the level
    /// `C_R = φ_d(R) + v(R)`. With an inactive wall (`R >= R*`) another
    /// `probes` radii in `(R, 3R*]` must not fall below it.
    pub fn certify(&self, probes: usize, tol: T) -> Result<EquilibriumCertificate> {
        if probes < 8 {
            return Err(Error::Domain(format!(
                "need at least 8 probes, got {probes}"
            )));
        }
        let k = self.kernel();
        let wall = self.wall;
        let level = k.phi(wall)? + self.pot.v(wall);
        let n = T::int((probes - 1) as i64);
        let mut max_dev = T::zero();
        for i in 0..probes {
            let x = wall * T::int(i as i64) / n;
            let dev = (self.energy_density(x)? - level).abs();
            max_dev = max_dev.max(dev);
        }
        // Outside the support but inside the admissible ball. When the gas is
        // pushed the support fills the ball and there is nothing to probe.
        let far = T::int(3) * self.r_star;
        let mut min_margin = T::infinity();
        if !self.is_pushed() && far > wall {
            for i in 1..=probes {
                let x = wall + (far - wall) * T::int(i as i64) / T::int(probes as i64);
                min_margin = min_margin.min(self.energy_density(x)? - level);
            }
        }
        let passed = max_dev <= tol && min_margin >= -tol;
        Ok(EquilibriumCertificate {
            c_r: level.as_f64(),
            max_dev_inside: max_dev.as_f64(),
            min_margin_outside: min_margin.as_f64(),
            probe_count: 2 * probes,
            tolerance: tol.as_f64(),
            passed,
        })
    }
}

/// Outcome of probing `ε_d(x, R)` against the level `C_R = φ_d(R) + v(R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquilibriumCertificate {
    pub c_r: f64,
    pub max_dev_inside: f64,
    pub min_margin_outside: f64,
    pub probe_count: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// `ε_d(x, R)` for the equilibrium measure constrained to radius `R <= R*`.
pub fn energy_density<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
    x_radius: T,
) -> Result<T> {
    constrained_measure(pot, d, wall)?.energy_density(x_radius)
}

pub fn certify_equilibrium<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
    probes: usize,
    tol: T,
) -> Result<EquilibriumCertificate> {
    let m = constrained_measure(pot, d, wall)?;
    if wall > m.r_star {
        return Err(Error::Domain(format!(
            "certification needs R <= R* = {} (got {wall})",
            m.r_star
        )));
    }
    m.certify(probes, tol)
}

/// Minimum of the mean-field functional over measures on the ball of radius `R`:
/// `½ φ_d(R) + v(R) - ½ ∫₀^R r^{d-1} v'(r)² dr`.
///
/// Walls beyond `R*` are inactive, so the value there is the unconstrained minimum.
pub fn mean_field_energy<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
) -> Result<T> {
    let r_star = critical_radius(pot, d)?;
    mean_field_energy_with(pot, d, wall, r_star)
}

pub(crate) fn mean_field_energy_with<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
    r_star: T,
) -> Result<T> {
    if !(wall > T::zero()) {
        return Err(Error::Domain(format!(
            "wall radius must be positive, got {wall}"
        )));
    }
    let r = wall.min(r_star);
    let k = CoulombKernel::new(d);
    let half = T::lit(0.5);
    let tail = integrate(
        |s: T| {
            let dv = pot.dv(s);
            s.powi(d.as_i32() - 1) * dv * dv
        },
        T::zero(),
        r,
        quad_tol(),
    )?;
    Ok(half * k.phi(r)? + pot.v(r) - half * tail.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{FnPotential, Linear, Quadratic, Quartic};

    fn dim(d: u32) -> Dimension {
        Dimension::new(d).unwrap()
    }

    #[test]
    fn critical_radius_examples() {
        for d in 1..=6 {
            assert_eq!(critical_radius::<f64>(&Quadratic, dim(d)).unwrap(), 1.0);
        }
        assert_eq!(critical_radius::<f64>(&Quartic, dim(1)).unwrap(), 1.0);
        let r = critical_radius::<f64>(&Linear { a: 2.0 }, dim(3)).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((2.0 * r * r - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn critical_radius_residual_small() {
        let pots: Vec<Box<dyn RadialPotential<f64>>> = vec![
            Box::new(Quartic),
            Box::new(Linear { a: 0.37 }),
            Box::new(FnPotential::new(
                "exp",
                |r: f64| r.exp(),
                f64::exp,
                f64::exp,
                f64::exp,
            )),
        ];
        for p in &pots {
            for d in 2..=5 {
                let r = critical_radius(p.as_ref(), dim(d)).unwrap();
                assert!(
                    (p.flux(dim(d), r) - 1.0).abs() <= 1e-12,
                    "{} d={d}",
                    p.label()
                );
            }
        }
    }

    #[test]
    fn critical_radius_without_root() {
        // flux is the constant 2 in d = 1 and never reaches 1
        let p = FnPotential::<f64>::new("flat", |r| 2.0 * r, |_| 2.0, |_| 0.0, |_| 0.0);
        assert!(matches!(
            critical_radius(&p, dim(1)),
            Err(Error::Unsolvable { .. })
        ));
        let p = FnPotential::<f64>::new("weak", |r| 1e-12 * r, |_| 1e-12, |_| 0.0, |_| 0.0);
        assert!(matches!(
            critical_radius(&p, dim(2)),
            Err(Error::Unsolvable { .. })
        ));
    }

    #[test]
    fn constrained_measure_examples() {
        let m = constrained_measure::<f64>(&Quadratic, dim(3), 0.5).unwrap();
        assert!((m.surface_weight - 0.875).abs() < 1e-15);
        assert!((m.bulk_density(0.3) - 3.0 * 0.09).abs() < 1e-15);

        let m = constrained_measure::<f64>(&Quadratic, dim(2), 1.0).unwrap();
        assert_eq!(m.surface_weight, 0.0);
        assert!((m.bulk_density(0.4) - 0.8).abs() < 1e-15);

        let m = constrained_measure::<f64>(&Quadratic, dim(2), 0.5).unwrap();
        assert!((m.surface_weight - 0.75).abs() < 1e-15);
        assert!(constrained_measure::<f64>(&Quadratic, dim(2), 0.0).is_err());
    }

    #[test]
    fn cdf_examples() {
        let m = constrained_measure::<f64>(&Quadratic, dim(2), 0.5).unwrap();
        assert!((m.radial_cdf(0.25) - 0.0625).abs() < 1e-15);
        assert_eq!(m.radial_cdf(0.0), 0.0);
        assert!((m.radial_cdf(0.5) - 1.0).abs() < 1e-15);
        assert!((m.radial_cdf(7.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mass_conservation_against_quadrature() {
        let pots: [&dyn RadialPotential<f64>; 3] = [&Quadratic, &Quartic, &Linear { a: 1.5 }];
        for pot in pots {
            for d in [1u32, 2, 3, 5] {
                if pot.label().starts_with("linear") && d == 1 {
                    continue; // flux constant in d = 1, outside the assumptions
                }
                let r_star = critical_radius(pot, dim(d)).unwrap();
                for wall in [0.1, 0.5, r_star, 2.0 * r_star] {
                    let m = constrained_measure(pot, dim(d), wall).unwrap();
                    let bulk = integrate(
                        |r| m.bulk_density(r),
                        0.0,
                        m.edge(),
                        Tolerance::absolute(1e-13),
                    )
                    .unwrap()
                    .value;
                    let total = bulk + m.surface_weight;
                    assert!(
                        (total - 1.0).abs() <= 1e-10,
                        "{} d={d} R={wall}: {total}",
                        pot.label()
                    );
                    assert!((m.radial_cdf(m.edge()) - 1.0).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn atom_vanishes_continuously() {
        for pot in [&Quadratic as &dyn RadialPotential<f64>, &Quartic] {
            for d in [1u32, 2, 3, 5] {
                let r_star = critical_radius(pot, dim(d)).unwrap();
                for s in [1.0 - 1e-9, 1.0 + 1e-9] {
                    let m = constrained_measure(pot, dim(d), r_star * s).unwrap();
                    assert!(m.surface_weight <= 1e-8 && m.surface_weight >= 0.0);
                }
            }
        }
    }

    #[test]
    fn bulk_matches_flux_differences() {
        for d in [1u32, 2, 3, 5] {
            let m = constrained_measure::<f64>(&Quartic, dim(d), 0.9).unwrap();
            for &r in &[0.2, 0.5, 0.8] {
                let h = 1e-5 * r;
                let fd = (Quartic.flux(dim(d), r + h) - Quartic.flux(dim(d), r - h)) / (2.0 * h);
                assert!((fd - m.bulk_density(r)).abs() <= 1e-6 * fd.abs());
            }
        }
    }

    #[test]
    fn energy_density_examples() {
        let e = energy_density::<f64>(&Quadratic, dim(3), 0.5, 0.2).unwrap();
        assert!((e - 2.125).abs() < 1e-10, "{e}");
        let e = energy_density::<f64>(&Quadratic, dim(2), 1.0, 1.0).unwrap();
        assert!((e - 0.5).abs() < 1e-10, "{e}");
        // pushed: the field outside the wall points outward, so ε drops there
        let e = energy_density::<f64>(&Quadratic, dim(3), 0.5, 0.8).unwrap();
        assert!((e - (0.32 + 1.25)).abs() < 1e-12, "{e}");
        assert!(e < 2.125);
        // unconstrained: ε rises outside the support
        let e = energy_density::<f64>(&Quadratic, dim(3), 1.0, 1.5).unwrap();
        assert!(e > 1.5 + 1e-6, "{e}");
        let e0 = energy_density::<f64>(&Quadratic, dim(3), 0.5, 0.0).unwrap();
        assert!((e0 - 2.125).abs() < 1e-10, "{e0}");
        assert!(energy_density::<f64>(&Quadratic, dim(3), 0.5, -0.1).is_err());
    }

    // Oracle for the shell formula: brute-force angular average of the
    // d = 3 kernel over a sphere, ∫ φ₃(|x - rω|) dω / 4π = φ₃(max(|x|, r)).
    #[test]
    fn shell_average_matches_max_rule() {
        for &(x, r) in &[(0.3f64, 0.7f64), (0.9, 0.2), (0.5, 0.5001)] {
            let avg = integrate(
                |c: f64| 0.5 / (x * x + r * r - 2.0 * x * r * c).sqrt(),
                -1.0,
                1.0,
                Tolerance::absolute(1e-12),
            )
            .unwrap()
            .value;
            assert!((avg - 1.0 / x.max(r)).abs() < 1e-8, "x={x} r={r} avg={avg}");
        }
    }

    #[test]
    fn certificates() {
        let c = certify_equilibrium::<f64>(&Quadratic, dim(2), 0.5, 32, 1e-8).unwrap();
        assert!(c.passed && c.max_dev_inside <= 1e-8, "{c:?}");
        let c = certify_equilibrium::<f64>(&Quadratic, dim(1), 1.0, 32, 1e-8).unwrap();
        assert!(c.passed, "{c:?}");

        let mut m = constrained_measure::<f64>(&Quadratic, dim(2), 0.5).unwrap();
        m.surface_weight = 0.0;
        let c = m.certify(32, 1e-8).unwrap();
        assert!(!c.passed);
        assert!(c.max_dev_inside > 1e-3);

        assert!(certify_equilibrium::<f64>(&Quadratic, dim(2), 0.5, 4, 1e-8).is_err());
        assert!(certify_equilibrium::<f64>(&Quadratic, dim(2), 1.5, 32, 1e-8).is_err());
    }

    #[test]
    fn certificates_across_potentials() {
        for pot in [
            &Quadratic as &dyn RadialPotential<f64>,
            &Quartic,
            &Linear { a: 2.0 },
        ] {
            for d in [2u32, 3, 5] {
                let r_star = critical_radius(pot, dim(d)).unwrap();
                for wall in [0.1, 0.5, r_star] {
                    if wall > r_star {
                        continue;
                    }
                    let c = certify_equilibrium(pot, dim(d), wall, 16, 1e-7).unwrap();
                    assert!(c.passed, "{} d={d} R={wall}: {c:?}", pot.label());
                }
            }
        }
    }

    #[test]
    fn mean_field_energy_examples() {
        let e = mean_field_energy::<f64>(&Quadratic, dim(3), 1.0).unwrap();
        assert!((e - 0.9).abs() < 1e-10);
        let e = mean_field_energy::<f64>(&Quadratic, dim(2), 1.0).unwrap();
        assert!((e - 0.375).abs() < 1e-10);
        let e = mean_field_energy::<f64>(&Quadratic, dim(3), 0.5).unwrap();
        assert!((e - 1.121875).abs() < 1e-10, "{e}");
        let beyond = mean_field_energy::<f64>(&Quadratic, dim(3), 3.0).unwrap();
        assert!((beyond - 0.9).abs() < 1e-10);
    }
}
