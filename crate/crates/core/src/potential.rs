//! Radial confining potentials `V(x) = v(|x|)` and checks of the standing
//! assumptions on them.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{CoulombKernel, Dimension};
use crate::scalar::Real;

/// A radial potential with closed-form derivatives up to third order.
pub trait RadialPotential<T: Real>: Send + Sync {
    fn v(&self, r: T) -> T;
    fn dv(&self, r: T) -> T;
    fn d2v(&self, r: T) -> T;
    fn d3v(&self, r: T) -> T;
    fn label(&self) -> String;

    /// Enclosed equilibrium charge `r^{d-1} v'(r)` (Gauss's law).
    fn flux(&self, d: Dimension, r: T) -> T {
        r.powi(d.as_i32() - 1) * self.dv(r)
    }

    /// Radial bulk density `(r^{d-1} v'(r))'`.
    fn flux_derivative(&self, d: Dimension, r: T) -> T {
        let k = d.as_i32();
        let dm1 = T::int(i64::from(k - 1));
        let lead = if k == 1 {
            T::zero()
        } else {
            dm1 * r.powi(k - 2) * self.dv(r)
        };
        lead + r.powi(k - 1) * self.d2v(r)
    }
}

impl<T: Real, P: RadialPotential<T> + ?Sized> RadialPotential<T> for Arc<P> {
    fn v(&self, r: T) -> T {
        (**self).v(r)
    }
    fn dv(&self, r: T) -> T {
        (**self).dv(r)
    }
    fn d2v(&self, r: T) -> T {
        (**self).d2v(r)
    }
    fn d3v(&self, r: T) -> T {
        (**self).d3v(r)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

impl<T: Real, P: RadialPotential<T> + ?Sized> RadialPotential<T> for Box<P> {
    fn v(&self, r: T) -> T {
        (**self).v(r)
    }
    fn dv(&self, r: T) -> T {
        (**self).dv(r)
    }
    fn d2v(&self, r: T) -> T {
        (**self).d2v(r)
    }
    fn d3v(&self, r: T) -> T {
        (**self).d3v(r)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// `v(r) = r²/2`, the jellium / Ginibre confinement.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Quadratic;

impl<T: Real> RadialPotential<T> for Quadratic {
    fn v(&self, r: T) -> T {
        r * r / T::int(2)
    }
    fn dv(&self, r: T) -> T {
        r
    }
    fn d2v(&self, _r: T) -> T {
        T::one()
    }
    fn d3v(&self, _r: T) -> T {
        T::zero()
    }
    fn label(&self) -> String {
        "quadratic".into()
    }
}

/// `v(r) = r⁴/4`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Quartic;

impl<T: Real> RadialPotential<T> for Quartic {
    fn v(&self, r: T) -> T {
        r.powi(4) / T::int(4)
    }
    fn dv(&self, r: T) -> T {
        r.powi(3)
    }
    fn d2v(&self, r: T) -> T {
        T::int(3) * r * r
    }
    fn d3v(&self, r: T) -> T {
        T::int(6) * r
    }
    fn label(&self) -> String {
        "quartic".into()
    }
}

/// `v(r) = a r` with `a > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear<T> {
    pub a: T,
}

impl<T: Real> RadialPotential<T> for Linear<T> {
    fn v(&self, r: T) -> T {
        self.a * r
    }
    fn dv(&self, _r: T) -> T {
        self.a
    }
    fn d2v(&self, _r: T) -> T {
        T::zero()
    }
    fn d3v(&self, _r: T) -> T {
        T::zero()
    }
    fn label(&self) -> String {
        format!("linear-a:{}", self.a)
    }
}

type RealFn<T> = Box<dyn Fn(T) -> T + Send + Sync>;

/// Potential assembled from closures, the entry point for custom potentials.
pub struct FnPotential<T> {
    label: String,
    v: RealFn<T>,
    dv: RealFn<T>,
    d2v: RealFn<T>,
    d3v: RealFn<T>,
}

impl<T: Real> FnPotential<T> {
    pub fn new(
        label: impl Into<String>,
        v: impl Fn(T) -> T + Send + Sync + 'static,
        dv: impl Fn(T) -> T + Send + Sync + 'static,
        d2v: impl Fn(T) -> T + Send + Sync + 'static,
        d3v: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        FnPotential {
            label: label.into(),
            v: Box::new(v),
            dv: Box::new(dv),
            d2v: Box::new(d2v),
            d3v: Box::new(d3v),
        }
    }
}

impl<T> fmt::Debug for FnPotential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPotential")
            .field("label", &self.label)
            .finish()
    }
}

impl<T: Real> RadialPotential<T> for FnPotential<T> {
    fn v(&self, r: T) -> T {
        (self.v)(r)
    }
    fn dv(&self, r: T) -> T {
        (self.dv)(r)
    }
    fn d2v(&self, r: T) -> T {
        (self.d2v)(r)
    }
    fn d3v(&self, r: T) -> T {
        (self.d3v)(r)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Look up a built-in potential by id: `quadratic`, `quartic`, `linear-a[:a]`.
pub fn builtin<T: Real>(id: &str) -> Result<Arc<dyn RadialPotential<T>>> {
    let (name, param) = match id.split_once(':') {
        Some((n, p)) => (n.trim(), Some(p.trim())),
        None => (id.trim(), None),
    };
    match (name, param) {
        ("quadratic", None) => Ok(Arc::new(Quadratic)),
        ("quartic", None) => Ok(Arc::new(Quartic)),
        ("linear-a", p) => {
            let a = match p {
                None => 1.0,
                Some(s) => s
                    .parse::<f64>()
                    .map_err(|_| Error::UnknownPotential(id.to_string()))?,
            };
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Domain(format!("linear-a requires a > 0, got {a}")));
            }
            Ok(Arc::new(Linear { a: T::lit(a) }))
        }
        _ => Err(Error::UnknownPotential(id.to_string())),
    }
}

/// Ratio `V(r_max) / |φ_d(r_max)|` that the growth probe must exceed for `d <= 2`.
pub const GROWTH_RATIO_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `v` strictly increasing.
    Monotone,
    /// `r^{d-1} v'(r)` strictly increasing.
    FluxMonotone,
    /// Closed-form derivatives agree with finite differences.
    DerivativeConsistency,
    /// Heuristic probe of `V/Φ_d → ∞`.
    Growth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub kind: CheckKind,
    pub passed: bool,
    /// First grid point at which the check failed.
    pub first_violation: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub d: Dimension,
    pub label: String,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, kind: CheckKind) -> &CheckOutcome {
        self.checks
            .iter()
            .find(|c| c.kind == kind)
            .expect("every check kind is reported")
    }
}

/// Geometric grid of `n` points ending at `r_max`, starting at `r_max · 1e-3`.
pub fn geometric_grid<T: Real>(r_max: T, n: usize) -> Vec<T> {
    let lo = r_max * T::lit(1e-3);
    let ratio = (r_max / lo).powf(T::one() / T::int((n - 1) as i64));
    let mut out = Vec::with_capacity(n);
    let mut r = lo;
    for i in 0..n {
        out.push(if i + 1 == n { r_max } else { r });
        r = r * ratio;
    }
    out
}

type Scalar<'a, T> = &'a dyn Fn(T) -> T;

fn first_non_increasing<T: Real>(grid: &[T], f: impl Fn(T) -> T) -> Option<T> {
    grid.windows(2).find(|w| f(w[1]) <= f(w[0])).map(|w| w[0])
}

/// Probe the standing assumptions on `pot` in dimension `d`.
///
/// Violations are reported, never returned as errors.
pub fn validate_assumptions<T: Real, P: RadialPotential<T> + ?Sized>(
    pot: &P,
    d: Dimension,
    r_max: T,
    n_probe: usize,
) -> Result<ValidationReport> {
    if !(r_max > T::zero()) || n_probe < 2 {
        return Err(Error::Domain(format!(
            "validation requires r_max > 0 and n_probe >= 2 (got {r_max}, {n_probe})"
        )));
    }
    let grid = geometric_grid(r_max, n_probe);
    let mut checks = Vec::with_capacity(4);

    let v_bad = first_non_increasing(&grid, |r| pot.v(r));
    checks.push(CheckOutcome {
        kind: CheckKind::Monotone,
        passed: v_bad.is_none(),
        first_violation: v_bad.map(Real::as_f64),
        detail: "v strictly increasing".into(),
    });

    let flux_bad = first_non_increasing(&grid, |r| pot.flux(d, r));
    checks.push(CheckOutcome {
        kind: CheckKind::FluxMonotone,
        passed: flux_bad.is_none(),
        first_violation: flux_bad.map(Real::as_f64),
        detail: "r^(d-1) v'(r) strictly increasing".into(),
    });

    let (deriv_bad, worst) = derivative_mismatch(pot, &grid);
    checks.push(CheckOutcome {
        kind: CheckKind::DerivativeConsistency,
        passed: deriv_bad.is_none(),
        first_violation: deriv_bad.map(Real::as_f64),
        detail: format!("max scaled finite-difference mismatch {worst:.3e}"),
    });

    let kernel = CoulombKernel::<T>::new(d);
    let v_end = pot.v(r_max);
    let (growth_ok, detail) = if d.get() <= 2 {
        let phi = kernel.phi_unchecked(r_max).abs();
        let ratio = if phi > T::zero() {
            (v_end / phi).as_f64()
        } else {
            f64::INFINITY
        };
        (
            ratio > GROWTH_RATIO_THRESHOLD,
            format!("V(r_max)/|phi_d(r_max)| = {ratio:.4} (threshold {GROWTH_RATIO_THRESHOLD})"),
        )
    } else {
        // phi_d -> 0, so an increasing v that is eventually positive dominates it.
        (
            v_bad.is_none() && v_end > T::zero(),
            format!("v(r_max) = {v_end} with phi_d -> 0"),
        )
    };
    checks.push(CheckOutcome {
        kind: CheckKind::Growth,
        passed: growth_ok,
        first_violation: if growth_ok {
            None
        } else {
            Some(r_max.as_f64())
        },
        detail,
    });

    Ok(ValidationReport {
        d,
        label: pot.label(),
        checks,
    })
}

fn derivative_mismatch<T: Real, P: RadialPotential<T> + ?Sized>(
    pot: &P,
    grid: &[T],
) -> (Option<T>, f64) {
    let eps = T::epsilon();
    let step = eps.cbrt();
    let tol = T::int(1000) * eps.powf(T::lit(2.0 / 3.0));
    let mut worst = 0.0f64;
    let mut first = None;
    for &r in grid {
        let h = step * r;
        let pairs: [(Scalar<'_, T>, Scalar<'_, T>); 3] = [
            (&|x| pot.v(x), &|x| pot.dv(x)),
            (&|x| pot.dv(x), &|x| pot.d2v(x)),
            (&|x| pot.d2v(x), &|x| pot.d3v(x)),
        ];
        for (f, df) in pairs {
            let fd = (f(r + h) - f(r - h)) / (h + h);
            let exact = df(r);
            let scale = exact.abs() + f(r).abs() / r + T::min_positive_value();
            let mismatch = (fd - exact).abs() / scale;
            worst = worst.max(mismatch.as_f64());
            if !(mismatch <= tol) && first.is_none() {
                first = Some(r);
            }
        }
    }
    (first, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dim(d: u32) -> Dimension {
        Dimension::new(d).unwrap()
    }

    #[test]
    fn quadratic_passes_in_the_plane() {
        let rep = validate_assumptions::<f64, _>(&Quadratic, dim(2), 10.0, 64).unwrap();
        assert!(rep.passed(), "{rep:#?}");
    }

    #[test]
    fn decreasing_potential_fails_monotonicity_at_first_point() {
        let pot = FnPotential::<f64>::new("neg", |r| -r, |_| -1.0, |_| 0.0, |_| 0.0);
        let rep = validate_assumptions(&pot, dim(3), 10.0, 64).unwrap();
        let c = rep.check(CheckKind::Monotone);
        assert!(!c.passed);
        let grid = geometric_grid(10.0f64, 64);
        assert_eq!(c.first_violation, Some(grid[0]));
    }

    #[test]
    fn planted_wrong_second_derivative_is_caught() {
        let pot = FnPotential::<f64>::new("bad", |r| r * r / 2.0, |r| r, |_| 0.0, |_| 0.0);
        let rep = validate_assumptions(&pot, dim(2), 10.0, 64).unwrap();
        assert!(!rep.check(CheckKind::DerivativeConsistency).passed);
        assert!(rep.check(CheckKind::Monotone).passed);
        assert!(rep.check(CheckKind::FluxMonotone).passed);
    }

    #[test]
    fn linear_in_one_dimension_has_constant_flux() {
        let pot = builtin::<f64>("linear-a:1").unwrap();
        let rep = validate_assumptions(&*pot, dim(1), 100.0, 64).unwrap();
        assert!(!rep.check(CheckKind::FluxMonotone).passed);
        assert!(!rep.passed());
    }

    #[test]
    fn quartic_passes_in_low_dimensions() {
        for d in 1..=3 {
            let rep = validate_assumptions::<f64, _>(&Quartic, dim(d), 100.0, 64).unwrap();
            assert!(rep.passed(), "{rep:#?}");
        }
    }

    #[test]
    fn registry_ids() {
        assert_eq!(builtin::<f64>("quadratic").unwrap().label(), "quadratic");
        assert_eq!(builtin::<f64>("quartic").unwrap().v(2.0), 4.0);
        assert_eq!(builtin::<f64>("linear-a:2.5").unwrap().v(2.0), 5.0);
        assert_eq!(builtin::<f64>("linear-a").unwrap().dv(7.0), 1.0);
        assert!(matches!(
            builtin::<f64>("cubic"),
            Err(Error::UnknownPotential(_))
        ));
        assert!(builtin::<f64>("linear-a:-1").is_err());
        assert!(builtin::<f64>("linear-a:x").is_err());
    }

    #[test]
    fn bad_arguments_are_errors() {
        assert!(validate_assumptions::<f64, _>(&Quadratic, dim(2), 0.0, 64).is_err());
        assert!(validate_assumptions::<f64, _>(&Quadratic, dim(2), 1.0, 1).is_err());
    }

    #[test]
    fn flux_derivative_matches_finite_difference() {
        for d in 1..=5 {
            for &r in &[0.2, 0.7, 1.3] {
                let h = 1e-5;
                let fd = (Quartic.flux(dim(d), r + h) - Quartic.flux(dim(d), r - h)) / (2.0 * h);
                let m: f64 = Quartic.flux_derivative(dim(d), r);
                assert!((fd - m).abs() <= 1e-6 * m.abs(), "d={d} r={r}");
            }
        }
    }

    #[test]
    fn single_precision_validation() {
        let rep = validate_assumptions::<f32, _>(&Quadratic, dim(2), 10.0, 32).unwrap();
        assert!(rep.passed(), "{rep:#?}");
    }
}
