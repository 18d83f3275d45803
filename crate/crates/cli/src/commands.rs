use std::sync::Arc;

use coulomb_core::io::{
    measure_table, oracle_table, rate_table, sample_table, ConvergenceRecord, MeasureHeader,
    SampleHeader,
};
use coulomb_core::sampler::ks_statistic;
use coulomb_core::{
    builtin, certify_equilibrium, compare_density, compare_to_analytic, constrained_measure,
    critical_radius, derivatives, excess_free_energy, mean_field_energy, minimize,
    quadratic_closed_form, rate_report, run, third_derivative_left_limit, transition_scan,
    validate_assumptions, ComparisonReport, DensityReport, Dimension, GasConfig, MinimizeOptions,
    OneParticleLaw, Potential,
};
use serde::Serialize;

use crate::args::{
    Common, CriticalArgs, DensityArgs, OracleArgs, RateArgs, SampleArgs, VerifyArgs,
};
use crate::output::Sink;
use crate::Failure;

const ASSUMPTION_PROBES: usize = 400;
const CERT_FRACTIONS: [f64; 3] = [0.3, 0.6, 1.0];
const CLOSED_FORM_POINTS: usize = 50;
const CLOSED_FORM_RANGE: (f64, f64) = (0.05, 1.3);
const GINIBRE_POINTS: usize = 100;

fn potential(common: &Common) -> Result<Arc<Potential>, Failure> {
    Ok(builtin::<f64>(&common.potential)?)
}

fn dims(common: &Common) -> &[Dimension] {
    &common.dims.0
}

#[derive(Serialize)]
struct CriticalRow {
    d: Dimension,
    r_star: Option<f64>,
    third_left_limit: Option<f64>,
    third_jump: Option<f64>,
    assumptions_passed: bool,
    violations: String,
}

#[derive(Serialize)]
struct PotentialMeta<'a> {
    potential: &'a str,
}

pub fn critical(args: &CriticalArgs) -> Result<(), Failure> {
    let pot = potential(&args.common)?;
    let mut sink = Sink::new(&args.common, 1)?;
    let mut rows = Vec::new();
    for &d in dims(&args.common) {
        let report = validate_assumptions(pot.as_ref(), d, args.r_max, args.probes)?;
        let violations: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.detail.clone())
            .collect();
        let r_star = critical_radius(pot.as_ref(), d).ok();
        let left = r_star.and_then(|_| third_derivative_left_limit(pot.as_ref(), d).ok());
        rows.push(CriticalRow {
            d,
            r_star,
            third_left_limit: left,
            third_jump: left.map(|l| 0.0 - l),
            assumptions_passed: report.passed(),
            violations: violations.join("; "),
        });
    }
    sink.emit(
        "critical",
        &PotentialMeta {
            potential: &args.common.potential,
        },
        &rows,
    )?;
    sink.finish()?;
    let failed: Vec<u32> = rows
        .iter()
        .filter(|r| !r.assumptions_passed)
        .map(|r| r.d.get())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "assumptions fail for d = {failed:?}"
        )))
    }
}

pub fn rate(args: &RateArgs) -> Result<(), Failure> {
    let pot = potential(&args.common)?;
    let ds = dims(&args.common);
    let mut sink = Sink::new(&args.common, ds.len())?;
    let grid = args.grid.points();
    for &d in ds {
        let report = rate_report(pot.as_ref(), d, &grid)?;
        let (summary, rows) = rate_table(&report);
        sink.emit(&format!("rate_d{d}"), &summary, &rows)?;
    }
    sink.finish()
}

pub fn density(args: &DensityArgs) -> Result<(), Failure> {
    if args.points < 2 {
        return Err(Failure::Usage("--points must be at least 2".into()));
    }
    let pot = potential(&args.common)?;
    let ds = dims(&args.common);
    let mut sink = Sink::new(&args.common, ds.len())?;
    for &d in ds {
        let wall = match args.radius.0 {
            Some(r) => r,
            None => critical_radius(pot.as_ref(), d)?,
        };
        let m = constrained_measure(pot.as_ref(), d, wall)?;
        let (header, rows) = measure_table(&m, args.points);
        sink.emit(&format!("density_d{d}"), &header, &rows)?;
    }
    sink.finish()
}

#[derive(Serialize)]
struct OracleMeta {
    #[serde(flatten)]
    measure: MeasureHeader,
    convergence: ConvergenceRecord,
    comparison: ComparisonReport,
}

pub fn oracle(args: &OracleArgs) -> Result<(), Failure> {
    let Some(wall) = args.radius.0 else {
        return Err(Failure::Usage("the oracle needs a finite --R".into()));
    };
    let pot = potential(&args.common)?;
    let ds = dims(&args.common);
    let mut sink = Sink::new(&args.common, ds.len())?;
    let opts = MinimizeOptions {
        max_iter: args.max_iter,
        tol: args.tol,
        record_history: false,
    };
    for &d in ds {
        let result = minimize(pot.as_ref(), d, wall, args.n, opts)?;
        if !result.converged {
            eprintln!(
                "warning: d={d} stopped after {} iterations with KKT residual {:e}",
                result.iterations, result.kkt_residual
            );
        }
        let comparison = compare_to_analytic(&result, pot.as_ref(), d)?;
        let r_star = critical_radius(pot.as_ref(), d)?;
        let (measure, rows, convergence) = oracle_table(&result, d, r_star);
        let meta = OracleMeta {
            measure,
            convergence,
            comparison,
        };
        sink.emit(&format!("oracle_d{d}"), &meta, &rows)?;
    }
    sink.finish()
}

#[derive(Serialize)]
struct KsCheck {
    statistic: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Serialize)]
struct SampleMeta {
    #[serde(flatten)]
    header: SampleHeader,
    density: Option<DensityReport>,
    ks: Option<KsCheck>,
}

pub fn sample(args: &SampleArgs) -> Result<(), Failure> {
    let pot = potential(&args.common)?;
    let ds = dims(&args.common);
    let mut sink = Sink::new(&args.common, 2 * ds.len())?;
    let wall = args.radius.0;
    let mut ks_failures = Vec::new();
    for &d in ds {
        let mut cfg = GasConfig::new(args.particles, d, args.beta, wall, pot.clone());
        cfg.seed = args.seed;
        cfg.n_sweeps = args.sweeps;
        cfg.burn_in = args.burn_in.unwrap_or((args.sweeps / 10).min(1000));
        cfg.thinning = args.thinning;
        cfg.bins = args.bins;
        cfg.wall_shell = args.wall_shell;
        cfg.record_radii = args.particles == 1;
        let stats = run(&cfg, args.chains)?;

        let analytic_wall = wall.unwrap_or_else(|| cfg.histogram_radius());
        let m = constrained_measure(pot.as_ref(), d, analytic_wall)?;
        let density = match (wall, cfg.wall_shell_width()) {
            (Some(_), Some(delta)) => Some(compare_density(&stats, &m, delta)?),
            _ => None,
        };
        let ks = if args.particles == 1 {
            let law = OneParticleLaw::new(pot.clone(), d, args.beta, wall)?;
            let statistic = ks_statistic(&stats.radii, |r| law.cdf(r));
            let passed = statistic < args.ks_tol;
            if !passed {
                ks_failures.push(format!(
                    "d={d}: KS statistic {statistic:.5} >= {}",
                    args.ks_tol
                ));
            }
            Some(KsCheck {
                statistic,
                tolerance: args.ks_tol,
                passed,
            })
        } else {
            None
        };

        let (header, rows) = sample_table(&cfg, &stats);
        sink.emit(
            &format!("sample_d{d}"),
            &SampleMeta {
                header,
                density,
                ks,
            },
            &rows,
        )?;
        let (header, rows) = measure_table(&m, args.bins + 1);
        sink.emit(&format!("density_d{d}"), &header, &rows)?;
    }
    sink.finish()?;
    if ks_failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(ks_failures.join("\n")))
    }
}

#[derive(Debug, Clone, Serialize)]
struct CheckRow {
    d: Dimension,
    check: String,
    value: f64,
    threshold: f64,
    passed: bool,
}

struct Checks {
    d: Dimension,
    rows: Vec<CheckRow>,
}

impl Checks {
    /// Passes when `value <= threshold`.
    fn at_most(&mut self, check: impl Into<String>, value: f64, threshold: f64) {
        self.rows.push(CheckRow {
            d: self.d,
            check: check.into(),
            value,
            threshold,
            passed: value <= threshold,
        });
    }

    fn below(&mut self, check: impl Into<String>, value: f64, threshold: f64) {
        self.rows.push(CheckRow {
            d: self.d,
            check: check.into(),
            value,
            threshold,
            passed: value < threshold,
        });
    }
}

fn verify_dimension(
    args: &VerifyArgs,
    pot: &Potential,
    d: Dimension,
) -> Result<Vec<CheckRow>, Failure> {
    let mut c = Checks {
        d,
        rows: Vec::new(),
    };
    let report = validate_assumptions(pot, d, args.r_max, ASSUMPTION_PROBES)?;
    let violations = report.checks.iter().filter(|x| !x.passed).count();
    c.at_most("assumptions", violations as f64, 0.0);
    if violations > 0 {
        return Ok(c.rows);
    }
    let r_star = critical_radius(pot, d)?;

    let at = derivatives(pot, d, r_star)?;
    c.at_most(
        "c2_matching",
        at.first.abs().max(at.second.abs()),
        args.smooth_tol,
    );

    let left = third_derivative_left_limit(pot, d)?;
    c.below("left_limit_negative", left, 0.0);

    let cubic = transition_scan(pot, d, &[args.cubic_h])?;
    let coefficient = cubic.cubic_coefficient;
    c.at_most(
        "cubic_ratio",
        (cubic.rows[0].cubic_ratio - coefficient).abs() / coefficient,
        args.cubic_tol,
    );

    let scan = transition_scan(pot, d, &args.steps)?;
    let worst = scan
        .rows
        .iter()
        .map(|row| {
            let low = [row.left[0], row.left[1], row.right[0], row.right[1]];
            low.iter().fold(0.0f64, |a, x| a.max(x.abs())) / (left.abs() * row.h)
        })
        .fold(0.0f64, f64::max);
    c.at_most("low_order_differences", worst, args.diff_factor);
    c.at_most(
        "extrapolated_third",
        (scan.extrapolated_left_third - left).abs() / left.abs(),
        args.richardson_tol,
    );

    for f in CERT_FRACTIONS {
        let cert = certify_equilibrium(pot, d, f * r_star, args.cert_probes, args.cert_tol)?;
        let dev = cert.max_dev_inside.max(-cert.min_margin_outside);
        c.at_most(format!("certificate_{f}R*"), dev, cert.tolerance);
    }

    let half = 0.5 * r_star;
    let diff = mean_field_energy(pot, d, half)? - mean_field_energy(pot, d, r_star)?;
    let f = excess_free_energy(pot, d, half)?;
    c.at_most("energy_identity", (diff - f).abs(), args.identity_tol);

    if args.common.potential.trim() == "quadratic" {
        let (a, b) = CLOSED_FORM_RANGE;
        let mut worst = 0.0f64;
        for i in 0..CLOSED_FORM_POINTS {
            let r = a + (b - a) * i as f64 / (CLOSED_FORM_POINTS - 1) as f64;
            let exact = quadratic_closed_form(d, r)?;
            let gap = exact - excess_free_energy(pot, d, r)?;
            worst = worst.max(gap.abs() / exact.abs().max(1.0));
        }
        c.at_most("closed_form", worst, args.closed_form_tol);

        if d.get() == 2 {
            let mut worst = 0.0f64;
            for i in 1..=GINIBRE_POINTS {
                let r = i as f64 / GINIBRE_POINTS as f64;
                let ginibre = 0.25 * (4.0 * r * r - r.powi(4) - 4.0 * r.ln() - 3.0);
                worst = worst.max((2.0 * excess_free_energy(pot, d, r)? - ginibre).abs());
            }
            c.at_most("ginibre", worst, args.ginibre_tol);
        }
    }
    Ok(c.rows)
}

#[derive(Serialize)]
struct VerifyMeta<'a> {
    potential: &'a str,
    passed: bool,
    failures: usize,
}

#[derive(Serialize)]
struct FailureList<'a> {
    failures: Vec<&'a CheckRow>,
}

pub fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    if args.steps.len() < 2 || args.steps.iter().any(|&h| h.is_nan() || h <= 0.0) {
        return Err(Failure::Usage(
            "--h needs at least two positive steps".into(),
        ));
    }
    let pot = potential(&args.common)?;
    let mut sink = Sink::new(&args.common, 1)?;
    let mut rows = Vec::new();
    for &d in dims(&args.common) {
        rows.extend(verify_dimension(args, pot.as_ref(), d)?);
    }
    let failures: Vec<&CheckRow> = rows.iter().filter(|r| !r.passed).collect();
    let meta = VerifyMeta {
        potential: &args.common.potential,
        passed: failures.is_empty(),
        failures: failures.len(),
    };
    sink.emit("verify", &meta, &rows)?;
    sink.finish()?;
    if args.common.out.is_some() {
        for r in &rows {
            let status = if r.passed { "PASS" } else { "FAIL" };
            println!(
                "{status} d={} {} value={:e} threshold={:e}",
                r.d, r.check, r.value, r.threshold
            );
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        let list = serde_json::to_string(&FailureList { failures })
            .map_err(|e| Failure::Runtime(e.to_string()))?;
        Err(Failure::Check(list))
    }
}
