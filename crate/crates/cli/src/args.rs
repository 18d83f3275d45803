use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coulomb_core::Dimension;

#[derive(Debug, Parser)]
#[command(
    name = "coulomb-lab",
    version,
    about = "Equilibrium measures, excess free energies and the pushed-pulled transition of constrained Coulomb gases"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Critical radius, assumption checks and third-derivative jump per dimension.
    Critical(CriticalArgs),
    /// Excess free energy F and its derivatives over a grid of wall radii.
    Rate(RateArgs),
    /// Constrained equilibrium measure at one wall radius.
    Density(DensityArgs),
    /// Check the third-order transition, equilibrium conditions and closed forms.
    Verify(VerifyArgs),
    /// Minimise the discretised energy functional and compare with the analytic measure.
    Oracle(OracleArgs),
    /// Metropolis sampling of the finite-N gas.
    Sample(SampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// quadratic, quartic or linear-a:A
    #[arg(long, default_value = "quadratic")]
    pub potential: String,
    /// Comma-separated dimensions.
    #[arg(long = "d", value_name = "D,...", value_parser = parse_dims, default_value = "2")]
    pub dims: DimList,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output directory; without it the table goes to stdout.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CriticalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Outer radius of the assumption probe.
    #[arg(long, default_value_t = 100.0)]
    pub r_max: f64,
    #[arg(long, default_value_t = 400)]
    pub probes: usize,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: Common,
    /// start:stop:count
    #[arg(long, value_parser = parse_grid)]
    pub grid: Grid,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub common: Common,
    /// Wall radius, or inf for the unconstrained measure.
    #[arg(long = "R", value_parser = parse_radius)]
    pub radius: Radius,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Step sizes of the transition scan.
    #[arg(long = "h", value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
    pub steps: Vec<f64>,
    /// Step at which F(R*-h)/h³ is compared with its limit.
    #[arg(long, default_value_t = 1e-3)]
    pub cubic_h: f64,
    /// Relative tolerance on F(R*-h)/h³.
    #[arg(long, default_value_t = 0.01)]
    pub cubic_tol: f64,
    /// First and second differences must stay below factor·|F'''(R*-)|·h.
    #[arg(long, default_value_t = 5.0)]
    pub diff_factor: f64,
    /// Relative tolerance on the extrapolated third difference.
    #[arg(long, default_value_t = 0.02)]
    pub richardson_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub smooth_tol: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub cert_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub cert_probes: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub closed_form_tol: f64,
    /// Tolerance on F = E(R) - E(R*).
    #[arg(long, default_value_t = 1e-9)]
    pub identity_tol: f64,
    /// Tolerance on the two-dimensional Ginibre identity.
    #[arg(long, default_value_t = 1e-12)]
    pub ginibre_tol: f64,
    #[arg(long, default_value_t = 100.0)]
    pub r_max: f64,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "R", value_parser = parse_radius)]
    pub radius: Radius,
    /// Number of radial cells.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
    /// KKT residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of particles.
    #[arg(long = "N", default_value_t = 100)]
    pub particles: usize,
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    #[arg(long = "R", value_parser = parse_radius)]
    pub radius: Radius,
    #[arg(long, default_value_t = 10_000)]
    pub sweeps: usize,
    /// Defaults to a tenth of the sweeps.
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub thinning: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
    /// Wall shell width as a fraction of R; defaults to N^(-1/d) within [0.02, 0.25].
    #[arg(long)]
    pub wall_shell: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// KS threshold for single-particle runs.
    #[arg(long, default_value_t = 0.02)]
    pub ks_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimList(pub Vec<Dimension>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / last)
            .collect()
    }
}

/// `None` is an infinite radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radius(pub Option<f64>);

pub fn parse_dims(s: &str) -> Result<DimList, String> {
    let mut dims = Vec::new();
    for part in s.split(',') {
        let d: u32 = part
            .trim()
            .parse()
            .map_err(|_| format!("`{part}` is not a dimension"))?;
        let d = Dimension::new(d).map_err(|e| e.to_string())?;
        if dims.contains(&d) {
            return Err(format!("dimension {d} listed twice"));
        }
        dims.push(d);
    }
    Ok(DimList(dims))
}

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err("expected start:stop:count".into());
    };
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{x}` is not a number"))
    };
    let (start, stop) = (num(a)?, num(b)?);
    let count: usize = n
        .trim()
        .parse()
        .map_err(|_| format!("`{n}` is not a count"))?;
    if !(start.is_finite() && stop.is_finite()) || start >= stop {
        return Err("grid needs finite start < stop".into());
    }
    if count < 2 {
        return Err("grid needs at least 2 points".into());
    }
    Ok(Grid { start, stop, count })
}

pub fn parse_radius(s: &str) -> Result<Radius, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "∞" => Ok(Radius(None)),
        t => {
            let r: f64 = t.parse().map_err(|_| format!("`{s}` is not a radius"))?;
            if r > 0.0 && r.is_finite() {
                Ok(Radius(Some(r)))
            } else if r == f64::INFINITY {
                Ok(Radius(None))
            } else {
                Err("radius must be positive".into())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims() {
        assert_eq!(parse_dims("1,2, 3").unwrap().0.len(), 3);
        assert!(parse_dims("0").is_err());
        assert!(parse_dims("2,2").is_err());
        assert!(parse_dims("x").is_err());
    }

    #[test]
    fn grids() {
        let g = parse_grid("0.5:1.5:3").unwrap();
        assert_eq!(g.points(), vec![0.5, 1.0, 1.5]);
        assert!(parse_grid("1:0:5").is_err());
        assert!(parse_grid("0:1:1").is_err());
        assert!(parse_grid("0:1").is_err());
    }

    #[test]
    fn radii() {
        assert_eq!(parse_radius("inf").unwrap(), Radius(None));
        assert_eq!(parse_radius("0.5").unwrap(), Radius(Some(0.5)));
        assert!(parse_radius("-1").is_err());
        assert!(parse_radius("0").is_err());
    }
}
