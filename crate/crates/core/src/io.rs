//! Tabular exports: CSV bodies with JSON headers written alongside.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::equilibrium::ConstrainedMeasure;
use crate::error::Result;
use crate::kernel::Dimension;
use crate::oracle::OracleResult;
use crate::rate::RateFunctionReport;
use crate::sampler::{GasConfig, SampleStats};

/// Write rows as comma-separated values with a header row and LF endings.
pub fn write_csv<W: Write, S: Serialize>(out: W, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn write_json<W: Write, S: Serialize + ?Sized>(mut out: W, value: &S) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureRow {
    pub r: f64,
    pub bulk_density: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureHeader {
    pub d: Dimension,
    #[serde(rename = "R")]
    pub wall: f64,
    pub r_star: f64,
    pub surface_weight: f64,
}

/// Analytic measure sampled at `points` equally spaced radii in `[0, R]`.
pub fn measure_table(
    m: &ConstrainedMeasure<'_, f64>,
    points: usize,
) -> (MeasureHeader, Vec<MeasureRow>) {
    let header = MeasureHeader {
        d: m.d,
        wall: m.wall,
        r_star: m.r_star,
        surface_weight: m.surface_weight,
    };
    let last = points.max(2) - 1;
    let rows = (0..=last)
        .map(|i| {
            let r = m.wall * i as f64 / last as f64;
            MeasureRow {
                r,
                bulk_density: m.bulk_density(r),
                cdf: m.radial_cdf(r),
            }
        })
        .collect();
    (header, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub energy: f64,
    pub converged: bool,
}

/// Discrete measure in the analytic schema: one row per cell centre, with
/// density `w_i / Δr` and the cumulative mass through that cell. The
/// header's surface weight is the last-cell mass.
pub fn oracle_table(
    result: &OracleResult<f64>,
    d: Dimension,
    r_star: f64,
) -> (MeasureHeader, Vec<MeasureRow>, ConvergenceRecord) {
    let grid = &result.measure.grid;
    let width = grid.cell_width();
    let mut acc = 0.0;
    let rows = grid
        .nodes
        .iter()
        .zip(&result.measure.w)
        .map(|(&r, &w)| {
            acc += w;
            MeasureRow {
                r,
                bulk_density: w / width,
                cdf: acc,
            }
        })
        .collect();
    let header = MeasureHeader {
        d,
        wall: grid.wall,
        r_star,
        surface_weight: result.measure.w.last().copied().unwrap_or(0.0),
    };
    let record = ConvergenceRecord {
        iterations: result.iterations,
        kkt_residual: result.kkt_residual,
        energy: result.energy,
        converged: result.converged,
    };
    (header, rows, record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct RateRow {
    pub R: f64,
    pub F: f64,
    pub dF: f64,
    pub d2F: f64,
    pub d3F: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub d: Dimension,
    pub potential: String,
    pub r_star: f64,
    pub third_left_limit: f64,
    pub third_jump: f64,
}

pub fn rate_table(report: &RateFunctionReport<f64>) -> (RateSummary, Vec<RateRow>) {
    let rows = (0..report.len())
        .map(|i| RateRow {
            R: report.grid[i],
            F: report.f[i],
            dF: report.df[i],
            d2F: report.d2f[i],
            d3F: report.d3f[i],
        })
        .collect();
    let summary = RateSummary {
        d: report.d,
        potential: report.potential.clone(),
        r_star: report.r_star,
        third_left_limit: report.third_left_limit,
        third_jump: report.third_jump,
    };
    (summary, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
}

/// `R` and `wall_fraction` are `null` for the unconstrained gas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct SampleHeader {
    pub N: usize,
    pub d: Dimension,
    pub beta: f64,
    pub R: Option<f64>,
    pub seed: u64,
    pub n_chains: usize,
    pub acceptance_rate: f64,
    pub wall_fraction: Option<f64>,
    pub wall_shell: f64,
    pub n_samples: u64,
    pub overflow: u64,
}

pub fn sample_table(cfg: &GasConfig, stats: &SampleStats) -> (SampleHeader, Vec<SampleRow>) {
    let header = SampleHeader {
        N: cfg.n,
        d: cfg.d,
        beta: cfg.beta,
        R: cfg.wall,
        seed: cfg.seed,
        n_chains: stats.n_chains,
        acceptance_rate: stats.acceptance_rate,
        wall_fraction: stats.wall_fraction,
        wall_shell: stats.wall_shell,
        n_samples: stats.n_samples,
        overflow: stats.overflow,
    };
    let rows = stats
        .counts
        .iter()
        .enumerate()
        .map(|(i, &count)| SampleRow {
            bin_left: stats.edges[i],
            bin_right: stats.edges[i + 1],
            count,
        })
        .collect();
    (header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::constrained_measure;
    use crate::potential::Quadratic;

    #[test]
    fn csv_uses_lf_and_header() {
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            [MeasureRow {
                r: 0.5,
                bulk_density: 1.0,
                cdf: 0.25,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "r,bulk_density,cdf\n0.5,1.0,0.25\n"
        );
    }

    #[test]
    fn measure_table_ends_with_full_mass() {
        let m = constrained_measure(&Quadratic, Dimension::new(2).unwrap(), 0.5).unwrap();
        let (h, rows) = measure_table(&m, 11);
        assert_eq!(rows.len(), 11);
        assert_eq!(rows[0].r, 0.0);
        assert_eq!(rows[10].r, 0.5);
        assert!((rows[10].cdf - 1.0).abs() < 1e-12);
        assert!((h.surface_weight - 0.75).abs() < 1e-12);
        let json = serde_json::to_value(&h).unwrap();
        assert_eq!(json["R"], 0.5);
        assert_eq!(json["d"], 2);
    }
}
