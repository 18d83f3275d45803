//! Metropolis sampling of the finite-N constrained Gibbs measure
//!
//! ```text
//! P(x_1..x_N) ∝ exp(-β E(x)),   E = ½ Σ_{i≠j} φ_d(|x_i - x_j|) + N Σ_k v(|x_k|)
//! ```
//!
//! with every `|x_k| <= R` when a wall is present. Sampling is `f64` only.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::equilibrium::{critical_radius, ConstrainedMeasure};
use crate::error::{Error, Result};
use crate::kernel::{CoulombKernel, Dimension};
use crate::potential::RadialPotential;
use crate::quadrature::{integrate, Tolerance};

pub const TARGET_ACCEPTANCE: f64 = 0.3;
/// Bounds on the default wall shell `δ/R = N^{-1/d}`.
pub const MIN_WALL_SHELL: f64 = 0.02;
pub const MAX_WALL_SHELL: f64 = 0.25;
pub const RESYNC_INTERVAL: usize = 100;
/// Below this particle count density reports carry a warning.
pub const MEAN_FIELD_MIN_N: usize = 10;

const DEFAULT_BINS: usize = 200;

#[derive(Clone)]
pub struct GasConfig {
    pub n: usize,
    pub d: Dimension,
    /// Inverse temperature. Zero is accepted only with a wall.
    pub beta: f64,
    /// Wall radius; `None` is the unconstrained gas.
    pub wall: Option<f64>,
    pub pot: Arc<dyn RadialPotential<f64>>,
    pub seed: u64,
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub bins: usize,
    /// Upper edge of the radial histogram; defaults to the wall, or `3 R⋆`.
    pub hist_radius: Option<f64>,
    /// Shell width `δ/R` for `wall_fraction`; by default `N^{-1/d}`
    /// clamped to `[0.02, 0.25]`, the interparticle spacing on the wall.
    pub wall_shell: Option<f64>,
    /// Keep every observed radius (needed for KS tests).
    pub record_radii: bool,
}

impl fmt::Debug for GasConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GasConfig")
            .field("n", &self.n)
            .field("d", &self.d)
            .field("beta", &self.beta)
            .field("wall", &self.wall)
            .field("pot", &self.pot.label())
            .field("seed", &self.seed)
            .field("n_sweeps", &self.n_sweeps)
            .field("burn_in", &self.burn_in)
            .field("thinning", &self.thinning)
            .finish_non_exhaustive()
    }
}

impl GasConfig {
    pub fn new(
        n: usize,
        d: Dimension,
        beta: f64,
        wall: Option<f64>,
        pot: Arc<dyn RadialPotential<f64>>,
    ) -> Self {
        GasConfig {
            n,
            d,
            beta,
            wall,
            pot,
            seed: 0,
            n_sweeps: 10_000,
            burn_in: 1_000,
            thinning: 1,
            bins: DEFAULT_BINS,
            hist_radius: None,
            wall_shell: None,
            record_radii: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.n == 0 {
            return bad("need at least one particle");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite non-negative number");
        }
        match self.wall {
            Some(r) if !(r > 0.0 && r.is_finite()) => return bad("wall radius must be positive"),
            None if self.beta == 0.0 => return bad("beta = 0 needs a wall"),
            _ => {}
        }
        if self.burn_in >= self.n_sweeps {
            return bad("burn_in must be smaller than n_sweeps");
        }
        if self.thinning == 0 || self.bins == 0 {
            return bad("thinning and bins must be positive");
        }
        if self.wall_shell.is_some_and(|s| !(0.0..1.0).contains(&s)) {
            return bad("wall shell fraction must lie in [0, 1)");
        }
        if let Some(h) = self.hist_radius {
            if !(h > 0.0 && h.is_finite()) {
                return bad("histogram radius must be positive");
            }
        }
        Ok(())
    }

    /// Histogram upper edge.
    pub fn histogram_radius(&self) -> f64 {
        self.hist_radius
            .or(self.wall)
            .unwrap_or_else(|| 3.0 * critical_radius(self.pot.as_ref(), self.d).unwrap_or(1.0))
    }

    /// `δ/R` actually used.
    pub fn wall_shell_fraction(&self) -> f64 {
        self.wall_shell.unwrap_or_else(|| {
            (self.n as f64)
                .powf(-1.0 / f64::from(self.d.get()))
                .clamp(MIN_WALL_SHELL, MAX_WALL_SHELL)
        })
    }

    /// Absolute shell width `δ`; `None` without a wall.
    pub fn wall_shell_width(&self) -> Option<f64> {
        self.wall.map(|r| r * self.wall_shell_fraction())
    }

    fn shell_start(&self) -> Option<f64> {
        self.wall.zip(self.wall_shell_width()).map(|(r, w)| r - w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Row-major `N × d` coordinates.
    pub positions: Vec<f64>,
    pub energy: f64,
    pub step_size: f64,
}

impl ChainState {
    pub fn particle(&self, i: usize, d: usize) -> &[f64] {
        &self.positions[i * d..(i + 1) * d]
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `½ Σ_{i≠j} φ(|x_i - x_j|) + N Σ v(|x_k|)` for row-major positions.
pub fn total_energy(
    positions: &[f64],
    pot: &dyn RadialPotential<f64>,
    d: Dimension,
) -> Result<f64> {
    let dd = d.get() as usize;
    if !positions.len().is_multiple_of(dd) {
        return Err(Error::Domain(format!(
            "{} coordinates do not split into points of dimension {dd}",
            positions.len()
        )));
    }
    let n = positions.len() / dd;
    let kernel = CoulombKernel::<f64>::new(d);
    let mut pair = 0.0;
    for i in 0..n {
        let xi = &positions[i * dd..(i + 1) * dd];
        for j in i + 1..n {
            let r = distance(xi, &positions[j * dd..(j + 1) * dd]);
            if r == 0.0 {
                if d.get() >= 2 {
                    return Err(Error::Singular(i, j));
                }
                continue;
            }
            pair += kernel.phi_unchecked(r);
        }
    }
    let confinement: f64 = (0..n)
        .map(|k| pot.v(norm(&positions[k * dd..(k + 1) * dd])))
        .sum();
    Ok(pair + n as f64 * confinement)
}

/// One sweep of `N` single-particle Metropolis updates; returns the
/// number of accepted moves.
pub fn metropolis_sweep(state: &mut ChainState, cfg: &GasConfig, rng: &mut ChaCha8Rng) -> usize {
    let dd = cfg.d.get() as usize;
    let n = cfg.n;
    let kernel = CoulombKernel::<f64>::new(cfg.d);
    let log_kernel_singular = cfg.d.get() >= 2;
    let mut proposal = vec![0.0; dd];
    let mut accepted = 0;
    for k in 0..n {
        let current = &state.positions[k * dd..(k + 1) * dd];
        for (p, &c) in proposal.iter_mut().zip(current) {
            let z: f64 = rng.sample(StandardNormal);
            *p = c + state.step_size * z;
        }
        let u: f64 = rng.random();
        let r_new = norm(&proposal);
        if cfg.wall.is_some_and(|wall| r_new > wall) {
            continue;
        }
        let mut delta = n as f64 * (cfg.pot.v(r_new) - cfg.pot.v(norm(current)));
        let mut coincident = false;
        for j in (0..n).filter(|&j| j != k) {
            let other = &state.positions[j * dd..(j + 1) * dd];
            let r1 = distance(&proposal, other);
            if r1 == 0.0 && log_kernel_singular {
                coincident = true;
                break;
            }
            let r0 = distance(current, other);
            delta += kernel.phi_unchecked(r1) - kernel.phi_unchecked(r0);
        }
        if coincident {
            continue;
        }
        if u < (-cfg.beta * delta).exp() {
            state.positions[k * dd..(k + 1) * dd].copy_from_slice(&proposal);
            state.energy += delta;
            accepted += 1;
        }
    }
    accepted
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleStats {
    /// `bins + 1` radial bin edges starting at 0.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Observations beyond the last edge.
    pub overflow: u64,
    /// Fraction of observations in the shell `R - δ < |x| <= R`; `None` without a wall.
    pub wall_fraction: Option<f64>,
    pub wall_shell: f64,
    /// Acceptance rate after burn-in.
    pub acceptance_rate: f64,
    /// Recorded configurations; each contributes `n_particles` observations.
    pub n_samples: u64,
    pub n_particles: usize,
    pub n_chains: usize,
    pub max_radius: f64,
    /// Largest relative mismatch between the running and recomputed energy.
    pub max_energy_drift: f64,
    #[serde(skip)]
    pub radii: Vec<f64>,
}

impl SampleStats {
    pub fn observations(&self) -> u64 {
        self.n_samples * self.n_particles as u64
    }

    /// Empirical fraction of observations with radius above `r`, exact when
    /// radii were kept, otherwise interpolated within the straddling bin.
    pub fn fraction_beyond(&self, r: f64) -> f64 {
        let total = self.observations() as f64;
        if total == 0.0 {
            return 0.0;
        }
        if !self.radii.is_empty() {
            return self.radii.iter().filter(|&&x| x > r).count() as f64 / total;
        }
        let mut mass = self.overflow as f64;
        for (i, &c) in self.counts.iter().enumerate() {
            let (a, b) = (self.edges[i], self.edges[i + 1]);
            if a >= r {
                mass += c as f64;
            } else if b > r {
                mass += c as f64 * (b - r) / (b - a);
            }
        }
        mass / total
    }
}

struct ChainOutput {
    counts: Vec<u64>,
    overflow: u64,
    shell: u64,
    accepted: u64,
    proposed: u64,
    samples: u64,
    max_radius: f64,
    drift: f64,
    radii: Vec<f64>,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initial_state(cfg: &GasConfig, rng: &mut ChaCha8Rng) -> Result<ChainState> {
    let dd = cfg.d.get() as usize;
    let scale = critical_radius(cfg.pot.as_ref(), cfg.d).unwrap_or(1.0);
    let r0 = cfg.wall.map_or(scale, |w| w.min(scale));
    let mut positions = vec![0.0; cfg.n * dd];
    for p in positions.chunks_mut(dd) {
        loop {
            p.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
            let len = norm(p);
            if len > 0.0 {
                let radius = r0 * rng.random::<f64>().powf(1.0 / dd as f64);
                p.iter_mut().for_each(|x| *x *= radius / len);
                break;
            }
        }
    }
    let energy = total_energy(&positions, cfg.pot.as_ref(), cfg.d)?;
    Ok(ChainState {
        positions,
        energy,
        step_size: 0.5 * r0 * (cfg.n as f64).powf(-1.0 / dd as f64),
    })
}

fn run_chain(cfg: &GasConfig, chain: usize) -> Result<ChainOutput> {
    let mut rng = chain_rng(cfg.seed, chain);
    let mut state = initial_state(cfg, &mut rng)?;
    let dd = cfg.d.get() as usize;
    let top = cfg.histogram_radius();
    let width = top / cfg.bins as f64;
    let max_step = 2.0 * cfg.wall.unwrap_or(top);
    let shell = cfg.shell_start();
    let mut out = ChainOutput {
        counts: vec![0; cfg.bins],
        overflow: 0,
        shell: 0,
        accepted: 0,
        proposed: 0,
        samples: 0,
        max_radius: 0.0,
        drift: 0.0,
        radii: Vec::new(),
    };
    for sweep in 0..cfg.n_sweeps {
        let accepted = metropolis_sweep(&mut state, cfg, &mut rng);
        if sweep < cfg.burn_in {
            let rate = accepted as f64 / cfg.n as f64;
            state.step_size = (state.step_size * (rate - TARGET_ACCEPTANCE).exp()).min(max_step);
        } else {
            out.accepted += accepted as u64;
            out.proposed += cfg.n as u64;
            if (sweep - cfg.burn_in).is_multiple_of(cfg.thinning) {
                out.samples += 1;
                for p in state.positions.chunks(dd) {
                    let r = norm(p);
                    out.max_radius = out.max_radius.max(r);
                    let bin = (r / width) as usize;
                    if bin < cfg.bins {
                        out.counts[bin] += 1;
                    } else {
                        out.overflow += 1;
                    }
                    if shell.is_some_and(|s| r > s) {
                        out.shell += 1;
                    }
                    if cfg.record_radii {
                        out.radii.push(r);
                    }
                }
            }
        }
        if (sweep + 1) % RESYNC_INTERVAL == 0 {
            let fresh = total_energy(&state.positions, cfg.pot.as_ref(), cfg.d)?;
            out.drift = out
                .drift
                .max((state.energy - fresh).abs() / fresh.abs().max(1.0));
            state.energy = fresh;
        }
    }
    Ok(out)
}

/// Run `n_chains` independent chains (in parallel) and merge their
/// statistics in chain order. Chain `k` draws from stream `k` of a
/// ChaCha8 generator seeded with `cfg.seed`.
pub fn run(cfg: &GasConfig, n_chains: usize) -> Result<SampleStats> {
    cfg.validate()?;
    if n_chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    let outputs = (0..n_chains)
        .into_par_iter()
        .map(|k| run_chain(cfg, k))
        .collect::<Result<Vec<_>>>()?;

    let top = cfg.histogram_radius();
    let edges = (0..=cfg.bins)
        .map(|i| top * i as f64 / cfg.bins as f64)
        .collect();
    let mut counts = vec![0u64; cfg.bins];
    let (mut overflow, mut shell, mut accepted, mut proposed, mut samples) = (0, 0, 0, 0, 0);
    let (mut max_radius, mut drift) = (0.0f64, 0.0f64);
    let mut radii = Vec::new();
    for o in outputs {
        counts.iter_mut().zip(&o.counts).for_each(|(a, b)| *a += b);
        overflow += o.overflow;
        shell += o.shell;
        accepted += o.accepted;
        proposed += o.proposed;
        samples += o.samples;
        max_radius = max_radius.max(o.max_radius);
        drift = drift.max(o.drift);
        radii.extend(o.radii);
    }
    let observations = samples * cfg.n as u64;
    Ok(SampleStats {
        edges,
        counts,
        overflow,
        wall_fraction: cfg.wall.map(|_| {
            if observations == 0 {
                0.0
            } else {
                shell as f64 / observations as f64
            }
        }),
        wall_shell: cfg.wall_shell_width().unwrap_or(0.0),
        acceptance_rate: if proposed == 0 {
            0.0
        } else {
            accepted as f64 / proposed as f64
        },
        n_samples: samples,
        n_particles: cfg.n,
        n_chains,
        max_radius,
        max_energy_drift: drift,
        radii,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityReport {
    /// L1 distance between the histogram below `R - δ` and the analytic bulk.
    pub bulk_l1: f64,
    pub wall_fraction: f64,
    pub surface_weight: f64,
    /// Analytic mass in the shell: surface weight plus bulk mass above `R - δ`.
    pub shell_mass: f64,
    /// `|wall_fraction - shell_mass|`.
    pub wall_gap: f64,
    pub note: Option<String>,
}

/// Compare sampled radial masses with the constrained equilibrium measure.
///
/// Bins entirely below `R - delta` enter the bulk comparison; the wall
/// fraction is the empirical mass beyond `R - delta`, compared with the
/// analytic mass of the same shell.
pub fn compare_density(
    stats: &SampleStats,
    measure: &ConstrainedMeasure<'_, f64>,
    delta: f64,
) -> Result<DensityReport> {
    let total = stats.observations() as f64;
    if total == 0.0 {
        return Err(Error::Config("no recorded observations".into()));
    }
    let cut = measure.wall - delta;
    let slack = 1e-9 * measure.wall;
    let mut l1 = 0.0;
    for (i, &c) in stats.counts.iter().enumerate() {
        let (a, b) = (stats.edges[i], stats.edges[i + 1]);
        if b > cut + slack {
            break;
        }
        l1 += (c as f64 / total - (measure.bulk_mass(b) - measure.bulk_mass(a))).abs();
    }
    let wall_fraction = stats.fraction_beyond(cut);
    let shell_mass =
        measure.surface_weight + measure.bulk_mass(measure.wall) - measure.bulk_mass(cut);
    let note = (stats.n_particles < MEAN_FIELD_MIN_N)
        .then(|| "N too small for mean-field comparison".to_string());
    Ok(DensityReport {
        bulk_l1: l1,
        wall_fraction,
        surface_weight: measure.surface_weight,
        shell_mass,
        wall_gap: (wall_fraction - shell_mass).abs(),
        note,
    })
}

/// Exact radial law of a single particle, density `∝ r^{d-1} e^{-β v(r)}`
/// on `[0, R]` (or `[0, ∞)`).
pub struct OneParticleLaw {
    d: Dimension,
    beta: f64,
    pot: Arc<dyn RadialPotential<f64>>,
    upper: f64,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
}

const LAW_PANELS: usize = 512;
const LAW_TOL: Tolerance<f64> = Tolerance {
    abs: 1e-14,
    rel: 1e-12,
};

impl OneParticleLaw {
    pub fn new(
        pot: Arc<dyn RadialPotential<f64>>,
        d: Dimension,
        beta: f64,
        wall: Option<f64>,
    ) -> Result<Self> {
        if !(beta > 0.0) && wall.is_none() {
            return Err(Error::Config(
                "an unbounded one-particle law needs beta > 0".into(),
            ));
        }
        let dm1 = d.as_i32() - 1;
        let log_weight = |r: f64| f64::from(dm1) * r.ln() - beta * pot.v(r);
        let upper = match wall {
            Some(r) => r,
            None => {
                // extend until the weight is negligible relative to its peak
                let mut hi = 1.0;
                let mut peak = f64::NEG_INFINITY;
                loop {
                    let probe = (1..=64)
                        .map(|i| log_weight(hi * i as f64 / 64.0))
                        .fold(f64::NEG_INFINITY, f64::max);
                    peak = peak.max(probe);
                    if log_weight(hi) < peak - 80.0 && pot.dv(hi) > 0.0 {
                        break;
                    }
                    hi *= 2.0;
                    if hi > 1e8 {
                        return Err(Error::Domain("one-particle law is not normalisable".into()));
                    }
                }
                hi
            }
        };
        let mut law = OneParticleLaw {
            d,
            beta,
            pot,
            upper,
            nodes: Vec::with_capacity(LAW_PANELS + 1),
            cumulative: Vec::with_capacity(LAW_PANELS + 1),
        };
        let mut acc = 0.0;
        law.nodes.push(0.0);
        law.cumulative.push(0.0);
        for i in 1..=LAW_PANELS {
            let a = upper * (i - 1) as f64 / LAW_PANELS as f64;
            let b = upper * i as f64 / LAW_PANELS as f64;
            acc += law.segment(a, b)?;
            law.nodes.push(b);
            law.cumulative.push(acc);
        }
        Ok(law)
    }

    fn density_unnormalised(&self, r: f64) -> f64 {
        r.powi(self.d.as_i32() - 1) * (-self.beta * self.pot.v(r)).exp()
    }

    fn segment(&self, a: f64, b: f64) -> Result<f64> {
        Ok(integrate(|r| self.density_unnormalised(r), a, b, LAW_TOL)?.value)
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn density(&self, r: f64) -> f64 {
        if r < 0.0 || r > self.upper {
            0.0
        } else {
            self.density_unnormalised(r) / self.cumulative[LAW_PANELS]
        }
    }

    pub fn cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= self.upper {
            return 1.0;
        }
        let k = ((r / self.upper * LAW_PANELS as f64) as usize).min(LAW_PANELS - 1);
        let tail = self.segment(self.nodes[k], r).unwrap_or(0.0);
        ((self.cumulative[k] + tail) / self.cumulative[LAW_PANELS]).clamp(0.0, 1.0)
    }
}

/// Kolmogorov–Smirnov distance between the samples and `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |acc, (i, &x)| {
        let f = cdf(x);
        acc.max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Two-sample chi-square homogeneity test on histogram counts; bins empty
/// in both samples are dropped.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquareTest> {
    if a.len() != b.len() {
        return Err(Error::Config("histograms have different bin counts".into()));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Config("empty histogram".into()));
    }
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut statistic = 0.0;
    let mut used = 0;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        let diff = ka * x as f64 - kb * y as f64;
        statistic += diff * diff / (x + y) as f64;
        used += 1;
    }
    let dof = used.max(2) - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}
