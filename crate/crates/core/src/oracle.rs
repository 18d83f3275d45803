//! Direct minimisation of the discretised mean-field functional over radial
//! measures, as an independent check on the analytic equilibrium.
//!
//! Mass sits on uniform spherical shells at the cell centres of `(0, R]`.
//! Two shells interact through `φ_d(max(r_i, r_j))` (a shell is seen from
//! outside as a point charge and is equipotential inside), and a shell's
//! self-energy is `φ_d(r_i)`. The discrete problem is
//!
//! ```text
//! minimise  E(w) = ½ wᵀ K w + uᵀ w   over the probability simplex,
//! K_ij = φ_d(max(r_i, r_j)),  u_i = v(r_i).
//! ```

use serde::Serialize;

use crate::equilibrium::{critical_radius, mean_field_energy_with, measure_with_critical_radius};
use crate::error::{Error, Result};
use crate::kernel::{CoulombKernel, Dimension};
use crate::potential::RadialPotential;
use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200_000;
pub const COARSE_CELLS: usize = 64;
const MIN_CELLS: usize = 16;

/// Cell-centred radial grid on `(0, R)`: `r_i = (i - ½) R / n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialGrid<T> {
    pub wall: T,
    pub nodes: Vec<T>,
}

impl<T: Real> RadialGrid<T> {
    pub fn new(wall: T, n: usize) -> Result<Self> {
        if !(wall > T::zero()) || n == 0 {
            return Err(Error::Domain(format!(
                "grid needs R > 0 and n >= 1 (got {wall}, {n})"
            )));
        }
        let width = wall / T::int(n as i64);
        let nodes = (0..n)
            .map(|i| (T::int(i as i64) + T::lit(0.5)) * width)
            .collect();
        Ok(RadialGrid { wall, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cell_width(&self) -> T {
        self.wall / T::int(self.nodes.len() as i64)
    }

    /// Edges `[left, right]` of cell `i`.
    pub fn cell(&self, i: usize) -> (T, T) {
        let w = self.cell_width();
        (T::int(i as i64) * w, T::int(i as i64 + 1) * w)
    }
}

/// Non-negative shell masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizedMeasure<T> {
    pub grid: RadialGrid<T>,
    pub w: Vec<T>,
}

impl<T: Real> DiscretizedMeasure<T> {
    pub fn uniform(grid: RadialGrid<T>) -> Self {
        let n = grid.len();
        let w = vec![T::one() / T::int(n as i64); n];
        DiscretizedMeasure { grid, w }
    }

    pub fn total_mass(&self) -> T {
        self.w.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Mass held by cells whose centre lies beyond `r`.
    pub fn mass_beyond(&self, r: T) -> T {
        self.grid
            .nodes
            .iter()
            .zip(&self.w)
            .filter(|(x, _)| **x > r)
            .fold(T::zero(), |a, (_, &m)| a + m)
    }

    /// Cumulative mass at the right edge of each cell.
    pub fn cdf(&self) -> Vec<T> {
        let mut acc = T::zero();
        self.w
            .iter()
            .map(|&m| {
                acc = acc + m;
                acc
            })
            .collect()
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).fold(T::zero(), |a, (&k, &v)| a + k * v))
            .collect()
    }
}

/// Interaction matrix and confinement vector of the discrete functional.
pub fn assemble_energy<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    grid: &RadialGrid<T>,
) -> (DenseMatrix<T>, Vec<T>) {
    let k = CoulombKernel::new(d);
    let n = grid.len();
    let phi: Vec<T> = grid.nodes.iter().map(|&r| k.phi_unchecked(r)).collect();
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            data.push(phi[i.max(j)]);
        }
    }
    let u = grid.nodes.iter().map(|&r| pot.v(r)).collect();
    (DenseMatrix { n, data }, u)
}

/// The discrete functional with an O(n) product for the shell kernel.
#[derive(Debug, Clone)]
pub struct ShellEnergy<T> {
    phi: Vec<T>,
    u: Vec<T>,
}

impl<T: Real> ShellEnergy<T> {
    pub fn new(pot: &dyn RadialPotential<T>, d: Dimension, grid: &RadialGrid<T>) -> Self {
        let k = CoulombKernel::new(d);
        ShellEnergy {
            phi: grid.nodes.iter().map(|&r| k.phi_unchecked(r)).collect(),
            u: grid.nodes.iter().map(|&r| pot.v(r)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// `K w` using `K_ij = φ_i` for `j <= i` and `φ_j` for `j > i`.
    pub fn kernel_apply(&self, w: &[T], out: &mut [T]) {
        let n = self.phi.len();
        let mut tail = T::zero();
        for i in (0..n).rev() {
            out[i] = tail;
            tail = tail + self.phi[i] * w[i];
        }
        let mut head = T::zero();
        for i in 0..n {
            head = head + w[i];
            out[i] = out[i] + self.phi[i] * head;
        }
    }

    /// Energy from a precomputed `K w`.
    pub fn energy_with(&self, w: &[T], kw: &[T]) -> T {
        let half = T::lit(0.5);
        w.iter()
            .zip(kw)
            .zip(&self.u)
            .fold(T::zero(), |a, ((&wi, &ki), &ui)| a + wi * (half * ki + ui))
    }

    pub fn energy(&self, w: &[T]) -> T {
        let mut kw = vec![T::zero(); w.len()];
        self.kernel_apply(w, &mut kw);
        self.energy_with(w, &kw)
    }

    pub fn gradient(&self, w: &[T], out: &mut [T]) {
        self.kernel_apply(w, out);
        for (g, &u) in out.iter_mut().zip(&self.u) {
            *g = *g + u;
        }
    }

    /// Largest |eigenvalue| of `K` restricted to the simplex tangent space
    /// `{Σ x = 0}`, by power iteration on `P K P`.
    pub fn spectral_bound(&self, iters: usize) -> T {
        let n = self.len();
        let nt = T::int(n as i64);
        let center = |v: &mut [T]| {
            let mean = v.iter().fold(T::zero(), |a, &b| a + b) / nt;
            v.iter_mut().for_each(|x| *x = *x - mean);
        };
        // deterministic start with no component along the ones vector
        let mut x: Vec<T> = (0..n)
            .map(|i| T::int((i % 7) as i64) - T::int(3) + T::int(i as i64) / nt)
            .collect();
        center(&mut x);
        let norm0 = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        x.iter_mut().for_each(|v| *v = *v / norm0);
        let mut y = vec![T::zero(); n];
        let mut lambda = T::zero();
        for _ in 0..iters {
            self.kernel_apply(&x, &mut y);
            center(&mut y);
            let norm = y.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            if norm == T::zero() {
                break;
            }
            lambda = norm;
            for (xi, &yi) in x.iter_mut().zip(&y) {
                *xi = yi / norm;
            }
        }
        lambda
    }
}

/// Euclidean projection onto `{w >= 0, Σ w = 1}`.
///
/// Michelot's pivot iteration: the threshold `θ` solving
/// `Σ max(y_i - θ, 0) = 1` is refined on the shrinking set `{y_i > θ}`,
/// which terminates in a handful of O(n) passes.
pub fn project_to_simplex<T: Real>(y: &[T], out: &mut [T]) {
    let mut sum = y.iter().fold(T::zero(), |a, &b| a + b);
    let mut count = y.len();
    let mut theta = (sum - T::one()) / T::int(count as i64);
    loop {
        let (s, c) = y
            .iter()
            .filter(|&&v| v > theta)
            .fold((T::zero(), 0usize), |(s, c), &v| (s + v, c + 1));
        if c == count || c == 0 {
            break;
        }
        sum = s;
        count = c;
        let next = (sum - T::one()) / T::int(count as i64);
        if next <= theta {
            break;
        }
        theta = next;
    }
    for (o, &v) in out.iter_mut().zip(y) {
        *o = (v - theta).max(T::zero());
    }
}

/// Simplex KKT residual `max_i (C - g_i)₊ + max_{w_i > 0} |g_i - C|`,
/// `C = min_{w_i > 0} g_i`.
fn active_level<T: Real>(w: &[T], g: &[T]) -> T {
    w.iter()
        .zip(g)
        .filter(|(&wi, _)| wi > T::zero())
        .map(|(_, &gi)| gi)
        .fold(T::infinity(), T::min)
}

pub fn kkt_residual<T: Real>(w: &[T], g: &[T]) -> T {
    let c = active_level(w, g);
    if !c.is_finite() {
        return T::infinity();
    }
    let below = g.iter().fold(T::zero(), |a, &gi| a.max(c - gi));
    let spread = w
        .iter()
        .zip(g)
        .filter(|(&wi, _)| wi > T::zero())
        .fold(T::zero(), |a, (_, &gi)| a.max((gi - c).abs()));
    below + spread
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions<T> {
    pub max_iter: usize,
    pub tol: T,
    /// Keep the energy after every accepted step.
    pub record_history: bool,
}

impl<T: Real> Default for MinimizeOptions<T> {
    fn default() -> Self {
        MinimizeOptions {
            max_iter: DEFAULT_MAX_ITER,
            tol: T::lit(DEFAULT_TOL),
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult<T> {
    pub measure: DiscretizedMeasure<T>,
    pub energy: T,
    pub iterations: usize,
    pub kkt_residual: T,
    pub converged: bool,
    /// Energies after each accepted step; empty unless requested.
    #[serde(skip)]
    pub history: Vec<T>,
}

/// Accelerated projected gradient descent on the simplex.
///
/// Each step projects `y - t ∇E(y)` onto the simplex with `t` halved from
/// `1/L` until the quadratic upper bound holds. Momentum follows the
/// monotone FISTA scheme: the accepted iterate is the better of the new
/// point and the previous one, and momentum restarts whenever the new
/// point fails to descend, so the accepted energies never increase.
///
/// For even `n` the iteration starts from the minimiser on the grid with
/// `n/2` cells, each coarse mass split evenly between its two children.
pub fn minimize<T: Real>(
    pot: &dyn RadialPotential<T>,
    d: Dimension,
    wall: T,
    n: usize,
    opts: MinimizeOptions<T>,
) -> Result<OracleResult<T>> {
    if n < MIN_CELLS {
        return Err(Error::Domain(format!(
            "need at least {MIN_CELLS} cells, got {n}"
        )));
    }
    let grid = RadialGrid::new(wall, n)?;
    let f = ShellEnergy::new(pot, d, &grid);
    let mut measure = DiscretizedMeasure::uniform(grid);
    if opts.max_iter > 0 && n.is_multiple_of(2) && n / 2 >= COARSE_CELLS {
        let coarse_opts = MinimizeOptions {
            record_history: false,
            ..opts
        };
        let coarse = minimize(pot, d, wall, n / 2, coarse_opts)?;
        let half = T::lit(0.5);
        for (i, &c) in coarse.measure.w.iter().enumerate() {
            measure.w[2 * i] = half * c;
            measure.w[2 * i + 1] = half * c;
        }
    }
    let run = descend(&f, &mut measure.w, opts);
    Ok(OracleResult {
        measure,
        energy: run.energy,
        iterations: run.iterations,
        kkt_residual: run.residual,
        converged: run.residual <= opts.tol,
        history: run.history,
    })
}

struct Descent<T> {
    energy: T,
    iterations: usize,
    residual: T,
    history: Vec<T>,
}

fn descend<T: Real>(f: &ShellEnergy<T>, w: &mut [T], opts: MinimizeOptions<T>) -> Descent<T> {
    let n = f.len();
    let mut kw = vec![T::zero(); n];
    f.kernel_apply(w, &mut kw);
    let mut g: Vec<T> = kw.iter().zip(&f.u).map(|(&k, &u)| k + u).collect();
    let mut energy = f.energy_with(w, &kw);
    let mut residual = kkt_residual(w, &g);
    let mut history = Vec::new();
    let mut iterations = 0;
    if opts.max_iter == 0 || residual <= opts.tol {
        return Descent {
            energy,
            iterations,
            residual,
            history,
        };
    }

    let half = T::lit(0.5);
    let lipschitz = f.spectral_bound(200).max(T::epsilon());
    let mut step = T::one() / lipschitz;

    let mut prev = w.to_vec();
    let mut kprev = kw.clone();
    let mut y = w.to_vec();
    let mut ky = kw.clone();
    let mut shifted = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut kz = vec![T::zero(); n];
    let mut delta = vec![T::zero(); n];
    let mut kdelta = vec![T::zero(); n];
    let mut momentum = T::one();

    while residual > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        // energy changes are formed from step vectors, never as differences
        // of two nearly equal energies
        let mut tries = 0;
        loop {
            for (((s, &yi), &ki), &ui) in shifted.iter_mut().zip(&y).zip(&ky).zip(&f.u) {
                *s = yi - step * (ki + ui);
            }
            project_to_simplex(&shifted, &mut z);
            f.kernel_apply(&z, &mut kz);
            let (curv, sq) = z.iter().zip(&y).zip(kz.iter().zip(&ky)).fold(
                (T::zero(), T::zero()),
                |(c, q), ((&zi, &yi), (&kzi, &kyi))| {
                    let dw = zi - yi;
                    (c + dw * (kzi - kyi), q + dw * dw)
                },
            );
            tries += 1;
            if curv * step <= sq || tries >= 60 {
                break;
            }
            step = step * half;
        }

        for ((di, &zi), &wi) in delta.iter_mut().zip(&z).zip(w.iter()) {
            *di = zi - wi;
        }
        f.kernel_apply(&delta, &mut kdelta);
        let level = active_level(w, &g);
        let (lin, curv) = delta
            .iter()
            .zip(g.iter().zip(&kdelta))
            .fold((T::zero(), T::zero()), |(l, c), (&di, (&gi, &kdi))| {
                (l + (gi - level) * di, c + di * kdi)
            });
        let change = lin + half * curv;
        let next_momentum = half * (T::one() + (T::one() + T::int(4) * momentum * momentum).sqrt());
        if change <= T::zero() && z != w {
            prev.copy_from_slice(w);
            kprev.copy_from_slice(&kw);
            w.copy_from_slice(&z);
            kw.copy_from_slice(&kz);
            let a = (momentum - T::one()) / next_momentum;
            for (((yi, kyi), (&wi, &pi)), (&kwi, &kpi)) in y
                .iter_mut()
                .zip(ky.iter_mut())
                .zip(w.iter().zip(&prev))
                .zip(kw.iter().zip(&kprev))
            {
                *yi = wi + a * (wi - pi);
                *kyi = kwi + a * (kwi - kpi);
            }
            momentum = next_momentum;
            for ((gi, &ki), &ui) in g.iter_mut().zip(&kw).zip(&f.u) {
                *gi = ki + ui;
            }
            energy = f.energy_with(w, &kw);
        } else {
            // no descent: restart momentum from the current iterate
            if momentum == T::one() && y == w {
                break;
            }
            momentum = T::one();
            y.copy_from_slice(w);
            ky.copy_from_slice(&kw);
        }
        if opts.record_history {
            history.push(energy);
        }
        residual = kkt_residual(w, &g);
    }
    Descent {
        energy,
        iterations,
        residual,
        history,
    }
}

/// Discrepancies between an oracle minimiser and the analytic measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub analytic_energy: f64,
    pub energy_gap: f64,
    /// L1 distance of bulk cell masses from `∫_cell m(r) dr`, last cell excluded.
    pub bulk_l1: f64,
    pub last_cell_mass: f64,
    pub surface_weight: f64,
    pub surface_gap: f64,
    pub converged: bool,
}

pub fn compare_to_analytic<T: Real>(
    result: &OracleResult<T>,
    pot: &dyn RadialPotential<T>,
    d: Dimension,
) -> Result<ComparisonReport> {
    let grid = &result.measure.grid;
    let wall = grid.wall;
    let r_star = critical_radius(pot, d)?;
    let analytic = mean_field_energy_with(pot, d, wall, r_star)?;
    let m = measure_with_critical_radius(pot, d, wall, r_star)?;
    let n = grid.len();
    let w = &result.measure.w;
    let mut l1 = T::zero();
    for (i, &wi) in w.iter().enumerate().take(n - 1) {
        let (a, b) = grid.cell(i);
        let exact = m.bulk_mass(b) - m.bulk_mass(a);
        l1 = l1 + (wi - exact).abs();
    }
    let last = w[n - 1];
    Ok(ComparisonReport {
        analytic_energy: analytic.as_f64(),
        energy_gap: (result.energy - analytic).abs().as_f64(),
        bulk_l1: l1.as_f64(),
        last_cell_mass: last.as_f64(),
        surface_weight: m.surface_weight.as_f64(),
        surface_gap: (last - m.surface_weight).abs().as_f64(),
        converged: result.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Quadratic, Quartic};

    fn dim(d: u32) -> Dimension {
        Dimension::new(d).unwrap()
    }

    #[test]
    fn grid_nodes() {
        let g = RadialGrid::<f64>::new(1.0, 4).unwrap();
        assert_eq!(g.nodes, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.cell(1), (0.25, 0.5));
        assert!(RadialGrid::<f64>::new(0.0, 4).is_err());
    }

    #[test]
    fn assemble_examples() {
        let grid = RadialGrid {
            wall: 1.0,
            nodes: vec![0.25, 0.75],
        };
        let (k, _) = assemble_energy::<f64>(&Quadratic, dim(3), &grid);
        let expect: [f64; 4] = [4.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0];
        for (a, b) in k.data.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let grid = RadialGrid::<f64>::new(1.0, 5).unwrap();
        let (k, _) = assemble_energy::<f64>(&Quadratic, dim(2), &grid);
        assert!((k.get(0, 0) + grid.nodes[0].ln()).abs() < 1e-15);
        let grid = RadialGrid {
            wall: 1.0,
            nodes: vec![0.5],
        };
        let (k, u) = assemble_energy::<f64>(&Quadratic, dim(1), &grid);
        assert_eq!(k.data, vec![-0.5]);
        assert_eq!(u, vec![0.125]);
    }

    #[test]
    fn structured_product_matches_dense() {
        for d in 1..=4 {
            let grid = RadialGrid::<f64>::new(0.8, 37).unwrap();
            let (k, _) = assemble_energy::<f64>(&Quartic, dim(d), &grid);
            let f = ShellEnergy::new(&Quartic, dim(d), &grid);
            let w: Vec<f64> = (0..37)
                .map(|i| ((i * 7 % 11) as f64 + 0.5) / 200.0)
                .collect();
            let dense = k.mul_vec(&w);
            let mut fast = vec![0.0; 37];
            f.kernel_apply(&w, &mut fast);
            for (a, b) in dense.iter().zip(&fast) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn projection_properties() {
        let y = [0.4, -0.3, 1.2, 0.05];
        let mut p = [0.0; 4];
        project_to_simplex(&y, &mut p);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&x| x >= 0.0));
        // already on the simplex: fixed point
        let y: [f64; 3] = [0.2, 0.3, 0.5];
        let mut q = [0.0; 3];
        project_to_simplex(&y, &mut q);
        for (a, b) in y.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_iterations_returns_uniform() {
        let r = minimize::<f64>(
            &Quadratic,
            dim(2),
            0.7,
            16,
            MinimizeOptions {
                max_iter: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 0);
        assert!(r.measure.w.iter().all(|&x| x == 1.0 / 16.0));
        assert!(minimize::<f64>(&Quadratic, dim(2), 0.7, 8, MinimizeOptions::default()).is_err());
    }

    #[test]
    fn descent_is_monotone() {
        let r = minimize::<f64>(
            &Quadratic,
            dim(3),
            0.5,
            200,
            MinimizeOptions {
                max_iter: 3000,
                tol: 1e-10,
                record_history: true,
            },
        )
        .unwrap();
        assert!(!r.history.is_empty());
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-14 * w[0].abs());
        }
        assert!((r.measure.total_mass() - 1.0).abs() < 1e-12);
    }
}
