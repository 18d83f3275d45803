use coulomb_core::oracle::{project_to_simplex, ShellEnergy};
use coulomb_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

fn dim(d: u32) -> Dimension {
    Dimension::new(d).unwrap()
}

fn solve(d: u32, wall: f64, n: usize) -> Oracle {
    let r = minimize(&Quadratic, dim(d), wall, n, MinimizeOptions::default()).unwrap();
    assert!(r.converged, "d={d} R={wall} n={n}: kkt {}", r.kkt_residual);
    r
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

#[test]
fn planar_pushed_gas_has_three_quarter_atom() {
    let r = solve(2, 0.5, 2000);
    let exact = mean_field_energy(&Quadratic, dim(2), 0.5).unwrap();
    assert!((r.energy - exact).abs() < 1e-3, "{} vs {exact}", r.energy);
    assert!((r.measure.w[1999] - 0.75).abs() < 0.01);
    assert!((r.measure.total_mass() - 1.0).abs() < 1e-12);
    assert!(r.measure.w.iter().all(|&x| x >= 0.0));
}

#[test]
fn pulled_line_gas_stays_in_unit_interval() {
    let r = solve(1, 2.0, 2000);
    assert!(
        r.measure.mass_beyond(1.0) <= 0.01,
        "{}",
        r.measure.mass_beyond(1.0)
    );
}

#[test]
fn comparison_examples() {
    let c = compare_to_analytic(&solve(3, 0.5, 2000), &Quadratic, dim(3)).unwrap();
    assert!(c.energy_gap <= 2e-3 && c.surface_gap <= 1e-2, "{c:?}");

    let r_star = critical_radius(&Quadratic, dim(2)).unwrap();
    let c = compare_to_analytic(&solve(2, r_star, 2000), &Quadratic, dim(2)).unwrap();
    assert!(c.surface_weight.abs() < 1e-12);
    assert!(c.surface_gap <= 1e-2, "{c:?}");

    let c = compare_to_analytic(&solve(1, 0.3, 4000), &Quadratic, dim(1)).unwrap();
    assert!(c.bulk_l1 <= 5e-3, "{c:?}");
}

#[test]
fn discrete_minimum_does_not_undercut_continuum() {
    for d in 1..=3 {
        for &wall in &[0.3, 0.8] {
            let r = solve(d, wall, 1000);
            let exact = mean_field_energy(&Quadratic, dim(d), wall).unwrap();
            assert!(
                r.energy >= exact - 1e-4,
                "d={d} R={wall}: {} < {exact}",
                r.energy
            );
        }
    }
}

#[test]
fn refinement_shrinks_energy_gap() {
    for d in [2, 3] {
        let exact = mean_field_energy(&Quadratic, dim(d), 0.5).unwrap();
        let coarse = (solve(d, 0.5, 1000).energy - exact).abs();
        let fine = (solve(d, 0.5, 2000).energy - exact).abs();
        assert!(coarse >= 1.5 * fine, "d={d}: {coarse} -> {fine}");
    }
}

#[test]
fn energy_difference_reproduces_free_energy() {
    let d = dim(2);
    let r_star = critical_radius(&Quadratic, d).unwrap();
    let diff = solve(2, 0.5, 2000).energy - solve(2, r_star, 2000).energy;
    let f = excess_free_energy(&Quadratic, d, 0.5).unwrap();
    assert!((diff - f).abs() < 5e-3, "{diff} vs {f}");
}

#[test]
fn functional_is_strictly_midpoint_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in 1..=4 {
        let grid = Grid::new(0.9, 60).unwrap();
        let f = ShellEnergy::new(&Quartic, dim(d), &grid);
        for _ in 0..100 {
            let a = random_simplex(&mut rng, 60);
            let b = random_simplex(&mut rng, 60);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let avg = 0.5 * (f.energy(&a) + f.energy(&b));
            assert!(f.energy(&mid) < avg + 1e-14, "d={d}");
            // the gap equals (a-b)ᵀK(a-b)/8 and must be positive on Σx = 0
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let mut kd = vec![0.0; 60];
            f.kernel_apply(&diff, &mut kd);
            let q: f64 = diff.iter().zip(&kd).map(|(x, y)| x * y).sum();
            assert!(q > 0.0, "d={d}: {q}");
        }
    }
}

#[test]
fn projection_is_nearest_simplex_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.5)).collect();
        let mut p = vec![0.0; 25];
        project_to_simplex(&y, &mut p);
        // variational inequality (y - p)·(q - p) <= 0 for every simplex q
        for _ in 0..20 {
            let q = random_simplex(&mut rng, 25);
            let ip: f64 = y
                .iter()
                .zip(&p)
                .zip(&q)
                .map(|((a, b), c)| (a - b) * (c - b))
                .sum();
            assert!(ip <= 1e-12, "{ip}");
        }
    }
}

#[test]
fn convergence_record_round_trips() {
    let r = minimize(&Quadratic, dim(1), 0.5, 64, MinimizeOptions::default()).unwrap();
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["iterations"].as_u64().unwrap() as usize, r.iterations);
    assert!(json["converged"].as_bool().unwrap());
}
