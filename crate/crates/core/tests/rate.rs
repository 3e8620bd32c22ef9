use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use stirlab::error::Error;
use stirlab::hydro::{mobility, solve_hydro, DensityTrajectory, SchemeParams};
use stirlab::rate::{
    collapse_check, dynamic_cost, evaluate, inner_product, linear_functional, riesz_solve, static_cost,
    static_cost_sup_form, variational_lower_bound, HilbertMetric, RieszOptions, TrigBasis,
};
use stirlab::{PotentialSet, ProfileGrid, SpaceTimeGrid};

fn gamma(m: usize) -> ProfileGrid<f64> {
    ProfileGrid::from_fn(2, m, |a, u: f64| if a == 1 { 0.3 + 0.1 * (TAU * u).sin() } else { 0.35 - 0.08 * (TAU * u).cos() })
        .unwrap()
}

fn manufactured_h(m: usize, k: usize, horizon: f64) -> SpaceTimeGrid<f64> {
    SpaceTimeGrid::from_fn(2, m, k + 1, horizon / k as f64, |c, u: f64, t: f64| {
        let s = t / horizon;
        if c == 0 {
            0.5 * (TAU * u).sin() * (1.0 + s)
        } else {
            0.4 * (TAU * u).cos() - 0.2 * (2.0 * TAU * u).sin() * s
        }
    })
    .unwrap()
}

/// `ρ` from the solver driven by `H*`, returned with `½‖H*‖²` on `ρ`.
fn manufactured(m: usize, k: usize, horizon: f64) -> (DensityTrajectory<f64>, f64) {
    let h = manufactured_h(m, k, horizon);
    let rho = solve_hydro(&gamma(m), &PotentialSet::from_species(h.clone()), &SchemeParams::explicit(m, horizon, k)).unwrap();
    let target = 0.5 * HilbertMetric::new(&rho, 1e-6).unwrap().norm_sq(&h).unwrap();
    (rho, target)
}

/// Semi-discrete heat solution `c + a·e^{−λt}·sin(2πu)` with the three-point
/// Laplacian eigenvalue `λ`.
fn heat_trajectory(m: usize, k: usize, horizon: f64) -> DensityTrajectory<f64> {
    let lambda = 4.0 * (m * m) as f64 * (PI / m as f64).sin().powi(2);
    SpaceTimeGrid::from_fn(2, m, k + 1, horizon / k as f64, |c, u: f64, t: f64| {
        [0.3, 0.25][c] + 0.1 * (-lambda * t).exp() * (TAU * u).sin()
    })
    .unwrap()
}

#[test]
fn heat_solution_has_zero_cost() {
    let rho = heat_trajectory(32, 400, 0.02);
    let (i0, sol) = dynamic_cost(&rho, &RieszOptions::default()).unwrap();
    assert!(i0 < 1e-8, "{i0}");
    let lb = variational_lower_bound(&rho, &sol.metric, &TrigBasis { spatial: 3, temporal: 2 }).unwrap();
    assert!(lb.value <= 1e-8);
    let g = SpaceTimeGrid::from_fn(2, 32, 401, 0.02 / 400.0, |c, u: f64, t: f64| (TAU * u + c as f64).cos() * (1.0 - 3.0 * t))
        .unwrap();
    assert!(linear_functional(&rho, &g).unwrap().abs() < 1e-6);

    let flat = SpaceTimeGrid::from_fn(2, 16, 5, 0.1, |c, _, _| [0.2, 0.5][c]).unwrap();
    let (i0, sol) = dynamic_cost(&flat, &RieszOptions::default()).unwrap();
    assert_eq!(i0, 0.0);
    assert!(sol.potential.values().iter().all(|&v| v == 0.0));
}

#[test]
fn heat_hydro_solve_is_typical() {
    let m = 48;
    let rho = solve_hydro(&gamma(m), &PotentialSet::zero(2), &SchemeParams::explicit(m, 0.02, 200)).unwrap();
    let (i0, _) = dynamic_cost(&rho, &RieszOptions::default()).unwrap();
    assert!(i0 < 1e-6, "{i0}");
}

#[test]
fn manufactured_potential_is_recovered() {
    let horizon = 0.05;
    let mut errors = Vec::new();
    for (m, k) in [(32, 64), (64, 128)] {
        let (rho, target) = manufactured(m, k, horizon);
        let (i0, sol) = dynamic_cost(&rho, &RieszOptions::default()).unwrap();
        let rel = (i0 - target).abs() / target;
        assert!(rel < 0.05, "M={m}: {i0} vs {target}");
        assert!(sol.residual <= 1e-6 * (1.0 + sol.rhs_norm), "residual {}", sol.residual);
        // gradients against the manufactured field
        let h = manufactured_h(m, k, horizon);
        let mut worst: f64 = 0.0;
        for kk in 1..k {
            for c in 0..2 {
                for j in 0..m {
                    let jp = (j + 1) % m;
                    let d1 = sol.potential.get(c, jp, kk) - sol.potential.get(c, j, kk);
                    let d2 = h.get(c, jp, kk) - h.get(c, j, kk);
                    worst = worst.max((d1 - d2).abs() * m as f64);
                }
            }
        }
        errors.push((rel, worst));
    }
    assert!(errors[1].1 < errors[0].1, "{errors:?}");
}

/// Dense solve of `DᵀWD·H = r` with the zero-mean constraint added as a
/// rank-one term per species.
fn dense_stationary_oracle(rho: &[f64], m: usize) -> Vec<f64> {
    let n = 2;
    let h = 1.0 / m as f64;
    let size = n * m;
    let mut d = DMatrix::<f64>::zeros(size, size);
    let mut w = DMatrix::<f64>::zeros(size, size);
    for j in 0..m {
        let jp = (j + 1) % m;
        let bar: Vec<f64> = (0..n).map(|a| 0.5 * (rho[a * m + j] + rho[a * m + jp])).collect();
        let chi = mobility(&bar).unwrap();
        for a in 0..n {
            d[(a * m + j, a * m + jp)] += 1.0 / h;
            d[(a * m + j, a * m + j)] -= 1.0 / h;
            for b in 0..n {
                w[(a * m + j, b * m + j)] = 2.0 * chi[a * n + b];
            }
        }
    }
    let mut a = d.transpose() * w * &d;
    for s in 0..n {
        for i in 0..m {
            for j in 0..m {
                a[(s * m + i, s * m + j)] += 1.0;
            }
        }
    }
    let mut r = DVector::<f64>::zeros(size);
    for s in 0..n {
        for j in 0..m {
            let (jp, jm) = ((j + 1) % m, (j + m - 1) % m);
            r[s * m + j] = -(rho[s * m + jp] - 2.0 * rho[s * m + j] + rho[s * m + jm]) / (h * h);
        }
    }
    a.lu().solve(&r).unwrap().iter().copied().collect()
}

#[test]
fn stationary_profile_matches_dense_oracle() {
    let m = 32;
    let rho = SpaceTimeGrid::from_fn(2, m, 3, 0.01, |c, u: f64, _| {
        if c == 0 { 0.3 + 0.15 * (TAU * u).sin() } else { 0.3 + 0.1 * (2.0 * TAU * u).cos() }
    })
    .unwrap();
    let sol = riesz_solve(&rho, &RieszOptions::default()).unwrap();
    let want = dense_stationary_oracle(rho.slice(1), m);
    for k in 0..3 {
        for (got, want) in sol.potential.slice(k).iter().zip(&want) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }
}

fn random_interior(m: usize, k: usize, seed: u64) -> DensityTrajectory<f64> {
    let s = seed as f64;
    SpaceTimeGrid::from_fn(2, m, k + 1, 0.1 / k as f64, |c, u: f64, t: f64| {
        let base = [0.3, 0.35][c];
        let mut v = base;
        for p in 1..=3 {
            let amp = 0.05 / p as f64 * (1.0 + 0.3 * (s + c as f64 + p as f64).sin());
            v += amp * (TAU * p as f64 * u + 7.0 * t * (p as f64 + s).cos() + s).sin();
        }
        v
    })
    .unwrap()
}

#[test]
fn riesz_residual_on_random_trajectories() {
    for seed in 0..3 {
        let rho = random_interior(64, 40, seed);
        let sol = riesz_solve(&rho, &RieszOptions { residual_tests: 12, ..RieszOptions::default() }).unwrap();
        assert!(sol.residual <= 1e-6 * (1.0 + sol.rhs_norm), "{} vs {}", sol.residual, sol.rhs_norm);
        for k in 0..=40 {
            for c in 0..2 {
                let mean: f64 = sol.potential.row(c, k).iter().sum::<f64>() / 64.0;
                assert!(mean.abs() < 1e-12);
            }
        }
    }
}

#[test]
fn lower_bound_is_monotone_and_below_i0() {
    let rho = random_interior(48, 30, 4);
    let (i0, sol) = dynamic_cost(&rho, &RieszOptions::default()).unwrap();
    let mut prev = 0.0;
    for (s, q) in [(1, 0), (1, 1), (2, 1), (3, 2), (4, 3)] {
        let lb = variational_lower_bound(&rho, &sol.metric, &TrigBasis { spatial: s, temporal: q }).unwrap();
        assert!(lb.value >= prev - 1e-10, "({s},{q}): {} < {prev}", lb.value);
        assert!(lb.value <= i0 + 1e-6, "({s},{q}): {} > {i0}", lb.value);
        prev = lb.value;
    }
    assert!(prev > 0.5 * i0, "{prev} vs {i0}");
}

#[test]
fn mass_defect_has_no_solution() {
    let rho = SpaceTimeGrid::from_fn(2, 16, 4, 0.1, |c, _, t: f64| 0.2 + 0.1 * c as f64 + t).unwrap();
    assert!(matches!(riesz_solve(&rho, &RieszOptions::default()), Err(Error::NoSolution(_))));
}

#[test]
fn metric_properties() {
    let rho = random_interior(24, 10, 1);
    for seed in 0..5 {
        let g = random_interior(24, 10, 10 + seed);
        assert!(inner_product(&g, &g, &rho).unwrap() >= 0.0);
    }
    let flat_g = SpaceTimeGrid::from_fn(2, 24, 11, 0.01, |c, _, t: f64| c as f64 + t).unwrap();
    let h = random_interior(24, 10, 3);
    assert_eq!(inner_product(&flat_g, &h, &rho).unwrap(), 0.0);
    let g = random_interior(24, 10, 7);
    let (a, b) = (inner_product(&g, &h, &rho).unwrap(), inner_product(&h, &g, &rho).unwrap());
    assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
    let wrong = SpaceTimeGrid::zeros(2, 12, 11, 0.01).unwrap();
    assert!(inner_product(&wrong, &h, &rho).is_err());
}

#[test]
fn static_cost_sup_form_from_below() {
    let omega = gamma(16);
    let g = ProfileGrid::constant(2, 16, &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
    let exact = static_cost(&omega, &g).unwrap();
    assert!(exact > 0.0);
    let mut prev = f64::NEG_INFINITY;
    for pts in [5, 17, 65] {
        let grid: Vec<f64> = (0..pts).map(|i| -1.0 + 2.0 * i as f64 / (pts - 1) as f64).collect();
        let sup = static_cost_sup_form(&omega, &g, &grid).unwrap();
        assert!(sup <= exact + 1e-14 && sup >= prev - 1e-14);
        prev = sup;
    }
    assert!(exact - prev < 1e-3, "{prev} vs {exact}");
}

#[test]
fn collapse_under_equal_potentials() {
    let (m, k, horizon) = (32, 40, 0.05);
    let zero = SpaceTimeGrid::zeros(1, m, k + 1, horizon / k as f64).unwrap();
    let rho0 = solve_hydro(&gamma(m), &PotentialSet::zero(2), &SchemeParams::explicit(m, horizon, k)).unwrap();
    let rep = collapse_check(&rho0, &[vec![1, 2]], &zero).unwrap();
    assert_eq!((rep.full, rep.reduced), (0.0, 0.0));

    let h = SpaceTimeGrid::from_fn(1, m, k + 1, horizon / k as f64, |_, u: f64, t: f64| 0.6 * (TAU * u).sin() * (1.0 + t))
        .unwrap();
    let both = SpaceTimeGrid::from_fn(2, m, k + 1, horizon / k as f64, |_, u, t| h.eval(0, u, t)).unwrap();
    let rho = solve_hydro(&gamma(m), &PotentialSet::from_species(both), &SchemeParams::explicit(m, horizon, k)).unwrap();
    let rep = collapse_check(&rho, &[vec![1, 2]], &h).unwrap();
    assert!(rep.full > 0.0 && rep.difference <= 1e-8, "{rep:?}");

    // three species, H_2 = H_3
    let rho3 = SpaceTimeGrid::from_fn(3, m, k + 1, horizon / k as f64, |c, u: f64, t: f64| {
        0.2 + 0.05 * ((c + 1) as f64 * TAU * u + t).sin()
    })
    .unwrap();
    let h2 = SpaceTimeGrid::from_fn(2, m, k + 1, horizon / k as f64, |c, u: f64, _| ((c + 1) as f64 * TAU * u).cos())
        .unwrap();
    let rep = collapse_check(&rho3, &[vec![1], vec![2, 3]], &h2).unwrap();
    assert!(rep.difference <= 1e-8, "{rep:?}");
    assert!(collapse_check(&rho3, &[vec![1], vec![2]], &h2).is_err());
}

#[test]
fn evaluation_report_fields() {
    let (rho, _) = manufactured(24, 20, 0.05);
    let eval = evaluate(&rho, &gamma(24), &RieszOptions::default(), &TrigBasis { spatial: 2, temporal: 1 }).unwrap();
    assert!(eval.h.abs() < 1e-15);
    let json = serde_json::to_value(eval.report(&rho)).unwrap();
    for key in ["h", "I0", "I_total", "residual", "variational_lb", "gauge", "delta_clip", "grid"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert_eq!(json["gauge"], "zero-mean");
    assert_eq!(json["grid"]["M"], 24);
    assert_eq!(json["grid"]["K"], 20);
}
