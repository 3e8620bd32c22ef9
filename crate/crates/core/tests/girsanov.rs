use std::f64::consts::TAU;

use stirlab::girsanov::{
    carre_du_champ, check_mean_one, dynkin_martingale, generator_exponential_action, girsanov_weight,
    lattice_bound_constant, log_rn_event_form, log_rn_martingale_form, stated_bound_constant, MeanEstimate,
    WeightDirection,
};
use stirlab::process::exact::generator_matrix;
use stirlab::process::{
    sample_product_multinomial, simulate, simulate_on, Configuration, Event, EventLog, LatticeField, LogHeader,
    SimParams, SimulatedPath,
};
use stirlab::rng::stream;
use stirlab::{PotentialSet, ProfileGrid, SpaceTimeGrid};

fn potentials(amp: f64, horizon: f64) -> PotentialSet<f64> {
    let g = SpaceTimeGrid::from_fn(2, 64, 5, horizon / 4.0, |c, u: f64, t: f64| {
        if c == 0 {
            amp * (TAU * u).sin() * (1.0 + 3.0 * t)
        } else {
            amp * (0.6 * (TAU * u).cos() - 0.4 * (2.0 * TAU * u).sin()) - t
        }
    })
    .unwrap();
    PotentialSet::from_species(g)
}

fn uniform(n: usize) -> ProfileGrid<f64> {
    ProfileGrid::constant(2, n, &[1.0 / 3.0, 1.0 / 3.0]).unwrap()
}

/// Event form recomputed directly from the potentials, with composite
/// Simpson quadrature between events.
fn event_form_oracle(path: &SimulatedPath, h: &PotentialSet<f64>) -> f64 {
    let n = path.initial().n_sites();
    let n2 = (n * n) as f64;
    let rate = |c: &Configuration, s: f64| -> f64 {
        (0..n)
            .map(|x| {
                let (a, b) = (c.label(x) as usize, c.label(x + 1) as usize);
                if a == b { 0.0 } else { h.lattice_gradient(a, b, x, n, s).exp_m1() }
            })
            .sum()
    };
    let simpson = |c: &Configuration, s0: f64, s1: f64| -> f64 {
        let panels = 64;
        let w = (s1 - s0) / panels as f64;
        let mut acc = 0.0;
        for i in 0..panels {
            let a = s0 + i as f64 * w;
            acc += w / 6.0 * (rate(c, a) + 4.0 * rate(c, a + 0.5 * w) + rate(c, a + w));
        }
        acc
    };
    let mut c = path.initial().clone();
    let mut s = 0.0;
    let mut total = 0.0;
    for e in path.events() {
        total -= n2 * simpson(&c, s, e.t);
        total += h.lattice_gradient(e.alpha as usize, e.beta as usize, e.x as usize, n, e.t);
        c = c.apply_exchange(e.x as usize, e.alpha, e.beta);
        s = e.t;
    }
    total - n2 * simpson(&c, s, path.horizon())
}

#[test]
fn pathwise_identity_under_both_measures() {
    let (n, t) = (16, 0.1);
    let h = potentials(0.7, t);
    let field = LatticeField::new(&h, n);
    let flat = LatticeField::new(&PotentialSet::zero(2), n);
    let params = SimParams::new(n, t, 11);
    for r in 0..60 {
        let mut rng = stream(11, r);
        let c0 = sample_product_multinomial(&uniform(n), n, &mut rng).unwrap();
        let path = simulate_on(&c0, if r % 2 == 0 { &field } else { &flat }, &params, &mut rng).unwrap();
        let w = girsanov_weight(&path, &h).unwrap();
        assert!((w.log_rn_event - w.log_rn_martingale).abs() <= 1e-8, "replica {r}: {w:?}");
        assert!((w.log_rn_event - (w.jump_term - w.compensator)).abs() < 1e-12);
    }
}

#[test]
fn event_form_matches_quadrature_oracle() {
    let (n, t) = (10, 0.08);
    let h = potentials(0.5, t);
    for r in 0..5 {
        let c0 = sample_product_multinomial(&uniform(n), n, &mut stream(3, 100 + r)).unwrap();
        let path = simulate(&c0, &h, &SimParams::new(n, t, 3 + r)).unwrap();
        let got = log_rn_event_form(&path, &h).unwrap().log_rn;
        let want = event_form_oracle(&path, &h);
        assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn two_site_two_event_oracle() {
    let h = PotentialSet::from_species(SpaceTimeGrid::stationary(1, 2, |_, u: f64| if u == 0.0 { 0.2 } else { 0.9 }).unwrap());
    let d: f64 = 0.7;
    let (t1, t2, horizon) = (0.13, 0.41, 0.5);
    let log = EventLog {
        header: LogHeader { n_sites: 2, n_species: 1, horizon, seed: 0 },
        events: vec![Event { t: t1, x: 0, alpha: 1, beta: 0 }, Event { t: t2, x: 1, alpha: 1, beta: 0 }],
    };
    let path = SimulatedPath::new(Configuration::new(1, vec![1, 0]).unwrap(), log).unwrap();
    let comp = 4.0 * 2.0 * (t1 * d.exp_m1() + (t2 - t1) * (-d).exp_m1() + (horizon - t2) * d.exp_m1());
    let want = d - d - comp;
    let ev = log_rn_event_form(&path, &h).unwrap();
    assert!((ev.jump_term).abs() < 1e-15);
    assert!((ev.log_rn - want).abs() < 1e-13, "{} vs {want}", ev.log_rn);
    let mg = log_rn_martingale_form(&path, &h).unwrap();
    assert!((mg.log_rn - want).abs() < 1e-13);
}

#[test]
fn zero_potential_has_unit_weight() {
    let est = check_mean_one(&uniform(8), &PotentialSet::zero(2), &SimParams::new(8, 0.1, 1), 100, WeightDirection::Forward)
        .unwrap();
    assert_eq!(est.mean, 1.0);
    assert_eq!(est.std_error, 0.0);
    assert!(check_mean_one(&uniform(8), &PotentialSet::zero(2), &SimParams::new(8, 0.1, 1), 99, WeightDirection::Forward)
        .is_err());
}

#[test]
fn mean_one_in_both_directions() {
    let (n, t) = (8, 0.1);
    let h = potentials(0.6, t);
    for dir in [WeightDirection::Forward, WeightDirection::Reverse] {
        let est = check_mean_one(&uniform(n), &h, &SimParams::new(n, t, 21), 1500, dir).unwrap();
        assert!(est.within(1.0, 4.0), "{dir:?}: {est:?}");
        assert!(est.std_error > 0.0);
    }
}

#[test]
fn log_weight_respects_bounds() {
    let (n, t) = (16, 0.1);
    let h = potentials(0.8, t);
    let field = LatticeField::new(&h, n);
    let lattice = lattice_bound_constant(&field, t);
    let stated = stated_bound_constant(&h, t);
    let mut worst: f64 = f64::NEG_INFINITY;
    for r in 0..40 {
        let mut rng = stream(9, r);
        let c0 = sample_product_multinomial(&uniform(n), n, &mut rng).unwrap();
        let path = simulate_on(&c0, &field, &SimParams::new(n, t, 9), &mut rng).unwrap();
        worst = worst.max(log_rn_event_form(&path, &h).unwrap().log_rn / n as f64);
    }
    assert!(worst <= lattice, "{worst} > {lattice}");
    assert!(worst <= stated, "{worst} > {stated}");
}

#[test]
fn taylor_action_is_close_for_small_gradients() {
    let n = 64;
    let h = potentials(0.3, 0.1);
    let field = LatticeField::new(&h, n);
    let c = sample_product_multinomial(&uniform(n), n, &mut stream(4, 0)).unwrap();
    let (exact, taylor) = generator_exponential_action(&c, &field, 0.05);
    // the gap is a sum of N terms of size N²·O(N^{-3})
    assert!((exact - taylor).abs() < 2.0, "{exact} {taylor}");
}

/// Exact `E_η[f(η_T)]` under the symmetric dynamics.
fn symmetric_expectation(c0: &Configuration, f: impl Fn(&Configuration) -> f64, t: f64) -> f64 {
    let n = c0.n_sites();
    let field = LatticeField::new(&PotentialSet::zero(2), n);
    let p = (generator_matrix(&field, 0.0, (n * n) as f64).unwrap() * t).exp();
    let row = c0.index();
    (0..p.ncols())
        .map(|j| p[(row, j)] * f(&Configuration::from_index(2, n, j).unwrap()))
        .sum()
}

#[test]
fn tilted_paths_reweighted_reproduce_symmetric_law() {
    let (n, t) = (5, 0.05);
    let h = potentials(0.8, t);
    let field = LatticeField::new(&h, n);
    let c0 = Configuration::new(2, vec![1, 1, 0, 2, 0]).unwrap();
    let f = |c: &Configuration| if c.label(0) == 1 { 1.0 } else { 0.0 };
    let want = symmetric_expectation(&c0, f, t);
    let params = SimParams::new(n, t, 77);
    let samples: Vec<f64> = (0..4000)
        .map(|r| {
            let path = simulate_on(&c0, &field, &params, &mut stream(77, r)).unwrap();
            let l = log_rn_event_form(&path, &h).unwrap().log_rn;
            (-l).exp() * f(&path.final_config().unwrap())
        })
        .collect();
    let est = MeanEstimate::from_samples(&samples);
    assert!(est.within(want, 4.0), "{est:?} vs {want}");
}

#[test]
fn dynkin_martingale_diagnostics() {
    let n = 16;
    let t = 0.1;
    let h = potentials(0.5, t);
    let constant = PotentialSet::from_species(SpaceTimeGrid::stationary(2, 8, |c, _| [0.4, -1.1][c]).unwrap());
    let g = PotentialSet::from_species(
        SpaceTimeGrid::from_fn(2, 64, 3, 0.05, |c, u: f64, s: f64| (1.0 + s) * ((c + 1) as f64 * TAU * u).cos()).unwrap(),
    );
    let field = LatticeField::new(&h, n);
    let mut samples = Vec::new();
    for r in 0..400 {
        let mut rng = stream(31, r);
        let c0 = sample_product_multinomial(&uniform(n), n, &mut rng).unwrap();
        let path = simulate_on(&c0, &field, &SimParams::new(n, t, 31), &mut rng).unwrap();
        if r < 5 {
            assert!(dynkin_martingale(&path, &constant, &h, t).unwrap().abs() < 1e-12);
            assert_eq!(carre_du_champ(&c0, &constant, &h, 0.0), 0.0);
        }
        samples.push(dynkin_martingale(&path, &g, &h, t).unwrap());
    }
    let est = MeanEstimate::from_samples(&samples);
    assert!(est.within(0.0, 4.0), "{est:?}");
}

#[test]
fn carre_du_champ_is_order_one_over_n() {
    let h = potentials(0.5, 0.1);
    let g = PotentialSet::from_species(SpaceTimeGrid::stationary(2, 512, |c, u: f64| ((c + 1) as f64 * TAU * u).sin()).unwrap());
    let mut scaled = Vec::new();
    for n in [32, 64, 128] {
        let mut acc = 0.0;
        for r in 0..20 {
            let c = sample_product_multinomial(&uniform(n), n, &mut stream(8, r)).unwrap();
            acc += n as f64 * carre_du_champ(&c, &g, &h, 0.05);
        }
        scaled.push(acc / 20.0);
    }
    let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    assert!(hi / lo < 1.5 && hi < 100.0, "{scaled:?}");
}
