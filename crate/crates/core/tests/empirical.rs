use rand::Rng;
use stirlab::empirical::{
    block_average, empirical_density, pair, smooth, tilde_phi, v_statistic, v_time_integral, LocalObservable,
    SmoothingKernel,
};
use stirlab::process::{sample_product_multinomial, simulate, Configuration, SimParams};
use stirlab::rng::stream;
use stirlab::{PotentialSet, ProfileGrid, SpaceTimeGrid};

#[test]
fn empirical_totals() {
    let c = Configuration::filled(2, 12, 1).unwrap();
    let f = empirical_density(&c);
    assert!((f.total(1) - 1.0).abs() < 1e-15);
    assert_eq!(f.total(2), 0.0);
    let alt = Configuration::new(2, (0..10).map(|i| 1 + (i % 2) as u8).collect()).unwrap();
    let f = empirical_density(&alt);
    assert!((f.total(1) - 0.5).abs() < 1e-15 && (f.total(2) - 0.5).abs() < 1e-15);
    let n = 10_000;
    let p = ProfileGrid::constant(2, 4, &[1.0 / 3.0, 1.0 / 3.0]).unwrap();
    let c = sample_product_multinomial(&p, n, &mut stream(2, 0)).unwrap();
    let f = empirical_density(&c);
    let tol = 4.0 * (2.0 / (9.0 * n as f64)).sqrt();
    for a in 0..3 {
        assert!((f.total(a) - 1.0 / 3.0).abs() < tol);
    }
}

#[test]
fn pairing_examples() {
    let n = 16;
    let ones = SpaceTimeGrid::stationary(2, n, |_, _| 1.0).unwrap();
    let c = Configuration::new(2, (0..n).map(|i| (i % 3) as u8).collect()).unwrap();
    let f = empirical_density(&c);
    let want = (c.counts()[1] + c.counts()[2]) as f64 / n as f64;
    assert!((pair(&f, &ones, 0.0).unwrap() - want).abs() < 1e-15);
    let empty = empirical_density(&Configuration::filled(2, n, 0).unwrap());
    assert_eq!(pair(&empty, &ones, 0.0).unwrap(), 0.0);
    let mut sites = vec![0u8; n];
    sites[5] = 1;
    let one = empirical_density(&Configuration::new(2, sites).unwrap());
    let sine = SpaceTimeGrid::stationary(2, n, |c, u: f64| if c == 0 { (std::f64::consts::TAU * u).sin() } else { 0.0 })
        .unwrap();
    let want = (std::f64::consts::TAU * 5.0 / n as f64).sin() / n as f64;
    assert!((pair(&one, &sine, 0.0).unwrap() - want).abs() < 1e-15);
    let wrong = SpaceTimeGrid::stationary(1, n, |_, _| 1.0).unwrap();
    assert!(pair(&f, &wrong, 0.0).is_err());
}

#[test]
fn homogeneous_block_average() {
    let c = Configuration::filled(2, 9, 2).unwrap();
    assert_eq!(block_average(&c, 4, 2), vec![0.0, 1.0]);
}

#[test]
fn tilde_phi_matches_sampling() {
    let mut rng = stream(5, 0);
    for trial in 0..4 {
        let support = 1 + trial % 3;
        let len = 3usize.pow(support as u32);
        let table: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        let phi = LocalObservable::new(2, support, table).unwrap();
        let p = [0.2 + 0.1 * trial as f64, 0.25];
        let exact = tilde_phi(&phi, &p);
        let n = 40_000;
        let mut s = 0.0;
        let mut s2 = 0.0;
        let mut sampler = stream(50 + trial as u64, 0);
        let prof = ProfileGrid::constant(2, 1, &p).unwrap();
        let c = sample_product_multinomial(&prof, n * support, &mut sampler).unwrap();
        for i in 0..n {
            let v = phi.eval_at(&c, i * support);
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let sd = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * sd, "trial {trial}: {mean} vs {exact}");
    }
}

/// Direct evaluation of the statistic from its definition.
fn v_oracle(c: &Configuration, phi: &LocalObservable, k: usize) -> f64 {
    let n = c.n_sites();
    let mut v = 0.0;
    for x in 0..n {
        let mut avg = 0.0;
        let mut counts = [0usize; 3];
        for d in 0..=2 * k {
            let y = (x + n - k + d) % n;
            let mut idx = 0;
            let mut mul = 1;
            for i in 0..phi.support() {
                idx += c.label(y + i) as usize * mul;
                mul *= 3;
            }
            avg += phi.table()[idx];
            counts[c.label(y) as usize] += 1;
        }
        avg /= (2 * k + 1) as f64;
        let w = (2 * k + 1) as f64;
        let p = [counts[1] as f64 / w, counts[2] as f64 / w];
        let p0 = 1.0 - p[0] - p[1];
        let probs = [p0, p[0], p[1]];
        let mut tilde = 0.0;
        for (i, &val) in phi.table().iter().enumerate() {
            let mut w = 1.0;
            let mut r = i;
            for _ in 0..phi.support() {
                w *= probs[r % 3];
                r /= 3;
            }
            tilde += val * w;
        }
        v += (avg - tilde).abs();
    }
    v
}

#[test]
fn v_statistic_examples() {
    let single = LocalObservable::occupation_product(2, &[1]).unwrap();
    let pairphi = LocalObservable::occupation_product(2, &[1, 1]).unwrap();
    let c = Configuration::new(2, vec![1, 2, 0, 1, 1, 0, 2, 2, 1, 0, 1, 2]).unwrap();
    assert!(v_statistic(&c, &single, 0.2).unwrap().abs() < 1e-15);
    let ones = Configuration::filled(2, 12, 1).unwrap();
    assert_eq!(v_statistic(&ones, &pairphi, 0.2).unwrap(), 0.0);
    let six = Configuration::new(2, vec![1, 1, 0, 2, 1, 0]).unwrap();
    let got = v_statistic(&six, &pairphi, 1.0 / 3.0).unwrap();
    assert!((got - v_oracle(&six, &pairphi, 2)).abs() < 1e-14);
    assert!(got > 0.0);
}

#[test]
fn v_time_integral_matches_resampling() {
    let phi = LocalObservable::occupation_product(2, &[1, 2]).unwrap();
    let c0 = Configuration::new(2, (0..20).map(|i| ((i * 7) % 3) as u8).collect()).unwrap();
    let path = simulate(&c0, &PotentialSet::zero(2), &SimParams::new(20, 0.01, 3)).unwrap();
    let (raw, scaled) = v_time_integral(&path, &phi, 0.15).unwrap();
    let mut want = 0.0;
    let mut s = 0.0;
    let mut c = c0.clone();
    for e in path.events() {
        want += v_oracle(&c, &phi, 3) * (e.t - s);
        c = c.apply_exchange(e.x as usize, e.alpha, e.beta);
        s = e.t;
    }
    want += v_oracle(&c, &phi, 3) * (0.01 - s);
    assert!((raw - want).abs() < 1e-10 * want.max(1.0));
    assert!((scaled - raw / 20.0).abs() < 1e-15);
}

#[test]
fn smoothing_preserves_mass_and_constants() {
    let c = Configuration::new(2, (0..37).map(|i| ((i * i) % 3) as u8).collect()).unwrap();
    let f = empirical_density(&c);
    let s = smooth(&f, &SmoothingKernel::new(0.13).unwrap());
    for a in 0..3 {
        assert!((s.total(a) - f.total(a)).abs() < 1e-14);
    }
    let flat = empirical_density(&Configuration::filled(2, 20, 2).unwrap());
    let sf = smooth(&flat, &SmoothingKernel::new(0.2).unwrap());
    for x in 0..20 {
        assert!((sf.density(2, x) - 1.0).abs() < 1e-14);
    }
    assert!(SmoothingKernel::new(0.5).is_err());
}

#[test]
fn csv_export_columns() {
    let f = empirical_density(&Configuration::new(2, vec![1, 2, 0, 1]).unwrap());
    let mut buf = Vec::new();
    f.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("u,rho_1,rho_2"));
    assert_eq!(lines.next(), Some("0,1,0"));
    assert_eq!(text.lines().count(), 5);
}
