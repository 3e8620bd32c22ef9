//! Subcommand implementations. Each writes its artifacts and returns a JSON
//! summary for the manifest.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use stirlab::empirical::{empirical_density, smooth, v_time_integral, window_half_width, SmoothingKernel};
use stirlab::ensembles::{block_gap_statistics, equivalence_gap};
use stirlab::girsanov::{
    girsanov_weight, lattice_bound_constant, sample_weights, stated_bound_constant, MeanEstimate, WeightDirection,
};
use stirlab::hydro::{einstein_residual, simplex_violation, solve_hydro, species_mean, SchemeParams};
use stirlab::process::{sample_product_multinomial, simulate_on, LatticeField, SimParams, SimulatedPath};
use stirlab::rate::{evaluate, HilbertMetric, RieszOptions, TrigBasis};
use stirlab::rng::stream;
use stirlab::{PotentialSet, SpaceTimeGrid, Trajectory};

use crate::config::{observable, Config, Model, StepperKind};
use crate::output::{Artifacts, Table};

/// Replica `r` at lattice size `n` draws from stream `(seed, n·2³² + r)`.
fn replica_stream(seed: u64, n: usize, r: usize) -> stirlab::rng::StreamRng {
    stream(seed, ((n as u64) << 32) | r as u64)
}

fn simulate_replicas(
    model: &Model,
    potentials: &PotentialSet<f64>,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<SimulatedPath>> {
    let profile = model.profile()?;
    let field = LatticeField::new(potentials, n);
    let params = SimParams::new(n, model.horizon, seed);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_stream(seed, n, r);
            let c0 = sample_product_multinomial(&profile, n, &mut rng)?;
            Ok(simulate_on(&c0, &field, &params, &mut rng)?)
        })
        .collect()
}

fn solve(cfg: &Config, model: &Model) -> Result<Trajectory> {
    let g = cfg.grid()?;
    let gamma = model.profile_on(g.m)?;
    let scheme = match g.stepper {
        StepperKind::Explicit => SchemeParams::explicit(g.m, model.horizon, g.k),
        StepperKind::Imex => SchemeParams::imex(g.m, g.dt.context("imex needs grid.dt")?, model.horizon, g.k),
    };
    Ok(solve_hydro(&gamma, &model.potentials()?, &scheme)?)
}

fn species_columns(prefix: &[&str], n: usize) -> Vec<String> {
    prefix.iter().map(|s| s.to_string()).chain((1..=n).map(|a| format!("rho_{a}"))).collect()
}

fn table_with(columns: Vec<String>) -> Table {
    Table { columns, rows: Vec::new() }
}

pub fn simulate(cfg: &Config, seed: u64, art: &mut Artifacts) -> Result<Value> {
    let (model, lattice) = (cfg.model()?, cfg.lattice()?);
    let potentials = model.potentials()?;
    let mut summary = Table::new(&["N", "replica", "events"]);
    for &n in &lattice.sites {
        let paths = simulate_replicas(model, &potentials, n, lattice.replicas, seed)?;
        for (r, path) in paths.iter().enumerate() {
            art.write_with(&format!("N{n}/replica{r:04}.events.jsonl"), |w| Ok(path.log().write_jsonl(w)?))?;
            let density = empirical_density(&path.final_config()?);
            art.write_with(&format!("N{n}/replica{r:04}.density.csv"), |w| Ok(density.write_csv(w)?))?;
            summary.push(vec![n as f64, r as f64, path.events().len() as f64]);
        }
    }
    art.write_table("simulate", &summary)?;
    let events: f64 = summary.rows.iter().map(|r| r[2]).sum();
    Ok(json!({ "paths": summary.rows.len(), "events": events }))
}

pub fn hydro(cfg: &Config, _seed: u64, art: &mut Artifacts) -> Result<Value> {
    let model = cfg.model()?;
    let traj = solve(cfg, model)?;
    let (n, m) = (traj.components(), traj.m());
    let mut full = table_with(species_columns(&["t", "u"], n));
    for k in 0..traj.slices() {
        let t = k as f64 * traj.dt();
        for j in 0..m {
            let mut row = vec![t, j as f64 / m as f64];
            row.extend((0..n).map(|a| traj.get(a, j, k)));
            full.push(row);
        }
    }
    art.write_table("trajectory", &full)?;
    let mut last = table_with(species_columns(&["u"], n));
    for j in 0..m {
        let mut row = vec![j as f64 / m as f64];
        row.extend((0..n).map(|a| traj.get(a, j, traj.slices() - 1)));
        last.push(row);
    }
    let names: Vec<String> = (1..=n).map(|a| format!("rho_{a}")).collect();
    let ys: Vec<&str> = names.iter().map(String::as_str).collect();
    art.write_plot("final_profile", &last, "u", &ys, false)?;
    let mut drift: f64 = 0.0;
    for a in 0..n {
        let m0 = species_mean(&traj, a, 0);
        for k in 1..traj.slices() {
            drift = drift.max((species_mean(&traj, a, k) - m0).abs());
        }
    }
    Ok(json!({
        "M": m,
        "K": traj.slices() - 1,
        "mass_drift": drift,
        "simplex_violation": simplex_violation(&traj),
    }))
}

/// Evaluates the rate functional on the hydrodynamic trajectory driven by the
/// configured potential; `½‖H‖²` on that trajectory is the exact dynamic cost
/// and is reported next to the recovered value.
pub fn rate(cfg: &Config, seed: u64, art: &mut Artifacts) -> Result<Value> {
    let model = cfg.model()?;
    let rho = solve(cfg, model)?;
    let gamma = model.profile_on(rho.m())?;
    let opts = RieszOptions { delta: cfg.rate.delta_clip, residual_tests: cfg.rate.residual_tests, seed };
    let basis = TrigBasis { spatial: cfg.rate.basis_spatial, temporal: cfg.rate.basis_temporal };
    let eval = evaluate(&rho, &gamma, &opts, &basis)?;
    let report = eval.report(&rho);
    art.write_json("rate.json", &report)?;
    let h = SpaceTimeGrid::from_fn(model.n_species, rho.m(), rho.slices(), rho.dt(), |c, u, t| {
        model.potential.get(c).map_or(0.0, |f| f.eval(u, t))
    })?;
    let target = 0.5 * HilbertMetric::new(&rho, cfg.rate.delta_clip)?.norm_sq(&h)?;
    Ok(json!({
        "I0": report.i0,
        "I_total": report.i_total,
        "residual": report.residual,
        "variational_lb": report.variational_lb,
        "driving_cost": target,
        "relative_error": if target > 0.0 { (report.i0 - target).abs() / target } else { report.i0.abs() },
    }))
}

pub fn girsanov(cfg: &Config, seed: u64, art: &mut Artifacts) -> Result<Value> {
    let (model, lattice) = (cfg.model()?, cfg.lattice()?);
    let potentials = model.potentials()?;
    let profile = model.profile()?;
    let mut table =
        Table::new(&["N", "mean_weight", "std_error", "max_identity_gap", "lattice_bound", "stated_bound"]);
    for &n in &lattice.sites {
        let params = SimParams::new(n, model.horizon, seed);
        let weights: Vec<f64> = (0..lattice.replicas as u64)
            .into_par_iter()
            .map(|r| Ok(sample_weights(&profile, &potentials, &params, r..r + 1, WeightDirection::Forward)?[0]))
            .collect::<Result<_>>()?;
        let est = MeanEstimate::from_samples(&weights);
        let tilted = simulate_replicas(model, &potentials, n, lattice.replicas.min(32), seed ^ 0x9e37_79b9)?;
        let gap = tilted
            .iter()
            .map(|p| girsanov_weight(p, &potentials).map(|w| (w.log_rn_event - w.log_rn_martingale).abs()))
            .collect::<stirlab::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let field = LatticeField::new(&potentials, n);
        table.push(vec![
            n as f64,
            est.mean,
            est.std_error,
            gap,
            lattice_bound_constant(&field, model.horizon),
            stated_bound_constant(&potentials, model.horizon),
        ]);
    }
    art.write_plot("girsanov", &table, "N", &["mean_weight"], false)?;
    let gap = table.rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    Ok(json!({ "max_identity_gap": gap, "points": table.rows.len() }))
}

pub fn blocks(cfg: &Config, _seed: u64, art: &mut Artifacts) -> Result<Value> {
    let b = cfg.blocks.as_ref().context("config needs a [blocks] section")?;
    let phi = observable(b.n_species, &b.labels)?;
    let start = b.labels.len().saturating_sub(1).div_ceil(2).max(1);
    let rows: Vec<Vec<f64>> = (start..=b.k_max)
        .into_par_iter()
        .map(|k| {
            let g = block_gap_statistics(&phi, k)?;
            Ok(vec![k as f64, (2 * k + 1) as f64, g.one_block, g.two_block])
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["k", "block", "one_block", "two_block"]);
    rows.into_iter().for_each(|r| table.push(r));
    art.write_plot("blocks", &table, "k", &["one_block", "two_block"], true)?;
    Ok(json!({ "rows": table.rows.len() }))
}

/// Hit probability of `(1/N)∫V ≥ δ` for each lattice size; every sweep point
/// writes its per-replica integrals into its own directory.
pub fn sweep(cfg: &Config, seed: u64, art: &mut Artifacts) -> Result<Value> {
    let (model, lattice, stat) = (cfg.model()?, cfg.lattice()?, cfg.statistic()?);
    let potentials = model.potentials()?;
    let phi = observable(model.n_species, &stat.labels)?;
    let points: Vec<(usize, Vec<f64>)> = lattice
        .sites
        .par_iter()
        .map(|&n| {
            let paths = simulate_replicas(model, &potentials, n, lattice.replicas, seed)?;
            let v = paths
                .iter()
                .map(|p| Ok(v_time_integral(p, &phi, stat.eps)?.1))
                .collect::<Result<Vec<f64>>>()?;
            Ok((n, v))
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["N", "replicas", "mean_integral", "p_hat", "std_error", "log_rate"]);
    for (n, v) in &points {
        let mut samples = Table::new(&["replica", "integral_over_N"]);
        v.iter().enumerate().for_each(|(r, &x)| samples.push(vec![r as f64, x]));
        art.write_table(&format!("N{n}/samples"), &samples)?;
        let hits: Vec<f64> = v.iter().map(|&x| if x >= stat.delta { 1.0 } else { 0.0 }).collect();
        let p = MeanEstimate::from_samples(&hits);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        table.push(vec![*n as f64, v.len() as f64, mean, p.mean, p.std_error, p.mean.ln() / *n as f64]);
    }
    art.write_plot("sweep", &table, "N", &["log_rate"], false)?;
    let rates: Vec<f64> = table.rows.iter().map(|r| r[5]).collect();
    let non_increasing = rates.windows(2).all(|w| w[1] <= w[0]);
    Ok(json!({ "log_rates": rates, "non_increasing": non_increasing }))
}

/// Outcome of a `verify` subcommand.
pub struct Verdict {
    pub pass: bool,
    pub summary: Value,
}

pub fn verify_einstein(cfg: &Config, art: &mut Artifacts) -> Result<Verdict> {
    let points = cfg.einstein.as_ref().map_or(50, |e| e.points);
    let mut table = Table::new(&["rho_1", "rho_2", "residual"]);
    let step = 1.0 / (points + 1) as f64;
    for i in 1..=points {
        for j in 1..=points {
            let (a, b) = (i as f64 * step, j as f64 * step);
            if a + b < 1.0 {
                table.push(vec![a, b, einstein_residual(&[a, b])?]);
            }
        }
    }
    art.write_table("einstein", &table)?;
    let worst = table.rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    Ok(Verdict { pass: worst <= 1e-12, summary: json!({ "max_residual": worst, "points": table.rows.len() }) })
}

pub fn verify_martingale(cfg: &Config, seed: u64, art: &mut Artifacts) -> Result<Verdict> {
    let (model, lattice) = (cfg.model()?, cfg.lattice()?);
    if lattice.replicas < 100 {
        bail!("the martingale check needs at least 100 replicas");
    }
    let potentials = model.potentials()?;
    let profile = model.profile()?;
    let mut table = Table::new(&["N", "mean_weight", "std_error", "z_score"]);
    let mut pass = true;
    for &n in &lattice.sites {
        let params = SimParams::new(n, model.horizon, seed);
        let weights: Vec<f64> = (0..lattice.replicas as u64)
            .into_par_iter()
            .map(|r| Ok(sample_weights(&profile, &potentials, &params, r..r + 1, WeightDirection::Forward)?[0]))
            .collect::<Result<_>>()?;
        let est = MeanEstimate::from_samples(&weights);
        pass &= est.within(1.0, 4.0);
        let z = if est.std_error > 0.0 { (est.mean - 1.0) / est.std_error } else { 0.0 };
        table.push(vec![n as f64, est.mean, est.std_error, z]);
    }
    art.write_table("martingale", &table)?;
    Ok(Verdict { pass, summary: json!({ "rows": table.rows.len() }) })
}

/// Mean L¹ distance between smoothed empirical densities at time `T` and the
/// same moving average of the hydrodynamic solution sampled at `x/N`.
pub fn verify_hydro_limit(cfg: &Config, seed: u64, art: &mut Artifacts) -> Result<Verdict> {
    let (model, lattice) = (cfg.model()?, cfg.lattice()?);
    let eps = cfg.smoothing.unwrap_or(0.05);
    let traj = solve(cfg, model)?;
    let (m, last) = (traj.m(), traj.slices() - 1);
    for &n in &lattice.sites {
        if m % n != 0 {
            bail!("grid.m = {m} must be a multiple of every lattice size (got N = {n})");
        }
    }
    let potentials = model.potentials()?;
    let kernel = SmoothingKernel::new(eps)?;
    let ns = model.n_species;
    let mut table = Table::new(&["N", "mean_l1", "std_error"]);
    for &n in &lattice.sites {
        let k = window_half_width(n, eps).min((n - 1) / 2);
        let target: Vec<Vec<f64>> = (0..ns)
            .map(|a| {
                let v: Vec<f64> = (0..n).map(|x| traj.get(a, x * (m / n), last)).collect();
                (0..n).map(|x| (0..=2 * k).map(|i| v[(x + 2 * n + i - k) % n]).sum::<f64>() / (2 * k + 1) as f64).collect()
            })
            .collect();
        let paths = simulate_replicas(model, &potentials, n, lattice.replicas, seed)?;
        let dist = paths
            .iter()
            .map(|p| {
                let s = smooth(&empirical_density(&p.final_config()?), &kernel);
                let l1: f64 =
                    (0..ns).flat_map(|a| (0..n).map(move |x| (a, x))).map(|(a, x)| (s.density(a + 1, x) - target[a][x]).abs()).sum();
                Ok(l1 / n as f64)
            })
            .collect::<Result<Vec<f64>>>()?;
        let est = MeanEstimate::from_samples(&dist);
        table.push(vec![n as f64, est.mean, est.std_error]);
    }
    art.write_plot("hydro_limit", &table, "N", &["mean_l1"], true)?;
    let means: Vec<f64> = table.rows.iter().map(|r| r[1]).collect();
    let pass = means.windows(2).all(|w| w[1] < w[0]);
    Ok(Verdict { pass, summary: json!({ "mean_l1": means, "decreasing": pass }) })
}

pub fn verify_equivalence(cfg: &Config, art: &mut Artifacts) -> Result<Verdict> {
    let e = cfg.equivalence.as_ref().context("config needs an [equivalence] section")?;
    let phi = observable(e.n_species, &e.labels)?;
    let rows: Vec<Vec<f64>> = e
        .sites
        .par_iter()
        .map(|&n| Ok(vec![n as f64, equivalence_gap(&phi, n)?]))
        .collect::<Result<_>>()?;
    let mut table = Table::new(&["N", "gap"]);
    rows.into_iter().for_each(|r| table.push(r));
    art.write_plot("equivalence", &table, "N", &["gap"], true)?;
    let mut by_n = table.rows.clone();
    by_n.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let pass = by_n.windows(2).all(|w| w[1][1] < w[0][1]);
    let gaps: Vec<f64> = table.rows.iter().map(|r| r[1]).collect();
    Ok(Verdict { pass, summary: json!({ "gaps": gaps, "decreasing": pass }) })
}

