//! Radon–Nikodym weights of the weakly asymmetric path measure with respect
//! to the symmetric one, Dynkin martingales and the carré du champ.
//!
//! With `g_x(s) = ∇_N H_{η_x η_{x+1}}(x/N, s)` the log-weight of a path is
//!
//! `Σ_jumps g(t_k) − N²∫_0^T Σ_x (e^{g_x(s)} − 1) ds`                    (event form)
//!
//! and, when `H_{αβ} = H_α − H_β`, with `Φ(η, t) = Σ_x H_{η_x}(x/N, t) = N⟨μ_N, H⟩`,
//!
//! `Φ(η_T, T) − Φ(η_0, 0) − ∫_0^T [N²Σ_x (e^{g_x} − 1) + ∂_sΦ] ds`       (martingale form).
//!
//! Between jumps the configuration is frozen and the potentials are affine in
//! time on every cell of their grid, so all time integrals are evaluated in
//! closed form.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{PotentialSet, ProfileGrid};
use crate::process::{
    sample_product_multinomial, simulate_on, Configuration, LatticeField, SimParams, SimulatedPath,
};
use crate::rng::stream;

/// Both forms of the log-weight with their parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GirsanovWeight {
    pub log_rn_event: f64,
    pub log_rn_martingale: f64,
    /// `Σ_jumps ∇_N H_{αβ}`.
    pub jump_term: f64,
    /// `N²∫Σ_x (e^{g_x} − 1) ds`.
    pub compensator: f64,
    /// `N⟨μ(T), H(T)⟩ − N⟨μ(0), H(0)⟩`.
    pub boundary_terms: f64,
    /// `∫ N⟨μ(s), ∂_sH(s)⟩ ds`.
    pub time_derivative_term: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventForm {
    pub log_rn: f64,
    pub jump_term: f64,
    pub compensator: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MartingaleForm {
    pub log_rn: f64,
    pub boundary_terms: f64,
    pub compensator: f64,
    pub time_derivative_term: f64,
}

fn check_path(path: &SimulatedPath, field: &LatticeField) -> Result<()> {
    if field.n_sites() != path.initial().n_sites() || field.n_species() != path.initial().n_species() {
        return Err(Error::GridMismatch("potentials sampled for a different lattice".into()));
    }
    Ok(())
}

pub fn log_rn_event_form(path: &SimulatedPath, potentials: &PotentialSet<f64>) -> Result<EventForm> {
    log_rn_event_form_on(path, &LatticeField::new(potentials, path.initial().n_sites()))
}

/// Event form; the compensator is accumulated bond by bond, each bond being
/// integrated up to the next time its occupancy changes.
pub fn log_rn_event_form_on(path: &SimulatedPath, field: &LatticeField) -> Result<EventForm> {
    check_path(path, field)?;
    let n = field.n_sites();
    let horizon = path.horizon();
    if field.is_zero() {
        path.replay(|_, _, _| {}, |_, _| {})?;
        return Ok(EventForm { log_rn: 0.0, jump_term: 0.0, compensator: 0.0 });
    }
    let mut c = path.initial().clone();
    let mut last = vec![0.0f64; n];
    let mut jump = 0.0;
    let mut comp = 0.0;
    let mut prev_t = 0.0;
    for (i, e) in path.events().iter().enumerate() {
        if e.t < prev_t || e.t > horizon {
            return Err(Error::InconsistentEvent { index: i, detail: format!("time {} out of order", e.t) });
        }
        prev_t = e.t;
        let x = e.x as usize;
        if x >= n {
            return Err(Error::InconsistentEvent { index: i, detail: format!("bond {x} outside the torus") });
        }
        let bonds = [(x + n - 1) % n, x, (x + 1) % n];
        for (k, &b) in bonds.iter().enumerate() {
            if bonds[..k].contains(&b) {
                continue;
            }
            comp += field.integrate_rate_excess(c.label(b) as usize, c.label(b + 1) as usize, b, last[b], e.t);
            last[b] = e.t;
        }
        jump += field.grad(e.alpha as usize, e.beta as usize, x, e.t);
        crate::process::apply_event(&mut c, e, i)?;
    }
    for b in 0..n {
        comp += field.integrate_rate_excess(c.label(b) as usize, c.label(b + 1) as usize, b, last[b], horizon);
    }
    let comp = comp * (n * n) as f64;
    Ok(EventForm { log_rn: jump - comp, jump_term: jump, compensator: comp })
}

pub fn log_rn_martingale_form(path: &SimulatedPath, potentials: &PotentialSet<f64>) -> Result<MartingaleForm> {
    if !potentials.is_species_structured() {
        return invalid("the martingale form needs potentials of the form H_α − H_β");
    }
    log_rn_martingale_form_on(path, &LatticeField::new(potentials, path.initial().n_sites()))
}

/// Martingale form; every inter-event interval is integrated over all bonds.
/// `field` must come from species-structured potentials.
pub fn log_rn_martingale_form_on(path: &SimulatedPath, field: &LatticeField) -> Result<MartingaleForm> {
    check_path(path, field)?;
    let n = field.n_sites();
    let phi = |c: &Configuration, t: f64| -> f64 { (0..n).map(|x| field.value(c.label(x) as usize, x, t)).sum() };
    let mut comp = 0.0;
    let mut dterm = 0.0;
    let last = path.replay(
        |c, s0, s1| {
            if s1 <= s0 || field.is_zero() {
                return;
            }
            let mut local = 0.0;
            for x in 0..n {
                local += field.integrate_rate_excess(c.label(x) as usize, c.label(x + 1) as usize, x, s0, s1);
            }
            comp += local;
            field.for_each_piece(s0, s1, |p0, p1| {
                let mid = 0.5 * (p0 + p1);
                let rate: f64 = (0..n).map(|x| field.value_dt(c.label(x) as usize, x, mid)).sum();
                dterm += rate * (p1 - p0);
            });
        },
        |_, _| {},
    )?;
    let comp = comp * (n * n) as f64;
    let boundary = phi(&last, path.horizon()) - phi(path.initial(), 0.0);
    Ok(MartingaleForm {
        log_rn: boundary - comp - dterm,
        boundary_terms: boundary,
        compensator: comp,
        time_derivative_term: dterm,
    })
}

/// Both forms on one path.
pub fn girsanov_weight(path: &SimulatedPath, potentials: &PotentialSet<f64>) -> Result<GirsanovWeight> {
    let field = LatticeField::new(potentials, path.initial().n_sites());
    let ev = log_rn_event_form_on(path, &field)?;
    let mg = if potentials.is_species_structured() {
        log_rn_martingale_form_on(path, &field)?
    } else {
        return invalid("the martingale form needs potentials of the form H_α − H_β");
    };
    Ok(GirsanovWeight {
        log_rn_event: ev.log_rn,
        log_rn_martingale: mg.log_rn,
        jump_term: ev.jump_term,
        compensator: ev.compensator,
        boundary_terms: mg.boundary_terms,
        time_derivative_term: mg.time_derivative_term,
    })
}

/// `e^{−Φ} N²L e^{Φ}` at a configuration: the exact value
/// `N²Σ_x (e^{g_x} − 1)` and its second-order Taylor expansion
/// `N²Σ_x (g_x + g_x²/2)`. Diagnostic only.
pub fn generator_exponential_action(config: &Configuration, field: &LatticeField, t: f64) -> (f64, f64) {
    let n = config.n_sites();
    let (mut exact, mut taylor) = (0.0, 0.0);
    for x in 0..n {
        let g = field.grad(config.label(x) as usize, config.label(x + 1) as usize, x, t);
        exact += g.exp_m1();
        taylor += g + 0.5 * g * g;
    }
    let n2 = (n * n) as f64;
    (n2 * exact, n2 * taylor)
}

/// Largest macroscopic gradient `|∂_u H_{αβ}|` over the grid (forward
/// differences of grid values) and largest `|H_α|`.
pub fn potential_extrema(potentials: &PotentialSet<f64>) -> (f64, f64) {
    let Some(g) = potentials.grid() else { return (0.0, 0.0) };
    let n = potentials.n_species();
    let m = g.m();
    let hm = m as f64;
    let mut max_grad: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    for k in 0..g.slices() {
        let t = k as f64 * g.dt();
        for j in 0..m {
            let (u0, u1) = (j as f64 / hm, ((j + 1) % m) as f64 / hm);
            for a in 0..=n {
                max_h = max_h.max(potentials.species(a, u0, t).abs());
                for b in a + 1..=n {
                    let d = potentials.pair(a, b, u1, t) - potentials.pair(a, b, u0, t);
                    max_grad = max_grad.max(d.abs() * hm);
                }
            }
        }
    }
    (max_grad, max_h)
}

/// `c = 2T·max|∇H|·(1 + max|∇H|) + 2·max|H|`.
pub fn stated_bound_constant(potentials: &PotentialSet<f64>, horizon: f64) -> f64 {
    let (g, h) = potential_extrema(potentials);
    2.0 * horizon * g * (1.0 + g) + 2.0 * h
}

/// A bound on `(1/N) log Z` valid on every path of the lattice `field`:
/// `2·max|H| + T·(max|∂_tH| + max|N²Δ_N H|)`, from `e^g − 1 ≥ g` and a
/// summation by parts of the linear term.
pub fn lattice_bound_constant(field: &LatticeField, horizon: f64) -> f64 {
    if field.is_zero() {
        return 0.0;
    }
    let n = field.n_sites();
    let n2 = (n * n) as f64;
    let (mut mh, mut mdt, mut mlap): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let nodes = field.nodes();
    for (k, &t) in nodes.iter().enumerate() {
        for a in 1..=field.n_species() {
            for x in 0..n {
                let v = field.value(a, x, t);
                mh = mh.max(v.abs());
                let lap = field.value(a, (x + 1) % n, t) - 2.0 * v + field.value(a, (x + n - 1) % n, t);
                mlap = mlap.max((n2 * lap).abs());
                if k + 1 < nodes.len() {
                    let mid = 0.5 * (t + nodes[k + 1]);
                    mdt = mdt.max(field.value_dt(a, x, mid).abs());
                }
            }
        }
    }
    2.0 * mh + horizon * (mdt + mlap)
}

/// Monte-Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replicas: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let r = samples.len();
        let mean = samples.iter().sum::<f64>() / r as f64;
        let var = if r > 1 {
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r as f64 - 1.0)
        } else {
            0.0
        };
        Self { mean, std_error: (var / r as f64).sqrt(), replicas: r }
    }

    /// Whether `target` lies within `k` standard errors (exact equality
    /// accepted when the variance vanishes).
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error + 1e-12 * target.abs().max(1.0)
    }
}

/// Which measure the paths are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightDirection {
    /// Symmetric paths weighted by `exp(log_rn)`.
    Forward,
    /// Tilted paths weighted by `exp(−log_rn)`.
    Reverse,
}

/// Per-replica Radon–Nikodym weights; replica `r` draws its initial state
/// from `γ` and its dynamics from stream `(seed, r)`.
pub fn sample_weights(
    gamma: &ProfileGrid<f64>,
    potentials: &PotentialSet<f64>,
    params: &SimParams,
    replicas: std::ops::Range<u64>,
    direction: WeightDirection,
) -> Result<Vec<f64>> {
    let n = params.n_sites;
    let tilted = LatticeField::new(potentials, n);
    let flat = LatticeField::new(&PotentialSet::zero(potentials.n_species()), n);
    let sim_field = match direction {
        WeightDirection::Forward => &flat,
        WeightDirection::Reverse => &tilted,
    };
    replicas
        .map(|r| {
            let mut rng = stream(params.seed, r);
            let c0 = sample_product_multinomial(gamma, n, &mut rng)?;
            let path = simulate_on(&c0, sim_field, params, &mut rng)?;
            let l = log_rn_event_form_on(&path, &tilted)?.log_rn;
            Ok(match direction {
                WeightDirection::Forward => l.exp(),
                WeightDirection::Reverse => (-l).exp(),
            })
        })
        .collect()
}

/// Monte-Carlo estimate of `E^γ[Z_T]` (forward) or `E^{γ,H}[1/Z_T]` (reverse).
pub fn check_mean_one(
    gamma: &ProfileGrid<f64>,
    potentials: &PotentialSet<f64>,
    params: &SimParams,
    replicas: usize,
    direction: WeightDirection,
) -> Result<MeanEstimate> {
    if replicas < 100 {
        return invalid("at least 100 replicas are required");
    }
    let w = sample_weights(gamma, potentials, params, 0..replicas as u64, direction)?;
    Ok(MeanEstimate::from_samples(&w))
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// Splits `[s0, s1]` at the nodes of both fields.
fn joint_pieces(a: &LatticeField, b: &LatticeField, s0: f64, s1: f64, mut f: impl FnMut(f64, f64)) {
    a.for_each_piece(s0, s1, |p0, p1| b.for_each_piece(p0, p1, &mut f));
}

/// `N²L^H⟨μ_N, G⟩ = N Σ_x e^{∇_N H_{αβ}}·∇_N G_{αβ}` for the pair at each bond.
pub fn generator_on_pairing(config: &Configuration, g: &LatticeField, h: &LatticeField, t: f64) -> f64 {
    let n = config.n_sites();
    let mut s = 0.0;
    for x in 0..n {
        let (a, b) = (config.label(x) as usize, config.label(x + 1) as usize);
        if a != b {
            s += h.grad(a, b, x, t).exp() * g.grad(a, b, x, t);
        }
    }
    n as f64 * s
}

/// `M_N^G(t) = ⟨μ(t), G(t)⟩ − ⟨μ(0), G(0)⟩ − ∫_0^t (∂_s + N²L^H)⟨μ(s), G(s)⟩ ds`
/// for a path of the dynamics driven by `h` (`H ≡ 0` for the symmetric one).
/// `G` is given through its species components (`G_0 = 0`).
pub fn dynkin_martingale(
    path: &SimulatedPath,
    g: &PotentialSet<f64>,
    h: &PotentialSet<f64>,
    t: f64,
) -> Result<f64> {
    if !g.is_species_structured() {
        return invalid("test functions are given per species");
    }
    let n = path.initial().n_sites();
    let gl = LatticeField::new(g, n);
    let hl = LatticeField::new(h, n);
    let t = t.min(path.horizon());
    let pairing = |c: &Configuration, s: f64| -> f64 {
        (0..n).map(|x| gl.value(c.label(x) as usize, x, s)).sum::<f64>() / n as f64
    };
    let mut integral = 0.0;
    let mut at_t = None;
    path.replay(
        |c, s0, s1| {
            let (a, b) = (s0.min(t), s1.min(t));
            if b > a {
                joint_pieces(&gl, &hl, a, b, |p0, p1| {
                    let (mid, half) = (0.5 * (p0 + p1), 0.5 * (p1 - p0));
                    let dt: f64 = (0..n).map(|x| gl.value_dt(c.label(x) as usize, x, mid)).sum::<f64>() / n as f64;
                    let mut q = 0.0;
                    for &(z, w) in &GAUSS5 {
                        q += w * generator_on_pairing(c, &gl, &hl, mid + half * z);
                    }
                    integral += dt * (p1 - p0) + q * half;
                });
            }
            if at_t.is_none() && s1 >= t && s0 <= t {
                at_t = Some(pairing(c, t));
            }
        },
        |_, _| {},
    )?;
    let end = at_t.unwrap_or_else(|| pairing(&path.config_at(t).unwrap_or_else(|_| path.initial().clone()), t));
    Ok(end - pairing(path.initial(), 0.0) - integral)
}

/// `Γ = Σ_x e^{∇_N H_{αβ}}·(∇_N G_{αβ})²` for the pair at each bond, the
/// quadratic-variation density of the Dynkin martingale.
pub fn carre_du_champ(config: &Configuration, g: &PotentialSet<f64>, h: &PotentialSet<f64>, t: f64) -> f64 {
    let n = config.n_sites();
    let mut s = 0.0;
    for x in 0..n {
        let (a, b) = (config.label(x) as usize, config.label(x + 1) as usize);
        if a != b {
            let dg = g.lattice_gradient(a, b, x, n, t);
            s += h.lattice_gradient(a, b, x, n, t).exp() * dg * dg;
        }
    }
    s
}
