//! Thinning simulation of the time-inhomogeneous stirring process.

use rand::Rng;

use super::eventlog::{Event, EventLog, LogHeader};
use super::Configuration;
use crate::error::{invalid, Error, Result};
use crate::grid::PotentialSet;
use crate::rng::{stream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimParams {
    pub n_sites: usize,
    /// Macroscopic horizon `T`; the microscopic clock runs to `N²T`.
    pub horizon: f64,
    pub seed: u64,
    pub thinning_bound_margin: f64,
}

impl SimParams {
    pub fn new(n_sites: usize, horizon: f64, seed: u64) -> Self {
        Self { n_sites, horizon, seed, thinning_bound_margin: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return invalid("N must be at least 2");
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return invalid("T must be positive and finite");
        }
        if !(self.thinning_bound_margin >= 1.0) {
            return invalid("thinning bound margin must be at least 1");
        }
        Ok(())
    }
}

/// Potentials sampled on the lattice `x/N` at the time nodes of their grid.
///
/// Between nodes everything is linear in time, matching the bilinear
/// interpolation of [`PotentialSet`] exactly.
#[derive(Clone, Debug)]
pub struct LatticeField {
    n_sites: usize,
    labels: usize,
    nodes: Vec<f64>,
    /// `H_a(x/N, t_k)` at `(k·labels + a)·N + x`; empty when `H ≡ 0`.
    values: Vec<f64>,
    /// `∇_N H_{ab}(x, t_k)` at `((k·labels + a)·labels + b)·N + x`.
    grads: Vec<f64>,
    node_max_grad: Vec<f64>,
    zero: bool,
}

impl LatticeField {
    pub fn new(potentials: &PotentialSet<f64>, n_sites: usize) -> Self {
        let labels = potentials.n_species() + 1;
        let nodes = potentials.time_nodes();
        let zero = potentials.is_zero();
        let nf = n_sites as f64;
        let mut values = Vec::new();
        let mut grads = Vec::new();
        let mut node_max_grad = vec![0.0; nodes.len()];
        if !zero {
            values.reserve(nodes.len() * labels * n_sites);
            grads.reserve(nodes.len() * labels * labels * n_sites);
            for &t in &nodes {
                for a in 0..labels {
                    for x in 0..n_sites {
                        values.push(potentials.species(a, x as f64 / nf, t));
                    }
                }
            }
            for (k, &t) in nodes.iter().enumerate() {
                for a in 0..labels {
                    for b in 0..labels {
                        for x in 0..n_sites {
                            let g = if a == b {
                                0.0
                            } else {
                                potentials.pair(a, b, ((x + 1) % n_sites) as f64 / nf, t)
                                    - potentials.pair(a, b, x as f64 / nf, t)
                            };
                            node_max_grad[k] = f64::max(node_max_grad[k], g.abs());
                            grads.push(g);
                        }
                    }
                }
            }
        }
        Self { n_sites, labels, nodes, values, grads, node_max_grad, zero }
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
    #[inline]
    pub fn n_species(&self) -> usize {
        self.labels - 1
    }
    #[inline]
    pub fn is_zero(&self) -> bool {
        self.zero
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node index `k` and weight of node `k+1` for time `t`, clamped to the
    /// sampled window.
    #[inline]
    pub fn locate(&self, t: f64) -> (usize, f64) {
        let last = self.nodes.len() - 1;
        if last == 0 || t <= 0.0 {
            return (0, 0.0);
        }
        let dt = self.nodes[1];
        let s = t / dt;
        if s >= last as f64 {
            return (last - 1, 1.0);
        }
        let k = (s.floor() as usize).min(last - 1);
        (k, s - k as f64)
    }

    #[inline]
    fn node_grad(&self, k: usize, a: usize, b: usize, x: usize) -> f64 {
        self.grads[((k * self.labels + a) * self.labels + b) * self.n_sites + x]
    }

    #[inline]
    fn node_value(&self, k: usize, a: usize, x: usize) -> f64 {
        self.values[(k * self.labels + a) * self.n_sites + x]
    }

    /// `∇_N H_{ab}(x/N, t)`.
    #[inline]
    pub fn grad(&self, a: usize, b: usize, x: usize, t: f64) -> f64 {
        if self.zero || a == b {
            return 0.0;
        }
        let (k, w) = self.locate(t);
        if self.nodes.len() == 1 {
            return self.node_grad(0, a, b, x);
        }
        let g0 = self.node_grad(k, a, b, x);
        if w == 0.0 {
            return g0;
        }
        let g1 = self.node_grad(k + 1, a, b, x);
        g0 + (g1 - g0) * w
    }

    /// `H_a(x/N, t)` (`H_0 = 0`).
    #[inline]
    pub fn value(&self, a: usize, x: usize, t: f64) -> f64 {
        if self.zero || a == 0 {
            return 0.0;
        }
        if self.nodes.len() == 1 {
            return self.node_value(0, a, x);
        }
        let (k, w) = self.locate(t);
        let v0 = self.node_value(k, a, x);
        if w == 0.0 {
            return v0;
        }
        v0 + (self.node_value(k + 1, a, x) - v0) * w
    }

    /// `∂_t H_a(x/N, t)`, constant on each cell and zero outside the window.
    #[inline]
    pub fn value_dt(&self, a: usize, x: usize, t: f64) -> f64 {
        if self.zero || a == 0 || self.nodes.len() == 1 {
            return 0.0;
        }
        let last = *self.nodes.last().unwrap();
        if t < 0.0 || t > last {
            return 0.0;
        }
        let (k, _) = self.locate(t);
        (self.node_value(k + 1, a, x) - self.node_value(k, a, x)) / self.nodes[1]
    }

    /// `max |∇_N H_{ab}|` over the cell containing `t` (both end nodes).
    pub fn max_grad_near(&self, t: f64) -> f64 {
        if self.zero {
            return 0.0;
        }
        if self.nodes.len() == 1 {
            return self.node_max_grad[0];
        }
        let (k, _) = self.locate(t);
        self.node_max_grad[k].max(self.node_max_grad[k + 1])
    }

    pub fn max_grad(&self) -> f64 {
        self.node_max_grad.iter().cloned().fold(0.0, f64::max)
    }

    /// Splits `[s0, s1]` at the grid nodes; the closure receives sub-intervals
    /// on which every lattice quantity is affine in time.
    pub fn for_each_piece(&self, s0: f64, s1: f64, mut f: impl FnMut(f64, f64)) {
        if s1 <= s0 {
            return;
        }
        let mut a = s0;
        for &node in &self.nodes[1..] {
            if node <= a {
                continue;
            }
            if node >= s1 {
                break;
            }
            f(a, node);
            a = node;
        }
        f(a, s1);
    }

    /// `∫_{s0}^{s1} (exp(∇_N H_{ab}(x, s)) − 1) ds`, exact for affine-in-time data.
    pub fn integrate_rate_excess(&self, a: usize, b: usize, x: usize, s0: f64, s1: f64) -> f64 {
        if self.zero || a == b || s1 <= s0 {
            return 0.0;
        }
        if self.nodes.len() == 1 {
            return (s1 - s0) * self.node_grad(0, a, b, x).exp_m1();
        }
        let mut total = 0.0;
        self.for_each_piece(s0, s1, |p0, p1| {
            let g0 = self.grad(a, b, x, p0);
            let g1 = self.grad(a, b, x, p1);
            total += (p1 - p0) * mean_exp_m1(g0, g1);
        });
        total
    }
}

/// Mean of `exp(g) − 1` over an interval on which `g` is affine from `g0` to `g1`.
#[inline]
pub(crate) fn mean_exp_m1(g0: f64, g1: f64) -> f64 {
    let d = g1 - g0;
    // (e^{g1} − e^{g0})/d − 1 = expm1(g0)·φ(d) + (φ(d) − 1) with φ(d) = expm1(d)/d
    let (phi, phi_m1) = if d.abs() < 1e-4 {
        let r = d / 2.0 + d * d / 6.0 + d * d * d / 24.0;
        (1.0 + r, r)
    } else {
        let p = d.exp_m1() / d;
        (p, (d.exp_m1() - d) / d)
    };
    g0.exp_m1() * phi + phi_m1
}

/// Initial configuration plus the accepted exchanges.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedPath {
    initial: Configuration,
    log: EventLog,
}

impl SimulatedPath {
    pub fn new(initial: Configuration, log: EventLog) -> Result<Self> {
        if log.header.n_sites as usize != initial.n_sites() {
            return Err(Error::GridMismatch("event log and configuration disagree on N".into()));
        }
        Ok(Self { initial, log })
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }
    pub fn log(&self) -> &EventLog {
        &self.log
    }
    pub fn events(&self) -> &[Event] {
        &self.log.events
    }
    pub fn horizon(&self) -> f64 {
        self.log.header.horizon
    }

    /// Configuration at macroscopic time `t` (right-continuous).
    pub fn config_at(&self, t: f64) -> Result<Configuration> {
        let mut c = self.initial.clone();
        for (i, e) in self.log.events.iter().enumerate() {
            if e.t > t {
                break;
            }
            apply_event(&mut c, e, i)?;
        }
        Ok(c)
    }

    pub fn final_config(&self) -> Result<Configuration> {
        self.config_at(f64::INFINITY)
    }

    /// Walks the path: `on_interval(config, s0, s1)` for every maximal
    /// interval with a frozen configuration (including empty ones between
    /// simultaneous events), `on_event(config_before, event)` before each jump.
    pub fn replay(
        &self,
        mut on_interval: impl FnMut(&Configuration, f64, f64),
        mut on_event: impl FnMut(&Configuration, &Event),
    ) -> Result<Configuration> {
        let mut c = self.initial.clone();
        let mut s = 0.0;
        for (i, e) in self.log.events.iter().enumerate() {
            if e.t < s || e.t > self.horizon() {
                return Err(Error::InconsistentEvent { index: i, detail: format!("time {} out of order", e.t) });
            }
            on_interval(&c, s, e.t);
            on_event(&c, e);
            apply_event(&mut c, e, i)?;
            s = e.t;
        }
        on_interval(&c, s, self.horizon());
        Ok(c)
    }
}

pub(crate) fn apply_event(c: &mut Configuration, e: &Event, index: usize) -> Result<()> {
    let x = e.x as usize;
    if x >= c.n_sites() || e.alpha == e.beta || !c.exchange_in_place(x, e.alpha, e.beta) {
        return Err(Error::InconsistentEvent {
            index,
            detail: format!(
                "exchange ({},{}) at bond {} but the bond holds ({},{})",
                e.alpha,
                e.beta,
                e.x,
                c.label(x),
                c.label(x + 1)
            ),
        });
    }
    Ok(())
}

/// Simulates replica 0 of the stream selected by `params.seed`.
pub fn simulate(config0: &Configuration, potentials: &PotentialSet<f64>, params: &SimParams) -> Result<SimulatedPath> {
    simulate_replica(config0, potentials, params, 0)
}

pub fn simulate_replica(
    config0: &Configuration,
    potentials: &PotentialSet<f64>,
    params: &SimParams,
    replica: u64,
) -> Result<SimulatedPath> {
    let field = LatticeField::new(potentials, params.n_sites);
    let mut rng = stream(params.seed, replica);
    simulate_on(config0, &field, params, &mut rng)
}

/// Core simulator on a precomputed lattice field with a caller-owned stream.
///
/// Proposals arrive on each bond at the constant rate
/// `λ = N²·exp(max|∇_N H|)·margin` within every time cell of the potential
/// grid; a proposal on a bond holding `(α, β)` is accepted with probability
/// `N²·exp(∇_N H_{αβ})/λ`.
pub fn simulate_on(
    config0: &Configuration,
    field: &LatticeField,
    params: &SimParams,
    rng: &mut StreamRng,
) -> Result<SimulatedPath> {
    params.validate()?;
    let n = params.n_sites;
    if config0.n_sites() != n {
        return Err(Error::GridMismatch(format!("configuration has {} sites, N = {}", config0.n_sites(), n)));
    }
    if field.n_sites() != n || field.n_species() != config0.n_species() {
        return Err(Error::GridMismatch("lattice field does not match the configuration".into()));
    }
    let header = LogHeader {
        n_sites: n as u32,
        n_species: config0.n_species() as u8,
        horizon: params.horizon,
        seed: params.seed,
    };
    let mut events = Vec::new();
    let mut c = config0.clone();
    let active = config0.counts().iter().filter(|&&k| k > 0).count() > 1;
    if active {
        let n2 = (n * n) as f64;
        let t_end = params.horizon;
        let mut cells = Vec::new();
        field.for_each_piece(0.0, t_end, |a, b| cells.push((a, b)));
        for (a, b) in cells {
            let mid = 0.5 * (a + b);
            let lam = n2 * field.max_grad_near(mid).exp() * params.thinning_bound_margin;
            let total = lam * n as f64;
            let mut t = a;
            loop {
                let u: f64 = rng.random();
                t += -(1.0 - u).ln() / total;
                if t >= b {
                    break;
                }
                let x = rng.random_range(0..n);
                let y = if x + 1 == n { 0 } else { x + 1 };
                let (al, be) = (c.sites[x], c.sites[y]);
                if al == be {
                    continue;
                }
                let rate = n2 * field.grad(al as usize, be as usize, x, t).exp();
                if rate > lam * (1.0 + 1e-12) {
                    return Err(Error::BoundViolation { t, rate, majorant: lam });
                }
                let v: f64 = rng.random();
                if v * lam < rate {
                    c.sites.swap(x, y);
                    events.push(Event { t, x: x as u32, alpha: al, beta: be });
                }
            }
        }
    }
    SimulatedPath::new(config0.clone(), EventLog { header, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpaceTimeGrid;

    #[test]
    fn mean_exp_m1_matches_quadrature() {
        for &(g0, g1) in &[(0.1, 0.3), (-0.2, -0.2 + 1e-6), (0.0, 0.0), (0.5, -0.7)] {
            let m = 20000;
            let q: f64 = (0..m)
                .map(|i| {
                    let s = (i as f64 + 0.5) / m as f64;
                    (g0 + (g1 - g0) * s).exp_m1()
                })
                .sum::<f64>()
                / m as f64;
            assert!((mean_exp_m1(g0, g1) - q).abs() < 1e-9, "{g0} {g1}");
        }
    }

    #[test]
    fn lattice_field_matches_potential_set() {
        let g = SpaceTimeGrid::from_fn(2, 12, 4, 0.05, |c, u, t| {
            ((c + 1) as f64) * (2.0 * std::f64::consts::PI * u).sin() * (1.0 + t)
        })
        .unwrap();
        let h = PotentialSet::from_species(g);
        let f = LatticeField::new(&h, 10);
        for &t in &[0.0, 0.013, 0.05, 0.12, 0.2] {
            for x in 0..10 {
                for a in 0..3 {
                    for b in 0..3 {
                        let want = h.lattice_gradient(a, b, x, 10, t);
                        assert!((f.grad(a, b, x, t) - want).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn all_holes_give_empty_log() {
        let c = Configuration::filled(2, 8, 0).unwrap();
        let p = simulate(&c, &PotentialSet::zero(2), &SimParams::new(8, 1.0, 3)).unwrap();
        assert!(p.events().is_empty());
    }
}
