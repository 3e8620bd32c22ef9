//! Empirical density fields, block averages and the replacement statistic.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::grid::SpaceTimeGrid;
use crate::process::{Configuration, SimulatedPath};
use crate::scalar::Real;

/// Mass `1/N` at `x/N` for each site holding a given label.
///
/// `mass[label·N + x]` for labels `0..=n`, so holes are tracked as well.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalField {
    n_sites: usize,
    n_species: usize,
    mass: Vec<f64>,
}

impl EmpiricalField {
    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
    #[inline]
    pub fn n_species(&self) -> usize {
        self.n_species
    }
    /// Masses of `label` at every site.
    pub fn row(&self, label: usize) -> &[f64] {
        &self.mass[label * self.n_sites..(label + 1) * self.n_sites]
    }
    pub fn total(&self, label: usize) -> f64 {
        self.row(label).iter().sum()
    }
    /// Density `N·mass` of `label` at site `x`.
    pub fn density(&self, label: usize, x: usize) -> f64 {
        self.mass[label * self.n_sites + x] * self.n_sites as f64
    }

    /// Columns `u, rho_1, …, rho_n` (densities, not masses).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "u")?;
        for a in 1..=self.n_species {
            write!(w, ",rho_{a}")?;
        }
        writeln!(w)?;
        for x in 0..self.n_sites {
            write!(w, "{}", x as f64 / self.n_sites as f64)?;
            for a in 1..=self.n_species {
                write!(w, ",{}", self.density(a, x))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn empirical_density(config: &Configuration) -> EmpiricalField {
    let n = config.n_sites();
    let labels = config.n_species() + 1;
    let mut mass = vec![0.0; labels * n];
    let w = 1.0 / n as f64;
    for (x, &s) in config.sites().iter().enumerate() {
        mass[s as usize * n + x] = w;
    }
    EmpiricalField { n_sites: n, n_species: labels - 1, mass }
}

/// `Σ_α Σ_x G_α(x/N, t)·mass_α(x)`, with `G` read by interpolation.
pub fn pair(field: &EmpiricalField, g: &SpaceTimeGrid<f64>, t: f64) -> Result<f64> {
    if g.components() != field.n_species {
        return Err(Error::GridMismatch(format!(
            "test function has {} components for {} species",
            g.components(),
            field.n_species
        )));
    }
    let n = field.n_sites;
    let mut s = 0.0;
    for a in 1..=field.n_species {
        for (x, &m) in field.row(a).iter().enumerate() {
            if m != 0.0 {
                s += m * g.eval(a - 1, x as f64 / n as f64, t);
            }
        }
    }
    Ok(s)
}

/// Fraction of each species `1..=n` in the periodic window `x−k..=x+k`.
pub fn block_average(config: &Configuration, x: usize, k: usize) -> Vec<f64> {
    let n = config.n_sites();
    let mut counts = vec![0usize; config.n_species() + 1];
    for i in 0..=2 * k {
        counts[config.label((x + n * (k / n + 1) + i - k) % n) as usize] += 1;
    }
    let w = (2 * k + 1) as f64;
    counts[1..].iter().map(|&c| c as f64 / w).collect()
}

/// A function of the labels on `support` consecutive sites, given as a table
/// indexed by `Σ_i label_i·(n+1)^i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalObservable {
    n_species: usize,
    support: usize,
    table: Vec<f64>,
}

impl LocalObservable {
    pub fn new(n_species: usize, support: usize, table: Vec<f64>) -> Result<Self> {
        if support == 0 {
            return invalid("observable support must be at least one site");
        }
        let size = (n_species + 1).checked_pow(support as u32).unwrap_or(usize::MAX);
        if table.len() != size {
            return invalid(format!("observable table needs {size} entries, got {}", table.len()));
        }
        Ok(Self { n_species, support, table })
    }

    pub fn from_fn(n_species: usize, support: usize, f: impl Fn(&[u8]) -> f64) -> Result<Self> {
        let base = n_species + 1;
        let size = base.pow(support as u32);
        let mut pattern = vec![0u8; support];
        let table = (0..size)
            .map(|mut i| {
                for p in pattern.iter_mut() {
                    *p = (i % base) as u8;
                    i /= base;
                }
                f(&pattern)
            })
            .collect();
        Self::new(n_species, support, table)
    }

    /// `Π_i η_{labels[i]}^{i}`, e.g. `[1, 1]` is `η_1^0 η_1^1`.
    pub fn occupation_product(n_species: usize, labels: &[u8]) -> Result<Self> {
        Self::from_fn(n_species, labels.len(), |p| if p == labels { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn n_species(&self) -> usize {
        self.n_species
    }
    #[inline]
    pub fn support(&self) -> usize {
        self.support
    }
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// `τ_x φ(η)`.
    pub fn eval_at(&self, config: &Configuration, x: usize) -> f64 {
        let base = self.n_species + 1;
        let mut idx = 0;
        for i in (0..self.support).rev() {
            idx = idx * base + config.label(x + i) as usize;
        }
        self.table[idx]
    }

    /// Whether `φ` is an affine function of single-site occupations.
    pub fn is_site_linear(&self) -> bool {
        let base = self.n_species + 1;
        let mut coeffs = vec![vec![0.0; base]; self.support];
        let c0 = self.table[0];
        for (i, row) in coeffs.iter_mut().enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                *v = self.table[l * base.pow(i as u32)] - c0;
            }
        }
        self.table.iter().enumerate().all(|(mut idx, &v)| {
            let mut s = c0;
            for row in &coeffs {
                s += row[idx % base];
                idx /= base;
            }
            (s - v).abs() < 1e-12
        })
    }
}

/// `φ̃(p)`: expectation of `φ` under the product measure with marginal
/// `(p_1, …, p_n)` and hole probability `1 − Σp`.
pub fn tilde_phi<S: Real>(phi: &LocalObservable, p: &[S]) -> S {
    let base = phi.n_species + 1;
    let mut probs = Vec::with_capacity(base);
    probs.push(S::one() - p.iter().copied().sum::<S>());
    probs.extend_from_slice(&p[..phi.n_species]);
    let mut total = S::zero();
    for (mut idx, &v) in phi.table.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let mut w = S::one();
        for _ in 0..phi.support {
            w *= probs[idx % base];
            idx /= base;
        }
        total += S::c(v) * w;
    }
    total
}

/// Block half-width `⌊Nε⌋`.
pub fn window_half_width(n_sites: usize, eps: f64) -> usize {
    (n_sites as f64 * eps + 1e-12).floor() as usize
}

/// `V_{N,ε}(η) = Σ_x | (2k+1)^{-1} Σ_{|y−x|≤k} τ_yφ(η) − φ̃(block densities at x) |`
/// with `k = ⌊Nε⌋` and periodic windows.
pub fn v_statistic(config: &Configuration, phi: &LocalObservable, eps: f64) -> Result<f64> {
    Ok(VTracker::new(config.clone(), phi, eps)?.value())
}

/// Incrementally maintained `V_{N,ε}` along a path.
#[derive(Clone, Debug)]
pub struct VTracker<'a> {
    config: Configuration,
    phi: &'a LocalObservable,
    k: usize,
    phi_vals: Vec<f64>,
    terms: Vec<f64>,
    total: f64,
}

impl<'a> VTracker<'a> {
    pub fn new(config: Configuration, phi: &'a LocalObservable, eps: f64) -> Result<Self> {
        let n = config.n_sites();
        if phi.n_species != config.n_species() {
            return Err(Error::GridMismatch("observable and configuration species differ".into()));
        }
        let k = window_half_width(n, eps);
        if k == 0 {
            return invalid(format!("window half-width ⌊Nε⌋ vanishes for N = {n}, ε = {eps}"));
        }
        if 2 * k + 1 > n {
            return invalid("block window exceeds the torus");
        }
        let phi_vals = (0..n).map(|x| phi.eval_at(&config, x)).collect();
        let mut t = Self { config, phi, k, phi_vals, terms: vec![0.0; n], total: 0.0 };
        for x in 0..n {
            t.terms[x] = t.term(x);
        }
        t.total = t.terms.iter().sum();
        Ok(t)
    }

    pub fn value(&self) -> f64 {
        self.total
    }
    pub fn config(&self) -> &Configuration {
        &self.config
    }
    pub fn half_width(&self) -> usize {
        self.k
    }

    fn term(&self, x: usize) -> f64 {
        let n = self.config.n_sites();
        let w = (2 * self.k + 1) as f64;
        let mut avg = 0.0;
        for i in 0..=2 * self.k {
            avg += self.phi_vals[(x + n - self.k + i) % n];
        }
        avg /= w;
        let p = block_average(&self.config, x, self.k);
        (avg - tilde_phi(self.phi, &p)).abs()
    }

    /// Applies the swap of bond `(x, x+1)` and updates the affected terms.
    pub fn swap(&mut self, x: usize) {
        let n = self.config.n_sites();
        self.config = self.config.swapped(x);
        let l = self.phi.support;
        for i in 0..=l {
            let y = (x + n * 2 - (l - 1) + i) % n;
            self.phi_vals[y] = self.phi.eval_at(&self.config, y);
        }
        let reach = self.k + l;
        let mut seen = std::collections::HashSet::new();
        for i in 0..=2 * reach + 1 {
            let c = (x + n * 4 - reach + i) % n;
            if seen.insert(c) {
                self.total -= self.terms[c];
                self.terms[c] = self.term(c);
                self.total += self.terms[c];
            }
        }
    }

    /// Recomputes the running total from scratch to shed accumulated rounding.
    pub fn resum(&mut self) {
        self.total = self.terms.iter().sum();
    }
}

/// `(∫_0^T V_{N,ε}(η_t) dt, (1/N)∫_0^T V_{N,ε}(η_t) dt)` along a path.
pub fn v_time_integral(path: &SimulatedPath, phi: &LocalObservable, eps: f64) -> Result<(f64, f64)> {
    let mut tracker = VTracker::new(path.initial().clone(), phi, eps)?;
    let mut integral = 0.0;
    let mut s = 0.0;
    for (i, e) in path.events().iter().enumerate() {
        integral += tracker.value() * (e.t - s);
        tracker.swap(e.x as usize);
        s = e.t;
        if i % 4096 == 4095 {
            tracker.resum();
        }
    }
    integral += tracker.value() * (path.horizon() - s);
    let n = path.initial().n_sites() as f64;
    Ok((integral, integral / n))
}

/// `q_ε = (2ε)^{-1}·1_{[−ε, ε]}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingKernel {
    eps: f64,
}

impl SmoothingKernel {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 0.5) {
            return invalid("kernel half-width must lie in (0, 1/2)");
        }
        Ok(Self { eps })
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
}

/// Periodic moving average over `2⌊Nε⌋+1` sites.
pub fn smooth(field: &EmpiricalField, kernel: &SmoothingKernel) -> EmpiricalField {
    let n = field.n_sites;
    let k = window_half_width(n, kernel.eps).min((n - 1) / 2);
    let w = 1.0 / (2 * k + 1) as f64;
    let mut mass = vec![0.0; field.mass.len()];
    for label in 0..=field.n_species {
        let row = field.row(label);
        let out = &mut mass[label * n..(label + 1) * n];
        let mut acc: f64 = (0..=2 * k).map(|i| row[(n * 2 + i - k) % n]).sum();
        for x in 0..n {
            out[x] = acc * w;
            acc += row[(x + k + 1) % n] - row[(x + n - k) % n];
        }
    }
    EmpiricalField { n_sites: n, n_species: field.n_species, mass }
}
