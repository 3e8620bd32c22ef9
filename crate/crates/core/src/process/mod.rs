//! Configurations, product measures and the (weakly asymmetric) stirring dynamics.

mod eventlog;
pub mod exact;
mod simulate;

pub use eventlog::{Event, EventLog, LogHeader};
pub(crate) use simulate::apply_event;
pub use simulate::{simulate, simulate_on, simulate_replica, LatticeField, SimParams, SimulatedPath};

use rand::Rng;

use crate::error::{invalid, Result};
use crate::grid::{PotentialSet, ProfileGrid};
use crate::rng::StreamRng;

/// Labels of every site of the torus `Z/NZ`; `0` is a hole.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    n_species: u8,
    sites: Vec<u8>,
    counts: Vec<usize>,
}

impl Configuration {
    pub fn new(n_species: u8, sites: Vec<u8>) -> Result<Self> {
        if n_species == 0 {
            return invalid("at least one species is required");
        }
        if sites.len() < 2 {
            return invalid("the torus needs at least two sites");
        }
        let mut counts = vec![0usize; n_species as usize + 1];
        for (x, &s) in sites.iter().enumerate() {
            if s > n_species {
                return invalid(format!("site {x} has label {s} > {n_species}"));
            }
            counts[s as usize] += 1;
        }
        Ok(Self { n_species, sites, counts })
    }

    /// Every site carries `label`.
    pub fn filled(n_species: u8, n_sites: usize, label: u8) -> Result<Self> {
        Self::new(n_species, vec![label; n_sites])
    }

    /// Decodes a state index in base `n+1`, site 0 least significant.
    pub fn from_index(n_species: u8, n_sites: usize, mut index: usize) -> Result<Self> {
        let base = n_species as usize + 1;
        let mut sites = Vec::with_capacity(n_sites);
        for _ in 0..n_sites {
            sites.push((index % base) as u8);
            index /= base;
        }
        Self::new(n_species, sites)
    }

    /// Inverse of [`Configuration::from_index`].
    pub fn index(&self) -> usize {
        let base = self.n_species as usize + 1;
        self.sites.iter().rev().fold(0usize, |acc, &s| acc * base + s as usize)
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }
    #[inline]
    pub fn n_species(&self) -> usize {
        self.n_species as usize
    }
    #[inline]
    pub fn sites(&self) -> &[u8] {
        &self.sites
    }
    /// Tally of each label `0..=n`.
    #[inline]
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    #[inline]
    pub fn label(&self, x: usize) -> u8 {
        self.sites[x % self.sites.len()]
    }
    /// `η_α^x`.
    #[inline]
    pub fn occupied(&self, label: u8, x: usize) -> bool {
        self.label(x) == label
    }

    pub fn counts_consistent(&self) -> bool {
        let mut c = vec![0usize; self.counts.len()];
        for &s in &self.sites {
            c[s as usize] += 1;
        }
        c == self.counts
    }

    /// `η^{x,x+1}_{α,β}`: swaps the bond when it holds `α` at `x` and `β` at
    /// `x+1`, and is the identity otherwise.
    pub fn apply_exchange(&self, x: usize, a: u8, b: u8) -> Configuration {
        let mut out = self.clone();
        out.exchange_in_place(x, a, b);
        out
    }

    /// In-place version of [`Configuration::apply_exchange`]; returns whether
    /// the configuration changed.
    pub fn exchange_in_place(&mut self, x: usize, a: u8, b: u8) -> bool {
        let n = self.sites.len();
        let (x, y) = (x % n, (x + 1) % n);
        if a == b || self.sites[x] != a || self.sites[y] != b {
            return false;
        }
        self.sites.swap(x, y);
        true
    }

    /// Swap of the bond `(x, x+1)` regardless of its content.
    pub fn swapped(&self, x: usize) -> Configuration {
        let n = self.sites.len();
        let mut out = self.clone();
        out.sites.swap(x % n, (x + 1) % n);
        out
    }
}

/// Draws independent site labels with `P(η_x = α) = γ_α(x/N)`, the profile
/// being read at the nearest grid point.
pub fn sample_product_multinomial(profile: &ProfileGrid<f64>, n_sites: usize, rng: &mut StreamRng) -> Result<Configuration> {
    let n = profile.n_species();
    if n > u8::MAX as usize - 1 {
        return invalid("too many species for one-byte labels");
    }
    let mut sites = Vec::with_capacity(n_sites);
    for x in 0..n_sites {
        let j = profile.nearest(x as f64 / n_sites as f64);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = 0u8;
        for a in 1..=n {
            acc += profile.get(a, j);
            if u < acc {
                label = a as u8;
                break;
            }
        }
        sites.push(label);
    }
    Configuration::new(n as u8, sites)
}

/// Microscopic rate `exp(∇_N H_{αβ}(x/N, t))` of the bond `(x, x+1)` holding
/// `α` at `x` and `β` at `x+1`. Equal labels give rate 1 (a null move).
pub fn bond_rate(config: &Configuration, x: usize, potentials: &PotentialSet<f64>, t: f64) -> f64 {
    let n = config.n_sites();
    let a = config.label(x) as usize;
    let b = config.label(x + 1) as usize;
    potentials.lattice_gradient(a, b, x % n, n, t).exp()
}

/// Rate for moving `α` from `x` to `y = x ± 1` while `β` moves from `y` to `x`.
pub fn directed_rate(a: usize, b: usize, x: usize, y: usize, n_sites: usize, potentials: &PotentialSet<f64>, t: f64) -> f64 {
    let nf = n_sites as f64;
    let (x, y) = (x % n_sites, y % n_sites);
    (potentials.pair(a, b, y as f64 / nf, t) - potentials.pair(a, b, x as f64 / nf, t)).exp()
}
