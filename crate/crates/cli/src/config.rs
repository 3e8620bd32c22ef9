//! TOML experiment configuration.
//!
//! Fields are smooth periodic functions given by Fourier coefficients:
//! `f(u, t) = mean + Σ_k (cos[k] + t·cos_rate[k]) cos(2πku) + (sin[k] + t·sin_rate[k]) sin(2πku)`,
//! with `k` counted from 1.

use std::f64::consts::TAU;
use std::path::Path;

use anyhow::{ensure, Context, Result};
use serde::Deserialize;
use stirlab::empirical::LocalObservable;
use stirlab::{PotentialSet, ProfileGrid, SpaceTimeGrid};

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Fourier {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
    #[serde(default)]
    pub cos_rate: Vec<f64>,
    #[serde(default)]
    pub sin_rate: Vec<f64>,
}

impl Fourier {
    pub fn eval(&self, u: f64, t: f64) -> f64 {
        let coeff = |c: &[f64], r: &[f64], k: usize| c.get(k).copied().unwrap_or(0.0) + t * r.get(k).copied().unwrap_or(0.0);
        let modes = self.cos.len().max(self.sin.len()).max(self.cos_rate.len()).max(self.sin_rate.len());
        let mut v = self.mean;
        for k in 0..modes {
            let arg = TAU * (k + 1) as f64 * u;
            v += coeff(&self.cos, &self.cos_rate, k) * arg.cos() + coeff(&self.sin, &self.sin_rate, k) * arg.sin();
        }
        v
    }

    fn is_stationary(&self) -> bool {
        self.cos_rate.iter().chain(&self.sin_rate).all(|&c| c == 0.0)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Model {
    pub n_species: usize,
    pub horizon: f64,
    /// Initial (and reference) profile, one entry per species.
    pub profile: Vec<Fourier>,
    /// Species potentials `H_α`; empty means `H ≡ 0`.
    #[serde(default)]
    pub potential: Vec<Fourier>,
    /// Spatial resolution used to tabulate profiles and potentials.
    #[serde(default = "default_field_points")]
    pub field_points: usize,
    /// Time nodes used to tabulate potentials.
    #[serde(default = "default_time_nodes")]
    pub time_nodes: usize,
}

fn default_field_points() -> usize {
    256
}
fn default_time_nodes() -> usize {
    9
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lattice {
    pub sites: Vec<usize>,
    #[serde(default = "one")]
    pub replicas: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum StepperKind {
    #[default]
    Explicit,
    Imex,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub m: usize,
    /// Output intervals.
    pub k: usize,
    #[serde(default)]
    pub stepper: StepperKind,
    /// IMEX step; ignored by the explicit stepper.
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rate {
    #[serde(default = "default_clip")]
    pub delta_clip: f64,
    #[serde(default = "default_residual_tests")]
    pub residual_tests: usize,
    #[serde(default = "default_spatial")]
    pub basis_spatial: usize,
    #[serde(default = "default_temporal")]
    pub basis_temporal: usize,
}

fn default_clip() -> f64 {
    1e-6
}
fn default_residual_tests() -> usize {
    8
}
fn default_spatial() -> usize {
    3
}
fn default_temporal() -> usize {
    2
}

impl Default for Rate {
    fn default() -> Self {
        Self {
            delta_clip: default_clip(),
            residual_tests: default_residual_tests(),
            basis_spatial: default_spatial(),
            basis_temporal: default_temporal(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Statistic {
    /// Labels of `φ = Π_i η(x+i, labels[i])`.
    pub labels: Vec<u8>,
    pub eps: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Blocks {
    pub n_species: usize,
    pub labels: Vec<u8>,
    pub k_max: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Equivalence {
    pub n_species: usize,
    pub labels: Vec<u8>,
    pub sites: Vec<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Einstein {
    /// Points per axis of the simplex grid.
    #[serde(default = "default_einstein")]
    pub points: usize,
}

fn default_einstein() -> usize {
    50
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: Option<Model>,
    pub lattice: Option<Lattice>,
    pub grid: Option<Grid>,
    #[serde(default)]
    pub rate: Rate,
    pub statistic: Option<Statistic>,
    pub blocks: Option<Blocks>,
    pub equivalence: Option<Equivalence>,
    pub einstein: Option<Einstein>,
    /// Window `ε` for smoothed densities in hydro-limit comparisons.
    pub smoothing: Option<f64>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).context("config does not match the schema")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).context("config is not UTF-8")?;
        Ok((Self::parse(text)?, bytes))
    }

    fn validate(&self) -> Result<()> {
        if let Some(m) = &self.model {
            ensure!(m.n_species >= 1, "model.n_species must be at least 1");
            ensure!(m.horizon > 0.0 && m.horizon.is_finite(), "model.horizon must be positive");
            ensure!(m.profile.len() == m.n_species, "model.profile needs one entry per species");
            ensure!(
                m.potential.is_empty() || m.potential.len() == m.n_species,
                "model.potential needs one entry per species (or none)"
            );
            ensure!(m.field_points >= 3, "model.field_points must be at least 3");
            ensure!(m.time_nodes >= 2, "model.time_nodes must be at least 2");
            ensure!(m.n_species <= 254, "at most 254 species are supported");
        }
        if let Some(l) = &self.lattice {
            ensure!(!l.sites.is_empty(), "lattice.sites must not be empty");
            ensure!(l.sites.iter().all(|&n| n >= 2), "lattice.sites entries must be at least 2");
            ensure!(l.replicas >= 1, "lattice.replicas must be at least 1");
        }
        if let Some(g) = &self.grid {
            ensure!(g.m >= 3 && g.k >= 1, "grid needs m ≥ 3 and k ≥ 1");
            if g.stepper == StepperKind::Imex {
                ensure!(g.dt.is_some_and(|d| d > 0.0), "grid.dt must be positive for the imex stepper");
            }
        }
        ensure!(self.rate.delta_clip >= 0.0, "rate.delta_clip must be non-negative");
        if let Some(s) = &self.statistic {
            ensure!(s.eps > 0.0 && s.eps < 0.5, "statistic.eps must lie in (0, 1/2)");
        }
        if let Some(e) = self.smoothing {
            ensure!(e > 0.0 && e < 0.5, "smoothing must lie in (0, 1/2)");
        }
        if let (Some(m), Some(g)) = (&self.model, &self.grid) {
            ensure!(
                m.field_points % g.m == 0 || g.m % m.field_points == 0,
                "grid.m ({}) and model.field_points ({}) must divide one another",
                g.m,
                m.field_points
            );
        }
        if let (Some(m), Some(l)) = (&self.model, &self.lattice) {
            for &n in &l.sites {
                ensure!(
                    m.field_points % n == 0 || n % m.field_points == 0,
                    "lattice size {n} and model.field_points ({}) must divide one another",
                    m.field_points
                );
            }
        }
        let labels = [
            self.statistic.as_ref().zip(self.model.as_ref()).map(|(s, m)| (&s.labels, m.n_species)),
            self.blocks.as_ref().map(|b| (&b.labels, b.n_species)),
            self.equivalence.as_ref().map(|e| (&e.labels, e.n_species)),
        ];
        for (l, n) in labels.into_iter().flatten() {
            ensure!(!l.is_empty(), "observable labels must not be empty");
            ensure!(l.iter().all(|&a| (a as usize) <= n), "observable labels must lie in 0..={n}");
        }
        Ok(())
    }

    pub fn model(&self) -> Result<&Model> {
        self.model.as_ref().context("config needs a [model] section")
    }
    pub fn lattice(&self) -> Result<&Lattice> {
        self.lattice.as_ref().context("config needs a [lattice] section")
    }
    pub fn grid(&self) -> Result<&Grid> {
        self.grid.as_ref().context("config needs a [grid] section")
    }
    pub fn statistic(&self) -> Result<&Statistic> {
        self.statistic.as_ref().context("config needs a [statistic] section")
    }
}

impl Model {
    pub fn profile_on(&self, m: usize) -> Result<ProfileGrid<f64>> {
        Ok(ProfileGrid::from_fn(self.n_species, m, |a, u| self.profile[a - 1].eval(u, 0.0))?)
    }

    pub fn profile(&self) -> Result<ProfileGrid<f64>> {
        self.profile_on(self.field_points)
    }

    pub fn potentials(&self) -> Result<PotentialSet<f64>> {
        if self.potential.is_empty() {
            return Ok(PotentialSet::zero(self.n_species));
        }
        let grid = if self.potential.iter().all(Fourier::is_stationary) {
            SpaceTimeGrid::stationary(self.n_species, self.field_points, |c, u| self.potential[c].eval(u, 0.0))?
        } else {
            let dt = self.horizon / (self.time_nodes - 1) as f64;
            SpaceTimeGrid::from_fn(self.n_species, self.field_points, self.time_nodes, dt, |c, u, t| {
                self.potential[c].eval(u, t)
            })?
        };
        Ok(PotentialSet::from_species(grid))
    }
}

pub fn observable(n_species: usize, labels: &[u8]) -> Result<LocalObservable> {
    Ok(LocalObservable::occupation_product(n_species, labels)?)
}
