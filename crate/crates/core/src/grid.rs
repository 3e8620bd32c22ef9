//! Grid-sampled fields on the unit torus and on torus × time.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Simplex tolerance used when validating grid data.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// `components` scalar fields on `m` periodic points `u_j = j/m` and
/// `slices` equally spaced times `t_k = k·dt`.
///
/// Storage is slice-major: `values[(k·components + c)·m + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeGrid<S> {
    components: usize,
    m: usize,
    slices: usize,
    dt: S,
    values: Vec<S>,
}

impl<S: Real> SpaceTimeGrid<S> {
    pub fn zeros(components: usize, m: usize, slices: usize, dt: S) -> Result<Self> {
        if components == 0 || m == 0 || slices == 0 {
            return invalid("grid dimensions must be positive");
        }
        if slices > 1 && !(dt > S::zero()) {
            return invalid("time step must be positive");
        }
        Ok(Self {
            components,
            m,
            slices,
            dt,
            values: vec![S::zero(); components * m * slices],
        })
    }

    pub fn from_values(components: usize, m: usize, slices: usize, dt: S, values: Vec<S>) -> Result<Self> {
        let mut g = Self::zeros(components, m, slices, dt)?;
        if values.len() != g.values.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                g.values.len(),
                values.len()
            )));
        }
        g.values = values;
        Ok(g)
    }

    /// Samples `f(component, u, t)` on the grid.
    pub fn from_fn(
        components: usize,
        m: usize,
        slices: usize,
        dt: S,
        f: impl Fn(usize, S, S) -> S,
    ) -> Result<Self> {
        let mut g = Self::zeros(components, m, slices, dt)?;
        let inv_m = S::one() / S::of_usize(m);
        for k in 0..slices {
            let t = S::of_usize(k) * dt;
            for c in 0..components {
                for j in 0..m {
                    let v = f(c, S::of_usize(j) * inv_m, t);
                    g.set(c, j, k, v);
                }
            }
        }
        Ok(g)
    }

    /// A time-independent field (a single slice).
    pub fn stationary(components: usize, m: usize, f: impl Fn(usize, S) -> S) -> Result<Self> {
        Self::from_fn(components, m, 1, S::zero(), |c, u, _| f(c, u))
    }

    #[inline]
    pub fn components(&self) -> usize {
        self.components
    }
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }
    #[inline]
    pub fn slices(&self) -> usize {
        self.slices
    }
    #[inline]
    pub fn dt(&self) -> S {
        self.dt
    }
    /// Last sampled time; zero for a stationary field.
    pub fn horizon(&self) -> S {
        self.dt * S::of_usize(self.slices - 1)
    }
    pub fn values(&self) -> &[S] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    #[inline]
    fn idx(&self, c: usize, j: usize, k: usize) -> usize {
        (k * self.components + c) * self.m + j
    }
    #[inline]
    pub fn get(&self, c: usize, j: usize, k: usize) -> S {
        self.values[self.idx(c, j, k)]
    }
    #[inline]
    pub fn set(&mut self, c: usize, j: usize, k: usize, v: S) {
        let i = self.idx(c, j, k);
        self.values[i] = v;
    }

    /// All components at slice `k`, component-major.
    pub fn slice(&self, k: usize) -> &[S] {
        let len = self.components * self.m;
        &self.values[k * len..(k + 1) * len]
    }
    pub fn slice_mut(&mut self, k: usize) -> &mut [S] {
        let len = self.components * self.m;
        &mut self.values[k * len..(k + 1) * len]
    }
    /// Component `c` at slice `k`.
    pub fn row(&self, c: usize, k: usize) -> &[S] {
        let s = self.idx(c, 0, k);
        &self.values[s..s + self.m]
    }
    pub fn row_mut(&mut self, c: usize, k: usize) -> &mut [S] {
        let s = self.idx(c, 0, k);
        let m = self.m;
        &mut self.values[s..s + m]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.components == other.components
            && self.m == other.m
            && self.slices == other.slices
            && (self.slices == 1 || self.dt == other.dt)
    }

    /// Slice index and weight of the later slice for time `t` (clamped).
    pub fn time_cell(&self, t: S) -> (usize, S) {
        if self.slices == 1 || t <= S::zero() {
            return (0, S::zero());
        }
        let s = t / self.dt;
        let last = self.slices - 1;
        if s >= S::of_usize(last) {
            return (last - 1, S::one());
        }
        let k = s.floor().to_usize().unwrap_or(0).min(last - 1);
        (k, s - S::of_usize(k))
    }

    /// Periodic linear interpolation in `u` at slice `k`.
    pub fn interp_space(&self, c: usize, u: S, k: usize) -> S {
        let mf = S::of_usize(self.m);
        let x = (u - u.floor()) * mf;
        let j0f = x.floor();
        let w = x - j0f;
        let j0 = j0f.to_usize().unwrap_or(0) % self.m;
        let j1 = (j0 + 1) % self.m;
        let row = self.row(c, k);
        if w == S::zero() {
            row[j0]
        } else {
            row[j0] * (S::one() - w) + row[j1] * w
        }
    }

    /// Bilinear interpolation: periodic in `u`, clamped in `t`.
    pub fn eval(&self, c: usize, u: S, t: S) -> S {
        if self.slices == 1 {
            return self.interp_space(c, u, 0);
        }
        let (k, w) = self.time_cell(t);
        let a = self.interp_space(c, u, k);
        if w == S::zero() {
            return a;
        }
        let b = self.interp_space(c, u, k + 1);
        a * (S::one() - w) + b * w
    }

    /// Time derivative of the interpolant (piecewise constant in `t`,
    /// zero outside the sampled window).
    pub fn eval_dt(&self, c: usize, u: S, t: S) -> S {
        if self.slices == 1 || t < S::zero() || t > self.horizon() {
            return S::zero();
        }
        let (k, _) = self.time_cell(t);
        (self.interp_space(c, u, k + 1) - self.interp_space(c, u, k)) / self.dt
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |a, v| a.max(v.abs()))
    }

    /// Converts the scalar type.
    pub fn cast<T: Real>(&self) -> SpaceTimeGrid<T> {
        SpaceTimeGrid {
            components: self.components,
            m: self.m,
            slices: self.slices,
            dt: T::c(self.dt.f64()),
            values: self.values.iter().map(|v| T::c(v.f64())).collect(),
        }
    }
}

/// Species profiles `γ_α(j/M)`, `α = 1..=n`, on `M` periodic grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileGrid<S> {
    n_species: usize,
    m: usize,
    values: Vec<S>,
}

impl<S: Real> ProfileGrid<S> {
    /// `values[α-1][j]` flattened species-major. Checks the simplex constraint.
    pub fn new(n_species: usize, m: usize, values: Vec<S>) -> Result<Self> {
        if n_species == 0 || m == 0 {
            return invalid("profile needs at least one species and one grid point");
        }
        if values.len() != n_species * m {
            return Err(Error::GridMismatch(format!(
                "profile expects {} values, got {}",
                n_species * m,
                values.len()
            )));
        }
        let p = Self { n_species, m, values };
        p.check_simplex()?;
        Ok(p)
    }

    pub fn from_fn(n_species: usize, m: usize, f: impl Fn(usize, S) -> S) -> Result<Self> {
        let inv_m = S::one() / S::of_usize(m);
        let mut values = Vec::with_capacity(n_species * m);
        for a in 0..n_species {
            for j in 0..m {
                values.push(f(a + 1, S::of_usize(j) * inv_m));
            }
        }
        Self::new(n_species, m, values)
    }

    pub fn constant(n_species: usize, m: usize, p: &[S]) -> Result<Self> {
        if p.len() != n_species {
            return invalid("constant profile needs one density per species");
        }
        Self::from_fn(n_species, m, |a, _| p[a - 1])
    }

    fn check_simplex(&self) -> Result<()> {
        let tol = S::c(SIMPLEX_TOL);
        for j in 0..self.m {
            let mut sum = S::zero();
            for a in 1..=self.n_species {
                let v = self.get(a, j);
                if !(v >= -tol && v <= S::one() + tol) {
                    return Err(Error::OutsideSimplex {
                        point: j,
                        detail: format!("species {a} has density {v}"),
                    });
                }
                sum += v;
            }
            if sum > S::one() + tol {
                return Err(Error::OutsideSimplex {
                    point: j,
                    detail: format!("total density {sum} exceeds 1"),
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n_species(&self) -> usize {
        self.n_species
    }
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Density of `label` (`0` is the hole density) at grid point `j`.
    #[inline]
    pub fn get(&self, label: usize, j: usize) -> S {
        if label == 0 {
            let s: S = (1..=self.n_species).map(|a| self.values[(a - 1) * self.m + j]).sum();
            (S::one() - s).max(S::zero())
        } else {
            self.values[(label - 1) * self.m + j]
        }
    }

    /// Species row `α ≥ 1`.
    pub fn row(&self, label: usize) -> &[S] {
        &self.values[(label - 1) * self.m..label * self.m]
    }

    /// Grid point nearest to `u` on the torus.
    pub fn nearest(&self, u: S) -> usize {
        let x = (u - u.floor()) * S::of_usize(self.m);
        x.round().to_usize().unwrap_or(0) % self.m
    }

    /// Densities `(γ_1, …, γ_n)` at the grid point nearest to `u`.
    pub fn at(&self, u: S) -> Vec<S> {
        let j = self.nearest(u);
        (1..=self.n_species).map(|a| self.get(a, j)).collect()
    }

    pub fn cast<T: Real>(&self) -> ProfileGrid<T> {
        ProfileGrid {
            n_species: self.n_species,
            m: self.m,
            values: self.values.iter().map(|v| T::c(v.f64())).collect(),
        }
    }
}

/// Number of unordered label pairs `{a, b}`, `a < b`, over labels `0..=n`.
pub fn pair_count(n_species: usize) -> usize {
    (n_species + 1) * n_species / 2
}

/// Index of the unordered pair `a < b` among labels `0..=n`.
pub fn pair_index(n_species: usize, a: usize, b: usize) -> usize {
    debug_assert!(a < b && b <= n_species);
    let l = n_species + 1;
    a * l - a * (a + 1) / 2 + (b - a - 1)
}

#[derive(Clone, Debug, PartialEq)]
enum PotentialKind<S> {
    Zero,
    /// `H_α` for `α = 1..=n` (component `α-1`); pairs are `H_α − H_β`, `H_0 = 0`.
    Species(SpaceTimeGrid<S>),
    /// Independent `H_{ab}` for `a < b`; `H_{ba} = −H_{ab}`.
    Pairs(SpaceTimeGrid<S>),
}

/// Space-time potentials driving the weakly asymmetric dynamics.
///
/// Pair potentials are antisymmetric by construction. A set built from
/// per-species fields has the structure `H_{αβ} = H_α − H_β` required by the
/// exponential-martingale form of the Radon–Nikodym weight.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialSet<S> {
    n_species: usize,
    kind: PotentialKind<S>,
}

impl<S: Real> PotentialSet<S> {
    pub fn zero(n_species: usize) -> Self {
        Self { n_species, kind: PotentialKind::Zero }
    }

    /// One component per species, `H_1..H_n`.
    pub fn from_species(grid: SpaceTimeGrid<S>) -> Self {
        Self { n_species: grid.components(), kind: PotentialKind::Species(grid) }
    }

    /// One component per unordered pair `a < b`, ordered by [`pair_index`].
    pub fn from_pairs(n_species: usize, grid: SpaceTimeGrid<S>) -> Result<Self> {
        if grid.components() != pair_count(n_species) {
            return Err(Error::GridMismatch(format!(
                "{} species need {} pair components, got {}",
                n_species,
                pair_count(n_species),
                grid.components()
            )));
        }
        Ok(Self { n_species, kind: PotentialKind::Pairs(grid) })
    }

    #[inline]
    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            PotentialKind::Zero => true,
            PotentialKind::Species(g) | PotentialKind::Pairs(g) => g.values().iter().all(|v| *v == S::zero()),
        }
    }

    /// Whether `H_{αβ} = H_α − H_β` holds by construction.
    pub fn is_species_structured(&self) -> bool {
        !matches!(self.kind, PotentialKind::Pairs(_))
    }

    pub fn grid(&self) -> Option<&SpaceTimeGrid<S>> {
        match &self.kind {
            PotentialKind::Zero => None,
            PotentialKind::Species(g) | PotentialKind::Pairs(g) => Some(g),
        }
    }

    /// Slice times of the underlying grid, `[0]` for time-independent data.
    pub fn time_nodes(&self) -> Vec<S> {
        match self.grid() {
            Some(g) => (0..g.slices()).map(|k| S::of_usize(k) * g.dt()).collect(),
            None => vec![S::zero()],
        }
    }

    /// `H_α(u, t)`; `H_0 = 0`. For pair-defined sets this is `H_{α0}`.
    pub fn species(&self, a: usize, u: S, t: S) -> S {
        if a == 0 {
            return S::zero();
        }
        match &self.kind {
            PotentialKind::Zero => S::zero(),
            PotentialKind::Species(g) => g.eval(a - 1, u, t),
            PotentialKind::Pairs(_) => self.pair(a, 0, u, t),
        }
    }

    /// `∂_t H_α(u, t)` of the interpolant.
    pub fn species_dt(&self, a: usize, u: S, t: S) -> S {
        if a == 0 {
            return S::zero();
        }
        match &self.kind {
            PotentialKind::Zero => S::zero(),
            PotentialKind::Species(g) => g.eval_dt(a - 1, u, t),
            PotentialKind::Pairs(g) => -g.eval_dt(pair_index(self.n_species, 0, a), u, t),
        }
    }

    /// `H_{ab}(u, t)`.
    pub fn pair(&self, a: usize, b: usize, u: S, t: S) -> S {
        if a == b {
            return S::zero();
        }
        match &self.kind {
            PotentialKind::Zero => S::zero(),
            PotentialKind::Species(_) => self.species(a, u, t) - self.species(b, u, t),
            PotentialKind::Pairs(g) => {
                if a < b {
                    g.eval(pair_index(self.n_species, a, b), u, t)
                } else {
                    -g.eval(pair_index(self.n_species, b, a), u, t)
                }
            }
        }
    }

    /// Forward lattice gradient `H_{ab}((x+1)/N, t) − H_{ab}(x/N, t)`.
    pub fn lattice_gradient(&self, a: usize, b: usize, x: usize, n_sites: usize, t: S) -> S {
        let nf = S::of_usize(n_sites);
        let u0 = S::of_usize(x) / nf;
        let u1 = S::of_usize((x + 1) % n_sites) / nf;
        self.pair(a, b, u1, t) - self.pair(a, b, u0, t)
    }

    /// `max |H_α|` over grid values (pairs for pair-defined sets).
    pub fn max_abs(&self) -> S {
        self.grid().map_or(S::zero(), |g| g.max_abs())
    }

    pub fn cast<T: Real>(&self) -> PotentialSet<T> {
        let kind = match &self.kind {
            PotentialKind::Zero => PotentialKind::Zero,
            PotentialKind::Species(g) => PotentialKind::Species(g.cast()),
            PotentialKind::Pairs(g) => PotentialKind::Pairs(g.cast()),
        };
        PotentialSet { n_species: self.n_species, kind }
    }
}
