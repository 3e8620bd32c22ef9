//! Conservative finite-volume scheme for the coupled hydrodynamic equations
//! `∂_tρ_α = Δρ_α − 2Σ_{β≠α} ∇(ρ_αρ_β∇H_{αβ})` on the unit torus.
//!
//! Unknowns live on the nodes `u_j = j/M`; fluxes live on the faces between
//! `j` and `j+1`:
//!
//! `F_α = −(ρ_{α,j+1} − ρ_{α,j})/h + 2Σ_{β≠α} ρ̄_αρ̄_β (H_{αβ,j+1} − H_{αβ,j})/h`
//!
//! with arithmetic face averages `ρ̄` (the hole density included). Fluxes
//! telescope, so every species mean is conserved up to rounding.

use super::DensityTrajectory;
use crate::error::{invalid, Error, Result};
use crate::grid::{PotentialSet, ProfileGrid, SpaceTimeGrid};
use crate::linalg::solve_cyclic_tridiagonal;
use crate::scalar::Real;

const REJECT_TOL: f64 = 1e-8;
const MAX_HALVINGS: u32 = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepper {
    ExplicitEuler,
    /// Implicit diffusion, explicit drift.
    Imex,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeParams<S> {
    pub m: usize,
    /// Largest internal time step; every output interval is split evenly.
    pub dt: S,
    pub stepper: Stepper,
    pub safety: S,
    pub horizon: S,
    /// Number of output intervals `K`; the trajectory has `K+1` slices.
    pub output_steps: usize,
}

impl<S: Real> SchemeParams<S> {
    /// Explicit Euler at `dt = 0.4·h²/2`.
    pub fn explicit(m: usize, horizon: S, output_steps: usize) -> Self {
        let safety = S::c(0.4);
        let h = S::one() / S::of_usize(m);
        Self { m, dt: safety * h * h / S::c(2.0), stepper: Stepper::ExplicitEuler, safety, horizon, output_steps }
    }

    pub fn imex(m: usize, dt: S, horizon: S, output_steps: usize) -> Self {
        Self { m, dt, stepper: Stepper::Imex, safety: S::c(0.4), horizon, output_steps }
    }

    pub fn cfl_limit(&self) -> S {
        let h = S::one() / S::of_usize(self.m);
        self.safety * h * h / S::c(2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return invalid("the solver needs at least three grid points");
        }
        if self.output_steps == 0 {
            return invalid("at least one output step is required");
        }
        if !(self.horizon > S::zero()) || !(self.dt > S::zero()) {
            return invalid("horizon and time step must be positive");
        }
        if self.stepper == Stepper::ExplicitEuler
            && self.dt > self.cfl_limit() * (S::one() + S::c(1e-12))
        {
            return invalid(format!("explicit step {} exceeds the CFL limit {}", self.dt, self.cfl_limit()));
        }
        Ok(())
    }
}

/// Integrates the hydrodynamic equations from `γ` and returns `K+1` slices
/// spaced `T/K` apart.
pub fn solve_hydro<S: Real>(
    gamma: &ProfileGrid<S>,
    potentials: &PotentialSet<S>,
    scheme: &SchemeParams<S>,
) -> Result<DensityTrajectory<S>> {
    scheme.validate()?;
    let n = gamma.n_species();
    if potentials.n_species() != n {
        return Err(Error::GridMismatch(format!(
            "profile has {n} species, potentials {}",
            potentials.n_species()
        )));
    }
    let m = scheme.m;
    let k_out = scheme.output_steps;
    let out_dt = scheme.horizon / S::of_usize(k_out);
    let mut traj = SpaceTimeGrid::zeros(n, m, k_out + 1, out_dt)?;
    let inv_m = S::one() / S::of_usize(m);
    {
        let s0 = traj.slice_mut(0);
        for a in 1..=n {
            for j in 0..m {
                let g = gamma.nearest(S::of_usize(j) * inv_m);
                s0[(a - 1) * m + j] = gamma.get(a, g);
            }
        }
    }
    let mut stepper = Integrator::new(n, m, potentials, scheme.stepper);
    let mut state = traj.slice(0).to_vec();
    let sub = (out_dt / scheme.dt - S::c(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
    let tau = out_dt / S::of_usize(sub);
    for k in 0..k_out {
        for s in 0..sub {
            let t = out_dt * S::of_usize(k) + tau * S::of_usize(s);
            stepper.advance(&mut state, t, tau, 0)?;
        }
        traj.slice_mut(k + 1).copy_from_slice(&state);
    }
    Ok(traj)
}

struct Integrator<'a, S> {
    n: usize,
    m: usize,
    h: S,
    potentials: &'a PotentialSet<S>,
    zero_drift: bool,
    stepper: Stepper,
    pairs: Vec<S>,
    flux: Vec<S>,
    next: Vec<S>,
    lower: Vec<S>,
    diag: Vec<S>,
    upper: Vec<S>,
}

impl<'a, S: Real> Integrator<'a, S> {
    fn new(n: usize, m: usize, potentials: &'a PotentialSet<S>, stepper: Stepper) -> Self {
        let l = n + 1;
        Self {
            n,
            m,
            h: S::one() / S::of_usize(m),
            potentials,
            zero_drift: potentials.is_zero(),
            stepper,
            pairs: vec![S::zero(); l * l * m],
            flux: vec![S::zero(); n * m],
            next: vec![S::zero(); n * m],
            lower: vec![S::zero(); m],
            diag: vec![S::zero(); m],
            upper: vec![S::zero(); m],
        }
    }

    fn sample_pairs(&mut self, t: S) {
        let (l, m) = (self.n + 1, self.m);
        for j in 0..m {
            let u = S::of_usize(j) * self.h;
            for a in 0..l {
                for b in a + 1..l {
                    let v = self.potentials.pair(a, b, u, t);
                    self.pairs[(a * l + b) * m + j] = v;
                    self.pairs[(b * l + a) * m + j] = -v;
                }
            }
        }
    }

    /// Face fluxes; the diffusive part is included only for the explicit stepper.
    fn fluxes(&mut self, rho: &[S], with_diffusion: bool) {
        let (n, m, h) = (self.n, self.m, self.h);
        let l = n + 1;
        let two = S::c(2.0);
        let half = S::c(0.5);
        let mut bar = vec![S::zero(); l];
        for j in 0..m {
            let jp = if j + 1 == m { 0 } else { j + 1 };
            let mut s = S::zero();
            for a in 1..=n {
                bar[a] = half * (rho[(a - 1) * m + j] + rho[(a - 1) * m + jp]);
                s += bar[a];
            }
            bar[0] = S::one() - s;
            for a in 1..=n {
                let mut f = S::zero();
                if with_diffusion {
                    f = -(rho[(a - 1) * m + jp] - rho[(a - 1) * m + j]) / h;
                }
                if !self.zero_drift {
                    let mut d = S::zero();
                    for b in 0..l {
                        if b == a {
                            continue;
                        }
                        let p = &self.pairs[(a * l + b) * m..(a * l + b + 1) * m];
                        d += bar[b] * (p[jp] - p[j]);
                    }
                    f += two * bar[a] * d / h;
                }
                self.flux[(a - 1) * m + j] = f;
            }
        }
    }

    fn step(&mut self, rho: &[S], t: S, tau: S) -> Result<()> {
        let (n, m, h) = (self.n, self.m, self.h);
        if !self.zero_drift {
            self.sample_pairs(t);
        }
        let explicit = self.stepper == Stepper::ExplicitEuler;
        self.fluxes(rho, explicit);
        let r = tau / h;
        for a in 0..n {
            for j in 0..m {
                let jm = if j == 0 { m - 1 } else { j - 1 };
                self.next[a * m + j] = rho[a * m + j] - r * (self.flux[a * m + j] - self.flux[a * m + jm]);
            }
        }
        if !explicit {
            let c = tau / (h * h);
            for j in 0..m {
                self.lower[j] = -c;
                self.upper[j] = -c;
                self.diag[j] = S::one() + c + c;
            }
            for a in 0..n {
                solve_cyclic_tridiagonal(&self.lower, &self.diag, &self.upper, &mut self.next[a * m..(a + 1) * m])?;
            }
        }
        Ok(())
    }

    fn violation(&self) -> S {
        let (n, m) = (self.n, self.m);
        let mut worst = S::zero();
        for j in 0..m {
            let mut s = S::zero();
            for a in 0..n {
                let v = self.next[a * m + j];
                worst = worst.max(-v).max(v - S::one());
                s += v;
            }
            worst = worst.max(s - S::one());
        }
        worst
    }

    fn advance(&mut self, rho: &mut Vec<S>, t: S, tau: S, depth: u32) -> Result<()> {
        self.step(rho, t, tau)?;
        let v = self.violation();
        if v.is_finite() && v <= S::c(REJECT_TOL) {
            rho.copy_from_slice(&self.next);
            return Ok(());
        }
        if depth >= MAX_HALVINGS {
            return Err(Error::StepRejected { t: t.f64(), halvings: depth });
        }
        let half = tau / S::c(2.0);
        self.advance(rho, t, half, depth + 1)?;
        self.advance(rho, t + half, half, depth + 1)
    }
}
