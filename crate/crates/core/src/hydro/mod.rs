//! Mobility, free energy and currents of the hydrodynamic equations, plus the
//! finite-volume solver.

mod solver;

pub use solver::{solve_hydro, SchemeParams, Stepper};

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{invalid, Error, Result};
use crate::grid::{PotentialSet, SpaceTimeGrid, SIMPLEX_TOL};
use crate::scalar::Real;

/// Densities `ρ_α(j/M, k·dt)` for `α = 1..=n` (component `α−1`).
pub type DensityTrajectory<S> = SpaceTimeGrid<S>;

fn check_closed<S: Real>(rho: &[S]) -> Result<()> {
    let tol = S::c(SIMPLEX_TOL);
    let sum: S = rho.iter().copied().sum();
    if rho.iter().any(|&r| !(r >= -tol)) || !(sum <= S::one() + tol) {
        return invalid(format!("density vector {rho:?} lies outside the simplex"));
    }
    Ok(())
}

fn check_open<S: Real>(rho: &[S]) -> Result<()> {
    let sum: S = rho.iter().copied().sum();
    if rho.iter().any(|&r| !(r > S::zero())) || !(sum < S::one()) {
        return invalid(format!("density vector {rho:?} is not strictly inside the simplex"));
    }
    Ok(())
}

/// `D = I_n`.
pub fn diffusion_matrix<S: Real>(n: usize) -> Vec<S> {
    let mut d = vec![S::zero(); n * n];
    for i in 0..n {
        d[i * n + i] = S::one();
    }
    d
}

/// `χ_{αβ}(ρ) = ρ_α(δ_{αβ} − ρ_β)`, row-major.
pub fn mobility<S: Real>(rho: &[S]) -> Result<Vec<S>> {
    check_closed(rho)?;
    Ok(mobility_unchecked(rho))
}

pub(crate) fn mobility_unchecked<S: Real>(rho: &[S]) -> Vec<S> {
    let n = rho.len();
    let mut chi = vec![S::zero(); n * n];
    for a in 0..n {
        for b in 0..n {
            let delta = if a == b { rho[a] } else { S::zero() };
            chi[a * n + b] = delta - rho[a] * rho[b];
        }
    }
    chi
}

/// `F(ρ) = Σ_{α=0}^n ρ_α log ρ_α + log(n+1)`, the relative entropy with respect
/// to the uniform point of the simplex.
pub fn free_energy<S: Real>(rho: &[S]) -> Result<S> {
    check_open(rho)?;
    let rho0 = S::one() - rho.iter().copied().sum::<S>();
    let mut f = rho0 * rho0.ln();
    for &r in rho {
        f += r * r.ln();
    }
    Ok(f + S::of_usize(rho.len() + 1).ln())
}

/// `F''(ρ)_{αβ} = δ_{αβ}/ρ_α + 1/ρ_0`.
pub fn hessian<S: Real>(rho: &[S]) -> Result<Vec<S>> {
    check_open(rho)?;
    let n = rho.len();
    let inv0 = S::one() / (S::one() - rho.iter().copied().sum::<S>());
    let mut h = vec![inv0; n * n];
    for a in 0..n {
        h[a * n + a] += S::one() / rho[a];
    }
    Ok(h)
}

/// `‖F''(ρ)χ(ρ) − D‖_∞` (max entry).
pub fn einstein_residual<S: Real>(rho: &[S]) -> Result<S> {
    let n = rho.len();
    let h = hessian(rho)?;
    let chi = mobility_unchecked(rho);
    let d = diffusion_matrix::<S>(n);
    let mut r = S::zero();
    for i in 0..n {
        for j in 0..n {
            let mut s = S::zero();
            for k in 0..n {
                s += h[i * n + k] * chi[k * n + j];
            }
            r = r.max((s - d[i * n + j]).abs());
        }
    }
    Ok(r)
}

/// Node values of the Fick, drift and total currents, each `n×M`
/// component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Currents<S> {
    pub fick: Vec<S>,
    pub drift: Vec<S>,
    pub total: Vec<S>,
}

/// Currents at the nodes of one time slice with central differences:
/// `J^F_α = −∂_uρ_α`, `J^D_α = 2Σ_{β≠α} ρ_αρ_β ∂_u H_{αβ}` (`β = 0` included),
/// which equals `2(χ∇H)_α` when `H_{αβ} = H_α − H_β`.
pub fn currents<S: Real>(rho: &[S], m: usize, potentials: &PotentialSet<S>, t: S) -> Result<Currents<S>> {
    let n = potentials.n_species();
    if rho.len() != n * m || m < 3 {
        return Err(Error::GridMismatch(format!("slice of length {} for {n} species on {m} points", rho.len())));
    }
    let h = S::one() / S::of_usize(m);
    let two = S::c(2.0);
    let mut fick = vec![S::zero(); n * m];
    let mut drift = vec![S::zero(); n * m];
    let mut dens = vec![S::zero(); n + 1];
    for j in 0..m {
        let jp = (j + 1) % m;
        let jm = (j + m - 1) % m;
        let (up, um) = (S::of_usize(jp) * h, S::of_usize(jm) * h);
        let mut s = S::zero();
        for a in 1..=n {
            dens[a] = rho[(a - 1) * m + j];
            s += dens[a];
        }
        dens[0] = S::one() - s;
        for a in 1..=n {
            fick[(a - 1) * m + j] = -(rho[(a - 1) * m + jp] - rho[(a - 1) * m + jm]) / (two * h);
            let mut d = S::zero();
            for b in 0..=n {
                if b == a {
                    continue;
                }
                let grad = (potentials.pair(a, b, up, t) - potentials.pair(a, b, um, t)) / (two * h);
                d += dens[a] * dens[b] * grad;
            }
            drift[(a - 1) * m + j] = two * d;
        }
    }
    let total = fick.iter().zip(&drift).map(|(&f, &d)| f + d).collect();
    Ok(Currents { fick, drift, total })
}

/// Largest simplex violation over every node of a trajectory.
pub fn simplex_violation<S: Real>(traj: &DensityTrajectory<S>) -> S {
    let (n, m) = (traj.components(), traj.m());
    let mut worst = S::zero();
    for k in 0..traj.slices() {
        let slice = traj.slice(k);
        for j in 0..m {
            let mut s = S::zero();
            for a in 0..n {
                let r = slice[a * m + j];
                worst = worst.max(-r).max(r - S::one());
                s += r;
            }
            worst = worst.max(s - S::one());
        }
    }
    worst
}

/// Spatial mean of species component `c` at slice `k`.
pub fn species_mean<S: Real>(traj: &DensityTrajectory<S>, c: usize, k: usize) -> S {
    traj.row(c, k).iter().copied().sum::<S>() / S::of_usize(traj.m())
}

/// Columns `t, u, rho_1, …, rho_n`.
pub fn write_trajectory_csv<S: Real, W: Write>(traj: &DensityTrajectory<S>, mut w: W) -> Result<()> {
    write!(w, "t,u")?;
    for a in 1..=traj.components() {
        write!(w, ",rho_{a}")?;
    }
    writeln!(w)?;
    let m = traj.m();
    for k in 0..traj.slices() {
        let t = traj.dt().f64() * k as f64;
        for j in 0..m {
            write!(w, "{},{}", t, j as f64 / m as f64)?;
            for a in 0..traj.components() {
                write!(w, ",{}", traj.get(a, j, k).f64())?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Header `M u64, K u64, n u64, dt f64` followed by the slice-major values as
/// little-endian `f64`; `K` counts time steps, so `K+1` slices are stored.
pub fn write_trajectory_binary<S: Real, W: Write>(traj: &DensityTrajectory<S>, mut w: W) -> Result<()> {
    w.write_u64::<LittleEndian>(traj.m() as u64)?;
    w.write_u64::<LittleEndian>(traj.slices() as u64 - 1)?;
    w.write_u64::<LittleEndian>(traj.components() as u64)?;
    w.write_f64::<LittleEndian>(traj.dt().f64())?;
    for v in traj.values() {
        w.write_f64::<LittleEndian>(v.f64())?;
    }
    Ok(())
}

pub fn read_trajectory_binary<R: Read>(mut r: R) -> Result<DensityTrajectory<f64>> {
    let m = r.read_u64::<LittleEndian>()? as usize;
    let k = r.read_u64::<LittleEndian>()? as usize;
    let n = r.read_u64::<LittleEndian>()? as usize;
    let dt = r.read_f64::<LittleEndian>()?;
    let len = m
        .checked_mul(k + 1)
        .and_then(|v| v.checked_mul(n))
        .ok_or_else(|| Error::Format("trajectory header overflows".into()))?;
    let mut values = vec![0.0; len];
    r.read_f64_into::<LittleEndian>(&mut values)?;
    SpaceTimeGrid::from_values(n, m, k + 1, dt, values)
}
