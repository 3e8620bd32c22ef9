//! The rate functional `I_γ(ρ) = h(ρ(0); γ) + I_0(ρ)` on grid trajectories.
//!
//! Discretisation, on nodes `u_j = j/M` (`h = 1/M`) and slices `t_k = k·dt`:
//!
//! * space sums carry weight `h`, time sums the trapezoid weights `w_k`;
//! * gradients are forward differences living on the faces `j + 1/2`, and the
//!   mobility on a face is `χ` of the face-averaged densities;
//! * `⟨G, H⟩ = 2 Σ_k w_k h Σ_j Σ_{αβ} DG_{α} χ̄_{αβ} DH_{β}`;
//! * `ℓ(ρ; G) = h Σ_j ρ_K·G_K − h Σ_j ρ_0·G_0 − Σ_k w_k h Σ_j ρ_k·(D_tG + Δ_hG)_k`
//!   with `D_t` central inside and one-sided at both ends, and `Δ_h` the
//!   three-point Laplacian.
//!
//! With these choices summation by parts is exact in both variables, so
//! `ℓ(ρ; G) = Σ_k w_k h Σ_j G_k·r_k` with `r = D_tρ − Δ_hρ`, and the Riesz
//! representative solves `−D·(2χ̄ DH) = r` slice by slice.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{ProfileGrid, SpaceTimeGrid};
use crate::hydro::{mobility_unchecked, DensityTrajectory};
use crate::linalg::spd_inverse;
use crate::rng::stream;
use crate::scalar::Real;

/// Default projection distance from the simplex boundary.
pub const DEFAULT_DELTA: f64 = 1e-6;
/// Largest tolerated spatial mean of the Riesz right-hand side.
pub const MASS_TOL: f64 = 1e-8;

/// `h(ω; γ) = Σ_{α=0}^n ∫ ω_α log(ω_α/γ_α)` as a Riemann sum over the grid.
/// Returns `+∞` when some `ω_α > 0` meets `γ_α = 0`.
pub fn static_cost<S: Real>(omega: &ProfileGrid<S>, gamma: &ProfileGrid<S>) -> Result<S> {
    if omega.n_species() != gamma.n_species() || omega.m() != gamma.m() {
        return Err(Error::GridMismatch("static cost needs profiles on one grid".into()));
    }
    let m = omega.m();
    let mut total = S::zero();
    for j in 0..m {
        for a in 0..=omega.n_species() {
            let (w, g) = (omega.get(a, j), gamma.get(a, j));
            if w > S::zero() {
                if g <= S::zero() {
                    return Ok(S::infinity());
                }
                total += w * (w / g).ln();
            }
        }
    }
    Ok(total / S::of_usize(m))
}

/// `sup_φ h_φ(ω; γ)` with each `φ_α(u)` restricted to the values in `grid`
/// (`φ_0 = 0`, which loses nothing since `h_φ` is invariant under a common
/// shift). Approaches [`static_cost`] from below as the grid is refined.
pub fn static_cost_sup_form<S: Real>(omega: &ProfileGrid<S>, gamma: &ProfileGrid<S>, grid: &[S]) -> Result<S> {
    if omega.n_species() != gamma.n_species() || omega.m() != gamma.m() {
        return Err(Error::GridMismatch("static cost needs profiles on one grid".into()));
    }
    let n = omega.n_species();
    let m = omega.m();
    let g = grid.len();
    if g == 0 {
        return invalid("empty φ grid");
    }
    let combos = g.checked_pow(n as u32).ok_or_else(|| Error::RangeExceeded("φ grid too large".into()))?;
    let mut total = S::zero();
    let mut phi = vec![S::zero(); n];
    for j in 0..m {
        let mut best = S::neg_infinity();
        for mut c in 0..combos {
            for p in phi.iter_mut() {
                *p = grid[c % g];
                c /= g;
            }
            let mut lin = S::zero();
            let mut part = gamma.get(0, j);
            for a in 1..=n {
                lin += omega.get(a, j) * phi[a - 1];
                part += gamma.get(a, j) * phi[a - 1].exp();
            }
            best = best.max(lin - part.ln());
        }
        total += best;
    }
    Ok(total / S::of_usize(m))
}

/// Trapezoid weights for `slices` nodes spaced `dt`.
pub fn trapezoid_weights<S: Real>(slices: usize, dt: S) -> Vec<S> {
    if slices == 1 {
        return vec![S::zero()];
    }
    let mut w = vec![dt; slices];
    w[0] = dt / S::c(2.0);
    w[slices - 1] = dt / S::c(2.0);
    w
}

/// Clips every node to `ρ_α ∈ [δ, 1−δ]`, `Σρ ≤ 1−δ`; returns the largest change.
/// Needs `(n+1)δ < 1`.
pub fn clip_trajectory<S: Real>(traj: &mut DensityTrajectory<S>, delta: S) -> S {
    let (n, m) = (traj.components(), traj.m());
    let mut worst = S::zero();
    let upper = S::one() - delta;
    for k in 0..traj.slices() {
        let s = traj.slice_mut(k);
        for j in 0..m {
            let mut sum = S::zero();
            for a in 0..n {
                let v = s[a * m + j];
                let c = v.max(delta).min(upper);
                worst = worst.max((c - v).abs());
                s[a * m + j] = c;
                sum += c;
            }
            if sum > upper {
                // shrink the parts above δ so the hole density is δ as well
                let floor = delta * S::of_usize(n);
                let f = (upper - floor) / (sum - floor);
                for a in 0..n {
                    let v = s[a * m + j];
                    let c = delta + (v - delta) * f;
                    worst = worst.max((c - v).abs());
                    s[a * m + j] = c;
                }
            }
        }
    }
    worst
}

/// Inner product of `H(ρ)` on a fixed trajectory.
#[derive(Clone, Debug)]
pub struct HilbertMetric<S> {
    n: usize,
    m: usize,
    slices: usize,
    weights: Vec<S>,
    /// `2χ̄` per slice and face, `n×n` row-major: `((k·M + j)·n + a)·n + b`.
    faces: Vec<S>,
    delta_clip: S,
}

impl<S: Real> HilbertMetric<S> {
    /// `delta = 0` disables clipping (the form is then only semi-definite).
    pub fn new(rho: &DensityTrajectory<S>, delta: S) -> Result<Self> {
        let (n, m, slices) = (rho.components(), rho.m(), rho.slices());
        if m < 3 || slices < 2 {
            return invalid("trajectory needs at least three points and two slices");
        }
        let mut clipped = rho.clone();
        let delta_clip = if delta > S::zero() { clip_trajectory(&mut clipped, delta) } else { S::zero() };
        let half = S::c(0.5);
        let two = S::c(2.0);
        let mut faces = Vec::with_capacity(slices * m * n * n);
        let mut bar = vec![S::zero(); n];
        for k in 0..slices {
            let s = clipped.slice(k);
            for j in 0..m {
                let jp = (j + 1) % m;
                for a in 0..n {
                    bar[a] = half * (s[a * m + j] + s[a * m + jp]);
                }
                faces.extend(mobility_unchecked(&bar).into_iter().map(|v| two * v));
            }
        }
        Ok(Self { n, m, slices, weights: trapezoid_weights(slices, rho.dt()), faces, delta_clip })
    }

    pub fn delta_clip(&self) -> S {
        self.delta_clip
    }
    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    fn check(&self, g: &SpaceTimeGrid<S>) -> Result<()> {
        if g.components() != self.n || g.m() != self.m || g.slices() != self.slices {
            return Err(Error::GridMismatch(format!(
                "field {}×{}×{} against trajectory {}×{}×{}",
                g.components(),
                g.m(),
                g.slices(),
                self.n,
                self.m,
                self.slices
            )));
        }
        Ok(())
    }

    #[inline]
    fn face(&self, k: usize, j: usize) -> &[S] {
        let nn = self.n * self.n;
        let i = (k * self.m + j) * nn;
        &self.faces[i..i + nn]
    }

    /// `⟨G, H⟩_{H(ρ)}`.
    pub fn inner(&self, g: &SpaceTimeGrid<S>, h: &SpaceTimeGrid<S>) -> Result<S> {
        self.check(g)?;
        self.check(h)?;
        let (n, m) = (self.n, self.m);
        let hs = S::one() / S::of_usize(m);
        let mut total = S::zero();
        let mut dg = vec![S::zero(); n];
        let mut dh = vec![S::zero(); n];
        for k in 0..self.slices {
            let (gs, hsl) = (g.slice(k), h.slice(k));
            let mut acc = S::zero();
            for j in 0..m {
                let jp = (j + 1) % m;
                for a in 0..n {
                    dg[a] = (gs[a * m + jp] - gs[a * m + j]) / hs;
                    dh[a] = (hsl[a * m + jp] - hsl[a * m + j]) / hs;
                }
                let w = self.face(k, j);
                for a in 0..n {
                    let mut row = S::zero();
                    for b in 0..n {
                        row += w[a * n + b] * dh[b];
                    }
                    acc += dg[a] * row;
                }
            }
            total += self.weights[k] * acc * hs;
        }
        Ok(total)
    }

    pub fn norm_sq(&self, g: &SpaceTimeGrid<S>) -> Result<S> {
        self.inner(g, g)
    }
}

/// `⟨G, H⟩_{H(ρ)}` with the default clipping.
pub fn inner_product<S: Real>(g: &SpaceTimeGrid<S>, h: &SpaceTimeGrid<S>, rho: &DensityTrajectory<S>) -> Result<S> {
    HilbertMetric::new(rho, S::c(DEFAULT_DELTA))?.inner(g, h)
}

fn same_grid<S: Real>(rho: &DensityTrajectory<S>, g: &SpaceTimeGrid<S>) -> Result<()> {
    if !rho.same_shape(g) {
        return Err(Error::GridMismatch("test function and trajectory use different grids".into()));
    }
    if rho.slices() < 2 || rho.m() < 3 {
        return invalid("trajectory needs at least three points and two slices");
    }
    Ok(())
}

/// Discrete time derivative: central inside, one-sided at the end slices.
fn time_derivative<S: Real>(f: &SpaceTimeGrid<S>, k: usize, out: &mut [S]) {
    let last = f.slices() - 1;
    let dt = f.dt();
    let (lo, hi, span) = if k == 0 {
        (0, 1, dt)
    } else if k == last {
        (last - 1, last, dt)
    } else {
        (k - 1, k + 1, dt + dt)
    };
    let (a, b) = (f.slice(lo), f.slice(hi));
    for i in 0..out.len() {
        out[i] = (b[i] - a[i]) / span;
    }
}

fn laplacian<S: Real>(row: &[S], out: &mut [S]) {
    let m = row.len();
    let h2 = S::one() / S::of_usize(m * m);
    for j in 0..m {
        let (jp, jm) = ((j + 1) % m, (j + m - 1) % m);
        out[j] = (row[jp] - row[j] - row[j] + row[jm]) / h2;
    }
}

/// `ℓ(ρ; G) = ⟨ρ(T), G(T)⟩ − ⟨ρ(0), G(0)⟩ − ∫⟨ρ, (∂_t + Δ)G⟩ dt`.
pub fn linear_functional<S: Real>(rho: &DensityTrajectory<S>, g: &SpaceTimeGrid<S>) -> Result<S> {
    same_grid(rho, g)?;
    let (n, m, last) = (rho.components(), rho.m(), rho.slices() - 1);
    let hs = S::one() / S::of_usize(m);
    let w = trapezoid_weights(rho.slices(), rho.dt());
    let dot = |a: &[S], b: &[S]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<S>();
    let mut total = (dot(rho.slice(last), g.slice(last)) - dot(rho.slice(0), g.slice(0))) * hs;
    let mut dtg = vec![S::zero(); n * m];
    let mut lap = vec![S::zero(); m];
    for k in 0..=last {
        time_derivative(g, k, &mut dtg);
        for a in 0..n {
            laplacian(g.row(a, k), &mut lap);
            for j in 0..m {
                dtg[a * m + j] += lap[j];
            }
        }
        total -= w[k] * dot(rho.slice(k), &dtg) * hs;
    }
    Ok(total)
}

/// `r = D_tρ − Δ_hρ` for every slice (the hydrodynamic defect of `ρ`).
pub fn defect<S: Real>(rho: &DensityTrajectory<S>) -> Result<SpaceTimeGrid<S>> {
    if rho.slices() < 2 || rho.m() < 3 {
        return invalid("trajectory needs at least three points and two slices");
    }
    let (n, m) = (rho.components(), rho.m());
    let mut r = SpaceTimeGrid::zeros(n, m, rho.slices(), rho.dt())?;
    let mut lap = vec![S::zero(); m];
    let mut buf = vec![S::zero(); n * m];
    for k in 0..rho.slices() {
        time_derivative(rho, k, &mut buf);
        for a in 0..n {
            laplacian(rho.row(a, k), &mut lap);
            for j in 0..m {
                buf[a * m + j] -= lap[j];
            }
        }
        r.slice_mut(k).copy_from_slice(&buf);
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RieszOptions<S> {
    pub delta: S,
    /// Random test functions used for the residual.
    pub residual_tests: usize,
    pub seed: u64,
}

impl<S: Real> Default for RieszOptions<S> {
    fn default() -> Self {
        Self { delta: S::c(DEFAULT_DELTA), residual_tests: 8, seed: 0x5eed }
    }
}

#[derive(Clone, Debug)]
pub struct RieszSolution<S> {
    /// Zero-mean potentials `H_1..H_n` on the trajectory grid.
    pub potential: SpaceTimeGrid<S>,
    pub metric: HilbertMetric<S>,
    /// `max_G |ℓ(ρ; G) − ⟨G, H⟩|` over the random batch.
    pub residual: S,
    /// `(Σ_k w_k h Σ_j |r|²)^{1/2}`.
    pub rhs_norm: S,
    /// Largest per-species `|mean r|` before projection.
    pub rhs_mean: S,
}

impl<S: Real> RieszSolution<S> {
    /// `I_0 = ½‖H‖²`.
    pub fn dynamic_cost(&self) -> Result<S> {
        Ok(S::c(0.5) * self.metric.norm_sq(&self.potential)?)
    }
}

/// Finds `H` with `ℓ(ρ; G) = ⟨G, H⟩_{H(ρ)}` for every grid `G`.
///
/// On one slice the flux `q = 2χ̄ DH` satisfies `q_j − q_{j−1} = −h r_j`, so
/// `q_j = c − h Σ_{i≤j} r_i`; periodicity of `H` (`Σ_j DH_j = 0`) fixes the
/// constant vector `c`, and `H` follows by summation. Each slice costs
/// `O(M n³)`.
pub fn riesz_solve<S: Real>(rho: &DensityTrajectory<S>, opts: &RieszOptions<S>) -> Result<RieszSolution<S>> {
    let metric = HilbertMetric::new(rho, opts.delta)?;
    let (n, m) = (rho.components(), rho.m());
    let hs = S::one() / S::of_usize(m);
    let mut r = defect(rho)?;
    let mut rhs_mean = S::zero();
    let mut rhs_norm = S::zero();
    for k in 0..rho.slices() {
        let mut acc = S::zero();
        for a in 0..n {
            let row = r.row_mut(a, k);
            let mean = row.iter().copied().sum::<S>() / S::of_usize(m);
            rhs_mean = rhs_mean.max(mean.abs());
            for v in row.iter_mut() {
                *v -= mean;
                acc += *v * *v;
            }
        }
        rhs_norm += metric.weights[k] * acc * hs;
    }
    if rhs_mean > S::c(MASS_TOL) {
        return Err(Error::NoSolution(format!(
            "defect has spatial mean {rhs_mean}: the trajectory does not conserve mass"
        )));
    }
    let mut pot = SpaceTimeGrid::zeros(n, m, rho.slices(), rho.dt())?;
    let nn = n * n;
    let mut inv = vec![S::zero(); m * nn];
    let mut cum = vec![S::zero(); m * n];
    let mut grad = vec![S::zero(); n];
    for k in 0..rho.slices() {
        let mut acc = vec![S::zero(); n];
        for j in 0..m {
            for a in 0..n {
                acc[a] += hs * r.get(a, j, k);
                cum[j * n + a] = acc[a];
            }
            let wi = spd_inverse(metric.face(k, j), n)
                .map_err(|_| Error::NoSolution(format!("singular mobility at slice {k}, face {j}")))?;
            inv[j * nn..(j + 1) * nn].copy_from_slice(&wi);
        }
        // c = (Σ W⁻¹)⁻¹ Σ W⁻¹ h R
        let mut sum_inv = vec![S::zero(); nn];
        let mut sum_vec = vec![S::zero(); n];
        for j in 0..m {
            let wi = &inv[j * nn..(j + 1) * nn];
            for a in 0..n {
                for b in 0..n {
                    sum_inv[a * n + b] += wi[a * n + b];
                    sum_vec[a] += wi[a * n + b] * cum[j * n + b];
                }
            }
        }
        let s_inv = spd_inverse(&sum_inv, n)?;
        let c: Vec<S> = (0..n).map(|a| (0..n).map(|b| s_inv[a * n + b] * sum_vec[b]).sum()).collect();
        let mut h_prev = vec![S::zero(); n];
        for j in 0..m {
            let wi = &inv[j * nn..(j + 1) * nn];
            for a in 0..n {
                grad[a] = (0..n).map(|b| wi[a * n + b] * (c[b] - cum[j * n + b])).sum();
            }
            for a in 0..n {
                pot.set(a, j, k, h_prev[a]);
                h_prev[a] += hs * grad[a];
            }
        }
        for a in 0..n {
            let row = pot.row_mut(a, k);
            let mean = row.iter().copied().sum::<S>() / S::of_usize(m);
            row.iter_mut().for_each(|v| *v -= mean);
        }
    }
    let mut residual = S::zero();
    let mut rng = stream(opts.seed, 0);
    let horizon = rho.horizon();
    for _ in 0..opts.residual_tests {
        let coeffs: Vec<(f64, f64, f64)> =
            (0..n * 3).map(|_| (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>())).collect();
        let g = SpaceTimeGrid::from_fn(n, m, rho.slices(), rho.dt(), |a, u, t| {
            let (u, t) = (u.f64(), t.f64());
            let tt = if horizon > S::zero() { t / horizon.f64() } else { 0.0 };
            let mut v = 0.0;
            for p in 0..3 {
                let (ca, cb, phase) = coeffs[a * 3 + p];
                let arg = std::f64::consts::TAU * (p + 1) as f64 * u;
                v += (ca * arg.cos() + cb * arg.sin()) * (1.0 + (std::f64::consts::PI * (tt + phase)).cos());
            }
            S::c(v)
        })?;
        let l = linear_functional(rho, &g)?;
        let ip = metric.inner(&g, &pot)?;
        residual = residual.max((l - ip).abs());
    }
    Ok(RieszSolution { potential: pot, metric, residual, rhs_norm: rhs_norm.sqrt(), rhs_mean })
}

/// `I_0(ρ)` and the recovered potential.
pub fn dynamic_cost<S: Real>(rho: &DensityTrajectory<S>, opts: &RieszOptions<S>) -> Result<(S, RieszSolution<S>)> {
    let sol = riesz_solve(rho, opts)?;
    Ok((sol.dynamic_cost()?, sol))
}

/// Finite trigonometric basis in `(u, t)`: for every species, spatial modes
/// `cos/sin(2πpu)`, `p = 1..=spatial`, times `1, cos(πqt/T), sin(πqt/T)`,
/// `q = 1..=temporal`. Bases with larger parameters contain smaller ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrigBasis {
    pub spatial: usize,
    pub temporal: usize,
}

impl TrigBasis {
    pub fn len(&self, n_species: usize) -> usize {
        n_species * 2 * self.spatial * (1 + 2 * self.temporal)
    }
    pub fn is_empty(&self) -> bool {
        self.spatial == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: f64,
    pub dimension: usize,
    /// Set when the Gram matrix needed the `1e-12` ridge.
    pub ridge: bool,
}

fn spatial_fn(s: usize, u: f64) -> f64 {
    let p = (s / 2 + 1) as f64;
    let arg = std::f64::consts::TAU * p * u;
    if s % 2 == 0 {
        arg.cos()
    } else {
        arg.sin()
    }
}

fn temporal_fn(q: usize, t: f64, horizon: f64) -> f64 {
    if q == 0 {
        return 1.0;
    }
    let f = ((q + 1) / 2) as f64;
    let arg = std::f64::consts::PI * f * t / horizon;
    if q % 2 == 1 {
        arg.cos()
    } else {
        arg.sin()
    }
}

/// `sup_{G ∈ span} {ℓ(ρ; G) − ½‖G‖²} = ½ bᵀA⁻¹b` over a [`TrigBasis`], with
/// `A` the Gram matrix in `⟨·,·⟩_{H(ρ)}` and `b_i = ℓ(ρ; G_i)`.
pub fn variational_lower_bound<S: Real>(
    rho: &DensityTrajectory<S>,
    metric: &HilbertMetric<S>,
    basis: &TrigBasis,
) -> Result<LowerBound> {
    let (n, m, slices) = (rho.components(), rho.m(), rho.slices());
    if metric.n != n || metric.m != m || metric.slices != slices {
        return Err(Error::GridMismatch("metric built on a different trajectory".into()));
    }
    let ns = 2 * basis.spatial;
    let nt = 1 + 2 * basis.temporal;
    let dim = basis.len(n);
    if dim == 0 {
        return Ok(LowerBound { value: 0.0, dimension: 0, ridge: false });
    }
    let horizon = rho.horizon().f64();
    let hs = 1.0 / m as f64;
    let dts: Vec<Vec<f64>> = (0..ns)
        .map(|s| (0..m).map(|j| (spatial_fn(s, (j + 1) as f64 * hs) - spatial_fn(s, j as f64 * hs)) / hs).collect())
        .collect();
    let tau: Vec<Vec<f64>> =
        (0..nt).map(|q| (0..slices).map(|k| temporal_fn(q, k as f64 * rho.dt().f64(), horizon)).collect()).collect();
    let index = |a: usize, s: usize, q: usize| (a * ns + s) * nt + q;
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut c = vec![0.0; n * n * ns * ns];
    for k in 0..slices {
        c.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..m {
            let w = metric.face(k, j);
            for a in 0..n {
                for b in 0..n {
                    let wab = w[a * n + b].f64();
                    if wab == 0.0 {
                        continue;
                    }
                    for si in 0..ns {
                        let x = dts[si][j] * wab;
                        for sj in 0..ns {
                            c[((a * n + b) * ns + si) * ns + sj] += x * dts[sj][j];
                        }
                    }
                }
            }
        }
        let wk = metric.weights[k].f64() * hs;
        for a in 0..n {
            for b in 0..n {
                for si in 0..ns {
                    for sj in 0..ns {
                        let v = wk * c[((a * n + b) * ns + si) * ns + sj];
                        for qi in 0..nt {
                            let vi = v * tau[qi][k];
                            for qj in 0..nt {
                                gram[(index(a, si, qi), index(b, sj, qj))] += vi * tau[qj][k];
                            }
                        }
                    }
                }
            }
        }
    }
    let mut b = DVector::<f64>::zeros(dim);
    for a in 0..n {
        for s in 0..ns {
            for q in 0..nt {
                let g = SpaceTimeGrid::from_fn(n, m, slices, rho.dt(), |c, u, t| {
                    if c == a {
                        S::c(spatial_fn(s, u.f64()) * temporal_fn(q, t.f64(), horizon))
                    } else {
                        S::zero()
                    }
                })?;
                b[index(a, s, q)] = linear_functional(rho, &g)?.f64();
            }
        }
    }
    let (sol, ridge) = match gram.clone().cholesky() {
        Some(ch) => (ch.solve(&b), false),
        None => {
            let mut reg = gram.clone();
            for i in 0..dim {
                reg[(i, i)] += 1e-12;
            }
            let ch = reg
                .cholesky()
                .ok_or_else(|| Error::NoSolution("Gram matrix singular even after ridge".into()))?;
            (ch.solve(&b), true)
        }
    };
    let value = b.dot(&sol) - 0.5 * sol.dot(&(&gram * &sol));
    Ok(LowerBound { value, dimension: dim, ridge })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridInfo {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub dt: f64,
}

/// Serializable summary of a rate evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub h: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
    #[serde(rename = "I_total")]
    pub i_total: f64,
    pub residual: f64,
    pub variational_lb: f64,
    pub gauge: &'static str,
    pub delta_clip: f64,
    pub grid: GridInfo,
}

#[derive(Clone, Debug)]
pub struct RateEvaluation<S> {
    pub h: S,
    pub i0: S,
    pub lower_bound: LowerBound,
    pub solution: RieszSolution<S>,
}

impl<S: Real> RateEvaluation<S> {
    pub fn total(&self) -> S {
        self.h + self.i0
    }

    pub fn report(&self, rho: &DensityTrajectory<S>) -> RateReport {
        RateReport {
            h: self.h.f64(),
            i0: self.i0.f64(),
            i_total: self.total().f64(),
            residual: self.solution.residual.f64(),
            variational_lb: self.lower_bound.value,
            gauge: "zero-mean",
            delta_clip: self.solution.metric.delta_clip().f64(),
            grid: GridInfo { m: rho.m(), k: rho.slices() - 1, dt: rho.dt().f64() },
        }
    }
}

/// `I_γ(ρ)` with its parts: static cost of `ρ(0)` against `γ`, Riesz
/// recovery, and the variational lower bound on `basis`.
pub fn evaluate<S: Real>(
    rho: &DensityTrajectory<S>,
    gamma: &ProfileGrid<S>,
    opts: &RieszOptions<S>,
    basis: &TrigBasis,
) -> Result<RateEvaluation<S>> {
    if gamma.n_species() != rho.components() || gamma.m() != rho.m() {
        return Err(Error::GridMismatch("reference profile and trajectory use different grids".into()));
    }
    let omega = ProfileGrid::new(rho.components(), rho.m(), rho.slice(0).to_vec())?;
    let h = static_cost(&omega, gamma)?;
    let (i0, solution) = dynamic_cost(rho, opts)?;
    let lower_bound = variational_lower_bound(rho, &solution.metric, basis)?;
    Ok(RateEvaluation { h, i0, lower_bound, solution })
}

/// Partition collapse of the dynamic cost: with `H_α = H̃_ℓ` for every species
/// `α` in group `A_ℓ`, `½‖H‖²` on `ρ` equals `½‖H̃‖²` on the aggregated
/// densities `ρ̃_ℓ = Σ_{α∈A_ℓ} ρ_α`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CollapseReport {
    pub full: f64,
    pub reduced: f64,
    pub difference: f64,
}

/// `groups` lists 1-based species per group; `h_groups` has one component per
/// group on the trajectory grid. No clipping is applied to either side.
pub fn collapse_check<S: Real>(
    rho: &DensityTrajectory<S>,
    groups: &[Vec<usize>],
    h_groups: &SpaceTimeGrid<S>,
) -> Result<CollapseReport> {
    let n = rho.components();
    let mut owner = vec![usize::MAX; n];
    for (l, g) in groups.iter().enumerate() {
        for &a in g {
            if a == 0 || a > n || owner[a - 1] != usize::MAX {
                return invalid("groups must partition the species 1..=n");
            }
            owner[a - 1] = l;
        }
    }
    if owner.contains(&usize::MAX) || h_groups.components() != groups.len() {
        return invalid("groups must partition the species and match the potentials");
    }
    let (m, slices) = (rho.m(), rho.slices());
    let mut full_h = SpaceTimeGrid::zeros(n, m, slices, rho.dt())?;
    let mut agg = SpaceTimeGrid::zeros(groups.len(), m, slices, rho.dt())?;
    for k in 0..slices {
        for a in 0..n {
            full_h.row_mut(a, k).copy_from_slice(h_groups.row(owner[a], k));
            for j in 0..m {
                let v = agg.get(owner[a], j, k) + rho.get(a, j, k);
                agg.set(owner[a], j, k, v);
            }
        }
    }
    let full = 0.5 * HilbertMetric::new(rho, S::zero())?.norm_sq(&full_h)?.f64();
    let reduced = 0.5 * HilbertMetric::new(&agg, S::zero())?.norm_sq(h_groups)?.f64();
    Ok(CollapseReport { full, reduced, difference: (full - reduced).abs() })
}
