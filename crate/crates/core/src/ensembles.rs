//! Exact finite-size computations: canonical measures, equivalence of
//! ensembles, Dirichlet forms, Feynman–Kac eigenvalues and block statistics.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::empirical::{tilde_phi, LocalObservable};
use crate::error::{invalid, Error, Result};
use crate::process::exact::{enumerate, state_count};
use crate::process::Configuration;

/// Uniform measure on configurations of `N` sites with species counts
/// `k_1..k_n` (holes take the rest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalSpec {
    pub n_sites: usize,
    pub counts: Vec<usize>,
}

impl CanonicalSpec {
    pub fn new(n_sites: usize, counts: Vec<usize>) -> Result<Self> {
        if counts.iter().sum::<usize>() > n_sites {
            return invalid("species counts exceed the number of sites");
        }
        Ok(Self { n_sites, counts })
    }

    pub fn holes(&self) -> usize {
        self.n_sites - self.counts.iter().sum::<usize>()
    }

    /// `N!/(k_0!·k_1!·…·k_n!)` in floating point.
    pub fn configurations(&self) -> f64 {
        let mut parts = self.counts.clone();
        parts.push(self.holes());
        multinomial(self.n_sites, &parts)
    }

    /// Densities `k/N`.
    pub fn densities(&self) -> Vec<f64> {
        self.counts.iter().map(|&k| k as f64 / self.n_sites as f64).collect()
    }
}

/// Multinomial coefficient as a product of binomials, each built
/// multiplicatively so intermediate values stay close to the result.
pub fn multinomial(n: usize, parts: &[usize]) -> f64 {
    let mut remaining = n;
    let mut total = 1.0;
    for &k in parts {
        total *= binomial(remaining, k);
        remaining -= k;
    }
    total
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut b = 1.0;
    for i in 0..k {
        b = b * (n - i) as f64 / (i + 1) as f64;
    }
    b.round().max(b.min(1.0))
}

/// `1/multinomial` if the counts of `config` match, `0` otherwise.
pub fn canonical_probability(spec: &CanonicalSpec, config: &Configuration) -> f64 {
    if config.n_sites() != spec.n_sites
        || config.n_species() != spec.counts.len()
        || config.counts()[1..] != spec.counts[..]
    {
        return 0.0;
    }
    1.0 / spec.configurations()
}

/// Probability under the canonical measure that `ℓ` fixed sites show one
/// fixed pattern containing `m_α` particles of species `α` (`m_0 = ℓ − Σm`
/// holes):
///
/// `[k_0]_{m_0}·[k_1]_{m_1}·…·[k_n]_{m_n} / [N]_ℓ`
///
/// with falling factorials, i.e. `multinomial(N−ℓ; k−m)/multinomial(N; k)`.
pub fn local_pattern_probability(len: usize, m: &[usize], spec: &CanonicalSpec) -> f64 {
    if m.len() != spec.counts.len() || len > spec.n_sites {
        return 0.0;
    }
    let used: usize = m.iter().sum();
    if used > len {
        return 0.0;
    }
    let mut pairs: Vec<(usize, usize)> = m.iter().copied().zip(spec.counts.iter().copied()).collect();
    pairs.push((len - used, spec.holes()));
    if pairs.iter().any(|&(mi, ki)| mi > ki) {
        return 0.0;
    }
    let mut p = 1.0;
    let mut den = spec.n_sites;
    for (mi, ki) in pairs {
        for i in 0..mi {
            p *= (ki - i) as f64 / den as f64;
            den -= 1;
        }
    }
    p
}

/// `E_{μ_{N,k}}[φ]`, summing the pattern probabilities over the table.
pub fn canonical_expectation(phi: &LocalObservable, spec: &CanonicalSpec) -> f64 {
    let base = phi.n_species() + 1;
    let l = phi.support();
    let mut m = vec![0usize; phi.n_species()];
    let mut total = 0.0;
    for (mut idx, &v) in phi.table().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        m.iter_mut().for_each(|c| *c = 0);
        for _ in 0..l {
            let s = idx % base;
            if s > 0 {
                m[s - 1] += 1;
            }
            idx /= base;
        }
        total += v * local_pattern_probability(l, &m, spec);
    }
    total
}

/// Calls `f` with every `(k_1..k_n)` with `Σk ≤ total`.
fn for_each_composition(n: usize, total: usize, mut f: impl FnMut(&[usize])) {
    let mut k = vec![0usize; n];
    loop {
        f(&k);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            k[i] += 1;
            if k.iter().sum::<usize>() <= total {
                break;
            }
            k[i] = 0;
            i += 1;
        }
    }
}

/// `sup_k |E_{μ_{N,k}}[φ] − φ̃(k/N)|` over every admissible `k`.
pub fn equivalence_gap(phi: &LocalObservable, n_sites: usize) -> Result<f64> {
    if phi.support() > n_sites {
        return invalid("observable support exceeds N");
    }
    let mut gap: f64 = 0.0;
    for_each_composition(phi.n_species(), n_sites, |k| {
        let spec = CanonicalSpec { n_sites, counts: k.to_vec() };
        let d = (canonical_expectation(phi, &spec) - tilde_phi(phi, &spec.densities())).abs();
        gap = gap.max(d);
    });
    Ok(gap)
}

/// Density with respect to the uniform product measure on all `(n+1)^N`
/// configurations, indexed as [`Configuration::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateDensity {
    n_species: usize,
    n_sites: usize,
    values: Vec<f64>,
}

impl StateDensity {
    /// Rescales nonnegative weights to mean one.
    pub fn normalized(n_species: usize, n_sites: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != state_count(n_species, n_sites)? {
            return invalid("one weight per configuration is required");
        }
        if values.iter().any(|&v| !(v >= 0.0)) {
            return invalid("density weights must be nonnegative");
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        if !(mean > 0.0) {
            return invalid("density weights must not all vanish");
        }
        values.iter_mut().for_each(|v| *v /= mean);
        Ok(Self { n_species, n_sites, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
    pub fn n_species(&self) -> usize {
        self.n_species
    }
}

/// `((n+1)^{−N}/2) Σ_η Σ_x (√f(η^{x,x+1}) − √f(η))²` over bonds holding two
/// different labels.
pub fn dirichlet_form(f: &StateDensity) -> Result<f64> {
    let states = enumerate(f.n_species, f.n_sites)?;
    let root: Vec<f64> = f.values.iter().map(|v| v.sqrt()).collect();
    let mut total = 0.0;
    for (i, c) in states.iter().enumerate() {
        for x in 0..f.n_sites {
            if c.label(x) != c.label(x + 1) {
                let d = root[c.swapped(x).index()] - root[i];
                total += d * d;
            }
        }
    }
    Ok(0.5 * total / states.len() as f64)
}

/// `N²L + aV` for the symmetric dynamics, dense; symmetric because the
/// uniform product measure is reversible.
pub fn feynman_kac_matrix(a: f64, v: &[f64], n_species: usize, n_sites: usize) -> Result<DMatrix<f64>> {
    let states = enumerate(n_species, n_sites)?;
    if v.len() != states.len() {
        return invalid("one potential value per configuration is required");
    }
    let n2 = (n_sites * n_sites) as f64;
    let s = states.len();
    let mut k = DMatrix::<f64>::zeros(s, s);
    for (i, c) in states.iter().enumerate() {
        for x in 0..n_sites {
            if c.label(x) != c.label(x + 1) {
                let j = c.swapped(x).index();
                k[(i, j)] += n2;
                k[(i, i)] -= n2;
            }
        }
        k[(i, i)] += a * v[i];
    }
    Ok(k)
}

/// Power-iteration cap.
pub const POWER_ITERATIONS: usize = 100_000;

/// Largest eigenvalue of `K = N²L + aV` by power iteration.
///
/// `K` is block diagonal over the species-count shells and irreducible with
/// nonnegative off-diagonal entries inside each one, so every shell has a
/// simple top eigenvalue with a positive eigenvector. The iteration runs on
/// `K + sI` per shell, `s` a Gershgorin shift making the block nonnegative
/// definite, from the constant vector.
pub fn feynman_kac_lambda(a: f64, v: &[f64], n_species: usize, n_sites: usize) -> Result<f64> {
    let states = enumerate(n_species, n_sites)?;
    if v.len() != states.len() {
        return invalid("one potential value per configuration is required");
    }
    let mut shells = std::collections::HashMap::<Vec<usize>, Vec<usize>>::new();
    for (i, c) in states.iter().enumerate() {
        shells.entry(c.counts().to_vec()).or_default().push(i);
    }
    let mut local = vec![0usize; states.len()];
    let mut best = f64::NEG_INFINITY;
    for members in shells.values() {
        for (li, &i) in members.iter().enumerate() {
            local[i] = li;
        }
        best = best.max(shell_lambda(a, v, &states, members, &local, n_sites)?);
    }
    Ok(best)
}

fn shell_lambda(
    a: f64,
    v: &[f64],
    states: &[Configuration],
    members: &[usize],
    local: &[usize],
    n_sites: usize,
) -> Result<f64> {
    let n2 = (n_sites * n_sites) as f64;
    let s = members.len();
    let neigh: Vec<Vec<usize>> = members
        .iter()
        .map(|&i| {
            let c = &states[i];
            (0..n_sites).filter(|&x| c.label(x) != c.label(x + 1)).map(|x| local[c.swapped(x).index()]).collect()
        })
        .collect();
    let diag: Vec<f64> = neigh.iter().zip(members).map(|(nb, &i)| -n2 * nb.len() as f64 + a * v[i]).collect();
    let shift = neigh.iter().zip(&diag).map(|(nb, &d)| n2 * nb.len() as f64 - d).fold(0.0, f64::max);
    let scale = shift.max(1.0);
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![1.0 / (s as f64).sqrt(); s];
    let mut y = vec![0.0; s];
    for _ in 0..POWER_ITERATIONS {
        for i in 0..s {
            let mut acc = (diag[i] + shift) * x[i];
            for &j in &neigh[i] {
                acc += n2 * x[j];
            }
            y[i] = acc;
        }
        let rq: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let res = x.iter().zip(&y).map(|(a, b)| (b - rq * a).powi(2)).sum::<f64>().sqrt();
        if res <= 1e-10 * scale {
            return Ok(rq - shift);
        }
        let ny = norm(&y);
        for i in 0..s {
            x[i] = y[i] / ny;
        }
    }
    Err(Error::NonConvergence { what: "power iteration", iterations: POWER_ITERATIONS })
}

/// `E_ν[exp(a∫_0^t V(η_s) ds)]` from the uniform product measure, exactly,
/// through the spectral decomposition of `K`.
pub fn exponential_moment(a: f64, v: &[f64], n_species: usize, n_sites: usize, t: f64) -> Result<f64> {
    let k = feynman_kac_matrix(a, v, n_species, n_sites)?;
    let s = k.nrows();
    let eig = SymmetricEigen::new(k);
    let mut total = 0.0;
    for i in 0..s {
        let c: f64 = eig.eigenvectors.column(i).sum();
        total += (t * eig.eigenvalues[i]).exp() * c * c;
    }
    Ok(total / s as f64)
}

/// `λ_max` of `K` by dense symmetric diagonalisation.
pub fn feynman_kac_lambda_dense(a: f64, v: &[f64], n_species: usize, n_sites: usize) -> Result<f64> {
    let k = feynman_kac_matrix(a, v, n_species, n_sites)?;
    Ok(SymmetricEigen::new(k).eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// `exp(N((t/N)λ_max − δa))`, the Chebyshev/Feynman–Kac bound on
/// `P((1/N)∫_0^t V ≥ δ)`.
pub fn chebyshev_bound(lambda_max: f64, n_sites: usize, t: f64, delta: f64, a: f64) -> f64 {
    let n = n_sites as f64;
    (n * (t / n * lambda_max - delta * a)).exp()
}

/// Largest block length enumerated.
pub const MAX_BLOCK: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockGaps {
    pub one_block: f64,
    pub two_block: f64,
}

/// One- and two-block gaps for blocks of `2k+1` sites.
///
/// One block: the largest, over count shells, of the uniform-shell mean of
/// `|(2k+1)^{-1}Σ_y τ_yφ − φ̃(block densities)|`; translates of `φ` wrap
/// inside the block. Two blocks: the largest, over joint shells of the
/// `2(2k+1)` sites, of the mean Euclidean distance between the two block
/// density vectors, using the multivariate hypergeometric split law.
pub fn block_gap_statistics(phi: &LocalObservable, k: usize) -> Result<BlockGaps> {
    Ok(BlockGaps { one_block: one_block_gap(phi, k)?, two_block: two_block_gap(phi.n_species(), k)? })
}

pub fn one_block_gap(phi: &LocalObservable, k: usize) -> Result<f64> {
    let l = 2 * k + 1;
    if l > MAX_BLOCK {
        return Err(Error::RangeExceeded(format!("block of {l} sites exceeds {MAX_BLOCK}")));
    }
    if k == 0 || phi.support() > l {
        return invalid("block half-width must be positive and the block must hold the observable");
    }
    let n = phi.n_species();
    let states = enumerate(n, l)?;
    let mut sums = std::collections::HashMap::<Vec<usize>, (f64, usize)>::new();
    for c in states.iter() {
        let avg = (0..l).map(|y| phi.eval_at(c, y)).sum::<f64>() / l as f64;
        let dens: Vec<f64> = c.counts()[1..].iter().map(|&v| v as f64 / l as f64).collect();
        let e = sums.entry(c.counts()[1..].to_vec()).or_insert((0.0, 0));
        e.0 += (avg - tilde_phi(phi, &dens)).abs();
        e.1 += 1;
    }
    Ok(sums.values().map(|(s, c)| s / *c as f64).fold(0.0, f64::max))
}

pub fn two_block_gap(n_species: usize, k: usize) -> Result<f64> {
    let l = 2 * k + 1;
    if l > MAX_BLOCK {
        return Err(Error::RangeExceeded(format!("block of {l} sites exceeds {MAX_BLOCK}")));
    }
    let total = binomial(2 * l, l);
    let mut gap: f64 = 0.0;
    for_each_composition(n_species, 2 * l, |big_k| {
        let holes = 2 * l - big_k.iter().sum::<usize>();
        let mut all: Vec<usize> = big_k.to_vec();
        all.push(holes);
        let mut mean = 0.0;
        // split j_α ≤ K_α with Σ_α j_α = l over labels 1..n and holes
        for_each_composition(n_species, l, |j| {
            let used: usize = j.iter().sum();
            let j0 = l - used;
            if j.iter().zip(big_k).any(|(a, b)| a > b) || j0 > holes {
                return;
            }
            let mut w = binomial(holes, j0);
            let mut d2 = 0.0;
            for a in 0..n_species {
                w *= binomial(big_k[a], j[a]);
                let diff = (2 * j[a]) as f64 - big_k[a] as f64;
                d2 += (diff / l as f64).powi(2);
            }
            mean += w / total * d2.sqrt();
        });
        gap = gap.max(mean);
    });
    Ok(gap)
}

/// Two-column CSV for trend plots.
pub fn write_table<W: Write>(mut w: W, header: (&str, &str), rows: &[(f64, f64)]) -> Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (x, y) in rows {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_examples() {
        let spec = CanonicalSpec::new(3, vec![1, 1]).unwrap();
        let c = Configuration::new(2, vec![2, 0, 1]).unwrap();
        assert!((canonical_probability(&spec, &c) - 1.0 / 6.0).abs() < 1e-16);
        let wrong = Configuration::new(2, vec![2, 2, 1]).unwrap();
        assert_eq!(canonical_probability(&spec, &wrong), 0.0);
        let spec = CanonicalSpec::new(4, vec![2, 0]).unwrap();
        assert!((spec.configurations() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn full_window_pattern_is_canonical_probability() {
        let spec = CanonicalSpec::new(7, vec![3, 2]).unwrap();
        let p = local_pattern_probability(7, &[3, 2], &spec);
        assert!((p - 1.0 / spec.configurations()).abs() < 1e-17);
        assert_eq!(local_pattern_probability(2, &[4, 0], &spec), 0.0);
    }

    #[test]
    fn pair_gap_closed_form_at_ten() {
        let phi = LocalObservable::occupation_product(2, &[1, 1]).unwrap();
        let g = equivalence_gap(&phi, 10).unwrap();
        // k(k−1)/(N(N−1)) − (k/N)² at k = N/2
        assert!((g - 1.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn power_iteration_trivial_cases() {
        let s = 3usize.pow(4);
        let zero = vec![0.0; s];
        assert!(feynman_kac_lambda(0.0, &zero, 2, 4).unwrap().abs() < 1e-9);
        let c = vec![0.7; s];
        assert!((feynman_kac_lambda(2.0, &c, 2, 4).unwrap() - 1.4).abs() < 1e-9);
    }
}
