//! Dense generators and measures on the full state space (small `N` only).

use nalgebra::DMatrix;

use super::{Configuration, LatticeField};
use crate::error::{Error, Result};

/// Largest state space assembled densely.
pub const MAX_STATES: usize = 1 << 20;

pub fn state_count(n_species: usize, n_sites: usize) -> Result<usize> {
    let base = n_species + 1;
    let mut total: usize = 1;
    for _ in 0..n_sites {
        total = total
            .checked_mul(base)
            .filter(|&v| v <= MAX_STATES)
            .ok_or_else(|| Error::RangeExceeded(format!("{base}^{n_sites} states")))?;
    }
    Ok(total)
}

/// All configurations in index order.
pub fn enumerate(n_species: usize, n_sites: usize) -> Result<Vec<Configuration>> {
    let s = state_count(n_species, n_sites)?;
    (0..s).map(|i| Configuration::from_index(n_species as u8, n_sites, i)).collect()
}

/// Generator matrix `scale·L_t` of the stirring process with the potentials of
/// `field` frozen at time `t`; rows sum to zero.
pub fn generator_matrix(field: &LatticeField, t: f64, scale: f64) -> Result<DMatrix<f64>> {
    let n = field.n_sites();
    let states = enumerate(field.n_species(), n)?;
    let s = states.len();
    let mut l = DMatrix::<f64>::zeros(s, s);
    for (i, c) in states.iter().enumerate() {
        for x in 0..n {
            let (a, b) = (c.label(x), c.label(x + 1));
            if a == b {
                continue;
            }
            let j = c.swapped(x).index();
            let r = scale * field.grad(a as usize, b as usize, x, t).exp();
            l[(i, j)] += r;
            l[(i, i)] -= r;
        }
    }
    Ok(l)
}

/// Product measure with constant marginal `p = (p_1, …, p_n)` over all states.
pub fn product_measure(n_species: usize, n_sites: usize, p: &[f64]) -> Result<Vec<f64>> {
    let p0 = 1.0 - p.iter().sum::<f64>();
    let states = enumerate(n_species, n_sites)?;
    Ok(states
        .iter()
        .map(|c| c.sites().iter().map(|&s| if s == 0 { p0 } else { p[s as usize - 1] }).product())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PotentialSet;

    #[test]
    fn symmetric_generator_satisfies_detailed_balance() {
        let field = LatticeField::new(&PotentialSet::zero(2), 4);
        let l = generator_matrix(&field, 0.0, 1.0).unwrap();
        let nu = product_measure(2, 4, &[0.2, 0.5]).unwrap();
        for i in 0..l.nrows() {
            assert!(l.row(i).sum().abs() < 1e-12);
            for j in 0..l.ncols() {
                assert!((nu[i] * l[(i, j)] - nu[j] * l[(j, i)]).abs() < 1e-15);
            }
        }
    }
}
