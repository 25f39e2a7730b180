//! Johnson graphs, the uniform Markov chains on their categorical products,
//! and their spectra (closed form and dense eigendecomposition).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest ground set a vertex bitmask can hold.
pub const MAX_GROUND_SET: usize = 63;

/// Default state-count cap for [`brute_force_spectrum`].
pub const DEFAULT_SPECTRUM_CAP: usize = 5000;

/// Largest multiset [`johnson_spectrum`] will expand.
pub const EXPANSION_CAP: usize = 10_000_000;

/// `J(n, k)`: k-subsets of `[n]`, adjacent iff their symmetric difference has size 2.
///
/// `J(n, n)` has a single vertex and is treated as a frozen coordinate: its
/// chain is the 1-state chain with a self-loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct JohnsonGraph {
    n: usize,
    k: usize,
}

impl JohnsonGraph {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Parameter(format!("J({n},{k}) needs 0 < k <= n")));
        }
        Ok(Self { n, k })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_frozen(&self) -> bool {
        self.k == self.n
    }

    pub fn vertex_count(&self) -> u128 {
        binomial(self.n as u64, self.k as u64)
    }

    /// Number of neighbors; 1 for the frozen self-loop.
    pub fn degree(&self) -> usize {
        if self.is_frozen() {
            1
        } else {
            self.k * (self.n - self.k)
        }
    }

    /// All vertices as bitmasks, in colex order (so `rank` is the index).
    pub fn vertices(&self) -> Result<Vec<u64>> {
        if self.n > MAX_GROUND_SET {
            return Err(Error::Size {
                size: self.n,
                cap: MAX_GROUND_SET,
            });
        }
        let count = usize::try_from(self.vertex_count()).map_err(|_| Error::Size {
            size: usize::MAX,
            cap: usize::MAX,
        })?;
        let mut out = Vec::with_capacity(count);
        let mut mask: u64 = (1u64 << self.k) - 1;
        let limit = 1u64 << self.n;
        while mask < limit {
            out.push(mask);
            // Gosper's hack: next integer with the same popcount.
            let c = mask & mask.wrapping_neg();
            let r = mask + c;
            mask = (((r ^ mask) >> 2) / c) | r;
        }
        debug_assert_eq!(out.len(), count);
        Ok(out)
    }

    /// Colex rank of a k-subset.
    pub fn rank(&self, mask: u64) -> usize {
        let mut rank = 0u128;
        let mut t = 0u64;
        let mut rest = mask;
        while rest != 0 {
            let pos = rest.trailing_zeros() as u64;
            t += 1;
            rank += binomial(pos, t);
            rest &= rest - 1;
        }
        rank as usize
    }

    pub fn contains(&self, mask: u64) -> bool {
        mask.count_ones() as usize == self.k && (self.n >= 64 || mask >> self.n == 0)
    }

    /// Neighbors in a fixed order: remove `a` (ascending), add `b` (ascending).
    pub fn neighbors(&self, mask: u64) -> Vec<u64> {
        if self.is_frozen() {
            return vec![mask];
        }
        let mut out = Vec::with_capacity(self.degree());
        for a in (0..self.n).filter(|&a| mask >> a & 1 == 1) {
            for b in (0..self.n).filter(|&b| mask >> b & 1 == 0) {
                out.push(mask ^ (1 << a) ^ (1 << b));
            }
        }
        out
    }
}

/// One distinct eigenvalue of the Johnson chain, `j` in `[0..min(k, n-k)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenLevel {
    pub j: usize,
    pub value: f64,
    pub multiplicity: u128,
}

/// Eigenvalue multiset of a symmetric stochastic matrix, sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    pub fn from_values(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self { eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `1 - max |lambda|` over non-principal eigenvalues. A chain with a
    /// single state has none and reports 1.
    pub fn gap(&self) -> f64 {
        let rest = self.eigenvalues.iter().skip(1);
        let worst = rest.fold(0.0f64, |m, v| m.max(v.abs()));
        (1.0 - worst).clamp(0.0, 1.0)
    }
}

/// Closed-form eigenvalues `((k-j)(n-k-j) - j) / (k(n-k))` with
/// multiplicities `C(n,j) - C(n,j-1)`.
pub fn johnson_levels(n: usize, k: usize) -> Result<Vec<EigenLevel>> {
    let g = JohnsonGraph::new(n, k)?;
    if g.is_frozen() {
        return Ok(vec![EigenLevel {
            j: 0,
            value: 1.0,
            multiplicity: 1,
        }]);
    }
    let (nf, kf) = (n as f64, k as f64);
    let top = k.min(n - k);
    Ok((0..=top)
        .map(|j| {
            let jf = j as f64;
            let value = ((kf - jf) * (nf - kf - jf) - jf) / (kf * (nf - kf));
            let below = if j == 0 {
                0
            } else {
                binomial(n as u64, j as u64 - 1)
            };
            EigenLevel {
                j,
                value,
                multiplicity: binomial(n as u64, j as u64) - below,
            }
        })
        .collect())
}

/// Closed-form spectrum of the uniform chain on `J(n, k)`.
pub fn johnson_spectrum(n: usize, k: usize) -> Result<Spectrum> {
    let levels = johnson_levels(n, k)?;
    let total: u128 = levels.iter().map(|l| l.multiplicity).sum();
    if total > EXPANSION_CAP as u128 {
        return Err(Error::Size {
            size: total.min(usize::MAX as u128) as usize,
            cap: EXPANSION_CAP,
        });
    }
    Ok(Spectrum::from_values(
        levels
            .iter()
            .flat_map(|l| std::iter::repeat_n(l.value, l.multiplicity as usize))
            .collect(),
    ))
}

/// Spectral gap of `J(n, k)` from the closed form, without expanding multiplicities.
pub fn johnson_gap(n: usize, k: usize) -> Result<f64> {
    let levels = johnson_levels(n, k)?;
    let worst = levels[1..].iter().fold(0.0f64, |m, l| m.max(l.value.abs()));
    Ok(1.0 - worst)
}

/// Gap of a categorical product: the minimum factor gap.
pub fn product_gap(factor_gaps: &[f64]) -> Result<f64> {
    if factor_gaps.is_empty() {
        return Err(Error::Parameter("product of zero chains".into()));
    }
    if let Some(g) = factor_gaps.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::Parameter(format!("gap {g} outside [0, 1]")));
    }
    Ok(factor_gaps.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Uniform random walk on the categorical product of Johnson graphs.
///
/// A state is the tuple of factor vertices; a move sends every walking
/// coordinate to a uniformly random neighbor simultaneously. Frozen factors
/// never move.
#[derive(Debug, Clone)]
pub struct ProductChain {
    factors: Vec<JohnsonGraph>,
    vertices: Vec<Vec<u64>>,
    adjacency: Vec<Vec<Vec<usize>>>,
    num_states: usize,
}

impl ProductChain {
    /// Materializes factor vertex sets and adjacency. Fails if the state
    /// count exceeds `state_cap`.
    pub fn new(factors: Vec<JohnsonGraph>, state_cap: usize) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Parameter("product of zero factors".into()));
        }
        let mut num_states: u128 = 1;
        for f in &factors {
            num_states = num_states.saturating_mul(f.vertex_count());
        }
        if num_states > state_cap as u128 {
            return Err(Error::Size {
                size: num_states.min(usize::MAX as u128) as usize,
                cap: state_cap,
            });
        }
        let mut vertices = Vec::with_capacity(factors.len());
        let mut adjacency = Vec::with_capacity(factors.len());
        for f in &factors {
            let vs = f.vertices()?;
            let adj = vs
                .iter()
                .map(|&v| f.neighbors(v).into_iter().map(|w| f.rank(w)).collect())
                .collect();
            vertices.push(vs);
            adjacency.push(adj);
        }
        Ok(Self {
            factors,
            vertices,
            adjacency,
            num_states: num_states as usize,
        })
    }

    pub fn factors(&self) -> &[JohnsonGraph] {
        &self.factors
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Neighbors per state (the `r` of the walk).
    pub fn degree(&self) -> usize {
        self.factors.iter().map(JohnsonGraph::degree).product()
    }

    pub fn num_directed_edges(&self) -> usize {
        self.num_states * self.degree()
    }

    /// Per-factor vertex indices of a state, first factor most significant.
    pub fn decode(&self, mut state: usize) -> Vec<usize> {
        let mut out = vec![0; self.factors.len()];
        for i in (0..self.factors.len()).rev() {
            let count = self.vertices[i].len();
            out[i] = state % count;
            state /= count;
        }
        out
    }

    pub fn encode(&self, coords: &[usize]) -> usize {
        coords
            .iter()
            .zip(&self.vertices)
            .fold(0, |acc, (&c, vs)| acc * vs.len() + c)
    }

    /// The subsets carried by a state, one bitmask per factor.
    pub fn subsets(&self, state: usize) -> Vec<u64> {
        self.decode(state)
            .into_iter()
            .enumerate()
            .map(|(i, c)| self.vertices[i][c])
            .collect()
    }

    /// State index of a tuple of subsets, if each is a vertex of its factor.
    pub fn state_of(&self, subsets: &[u64]) -> Option<usize> {
        if subsets.len() != self.factors.len() {
            return None;
        }
        let mut coords = Vec::with_capacity(subsets.len());
        for (f, &m) in self.factors.iter().zip(subsets) {
            if !f.contains(m) {
                return None;
            }
            coords.push(f.rank(m));
        }
        Some(self.encode(&coords))
    }

    /// Product neighbors in slot order: mixed radix over factor neighbor
    /// slots, first factor most significant.
    pub fn neighbor_states(&self, state: usize) -> Vec<usize> {
        let coords = self.decode(state);
        let mut out = vec![0usize];
        for (i, &c) in coords.iter().enumerate() {
            let count = self.vertices[i].len();
            let nbrs = &self.adjacency[i][c];
            out = out
                .iter()
                .flat_map(|&prefix| nbrs.iter().map(move |&w| prefix * count + w))
                .collect();
        }
        out
    }

    /// Product neighbors with their (uniform) transition probabilities.
    pub fn neighbors(&self, state: usize) -> Result<Vec<(usize, f64)>> {
        if state >= self.num_states {
            return Err(Error::Parameter(format!(
                "state {state} outside chain of {} states",
                self.num_states
            )));
        }
        let p = 1.0 / self.degree() as f64;
        Ok(self
            .neighbor_states(state)
            .into_iter()
            .map(|s| (s, p))
            .collect())
    }

    /// Dense transition matrix.
    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.num_states;
        let mut m = DMatrix::zeros(n, n);
        let p = 1.0 / self.degree() as f64;
        for s in 0..n {
            for t in self.neighbor_states(s) {
                m[(s, t)] += p;
            }
        }
        m
    }

    /// Minimum of the closed-form factor gaps, frozen factors excluded.
    pub fn analytic_gap(&self) -> Result<f64> {
        let gaps: Vec<f64> = self
            .factors
            .iter()
            .filter(|f| !f.is_frozen())
            .map(|f| johnson_gap(f.n(), f.k()))
            .collect::<Result<_>>()?;
        if gaps.is_empty() {
            return Ok(1.0);
        }
        product_gap(&gaps)
    }
}

/// Dense symmetric eigendecomposition of the explicit transition matrix.
pub fn brute_force_spectrum(chain: &ProductChain, state_cap: usize) -> Result<Spectrum> {
    if chain.num_states() > state_cap {
        return Err(Error::Size {
            size: chain.num_states(),
            cap: state_cap,
        });
    }
    let eig = SymmetricEigen::new(chain.transition_matrix());
    Ok(Spectrum::from_values(
        eig.eigenvalues.iter().copied().collect(),
    ))
}

/// Exact binomial coefficient; 0 when `k > n`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn chain(parts: &[(usize, usize)]) -> ProductChain {
        let factors = parts
            .iter()
            .map(|&(n, k)| JohnsonGraph::new(n, k).unwrap())
            .collect();
        ProductChain::new(factors, DEFAULT_SPECTRUM_CAP).unwrap()
    }

    fn distinct(levels: &[EigenLevel]) -> Vec<f64> {
        levels.iter().map(|l| l.value).collect()
    }

    #[test]
    fn j42_and_j62_levels() {
        let l = johnson_levels(4, 2).unwrap();
        assert_eq!(distinct(&l), vec![1.0, 0.0, -0.5]);
        assert_eq!(
            l.iter().map(|l| l.multiplicity).collect::<Vec<_>>(),
            vec![1, 3, 2]
        );
        assert_abs_diff_eq!(johnson_gap(4, 2).unwrap(), 0.5);

        let l = johnson_levels(6, 2).unwrap();
        assert_eq!(distinct(&l), vec![1.0, 0.25, -0.25]);
        assert_abs_diff_eq!(johnson_gap(6, 2).unwrap(), 0.75);
        assert_abs_diff_eq!(johnson_spectrum(6, 2).unwrap().gap(), 0.75);
    }

    #[test]
    fn principal_is_exactly_one() {
        for n in 2..12 {
            for k in 1..n {
                assert_eq!(johnson_levels(n, k).unwrap()[0].value, 1.0);
            }
        }
    }

    #[test]
    fn brute_force_matches_closed_form_j42() {
        let bf = brute_force_spectrum(&chain(&[(4, 2)]), DEFAULT_SPECTRUM_CAP).unwrap();
        let cf = johnson_spectrum(4, 2).unwrap();
        for (a, b) in bf.eigenvalues().iter().zip(cf.eigenvalues()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn product_spectrum_is_pairwise_products() {
        let bf = brute_force_spectrum(&chain(&[(4, 2), (4, 2)]), DEFAULT_SPECTRUM_CAP).unwrap();
        let f = johnson_spectrum(4, 2).unwrap();
        let mut products: Vec<f64> = f
            .eigenvalues()
            .iter()
            .flat_map(|a| f.eigenvalues().iter().map(move |b| a * b))
            .collect();
        products.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(bf.eigenvalues().len(), 36);
        for (a, b) in bf.eigenvalues().iter().zip(&products) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn single_state_chain() {
        let c = chain(&[(3, 3)]);
        assert_eq!(c.num_states(), 1);
        let s = brute_force_spectrum(&c, 10).unwrap();
        assert_eq!(s.eigenvalues(), &[1.0]);
        assert_eq!(s.gap(), 1.0);
    }

    #[test]
    fn spectrum_cap() {
        let c = chain(&[(6, 3), (6, 3)]);
        assert!(matches!(
            brute_force_spectrum(&c, 100),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn product_gap_rules() {
        assert_eq!(product_gap(&[0.5, 0.75]).unwrap(), 0.5);
        assert_eq!(product_gap(&[0.42]).unwrap(), 0.42);
        assert_eq!(product_gap(&[0.3, 0.3, 0.3]).unwrap(), 0.3);
        assert!(product_gap(&[]).is_err());
        assert!(product_gap(&[1.5]).is_err());
    }

    #[test]
    fn neighbor_counts() {
        let c = chain(&[(4, 2)]);
        let s = c.state_of(&[0b0011]).unwrap();
        let n = c.neighbors(s).unwrap();
        assert_eq!(n.len(), 4);
        assert!(n.iter().all(|&(_, p)| p == 0.25));

        let c = chain(&[(4, 2), (4, 2)]);
        let s = c.state_of(&[0b0011, 0b0011]).unwrap();
        let n = c.neighbors(s).unwrap();
        assert_eq!(n.len(), 16);
        assert!(n.iter().all(|&(_, p)| p == 1.0 / 16.0));
        assert!(c.neighbors(36).is_err());
    }

    #[test]
    fn frozen_factor_does_not_move() {
        let c = chain(&[(3, 3), (5, 2)]);
        assert_eq!(c.degree(), 6);
        for s in 0..c.num_states() {
            let here = c.subsets(s)[0];
            for t in c.neighbor_states(s) {
                assert_eq!(c.subsets(t)[0], here);
            }
        }
        assert_abs_diff_eq!(c.analytic_gap().unwrap(), johnson_gap(5, 2).unwrap());
    }

    #[test]
    fn rank_inverts_vertices() {
        let g = JohnsonGraph::new(9, 4).unwrap();
        for (i, v) in g.vertices().unwrap().into_iter().enumerate() {
            assert_eq!(g.rank(v), i);
        }
    }

    #[test]
    fn gap_times_k_bounded_below() {
        // Fixed ratio n = 2k and n = 3k.
        for ratio in [2usize, 3] {
            for k in 2..=20 {
                let g = johnson_gap(ratio * k, k).unwrap();
                assert!(g * k as f64 >= 1.0 - 1e-12, "J({}, {k}) gap {g}", ratio * k);
            }
        }
    }

    proptest! {
        #[test]
        fn transition_matrix_symmetric_doubly_stochastic(
            n1 in 2usize..6, k1 in 1usize..4, n2 in 2usize..6, k2 in 1usize..4
        ) {
            prop_assume!(k1 <= n1 && k2 <= n2);
            let c = chain(&[(n1, k1), (n2, k2)]);
            let m = c.transition_matrix();
            for i in 0..c.num_states() {
                prop_assert!((m.row(i).sum() - 1.0).abs() < 1e-12);
                prop_assert!((m.column(i).sum() - 1.0).abs() < 1e-12);
                for j in 0..c.num_states() {
                    prop_assert!((m[(i, j)] - m[(j, i)]).abs() < 1e-15);
                }
            }
        }

        #[test]
        fn neighbor_probabilities_sum_to_one(state in 0usize..225) {
            let c = chain(&[(6, 2), (6, 2)]);
            let total: f64 = c.neighbors(state).unwrap().iter().map(|&(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
