//! Amplitude-level simulation of Szegedy's detection walk.
//!
//! The walk register holds amplitudes over directed edges `(i, j)` of a
//! [`ProductChain`]; edge `(i, j)` lives at index `i * r + slot`, where `slot`
//! is the position of `j` in `i`'s sorted neighbor list and `r` is the chain
//! degree. A [`WalkState`] adds the one-qubit control register in front.
//!
//! `W` is `(2R - I)(2C - I)` for the absorbing version of the chain: on an
//! unmarked anchor the reflection is about the uniform vector of its block
//! (`|c_i>` is the normalized all-ones vector on `i`'s out-edges, `|r_j>` the
//! same on `j`'s in-edges); on a marked anchor the block is negated. With no
//! marks `W` fixes `|phi_0>`; with every state marked `W` is the identity.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::johnson::ProductChain;

/// Default cap on the number of directed edges the simulator materializes.
pub const DEFAULT_EDGE_CAP: usize = 1 << 22;

/// Blocks below this many amplitudes are reflected serially.
const PAR_THRESHOLD: usize = 1 << 14;

/// Which chain states are marked. Evaluated once, without oracle access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedSet {
    flags: Vec<bool>,
}

impl MarkedSet {
    pub fn from_predicate(chain: &ProductChain, pred: impl Fn(usize) -> bool) -> Self {
        Self {
            flags: (0..chain.num_states()).map(pred).collect(),
        }
    }

    pub fn none(chain: &ProductChain) -> Self {
        Self::from_predicate(chain, |_| false)
    }

    pub fn all(chain: &ProductChain) -> Self {
        Self::from_predicate(chain, |_| true)
    }

    pub fn from_flags(flags: Vec<bool>) -> Self {
        Self { flags }
    }

    pub fn contains(&self, state: usize) -> bool {
        self.flags[state]
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&m| m).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.flags.len() as f64
    }

    pub fn is_superset_of(&self, other: &MarkedSet) -> bool {
        self.flags.len() == other.flags.len()
            && self.flags.iter().zip(&other.flags).all(|(&a, &b)| a || !b)
    }
}

/// Control qubit tensored with the edge register; sector 0 first.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkState {
    amplitudes: Vec<Complex64>,
}

impl WalkState {
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn num_edges(&self) -> usize {
        self.amplitudes.len() / 2
    }

    pub fn sector(&self, control: usize) -> &[Complex64] {
        let e = self.num_edges();
        &self.amplitudes[control * e..(control + 1) * e]
    }

    pub fn sector_mut(&mut self, control: usize) -> &mut [Complex64] {
        let e = self.num_edges();
        &mut self.amplitudes[control * e..(control + 1) * e]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.amplitudes)
    }

    /// Hadamard on the control qubit.
    pub fn hadamard_control(&mut self) {
        let e = self.num_edges();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (zero, one) = self.amplitudes.split_at_mut(e);
        for (a, b) in zero.iter_mut().zip(one.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = (x + y) * s;
            *b = (x - y) * s;
        }
    }
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

/// Edge layout of a chain: target state and reverse edge of every directed edge.
#[derive(Debug, Clone)]
struct EdgeSpace {
    degree: usize,
    targets: Vec<usize>,
    reverse: Vec<usize>,
}

impl EdgeSpace {
    fn new(chain: &ProductChain, edge_cap: usize) -> Result<Self> {
        let degree = chain.degree();
        let total = chain.num_directed_edges();
        if total > edge_cap {
            return Err(Error::Size {
                size: total,
                cap: edge_cap,
            });
        }
        let mut targets = Vec::with_capacity(total);
        for i in 0..chain.num_states() {
            let mut nbrs = chain.neighbor_states(i);
            nbrs.sort_unstable();
            targets.extend(nbrs);
        }
        let reverse = (0..total)
            .map(|e| {
                let (i, j) = (e / degree, targets[e]);
                let block = &targets[j * degree..(j + 1) * degree];
                let slot = block
                    .binary_search(&i)
                    .expect("symmetric chain has every reverse edge");
                j * degree + slot
            })
            .collect();
        Ok(Self {
            degree,
            targets,
            reverse,
        })
    }

    fn permute(&self, v: &[Complex64], out: &mut [Complex64]) {
        for (o, &src) in out.iter_mut().zip(&self.reverse) {
            *o = v[src];
        }
    }
}

/// Reflects each length-`r` block about its uniform vector. Blocks flagged
/// in `absorbing` are negated instead: a marked state's row of the absorbing
/// chain is a self-loop, whose `|c_i> = |i,i>` has no overlap with the edge
/// register, so `2|c_i><c_i| - I` acts there as `-I`.
fn reflect_blocks(v: &mut [Complex64], degree: usize, absorbing: Option<&[bool]>) {
    let apply = |(i, block): (usize, &mut [Complex64])| {
        if absorbing.is_some_and(|s| s[i]) {
            block.iter_mut().for_each(|a| *a = -*a);
            return;
        }
        let mean = block.iter().sum::<Complex64>() / degree as f64;
        for a in block.iter_mut() {
            *a = mean * 2.0 - *a;
        }
    };
    if v.len() >= PAR_THRESHOLD {
        v.par_chunks_mut(degree).enumerate().for_each(apply);
    } else {
        v.chunks_mut(degree).enumerate().for_each(apply);
    }
}

/// Szegedy walk operator for a fixed chain and marked set.
#[derive(Debug, Clone)]
pub struct SzegedyWalk {
    edges: EdgeSpace,
    marked: MarkedSet,
}

impl SzegedyWalk {
    pub fn new(chain: &ProductChain, marked: MarkedSet, edge_cap: usize) -> Result<Self> {
        if marked.len() != chain.num_states() {
            return Err(Error::Parameter(format!(
                "marked set covers {} states, chain has {}",
                marked.len(),
                chain.num_states()
            )));
        }
        Ok(Self {
            edges: EdgeSpace::new(chain, edge_cap)?,
            marked,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.targets.len()
    }

    pub fn degree(&self) -> usize {
        self.edges.degree
    }

    pub fn marked(&self) -> &MarkedSet {
        &self.marked
    }

    /// Endpoints `(i, j)` of a directed edge.
    pub fn endpoints(&self, edge: usize) -> (usize, usize) {
        (edge / self.edges.degree, self.edges.targets[edge])
    }

    pub fn edge_has_marked_endpoint(&self, edge: usize) -> bool {
        let (i, j) = self.endpoints(edge);
        self.marked.contains(i) || self.marked.contains(j)
    }

    /// `|phi_0>`: amplitude `1/sqrt(r|V|)` on every directed edge.
    pub fn uniform_edges(&self) -> Vec<Complex64> {
        let amp = 1.0 / (self.num_edges() as f64).sqrt();
        vec![Complex64::new(amp, 0.0); self.num_edges()]
    }

    /// Control `|0>` with the uniform edge superposition in the walk register.
    pub fn prepare_edge_superposition(&self) -> WalkState {
        let mut amplitudes = self.uniform_edges();
        amplitudes.resize(2 * self.num_edges(), Complex64::new(0.0, 0.0));
        WalkState { amplitudes }
    }

    /// `2C - I` over out-edge blocks. With `gated`, marked blocks use the
    /// absorbing reflection; without it every block reflects about its
    /// uniform vector.
    pub fn reflect_c(&self, v: &mut [Complex64], gated: bool) {
        let absorbing = gated.then_some(self.marked.flags.as_slice());
        reflect_blocks(v, self.edges.degree, absorbing);
    }

    /// `2R - I` over in-edge blocks, gated as in [`reflect_c`](Self::reflect_c).
    pub fn reflect_r(&self, v: &mut [Complex64], gated: bool) {
        let mut by_target = vec![Complex64::new(0.0, 0.0); v.len()];
        self.edges.permute(v, &mut by_target);
        let absorbing = gated.then_some(self.marked.flags.as_slice());
        reflect_blocks(&mut by_target, self.edges.degree, absorbing);
        self.edges.permute(&by_target, v);
    }

    /// Orthogonal projector `C = sum_i |c_i><c_i|` (ungated).
    pub fn project_c(&self, v: &mut [Complex64]) {
        for block in v.chunks_mut(self.edges.degree) {
            let mean = block.iter().sum::<Complex64>() / self.edges.degree as f64;
            block.iter_mut().for_each(|a| *a = mean);
        }
    }

    /// One application of `W` to a walk register.
    pub fn apply_w(&self, v: &mut [Complex64]) {
        self.reflect_c(v, true);
        self.reflect_r(v, true);
    }

    /// `W^t` on the control-1 sector only.
    pub fn apply_controlled(&self, state: &mut WalkState, t: usize) {
        let sector = state.sector_mut(1);
        for _ in 0..t {
            self.apply_w(sector);
        }
    }

    /// Probability that the final measurement reports "true": control reads
    /// 1, or the measured edge has a marked endpoint.
    pub fn accept_probability(&self, state: &WalkState) -> f64 {
        let one: f64 = state.sector(1).iter().map(Complex64::norm_sqr).sum();
        let zero: f64 = state
            .sector(0)
            .iter()
            .enumerate()
            .filter(|&(e, _)| self.edge_has_marked_endpoint(e))
            .map(|(_, a)| a.norm_sqr())
            .sum();
        one + zero
    }

    /// State just before measurement for a fixed walk length `t`.
    pub fn pre_measurement_state(&self, t: usize) -> WalkState {
        let mut state = self.prepare_edge_superposition();
        state.hadamard_control();
        self.apply_controlled(&mut state, t);
        state.hadamard_control();
        state
    }

    /// Acceptance probability for each `t` in `1..=t_max`, computed exactly.
    pub fn success_profile(&self, t_max: usize) -> Vec<f64> {
        let phi0 = self.uniform_edges();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut walked = phi0.clone();
        let mut out = Vec::with_capacity(t_max);
        for _ in 0..t_max {
            self.apply_w(&mut walked);
            let mut amplitudes = Vec::with_capacity(2 * phi0.len());
            amplitudes.extend(phi0.iter().map(|a| a * s));
            amplitudes.extend(walked.iter().map(|a| a * s));
            let mut state = WalkState { amplitudes };
            state.hadamard_control();
            out.push(self.accept_probability(&state));
        }
        out
    }

    /// Exact probability that [`detect_once`](Self::detect_once) answers
    /// "true", averaging over `t` uniform in `1..=t_max`.
    pub fn detect_success_probability(&self, t_max: usize) -> f64 {
        let profile = self.success_profile(t_max);
        profile.iter().sum::<f64>() / t_max as f64
    }

    /// One run of the detection procedure: draw `t`, apply controlled
    /// `W^t`, measure both registers.
    pub fn detect_once<R: Rng + ?Sized>(&self, t_max: usize, rng: &mut R) -> bool {
        let t = rng.random_range(1..=t_max.max(1));
        self.detect_with_length(t, rng)
    }

    /// Detection with a fixed walk length; the measurement is still sampled.
    pub fn detect_with_length<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> bool {
        let state = self.pre_measurement_state(t);
        let e = state.num_edges();
        let mut u: f64 = rng.random();
        let mut pick = state.amplitudes.len() - 1;
        for (idx, a) in state.amplitudes.iter().enumerate() {
            u -= a.norm_sqr();
            if u < 0.0 {
                pick = idx;
                break;
            }
        }
        let (control, edge) = (pick / e, pick % e);
        control == 1 || self.edge_has_marked_endpoint(edge)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::johnson::JohnsonGraph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(parts: &[(usize, usize)]) -> ProductChain {
        let f = parts
            .iter()
            .map(|&(n, k)| JohnsonGraph::new(n, k).unwrap())
            .collect();
        ProductChain::new(f, 10_000).unwrap()
    }

    fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        let v: Vec<Complex64> = (0..len)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let n = norm(&v);
        v.into_iter().map(|a| a / n).collect()
    }

    fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn prepared_state_is_uniform() {
        let c = chain(&[(4, 2)]);
        let w = SzegedyWalk::new(&c, MarkedSet::none(&c), DEFAULT_EDGE_CAP).unwrap();
        let s = w.prepare_edge_superposition();
        assert_eq!(w.num_edges(), 24);
        let amp = 1.0 / 24f64.sqrt();
        assert!(s
            .sector(0)
            .iter()
            .all(|a| (a.re - amp).abs() < 1e-15 && a.im == 0.0));
        assert!(s.sector(1).iter().all(|a| a.norm() == 0.0));
        assert!((s.norm() - 1.0).abs() < 1e-12);

        let c = chain(&[(4, 2), (4, 2)]);
        let w = SzegedyWalk::new(&c, MarkedSet::none(&c), DEFAULT_EDGE_CAP).unwrap();
        assert_eq!(w.num_edges(), 576);
        let s = w.prepare_edge_superposition();
        assert!(s
            .sector(0)
            .iter()
            .all(|a| (a.re - 1.0 / 24.0).abs() < 1e-15));
    }

    #[test]
    fn unmarked_walk_fixes_uniform() {
        let c = chain(&[(4, 2), (5, 2)]);
        let w = SzegedyWalk::new(&c, MarkedSet::none(&c), DEFAULT_EDGE_CAP).unwrap();
        let phi0 = w.uniform_edges();
        let mut v = phi0.clone();
        w.apply_w(&mut v);
        assert!(max_diff(&v, &phi0) < 1e-9);
    }

    #[test]
    fn all_marked_walk_is_identity() {
        let c = chain(&[(4, 2), (4, 2)]);
        let w = SzegedyWalk::new(&c, MarkedSet::all(&c), DEFAULT_EDGE_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_vec(w.num_edges(), &mut rng);
        let mut u = v.clone();
        w.apply_w(&mut u);
        assert!(max_diff(&u, &v) < 1e-15);
    }

    #[test]
    fn walk_preserves_norm() {
        let c = chain(&[(4, 2), (5, 2)]);
        let marked = MarkedSet::from_predicate(&c, |s| s % 7 == 0);
        let w = SzegedyWalk::new(&c, marked, DEFAULT_EDGE_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut v = random_vec(w.num_edges(), &mut rng);
            w.apply_w(&mut v);
            assert!((norm(&v) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reflections_are_involutions() {
        let c = chain(&[(5, 2)]);
        let marked = MarkedSet::from_predicate(&c, |s| s % 3 == 1);
        let w = SzegedyWalk::new(&c, marked, DEFAULT_EDGE_CAP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for gated in [false, true] {
            let v = random_vec(w.num_edges(), &mut rng);
            let mut u = v.clone();
            w.reflect_c(&mut u, gated);
            w.reflect_c(&mut u, gated);
            assert!(max_diff(&u, &v) < 1e-9);
            w.reflect_r(&mut u, gated);
            w.reflect_r(&mut u, gated);
            assert!(max_diff(&u, &v) < 1e-9);
        }
    }

    #[test]
    fn c_projector_properties() {
        let c = chain(&[(4, 2)]);
        let w = SzegedyWalk::new(&c, MarkedSet::none(&c), DEFAULT_EDGE_CAP).unwrap();
        let r = w.degree();
        // |c_i> for i = 2
        let mut ci = vec![Complex64::new(0.0, 0.0); w.num_edges()];
        for a in &mut ci[2 * r..3 * r] {
            *a = Complex64::new(1.0 / (r as f64).sqrt(), 0.0);
        }
        let mut p = ci.clone();
        w.project_c(&mut p);
        assert!(max_diff(&p, &ci) < 1e-12);
        // Zero-mean inside every block: orthogonal to all |c_i>.
        let mut orth = vec![Complex64::new(0.0, 0.0); w.num_edges()];
        for block in orth.chunks_mut(r) {
            block[0] = Complex64::new(1.0, 0.0);
            block[1] = Complex64::new(-1.0, 0.0);
        }
        w.project_c(&mut orth);
        assert!(orth.iter().all(|a| a.norm() < 1e-12));
    }

    #[test]
    fn reverse_edges_pair_up() {
        let c = chain(&[(4, 2), (3, 3)]);
        let w = SzegedyWalk::new(&c, MarkedSet::none(&c), DEFAULT_EDGE_CAP).unwrap();
        for e in 0..w.num_edges() {
            let (i, j) = w.endpoints(e);
            let back = w.edges.reverse[e];
            assert_eq!(w.endpoints(back), (j, i));
            assert_eq!(w.edges.reverse[back], e);
        }
    }

    #[test]
    fn no_marks_never_accepts() {
        let c = chain(&[(4, 2), (4, 2)]);
        let w = SzegedyWalk::new(&c, MarkedSet::none(&c), DEFAULT_EDGE_CAP).unwrap();
        for p in w.success_profile(12) {
            assert!(p.abs() < 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..50).all(|_| !w.detect_once(12, &mut rng)));
    }

    #[test]
    fn all_marked_always_accepts() {
        let c = chain(&[(4, 2), (4, 2)]);
        let w = SzegedyWalk::new(&c, MarkedSet::all(&c), DEFAULT_EDGE_CAP).unwrap();
        assert!((w.detect_success_probability(1) - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..50).all(|_| w.detect_once(1, &mut rng)));
    }

    #[test]
    fn profile_matches_literal_procedure() {
        let c = chain(&[(4, 2), (5, 2)]);
        let marked = MarkedSet::from_predicate(&c, |s| s == 17);
        let w = SzegedyWalk::new(&c, marked, DEFAULT_EDGE_CAP).unwrap();
        let profile = w.success_profile(6);
        for (t, p) in profile.iter().enumerate() {
            let literal = w.accept_probability(&w.pre_measurement_state(t + 1));
            assert!((p - literal).abs() < 1e-12);
            assert!((w.pre_measurement_state(t + 1).norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_rate_tracks_exact_probability() {
        let c = chain(&[(4, 2), (4, 2)]);
        let marked = MarkedSet::from_predicate(&c, |s| s == 5);
        let w = SzegedyWalk::new(&c, marked, DEFAULT_EDGE_CAP).unwrap();
        let exact = w.detect_success_probability(4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 4000;
        let hits = (0..trials).filter(|_| w.detect_once(4, &mut rng)).count();
        let rate = hits as f64 / trials as f64;
        // ~4.6 standard deviations at p ~ 0.5
        assert!((rate - exact).abs() < 0.04, "rate {rate} vs exact {exact}");
    }

    #[test]
    fn edge_cap_enforced() {
        let c = chain(&[(5, 2), (5, 2)]);
        assert!(matches!(
            SzegedyWalk::new(&c, MarkedSet::none(&c), 100),
            Err(Error::Size { .. })
        ));
    }
}
