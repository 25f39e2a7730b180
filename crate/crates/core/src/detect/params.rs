use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::OracleMode;
use crate::johnson::binomial;

/// Walk parameters for one detection over domains of the given sizes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectParams {
    /// Restricted domain size per function.
    pub domain_sizes: Vec<usize>,
    /// Johnson subset size per function; equal to the domain size for a
    /// frozen factor.
    pub subset_sizes: Vec<usize>,
    /// Lower bound on the marked fraction when a claw exists.
    pub epsilon: f64,
    /// Lower bound on the spectral gap.
    pub delta: f64,
    /// Walk-length bound `T = ceil(c / sqrt(delta * epsilon))`.
    pub t_max: usize,
    pub c: f64,
}

impl DetectParams {
    /// Parameters with explicit subset sizes and the k-claw marked fraction
    /// `prod l_i / N_i`.
    pub fn with_subset_sizes(
        domain_sizes: &[usize],
        subset_sizes: &[usize],
        c: f64,
    ) -> Result<Self> {
        validate(domain_sizes, subset_sizes, c)?;
        let epsilon = domain_sizes
            .iter()
            .zip(subset_sizes)
            .map(|(&n, &l)| l as f64 / n as f64)
            .product();
        Ok(Self::assemble(domain_sizes, subset_sizes, epsilon, c))
    }

    /// Same walk, with the marked fraction of `(p,q)`-subset detection:
    /// `C(l,p) C(m,q) / (C(N,p) C(M,q))`.
    pub fn for_subsets(
        domain_sizes: &[usize],
        subset_sizes: &[usize],
        p: usize,
        q: usize,
        c: f64,
    ) -> Result<Self> {
        validate(domain_sizes, subset_sizes, c)?;
        if domain_sizes.len() != 2 {
            return Err(Error::Parameter(
                "subset detection takes two functions".into(),
            ));
        }
        if p == 0 || q == 0 {
            return Err(Error::Parameter(format!(
                "need p, q >= 1, got p={p}, q={q}"
            )));
        }
        let (l, m) = (subset_sizes[0], subset_sizes[1]);
        if p > l || q > m {
            return Err(Error::Parameter(format!(
                "tuple sizes (p={p}, q={q}) exceed subset sizes (l={l}, m={m})"
            )));
        }
        let (n, big_m) = (domain_sizes[0] as u64, domain_sizes[1] as u64);
        let num = binomial(l as u64, p as u64) as f64 * binomial(m as u64, q as u64) as f64;
        let den = binomial(n, p as u64) as f64 * binomial(big_m, q as u64) as f64;
        Ok(Self::assemble(domain_sizes, subset_sizes, num / den, c))
    }

    fn assemble(domain_sizes: &[usize], subset_sizes: &[usize], epsilon: f64, c: f64) -> Self {
        let widest_walk = domain_sizes
            .iter()
            .zip(subset_sizes)
            .filter(|(n, l)| l < n)
            .map(|(_, &l)| l)
            .max();
        let delta = widest_walk.map_or(1.0, |l| 1.0 / l as f64);
        let t_max = ((c / (epsilon * delta).sqrt()).ceil() as usize).max(1);
        Self {
            domain_sizes: domain_sizes.to_vec(),
            subset_sizes: subset_sizes.to_vec(),
            epsilon,
            delta,
            t_max,
            c,
        }
    }

    pub fn k(&self) -> usize {
        self.domain_sizes.len()
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.subset_sizes[i] == self.domain_sizes[i]
    }

    pub fn walked_factors(&self) -> usize {
        (0..self.k()).filter(|&i| !self.is_frozen(i)).count()
    }

    /// Total number of elements carried by a vertex.
    pub fn list_len(&self) -> usize {
        self.subset_sizes.iter().sum()
    }

    /// Cost constants `(C_U, C_F, C_W)` for this walk under `mode`.
    pub fn costs(&self, mode: OracleMode) -> QueryCosts {
        let n = self.list_len() as u64;
        let lg = ceil_log2(n);
        let k = self.k() as u64;
        match mode {
            OracleMode::Comparison => QueryCosts {
                setup: n * lg,
                check: 0,
                update: 2 * k * lg,
            },
            OracleMode::Standard => QueryCosts {
                setup: n,
                check: 0,
                update: 2 * k,
            },
        }
    }

    /// Modeled query total `C_U + T (C_F + 2 C_W)`.
    pub fn query_formula(&self, mode: OracleMode) -> u64 {
        let c = self.costs(mode);
        c.setup + self.t_max as u64 * (c.check + 2 * c.update)
    }
}

/// Per-run query constants of a detection walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueryCosts {
    /// `C_U`: building the sorted list of the initial vertex.
    pub setup: u64,
    /// `C_F`: the marked check, free once the list is held.
    pub check: u64,
    /// `C_W`: one half-step of `W` (list deletions and insertions).
    pub update: u64,
}

fn validate(domain_sizes: &[usize], subset_sizes: &[usize], c: f64) -> Result<()> {
    if domain_sizes.len() < 2 {
        return Err(Error::Parameter(format!(
            "need k >= 2 domains, got {}",
            domain_sizes.len()
        )));
    }
    if subset_sizes.len() != domain_sizes.len() {
        return Err(Error::Parameter("one subset size per domain".into()));
    }
    for (i, (&n, &l)) in domain_sizes.iter().zip(subset_sizes).enumerate() {
        if n == 0 || l == 0 || l > n {
            return Err(Error::Parameter(format!(
                "subset size {l} invalid for domain {i} of size {n}"
            )));
        }
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter(format!(
            "constant c = {c} must be positive"
        )));
    }
    Ok(())
}

/// Subset sizes and walk bounds for k-claw detection over domains of the
/// given sizes (any order).
///
/// With `N_1` the smallest domain: if the product of the other domains is at
/// most `N_1^k`, every `l_i = clamp(ceil((prod N_i)^(1/(k+1))), 2, N_1)`;
/// otherwise every `l_i = N_1`, which freezes the smallest factor.
pub fn choose_params(domain_sizes: &[usize], c: f64) -> Result<DetectParams> {
    let k = domain_sizes.len();
    if k < 2 {
        return Err(Error::Parameter(format!("need k >= 2 domains, got {k}")));
    }
    if domain_sizes.contains(&0) {
        return Err(Error::Parameter("empty domain".into()));
    }
    let smallest = *domain_sizes.iter().min().expect("k >= 2");
    let mut sorted = domain_sizes.to_vec();
    sorted.sort_unstable();
    let rest: u128 = sorted[1..].iter().map(|&n| n as u128).product();
    let total = rest * smallest as u128;
    let balanced = (smallest as u128)
        .checked_pow(k as u32)
        .is_none_or(|bound| rest <= bound);
    let l = if balanced {
        let root = ceil_root(total, k as u32 + 1);
        (root.max(2) as usize).min(smallest)
    } else {
        smallest
    };
    DetectParams::with_subset_sizes(domain_sizes, &vec![l; k], c)
}

/// Smallest integer `r` with `r^e >= x`.
pub fn ceil_root(x: u128, e: u32) -> u128 {
    if x <= 1 {
        return x;
    }
    let guess = (x as f64).powf(1.0 / e as f64).round() as u128;
    let fits = |r: u128| r.checked_pow(e).is_none_or(|v| v >= x);
    let mut r = guess.saturating_sub(2).max(1);
    while !fits(r) {
        r += 1;
    }
    r
}

/// `ceil(log2(n))`, with `ceil_log2(0) = ceil_log2(1) = 0`.
pub fn ceil_log2(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros() as u64
    }
}
