//! Claw detection: k-claw and `(p,q)`-subset detectors built on the Szegedy
//! walk over a product of Johnson graphs, with two interchangeable backends.
//!
//! * [`Backend::Exact`] builds the product chain over the restricted domains,
//!   marks vertices from the value tables, and runs the amplitude simulator.
//!   Its oracle queries are real: it replays one branch of the quantum
//!   computation (sorting the first vertex's list, then maintaining it along
//!   `2t` walk moves) through the session.
//! * [`Backend::CostModel`] answers from ground truth with a configurable
//!   one-sided error and charges the session the closed-form query cost.

mod params;
mod sorted;

use std::ops::Range;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use params::{ceil_log2, ceil_root, choose_params, DetectParams, QueryCosts};
pub use sorted::{is_marked, SortedList};

use crate::error::{Error, Result};
use crate::instances::{OracleMode, OracleSession, Point, ProblemInstance};
use crate::johnson::{JohnsonGraph, ProductChain};
use crate::walk::{MarkedSet, SzegedyWalk, DEFAULT_EDGE_CAP};

/// Walk-length constant chosen by [`calibrate_constant`] on [`tiny_family`].
pub const DEFAULT_C: f64 = 1.0;

/// Candidate constants tried by calibration, smallest first.
pub const CALIBRATION_CANDIDATES: [u32; 4] = [1, 2, 4, 8];

/// Detection probability a calibrated constant must reach on every member.
pub const DETECTION_TARGET: f64 = 2.0 / 3.0;

/// Default one-sided error of the cost model.
pub const DEFAULT_P_ERR: f64 = 1.0 / 3.0;

/// Contiguous index interval per function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Restriction {
    ranges: Vec<Range<usize>>,
}

impl Restriction {
    pub fn new(ranges: Vec<Range<usize>>) -> Result<Self> {
        if ranges.len() < 2 {
            return Err(Error::Parameter(
                "restriction needs k >= 2 intervals".into(),
            ));
        }
        if let Some(r) = ranges.iter().find(|r| r.is_empty()) {
            return Err(Error::Parameter(format!("empty interval {r:?}")));
        }
        Ok(Self { ranges })
    }

    /// The whole domain of every function.
    pub fn full(domains: &[usize]) -> Result<Self> {
        Self::new(domains.iter().map(|&n| 0..n).collect())
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn k(&self) -> usize {
        self.ranges.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(ExactSizeIterator::len).collect()
    }

    fn check_against(&self, domains: &[usize]) -> Result<()> {
        if self.ranges.len() != domains.len() {
            return Err(Error::Parameter(format!(
                "restriction has {} intervals, instance has {} functions",
                self.ranges.len(),
                domains.len()
            )));
        }
        for (i, (r, &n)) in self.ranges.iter().zip(domains).enumerate() {
            if r.end > n {
                return Err(Error::Domain {
                    func: i,
                    elem: r.end - 1,
                });
            }
        }
        Ok(())
    }

    /// Oracle points for per-factor subsets given as bitmasks over interval offsets.
    fn points(&self, subsets: &[u64]) -> Vec<Point> {
        let mut out = Vec::new();
        for (i, (&mask, r)) in subsets.iter().zip(&self.ranges).enumerate() {
            let mut rest = mask;
            while rest != 0 {
                out.push(Point::new(i, r.start + rest.trailing_zeros() as usize));
                rest &= rest - 1;
            }
        }
        out
    }
}

/// Relation over `p + q` values: the first `p` come from `f`, the rest from `g`.
pub type Relation = Arc<dyn Fn(&[u64]) -> bool + Send + Sync>;

/// What makes a walk vertex marked.
#[derive(Clone)]
pub enum MarkRule {
    /// Some value is shared by every function's carried subset.
    Claw,
    /// Some `p` distinct elements of `F` and `q` distinct elements of `G`
    /// have values in the relation.
    Subset {
        p: usize,
        q: usize,
        relation: Relation,
    },
}

impl std::fmt::Debug for MarkRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Claw => write!(f, "Claw"),
            Self::Subset { p, q, .. } => write!(f, "Subset {{ p: {p}, q: {q} }}"),
        }
    }
}

impl MarkRule {
    fn marks(&self, instance: &ProblemInstance, points: &[Point], k: usize) -> Result<bool> {
        match self {
            Self::Claw => Ok(is_marked(
                &SortedList::from_ground_truth(instance, points)?,
                k,
            )),
            Self::Subset { p, q, relation } => {
                let mut f = Vec::new();
                let mut g = Vec::new();
                for &pt in points {
                    let v = instance.value(pt)?;
                    if pt.func == 0 {
                        f.push(v)
                    } else {
                        g.push(v)
                    }
                }
                Ok(any_tuple(&f, &g, *p, *q, relation.as_ref()))
            }
        }
    }
}

/// Whether some ordered `p`-tuple of distinct positions of `f` followed by a
/// `q`-tuple of distinct positions of `g` satisfies the relation.
fn any_tuple(f: &[u64], g: &[u64], p: usize, q: usize, relation: &dyn Fn(&[u64]) -> bool) -> bool {
    fn extend(
        pools: [&[u64]; 2],
        want: [usize; 2],
        used: &mut [Vec<bool>; 2],
        acc: &mut Vec<u64>,
        relation: &dyn Fn(&[u64]) -> bool,
    ) -> bool {
        let side = usize::from(acc.len() >= want[0]);
        if acc.len() == want[0] + want[1] {
            return relation(acc);
        }
        for idx in 0..pools[side].len() {
            if used[side][idx] {
                continue;
            }
            used[side][idx] = true;
            acc.push(pools[side][idx]);
            let hit = extend(pools, want, used, acc, relation);
            acc.pop();
            used[side][idx] = false;
            if hit {
                return true;
            }
        }
        false
    }
    if p > f.len() || q > g.len() {
        return false;
    }
    let mut used = [vec![false; f.len()], vec![false; g.len()]];
    extend(
        [f, g],
        [p, q],
        &mut used,
        &mut Vec::with_capacity(p + q),
        relation,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Exact,
    CostModel,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "cost-model" => Ok(Self::CostModel),
            other => Err(Error::Parameter(format!("unknown backend `{other}`"))),
        }
    }
}

/// Amplitude-level simulation of every detection.
#[derive(Debug, Clone, Copy)]
pub struct ExactBackend {
    pub edge_cap: usize,
}

impl Default for ExactBackend {
    fn default() -> Self {
        Self {
            edge_cap: DEFAULT_EDGE_CAP,
        }
    }
}

/// Values shared by all functions, with each function's sorted positions.
#[derive(Debug, Clone, Default)]
struct ClawIndex {
    classes: Vec<Vec<Vec<usize>>>,
}

impl ClawIndex {
    fn new(instance: &ProblemInstance) -> Self {
        use std::collections::HashMap;
        let k = instance.k();
        let mut by_value: HashMap<u64, Vec<Vec<usize>>> = HashMap::new();
        for (x, &v) in instance.table(0).iter().enumerate() {
            by_value.entry(v).or_insert_with(|| vec![Vec::new(); k])[0].push(x);
        }
        for i in 1..k {
            for (x, &v) in instance.table(i).iter().enumerate() {
                if let Some(slot) = by_value.get_mut(&v) {
                    slot[i].push(x);
                }
            }
        }
        let mut classes: Vec<_> = by_value
            .into_values()
            .filter(|lists| lists.iter().all(|l| !l.is_empty()))
            .collect();
        classes.sort();
        Self { classes }
    }

    fn any_in(&self, ranges: &[Range<usize>]) -> bool {
        self.classes.iter().any(|lists| {
            lists.iter().zip(ranges).all(|(pos, r)| {
                let at = pos.partition_point(|&x| x < r.start);
                at < pos.len() && pos[at] < r.end
            })
        })
    }
}

/// Ground truth with one-sided error and closed-form query charges.
#[derive(Debug, Clone)]
pub struct CostModel {
    p_err: f64,
    index: ClawIndex,
}

impl CostModel {
    /// `p_err` is the chance of answering "false" when a claw exists.
    pub fn new(instance: &ProblemInstance, p_err: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_err) {
            return Err(Error::Parameter(format!("p_err = {p_err} outside [0, 1]")));
        }
        Ok(Self {
            p_err,
            index: ClawIndex::new(instance),
        })
    }

    pub fn p_err(&self) -> f64 {
        self.p_err
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Exact(ExactBackend),
    CostModel(CostModel),
}

impl Backend {
    pub fn kind(&self) -> BackendKind {
        match self {
            Self::Exact(_) => BackendKind::Exact,
            Self::CostModel(_) => BackendKind::CostModel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetectOutcome {
    pub verdict: bool,
    /// Oracle invocations charged to the session by this run.
    pub queries_used: u64,
    pub backend: BackendKind,
    /// Walk length drawn by the exact backend.
    pub walk_length: Option<usize>,
}

/// Walk operator and chain for one detection configuration.
pub struct DetectionWalk {
    chain: ProductChain,
    walk: SzegedyWalk,
}

impl DetectionWalk {
    pub fn build(
        instance: &ProblemInstance,
        restriction: &Restriction,
        params: &DetectParams,
        rule: &MarkRule,
        edge_cap: usize,
    ) -> Result<Self> {
        restriction.check_against(instance.domains())?;
        if params.domain_sizes != restriction.sizes() {
            return Err(Error::Parameter(format!(
                "parameters for sizes {:?}, restriction has {:?}",
                params.domain_sizes,
                restriction.sizes()
            )));
        }
        let factors = params
            .domain_sizes
            .iter()
            .zip(&params.subset_sizes)
            .map(|(&n, &l)| JohnsonGraph::new(n, l))
            .collect::<Result<Vec<_>>>()?;
        let chain = ProductChain::new(factors, edge_cap)?;
        let k = restriction.k();
        let flags = (0..chain.num_states())
            .map(|s| rule.marks(instance, &restriction.points(&chain.subsets(s)), k))
            .collect::<Result<Vec<_>>>()?;
        let walk = SzegedyWalk::new(&chain, MarkedSet::from_flags(flags), edge_cap)?;
        Ok(Self { chain, walk })
    }

    pub fn chain(&self) -> &ProductChain {
        &self.chain
    }

    pub fn walk(&self) -> &SzegedyWalk {
        &self.walk
    }

    pub fn marked_fraction(&self) -> f64 {
        self.walk.marked().fraction()
    }
}

/// Exact acceptance probability for each walk length `1..=t_max`.
pub fn success_profile(
    instance: &ProblemInstance,
    restriction: &Restriction,
    params: &DetectParams,
    rule: &MarkRule,
    edge_cap: usize,
) -> Result<Vec<f64>> {
    let dw = DetectionWalk::build(instance, restriction, params, rule, edge_cap)?;
    Ok(dw.walk.success_profile(params.t_max))
}

/// Exact probability that one exact-backend detection answers "true".
pub fn detect_success_probability(
    instance: &ProblemInstance,
    restriction: &Restriction,
    params: &DetectParams,
    rule: &MarkRule,
    edge_cap: usize,
) -> Result<f64> {
    let profile = success_profile(instance, restriction, params, rule, edge_cap)?;
    Ok(profile.iter().sum::<f64>() / profile.len() as f64)
}

/// Replays the classical bookkeeping of one branch: sort a random start
/// vertex's list, then update it along `moves` random walk moves.
fn replay_list_maintenance<R: Rng + ?Sized>(
    session: &mut OracleSession<'_>,
    chain: &ProductChain,
    restriction: &Restriction,
    moves: usize,
    rng: &mut R,
) -> Result<()> {
    let mut state = rng.random_range(0..chain.num_states());
    let mut subsets = chain.subsets(state);
    let mut list = SortedList::build(session, &restriction.points(&subsets))?;
    for _ in 0..moves {
        let next = *chain
            .neighbor_states(state)
            .choose(rng)
            .expect("every state has a neighbor");
        let next_subsets = chain.subsets(next);
        for (i, (&old, &new)) in subsets.iter().zip(&next_subsets).enumerate() {
            if old == new {
                continue;
            }
            let start = restriction.ranges[i].start;
            let gone = (old & !new).trailing_zeros() as usize;
            let came = (new & !old).trailing_zeros() as usize;
            list.remove(Point::new(i, start + gone));
            list.insert(session, Point::new(i, start + came))?;
        }
        state = next;
        subsets = next_subsets;
    }
    debug_assert_eq!(
        list,
        SortedList::from_ground_truth(session.ground_truth(), &restriction.points(&subsets))?
    );
    Ok(())
}

fn run_detection<R: Rng + ?Sized>(
    session: &mut OracleSession<'_>,
    restriction: &Restriction,
    params: &DetectParams,
    rule: &MarkRule,
    backend: &Backend,
    rng: &mut R,
) -> Result<DetectOutcome> {
    let instance = session.ground_truth();
    restriction.check_against(instance.domains())?;
    let before = session.query_count();
    let (verdict, walk_length) = match backend {
        Backend::Exact(exact) => {
            let dw = DetectionWalk::build(instance, restriction, params, rule, exact.edge_cap)?;
            let t = rng.random_range(1..=params.t_max);
            let verdict = dw.walk.detect_with_length(t, rng);
            replay_list_maintenance(session, &dw.chain, restriction, 2 * t, rng)?;
            (verdict, Some(t))
        }
        Backend::CostModel(model) => {
            let truth = match rule {
                MarkRule::Claw => model.index.any_in(restriction.ranges()),
                MarkRule::Subset { .. } => {
                    let all = restriction.points(
                        &restriction
                            .sizes()
                            .iter()
                            .map(|&n| if n >= 64 { u64::MAX } else { (1u64 << n) - 1 })
                            .collect::<Vec<_>>(),
                    );
                    if restriction.sizes().iter().any(|&n| n >= 64) {
                        return Err(Error::Size {
                            size: restriction.sizes().into_iter().max().unwrap_or(0),
                            cap: 63,
                        });
                    }
                    rule.marks(instance, &all, restriction.k())?
                }
            };
            let missed = truth && rng.random_bool(model.p_err);
            session.charge_modeled(params.query_formula(session.mode()));
            (truth && !missed, None)
        }
    };
    Ok(DetectOutcome {
        verdict,
        queries_used: session.query_count() - before,
        backend: backend.kind(),
        walk_length,
    })
}

/// Decides, with one-sided error, whether the restriction holds a k-claw.
pub fn claw_detect<R: Rng + ?Sized>(
    session: &mut OracleSession<'_>,
    restriction: &Restriction,
    params: &DetectParams,
    backend: &Backend,
    rng: &mut R,
) -> Result<DetectOutcome> {
    if params.domain_sizes != restriction.sizes() {
        return Err(Error::Parameter(format!(
            "parameters for sizes {:?}, restriction has {:?}",
            params.domain_sizes,
            restriction.sizes()
        )));
    }
    run_detection(session, restriction, params, &MarkRule::Claw, backend, rng)
}

/// Decides whether `p` distinct elements of `f`'s interval and `q` of `g`'s
/// have values in `relation`. Needs a standard oracle; `params` should come
/// from [`DetectParams::for_subsets`].
#[allow(clippy::too_many_arguments)]
pub fn subset_detect<R: Rng + ?Sized>(
    session: &mut OracleSession<'_>,
    p: usize,
    q: usize,
    relation: Relation,
    restriction: &Restriction,
    params: &DetectParams,
    backend: &Backend,
    rng: &mut R,
) -> Result<DetectOutcome> {
    if session.mode() != OracleMode::Standard {
        return Err(Error::Mode {
            expected: OracleMode::Standard,
            actual: session.mode(),
        });
    }
    if restriction.k() != 2 {
        return Err(Error::Parameter(
            "subset detection takes two functions".into(),
        ));
    }
    if p == 0 || q == 0 {
        return Err(Error::Parameter(format!(
            "need p, q >= 1, got p={p}, q={q}"
        )));
    }
    if p > params.subset_sizes[0] || q > params.subset_sizes[1] {
        return Err(Error::Parameter(format!(
            "tuple sizes (p={p}, q={q}) exceed subset sizes {:?}",
            params.subset_sizes
        )));
    }
    if params.domain_sizes != restriction.sizes() {
        return Err(Error::Parameter(
            "parameters do not match restriction".into(),
        ));
    }
    let rule = MarkRule::Subset { p, q, relation };
    run_detection(session, restriction, params, &rule, backend, rng)
}

/// One member of a calibration family: an instance searched over its full
/// domains, optionally with fixed subset sizes.
#[derive(Debug, Clone)]
pub struct CalibrationCase {
    pub instance: ProblemInstance,
    pub subset_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub c: u32,
    /// Worst member's detection probability per candidate tried.
    pub curve: Vec<(u32, f64)>,
}

/// Smallest candidate `c` whose exact detection probability reaches the
/// target on every member with at least one marked vertex.
pub fn calibrate_constant(family: &[CalibrationCase], edge_cap: usize) -> Result<Calibration> {
    let largest = *CALIBRATION_CANDIDATES.last().expect("non-empty") as f64;
    let mut profiles = Vec::new();
    for case in family {
        let restriction = Restriction::full(case.instance.domains())?;
        let base = match &case.subset_sizes {
            Some(l) => DetectParams::with_subset_sizes(case.instance.domains(), l, largest)?,
            None => choose_params(case.instance.domains(), largest)?,
        };
        let dw = DetectionWalk::build(
            &case.instance,
            &restriction,
            &base,
            &MarkRule::Claw,
            edge_cap,
        )?;
        if dw.walk.marked().count() == 0 {
            continue;
        }
        let profile = dw.walk.success_profile(base.t_max);
        profiles.push((base, profile));
    }
    let mut curve = Vec::new();
    for &c in &CALIBRATION_CANDIDATES {
        let worst = profiles
            .iter()
            .map(|(base, profile)| {
                let t = DetectParams::with_subset_sizes(
                    &base.domain_sizes,
                    &base.subset_sizes,
                    c as f64,
                )
                .map(|p| p.t_max)
                .unwrap_or(base.t_max);
                profile[..t].iter().sum::<f64>() / t as f64
            })
            .fold(1.0f64, f64::min);
        curve.push((c, worst));
        if worst >= DETECTION_TARGET {
            return Ok(Calibration { c, curve });
        }
    }
    Err(Error::Calibration {
        candidates: CALIBRATION_CANDIDATES.to_vec(),
        target: DETECTION_TARGET,
        curve,
    })
}

/// Planted instances with `N <= M <= max_side`, walked with `l = m = 2`.
pub fn tiny_family(max_side: usize, num_claws: usize, seed: u64) -> Result<Vec<CalibrationCase>> {
    let mut out = Vec::new();
    for n in 2..=max_side {
        for m in n..=max_side {
            let instance = crate::instances::make_planted_instance(
                &[n, m],
                num_claws,
                (4 * (n + m)) as u64,
                seed ^ ((n as u64) << 32 | m as u64),
            )?;
            out.push(CalibrationCase {
                instance,
                subset_sizes: Some(vec![2, 2]),
            });
        }
    }
    Ok(out)
}
