//! Claw location by interval bisection over repeated detections, followed by
//! a classical scan of the final rectangle.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{
    choose_params, claw_detect, Backend, BackendKind, CostModel, ExactBackend, Restriction,
    SortedList, DEFAULT_C, DEFAULT_P_ERR,
};
use crate::error::{Error, Result};
use crate::instances::{ClawTuple, OracleSession, Point};
use crate::walk::DEFAULT_EDGE_CAP;

/// Final-scan threshold on `u - l` for every interval.
pub const DEFAULT_C_FINAL: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub backend: BackendKind,
    /// Miss probability of the cost-model detector.
    pub p_err: f64,
    /// Edge cap of the exact backend.
    pub edge_cap: usize,
    /// Walk-length constant passed to parameter selection.
    pub c: f64,
    pub c_final: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::CostModel,
            p_err: DEFAULT_P_ERR,
            edge_cap: DEFAULT_EDGE_CAP,
            c: DEFAULT_C,
            c_final: DEFAULT_C_FINAL,
            seed: 0,
        }
    }
}

impl SearchConfig {
    fn validate(&self) -> Result<()> {
        if self.c_final < 1 {
            return Err(Error::Parameter("c_final must be at least 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Parameter(format!(
                "constant c = {} must be positive",
                self.c
            )));
        }
        Ok(())
    }
}

/// One detect invocation during a search. Intervals are inclusive `[l, u]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub stage: u8,
    pub depth: usize,
    /// Position of the candidate tuple among the branches at this depth.
    pub branch: usize,
    pub intervals: Vec<[usize; 2]>,
    pub repetition: usize,
    pub repetitions: usize,
    pub verdict: bool,
    pub queries: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub walk_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchResult {
    /// `None` is the `(-1, ..., -1)` sentinel.
    pub claw: Option<ClawTuple>,
    pub total_queries: u64,
    pub trace: Vec<TraceRecord>,
}

impl SearchResult {
    /// The trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.trace {
            out.push_str(&serde_json::to_string(rec).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

/// `ceil(log_3(x))` for `x >= 1`.
pub fn ceil_log3(x: u64) -> u32 {
    let mut e = 0;
    let mut p: u64 = 1;
    while p < x {
        p = p.saturating_mul(3);
        e += 1;
    }
    e
}

/// Repetitions at depth `s` when up to `branches` candidates are examined.
fn repetitions(s: usize, branches: u64) -> usize {
    s + 1 + ceil_log3(branches) as usize
}

/// Upper bound on the failure probability of a search whose stages reach
/// the given depths, when each detection misses with probability at most
/// 1/3 and depth `s` uses `s + 1 + ceil(log3 b)` repetitions for `b` branches.
pub fn error_budget(
    max_depth_stage1: usize,
    max_depth_stage2: usize,
    branch_counts: [u64; 2],
) -> f64 {
    [max_depth_stage1, max_depth_stage2]
        .into_iter()
        .zip(branch_counts)
        .map(|(depth, b)| {
            (1..=depth)
                .map(|s| b as f64 * (1.0f64 / 3.0).powi(repetitions(s, b) as i32))
                .sum::<f64>()
        })
        .sum()
}

fn span(r: &Range<usize>) -> usize {
    r.end - r.start - 1
}

fn halves(r: &Range<usize>) -> [Range<usize>; 2] {
    let mid = (r.start + r.end) / 2;
    [r.start..mid, mid..r.end]
}

fn inclusive(ranges: &[Range<usize>]) -> Vec<[usize; 2]> {
    ranges.iter().map(|r| [r.start, r.end - 1]).collect()
}

struct Searcher<'s, 'a, R: Rng> {
    session: &'s mut OracleSession<'a>,
    backend: Backend,
    c: f64,
    rng: R,
    trace: Vec<TraceRecord>,
}

impl<R: Rng> Searcher<'_, '_, R> {
    /// Examines the candidate tuples in order and returns the first with any
    /// "true" among `reps` detections, or `None` when all are exhausted.
    fn descend(
        &mut self,
        stage: u8,
        depth: usize,
        candidates: Vec<Vec<Range<usize>>>,
        reps: usize,
    ) -> Result<Option<Vec<Range<usize>>>> {
        for (branch, ranges) in candidates.into_iter().enumerate() {
            let restriction = Restriction::new(ranges)?;
            let params = choose_params(&restriction.sizes(), self.c)?;
            let mut any = false;
            for repetition in 0..reps {
                let out = claw_detect(
                    self.session,
                    &restriction,
                    &params,
                    &self.backend,
                    &mut self.rng,
                )?;
                any |= out.verdict;
                self.trace.push(TraceRecord {
                    stage,
                    depth,
                    branch,
                    intervals: inclusive(restriction.ranges()),
                    repetition,
                    repetitions: reps,
                    verdict: out.verdict,
                    queries: out.queries_used,
                    walk_length: out.walk_length,
                });
            }
            if any {
                return Ok(Some(restriction.ranges().to_vec()));
            }
        }
        Ok(None)
    }
}

/// Cartesian product of per-function interval choices, first function most
/// significant, lower halves first.
fn product(choices: &[Vec<Range<usize>>]) -> Vec<Vec<Range<usize>>> {
    let mut out = vec![Vec::new()];
    for opts in choices {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |r| {
                    let mut t = prefix.clone();
                    t.push(r.clone());
                    t
                })
            })
            .collect();
    }
    out
}

fn make_backend(session: &OracleSession<'_>, config: &SearchConfig) -> Result<Backend> {
    Ok(match config.backend {
        BackendKind::Exact => Backend::Exact(ExactBackend {
            edge_cap: config.edge_cap,
        }),
        BackendKind::CostModel => {
            Backend::CostModel(CostModel::new(session.ground_truth(), config.p_err)?)
        }
    })
}

/// Repetition offsets of the two bisection stages.
#[derive(Debug, Clone, Copy)]
struct Schedule {
    stage1_branches: u64,
    stage2_branches: u64,
}

fn run_search<R: Rng>(
    session: &mut OracleSession<'_>,
    config: &SearchConfig,
    schedule: Schedule,
    rng: R,
) -> Result<SearchResult> {
    config.validate()?;
    let before = session.query_count();
    let backend = make_backend(session, config)?;
    let mut current: Vec<Range<usize>> = session.domains().iter().map(|&n| 0..n).collect();
    let mut searcher = Searcher {
        session,
        backend,
        c: config.c,
        rng,
        trace: Vec::new(),
    };
    let finish = |searcher: Searcher<'_, '_, R>, claw| {
        let total_queries = searcher.session.query_count() - before;
        Ok(SearchResult {
            claw,
            total_queries,
            trace: searcher.trace,
        })
    };

    // Stage 1: shrink every other interval to at most |X_1|.
    let bound = current[0].len();
    let mut s = 1;
    while current[1..].iter().any(|r| span(r) > bound) {
        let choices: Vec<Vec<Range<usize>>> = current
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if i == 0 || span(r) <= bound {
                    vec![r.clone()]
                } else {
                    halves(r).to_vec()
                }
            })
            .collect();
        let reps = repetitions(s, schedule.stage1_branches);
        match searcher.descend(1, s, product(&choices), reps)? {
            Some(next) => current = next,
            None => return finish(searcher, None),
        }
        s += 1;
    }

    // Stage 2: bisect every interval down to the scan threshold.
    let mut s = 1;
    while current.iter().any(|r| span(r) > config.c_final) {
        let choices: Vec<Vec<Range<usize>>> = current
            .iter()
            .map(|r| {
                if span(r) <= config.c_final {
                    vec![r.clone()]
                } else {
                    halves(r).to_vec()
                }
            })
            .collect();
        let reps = repetitions(s, schedule.stage2_branches);
        match searcher.descend(2, s, product(&choices), reps)? {
            Some(next) => current = next,
            None => return finish(searcher, None),
        }
        s += 1;
    }

    let claw = final_scan(searcher.session, &Restriction::new(current)?)?;
    finish(searcher, claw)
}

/// Locates a claw of a two-function instance, or returns the sentinel.
pub fn claw_search(session: &mut OracleSession<'_>, config: &SearchConfig) -> Result<SearchResult> {
    claw_search_with_rng(session, config, ChaCha8Rng::seed_from_u64(config.seed))
}

pub fn claw_search_with_rng<R: Rng>(
    session: &mut OracleSession<'_>,
    config: &SearchConfig,
    rng: R,
) -> Result<SearchResult> {
    if session.k() != 2 {
        return Err(Error::Parameter(format!(
            "claw search takes two functions, instance has {}",
            session.k()
        )));
    }
    // s + 2 and s + 3 repetitions.
    let schedule = Schedule {
        stage1_branches: 2,
        stage2_branches: 4,
    };
    run_search(session, config, schedule, rng)
}

/// Locates a k-claw, or returns the sentinel.
pub fn k_claw_search(
    session: &mut OracleSession<'_>,
    config: &SearchConfig,
) -> Result<SearchResult> {
    k_claw_search_with_rng(session, config, ChaCha8Rng::seed_from_u64(config.seed))
}

pub fn k_claw_search_with_rng<R: Rng>(
    session: &mut OracleSession<'_>,
    config: &SearchConfig,
    rng: R,
) -> Result<SearchResult> {
    let k = session.k() as u32;
    if k >= 63 {
        return Err(Error::Parameter(format!("k = {k} too large")));
    }
    let schedule = Schedule {
        stage1_branches: 1 << (k - 1),
        stage2_branches: 1 << k,
    };
    run_search(session, config, schedule, rng)
}

/// Classical search of a rectangle. Returns the lexicographically least
/// claw, verified against the oracle answers.
pub fn final_scan(
    session: &mut OracleSession<'_>,
    rectangle: &Restriction,
) -> Result<Option<ClawTuple>> {
    let k = rectangle.k();
    let points: Vec<Point> = rectangle
        .ranges()
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.clone().map(move |x| Point::new(i, x)))
        .collect();
    // Standard mode reads each element once; comparison mode merge-sorts.
    let list = SortedList::build(session, &points)?;
    let mut best: Option<Vec<usize>> = None;
    for run in list.runs() {
        let mut least: Vec<Option<usize>> = vec![None; k];
        for p in &list.entries()[run] {
            let slot = &mut least[p.func];
            if slot.is_none_or(|x| p.elem < x) {
                *slot = Some(p.elem);
            }
        }
        if let Some(tuple) = least.into_iter().collect::<Option<Vec<usize>>>() {
            if best.as_ref().is_none_or(|b| tuple < *b) {
                best = Some(tuple);
            }
        }
    }
    Ok(best.map(ClawTuple))
}
