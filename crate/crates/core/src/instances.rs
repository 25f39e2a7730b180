//! Problem instances, the two oracle models, and query accounting.
//!
//! A [`ProblemInstance`] materializes `k` hidden functions `f_i: [N_i] -> [1..|Z|]`
//! as value tables. Algorithms never read the tables directly; they go
//! through an [`OracleSession`], which counts every invocation.
//!
//! Element indices are 0-based throughout the crate.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the oracle's input space: element `elem` of function `func`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub func: usize,
    pub elem: usize,
}

impl Point {
    pub const fn new(func: usize, elem: usize) -> Self {
        Self { func, elem }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(f{}, {})", self.func, self.elem)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMode {
    /// Returns the function value at the queried point.
    Standard,
    /// Returns only `[value(p) <= value(q)]`.
    Comparison,
}

impl std::str::FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "comparison" => Ok(Self::Comparison),
            other => Err(Error::Parameter(format!("unknown oracle mode `{other}`"))),
        }
    }
}

/// `k` functions with ordered domain sizes and a common range `[1..range_size]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemInstance {
    domains: Vec<usize>,
    range_size: u64,
    values: Vec<Vec<u64>>,
}

impl ProblemInstance {
    /// Validates and builds an instance from raw tables.
    pub fn new(domains: Vec<usize>, range_size: u64, values: Vec<Vec<u64>>) -> Result<Self> {
        if domains.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 functions, got {}",
                domains.len()
            )));
        }
        if range_size == 0 {
            return Err(Error::Validation("range_size must be positive".into()));
        }
        if values.len() != domains.len() {
            return Err(Error::Validation(format!(
                "{} domains but {} value tables",
                domains.len(),
                values.len()
            )));
        }
        for (i, (&n, table)) in domains.iter().zip(&values).enumerate() {
            if n == 0 {
                return Err(Error::Validation(format!("domain {i} is empty")));
            }
            if table.len() != n {
                return Err(Error::Validation(format!(
                    "table {i} has {} entries, domain size is {n}",
                    table.len()
                )));
            }
            if let Some((x, &v)) = table
                .iter()
                .enumerate()
                .find(|&(_, &v)| v == 0 || v > range_size)
            {
                return Err(Error::Validation(format!(
                    "value f{i}({x}) = {v} outside [1..{range_size}]"
                )));
            }
        }
        if let Some(w) = domains.windows(2).position(|w| w[0] > w[1]) {
            return Err(Error::Validation(format!(
                "domain sizes must be non-decreasing: N_{} = {} > N_{} = {}",
                w,
                domains[w],
                w + 1,
                domains[w + 1]
            )));
        }
        Ok(Self {
            domains,
            range_size,
            values,
        })
    }

    pub fn k(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn range_size(&self) -> u64 {
        self.range_size
    }

    pub fn contains(&self, p: Point) -> bool {
        p.func < self.k() && p.elem < self.domains[p.func]
    }

    /// Uncounted table read. Only ground-truth code paths (marking, test
    /// oracles, the cost model) use this; algorithms go through a session.
    pub fn value(&self, p: Point) -> Result<u64> {
        self.values
            .get(p.func)
            .and_then(|t| t.get(p.elem))
            .copied()
            .ok_or(Error::Domain {
                func: p.func,
                elem: p.elem,
            })
    }

    pub(crate) fn table(&self, func: usize) -> &[u64] {
        &self.values[func]
    }

    /// True iff the tuple is a k-claw of this instance.
    pub fn verify(&self, claw: &ClawTuple) -> bool {
        if claw.0.len() != self.k() {
            return false;
        }
        let mut vals = claw
            .0
            .iter()
            .enumerate()
            .map(|(i, &x)| self.value(Point::new(i, x)));
        match vals.next() {
            Some(Ok(first)) => vals.all(|v| matches!(v, Ok(v) if v == first)),
            _ => false,
        }
    }

    /// Every k-claw, by exhaustive enumeration over value classes.
    pub fn brute_force_claws(&self) -> Vec<ClawTuple> {
        let ranges: Vec<_> = self.domains.iter().map(|&n| 0..n).collect();
        self.brute_force_claws_in(&ranges)
    }

    /// Every k-claw inside the given per-function index ranges, in
    /// lexicographic order.
    pub fn brute_force_claws_in(&self, ranges: &[std::ops::Range<usize>]) -> Vec<ClawTuple> {
        let mut by_value: HashMap<u64, Vec<Vec<usize>>> = HashMap::new();
        for (i, r) in ranges.iter().enumerate() {
            for x in r.clone() {
                let v = self.values[i][x];
                let slot = by_value
                    .entry(v)
                    .or_insert_with(|| vec![Vec::new(); self.k()]);
                slot[i].push(x);
            }
        }
        let mut out = Vec::new();
        for lists in by_value.values() {
            if lists.iter().any(Vec::is_empty) {
                continue;
            }
            let mut cursor = vec![0usize; self.k()];
            'odometer: loop {
                out.push(ClawTuple(
                    cursor
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| lists[i][c])
                        .collect(),
                ));
                for i in (0..self.k()).rev() {
                    cursor[i] += 1;
                    if cursor[i] < lists[i].len() {
                        continue 'odometer;
                    }
                    cursor[i] = 0;
                }
                break;
            }
        }
        out.sort();
        out
    }
}

/// Indices `(x_1, ..., x_k)` with all `f_i(x_i)` equal. Absence is `None`
/// at the API level and `(-1, ..., -1)` on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClawTuple(pub Vec<usize>);

impl ClawTuple {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// Wire form: the indices, or `k` copies of `-1` for the sentinel.
    pub fn to_signed(claw: Option<&ClawTuple>, k: usize) -> Vec<i64> {
        match claw {
            Some(c) => c.0.iter().map(|&x| x as i64).collect(),
            None => vec![-1; k],
        }
    }
}

/// Oracle access to an instance with an exact invocation counter.
#[derive(Debug)]
pub struct OracleSession<'a> {
    instance: &'a ProblemInstance,
    mode: OracleMode,
    direct: u64,
    modeled: u64,
}

impl<'a> OracleSession<'a> {
    pub fn new(instance: &'a ProblemInstance, mode: OracleMode) -> Self {
        Self {
            instance,
            mode,
            direct: 0,
            modeled: 0,
        }
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn k(&self) -> usize {
        self.instance.k()
    }

    pub fn domains(&self) -> &[usize] {
        self.instance.domains()
    }

    /// Total oracle invocations: direct calls plus those charged by the cost model.
    pub fn query_count(&self) -> u64 {
        self.direct + self.modeled
    }

    /// Invocations made through [`standard_query`](Self::standard_query) and
    /// [`comparison_query`](Self::comparison_query).
    pub fn direct_queries(&self) -> u64 {
        self.direct
    }

    /// Invocations attributed in bulk by the cost-model backend, which stands
    /// in for a quantum subroutine whose queries are not individually replayed.
    pub fn modeled_queries(&self) -> u64 {
        self.modeled
    }

    pub(crate) fn charge_modeled(&mut self, n: u64) {
        self.modeled += n;
    }

    pub(crate) fn ground_truth(&self) -> &'a ProblemInstance {
        self.instance
    }

    fn check(&self, p: Point) -> Result<()> {
        if self.instance.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain {
                func: p.func,
                elem: p.elem,
            })
        }
    }

    pub fn standard_query(&mut self, p: Point) -> Result<u64> {
        if self.mode != OracleMode::Standard {
            return Err(Error::Mode {
                expected: OracleMode::Standard,
                actual: self.mode,
            });
        }
        self.check(p)?;
        self.direct += 1;
        self.instance.value(p)
    }

    pub fn comparison_query(&mut self, p: Point, q: Point) -> Result<bool> {
        if self.mode != OracleMode::Comparison {
            return Err(Error::Mode {
                expected: OracleMode::Comparison,
                actual: self.mode,
            });
        }
        self.check(p)?;
        self.check(q)?;
        self.direct += 1;
        Ok(self.instance.value(p)? <= self.instance.value(q)?)
    }
}

/// Builds an instance with exactly `num_claws` k-claws.
///
/// Each claw value appears once in every function; all other values are
/// distinct across the whole instance.
pub fn make_planted_instance(
    domains: &[usize],
    num_claws: usize,
    range_size: u64,
    seed: u64,
) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    make_planted_instance_with(domains, num_claws, range_size, &mut rng)
}

pub fn make_planted_instance_with<R: Rng + ?Sized>(
    domains: &[usize],
    num_claws: usize,
    range_size: u64,
    rng: &mut R,
) -> Result<ProblemInstance> {
    let k = domains.len();
    if k < 2 {
        return Err(Error::Construction(format!("need k >= 2, got {k}")));
    }
    if domains.contains(&0) {
        return Err(Error::Construction("empty domain".into()));
    }
    if domains.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Construction(format!(
            "domain sizes must be non-decreasing: {domains:?}"
        )));
    }
    if num_claws > domains[0] {
        return Err(Error::Construction(format!(
            "{num_claws} claws do not fit in smallest domain of size {}",
            domains[0]
        )));
    }
    let needed = num_claws + domains.iter().map(|&n| n - num_claws).sum::<usize>();
    if (needed as u64) > range_size {
        return Err(Error::Construction(format!(
            "range size {range_size} too small for {needed} distinct values"
        )));
    }
    let range = usize::try_from(range_size)
        .map_err(|_| Error::Construction("range size exceeds address space".into()))?;

    let mut pool = index::sample(rng, range, needed)
        .into_iter()
        .map(|v| v as u64 + 1);
    let claw_values: Vec<u64> = pool.by_ref().take(num_claws).collect();

    let mut values = Vec::with_capacity(k);
    for &n in domains {
        let positions = index::sample(rng, n, num_claws).into_vec();
        let planted: HashSet<usize> = positions.iter().copied().collect();
        let mut table = vec![0u64; n];
        for (c, &x) in positions.iter().enumerate() {
            table[x] = claw_values[c];
        }
        for (x, slot) in table.iter_mut().enumerate() {
            if !planted.contains(&x) {
                *slot = pool.next().expect("value pool sized for every slot");
            }
        }
        values.push(table);
    }
    ProblemInstance::new(domains.to_vec(), range_size, values)
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    k: usize,
    domains: Vec<usize>,
    range_size: u64,
    values: Vec<Vec<u64>>,
}

/// Canonical single-line JSON with fields `k`, `domains`, `range_size`, `values`.
pub fn serialize_instance(instance: &ProblemInstance) -> String {
    let doc = InstanceDoc {
        k: instance.k(),
        domains: instance.domains.clone(),
        range_size: instance.range_size,
        values: instance.values.clone(),
    };
    let mut s = serde_json::to_string(&doc).expect("instance documents always serialize");
    s.push('\n');
    s
}

pub fn deserialize_instance(text: &str) -> Result<ProblemInstance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if doc.k != doc.domains.len() {
        return Err(Error::Validation(format!(
            "k = {} but {} domains listed",
            doc.k,
            doc.domains.len()
        )));
    }
    ProblemInstance::new(doc.domains, doc.range_size, doc.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> ProblemInstance {
        ProblemInstance::new(vec![3, 3], 10, vec![vec![3, 1, 2], vec![5, 7, 3]]).unwrap()
    }

    #[test]
    fn standard_reads_table() {
        let inst = small();
        let mut s = OracleSession::new(&inst, OracleMode::Standard);
        // f = [3, 1, 2]; 1-based p=(f,2) is elem 1.
        assert_eq!(s.standard_query(Point::new(0, 1)).unwrap(), 1);
        assert_eq!(s.standard_query(Point::new(0, 0)).unwrap(), 3);
        assert_eq!(s.query_count(), 2);
        let a = s.standard_query(Point::new(1, 2)).unwrap();
        let b = s.standard_query(Point::new(1, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(s.query_count(), 4);
    }

    #[test]
    fn comparison_semantics() {
        let inst = small();
        let mut s = OracleSession::new(&inst, OracleMode::Comparison);
        // g(0) = 5, g(1) = 7
        assert!(s
            .comparison_query(Point::new(1, 0), Point::new(1, 1))
            .unwrap());
        assert!(!s
            .comparison_query(Point::new(1, 1), Point::new(1, 0))
            .unwrap());
        assert!(s
            .comparison_query(Point::new(0, 2), Point::new(0, 2))
            .unwrap());
        assert_eq!(s.query_count(), 3);
    }

    #[test]
    fn comparison_agrees_with_standard_on_all_pairs() {
        let inst = make_planted_instance(&[4, 5], 2, 30, 9).unwrap();
        let mut cmp = OracleSession::new(&inst, OracleMode::Comparison);
        let mut std = OracleSession::new(&inst, OracleMode::Standard);
        let points: Vec<_> = (0..2)
            .flat_map(|i| (0..inst.domains()[i]).map(move |x| Point::new(i, x)))
            .collect();
        for &p in &points {
            for &q in &points {
                let expect = std.standard_query(p).unwrap() <= std.standard_query(q).unwrap();
                assert_eq!(cmp.comparison_query(p, q).unwrap(), expect);
            }
        }
        assert_eq!(cmp.query_count(), (points.len() * points.len()) as u64);
    }

    #[test]
    fn errors_on_range_and_mode() {
        let inst = small();
        let mut s = OracleSession::new(&inst, OracleMode::Standard);
        assert!(matches!(
            s.standard_query(Point::new(0, 3)),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            s.standard_query(Point::new(2, 0)),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            s.comparison_query(Point::new(0, 0), Point::new(0, 1)),
            Err(Error::Mode { .. })
        ));
        assert_eq!(s.query_count(), 0);
        let mut c = OracleSession::new(&inst, OracleMode::Comparison);
        assert!(matches!(
            c.standard_query(Point::new(0, 0)),
            Err(Error::Mode { .. })
        ));
        assert!(matches!(
            c.comparison_query(Point::new(0, 0), Point::new(1, 9)),
            Err(Error::Domain { .. })
        ));
    }

    // Independent O(N*M) pair scan.
    fn pair_scan(inst: &ProblemInstance) -> usize {
        let (f, g) = (inst.table(0), inst.table(1));
        f.iter().map(|a| g.iter().filter(|&b| a == b).count()).sum()
    }

    #[test]
    fn planted_claw_counts() {
        let none = make_planted_instance(&[4, 4], 0, 64, 1).unwrap();
        assert_eq!(pair_scan(&none), 0);
        let one = make_planted_instance(&[4, 8], 1, 64, 2).unwrap();
        assert_eq!(pair_scan(&one), 1);

        let three = make_planted_instance(&[3, 4, 5], 1, 64, 3).unwrap();
        let mut triples = 0;
        for a in three.table(0) {
            for b in three.table(1) {
                for c in three.table(2) {
                    if a == b && b == c {
                        triples += 1;
                    }
                }
            }
        }
        assert_eq!(triples, 1);
        assert_eq!(three.brute_force_claws().len(), 1);
    }

    #[test]
    fn planted_is_deterministic() {
        let a = make_planted_instance(&[5, 9], 2, 100, 77).unwrap();
        let b = make_planted_instance(&[5, 9], 2, 100, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn planted_rejects_infeasible() {
        assert!(make_planted_instance(&[4, 4], 0, 7, 0).is_err());
        assert!(make_planted_instance(&[4, 4], 5, 100, 0).is_err());
        assert!(make_planted_instance(&[4], 0, 100, 0).is_err());
        assert!(make_planted_instance(&[5, 4], 0, 100, 0).is_err());
    }

    #[test]
    fn verify_checks_values() {
        let inst = small();
        assert!(inst.verify(&ClawTuple(vec![0, 2])));
        assert!(!inst.verify(&ClawTuple(vec![0, 1])));
        assert!(!inst.verify(&ClawTuple(vec![0, 9])));
        assert_eq!(inst.brute_force_claws(), vec![ClawTuple(vec![0, 2])]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(deserialize_instance(""), Err(Error::Parse { .. })));
        let e = deserialize_instance("{\"k\": 2,\n \"domains\": [1, }").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let swapped = r#"{"k":2,"domains":[3,2],"range_size":9,"values":[[1,2,3],[4,5]]}"#;
        assert!(matches!(
            deserialize_instance(swapped),
            Err(Error::Validation(_))
        ));
        let bad_value = r#"{"k":2,"domains":[1,1],"range_size":3,"values":[[4],[1]]}"#;
        assert!(matches!(
            deserialize_instance(bad_value),
            Err(Error::Validation(_))
        ));
    }

    proptest! {
        #[test]
        fn serialize_round_trips(
            n in 1usize..6, extra in 0usize..6, k3 in any::<bool>(),
            claws in 0usize..2, seed in any::<u64>()
        ) {
            let mut doms = vec![n, n + extra];
            if k3 { doms.push(n + extra + 1); }
            let claws = claws.min(n);
            let inst = make_planted_instance(&doms, claws, 200, seed).unwrap();
            let text = serialize_instance(&inst);
            prop_assert_eq!(deserialize_instance(&text).unwrap(), inst.clone());
            prop_assert_eq!(inst.brute_force_claws().len(), claws);
        }
    }
}
