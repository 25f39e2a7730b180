//! The value-ordered list a walk vertex carries.
//!
//! Entries are ordered by `(value, function, element)`, so the list is a
//! function of the carried subsets alone. Alongside the order the list keeps
//! one equality bit per adjacent pair; with those bits the marked check reads
//! no values.

use std::hash::{Hash, Hasher};

use crate::error::Result;
use crate::instances::{OracleMode, OracleSession, Point, ProblemInstance};

#[derive(Debug, Clone)]
pub struct SortedList {
    entries: Vec<Point>,
    /// `ties[i]` is `value(entries[i]) == value(entries[i + 1])`.
    ties: Vec<bool>,
    /// Values, when the list was built through a standard oracle.
    values: Option<Vec<u64>>,
}

impl PartialEq for SortedList {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.ties == other.ties
    }
}

impl Eq for SortedList {}

impl Hash for SortedList {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.entries.hash(state);
        self.ties.hash(state);
    }
}

/// Does `a` sort before `b`? One comparison query.
fn precedes(session: &mut OracleSession<'_>, a: Point, b: Point) -> Result<bool> {
    if a < b {
        session.comparison_query(a, b)
    } else {
        Ok(!session.comparison_query(b, a)?)
    }
}

/// Top-down merge sort through the oracle: at most
/// `n ceil(log2 n) - 2^ceil(log2 n) + 1` queries.
fn merge_sort(session: &mut OracleSession<'_>, items: &mut Vec<Point>) -> Result<()> {
    if items.len() <= 1 {
        return Ok(());
    }
    let mut right = items.split_off(items.len() / 2);
    merge_sort(session, items)?;
    merge_sort(session, &mut right)?;
    let left = std::mem::take(items);
    items.reserve(left.len() + right.len());
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if precedes(session, left[i], right[j])? {
            items.push(left[i]);
            i += 1;
        } else {
            items.push(right[j]);
            j += 1;
        }
    }
    items.extend_from_slice(&left[i..]);
    items.extend_from_slice(&right[j..]);
    Ok(())
}

impl SortedList {
    /// Builds the list through the oracle.
    ///
    /// Standard mode reads each value once. Comparison mode merge-sorts and
    /// then spends one query per adjacent pair on the equality bits; the
    /// total stays within `n ceil(log2 n)`.
    pub fn build(session: &mut OracleSession<'_>, points: &[Point]) -> Result<Self> {
        match session.mode() {
            OracleMode::Standard => {
                let mut keyed = points
                    .iter()
                    .map(|&p| Ok((session.standard_query(p)?, p)))
                    .collect::<Result<Vec<_>>>()?;
                keyed.sort_unstable();
                Ok(Self::from_keyed(keyed, true))
            }
            OracleMode::Comparison => {
                let mut entries = points.to_vec();
                merge_sort(session, &mut entries)?;
                let ties = entries
                    .windows(2)
                    .map(|w| session.comparison_query(w[1], w[0]))
                    .collect::<Result<_>>()?;
                Ok(Self {
                    entries,
                    ties,
                    values: None,
                })
            }
        }
    }

    /// Builds the list from the value tables without touching an oracle.
    pub fn from_ground_truth(instance: &ProblemInstance, points: &[Point]) -> Result<Self> {
        let mut keyed = points
            .iter()
            .map(|&p| Ok((instance.value(p)?, p)))
            .collect::<Result<Vec<_>>>()?;
        keyed.sort_unstable();
        Ok(Self::from_keyed(keyed, false))
    }

    fn from_keyed(keyed: Vec<(u64, Point)>, keep_values: bool) -> Self {
        let ties = keyed.windows(2).map(|w| w[0].0 == w[1].0).collect();
        let (values, entries) = keyed.into_iter().unzip::<_, _, Vec<_>, Vec<_>>();
        Self {
            entries,
            ties,
            values: keep_values.then_some(values),
        }
    }

    pub fn entries(&self) -> &[Point] {
        &self.entries
    }

    pub fn ties(&self) -> &[bool] {
        &self.ties
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drops an element. Needs no queries: equality is transitive along the
    /// sorted order, so the new adjacent bit is the AND of the two old ones.
    pub fn remove(&mut self, point: Point) -> bool {
        let Some(idx) = self.entries.iter().position(|&p| p == point) else {
            return false;
        };
        let last = self.entries.len() - 1;
        self.entries.remove(idx);
        if let Some(values) = &mut self.values {
            values.remove(idx);
        }
        if last == 0 {
            return true;
        }
        if idx == 0 {
            self.ties.remove(0);
        } else if idx == last {
            self.ties.remove(idx - 1);
        } else {
            let joined = self.ties[idx - 1] && self.ties[idx];
            self.ties.remove(idx);
            self.ties[idx - 1] = joined;
        }
        true
    }

    /// Inserts an element by binary search: `ceil(log2(n + 1))` comparison
    /// queries plus up to two for the equality bits, or a single value read
    /// in standard mode.
    pub fn insert(&mut self, session: &mut OracleSession<'_>, point: Point) -> Result<()> {
        match (&mut self.values, session.mode()) {
            (Some(values), OracleMode::Standard) => {
                let v = session.standard_query(point)?;
                let idx = self
                    .entries
                    .iter()
                    .zip(values.iter())
                    .position(|(&p, &w)| (v, point) < (w, p))
                    .unwrap_or(self.entries.len());
                self.entries.insert(idx, point);
                values.insert(idx, v);
                let before = (idx > 0).then(|| values[idx - 1] == v);
                let after = (idx + 1 < values.len()).then(|| values[idx + 1] == v);
                self.splice_ties(idx, before, after);
                Ok(())
            }
            _ => {
                let (mut lo, mut hi) = (0, self.entries.len());
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if precedes(session, self.entries[mid], point)? {
                        lo = mid + 1;
                    } else {
                        hi = mid;
                    }
                }
                let before = match lo.checked_sub(1) {
                    Some(i) => Some(session.comparison_query(point, self.entries[i])?),
                    None => None,
                };
                let after = match self.entries.get(lo) {
                    Some(&next) => Some(session.comparison_query(next, point)?),
                    None => None,
                };
                self.entries.insert(lo, point);
                self.values = None;
                self.splice_ties(lo, before, after);
                Ok(())
            }
        }
    }

    fn splice_ties(&mut self, idx: usize, before: Option<bool>, after: Option<bool>) {
        match (before, after) {
            (Some(b), Some(a)) => {
                self.ties[idx - 1] = b;
                self.ties.insert(idx, a);
            }
            (Some(b), None) => self.ties.push(b),
            (None, Some(a)) => self.ties.insert(0, a),
            (None, None) => {}
        }
    }

    /// Runs of equal values, as index ranges into the entries.
    pub fn runs(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let mut start = 0;
        (0..self.entries.len()).filter_map(move |i| {
            if i + 1 == self.entries.len() || !self.ties[i] {
                let run = start..i + 1;
                start = i + 1;
                Some(run)
            } else {
                None
            }
        })
    }
}

/// True iff some run of equal values contains an element of every one of the
/// `k` functions. Reads only the list.
pub fn is_marked(list: &SortedList, k: usize) -> bool {
    list.runs().any(|run| {
        if run.len() < k {
            return false;
        }
        let mut seen = vec![false; k];
        for p in &list.entries[run] {
            if let Some(s) = seen.get_mut(p.func) {
                *s = true;
            }
        }
        seen.iter().all(|&s| s)
    })
}
