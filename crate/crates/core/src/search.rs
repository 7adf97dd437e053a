//! Disjunctive top-k retrieval over a quantized index.
//!
//! Results follow one total order: score descending, then internal doc number
//! ascending. Both traversals visit candidates in doc-number order, so a
//! candidate enters a full top-k heap only with a strictly greater score than
//! the current k-th entry. This makes MaxScore exactly equal to the
//! exhaustive traversal, ties included.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{InvertedIndex, PostingList};
use crate::ingest::Run;
use crate::types::{Score, WeightedQuery};

/// Default retrieval depth.
pub const DEFAULT_K: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    Daat,
    #[default]
    MaxScore,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daat" => Ok(Algorithm::Daat),
            "maxscore" => Ok(Algorithm::MaxScore),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected daat or maxscore)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit {
    pub doc: u32,
    pub score: Score,
}

impl Hit {
    /// Ranking order: higher score first, then lower doc number.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other.score.cmp(&self.score).then(self.doc.cmp(&other.doc))
    }
}

// Max-heap whose top is the worst hit under the ranking order.
#[derive(PartialEq, Eq)]
struct Worst(Hit);

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    /// Whether `(score, doc)` would beat the current k-th entry.
    fn beats(&self, score: Score, doc: u32) -> bool {
        if self.heap.len() < self.k {
            return true;
        }
        let kth = self.heap.peek().expect("full heap").0;
        Hit { doc, score }.rank_cmp(&kth) == Ordering::Less
    }

    /// Score a future candidate (with a larger doc number than anything seen)
    /// must exceed to enter.
    fn threshold(&self) -> Option<Score> {
        (self.heap.len() >= self.k).then(|| self.heap.peek().expect("full heap").0.score)
    }

    /// Returns true if the heap changed.
    fn insert(&mut self, doc: u32, score: Score) -> bool {
        if !self.beats(score, doc) {
            return false;
        }
        self.heap.push(Worst(Hit { doc, score }));
        if self.heap.len() > self.k {
            self.heap.pop();
        }
        true
    }

    fn into_sorted(self) -> Vec<Hit> {
        let mut hits: Vec<Hit> = self.heap.into_iter().map(|w| w.0).collect();
        hits.sort_by(Hit::rank_cmp);
        hits
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl Ranking {
    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// `(external doc id, score)` pairs in rank order.
    pub fn resolve<'a>(&'a self, index: &'a InvertedIndex) -> impl Iterator<Item = (&'a str, Score)> {
        self.hits
            .iter()
            .map(|h| (index.doc_table[h.doc as usize].as_str(), h.score))
    }
}

const END: u32 = u32::MAX;

struct Cursor<'a> {
    docs: &'a [u32],
    impacts: &'a [u32],
    weight: u64,
    pos: usize,
    max_score: Score,
}

impl<'a> Cursor<'a> {
    fn new(list: &'a PostingList, weight: u32) -> Self {
        let weight = u64::from(weight);
        Self {
            docs: list.doc_ids(),
            impacts: list.quantized_impacts(),
            weight,
            pos: 0,
            max_score: weight * u64::from(list.max_quantized()),
        }
    }

    #[inline]
    fn doc(&self) -> u32 {
        self.docs.get(self.pos).copied().unwrap_or(END)
    }

    #[inline]
    fn score(&self) -> Score {
        self.weight * u64::from(self.impacts[self.pos])
    }

    /// Score contribution for `doc`, advancing past it if present. Written
    /// without a data-dependent branch: on partially overlapping lists the
    /// membership test is close to a coin flip.
    #[inline]
    fn take(&mut self, doc: u32) -> Score {
        let hit = self.doc() == doc;
        let impact = self.impacts.get(self.pos).copied().unwrap_or(0);
        self.pos += usize::from(hit);
        u64::from(hit) * self.weight * u64::from(impact)
    }

    /// Moves to the first posting with doc number `>= target` (galloping).
    fn next_geq(&mut self, target: u32) {
        if self.doc() >= target {
            return;
        }
        let mut step = 1;
        let mut lo = self.pos;
        while lo + step < self.docs.len() && self.docs[lo + step] < target {
            lo += step;
            step *= 2;
        }
        let hi = (lo + step + 1).min(self.docs.len());
        self.pos = lo + self.docs[lo..hi].partition_point(|&d| d < target);
    }
}

fn cursors<'a>(index: &'a InvertedIndex, q: &WeightedQuery, k: usize) -> Result<Vec<Cursor<'a>>> {
    if !index.is_quantized() {
        return Err(Error::NotQuantized);
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(q.entries()
        .iter()
        .filter_map(|&(t, w)| index.list(t).filter(|l| !l.is_empty()).map(|l| Cursor::new(l, w)))
        .collect())
}

/// Exhaustive document-at-a-time traversal of every query-term list.
pub fn search_daat(index: &InvertedIndex, q: &WeightedQuery, k: usize) -> Result<Ranking> {
    let mut cursors = cursors(index, q, k)?;
    let mut top = TopK::new(k);
    let mut cur = cursors.iter().map(Cursor::doc).min().unwrap_or(END);
    while cur != END {
        let mut score = 0;
        let mut next = END;
        for c in cursors.iter_mut() {
            score += c.take(cur);
            next = next.min(c.doc());
        }
        top.insert(cur, score);
        cur = next;
    }
    Ok(Ranking {
        query_id: q.query_id.clone(),
        hits: top.into_sorted(),
    })
}

/// Safe MaxScore traversal; returns exactly what [`search_daat`] returns.
pub fn search_maxscore(index: &InvertedIndex, q: &WeightedQuery, k: usize) -> Result<Ranking> {
    let mut cursors = cursors(index, q, k)?;
    cursors.sort_by_key(|c| c.max_score);
    let upper_bounds: Vec<Score> = cursors
        .iter()
        .scan(0, |acc, c| {
            *acc += c.max_score;
            Some(*acc)
        })
        .collect();

    let mut top = TopK::new(k);
    // lists [0, first_essential) cannot alone lift a candidate over the threshold
    let mut first_essential = 0;
    let mut cur = cursors.iter().map(Cursor::doc).min().unwrap_or(END);

    while cur != END && first_essential < cursors.len() {
        let (non_essential, essential) = cursors.split_at_mut(first_essential);
        let mut score = 0;
        let mut next = END;
        for c in essential.iter_mut() {
            score += c.take(cur);
            next = next.min(c.doc());
        }
        for (c, &ub) in non_essential.iter_mut().zip(&upper_bounds).rev() {
            if !top.beats(score + ub, cur) {
                break;
            }
            c.next_geq(cur);
            if c.doc() == cur {
                score += c.score();
            }
        }
        if top.insert(cur, score) {
            if let Some(threshold) = top.threshold() {
                while first_essential < upper_bounds.len()
                    && upper_bounds[first_essential] <= threshold
                {
                    first_essential += 1;
                }
            }
        }
        cur = next;
    }
    Ok(Ranking {
        query_id: q.query_id.clone(),
        hits: top.into_sorted(),
    })
}

pub fn search(index: &InvertedIndex, q: &WeightedQuery, k: usize, algorithm: Algorithm) -> Result<Ranking> {
    match algorithm {
        Algorithm::Daat => search_daat(index, q, k),
        Algorithm::MaxScore => search_maxscore(index, q, k),
    }
}

/// Runs every query (in parallel on the current rayon pool) and collects a
/// run in query input order. Run scores are the integer scores as floats.
pub fn batch_search(
    index: &InvertedIndex,
    queries: &[WeightedQuery],
    k: usize,
    algorithm: Algorithm,
) -> Result<Run> {
    let rankings = queries
        .par_iter()
        .map(|q| search(index, q, k, algorithm))
        .collect::<Result<Vec<_>>>()?;
    let mut run = Run::new();
    for r in &rankings {
        run.insert_ranked(
            &r.query_id,
            r.resolve(index).map(|(d, s)| (d.to_string(), s as f64)),
        );
    }
    Ok(run)
}
