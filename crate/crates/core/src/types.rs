//! Shared domain types, impact quantization and the exact integer scorer.

use std::fmt;

use crate::error::{Error, Result};
use crate::ingest::VocabMap;

/// Dense 0-based index into a [`VocabMap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermId(pub u32);

impl TermId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Integer retrieval score: `sum(query_weight * impact)`.
pub type Score = u64;

/// Sparse raw-weight representation of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactVector {
    pub doc_id: String,
    entries: Vec<(TermId, f64)>,
}

impl ImpactVector {
    /// Builds a vector from unordered entries. Non-positive and non-finite
    /// weights are rejected; duplicate terms are an error.
    pub fn new(doc_id: impl Into<String>, mut entries: Vec<(TermId, f64)>) -> Result<Self> {
        let doc_id = doc_id.into();
        entries.sort_by_key(|&(t, _)| t);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Domain(format!(
                    "document `{doc_id}` repeats term {}",
                    w[0].0
                )));
            }
        }
        if let Some(&(t, w)) = entries.iter().find(|&&(_, w)| !(w > 0.0 && w.is_finite())) {
            return Err(Error::Domain(format!(
                "document `{doc_id}` has non-positive weight {w} for term {t}"
            )));
        }
        Ok(Self { doc_id, entries })
    }

    /// Entries sorted by strictly ascending term id.
    pub fn entries(&self) -> &[(TermId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.entries.iter().map(|&(_, w)| w).reduce(f64::max)
    }

    /// Keeps the entries for which `keep` returns true. Order is preserved.
    pub(crate) fn retain(&mut self, mut keep: impl FnMut(TermId, f64) -> bool) {
        self.entries.retain(|&(t, w)| keep(t, w));
    }

    pub(crate) fn from_sorted_unchecked(doc_id: String, entries: Vec<(TermId, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        Self { doc_id, entries }
    }
}

/// A collection of document vectors sharing one vocabulary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardIndex {
    pub vocab: VocabMap,
    pub docs: Vec<ImpactVector>,
}

impl ForwardIndex {
    pub fn num_entries(&self) -> usize {
        self.docs.iter().map(ImpactVector::len).sum()
    }

    pub fn max_weight(&self) -> Option<f64> {
        self.docs.iter().filter_map(ImpactVector::max_weight).reduce(f64::max)
    }
}

/// A query after integer scaling.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WeightedQuery {
    pub query_id: String,
    entries: Vec<(TermId, u32)>,
}

impl WeightedQuery {
    pub fn new(query_id: impl Into<String>, mut entries: Vec<(TermId, u32)>) -> Result<Self> {
        let query_id = query_id.into();
        entries.sort_by_key(|&(t, _)| t);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain(format!("query `{query_id}` repeats a term")));
        }
        if entries.iter().any(|&(_, w)| w == 0) {
            return Err(Error::Domain(format!("query `{query_id}` has a zero weight")));
        }
        Ok(Self { query_id, entries })
    }

    pub fn entries(&self) -> &[(TermId, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    /// Impact width in bits, `1..=32`.
    pub bits: u32,
    /// Largest raw weight the quantizer maps to `2^bits - 1`.
    pub global_max: f64,
    /// Multiplier applied to raw query weights before rounding.
    pub query_scale: u32,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            bits: 8,
            global_max: 1.0,
            query_scale: 100,
        }
    }
}

impl QuantConfig {
    pub fn new(bits: u32, global_max: f64, query_scale: u32) -> Result<Self> {
        let cfg = Self {
            bits,
            global_max,
            query_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=32).contains(&self.bits) {
            return Err(Error::Config(format!("bits must be in 1..=32, got {}", self.bits)));
        }
        if !(self.global_max > 0.0 && self.global_max.is_finite()) {
            return Err(Error::Config(format!(
                "global_max must be positive, got {}",
                self.global_max
            )));
        }
        if self.query_scale == 0 {
            return Err(Error::Config("query_scale must be positive".into()));
        }
        Ok(())
    }

    /// `2^bits - 1`.
    pub fn max_level(&self) -> u32 {
        if self.bits >= 32 {
            u32::MAX
        } else {
            (1u32 << self.bits) - 1
        }
    }
}

/// Maps a raw weight in `(0, global_max]` to `max(1, round(w / global_max * (2^bits - 1)))`.
///
/// Rounding is half away from zero.
pub fn quantize_impact(w: f64, cfg: &QuantConfig) -> Result<u32> {
    if !(w > 0.0) || w > cfg.global_max {
        return Err(Error::Domain(format!(
            "weight {w} outside (0, {}]",
            cfg.global_max
        )));
    }
    let level = (w / cfg.global_max * f64::from(cfg.max_level())).round();
    // level <= max_level since w <= global_max
    Ok((level as u32).max(1))
}

/// Scales raw query weights by `query_scale`, rounding half away from zero.
/// Entries that round to zero are dropped.
pub fn scale_query(query_id: &str, raw: &[(TermId, f64)], cfg: &QuantConfig) -> WeightedQuery {
    let scale = f64::from(cfg.query_scale);
    let mut entries: Vec<(TermId, u32)> = raw
        .iter()
        .filter(|&&(_, w)| w > 0.0)
        .map(|&(t, w)| (t, (w * scale).round().min(f64::from(u32::MAX)) as u32))
        .filter(|&(_, w)| w > 0)
        .collect();
    entries.sort_by_key(|&(t, _)| t);
    // repeated terms in the raw input are summed
    entries.dedup_by(|next, prev| {
        if next.0 == prev.0 {
            prev.1 = prev.1.saturating_add(next.1);
            true
        } else {
            false
        }
    });
    WeightedQuery {
        query_id: query_id.to_string(),
        entries,
    }
}

/// Dot product of a scaled query and a quantized document, both sorted by term.
pub fn score_doc(q: &WeightedQuery, doc: &[(TermId, u32)]) -> Score {
    let (mut i, mut j) = (0, 0);
    let qe = q.entries();
    let mut score: Score = 0;
    while i < qe.len() && j < doc.len() {
        match qe[i].0.cmp(&doc[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                score += u64::from(qe[i].1) * u64::from(doc[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    score
}
