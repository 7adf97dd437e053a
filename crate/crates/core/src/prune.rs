//! Static pruning.
//!
//! Document-side strategies ([`prune_doc_topk`], [`prune_dual_threshold`]) act on
//! the forward index before inversion. List-side strategies act on an
//! unquantized inverted index. None of them ever changes a surviving weight,
//! except the shifted global threshold.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{build_index, InvertedIndex, PostingList};
use crate::ingest::ExpansionFlags;
use crate::types::{ForwardIndex, ImpactVector, QuantConfig};

/// Quantile sweep for term-centric pruning.
pub const TERM_QUANTILE_SWEEP: [f64; 4] = [0.50, 0.75, 0.80, 0.85];
/// Per-document sizes for document-centric pruning.
pub const DOC_TOPK_SWEEP: [usize; 5] = [4, 8, 16, 32, 64];
/// Global thresholds used for SPLADE-style raw scores.
pub const GLOBAL_THRESHOLD_SWEEP: [f64; 4] = [0.50, 0.75, 1.00, 1.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum PruneConfig {
    TermQuantile { q: f64 },
    DocTopK { k: usize },
    GlobalThreshold { t: f64, shift: bool },
    TermMaxLen { max_len: usize },
    DualThreshold { t_orig: f64, t_exp: f64 },
    LengthScaledQuantile { q_base: f64, pivot: usize },
}

impl PruneConfig {
    pub const METHODS: [&'static str; 6] = [
        "term-quantile",
        "doc-topk",
        "global-threshold",
        "term-maxlen",
        "dual-threshold",
        "length-scaled",
    ];

    /// Builds a config from a method name and its positional parameters:
    ///
    /// | method | params |
    /// | --- | --- |
    /// | `term-quantile` | `q` |
    /// | `doc-topk` | `k` |
    /// | `global-threshold` | `t` (plus the `shift` flag) |
    /// | `term-maxlen` | `L` |
    /// | `dual-threshold` | `t_orig, t_exp` |
    /// | `length-scaled` | `q_base, pivot` |
    pub fn from_method(method: &str, params: &[f64], shift: bool) -> Result<Self> {
        let want = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "method `{method}` takes {n} parameter(s), got {}",
                    params.len()
                )))
            }
        };
        let count = |v: f64, name: &str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{name} must be a positive integer, got {v}")))
            }
        };
        let cfg = match method {
            "term-quantile" => {
                want(1)?;
                PruneConfig::TermQuantile { q: params[0] }
            }
            "doc-topk" => {
                want(1)?;
                PruneConfig::DocTopK {
                    k: count(params[0], "k")?,
                }
            }
            "global-threshold" => {
                want(1)?;
                PruneConfig::GlobalThreshold {
                    t: params[0],
                    shift,
                }
            }
            "term-maxlen" => {
                want(1)?;
                PruneConfig::TermMaxLen {
                    max_len: count(params[0], "L")?,
                }
            }
            "dual-threshold" => {
                want(2)?;
                PruneConfig::DualThreshold {
                    t_orig: params[0],
                    t_exp: params[1],
                }
            }
            "length-scaled" => {
                want(2)?;
                PruneConfig::LengthScaledQuantile {
                    q_base: params[0],
                    pivot: count(params[1], "pivot")?,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown pruning method `{other}` (expected one of {})",
                    Self::METHODS.join(", ")
                )))
            }
        };
        if shift && !matches!(cfg, PruneConfig::GlobalThreshold { .. }) {
            return Err(Error::Config("--shift only applies to global-threshold".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match *self {
            PruneConfig::TermQuantile { q } if !(0.0..1.0).contains(&q) => {
                bad(format!("quantile must be in [0, 1), got {q}"))
            }
            PruneConfig::DocTopK { k: 0 } => bad("k must be at least 1".into()),
            PruneConfig::GlobalThreshold { t, .. } if !(t >= 0.0 && t.is_finite()) => {
                bad(format!("threshold must be non-negative, got {t}"))
            }
            PruneConfig::TermMaxLen { max_len: 0 } => bad("L must be at least 1".into()),
            PruneConfig::DualThreshold { t_orig, t_exp }
                if t_orig.is_nan() || t_exp.is_nan() =>
            {
                bad("dual thresholds must be numbers".into())
            }
            PruneConfig::LengthScaledQuantile { q_base, .. } if !(0.0..1.0).contains(&q_base) => {
                bad(format!("q_base must be in [0, 1), got {q_base}"))
            }
            PruneConfig::LengthScaledQuantile { pivot: 0, .. } => {
                bad("pivot must be at least 1".into())
            }
            _ => Ok(()),
        }
    }

    /// True for strategies applied to documents before inversion.
    pub fn is_forward(&self) -> bool {
        matches!(
            self,
            PruneConfig::DocTopK { .. } | PruneConfig::DualThreshold { .. }
        )
    }
}

impl fmt::Display for PruneConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PruneConfig::TermQuantile { q } => write!(f, "T-{q}"),
            PruneConfig::DocTopK { k } => write!(f, "D-{k}"),
            PruneConfig::GlobalThreshold { t, shift: false } => write!(f, "A-{t}"),
            PruneConfig::GlobalThreshold { t, shift: true } => write!(f, "A-{t}-shift"),
            PruneConfig::TermMaxLen { max_len } => write!(f, "T-maxlen-{max_len}"),
            PruneConfig::DualThreshold { t_orig, t_exp } => write!(f, "dual-{t_orig}-{t_exp}"),
            PruneConfig::LengthScaledQuantile { q_base, pivot } => {
                write!(f, "T-scaled-{q_base}-{pivot}")
            }
        }
    }
}

/// 1-based nearest rank `ceil(q * n)`. The small slack absorbs products such
/// as `0.7 * 10 = 7.000000000000001`.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let r = (q * n as f64 - 1e-9).ceil();
    if r <= 0.0 {
        0
    } else {
        (r as usize).min(n)
    }
}

fn quantile_filter(list: &PostingList, q: f64) -> PostingList {
    let n = list.len();
    let rank = nearest_rank(q, n);
    if rank == 0 {
        return list.clone();
    }
    let mut sorted = list.raw_impacts().to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[rank - 1];
    let (docs, impacts) = list.iter_raw().filter(|&(_, w)| w > threshold).unzip();
    PostingList::raw(list.term, docs, impacts)
}

/// Per list, removes every posting whose impact is `<=` the nearest-rank
/// `q`-quantile of that list's raw impacts.
pub fn prune_term_quantile(index: &InvertedIndex, q: f64) -> Result<InvertedIndex> {
    PruneConfig::TermQuantile { q }.validate()?;
    index.map_lists(|list| quantile_filter(list, q))
}

/// Keeps each document's `k` highest-weight entries; ties go to the lower term id.
pub fn prune_doc_topk(fwd: &ForwardIndex, k: usize) -> Result<ForwardIndex> {
    PruneConfig::DocTopK { k }.validate()?;
    let docs = fwd
        .docs
        .par_iter()
        .map(|doc| {
            if doc.len() <= k {
                return doc.clone();
            }
            let mut order: Vec<(crate::types::TermId, f64)> = doc.entries().to_vec();
            order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            order.truncate(k);
            order.sort_by_key(|&(t, _)| t);
            ImpactVector::from_sorted_unchecked(doc.doc_id.clone(), order)
        })
        .collect();
    Ok(ForwardIndex {
        vocab: fwd.vocab.clone(),
        docs,
    })
}

/// Removes postings with impact `< t`. With `shift`, survivors become
/// `impact - t` and any that reach zero are removed as well.
pub fn prune_global_threshold(index: &InvertedIndex, t: f64, shift: bool) -> Result<InvertedIndex> {
    PruneConfig::GlobalThreshold { t, shift }.validate()?;
    index.map_lists(|list| {
        let (docs, impacts) = list
            .iter_raw()
            .filter(|&(_, w)| w >= t)
            .map(|(d, w)| if shift { (d, w - t) } else { (d, w) })
            .filter(|&(_, w)| w > 0.0)
            .unzip();
        PostingList::raw(list.term, docs, impacts)
    })
}

/// Keeps the `max_len` highest-impact postings of each list; ties go to the
/// lower doc number.
pub fn prune_term_maxlen(index: &InvertedIndex, max_len: usize) -> Result<InvertedIndex> {
    PruneConfig::TermMaxLen { max_len }.validate()?;
    index.map_lists(|list| {
        if list.len() <= max_len {
            return list.clone();
        }
        let mut picked: Vec<(u32, f64)> = list.iter_raw().collect();
        picked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        picked.truncate(max_len);
        picked.sort_by_key(|&(d, _)| d);
        let (docs, impacts) = picked.into_iter().unzip();
        PostingList::raw(list.term, docs, impacts)
    })
}

/// Keeps an entry iff its weight is `>= t_exp` for expansion terms and
/// `>= t_orig` otherwise.
pub fn prune_dual_threshold(
    fwd: &ForwardIndex,
    flags: Option<&ExpansionFlags>,
    t_orig: f64,
    t_exp: f64,
) -> Result<ForwardIndex> {
    PruneConfig::DualThreshold { t_orig, t_exp }.validate()?;
    let flags = flags.ok_or(Error::MissingExpansionFlags)?;
    let docs = fwd
        .docs
        .par_iter()
        .map(|doc| {
            let mut doc = doc.clone();
            let id = doc.doc_id.clone();
            doc.retain(|t, w| {
                let threshold = if flags.is_expanded(&id, t) { t_exp } else { t_orig };
                w >= threshold
            });
            doc
        })
        .collect();
    Ok(ForwardIndex {
        vocab: fwd.vocab.clone(),
        docs,
    })
}

/// Quantile applied to a list of length `n`: `min(0.99, q_base * n / pivot)`
/// when `n > pivot`, otherwise 0.
pub fn length_scaled_q(q_base: f64, pivot: usize, n: usize) -> f64 {
    if n > pivot {
        (q_base * n as f64 / pivot as f64).min(0.99)
    } else {
        0.0
    }
}

pub fn prune_length_scaled_quantile(
    index: &InvertedIndex,
    q_base: f64,
    pivot: usize,
) -> Result<InvertedIndex> {
    PruneConfig::LengthScaledQuantile { q_base, pivot }.validate()?;
    index.map_lists(|list| quantile_filter(list, length_scaled_q(q_base, pivot, list.len())))
}

/// Applies a document-side strategy; list-side configs return the input unchanged.
pub fn apply_forward(
    fwd: &ForwardIndex,
    cfg: &PruneConfig,
    flags: Option<&ExpansionFlags>,
) -> Result<ForwardIndex> {
    match *cfg {
        PruneConfig::DocTopK { k } => prune_doc_topk(fwd, k),
        PruneConfig::DualThreshold { t_orig, t_exp } => {
            prune_dual_threshold(fwd, flags, t_orig, t_exp)
        }
        _ => Ok(fwd.clone()),
    }
}

/// Applies a list-side strategy; document-side configs return the input unchanged.
pub fn apply_index(index: &InvertedIndex, cfg: &PruneConfig) -> Result<InvertedIndex> {
    match *cfg {
        PruneConfig::TermQuantile { q } => prune_term_quantile(index, q),
        PruneConfig::GlobalThreshold { t, shift } => prune_global_threshold(index, t, shift),
        PruneConfig::TermMaxLen { max_len } => prune_term_maxlen(index, max_len),
        PruneConfig::LengthScaledQuantile { q_base, pivot } => {
            prune_length_scaled_quantile(index, q_base, pivot)
        }
        PruneConfig::DocTopK { .. } | PruneConfig::DualThreshold { .. } => {
            if index.is_quantized() {
                Err(Error::RequiresRaw)
            } else {
                Ok(index.clone())
            }
        }
    }
}

/// Forward pruning, inversion and list pruning in pipeline order, producing an
/// unquantized index. `global_max`, when given, pins the quantization scale.
pub fn pruned_index(
    fwd: &ForwardIndex,
    cfg: Option<&PruneConfig>,
    flags: Option<&ExpansionFlags>,
    quant: &QuantConfig,
    global_max: Option<f64>,
) -> Result<InvertedIndex> {
    let (index, cfg) = match cfg {
        None => (build_index(fwd, quant)?, None),
        Some(cfg) if cfg.is_forward() => {
            (build_index(&apply_forward(fwd, cfg, flags)?, quant)?, None)
        }
        Some(cfg) => (build_index(fwd, quant)?, Some(cfg)),
    };
    let index = match global_max {
        Some(g) => index.with_global_max(g)?,
        None => index,
    };
    match cfg {
        Some(cfg) => apply_index(&index, cfg),
        None => Ok(index),
    }
}
