//! Latency measurement and the pruning trade-off sweep.

pub mod corpus;

use std::hint::black_box;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Deserialize;

pub use corpus::{gen_corpus, write_corpus, Corpus, CorpusSpec};

use crate::error::{Error, Result};
use crate::eval::{self, relative_effectiveness, Gain, Metric};
use crate::index::{index_stats, quantize_index, InvertedIndex};
use crate::ingest::{ExpansionFlags, Qrels, RawQuery};
use crate::prune::{pruned_index, PruneConfig};
use crate::search::{batch_search, search, Algorithm};
use crate::types::{ForwardIndex, QuantConfig, WeightedQuery};

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    /// Every timed execution, query-major.
    pub samples_ms: Vec<f64>,
    pub mean_ms: f64,
    pub warmup: usize,
    pub repeats: usize,
}

impl LatencyReport {
    /// Mean timed latency of each query, in input order.
    pub fn per_query_ms(&self) -> Vec<f64> {
        self.samples_ms
            .chunks(self.repeats)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// Runs each query `warmup` times untimed, then `repeats` timed times, on
/// the calling thread.
pub fn measure_latency(
    index: &InvertedIndex,
    queries: &[WeightedQuery],
    k: usize,
    algorithm: Algorithm,
    warmup: usize,
    repeats: usize,
) -> Result<LatencyReport> {
    if queries.is_empty() {
        return Err(Error::Config("no queries to time; mean latency is undefined".into()));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let mut samples_ms = Vec::with_capacity(queries.len() * repeats);
    for q in queries {
        for _ in 0..warmup {
            black_box(search(index, q, k, algorithm)?);
        }
        for _ in 0..repeats {
            let start = Instant::now();
            let ranking = search(index, q, k, algorithm)?;
            samples_ms.push(start.elapsed().as_secs_f64() * 1e3);
            black_box(ranking);
        }
    }
    let mean_ms = eval::pairwise_sum(&samples_ms) / samples_ms.len() as f64;
    Ok(LatencyReport {
        samples_ms,
        mean_ms,
        warmup,
        repeats,
    })
}

/// One entry of a sweep configuration file. `method` is `none` for the
/// unpruned baseline or any name accepted by [`PruneConfig::from_method`].
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SweepEntry {
    pub method: String,
    #[serde(default)]
    pub param: Option<f64>,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default)]
    pub shift: bool,
    #[serde(default)]
    pub label: Option<String>,
}

impl SweepEntry {
    pub fn baseline() -> Self {
        Self {
            method: "none".into(),
            param: None,
            params: Vec::new(),
            shift: false,
            label: None,
        }
    }

    pub fn from_config(cfg: PruneConfig) -> Self {
        let (method, params) = match cfg {
            PruneConfig::TermQuantile { q } => ("term-quantile", vec![q]),
            PruneConfig::DocTopK { k } => ("doc-topk", vec![k as f64]),
            PruneConfig::GlobalThreshold { t, .. } => ("global-threshold", vec![t]),
            PruneConfig::TermMaxLen { max_len } => ("term-maxlen", vec![max_len as f64]),
            PruneConfig::DualThreshold { t_orig, t_exp } => ("dual-threshold", vec![t_orig, t_exp]),
            PruneConfig::LengthScaledQuantile { q_base, pivot } => {
                ("length-scaled", vec![q_base, pivot as f64])
            }
        };
        Self {
            method: method.into(),
            param: None,
            params,
            shift: matches!(cfg, PruneConfig::GlobalThreshold { shift: true, .. }),
            label: None,
        }
    }

    /// `None` for the baseline.
    pub fn config(&self) -> Result<Option<PruneConfig>> {
        if self.method == "none" || self.method == "baseline" {
            return Ok(None);
        }
        let mut params: Vec<f64> = self.param.into_iter().collect();
        params.extend(&self.params);
        PruneConfig::from_method(&self.method, &params, self.shift).map(Some)
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match self.config() {
            Ok(Some(cfg)) => cfg.to_string(),
            Ok(None) => "baseline".into(),
            Err(_) => self.method.clone(),
        }
    }
}

pub fn parse_sweep_configs(json: &str) -> Result<Vec<SweepEntry>> {
    serde_json::from_str(json).map_err(|e| Error::Config(format!("sweep config: {e}")))
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub k: usize,
    pub algorithm: Algorithm,
    pub warmup: usize,
    pub repeats: usize,
    pub quant: QuantConfig,
    pub gain: Gain,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            k: crate::search::DEFAULT_K,
            algorithm: Algorithm::MaxScore,
            warmup: 1,
            repeats: 3,
            quant: QuantConfig::default(),
            gain: Gain::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub label: String,
    pub latency_ms: f64,
    pub speedup: f64,
    pub mrr10: f64,
    pub rel_mrr10: f64,
    pub recall: f64,
    pub rel_recall: f64,
    pub ndcg10: f64,
    pub rel_ndcg10: f64,
    pub postings: usize,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TradeoffTable {
    pub recall_cutoff: usize,
    pub rows: Vec<TradeoffRow>,
    /// `(label, reason)` for configurations that failed.
    pub failures: Vec<(String, String)>,
}

impl TradeoffTable {
    pub fn row(&self, label: &str) -> Option<&TradeoffRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "label,latency_ms,speedup,mrr10,rel_mrr10,recall_at_k,rel_recall,ndcg10,rel_ndcg10,postings,bytes"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                r.label,
                r.latency_ms,
                r.speedup,
                r.mrr10,
                r.rel_mrr10,
                r.recall,
                r.rel_recall,
                r.ndcg10,
                r.rel_ndcg10,
                r.postings,
                r.bytes
            )?;
        }
        Ok(())
    }
}

struct Measured {
    latency_ms: f64,
    mrr10: f64,
    recall: f64,
    ndcg10: f64,
    postings: usize,
    bytes: usize,
}

fn measure_config(
    base: &ForwardIndex,
    cfg: Option<&PruneConfig>,
    flags: Option<&ExpansionFlags>,
    queries: &[WeightedQuery],
    qrels: &Qrels,
    opts: &SweepOptions,
    global_max: Option<f64>,
) -> Result<Measured> {
    let index = quantize_index(pruned_index(base, cfg, flags, &opts.quant, global_max)?)?;
    let stats = index_stats(&index);
    let run = batch_search(&index, queries, opts.k, opts.algorithm)?;
    let mrr10 = eval::evaluate(&run, qrels, Metric::Mrr { cutoff: 10 }, opts.gain).mean;
    let recall = eval::evaluate(&run, qrels, Metric::Recall { cutoff: opts.k }, opts.gain).mean;
    let ndcg10 = eval::evaluate(&run, qrels, Metric::Ndcg { cutoff: 10 }, opts.gain).mean;
    let latency = measure_latency(&index, queries, opts.k, opts.algorithm, opts.warmup, opts.repeats)?;
    Ok(Measured {
        latency_ms: latency.mean_ms,
        mrr10,
        recall,
        ndcg10,
        postings: stats.num_postings,
        bytes: stats.serialized_bytes,
    })
}

/// Builds, prunes, quantizes, searches, evaluates and times every entry.
///
/// The first baseline entry is measured first; every index is quantized on
/// the baseline's scale. A failing entry is recorded in `failures` and the
/// sweep continues.
pub fn sweep(
    base: &ForwardIndex,
    entries: &[SweepEntry],
    flags: Option<&ExpansionFlags>,
    queries: &[RawQuery],
    qrels: &Qrels,
    opts: &SweepOptions,
) -> Result<TradeoffTable> {
    let configs = entries
        .iter()
        .map(|e| e.config().map(|c| (e.label(), c)))
        .collect::<Result<Vec<_>>>()?;
    let baseline_pos = configs
        .iter()
        .position(|(_, c)| c.is_none())
        .ok_or_else(|| Error::Config("sweep needs a baseline entry (method \"none\")".into()))?;
    let scaled: Vec<WeightedQuery> = queries.par_iter().map(|q| q.scaled(&opts.quant)).collect();
    let global_max = base.max_weight();

    let baseline = measure_config(base, None, flags, &scaled, qrels, opts, global_max)?;
    let mut table = TradeoffTable {
        recall_cutoff: opts.k,
        ..TradeoffTable::default()
    };
    let rel = |v: f64, b: f64| relative_effectiveness(v, b).unwrap_or(f64::NAN);

    for (i, (label, cfg)) in configs.iter().enumerate() {
        let measured = if i == baseline_pos {
            Ok(None)
        } else {
            measure_config(base, cfg.as_ref(), flags, &scaled, qrels, opts, global_max).map(Some)
        };
        match measured {
            Ok(None) => table.rows.push(TradeoffRow {
                label: label.clone(),
                latency_ms: baseline.latency_ms,
                speedup: 1.0,
                mrr10: baseline.mrr10,
                rel_mrr10: 1.0,
                recall: baseline.recall,
                rel_recall: 1.0,
                ndcg10: baseline.ndcg10,
                rel_ndcg10: 1.0,
                postings: baseline.postings,
                bytes: baseline.bytes,
            }),
            Ok(Some(m)) => table.rows.push(TradeoffRow {
                label: label.clone(),
                latency_ms: m.latency_ms,
                speedup: eval::speedup(baseline.latency_ms, m.latency_ms).unwrap_or(f64::NAN),
                mrr10: m.mrr10,
                rel_mrr10: rel(m.mrr10, baseline.mrr10),
                recall: m.recall,
                rel_recall: rel(m.recall, baseline.recall),
                ndcg10: m.ndcg10,
                rel_ndcg10: rel(m.ndcg10, baseline.ndcg10),
                postings: m.postings,
                bytes: m.bytes,
            }),
            Err(e) => table.failures.push((label.clone(), e.to_string())),
        }
    }
    Ok(table)
}
