//! Effectiveness metrics over TREC runs and qrels, relative ratios and
//! significance testing.
//!
//! Queries are taken from the qrels. A query without any relevant document
//! (or with zero ideal DCG) is excluded from the mean and counted; a judged
//! query missing from the run scores 0.

mod ttest;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

pub use ttest::{
    bonferroni_significant, ln_gamma, paired_ttest, regularized_incomplete_beta,
    student_t_two_sided, SignificanceResult,
};

use crate::error::{Error, Result};
use crate::ingest::{Qrels, Run, RunEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gain {
    #[default]
    Linear,
    Exponential,
}

impl Gain {
    fn apply(self, grade: u32) -> f64 {
        match self {
            Gain::Linear => f64::from(grade),
            Gain::Exponential => 2f64.powi(grade as i32) - 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mrr { cutoff: usize },
    Recall { cutoff: usize },
    Ndcg { cutoff: usize },
}

impl Metric {
    pub fn cutoff(&self) -> usize {
        match *self {
            Metric::Mrr { cutoff } | Metric::Recall { cutoff } | Metric::Ndcg { cutoff } => cutoff,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Mrr { .. } => "mrr",
            Metric::Recall { .. } => "recall",
            Metric::Ndcg { .. } => "ndcg",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.name(), self.cutoff())
    }
}

impl FromStr for Metric {
    type Err = Error;

    /// Parses `mrr@10`, `recall@1000`, `ndcg@10`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, cutoff) = s
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("metric `{s}` needs an @cutoff")))?;
        let cutoff: usize = cutoff
            .parse()
            .ok()
            .filter(|&c| c > 0)
            .ok_or_else(|| Error::Config(format!("bad cutoff in metric `{s}`")))?;
        match name.to_ascii_lowercase().as_str() {
            "mrr" | "rr" => Ok(Metric::Mrr { cutoff }),
            "recall" | "r" => Ok(Metric::Recall { cutoff }),
            "ndcg" => Ok(Metric::Ndcg { cutoff }),
            _ => Err(Error::Config(format!("unknown metric `{name}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: Metric,
    pub per_query: BTreeMap<String, f64>,
    /// Arithmetic mean of `per_query` (pairwise summation); 0 when empty.
    pub mean: f64,
    /// Judged queries left out because they have nothing relevant.
    pub excluded: usize,
}

impl MetricReport {
    pub fn n_queries(&self) -> usize {
        self.per_query.len()
    }

    fn from_values(metric: Metric, per_query: BTreeMap<String, f64>, excluded: usize) -> Self {
        let values: Vec<f64> = per_query.values().copied().collect();
        let mean = if values.is_empty() {
            0.0
        } else {
            pairwise_sum(&values) / values.len() as f64
        };
        Self {
            metric,
            per_query,
            mean,
            excluded,
        }
    }
}

/// Sum with a fixed pairwise reduction tree.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1..=8 => values.iter().sum(),
        n => {
            let (l, r) = values.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

fn ranked<'a>(run: &'a Run, qid: &str) -> &'a [RunEntry] {
    run.get(qid).unwrap_or(&[])
}

pub fn mrr_at(run: &Run, qrels: &Qrels, cutoff: usize, min_grade: u32) -> MetricReport {
    let mut per_query = BTreeMap::new();
    let mut excluded = 0;
    for (qid, judged) in qrels.queries() {
        if !judged.values().any(|&g| g >= min_grade) {
            excluded += 1;
            continue;
        }
        let rr = ranked(run, qid)
            .iter()
            .take(cutoff)
            .position(|e| judged.get(&e.doc_id).is_some_and(|&g| g >= min_grade))
            .map_or(0.0, |i| 1.0 / (i + 1) as f64);
        per_query.insert(qid.to_string(), rr);
    }
    MetricReport::from_values(Metric::Mrr { cutoff }, per_query, excluded)
}

pub fn recall_at(run: &Run, qrels: &Qrels, cutoff: usize, min_grade: u32) -> MetricReport {
    let mut per_query = BTreeMap::new();
    let mut excluded = 0;
    for (qid, judged) in qrels.queries() {
        let relevant = judged.values().filter(|&&g| g >= min_grade).count();
        if relevant == 0 {
            excluded += 1;
            continue;
        }
        let found = ranked(run, qid)
            .iter()
            .take(cutoff)
            .filter(|e| judged.get(&e.doc_id).is_some_and(|&g| g >= min_grade))
            .count();
        per_query.insert(qid.to_string(), found as f64 / relevant as f64);
    }
    MetricReport::from_values(Metric::Recall { cutoff }, per_query, excluded)
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

pub fn ndcg_at(run: &Run, qrels: &Qrels, cutoff: usize, gain: Gain) -> MetricReport {
    let mut per_query = BTreeMap::new();
    let mut excluded = 0;
    for (qid, judged) in qrels.queries() {
        let mut ideal: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, &g)| gain.apply(g) / discount(i + 1))
            .sum();
        if idcg <= 0.0 {
            excluded += 1;
            continue;
        }
        let dcg: f64 = ranked(run, qid)
            .iter()
            .take(cutoff)
            .enumerate()
            .map(|(i, e)| gain.apply(judged.get(&e.doc_id).copied().unwrap_or(0)) / discount(i + 1))
            .sum();
        per_query.insert(qid.to_string(), dcg / idcg);
    }
    MetricReport::from_values(Metric::Ndcg { cutoff }, per_query, excluded)
}

/// Evaluates one metric; MRR and recall count grade `>= 1` as relevant.
pub fn evaluate(run: &Run, qrels: &Qrels, metric: Metric, gain: Gain) -> MetricReport {
    match metric {
        Metric::Mrr { cutoff } => mrr_at(run, qrels, cutoff, 1),
        Metric::Recall { cutoff } => recall_at(run, qrels, cutoff, 1),
        Metric::Ndcg { cutoff } => ndcg_at(run, qrels, cutoff, gain),
    }
}

/// `pruned / baseline`; `None` when the baseline is not positive.
pub fn relative_effectiveness(pruned_mean: f64, baseline_mean: f64) -> Option<f64> {
    (baseline_mean > 0.0).then(|| pruned_mean / baseline_mean)
}

/// `baseline / pruned` latency ratio.
pub fn speedup(baseline_ms: f64, pruned_ms: f64) -> Result<f64> {
    if !(baseline_ms > 0.0 && pruned_ms > 0.0) {
        return Err(Error::Domain(format!(
            "latencies must be positive ({baseline_ms}, {pruned_ms})"
        )));
    }
    Ok(baseline_ms / pruned_ms)
}

/// One decimal with a multiplication sign, e.g. `2.1×`.
pub fn format_speedup(ratio: f64) -> String {
    format!("{ratio:.1}×")
}

/// Paired comparison of two reports for the same metric over their shared queries.
pub fn compare_reports(
    system: &MetricReport,
    baseline: &MetricReport,
    alpha: f64,
    corrections: usize,
) -> Result<SignificanceResult> {
    let (a, b): (Vec<f64>, Vec<f64>) = system
        .per_query
        .iter()
        .filter_map(|(q, &v)| baseline.per_query.get(q).map(|&w| (v, w)))
        .unzip();
    paired_ttest(&a, &b, alpha, corrections)
}

/// Writes `metric,cutoff,mean,n_queries[,base_mean,t_statistic,p_value,significant]`.
pub fn write_report_csv<W: Write>(
    mut w: W,
    reports: &[MetricReport],
    comparisons: Option<&[(MetricReport, SignificanceResult)]>,
) -> Result<()> {
    if comparisons.is_some() {
        writeln!(w, "metric,cutoff,mean,n_queries,base_mean,t_statistic,p_value,significant")?;
    } else {
        writeln!(w, "metric,cutoff,mean,n_queries")?;
    }
    for (i, r) in reports.iter().enumerate() {
        write!(
            w,
            "{},{},{:.6},{}",
            r.metric.name(),
            r.metric.cutoff(),
            r.mean,
            r.n_queries()
        )?;
        if let Some(cmp) = comparisons {
            let (base, sig) = &cmp[i];
            write!(
                w,
                ",{:.6},{:.6},{:.6},{}",
                base.mean, sig.t_statistic, sig.p_value, sig.significant
            )?;
        }
        writeln!(w)?;
    }
    Ok(())
}
