//! Generators and independent reference implementations shared by the
//! integration tests. Nothing here calls into the code under test except to
//! construct inputs.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spix::ingest::ExpansionFlags;
use spix::{ForwardIndex, ImpactVector, InvertedIndex, PruneConfig, Qrels, Run, TermId, VocabMap, WeightedQuery};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random forward index; each document gets `0..=max_terms` distinct terms.
/// With `coarse`, weights come from a small grid so ties are common.
pub fn random_forward(rng: &mut ChaCha8Rng, docs: usize, vocab: usize, max_terms: usize, coarse: bool) -> ForwardIndex {
    let v: VocabMap = (0..vocab).map(|i| format!("t{i}")).collect();
    let docs = (0..docs)
        .map(|d| {
            let n = rng.random_range(0..=max_terms.min(vocab));
            let entries = sample(rng, vocab, n)
                .into_iter()
                .map(|t| {
                    let w = if coarse {
                        rng.random_range(1..=12) as f64 * 0.25
                    } else {
                        rng.random_range(0.001..4.0)
                    };
                    (TermId(t as u32), w)
                })
                .collect();
            ImpactVector::new(format!("D{d}"), entries).unwrap()
        })
        .collect();
    ForwardIndex { vocab: v, docs }
}

/// Queries of 1..=8 terms with integer weights; a few terms may repeat the
/// same id to exercise merging.
pub fn random_queries(rng: &mut ChaCha8Rng, vocab: usize, n: usize) -> Vec<WeightedQuery> {
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=8usize.min(vocab));
            let entries = sample(rng, vocab, len)
                .into_iter()
                .map(|t| (TermId(t as u32), rng.random_range(1..=400)))
                .collect();
            WeightedQuery::new(format!("Q{i}"), entries).unwrap()
        })
        .collect()
}

/// Random expansion flags marking roughly a third of each document's terms.
pub fn random_flags(rng: &mut ChaCha8Rng, fwd: &ForwardIndex) -> ExpansionFlags {
    let mut flags = ExpansionFlags::default();
    for doc in &fwd.docs {
        for &(t, _) in doc.entries() {
            if rng.random_bool(0.33) {
                flags.insert(&doc.doc_id, t);
            }
        }
    }
    flags
}

/// Every strategy with a spread of parameters.
pub fn all_prune_configs() -> Vec<PruneConfig> {
    let mut out = Vec::new();
    for q in [0.0, 0.3, 0.5, 0.75, 0.85, 0.99] {
        out.push(PruneConfig::TermQuantile { q });
    }
    for k in [1, 2, 4, 8, 16, 64] {
        out.push(PruneConfig::DocTopK { k });
    }
    for t in [0.5, 0.75, 1.0, 1.25, 2.5] {
        out.push(PruneConfig::GlobalThreshold { t, shift: false });
        out.push(PruneConfig::GlobalThreshold { t, shift: true });
    }
    for max_len in [1, 3, 10, 50] {
        out.push(PruneConfig::TermMaxLen { max_len });
    }
    for (t_orig, t_exp) in [(0.0, 1.0), (0.5, 1.5), (1.0, 0.25)] {
        out.push(PruneConfig::DualThreshold { t_orig, t_exp });
    }
    for (q_base, pivot) in [(0.5, 5), (0.2, 20), (0.9, 1)] {
        out.push(PruneConfig::LengthScaledQuantile { q_base, pivot });
    }
    out
}

/// `(term, doc number)` pairs of a raw index.
pub fn posting_set(index: &InvertedIndex) -> BTreeSet<(u32, u32)> {
    index
        .lists
        .iter()
        .flat_map(|l| l.doc_ids().iter().map(move |&d| (l.term.0, d)))
        .collect()
}

/// Raw postings as `(term, doc number, weight)` straight from the forward index.
pub fn forward_postings(fwd: &ForwardIndex) -> Vec<(u32, u32, f64)> {
    let mut out: Vec<(u32, u32, f64)> = fwd
        .docs
        .iter()
        .enumerate()
        .flat_map(|(d, doc)| doc.entries().iter().map(move |&(t, w)| (t.0, d as u32, w)))
        .collect();
    out.sort_by_key(|p| (p.0, p.1));
    out
}

pub fn index_postings(index: &InvertedIndex) -> Vec<(u32, u32, f64)> {
    let mut out: Vec<(u32, u32, f64)> = index
        .lists
        .iter()
        .flat_map(|l| l.iter_raw().map(move |(d, w)| (l.term.0, d, w)))
        .collect();
    out.sort_by_key(|p| (p.0, p.1));
    out
}

/// Brute-force filter: what each strategy should leave, computed from the
/// posting triples alone by sorting and counting.
pub fn reference_prune(
    fwd: &ForwardIndex,
    cfg: &PruneConfig,
    flags: &ExpansionFlags,
) -> Vec<(u32, u32, f64)> {
    let all = forward_postings(fwd);
    let by_term = |all: &[(u32, u32, f64)]| {
        let mut m: HashMap<u32, Vec<(u32, u32, f64)>> = HashMap::new();
        for &p in all {
            m.entry(p.0).or_default().push(p);
        }
        m
    };
    let by_doc = |all: &[(u32, u32, f64)]| {
        let mut m: HashMap<u32, Vec<(u32, u32, f64)>> = HashMap::new();
        for &p in all {
            m.entry(p.1).or_default().push(p);
        }
        m
    };
    let quantile_keep = |list: &[(u32, u32, f64)], q: f64| -> Vec<(u32, u32, f64)> {
        let n = list.len();
        // Smallest r with r >= q*n, found by counting instead of ceil().
        let mut r = 0usize;
        while (r as f64) < q * n as f64 - 1e-9 {
            r += 1;
        }
        if r == 0 {
            return list.to_vec();
        }
        let mut ws: Vec<f64> = list.iter().map(|p| p.2).collect();
        ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let thr = ws[r.min(n) - 1];
        list.iter().copied().filter(|p| p.2 > thr).collect()
    };
    let mut out: Vec<(u32, u32, f64)> = match *cfg {
        PruneConfig::TermQuantile { q } => by_term(&all)
            .values()
            .flat_map(|l| quantile_keep(l, q))
            .collect(),
        PruneConfig::LengthScaledQuantile { q_base, pivot } => by_term(&all)
            .values()
            .flat_map(|l| {
                let n = l.len();
                let q = if n > pivot { (q_base * n as f64 / pivot as f64).min(0.99) } else { 0.0 };
                quantile_keep(l, q)
            })
            .collect(),
        PruneConfig::DocTopK { k } => by_doc(&all)
            .values()
            .flat_map(|l| {
                let mut l = l.clone();
                l.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
                l.into_iter().take(k)
            })
            .collect(),
        PruneConfig::TermMaxLen { max_len } => by_term(&all)
            .values()
            .flat_map(|l| {
                let mut l = l.clone();
                l.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.1.cmp(&b.1)));
                l.into_iter().take(max_len)
            })
            .collect(),
        PruneConfig::GlobalThreshold { t, shift } => all
            .iter()
            .filter(|p| p.2 >= t)
            .map(|&(a, b, w)| (a, b, if shift { w - t } else { w }))
            .filter(|p| p.2 > 0.0)
            .collect(),
        PruneConfig::DualThreshold { t_orig, t_exp } => all
            .iter()
            .copied()
            .filter(|&(t, d, w)| {
                let expanded = flags.is_expanded(&fwd.docs[d as usize].doc_id, TermId(t));
                w >= if expanded { t_exp } else { t_orig }
            })
            .collect(),
    };
    out.sort_by_key(|p| (p.0, p.1));
    out
}

/// Random run and qrels over a small doc pool, including unjudged queries,
/// queries with only non-relevant judgments and empty rankings.
pub fn random_run_qrels(rng: &mut ChaCha8Rng) -> (Run, Qrels) {
    let pool = rng.random_range(5..60usize);
    let nq = rng.random_range(1..12usize);
    let mut run = Run::new();
    let mut qrels = Qrels::new();
    for q in 0..nq {
        let qid = format!("q{q}");
        let len = rng.random_range(0..=pool.min(30));
        let docs: Vec<(String, f64)> = sample(rng, pool, len)
            .into_iter()
            .enumerate()
            .map(|(i, d)| (format!("d{d}"), (len - i) as f64))
            .collect();
        if rng.random_bool(0.9) {
            run.insert_ranked(&qid, docs);
        }
        if rng.random_bool(0.9) {
            let judged = rng.random_range(1..=pool.min(15));
            for d in sample(rng, pool, judged) {
                qrels.insert(&qid, &format!("d{d}"), rng.random_range(0..=3));
            }
        }
    }
    (run, qrels)
}

/// Reference metrics computed from scratch over plain vectors.
pub struct RefMetrics {
    pub mrr: Vec<f64>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

pub fn reference_metrics(run: &Run, qrels: &Qrels, mrr_k: usize, recall_k: usize, ndcg_k: usize, exp_gain: bool) -> RefMetrics {
    let mut out = RefMetrics {
        mrr: Vec::new(),
        recall: Vec::new(),
        ndcg: Vec::new(),
    };
    for (qid, judged) in qrels.queries() {
        let ranked: Vec<&str> = run
            .get(qid)
            .map(|r| r.iter().map(|e| e.doc_id.as_str()).collect())
            .unwrap_or_default();
        let grade = |d: &str| -> u32 { judged.get(d).copied().unwrap_or(0) };
        let n_rel = judged.values().filter(|&&g| g >= 1).count();
        if n_rel > 0 {
            let mut rr = 0.0;
            for (i, d) in ranked.iter().enumerate() {
                if i >= mrr_k {
                    break;
                }
                if grade(d) >= 1 {
                    rr = 1.0 / (i as f64 + 1.0);
                    break;
                }
            }
            out.mrr.push(rr);
            let hit = ranked.iter().take(recall_k).filter(|d| grade(d) >= 1).count();
            out.recall.push(hit as f64 / n_rel as f64);
        }
        let g = |x: u32| if exp_gain { 2f64.powi(x as i32) - 1.0 } else { x as f64 };
        let dcg = |grades: &[u32]| -> f64 {
            grades
                .iter()
                .take(ndcg_k)
                .enumerate()
                .map(|(i, &x)| g(x) / (i as f64 + 2.0).ln() * std::f64::consts::LN_2)
                .sum()
        };
        let mut ideal: Vec<u32> = judged.values().copied().collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg = dcg(&ideal);
        if idcg > 0.0 {
            let got: Vec<u32> = ranked.iter().map(|d| grade(d)).collect();
            out.ndcg.push(dcg(&got) / idcg);
        }
    }
    out
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Dense random matrix, about half zeros.
pub fn random_matrix(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let b = rng.random_range(1..12usize);
    let v = rng.random_range(1..25usize);
    (0..b)
        .map(|_| {
            (0..v)
                .map(|_| if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..5.0) })
                .collect()
        })
        .collect()
}

/// Reference sparsity quantities over a row-major `Vec<Vec<f64>>`,
/// accumulated row by row rather than column by column.
pub struct RefSparsity {
    pub p: Vec<f64>,
    pub flops: f64,
    pub mse: f64,
    pub q: Vec<f64>,
    pub kl: Vec<f64>,
    pub c: Vec<f64>,
    pub dfr: Vec<f64>,
}

pub fn reference_sparsity(rows: &[Vec<f64>], tau: f64, k: usize, p_target: f64) -> RefSparsity {
    let b = rows.len() as f64;
    let v = rows[0].len();
    let mut p = vec![0.0; v];
    let mut q = vec![0.0; v];
    let mut c = vec![0.0; v];
    for row in rows {
        for (j, &x) in row.iter().enumerate() {
            p[j] += x * x / (b * b);
            q[j] += x / (b * (x + tau));
            c[j] += x / (tau + x);
        }
    }
    let p_hat = k as f64 / v as f64;
    let mse = p.iter().map(|pj| (p_hat * p_hat - pj).abs()).sum::<f64>() / v as f64;
    let eps = 1e-12;
    let kl = q
        .iter()
        .map(|&qj| {
            let qc = qj.max(eps).min(1.0 - eps);
            -(p_target * qc.ln() + (1.0 - p_target) * (1.0 - qc).ln())
        })
        .collect();
    let dfr = c.iter().map(|cj| -cj / b * p_target.ln()).collect();
    RefSparsity {
        flops: p.iter().sum(),
        p,
        mse,
        q,
        kl,
        c,
        dfr,
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
