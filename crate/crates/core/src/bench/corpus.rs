//! Seeded synthetic collections with Zipfian term popularity and log-normal
//! weights, plus qrels derived from exact float scoring.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample_weighted;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Zipf};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{build_index, InvertedIndex};
use crate::ingest::{write_qrels, write_vectors, Qrels, RawQuery, VocabMap};
use crate::types::{ForwardIndex, ImpactVector, QuantConfig, TermId};

pub const DOCS_FILE: &str = "vectors.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const QRELS_FILE: &str = "qrels.txt";

/// Documents judged relevant per query; the first gets grade 2, the rest 1.
pub const JUDGED_PER_QUERY: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub num_docs: usize,
    pub vocab_size: usize,
    pub mean_doc_len: usize,
    pub zipf_exponent: f64,
    pub weight_mu: f64,
    pub weight_sigma: f64,
    pub num_queries: usize,
    pub mean_query_len: usize,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            num_docs: 2_000,
            vocab_size: 1_000,
            mean_doc_len: 40,
            zipf_exponent: 1.1,
            weight_mu: -0.5,
            weight_sigma: 0.75,
            num_queries: 50,
            mean_query_len: 6,
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.mean_doc_len == 0 || self.mean_query_len == 0 {
            return Err(Error::Config("vocabulary and lengths must be positive".into()));
        }
        if self.mean_doc_len > self.vocab_size || self.mean_query_len > self.vocab_size {
            return Err(Error::Config(format!(
                "mean length ({}, {}) exceeds vocabulary size {}",
                self.mean_doc_len, self.mean_query_len, self.vocab_size
            )));
        }
        if !(self.zipf_exponent > 0.0) || !(self.weight_sigma > 0.0) || !self.weight_mu.is_finite() {
            return Err(Error::Config("zipf exponent and sigma must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: ForwardIndex,
    pub queries: Vec<RawQuery>,
    pub qrels: Qrels,
}

const QUERY_STREAM_BASE: u64 = 1 << 48;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Sampler {
    vocab_size: usize,
    zipf: Zipf<f64>,
    exponent: f64,
    weights: LogNormal<f64>,
}

impl Sampler {
    fn new(spec: &CorpusSpec) -> Result<Self> {
        let zipf = Zipf::new(spec.vocab_size as f64, spec.zipf_exponent)
            .map_err(|e| Error::Config(e.to_string()))?;
        let weights = LogNormal::new(spec.weight_mu, spec.weight_sigma)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            vocab_size: spec.vocab_size,
            zipf,
            exponent: spec.zipf_exponent,
            weights,
        })
    }

    /// Length uniform on `[ceil(mean/2), mean + (mean - ceil(mean/2))]`, capped at `V`.
    fn length(&self, rng: &mut ChaCha8Rng, mean: usize) -> usize {
        let lo = mean.div_ceil(2);
        let hi = (2 * mean - lo).min(self.vocab_size);
        rng.random_range(lo..=hi.max(lo))
    }

    /// `n` distinct term ids drawn by Zipfian popularity (term 0 most popular).
    fn terms(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<u32> {
        if n * 2 > self.vocab_size {
            let s = self.exponent;
            return sample_weighted(rng, self.vocab_size, |i| 1.0 / ((i + 1) as f64).powf(s), n)
                .expect("valid weights")
                .into_iter()
                .map(|i| i as u32)
                .collect();
        }
        let mut seen = vec![false; self.vocab_size];
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let t = self.zipf.sample(rng) as usize - 1;
            if !seen[t] {
                seen[t] = true;
                out.push(t as u32);
            }
        }
        out
    }

    fn vector(&self, rng: &mut ChaCha8Rng, mean_len: usize) -> Vec<(TermId, f64)> {
        let n = self.length(rng, mean_len);
        let mut entries: Vec<(TermId, f64)> = self
            .terms(rng, n)
            .into_iter()
            .map(|t| (TermId(t), self.weights.sample(rng)))
            .collect();
        entries.sort_by_key(|&(t, _)| t);
        entries
    }
}

fn vocab(spec: &CorpusSpec) -> VocabMap {
    (0..spec.vocab_size).map(|j| format!("t{j}")).collect()
}

pub fn gen_documents(spec: &CorpusSpec) -> Result<ForwardIndex> {
    spec.validate()?;
    let sampler = Sampler::new(spec)?;
    let docs = (0..spec.num_docs)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(spec.seed, i as u64);
            let entries = sampler.vector(&mut rng, spec.mean_doc_len);
            ImpactVector::new(format!("D{i}"), entries)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForwardIndex {
        vocab: vocab(spec),
        docs,
    })
}

pub fn gen_queries(spec: &CorpusSpec) -> Result<Vec<RawQuery>> {
    spec.validate()?;
    let sampler = Sampler::new(spec)?;
    Ok((0..spec.num_queries)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(spec.seed, QUERY_STREAM_BASE + i as u64);
            RawQuery {
                query_id: format!("Q{i}"),
                entries: sampler.vector(&mut rng, spec.mean_query_len),
            }
        })
        .collect())
}

/// Exact float top-k: `sum_t q_t * w_t` summed in query-term order, ordered by
/// (score desc, doc number asc). Zero-score documents are never returned.
pub fn exact_float_ranking(index: &InvertedIndex, query: &RawQuery, k: usize) -> Vec<(u32, f64)> {
    let mut acc = vec![0.0f64; index.num_docs()];
    let mut touched = Vec::new();
    for &(t, qw) in &query.entries {
        let Some(list) = index.list(t) else { continue };
        for (d, w) in list.iter_raw() {
            let slot = &mut acc[d as usize];
            if *slot == 0.0 {
                touched.push(d);
            }
            *slot += qw * w;
        }
    }
    let mut hits: Vec<(u32, f64)> = touched.into_iter().map(|d| (d, acc[d as usize])).collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    hits.truncate(k);
    hits
}

/// Grades the exact float top-10 of each query: rank 1 gets 2, ranks 2-10 get 1.
pub fn gen_qrels(docs: &ForwardIndex, queries: &[RawQuery]) -> Result<Qrels> {
    if docs.docs.is_empty() {
        return Err(Error::Config("cannot derive qrels from an empty collection".into()));
    }
    let index = build_index(docs, &QuantConfig::default())?;
    let ranked: Vec<Vec<(u32, f64)>> = queries
        .par_iter()
        .map(|q| exact_float_ranking(&index, q, JUDGED_PER_QUERY))
        .collect();
    let mut qrels = Qrels::new();
    for (q, hits) in queries.iter().zip(ranked) {
        for (rank, (d, _)) in hits.into_iter().enumerate() {
            let grade = if rank == 0 { 2 } else { 1 };
            qrels.insert(&q.query_id, &index.doc_table[d as usize], grade);
        }
    }
    Ok(qrels)
}

pub fn gen_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    let docs = gen_documents(spec)?;
    let queries = gen_queries(spec)?;
    let qrels = gen_qrels(&docs, &queries)?;
    Ok(Corpus { docs, queries, qrels })
}

/// Writes `vectors.jsonl`, `queries.jsonl` and `qrels.txt` into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(DOCS_FILE))?);
    write_vectors(
        &mut w,
        &corpus.docs.vocab,
        corpus.docs.docs.iter().map(|d| (d.doc_id.as_str(), d.entries())),
    )?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(QUERIES_FILE))?);
    write_vectors(
        &mut w,
        &corpus.docs.vocab,
        corpus.queries.iter().map(|q| (q.query_id.as_str(), q.entries.as_slice())),
    )?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join(QRELS_FILE))?);
    write_qrels(&mut w, &corpus.qrels)?;
    w.flush()?;
    Ok(())
}
