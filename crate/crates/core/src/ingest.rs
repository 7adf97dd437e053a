//! Text formats: JSONL sparse vectors, TREC qrels and TREC run files.
//!
//! Vector files hold one object per line, `{"id": <string>, "vector": {<term>: <number>}}`.
//! Qrels lines are `qid 0 docid grade`; run lines are `qid Q0 docid rank score tag`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{scale_query, ForwardIndex, ImpactVector, QuantConfig, TermId, WeightedQuery};

/// Bijection between term strings and dense term ids, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VocabMap {
    terms: Vec<String>,
    ids: HashMap<String, TermId>,
}

impl VocabMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, term: &str) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub fn term(&self, id: TermId) -> Option<&str> {
        self.terms.get(id.index()).map(String::as_str)
    }

    pub fn get_or_insert(&mut self, term: &str) -> TermId {
        if let Some(&id) = self.ids.get(term) {
            return id;
        }
        let id = TermId(self.terms.len() as u32);
        self.terms.push(term.to_string());
        self.ids.insert(term.to_string(), id);
        id
    }

    pub fn iter(&self) -> impl Iterator<Item = (TermId, &str)> {
        self.terms
            .iter()
            .enumerate()
            .map(|(i, t)| (TermId(i as u32), t.as_str()))
    }

    /// Appends the terms of `other` not already present, in `other`'s order.
    /// Returns the id mapping from `other` into `self`.
    pub fn merge(&mut self, other: &VocabMap) -> Vec<TermId> {
        other.terms.iter().map(|t| self.get_or_insert(t)).collect()
    }
}

impl<S: AsRef<str>> FromIterator<S> for VocabMap {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut v = VocabMap::new();
        for t in iter {
            v.get_or_insert(t.as_ref());
        }
        v
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines: usize,
    /// Entries dropped because their weight was `<= 0`.
    pub dropped_nonpositive: usize,
}

#[derive(Deserialize)]
struct VectorLine {
    id: String,
    vector: serde_json::Map<String, Value>,
}

fn json_lines<R: BufRead>(
    reader: R,
) -> impl Iterator<Item = Result<(usize, VectorLine)>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let lineno = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(e.into())),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(
            serde_json::from_str::<VectorLine>(&line)
                .map(|v| (lineno, v))
                .map_err(|e| Error::parse(lineno, e.to_string())),
        )
    })
}

fn weights(lineno: usize, v: VectorLine) -> Result<(String, Vec<(String, f64)>)> {
    let mut out = Vec::with_capacity(v.vector.len());
    for (term, w) in v.vector {
        let w = w
            .as_f64()
            .ok_or_else(|| Error::parse(lineno, format!("weight of `{term}` is not a number")))?;
        out.push((term, w));
    }
    Ok((v.id, out))
}

/// Reads a JSONL vector collection into a forward index with a fresh vocabulary.
pub fn parse_vectors<R: BufRead>(reader: R) -> Result<(ForwardIndex, IngestReport)> {
    let mut fwd = ForwardIndex::default();
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    for item in json_lines(reader) {
        let (lineno, line) = item?;
        report.lines += 1;
        let (id, raw) = weights(lineno, line)?;
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateDoc(id));
        }
        let mut entries = Vec::with_capacity(raw.len());
        for (term, w) in raw {
            if w > 0.0 {
                entries.push((fwd.vocab.get_or_insert(&term), w));
            } else {
                report.dropped_nonpositive += 1;
            }
        }
        let doc = ImpactVector::new(id, entries).map_err(|e| Error::parse(lineno, e.to_string()))?;
        fwd.docs.push(doc);
    }
    Ok((fwd, report))
}

/// A query before integer scaling, resolved against an existing vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct RawQuery {
    pub query_id: String,
    pub entries: Vec<(TermId, f64)>,
}

impl RawQuery {
    pub fn scaled(&self, cfg: &QuantConfig) -> WeightedQuery {
        scale_query(&self.query_id, &self.entries, cfg)
    }
}

/// Reads queries in the vector JSONL format. Terms unknown to `vocab` and
/// non-positive weights are skipped; the second value counts skipped terms.
pub fn parse_queries<R: BufRead>(reader: R, vocab: &VocabMap) -> Result<(Vec<RawQuery>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for item in json_lines(reader) {
        let (lineno, line) = item?;
        let (id, raw) = weights(lineno, line)?;
        let mut entries = Vec::with_capacity(raw.len());
        for (term, w) in raw {
            match vocab.get(&term) {
                Some(t) if w > 0.0 => entries.push((t, w)),
                _ => skipped += 1,
            }
        }
        entries.sort_by_key(|&(t, _)| t);
        out.push(RawQuery {
            query_id: id,
            entries,
        });
    }
    Ok((out, skipped))
}

/// Writes documents (or queries) back as JSONL, entries in term-id order.
pub fn write_vectors<'a, W: Write>(
    mut w: W,
    vocab: &VocabMap,
    rows: impl IntoIterator<Item = (&'a str, &'a [(TermId, f64)])>,
) -> Result<()> {
    for (id, entries) in rows {
        let mut vector = serde_json::Map::with_capacity(entries.len());
        for &(t, weight) in entries {
            let term = vocab
                .term(t)
                .ok_or_else(|| Error::Invariant(format!("term {t} missing from vocabulary")))?;
            vector.insert(term.to_string(), Value::from(weight));
        }
        let line = serde_json::json!({ "id": id, "vector": vector });
        serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_forward<W: Write>(w: W, fwd: &ForwardIndex) -> Result<()> {
    write_vectors(
        w,
        &fwd.vocab,
        fwd.docs.iter().map(|d| (d.doc_id.as_str(), d.entries())),
    )
}

/// Per-document set of expansion terms, read from `{"id": ..., "expanded": [...]}` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpansionFlags {
    expanded: HashMap<String, HashSet<TermId>>,
}

impl ExpansionFlags {
    pub fn is_expanded(&self, doc_id: &str, term: TermId) -> bool {
        self.expanded
            .get(doc_id)
            .is_some_and(|set| set.contains(&term))
    }

    pub fn insert(&mut self, doc_id: &str, term: TermId) {
        self.expanded
            .entry(doc_id.to_string())
            .or_default()
            .insert(term);
    }
}

#[derive(Deserialize)]
struct ExpansionLine {
    id: String,
    expanded: Vec<String>,
}

/// Terms not in `vocab` are ignored; documents missing from the file have no
/// expansion terms.
pub fn parse_expansion<R: BufRead>(reader: R, vocab: &VocabMap) -> Result<ExpansionFlags> {
    let mut flags = ExpansionFlags::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ExpansionLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        let set = flags.expanded.entry(parsed.id).or_default();
        set.extend(parsed.expanded.iter().filter_map(|t| vocab.get(t)));
    }
    Ok(flags)
}

/// Graded judgments keyed by query then document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous grade, if any.
    pub fn insert(&mut self, qid: &str, doc_id: &str, grade: u32) -> Option<u32> {
        self.judgments
            .entry(qid.to_string())
            .or_default()
            .insert(doc_id.to_string(), grade)
    }

    pub fn grade(&self, qid: &str, doc_id: &str) -> Option<u32> {
        self.judgments.get(qid)?.get(doc_id).copied()
    }

    pub fn query(&self, qid: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(qid)
    }

    /// Queries in ascending id order.
    pub fn queries(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u32>)> {
        self.judgments.iter().map(|(q, m)| (q.as_str(), m))
    }

    pub fn num_queries(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }
}

/// Parses TREC qrels. Later lines for the same pair override earlier ones;
/// the second value counts those overrides.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<(Qrels, usize)> {
    let mut qrels = Qrels::new();
    let mut overrides = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => continue,
            [qid, _, doc, grade] => {
                let grade: u32 = grade
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("grade `{grade}` is not a non-negative integer")))?;
                if qrels.insert(qid, doc, grade).is_some() {
                    overrides += 1;
                }
            }
            _ => {
                return Err(Error::parse(
                    lineno,
                    format!("expected 4 fields, found {}", fields.len()),
                ))
            }
        }
    }
    Ok((qrels, overrides))
}

pub fn write_qrels<W: Write>(mut w: W, qrels: &Qrels) -> Result<()> {
    for (qid, docs) in qrels.queries() {
        for (doc, grade) in docs {
            writeln!(w, "{qid} 0 {doc} {grade}")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: u32,
}

/// Ranked results per query, in insertion order of queries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    queries: IndexMap<String, Vec<RunEntry>>,
}

impl Run {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores an already ranked list; ranks are assigned 1.. in the given order.
    pub fn insert_ranked(&mut self, qid: &str, docs: impl IntoIterator<Item = (String, f64)>) {
        let entries = docs
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RunEntry {
                doc_id,
                score,
                rank: i as u32 + 1,
            })
            .collect();
        self.queries.insert(qid.to_string(), entries);
    }

    pub fn get(&self, qid: &str) -> Option<&[RunEntry]> {
        self.queries.get(qid).map(Vec::as_slice)
    }

    pub fn queries(&self) -> impl Iterator<Item = (&str, &[RunEntry])> {
        self.queries.iter().map(|(q, e)| (q.as_str(), e.as_slice()))
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// Writes a run; queries with no results are omitted. Scores use 6 decimals.
pub fn write_run<W: Write>(mut w: W, run: &Run, tag: &str) -> Result<()> {
    for (qid, entries) in run.queries() {
        for e in entries {
            writeln!(w, "{qid} Q0 {} {} {:.6} {tag}", e.doc_id, e.rank, e.score)?;
        }
    }
    Ok(())
}

/// Parses a TREC run.
///
/// Each query's lines are ordered by their stated rank. If the stated ranks
/// are then `1..=n` with non-increasing scores they are kept; otherwise the
/// query is re-sorted by (score desc, doc id asc) and ranks are rewritten.
pub fn parse_run<R: BufRead>(reader: R) -> Result<Run> {
    let mut raw: IndexMap<String, Vec<RunEntry>> = IndexMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _q0, doc, rank, score, _tag] = fields.as_slice() else {
            return Err(Error::parse(
                lineno,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        };
        let rank: u32 = rank
            .parse()
            .map_err(|_| Error::parse(lineno, format!("rank `{rank}` is not an integer")))?;
        let score: f64 = score
            .parse()
            .ok()
            .filter(|s: &f64| !s.is_nan())
            .ok_or_else(|| Error::parse(lineno, format!("score `{score}` is not a number")))?;
        raw.entry(qid.to_string()).or_default().push(RunEntry {
            doc_id: doc.to_string(),
            score,
            rank,
        });
    }

    let mut run = Run::new();
    for (qid, mut entries) in raw {
        entries.sort_by_key(|e| e.rank);
        let consistent = entries.iter().enumerate().all(|(i, e)| e.rank == i as u32 + 1)
            && entries.windows(2).all(|w| w[0].score >= w[1].score);
        if !consistent {
            entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
            for (i, e) in entries.iter_mut().enumerate() {
                e.rank = i as u32 + 1;
            }
        }
        run.queries.insert(qid, entries);
    }
    Ok(run)
}
