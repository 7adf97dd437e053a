//! Inverted index construction, quantization and the `SPIX` binary format.
//!
//! Layout (all fixed-width integers little-endian):
//!
//! ```text
//! "SPIX" | version: u32 | bits: u32 | global_max: f64 | query_scale: u32
//! num_docs: u32  | num_docs  x (len: u32, utf-8 bytes)
//! num_terms: u32 | num_terms x (len: u32, utf-8 bytes)
//! num_terms x ( list_len: u32
//!             | list_len x doc gap as LEB128 (first gap is the doc number itself)
//!             | list_len x impact as u8 (bits <= 8), u16 (bits <= 16) or u32 )
//! ```

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::ingest::VocabMap;
use crate::types::{quantize_impact, ForwardIndex, ImpactVector, QuantConfig, TermId};

const MAGIC: &[u8; 4] = b"SPIX";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Impacts {
    Raw(Vec<f64>),
    Quantized(Vec<u32>),
}

impl Impacts {
    pub fn len(&self) -> usize {
        match self {
            Impacts::Raw(v) => v.len(),
            Impacts::Quantized(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostingList {
    pub term: TermId,
    doc_ids: Vec<u32>,
    impacts: Impacts,
    max_raw: f64,
    max_quantized: u32,
}

impl PostingList {
    pub fn raw(term: TermId, doc_ids: Vec<u32>, impacts: Vec<f64>) -> Self {
        assert_eq!(doc_ids.len(), impacts.len());
        debug_assert!(doc_ids.windows(2).all(|w| w[0] < w[1]));
        let max_raw = impacts.iter().copied().fold(0.0, f64::max);
        Self {
            term,
            doc_ids,
            impacts: Impacts::Raw(impacts),
            max_raw,
            max_quantized: 0,
        }
    }

    pub fn quantized(term: TermId, doc_ids: Vec<u32>, impacts: Vec<u32>) -> Self {
        assert_eq!(doc_ids.len(), impacts.len());
        debug_assert!(doc_ids.windows(2).all(|w| w[0] < w[1]));
        let max_quantized = impacts.iter().copied().max().unwrap_or(0);
        Self {
            term,
            doc_ids,
            impacts: Impacts::Quantized(impacts),
            max_raw: 0.0,
            max_quantized,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[u32] {
        &self.doc_ids
    }

    pub fn impacts(&self) -> &Impacts {
        &self.impacts
    }

    /// Raw impacts; panics on a quantized list.
    pub fn raw_impacts(&self) -> &[f64] {
        match &self.impacts {
            Impacts::Raw(v) => v,
            Impacts::Quantized(_) => panic!("raw_impacts on a quantized posting list"),
        }
    }

    /// Quantized impacts; panics on a raw list.
    pub fn quantized_impacts(&self) -> &[u32] {
        match &self.impacts {
            Impacts::Quantized(v) => v,
            Impacts::Raw(_) => panic!("quantized_impacts on a raw posting list"),
        }
    }

    pub fn max_raw(&self) -> f64 {
        self.max_raw
    }

    pub fn max_quantized(&self) -> u32 {
        self.max_quantized
    }

    /// Iterates `(doc number, raw impact)`.
    pub fn iter_raw(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.doc_ids.iter().copied().zip(self.raw_impacts().iter().copied())
    }

    /// Iterates `(doc number, quantized impact)`.
    pub fn iter_quantized(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.doc_ids
            .iter()
            .copied()
            .zip(self.quantized_impacts().iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    pub vocab: VocabMap,
    /// One list per vocabulary entry, indexed by term id. Lists may be empty.
    pub lists: Vec<PostingList>,
    /// Internal doc number to external id.
    pub doc_table: Vec<String>,
    pub quant: QuantConfig,
    quantized: bool,
}

impl InvertedIndex {
    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn num_docs(&self) -> usize {
        self.doc_table.len()
    }

    pub fn num_postings(&self) -> usize {
        self.lists.iter().map(PostingList::len).sum()
    }

    pub fn list(&self, term: TermId) -> Option<&PostingList> {
        self.lists.get(term.index())
    }

    /// Pins the quantization scale, e.g. to the unpruned collection maximum so
    /// that pruned and unpruned indexes share impact levels.
    pub fn with_global_max(mut self, global_max: f64) -> Result<Self> {
        if self.quantized {
            return Err(Error::AlreadyQuantized);
        }
        let current = self.lists.iter().map(PostingList::max_raw).fold(0.0, f64::max);
        if !(global_max > 0.0 && global_max.is_finite()) || global_max < current {
            return Err(Error::Config(format!(
                "global_max {global_max} below collection maximum {current}"
            )));
        }
        self.quant.global_max = global_max;
        Ok(self)
    }

    /// Rebuilds the per-document vectors of an unquantized index.
    pub fn forward(&self) -> Result<ForwardIndex> {
        if self.quantized {
            return Err(Error::RequiresRaw);
        }
        let mut rows: Vec<Vec<(TermId, f64)>> = vec![Vec::new(); self.num_docs()];
        // lists are visited in term order, so each row ends up sorted
        for list in &self.lists {
            for (doc, w) in list.iter_raw() {
                rows[doc as usize].push((list.term, w));
            }
        }
        let docs = rows
            .into_iter()
            .zip(&self.doc_table)
            .map(|(entries, id)| ImpactVector::from_sorted_unchecked(id.clone(), entries))
            .collect();
        Ok(ForwardIndex {
            vocab: self.vocab.clone(),
            docs,
        })
    }

    /// Per-document quantized vectors, for exhaustive scoring.
    pub fn quantized_docs(&self) -> Result<Vec<Vec<(TermId, u32)>>> {
        if !self.quantized {
            return Err(Error::NotQuantized);
        }
        let mut rows: Vec<Vec<(TermId, u32)>> = vec![Vec::new(); self.num_docs()];
        for list in &self.lists {
            for (doc, w) in list.iter_quantized() {
                rows[doc as usize].push((list.term, w));
            }
        }
        Ok(rows)
    }

    pub(crate) fn map_lists(
        &self,
        f: impl Fn(&PostingList) -> PostingList + Sync + Send,
    ) -> Result<Self> {
        use rayon::prelude::*;
        if self.quantized {
            return Err(Error::RequiresRaw);
        }
        let lists = self.lists.par_iter().map(f).collect();
        Ok(Self {
            vocab: self.vocab.clone(),
            lists,
            doc_table: self.doc_table.clone(),
            quant: self.quant,
            quantized: false,
        })
    }
}

/// Inverts a forward index. Doc numbers follow input order and
/// `quant.global_max` is set to the collection's largest weight (left as given
/// for an empty collection).
pub fn build_index(fwd: &ForwardIndex, cfg: &QuantConfig) -> Result<InvertedIndex> {
    let mut seen = HashSet::with_capacity(fwd.docs.len());
    for doc in &fwd.docs {
        if !seen.insert(doc.doc_id.as_str()) {
            return Err(Error::DuplicateDoc(doc.doc_id.clone()));
        }
    }
    if fwd.docs.len() > u32::MAX as usize {
        return Err(Error::Config("too many documents".into()));
    }

    let num_terms = fwd.vocab.len();
    let mut counts = vec![0usize; num_terms];
    for doc in &fwd.docs {
        for &(t, _) in doc.entries() {
            *counts.get_mut(t.index()).ok_or_else(|| {
                Error::Invariant(format!("term {t} outside vocabulary of {num_terms}"))
            })? += 1;
        }
    }
    let mut doc_ids: Vec<Vec<u32>> = counts.iter().map(|&c| Vec::with_capacity(c)).collect();
    let mut impacts: Vec<Vec<f64>> = counts.iter().map(|&c| Vec::with_capacity(c)).collect();
    for (n, doc) in fwd.docs.iter().enumerate() {
        for &(t, w) in doc.entries() {
            doc_ids[t.index()].push(n as u32);
            impacts[t.index()].push(w);
        }
    }
    let lists = doc_ids
        .into_iter()
        .zip(impacts)
        .enumerate()
        .map(|(t, (d, w))| PostingList::raw(TermId(t as u32), d, w))
        .collect();

    let mut quant = *cfg;
    if let Some(max) = fwd.max_weight() {
        quant.global_max = max;
    }
    quant.validate()?;

    Ok(InvertedIndex {
        vocab: fwd.vocab.clone(),
        lists,
        doc_table: fwd.docs.iter().map(|d| d.doc_id.clone()).collect(),
        quant,
        quantized: false,
    })
}

/// Maps every raw impact through [`quantize_impact`] with the index's config.
pub fn quantize_index(index: InvertedIndex) -> Result<InvertedIndex> {
    if index.quantized {
        return Err(Error::AlreadyQuantized);
    }
    let cfg = index.quant;
    let mut lists = Vec::with_capacity(index.lists.len());
    for list in index.lists {
        let levels = list
            .raw_impacts()
            .iter()
            .map(|&w| quantize_impact(w, &cfg))
            .collect::<Result<Vec<_>>>()?;
        lists.push(PostingList::quantized(list.term, list.doc_ids, levels));
    }
    Ok(InvertedIndex {
        lists,
        quantized: true,
        ..index
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IndexStats {
    pub num_docs: usize,
    pub num_terms: usize,
    pub num_postings: usize,
    pub max_list_len: usize,
    /// Length of the `SPIX` encoding; 0 for an unquantized index.
    pub serialized_bytes: usize,
    pub empty_lists: usize,
    pub empty_docs: usize,
}

pub fn index_stats(index: &InvertedIndex) -> IndexStats {
    let mut doc_len = vec![0usize; index.num_docs()];
    for list in &index.lists {
        for &d in list.doc_ids() {
            doc_len[d as usize] += 1;
        }
    }
    let serialized_bytes = if index.quantized {
        let mut counter = CountingWriter(0);
        save_index(index, &mut counter).map_or(0, |n| n as usize)
    } else {
        0
    };
    IndexStats {
        num_docs: index.num_docs(),
        num_terms: index.vocab.len(),
        num_postings: index.num_postings(),
        max_list_len: index.lists.iter().map(PostingList::len).max().unwrap_or(0),
        serialized_bytes,
        empty_lists: index.lists.iter().filter(|l| l.is_empty()).count(),
        empty_docs: doc_len.iter().filter(|&&n| n == 0).count(),
    }
}

struct CountingWriter(u64);

impl Write for CountingWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn impact_width(bits: u32) -> usize {
    match bits {
        0..=8 => 1,
        9..=16 => 2,
        _ => 4,
    }
}

pub(crate) fn write_leb128(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Writes the index in `SPIX` format and returns the number of bytes written.
pub fn save_index<W: Write>(index: &InvertedIndex, mut sink: W) -> Result<u64> {
    if !index.quantized {
        return Err(Error::NotQuantized);
    }
    let cfg = index.quant;
    let width = impact_width(cfg.bits);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&cfg.bits.to_le_bytes());
    out.extend_from_slice(&cfg.global_max.to_le_bytes());
    out.extend_from_slice(&cfg.query_scale.to_le_bytes());

    out.extend_from_slice(&(index.doc_table.len() as u32).to_le_bytes());
    for id in &index.doc_table {
        put_str(&mut out, id);
    }
    out.extend_from_slice(&(index.vocab.len() as u32).to_le_bytes());
    for (_, term) in index.vocab.iter() {
        put_str(&mut out, term);
    }
    if index.lists.len() != index.vocab.len() {
        return Err(Error::Invariant("posting list count differs from vocabulary".into()));
    }
    for list in &index.lists {
        out.extend_from_slice(&(list.len() as u32).to_le_bytes());
        let mut prev = None;
        for &d in list.doc_ids() {
            let gap = match prev {
                None => d,
                Some(p) => d - p,
            };
            write_leb128(&mut out, u64::from(gap));
            prev = Some(d);
        }
        for &w in list.quantized_impacts() {
            match width {
                1 => out.push(w as u8),
                2 => out.extend_from_slice(&(w as u16).to_le_bytes()),
                _ => out.extend_from_slice(&w.to_le_bytes()),
            }
        }
    }
    sink.write_all(&out)?;
    Ok(out.len() as u64)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(what))?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Truncated(what))?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::NotAnIndex(format!("invalid utf-8 in {what}")))
    }

    fn leb128(&mut self, what: &'static str) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = *self.take(1, what)?.first().unwrap();
            v |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::NotAnIndex(format!("overlong varint in {what}")))
    }
}

pub fn load_index<R: Read>(mut source: R) -> Result<InvertedIndex> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };

    let magic = c.take(4, "magic").map_err(|_| Error::NotAnIndex("file too short".into()))?;
    if magic != MAGIC {
        return Err(Error::NotAnIndex("bad magic bytes".into()));
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let bits = c.u32("quantization config")?;
    let global_max = c.f64("quantization config")?;
    let query_scale = c.u32("quantization config")?;
    let quant = QuantConfig::new(bits, global_max, query_scale)
        .map_err(|e| Error::NotAnIndex(e.to_string()))?;

    let num_docs = c.u32("doc table")? as usize;
    let mut doc_table = Vec::with_capacity(num_docs.min(buf.len()));
    for _ in 0..num_docs {
        doc_table.push(c.string("doc table")?);
    }
    let num_terms = c.u32("vocabulary")? as usize;
    let mut vocab = VocabMap::new();
    for _ in 0..num_terms {
        let term = c.string("vocabulary")?;
        let id = vocab.get_or_insert(&term);
        if id.index() + 1 != vocab.len() {
            return Err(Error::NotAnIndex(format!("duplicate vocabulary term `{term}`")));
        }
    }

    let width = impact_width(bits);
    let max_level = quant.max_level();
    let mut lists = Vec::with_capacity(num_terms);
    for t in 0..num_terms {
        let len = c.u32("posting list")? as usize;
        let mut doc_ids = Vec::with_capacity(len.min(buf.len()));
        let mut prev: Option<u64> = None;
        for _ in 0..len {
            let gap = c.leb128("doc gaps")?;
            let doc = match prev {
                None => gap,
                Some(_) if gap == 0 => {
                    return Err(Error::NotAnIndex(format!("zero doc gap in list {t}")))
                }
                Some(p) => p + gap,
            };
            if doc >= num_docs as u64 {
                return Err(Error::NotAnIndex(format!("doc number {doc} out of range in list {t}")));
            }
            doc_ids.push(doc as u32);
            prev = Some(doc);
        }
        let raw = c.take(len * width, "impacts")?;
        let impacts: Vec<u32> = match width {
            1 => raw.iter().map(|&b| u32::from(b)).collect(),
            2 => raw
                .chunks_exact(2)
                .map(|b| u32::from(u16::from_le_bytes([b[0], b[1]])))
                .collect(),
            _ => raw
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
        };
        if let Some(&w) = impacts.iter().find(|&&w| w == 0 || w > max_level) {
            return Err(Error::NotAnIndex(format!("impact {w} out of range in list {t}")));
        }
        lists.push(PostingList::quantized(TermId(t as u32), doc_ids, impacts));
    }
    if c.pos != buf.len() {
        return Err(Error::NotAnIndex(format!(
            "{} trailing bytes",
            buf.len() - c.pos
        )));
    }
    Ok(InvertedIndex {
        vocab,
        lists,
        doc_table,
        quant,
        quantized: true,
    })
}
