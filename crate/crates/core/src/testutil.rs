use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::VocabMap;
use crate::types::{ForwardIndex, ImpactVector, TermId};

/// Up to 20 distinct terms per document with weights in `[0.01, 3.0)`.
pub fn random_forward(rng: &mut ChaCha8Rng, docs: usize, vocab: usize) -> ForwardIndex {
    let v: VocabMap = (0..vocab).map(|i| format!("w{i}")).collect();
    let docs = (0..docs)
        .map(|d| {
            let n = rng.random_range(0..=vocab.min(20));
            let entries = rand::seq::index::sample(rng, vocab, n)
                .into_iter()
                .map(|t| (TermId(t as u32), rng.random_range(0.01..3.0)))
                .collect();
            ImpactVector::new(format!("doc{d}"), entries).unwrap()
        })
        .collect();
    ForwardIndex { vocab: v, docs }
}
