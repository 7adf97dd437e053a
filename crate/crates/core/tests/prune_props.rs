mod common;

use std::collections::BTreeSet;

use common::*;
use spix::index::index_stats;
use spix::prune::{self, pruned_index};
use spix::{build_index, quantize_index, PruneConfig, QuantConfig};

#[test]
fn every_strategy_matches_brute_force_filter() {
    let quant = QuantConfig::default();
    for seed in 0..4 {
        let mut r = rng(seed);
        let fwd = random_forward(&mut r, 300, 60, 25, seed % 2 == 0);
        let flags = random_flags(&mut r, &fwd);
        for cfg in all_prune_configs() {
            let got = pruned_index(&fwd, Some(&cfg), Some(&flags), &quant, None).unwrap();
            assert_eq!(index_postings(&got), reference_prune(&fwd, &cfg, &flags), "{cfg} seed {seed}");
        }
    }
}

#[test]
fn containment_and_unchanged_weights() {
    let quant = QuantConfig::default();
    let mut r = rng(11);
    let fwd = random_forward(&mut r, 400, 80, 30, true);
    let flags = random_flags(&mut r, &fwd);
    let base = build_index(&fwd, &quant).unwrap();
    let original: std::collections::HashMap<(u32, u32), f64> = index_postings(&base)
        .into_iter()
        .map(|(t, d, w)| ((t, d), w))
        .collect();
    for cfg in all_prune_configs() {
        let pruned = pruned_index(&fwd, Some(&cfg), Some(&flags), &quant, None).unwrap();
        assert!(posting_set(&pruned).is_subset(&posting_set(&base)), "{cfg}");
        let shift = matches!(cfg, PruneConfig::GlobalThreshold { shift: true, .. });
        for (t, d, w) in index_postings(&pruned) {
            let w0 = original[&(t, d)];
            if shift {
                assert!(w < w0, "{cfg}");
            } else {
                assert_eq!(w, w0, "{cfg}");
            }
        }
    }
}

#[test]
fn cardinality_bounds() {
    let mut r = rng(12);
    let fwd = random_forward(&mut r, 400, 50, 40, true);
    let base = build_index(&fwd, &QuantConfig::default()).unwrap();
    for k in [1, 3, 7, 20] {
        let pruned = prune::prune_doc_topk(&fwd, k).unwrap();
        for (before, after) in fwd.docs.iter().zip(&pruned.docs) {
            assert_eq!(after.len(), before.len().min(k));
        }
    }
    for l in [1, 5, 40, 1000] {
        let pruned = prune::prune_term_maxlen(&base, l).unwrap();
        for (before, after) in base.lists.iter().zip(&pruned.lists) {
            assert_eq!(after.len(), before.len().min(l));
        }
    }
}

#[test]
fn quantile_removes_ceil_qn_on_distinct_impacts() {
    let mut r = rng(13);
    let fwd = random_forward(&mut r, 500, 40, 20, false);
    let base = build_index(&fwd, &QuantConfig::default()).unwrap();
    for q in [0.1, 0.25, 0.5, 0.75, 0.8, 0.85, 0.99] {
        let pruned = prune::prune_term_quantile(&base, q).unwrap();
        for (before, after) in base.lists.iter().zip(&pruned.lists) {
            let distinct: BTreeSet<u64> = before.raw_impacts().iter().map(|w| w.to_bits()).collect();
            assert_eq!(distinct.len(), before.len(), "fixture must have distinct impacts");
            let n = before.len();
            let removed = (q * n as f64 - 1e-9).ceil().max(0.0) as usize;
            assert_eq!(after.len(), n - removed.min(n), "q={q} n={n}");
        }
    }
}

#[test]
fn doc_topk_commutes_with_inversion() {
    let quant = QuantConfig::default();
    for seed in 20..24 {
        let mut r = rng(seed);
        let fwd = random_forward(&mut r, 300, 50, 30, true);
        let inverted = build_index(&fwd, &quant).unwrap();
        for k in [1, 4, 16] {
            let forward_first = posting_set(&build_index(&prune::prune_doc_topk(&fwd, k).unwrap(), &quant).unwrap());
            // Top-k per document selected from the inverted lists.
            let mut per_doc: Vec<Vec<(u32, f64)>> = vec![Vec::new(); fwd.docs.len()];
            for list in &inverted.lists {
                for (d, w) in list.iter_raw() {
                    per_doc[d as usize].push((list.term.0, w));
                }
            }
            let mut lists_first = BTreeSet::new();
            for (d, mut entries) in per_doc.into_iter().enumerate() {
                entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                lists_first.extend(entries.into_iter().take(k).map(|(t, _)| (t, d as u32)));
            }
            assert_eq!(forward_first, lists_first, "k={k} seed {seed}");
        }
    }
}

#[test]
fn pruned_stats_never_exceed_original() {
    let quant = QuantConfig::default();
    let mut r = rng(14);
    let fwd = random_forward(&mut r, 500, 100, 30, false);
    let flags = random_flags(&mut r, &fwd);
    let g = fwd.max_weight();
    let base = index_stats(&quantize_index(pruned_index(&fwd, None, None, &quant, g).unwrap()).unwrap());
    for cfg in all_prune_configs() {
        let idx = quantize_index(pruned_index(&fwd, Some(&cfg), Some(&flags), &quant, g).unwrap()).unwrap();
        let s = index_stats(&idx);
        assert!(s.num_postings <= base.num_postings, "{cfg}");
        assert!(s.serialized_bytes <= base.serialized_bytes, "{cfg}");
        assert!(s.max_list_len <= base.max_list_len, "{cfg}");
        assert_eq!(s.num_docs, base.num_docs);
        assert_eq!(s.num_terms, base.num_terms);
    }
}

#[test]
fn dual_threshold_needs_flags() {
    let mut r = rng(15);
    let fwd = random_forward(&mut r, 10, 10, 5, true);
    let cfg = PruneConfig::DualThreshold { t_orig: 0.5, t_exp: 1.0 };
    assert!(pruned_index(&fwd, Some(&cfg), None, &QuantConfig::default(), None).is_err());
}
