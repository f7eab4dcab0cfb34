mod common;

use proptest::prelude::*;

use kgic_core::genlp::{
    beam_search, build_prompt, build_trie, constrained_beam_search, resolve_entities, sequence_nll, BeamOptions,
    FieldMask, MockScorer, TokenScorer, Vocabulary, END_TOKEN,
};
use kgic_core::{EntityId, EntityMeta, Error};

use common::{people_graph, typed};

proptest! {
    #[test]
    fn char_vocabulary_round_trips(labels in prop::collection::vec("[a-zA-Zé ,:_0-9]{1,12}", 1..8)) {
        let vocab = Vocabulary::char_level(labels.iter().map(String::as_str)).unwrap();
        prop_assert_eq!(vocab.token(vocab.end()), Some(END_TOKEN));
        for l in &labels {
            let ids = vocab.encode(l).unwrap();
            prop_assert!(!ids.contains(&vocab.end()));
            prop_assert_eq!(&vocab.decode(&ids).unwrap(), l);
        }
    }

    #[test]
    fn beam_hypotheses_are_well_formed(width in 1usize..6, max_len in 1usize..6, seed in any::<u64>()) {
        let vocab = Vocabulary::new(vec!["x".into(), "y".into(), END_TOKEN.into()]).unwrap();
        let end = vocab.end();
        // a deterministic non-uniform table keyed by prefix length
        let mut scorer = MockScorer::new(vocab);
        for len in 0..max_len {
            let a = 0.1 + ((seed >> len) & 7) as f64 / 10.0;
            let w = [a, 1.0, 0.5];
            let s: f64 = w.iter().sum();
            for p in prefixes(len) {
                scorer = scorer.with_entry(&p, w.iter().map(|x| (x / s).ln()).collect()).unwrap();
            }
        }
        let hyps = beam_search(&scorer, "q", &BeamOptions::new(width, max_len)).unwrap();
        prop_assert!(!hyps.is_empty() && hyps.len() <= width);
        for w in hyps.windows(2) {
            prop_assert!(w[0].log_prob >= w[1].log_prob);
        }
        for h in &hyps {
            prop_assert!(h.finished && h.tokens.last() == Some(&end));
            prop_assert!(h.tokens.len() <= max_len);
            let nll = sequence_nll(&scorer, "q", &h.tokens).unwrap();
            prop_assert!((nll.total + h.log_prob).abs() < 1e-12);
        }
    }
}

fn prefixes(len: usize) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                [0u32, 1].map(|t| {
                    let mut q = p.clone();
                    q.push(t);
                    q
                })
            })
            .collect();
    }
    out
}

#[test]
fn prompt_omits_masked_and_empty_fields() {
    let meta = typed(&["human", "writer"], "English novelist");
    let full = build_prompt("Jane Austen", &meta, "born_in", FieldMask::NONE).unwrap();
    assert_eq!(
        full.text,
        "head: Jane Austen, types: human, writer, description: English novelist, relation: born_in, tail:"
    );
    let masked = build_prompt(
        "Jane Austen",
        &meta,
        "born_in",
        FieldMask {
            types: true,
            description: true,
        },
    )
    .unwrap();
    assert_eq!(masked.text, "head: Jane Austen, relation: born_in, tail:");
    let bare = build_prompt("X", &EntityMeta::default(), "r", FieldMask::NONE).unwrap();
    assert_eq!(bare.text, "head: X, relation: r, tail:");
    assert!(build_prompt("", &meta, "r", FieldMask::NONE).is_err());
}

#[test]
fn mask_labels_cover_all_combinations() {
    let labels: Vec<&str> = FieldMask::all().iter().map(|m| m.label()).collect();
    assert_eq!(labels, ["full", "w/o types", "w/o description", "w/o types, w/o description"]);
}

#[test]
fn constrained_decoding_names_real_entities() {
    let g = people_graph();
    let vocab = Vocabulary::char_level(g.entity_labels().iter().map(String::as_str)).unwrap();
    let trie = build_trie(g.entity_ids().map(|e| (e, g.entity_label(e))), &vocab).unwrap();
    assert_eq!(trie.num_terminals(), g.num_entities());
    let scorer = MockScorer::new(vocab.clone());
    let opts = BeamOptions::new(5, trie.depth() + 1);
    let out = constrained_beam_search(&scorer, &trie, "head: person1, relation: born_in, tail:", &opts).unwrap();
    assert_eq!(out.len(), 5);
    for p in &out {
        assert!(p.entity.index() < g.num_entities());
        assert!(p.log_prob <= 0.0);
    }
    // a free-form generation resolves only when it spells a label
    let free = beam_search(&scorer, "q", &BeamOptions::new(3, 3)).unwrap();
    for p in resolve_entities(&free, &trie, &vocab) {
        assert!(g.entity_label(p.entity).chars().count() <= 2);
    }
}

#[test]
fn shared_labels_yield_every_entity() {
    let vocab = Vocabulary::char_level(["ab", "b"]).unwrap();
    let trie = build_trie([(EntityId(0), "ab"), (EntityId(3), "ab"), (EntityId(1), "b")], &vocab).unwrap();
    let scorer = MockScorer::new(vocab);
    let out = constrained_beam_search(&scorer, &trie, "q", &BeamOptions::new(4, 3)).unwrap();
    let ids: Vec<u32> = out.iter().map(|p| p.entity.0).collect();
    // uniform scores renormalized over the trie: only the first step branches,
    // so every label scores ln(1/2) and ties fall back to entity order
    assert_eq!(ids, [0, 3, 1]);
    assert!(out.iter().all(|p| (p.log_prob - 0.5f64.ln()).abs() < 1e-12));
}

#[test]
fn scorer_tables_must_be_normalized() {
    let vocab = Vocabulary::new(vec!["a".into(), END_TOKEN.into()]).unwrap();
    assert!(matches!(
        MockScorer::new(vocab.clone()).with_entry(&[], vec![-0.1, -0.1]),
        Err(Error::Unnormalized(_))
    ));
    assert!(matches!(
        MockScorer::new(vocab.clone()).with_entry(&[], vec![0.0]),
        Err(Error::Shape(_))
    ));
    let s = MockScorer::new(vocab).with_entry(&[], vec![0.0, f64::NEG_INFINITY]).unwrap();
    assert_eq!(s.next_log_probs("q", &[]).unwrap()[0], 0.0);
}

#[test]
fn unreachable_end_leaves_unfinished_hypotheses() {
    let vocab = Vocabulary::new(vec!["a".into(), END_TOKEN.into()]).unwrap();
    let scorer = MockScorer::new(vocab)
        .with_fallback(vec![0.0, f64::NEG_INFINITY])
        .unwrap();
    let hyps = beam_search(&scorer, "q", &BeamOptions::new(2, 3)).unwrap();
    assert_eq!(hyps.len(), 1);
    assert!(!hyps[0].finished);
    assert_eq!(hyps[0].tokens, [0, 0]);
}
