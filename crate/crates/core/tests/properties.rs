mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relex::corpus::{
    apply_repr_mode, build_expl_eval, parse_corpus, write_corpus_to, Bag, ReprMode, Sentence, Span,
};
use relex::explain::{attention_from_encodings, explain_bag, Method};
use relex::models::{Model, ModelKind};
use relex::tensor::{Graph, Tensor};

use common::{random_encodings, tiny_config};

fn sentence_strategy() -> impl Strategy<Value = Sentence> {
    (4usize..9)
        .prop_flat_map(|len| {
            (
                prop::collection::vec(0u32..12, len),
                0..2usize,
                2..len - 1,
                any::<bool>(),
                prop::option::of(any::<bool>()),
                prop::option::of(prop::collection::vec(0usize..3, 0..3)),
            )
        })
        .prop_map(|(tokens, a, b, swap, relevance_label, rationale)| {
            let (first, second) = (Span(a, a + 1), Span(b, b + 2));
            let (mention_i, mention_j) = if swap {
                (second, first)
            } else {
                (first, second)
            };
            Sentence {
                tokens,
                mention_i,
                mention_j,
                relevance_label,
                rationale_for: rationale.map(|mut r| {
                    r.sort_unstable();
                    r.dedup();
                    r
                }),
            }
        })
}

fn bag_strategy(id: u64) -> impl Strategy<Value = Bag> {
    (
        0usize..4,
        0usize..4,
        0usize..2,
        0usize..2,
        prop::collection::btree_set(0usize..3, 0..3),
        prop::collection::vec(sentence_strategy(), 1..5),
    )
        .prop_map(move |(ei, ej, fi, fj, rels, mut sentences)| {
            let relations: Vec<usize> = rels.into_iter().collect();
            for s in &mut sentences {
                if let Some(r) = &mut s.rationale_for {
                    r.retain(|k| relations.contains(k));
                }
            }
            Bag {
                bag_id: id,
                entity_i: ei,
                entity_j: ej,
                fget_i: fi,
                fget_j: fj,
                relations,
                sentences,
            }
        })
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Bag>> {
    (1usize..5).prop_flat_map(|n| (0..n as u64).map(bag_strategy).collect::<Vec<_>>())
}

fn logits(model: &Model, bag: &Bag) -> Vec<f64> {
    let enc = model.encode_values(bag).unwrap();
    model.logits_from_encodings(&enc, bag.entities()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_bit_deterministic(data in prop::collection::vec(-3.0f64..3.0, 12)) {
        let run = || {
            let mut g = Graph::new();
            let x = g.param(Tensor::new(vec![3, 4], data.clone()).unwrap());
            let w = g.constant(Tensor::new(vec![4, 3], data.iter().rev().copied().collect()).unwrap());
            let y = g.matmul(x, w).unwrap();
            let m = g.max_axis0(y).unwrap();
            let s = g.softmax(m).unwrap();
            let r = g.sum(s);
            g.backward(r).unwrap();
            (g.value(s).data().to_vec(), g.grad(x).unwrap().to_vec())
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn two_paths_into_one_leaf_add_exactly(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![a, b]));
        let p = g.scale(x, 3.0);
        let q = g.mul(x, x).unwrap();
        let pq = g.add(p, q).unwrap();
        let r = g.sum(pq);
        g.backward(r).unwrap();
        prop_assert_eq!(g.grad(x).unwrap(), &[3.0 + 2.0 * a, 3.0 + 2.0 * b][..]);
    }

    #[test]
    fn corpus_round_trips(bags in corpus_strategy()) {
        let mut buf = Vec::new();
        write_corpus_to(&mut buf, &bags).unwrap();
        let back = parse_corpus(buf.as_slice()).unwrap();
        prop_assert_eq!(back.bags, bags);
    }

    #[test]
    fn expl_eval_size_is_product_of_sides(bags in corpus_strategy()) {
        let expected: usize = bags
            .iter()
            .flat_map(|b| b.relations.iter().map(move |&k| (b, k)))
            .map(|(b, k)| {
                let annotated = b.sentences.iter().filter(|s| s.rationale_for.is_some());
                let pos = annotated.clone().filter(|s| s.is_rationale_for(k)).count();
                let neg = annotated.filter(|s| !s.is_rationale_for(k)).count();
                pos * neg
            })
            .sum();
        prop_assert_eq!(build_expl_eval(&bags).len(), expected);
    }

    #[test]
    fn repr_modes_only_touch_mentions(s in sentence_strategy(), fi in 0usize..2, fj in 0usize..2) {
        let inv = tiny_config(ModelKind::CnnsAtt, false).inventory;
        for mode in [ReprMode::Raw, ReprMode::Fget, ReprMode::FgetMention] {
            let enc = apply_repr_mode(&s, (fi, fj), mode, &inv).unwrap();
            let before: Vec<u32> = (0..s.tokens.len())
                .filter(|&t| !s.mention_i.contains(t) && !s.mention_j.contains(t))
                .map(|t| s.tokens[t])
                .collect();
            let after: Vec<u32> = (0..enc.tokens.len())
                .filter(|&t| !enc.mention_i.contains(t) && !enc.mention_j.contains(t))
                .map(|t| enc.tokens[t])
                .collect();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn encodings_ignore_labels_and_follow_permutations(bag in bag_strategy(0), seed in 0u64..50) {
        let model = Model::new(tiny_config(ModelKind::DirectSup, false), seed).unwrap();
        let enc = model.encode_values(&bag).unwrap();
        let mut relabeled = bag.clone();
        relabeled.relations = vec![2];
        for s in &mut relabeled.sentences {
            s.rationale_for = None;
            s.relevance_label = Some(true);
        }
        prop_assert_eq!(&model.encode_values(&relabeled).unwrap(), &enc);
        let mut reversed = bag.clone();
        reversed.sentences.reverse();
        let mut expected = enc.clone();
        expected.reverse();
        prop_assert_eq!(model.encode_values(&reversed).unwrap(), expected);
    }

    #[test]
    fn attention_is_a_distribution(seed in 0u64..200, n in 1usize..6, k in 0usize..3) {
        let model = Model::new(tiny_config(ModelKind::CnnsAtt, false), seed).unwrap();
        let enc = random_encodings(&mut ChaCha8Rng::seed_from_u64(seed), n, model.encoding_dim());
        let a = attention_from_encodings(&model, &enc, k).unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(a.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn bag_representation_ignores_sentence_order(bag in bag_strategy(0), seed in 0u64..50, fusion: bool) {
        for kind in [ModelKind::CnnsAtt, ModelKind::DirectSup] {
            let model = Model::new(tiny_config(kind, fusion), seed).unwrap();
            let mut rotated = bag.clone();
            rotated.sentences.rotate_left(1);
            let (a, b) = (logits(&model, &bag), logits(&model, &rotated));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicate_sentences_do_not_move_directsup(bag in bag_strategy(0), seed in 0u64..50, pick in 0usize..5) {
        let model = Model::new(tiny_config(ModelKind::DirectSup, false), seed).unwrap();
        let mut doubled = bag.clone();
        doubled.sentences.push(bag.sentences[pick % bag.sentences.len()].clone());
        prop_assert_eq!(logits(&model, &bag), logits(&model, &doubled));
    }

    #[test]
    fn entities_only_matter_with_fusion(bag in bag_strategy(0), seed in 0u64..50) {
        let model = Model::new(tiny_config(ModelKind::CnnsAtt, false), seed).unwrap();
        let mut moved = bag.clone();
        moved.entity_i = (bag.entity_i + 1) % 4;
        moved.entity_j = (bag.entity_j + 2) % 4;
        prop_assert_eq!(logits(&model, &bag), logits(&model, &moved));
    }

    #[test]
    fn explanations_cover_every_sentence_and_keep_parameters(bag in bag_strategy(0), seed in 0u64..50, k in 0usize..3) {
        for kind in [ModelKind::CnnsAtt, ModelKind::DirectSup] {
            let model = Model::new(tiny_config(kind, true), seed).unwrap();
            let before = model.params().clone();
            for r in explain_bag(&model, &bag, k, &Method::ALL).unwrap() {
                prop_assert_eq!(r.scores.len(), bag.sentences.len());
                prop_assert!(r.scores.iter().all(|s| s.is_finite()));
            }
            prop_assert!(model.params().to_json() == before.to_json());
        }
    }
}
