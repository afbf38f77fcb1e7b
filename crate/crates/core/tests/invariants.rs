use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hptr::corpus::{format_conllu, format_rst_bracket, gen_synthetic_dep, gen_synthetic_rst, parse_conllu, parse_rst_bracket, LabelSet};
use hptr::decoder::{Fusion, Variant};
use hptr::dep::{oracle_order, replay, DepModelConfig, DepParser, DepTree, Sentence, Token};
use hptr::encoder::{DepEncoderConfig, RstEncoderConfig};
use hptr::metrics::{score_dep, score_parseval, PunctPolicy};
use hptr::rst::{oracle_splits, replay_splits, DiscNode, DiscTree, RstLabel, RstModelConfig, RstParser};

/// Heads drawn so that each position attaches to an earlier one in a random
/// visiting order, which always gives a single-rooted tree.
fn arb_tree(max_len: usize) -> impl Strategy<Value = DepTree> {
    (1..=max_len, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(&mut rng);
        let mut heads = vec![0; n];
        for j in 1..n {
            heads[order[j] - 1] = order[rng.gen_range(0..j)];
        }
        let labels = (0..n).map(|_| format!("l{}", rng.gen_range(0..4))).collect();
        DepTree { heads, labels }
    })
}

fn arb_disc_tree(max_edus: usize) -> impl Strategy<Value = DiscTree> {
    (1..=max_edus, any::<u64>()).prop_map(|(m, seed)| gen_disc(&mut ChaCha8Rng::seed_from_u64(seed), m))
}

fn gen_disc(rng: &mut ChaCha8Rng, m: usize) -> DiscTree {
    let labels: Vec<RstLabel> = LabelSet::rst_full().names().iter().map(|n| n.parse().unwrap()).collect();
    fn node(rng: &mut ChaCha8Rng, i: usize, j: usize, labels: &[RstLabel]) -> DiscNode {
        if i == j {
            return DiscNode::Leaf(i);
        }
        let k = rng.gen_range(i..j);
        DiscNode::Internal {
            label: labels[rng.gen_range(0..labels.len())].clone(),
            left: Box::new(node(rng, i, k, labels)),
            right: Box::new(node(rng, k + 1, j, labels)),
        }
    }
    let root = node(rng, 1, m, &labels);
    DiscTree { root, edus: (1..=m).map(|i| format!("edu {i} text")).collect() }
}

fn sentence(n: usize) -> Sentence {
    Sentence::new((0..n).map(|i| Token::new(format!("w{}", i % 5), ["NN", "VB", "DT"][i % 3])).collect())
}

fn tiny_dep(variant: Variant, fusion: Fusion, seed: u64) -> DepParser {
    let cfg = DepModelConfig {
        encoder: DepEncoderConfig {
            word_dim: 6,
            pos_dim: 3,
            char_dim: 3,
            char_filters: 4,
            hidden: 6,
            layers: 1,
            ..DepEncoderConfig::default()
        },
        variant,
        fusion,
        decoder_size: 6,
        arc_mlp: 6,
        label_mlp: 4,
        ..DepModelConfig::default()
    };
    let corpus = gen_synthetic_dep(1, 10, 6, 5, 3).unwrap();
    DepParser::from_corpus(cfg, &corpus, seed).unwrap()
}

fn tiny_rst(seed: u64) -> RstParser {
    let cfg = RstModelConfig {
        encoder: RstEncoderConfig { word_dim: 6, hidden: 6, layers: 1, dropout: 0.0 },
        decoder_size: 6,
        label_mlp: 4,
        ..RstModelConfig::default()
    };
    RstParser::from_corpus(cfg, &gen_synthetic_rst(1, 5, 4, 4).unwrap(), LabelSet::rst_prefix(4).unwrap(), seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_order_replays_to_the_tree(tree in arb_tree(12)) {
        let decisions = oracle_order(&tree).unwrap();
        prop_assert_eq!(decisions.len(), 2 * tree.len() + 1);
        prop_assert_eq!(replay(tree.len(), &decisions).unwrap(), tree.heads.clone());
        // Every head completes exactly once, by pointing to itself.
        let mut done: Vec<usize> = decisions.iter().filter(|d| d.head == d.target).map(|d| d.head).collect();
        done.sort_unstable();
        prop_assert_eq!(done, (0..=tree.len()).collect::<Vec<_>>());
    }

    #[test]
    fn conllu_round_trips(trees in proptest::collection::vec(arb_tree(9), 1..5)) {
        let items: Vec<(Sentence, DepTree)> = trees.into_iter().map(|t| (sentence(t.len()), t)).collect();
        let text = format_conllu(items.iter().map(|(s, t)| (s, Some(t))));
        let back = parse_conllu(&text).unwrap();
        prop_assert_eq!(back.len(), items.len());
        for ((s, t), (bs, bt)) in items.iter().zip(&back) {
            prop_assert_eq!(&s.tokens, &bs.tokens);
            prop_assert_eq!(t, bt);
        }
        prop_assert_eq!(format_conllu(back.iter().map(|(s, t)| (s, Some(t)))), text);
    }

    #[test]
    fn bracket_round_trips(trees in proptest::collection::vec(arb_disc_tree(9), 1..5)) {
        let text = format_rst_bracket(&trees);
        let back = parse_rst_bracket(&text).unwrap();
        prop_assert_eq!(&back, &trees);
        prop_assert_eq!(format_rst_bracket(&back), text);
    }

    #[test]
    fn split_oracle_replays_to_the_tree(tree in arb_disc_tree(10)) {
        let targets = oracle_splits(&tree).unwrap();
        prop_assert_eq!(targets.len(), tree.num_edus() - 1);
        let splits: Vec<_> = targets.iter().map(|t| t.to_split()).collect();
        prop_assert_eq!(replay_splits(tree.edus.clone(), &splits).unwrap(), tree.clone());
        prop_assert_eq!(DiscTree::from_splits(tree.edus.clone(), &tree.splits()).unwrap(), tree);
    }

    #[test]
    fn perfect_predictions_score_100(tree in arb_tree(10), disc in arb_disc_tree(8)) {
        let s = sentence(tree.len());
        let dep = score_dep(&s, &tree, &tree, &PunctPolicy::none()).unwrap();
        prop_assert_eq!(dep.uas(), 100.0);
        prop_assert_eq!(dep.las(), 100.0);
        if disc.num_edus() > 1 {
            let p = score_parseval(&disc, &disc, true).unwrap();
            prop_assert_eq!(p.span.f1(), 100.0);
            prop_assert_eq!(p.relation.f1(), 100.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dependency_decoding_yields_valid_trees(n in 1usize..10, seed in 0u64..1000, beam in 1usize..4, kind in 0usize..3) {
        let variant = [Variant::P, Variant::PS, Variant::PST][kind];
        let fusion = [Fusion::Plain, Fusion::Gate, Fusion::SGate][(seed % 3) as usize];
        let parser = tiny_dep(variant, fusion, seed);
        let (tree, parse) = parser.parse(&sentence(n), beam).unwrap();
        tree.validate(false).unwrap();
        prop_assert_eq!(parse.decisions.len(), 2 * n + 1);
        prop_assert_eq!(replay(n, &parse.decisions).unwrap(), tree.heads.clone());
        prop_assert!(parse.log_prob <= 0.0 && parse.log_prob.is_finite());
        // Along the canonical order the search score is the teacher-forced score.
        if parse.decisions == oracle_order(&tree).unwrap() {
            let forced = parser.forced_decode(&parser.index(&sentence(n)), &tree).unwrap();
            prop_assert!((forced - parse.log_prob).abs() < 1e-9, "{} vs {}", forced, parse.log_prob);
        }
    }

    #[test]
    fn discourse_decoding_yields_valid_trees(m in 1usize..9, seed in 0u64..1000) {
        let parser = tiny_rst(seed);
        let edus: Vec<String> = (0..m).map(|i| format!("w{} w{}", i, i + 1)).collect();
        let parse = parser.parse(&edus).unwrap();
        parse.tree.validate().unwrap();
        prop_assert_eq!(&parse.tree.edus, &edus);
        prop_assert_eq!(parse.tree.splits().len(), m - 1);
        // Spans of two EDUs have a single split and need no pointer call.
        prop_assert!(parse.pointer_calls <= m.saturating_sub(2));
        prop_assert!(parse.log_prob <= 0.0);
    }
}

/// Independent re-simulation of the documented dependency generator.
#[test]
fn dependency_generator_matches_its_description() {
    for seed in [0u64, 7, 99] {
        let got = gen_synthetic_dep(seed, 30, 9, 40, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (s, t) in &got {
            let n = rng.gen_range(1..=9usize);
            let words: Vec<String> = (0..n).map(|_| format!("w{}", rng.gen_range(0..40usize))).collect();
            let mut order: Vec<usize> = (1..=n).collect();
            order.shuffle(&mut rng);
            let mut heads = vec![0; n];
            for j in 1..n {
                heads[order[j] - 1] = order[rng.gen_range(0..j)];
            }
            let labels: Vec<String> = (0..n).map(|_| format!("rel{}", rng.gen_range(0..5usize))).collect();
            assert_eq!(s.tokens.iter().map(|t| t.form.clone()).collect::<Vec<_>>(), words);
            assert_eq!(t.heads, heads);
            assert_eq!(t.labels, labels);
        }
    }
}

/// Independent re-simulation of the documented discourse generator.
#[test]
fn discourse_generator_matches_its_description() {
    let names = LabelSet::rst_prefix(6).unwrap();
    let labels: Vec<RstLabel> = names.names().iter().map(|n| n.parse().unwrap()).collect();
    fn node(rng: &mut ChaCha8Rng, i: usize, j: usize, labels: &[RstLabel]) -> DiscNode {
        if i == j {
            return DiscNode::Leaf(i);
        }
        let k = rng.gen_range(i..j);
        let label = labels[rng.gen_range(0..labels.len())].clone();
        let left = node(rng, i, k, labels);
        let right = node(rng, k + 1, j, labels);
        DiscNode::Internal { label, left: Box::new(left), right: Box::new(right) }
    }
    for seed in [1u64, 42] {
        let got = gen_synthetic_rst(seed, 25, 8, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &got {
            let m = rng.gen_range(1..=8usize);
            let edus: Vec<String> = (0..m)
                .map(|_| {
                    let len = rng.gen_range(1..=3usize);
                    (0..len).map(|_| format!("w{}", rng.gen_range(0..200usize))).collect::<Vec<_>>().join(" ")
                })
                .collect();
            let root = node(&mut rng, 1, m, &labels);
            assert_eq!(t, &DiscTree { root, edus });
        }
    }
}
