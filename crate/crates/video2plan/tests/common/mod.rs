//! Shared oracles and randomized-case generators for the integration
//! suites. Every oracle recomputes its expectation independently of the
//! library code it checks: exhaustive search instead of greedy search,
//! longest-path dynamic programming instead of event simulation, and a
//! from-the-formula scorer instead of the production recognizer.
#![allow(dead_code)]

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use video2plan::fixtures::random_canonical_tree;
use video2plan::geometry::BoundingBox;
use video2plan::grammar::TreeRecord;
use video2plan::ingest::{HandKey, Lexicon, ObjectClass};
use video2plan::plan::{ActionGraph, MergedTimeline, TimelineEntry};
use video2plan::recognize::{BigramTable, CorpusTable, RecognizeOptions};
use video2plan::segment::{segment_loglik, MIN_SEGMENT_SAMPLES};
use video2plan::simulate::DurationModel;

// ---------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------

/// Gaussian log-likelihood of one 2-D span, shared by both sides of the
/// segmentation comparison (the oracle checks the *search*, not the
/// likelihood formula, which has its own closed-form tests).
fn span_loglik(points: &[(f64, f64)], start: usize, end: usize, lambda: f64) -> f64 {
    let mut flat = Vec::with_capacity((end - start) * 2);
    for &(x, y) in &points[start..end] {
        flat.push(x);
        flat.push(y);
    }
    segment_loglik(&flat, 2, lambda)
}

/// Total objective of a segmentation given its sorted interior breakpoints.
pub fn segmentation_objective(points: &[(f64, f64)], breakpoints: &[usize], lambda: f64) -> f64 {
    let mut total = 0.0;
    let mut prev = 0;
    for &b in breakpoints.iter().chain(std::iter::once(&points.len())) {
        total += span_loglik(points, prev, b, lambda);
        prev = b;
    }
    total
}

/// Exhaustive-search segmentation oracle: the best objective over *all*
/// placements of at most `max_k` interior breakpoints with segments of
/// at least [`MIN_SEGMENT_SAMPLES`] samples. Exponential in `max_k`;
/// intended for short series only.
pub fn best_segmentation_exhaustive(
    points: &[(f64, f64)],
    lambda: f64,
    max_k: usize,
) -> (f64, Vec<usize>) {
    fn recurse(
        points: &[(f64, f64)],
        lambda: f64,
        chosen: &mut Vec<usize>,
        remaining: usize,
        best: &mut (f64, Vec<usize>),
    ) {
        let obj = segmentation_objective(points, chosen, lambda);
        if obj > best.0 {
            *best = (obj, chosen.clone());
        }
        if remaining == 0 {
            return;
        }
        let floor = chosen.last().map_or(0, |&b| b) + MIN_SEGMENT_SAMPLES;
        for b in floor..=points.len().saturating_sub(MIN_SEGMENT_SAMPLES) {
            chosen.push(b);
            recurse(points, lambda, chosen, remaining - 1, best);
            chosen.pop();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    recurse(points, lambda, &mut Vec::new(), max_k, &mut best);
    best
}

/// Duration-weighted longest path through a plan graph: the one exact
/// value the simulator's makespan must equal. Kahn-style topological
/// dynamic programming over lane and sync edges together.
pub fn longest_path_seconds(graph: &ActionGraph, durations: &DurationModel) -> f64 {
    let n = graph.nodes.len();
    let seconds: Vec<f64> = graph
        .nodes
        .iter()
        .map(|node| durations.duration_of(node).expect("configured duration"))
        .collect();
    let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for &(from, to) in graph.edges.iter().chain(&graph.sync_edges) {
        succs[from].push(to);
        indegree[to] += 1;
    }
    let mut finish: Vec<f64> = seconds.clone();
    let mut queue: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for &s in &succs[v] {
            if finish[v] + seconds[s] > finish[s] {
                finish[s] = finish[v] + seconds[s];
            }
            indegree[s] -= 1;
            if indegree[s] == 0 {
                queue.push(s);
            }
        }
    }
    assert_eq!(seen, n, "oracle requires an acyclic graph");
    finish.into_iter().fold(0.0, f64::max)
}

/// From-the-formula action scorer: `argmax_A log P(A) + Σ w·log P(O|A)`
/// with ingredient words looked up in the recipe table and everything
/// else in the general table, duplicate words counted once, and ties
/// broken toward the lexicographically smaller action.
pub fn naive_bayes_oracle(
    table: &BigramTable,
    words: &[&str],
    opts: &RecognizeOptions,
) -> (String, f64) {
    let mut unique: Vec<&str> = words.to_vec();
    unique.sort_unstable();
    if opts.dedup {
        unique.dedup();
    }

    let mut best_action = String::new();
    let mut best_score = f64::NEG_INFINITY;
    for (action, prior) in &table.general.prior {
        let mut score = prior.ln();
        for word in &unique {
            let class = table.lexicon.class_of(word);
            let corpus = if class == Some(ObjectClass::Ingredient) {
                &table.recipe
            } else {
                &table.general
            };
            let p = match corpus.cond.get(action).and_then(|m| m.get(*word)) {
                Some(&p) => p,
                None => corpus.floor.get(action).copied().unwrap_or(0.0),
            };
            let weight = match class {
                Some(ObjectClass::Tool) => opts.tool_weight,
                Some(ObjectClass::Container) => opts.container_weight,
                Some(ObjectClass::Ingredient) => opts.ingredient_weight,
                None => 1.0,
            };
            score += weight * p.ln();
        }
        if score > best_score {
            best_score = score;
            best_action = action.clone();
        }
    }
    (best_action, best_score)
}

// ---------------------------------------------------------------------
// Randomized-case generators
// ---------------------------------------------------------------------

const WORD_POOL: &[&str] = &[
    "board",
    "bowl",
    "chicken",
    "cup",
    "dough",
    "flour",
    "knife",
    "lemon",
    "meat",
    "oil",
    "onion",
    "pan",
    "patty",
    "pot",
    "rolling_pin",
    "spoon",
];

const ACTION_POOL: &[&str] = &[
    "cut", "spread", "grip", "stir", "sprinkle", "squeeze", "heat", "wrap", "roll", "pour", "coat",
];

/// A random lexicon over the word pool with arbitrary class assignments.
pub fn random_lexicon(rng: &mut ChaCha8Rng) -> Lexicon {
    let mut lexicon = Lexicon::new();
    for word in WORD_POOL {
        let class = match rng.random_range(0..3) {
            0 => ObjectClass::Tool,
            1 => ObjectClass::Container,
            _ => ObjectClass::Ingredient,
        };
        lexicon.insert(*word, class);
    }
    lexicon
}

fn random_corpus(rng: &mut ChaCha8Rng, actions: &[&str]) -> CorpusTable {
    let mut prior = BTreeMap::new();
    let raw: Vec<f64> = actions.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    for (action, weight) in actions.iter().zip(&raw) {
        prior.insert(action.to_string(), weight / total);
    }

    let mut cond: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut floor = BTreeMap::new();
    for action in actions {
        let mut per_word = BTreeMap::new();
        for word in WORD_POOL {
            if rng.random_bool(0.4) {
                per_word.insert(word.to_string(), rng.random_range(1e-4..0.2));
            }
        }
        cond.insert(action.to_string(), per_word);
        floor.insert(action.to_string(), rng.random_range(1e-7..1e-5));
    }
    CorpusTable { prior, cond, floor }
}

/// A random valid co-occurrence table over 2–11 actions.
pub fn random_table(rng: &mut ChaCha8Rng) -> BigramTable {
    let count = rng.random_range(2..=ACTION_POOL.len());
    let mut actions: Vec<&str> = ACTION_POOL.to_vec();
    for i in (1..actions.len()).rev() {
        actions.swap(i, rng.random_range(0..=i));
    }
    actions.truncate(count);
    actions.sort_unstable();

    let table = BigramTable {
        epsilon: rng.random_range(1e-8..1e-5),
        lexicon: random_lexicon(rng),
        general: random_corpus(rng, &actions),
        recipe: random_corpus(rng, &actions),
    };
    table.validate().expect("generator produces valid tables");
    table
}

/// Random recognition weights, occasionally non-uniform.
pub fn random_options(rng: &mut ChaCha8Rng) -> RecognizeOptions {
    RecognizeOptions {
        tool_weight: rng.random_range(0.5..2.0),
        container_weight: rng.random_range(0.5..2.0),
        ingredient_weight: rng.random_range(0.5..2.0),
        dedup: rng.random_bool(0.5),
    }
}

/// A non-empty random word multiset (with possible duplicates).
pub fn random_words(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let count = rng.random_range(1..=5);
    (0..count)
        .map(|_| WORD_POOL[rng.random_range(0..WORD_POOL.len())])
        .collect()
}

/// Random per-segment tree records on a shared span grid, the shape
/// `merge_segments` consumes: 1–6 consecutive segments, each hand
/// present in most of them.
pub fn random_records(rng: &mut ChaCha8Rng) -> Vec<TreeRecord> {
    let hands: Vec<HandKey> = ["LH_P1", "RH_P1", "RH_P2"]
        .iter()
        .take(rng.random_range(1..=3))
        .map(|s| s.parse().unwrap())
        .collect();
    let segments = rng.random_range(1..=6);
    let mut records = Vec::new();
    let mut start = 0u64;
    for _ in 0..segments {
        let end = start + rng.random_range(30..=120);
        for hand in &hands {
            if rng.random_bool(0.8) {
                let grasp_id = rng
                    .random_bool(0.7)
                    .then(|| format!("obj{}", rng.random_range(0..3)));
                records.push(TreeRecord {
                    hand: hand.clone(),
                    start_frame: start,
                    end_frame: end,
                    grasp_id,
                    tree: random_canonical_tree(rng),
                });
            }
        }
        start = end;
    }
    records
}

/// Flatten a merged timeline back into per-entry records so it can be
/// merged a second time.
pub fn records_of(timeline: &MergedTimeline) -> Vec<TreeRecord> {
    let mut records = Vec::new();
    for TimelineEntry {
        start_frame,
        end_frame,
        trees,
    } in &timeline.entries
    {
        for (hand, hand_tree) in trees {
            records.push(TreeRecord {
                hand: hand.clone(),
                start_frame: *start_frame,
                end_frame: *end_frame,
                grasp_id: hand_tree.grasp_id.clone(),
                tree: hand_tree.tree.clone(),
            });
        }
    }
    records
}

/// Random records restricted to the shapes the planner executes, which
/// is exactly what recognition emits per segment: the tree's outer hand
/// is the record's hand, at most one attachment, collaborative events
/// stand alone in their segment with a distinct partner, and transfer
/// chains name ingredient, source, and destination. Arbitrary canonical
/// trees (multiple attachments, a hand partnering itself) are valid
/// grammar but have no execution, so [`random_records`] keeps producing
/// them for the merge-only properties while this generator feeds the
/// plan stage.
pub fn random_plannable_records(rng: &mut ChaCha8Rng) -> Vec<TreeRecord> {
    use video2plan::grammar::{ActionTree, PhraseLabel, Terminal};
    use video2plan::recognize::ActionLabel;

    const POOL: [&str; 3] = ["LH_P1", "RH_P1", "RH_P2"];
    let hands: Vec<HandKey> = POOL
        .iter()
        .take(rng.random_range(1..=3))
        .map(|s| s.parse().unwrap())
        .collect();

    let object_leaf = |rng: &mut ChaCha8Rng| {
        ActionTree::Leaf(Terminal::object(
            WORD_POOL[rng.random_range(0..WORD_POOL.len())],
        ))
    };
    let individual = |rng: &mut ChaCha8Rng| -> ActionLabel {
        ACTION_POOL[rng.random_range(0..ACTION_POOL.len())]
            .parse()
            .unwrap()
    };
    let chain = |rng: &mut ChaCha8Rng, len: usize| {
        let mut words: Vec<ActionTree> = (0..len).map(|_| object_leaf(rng)).collect();
        let mut chain = {
            let last = words.pop().unwrap();
            let prev = words.pop().unwrap();
            ActionTree::Phrase(PhraseLabel::OP, vec![prev, last])
        };
        while let Some(word) = words.pop() {
            chain = ActionTree::Phrase(PhraseLabel::OP, vec![word, chain]);
        }
        chain
    };
    let base = |rng: &mut ChaCha8Rng, hand: &HandKey| {
        ActionTree::Phrase(
            PhraseLabel::HP,
            vec![
                ActionTree::Leaf(Terminal::hand(hand.clone())),
                object_leaf(rng),
            ],
        )
    };
    let attach = |inner: ActionTree, attachment: ActionTree| {
        ActionTree::Phrase(PhraseLabel::HP, vec![inner, attachment])
    };
    let grasp_id = |rng: &mut ChaCha8Rng| {
        rng.random_bool(0.7)
            .then(|| format!("obj{}", rng.random_range(0..3)))
    };

    let mut records = Vec::new();
    let segments = rng.random_range(1..=6);
    let mut start = 0u64;
    for _ in 0..segments {
        let end = start + rng.random_range(30..=120);
        if rng.random_bool(0.25) {
            // A collaborative segment: one event, one record, partner
            // drawn from the other hands.
            let agent = &hands[rng.random_range(0..hands.len())];
            let partner: HandKey = loop {
                let candidate: HandKey = POOL[rng.random_range(0..POOL.len())].parse().unwrap();
                if &candidate != agent {
                    break candidate;
                }
            };
            let partner_phrase = base(rng, &partner);
            let attachment = if rng.random_bool(0.5) {
                // Tool work on the partner's held object.
                ActionTree::Phrase(
                    PhraseLabel::AP,
                    vec![
                        ActionTree::Leaf(Terminal::action(individual(rng)).unwrap()),
                        partner_phrase,
                    ],
                )
            } else {
                let collab = if rng.random_bool(0.5) {
                    ActionLabel::Handover
                } else {
                    ActionLabel::Holding
                };
                ActionTree::Phrase(
                    PhraseLabel::CP,
                    vec![
                        ActionTree::Leaf(Terminal::collab(collab).unwrap()),
                        partner_phrase,
                    ],
                )
            };
            records.push(TreeRecord {
                hand: agent.clone(),
                start_frame: start,
                end_frame: end,
                grasp_id: grasp_id(rng),
                tree: attach(base(rng, agent), attachment),
            });
        } else {
            for hand in &hands {
                if !rng.random_bool(0.8) {
                    continue;
                }
                let inner = base(rng, hand);
                let tree = match rng.random_range(0..4) {
                    // A bare grasp.
                    0 => inner,
                    // One target.
                    1 => attach(
                        inner,
                        ActionTree::Phrase(
                            PhraseLabel::AP,
                            vec![
                                ActionTree::Leaf(Terminal::action(individual(rng)).unwrap()),
                                object_leaf(rng),
                            ],
                        ),
                    ),
                    // A target chain.
                    2 => {
                        let len = rng.random_range(2..=4);
                        attach(
                            inner,
                            ActionTree::Phrase(
                                PhraseLabel::AP,
                                vec![
                                    ActionTree::Leaf(Terminal::action(individual(rng)).unwrap()),
                                    chain(rng, len),
                                ],
                            ),
                        )
                    }
                    // A transfer: ingredient, source, destination.
                    _ => attach(
                        inner,
                        ActionTree::Phrase(
                            PhraseLabel::AP,
                            vec![
                                ActionTree::Leaf(
                                    Terminal::action(ActionLabel::Transfer).unwrap(),
                                ),
                                chain(rng, 3),
                            ],
                        ),
                    ),
                };
                records.push(TreeRecord {
                    hand: hand.clone(),
                    start_frame: start,
                    end_frame: end,
                    grasp_id: grasp_id(rng),
                    tree,
                });
            }
        }
        start = end;
    }
    records
}

/// A random box; roughly one in ten is degenerate (zero or negative
/// extent).
pub fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox<f64> {
    let degenerate = rng.random_bool(0.1);
    BoundingBox::new(
        rng.random_range(-50.0..1200.0),
        rng.random_range(-50.0..700.0),
        if degenerate {
            rng.random_range(-10.0..=0.0)
        } else {
            rng.random_range(1.0..300.0)
        },
        if degenerate {
            rng.random_range(-10.0..=0.0)
        } else {
            rng.random_range(1.0..300.0)
        },
    )
}

// ---------------------------------------------------------------------
// Property families, parameterized by case count so the acceptance
// suite and the dedicated property tests share one implementation.
// ---------------------------------------------------------------------

/// Merging a timeline's own flattened records must reproduce it.
pub fn check_merge_idempotence(cases: usize) {
    use video2plan::plan::merge_segments;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fixture_lexicon = video2plan::fixtures::fixture_lexicon();
    for case in 0..cases {
        let lexicon = if case % 2 == 0 {
            fixture_lexicon.clone()
        } else {
            random_lexicon(&mut rng)
        };
        let records = random_records(&mut rng);
        let once = merge_segments(&records, &lexicon);
        let twice = merge_segments(&records_of(&once), &lexicon);
        assert_eq!(once, twice, "merge is not idempotent (case {case})");
    }
}

/// Jaccard overlap is symmetric, 1 on self for positive-area boxes, 0
/// for degenerate ones, and always inside [0, 1]. The free function and
/// the box method must agree exactly.
pub fn check_jaccard_properties(cases: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for case in 0..cases {
        let a = random_box(&mut rng);
        let b = random_box(&mut rng);
        let ab = a.jaccard(&b);
        assert_eq!(ab, b.jaccard(&a), "asymmetric (case {case})");
        assert_eq!(
            ab,
            video2plan::associate::jaccard(&a, &b),
            "method and free function disagree (case {case})"
        );
        assert!((0.0..=1.0).contains(&ab), "out of range (case {case})");
        if a.area() > 0.0 {
            // Self-overlap is 1 up to rounding: the intersection width is
            // computed as (x + w) - x, which can differ from w by an ulp
            // when |x| dwarfs w.
            let own = a.jaccard(&a);
            assert!(
                (own - 1.0).abs() <= 1e-9,
                "self-overlap {own} not 1 (case {case})"
            );
        } else {
            assert_eq!(a.jaccard(&b), 0.0, "degenerate overlap (case {case})");
        }
    }
}

/// The production recognizer must equal the from-the-formula oracle,
/// and its argmax must survive word permutation and uniform scaling of
/// all conditional probabilities.
pub fn check_recognition_oracle(cases: usize) {
    use video2plan::recognize::recognize_individual;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..cases {
        let table = random_table(&mut rng);
        let opts = random_options(&mut rng);
        let mut words = random_words(&mut rng);

        let (label, score) = recognize_individual(&words, &table, &opts);
        let (oracle_label, oracle_score) = naive_bayes_oracle(&table, &words, &opts);
        assert_eq!(label.as_str(), oracle_label, "oracle mismatch (case {case})");
        assert!(
            (score - oracle_score).abs() <= 1e-9 * score.abs().max(1.0),
            "score drift (case {case}): {score} vs {oracle_score}"
        );

        // Permutation invariance: word order carries no information.
        for i in (1..words.len()).rev() {
            let j = rng.random_range(0..=i);
            words.swap(i, j);
        }
        let (permuted_label, permuted_score) = recognize_individual(&words, &table, &opts);
        assert_eq!(label, permuted_label, "order-sensitive (case {case})");
        assert_eq!(score, permuted_score, "order-sensitive score (case {case})");

        // Scale invariance: multiplying every conditional (and floor) by
        // one constant shifts all scores equally, so the argmax holds.
        let factor = rng.random_range(0.5..2.0);
        let mut scaled = table.clone();
        for corpus in [&mut scaled.general, &mut scaled.recipe] {
            for per_word in corpus.cond.values_mut() {
                for p in per_word.values_mut() {
                    *p *= factor;
                }
            }
            for p in corpus.floor.values_mut() {
                *p *= factor;
            }
        }
        let (scaled_label, _) = recognize_individual(&words, &scaled, &opts);
        assert_eq!(label, scaled_label, "scale-sensitive (case {case})");
    }
}

/// Every persisted artifact type must reload to an equal value:
/// streams, tables, segment lists, tree files, plans, and traces.
pub fn check_roundtrips(cases: usize) {
    use std::collections::BTreeSet;
    use video2plan::fixtures::SceneBuilder;
    use video2plan::grammar::{load_trees, save_trees};
    use video2plan::ingest::{load_stream, save_lexicon, save_stream};
    use video2plan::plan::{build_graph, load_plan, merge_segments, save_plan, PrimitiveLibrary};
    use video2plan::segment::{load_segments, save_segments, Segment};
    use video2plan::simulate::{load_trace, save_trace};

    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let lexicon = video2plan::fixtures::fixture_lexicon();
    let library = PrimitiveLibrary::default();
    for case in 0..cases {
        match case % 5 {
            0 => {
                let table = random_table(&mut rng);
                let path = dir.path().join("table.json");
                table.save(&path).unwrap();
                assert_eq!(BigramTable::load(&path).unwrap(), table, "case {case}");
            }
            1 => {
                let records = random_records(&mut rng);
                let path = dir.path().join("trees.txt");
                save_trees(&records, &path).unwrap();
                assert_eq!(load_trees(&path).unwrap(), records, "case {case}");
            }
            2 => {
                let mut segments = Vec::new();
                let mut start = 0;
                for _ in 0..rng.random_range(1..=5) {
                    let end = start + rng.random_range(10..=200);
                    let mut sources = BTreeSet::new();
                    for hand in ["LH_P1", "RH_P1", "RH_P2"] {
                        if rng.random_bool(0.5) {
                            sources.insert(hand.parse::<HandKey>().unwrap());
                        }
                    }
                    segments.push(Segment {
                        start_frame: start,
                        end_frame: end,
                        sources,
                    });
                    start = end;
                }
                let path = dir.path().join("segments.txt");
                save_segments(&segments, &path).unwrap();
                assert_eq!(load_segments(&path).unwrap(), segments, "case {case}");
            }
            3 => {
                let records = random_plannable_records(&mut rng);
                let timeline = merge_segments(&records, &lexicon);
                let graph = build_graph(&timeline, &library)
                    .unwrap_or_else(|e| panic!("graph build failed (case {case}): {e}"));
                let plan_path = dir.path().join("plan.json");
                save_plan(&graph, &plan_path).unwrap();
                assert_eq!(load_plan(&plan_path).unwrap(), graph, "case {case}");

                let trace = video2plan::simulate::run(&graph, &DurationModel::default())
                    .unwrap_or_else(|e| panic!("simulation failed (case {case}): {e}"));
                let trace_path = dir.path().join("trace.csv");
                save_trace(&trace, &trace_path).unwrap();
                assert_eq!(load_trace(&trace_path).unwrap(), trace, "case {case}");
            }
            _ => {
                let mut scene = SceneBuilder::new(rng.random());
                scene.hand("RH_P1", (rng.random_range(100.0..900.0), 400.0));
                scene.object("obj0", "knife", (640.0, 450.0), (100.0, 24.0));
                scene.dwell(rng.random_range(1..=20));
                scene.glide("RH_P1", (rng.random_range(100.0..900.0), 300.0), 5);
                let stream = scene.finish();
                let stream_path = dir.path().join("stream.jsonl");
                let lexicon_path = dir.path().join("lexicon.json");
                save_stream(&stream, &stream_path).unwrap();
                save_lexicon(&stream.lexicon, &lexicon_path).unwrap();
                assert_eq!(
                    load_stream(&stream_path, &lexicon_path).unwrap(),
                    stream,
                    "case {case}"
                );
            }
        }
    }
}
