//! Action recognition over segment associations.
//!
//! Individual actions are inferred by naive Bayes over corpus
//! co-occurrence statistics: the most likely action given the objects in
//! play maximises `log P(A) + Σ log P(Oₖ | A)`. Conditionals for tools
//! and containers come from a general-purpose corpus, conditionals for
//! ingredients from a recipe corpus, both ε-smoothed so unseen words
//! never zero out a product. On top of that, object identity over time
//! yields transfer events (an ingredient's container changes) and
//! collaborative events (handover when the grasping person changes,
//! holding when two persons grasp simultaneously, and assisted actions
//! when one person's tool works an object the other person is holding).

use crate::associate::{AssociationRecord, FrameRuns, LinkKind};
use crate::error::{Error, Result};
use crate::ingest::{HandKey, Lexicon, ObjectClass};
use crate::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

/// The closed action vocabulary: individual manipulation actions, the
/// transfer action, and the two collaborative actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionLabel {
    Cut,
    Spread,
    Grip,
    Stir,
    Sprinkle,
    Squeeze,
    Heat,
    Wrap,
    Roll,
    Pour,
    Coat,
    Transfer,
    Handover,
    Holding,
}

impl ActionLabel {
    /// The individual actions a bigram table scores.
    pub const INDIVIDUAL: [ActionLabel; 11] = [
        ActionLabel::Cut,
        ActionLabel::Spread,
        ActionLabel::Grip,
        ActionLabel::Stir,
        ActionLabel::Sprinkle,
        ActionLabel::Squeeze,
        ActionLabel::Heat,
        ActionLabel::Wrap,
        ActionLabel::Roll,
        ActionLabel::Pour,
        ActionLabel::Coat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionLabel::Cut => "cut",
            ActionLabel::Spread => "spread",
            ActionLabel::Grip => "grip",
            ActionLabel::Stir => "stir",
            ActionLabel::Sprinkle => "sprinkle",
            ActionLabel::Squeeze => "squeeze",
            ActionLabel::Heat => "heat",
            ActionLabel::Wrap => "wrap",
            ActionLabel::Roll => "roll",
            ActionLabel::Pour => "pour",
            ActionLabel::Coat => "coat",
            ActionLabel::Transfer => "transfer",
            ActionLabel::Handover => "handover",
            ActionLabel::Holding => "holding",
        }
    }

    pub fn is_individual(self) -> bool {
        Self::INDIVIDUAL.contains(&self)
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidInput(format!("unknown action label {s:?}")))
    }
}

/// Statistics extracted from one corpus: action priors, conditional
/// object probabilities, and the per-action smoothing floor applied to
/// object words never seen with that action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTable {
    /// P(A) per action; sums to 1 over the table's action set.
    pub prior: BTreeMap<String, Scalar>,
    /// P(O|A) per action for object words co-occurring with it.
    pub cond: BTreeMap<String, BTreeMap<String, Scalar>>,
    /// P(O|A) for object words that never co-occurred with the action.
    pub floor: BTreeMap<String, Scalar>,
}

impl CorpusTable {
    /// P(O|A), falling back to the action's smoothing floor.
    pub fn conditional(&self, action: &str, word: &str) -> Scalar {
        self.cond
            .get(action)
            .and_then(|m| m.get(word))
            .or_else(|| self.floor.get(action))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Bigram statistics from both corpora plus the object lexicon they were
/// built against, so recognition needs no further inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramTable {
    pub epsilon: Scalar,
    pub lexicon: Lexicon,
    pub general: CorpusTable,
    pub recipe: CorpusTable,
}

impl BigramTable {
    /// Check structural invariants: both sub-tables cover the same action
    /// set, every action word is a known individual action, priors sum to
    /// 1, and every probability sits in (0, 1].
    pub fn validate(&self) -> Result<()> {
        let actions: Vec<&String> = self.general.prior.keys().collect();
        if actions.is_empty() {
            return Err(Error::Config("bigram table has no actions".into()));
        }
        for sub in [&self.general, &self.recipe] {
            if sub.prior.keys().ne(actions.iter().copied()) {
                return Err(Error::Config(
                    "general and recipe tables cover different action sets".into(),
                ));
            }
            let sum: Scalar = sub.prior.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("action priors sum to {sum}, not 1")));
            }
            let in_range = |p: &Scalar| *p > 0.0 && *p <= 1.0;
            if !sub.prior.values().all(in_range)
                || !sub.floor.values().all(in_range)
                || !sub.cond.values().flat_map(|m| m.values()).all(in_range)
            {
                return Err(Error::Config("probability outside (0, 1]".into()));
            }
            for action in &sub.floor {
                if !sub.prior.contains_key(action.0) {
                    return Err(Error::Config(format!("floor for unknown action {:?}", action.0)));
                }
            }
        }
        for action in actions {
            let parsed: ActionLabel = action.parse()?;
            if !parsed.is_individual() {
                return Err(Error::Config(format!(
                    "{action:?} is not an individual action"
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), json + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BigramTable> {
        let file = std::fs::File::open(path.as_ref())?;
        let table: BigramTable = serde_json::from_reader(BufReader::new(file))?;
        table.validate()?;
        Ok(table)
    }
}

/// Split corpus text into sentences (per line, then on `.`, `!`, `?`,
/// `;`) and each sentence into lower-case word tokens. Underscores count
/// as word characters so multi-word object labels can appear as single
/// tokens.
fn sentences(text: &str) -> Vec<BTreeSet<String>> {
    let mut out = Vec::new();
    for line in text.lines() {
        for sentence in line.split(['.', '!', '?', ';']) {
            let words: BTreeSet<String> = sentence
                .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                .filter(|w| !w.is_empty())
                .map(|w| w.to_lowercase())
                .collect();
            if !words.is_empty() {
                out.push(words);
            }
        }
    }
    out
}

/// Count sentence co-occurrences of each (action, object word) pair in
/// `text` and convert them to ε-smoothed probabilities.
///
/// `P(O|A) = (co-occurrences + ε) / (action count + ε·|objects|)` and
/// `P(A) = (action count + ε) / (total + ε·|actions|)`, so priors always
/// sum to 1 and no probability is ever zero for ε > 0. An action absent
/// from the corpus gets the smoothed prior and a warning.
pub fn build_corpus_table(
    text: &str,
    actions: &[String],
    object_words: &[String],
    epsilon: Scalar,
) -> Result<CorpusTable> {
    let sentences = sentences(text);
    if sentences.is_empty() {
        return Err(Error::InvalidInput("empty corpus".into()));
    }
    if actions.is_empty() {
        return Err(Error::InvalidInput("empty action set".into()));
    }

    let mut action_count: BTreeMap<&str, u64> = actions.iter().map(|a| (a.as_str(), 0)).collect();
    let mut joint: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for sentence in &sentences {
        for action in actions {
            if !sentence.contains(action.as_str()) {
                continue;
            }
            *action_count.get_mut(action.as_str()).unwrap() += 1;
            for word in object_words {
                if sentence.contains(word.as_str()) {
                    *joint.entry((action.as_str(), word.as_str())).or_insert(0) += 1;
                }
            }
        }
    }

    let total: u64 = action_count.values().sum();
    let n_actions = actions.len() as Scalar;
    let n_objects = object_words.len().max(1) as Scalar;

    let mut prior = BTreeMap::new();
    let mut cond: BTreeMap<String, BTreeMap<String, Scalar>> = BTreeMap::new();
    let mut floor = BTreeMap::new();
    for (action, &count) in &action_count {
        if count == 0 {
            log::warn!("action {action:?} never appears in the corpus; prior is smoothed to the floor");
        }
        prior.insert(
            action.to_string(),
            (count as Scalar + epsilon) / (total as Scalar + epsilon * n_actions),
        );
        let denom = count as Scalar + epsilon * n_objects;
        floor.insert(action.to_string(), epsilon / denom);
        let mut per_word = BTreeMap::new();
        for word in object_words {
            if let Some(&j) = joint.get(&(*action, word.as_str())) {
                per_word.insert(word.clone(), (j as Scalar + epsilon) / denom);
            }
        }
        cond.insert(action.to_string(), per_word);
    }

    Ok(CorpusTable { prior, cond, floor })
}

/// Build the full bigram table: general corpus for tool/container
/// statistics (and the prior), recipe corpus for ingredient statistics.
pub fn build_bigram_table(
    general_text: &str,
    recipe_text: &str,
    actions: &[String],
    lexicon: &Lexicon,
    epsilon: Scalar,
) -> Result<BigramTable> {
    let object_words: Vec<String> = lexicon.labels().map(|(l, _)| l.to_string()).collect();
    let table = BigramTable {
        epsilon,
        lexicon: lexicon.clone(),
        general: build_corpus_table(general_text, actions, &object_words, epsilon)?,
        recipe: build_corpus_table(recipe_text, actions, &object_words, epsilon)?,
    };
    table.validate()?;
    Ok(table)
}

/// Recognition knobs: per-class log-probability weights and label
/// deduplication (two onions count once).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognizeOptions {
    pub tool_weight: Scalar,
    pub container_weight: Scalar,
    pub ingredient_weight: Scalar,
    pub dedup: bool,
}

impl Default for RecognizeOptions {
    fn default() -> Self {
        RecognizeOptions {
            tool_weight: 1.0,
            container_weight: 1.0,
            ingredient_weight: 1.0,
            dedup: true,
        }
    }
}

impl RecognizeOptions {
    fn weight(&self, class: Option<ObjectClass>) -> Scalar {
        match class {
            Some(ObjectClass::Tool) => self.tool_weight,
            Some(ObjectClass::Container) => self.container_weight,
            Some(ObjectClass::Ingredient) => self.ingredient_weight,
            None => 1.0,
        }
    }
}

/// Most likely individual action for a set of object words:
/// `argmax_A log P(A) + Σ w(Oₖ)·log P(Oₖ|A)`, with ingredient words
/// scored by the recipe table and everything else (plus the prior) by
/// the general table. Ties break lexicographically by action name.
pub fn recognize_individual(
    words: &[&str],
    table: &BigramTable,
    opts: &RecognizeOptions,
) -> (ActionLabel, Scalar) {
    assert!(!words.is_empty(), "need at least one object word");
    let unique: Vec<&str> = if opts.dedup {
        let set: BTreeSet<&str> = words.iter().copied().collect();
        set.into_iter().collect()
    } else {
        let mut sorted: Vec<&str> = words.to_vec();
        sorted.sort_unstable();
        sorted
    };

    let mut best: Option<(Scalar, &str)> = None;
    for (action, prior) in &table.general.prior {
        let mut score = prior.ln();
        for word in &unique {
            let class = table.lexicon.class_of(word);
            let sub = match class {
                Some(ObjectClass::Ingredient) => &table.recipe,
                _ => &table.general,
            };
            score += opts.weight(class) * sub.conditional(action, word).ln();
        }
        // Strictly-greater keeps the first (lexicographically smallest)
        // action on ties, since BTreeMap iterates in key order.
        if best.map_or(true, |(b, _)| score > b) {
            best = Some((score, action));
        }
    }
    let (score, action) = best.expect("validated tables are non-empty");
    let label = action.parse().expect("validated tables hold known actions");
    (label, score)
}

/// An object reference carried through recognition: instance id + label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjRef {
    pub id: String,
    pub label: String,
}

/// One hand's recognized activity in a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandSummary {
    pub hand: HandKey,
    pub grasped: ObjRef,
    /// `None` means the hand merely holds the object.
    pub action: Option<ActionLabel>,
    /// Log-probability of the recognized action; absent for forced
    /// labels (transfer) and bare grasps.
    pub score: Option<Scalar>,
    /// Ordered objects the action works on: `[target]`,
    /// `[ingredient, container]`, or `[ingredient, source, destination]`
    /// for transfers.
    pub targets: Vec<ObjRef>,
    /// When the action's target is an object held by another person's
    /// hand, that hand and object (the sentence embeds the partner's
    /// hand phrase instead of a plain target).
    pub assisted_by: Option<(HandKey, ObjRef)>,
    /// True when a collaborative event subsumes this hand's activity, so
    /// no individual sentence should be built from it.
    pub suppressed: bool,
    /// Frames the grasp persisted; downstream identity for plan
    /// transitioning.
    pub grasp_support: FrameRuns,
}

/// A collaborative event recognized in a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollabEvent {
    /// `handover`, `holding`, or the actor's individual action for
    /// assisted (tool-on-held-object) collaborations.
    pub label: ActionLabel,
    pub object: ObjRef,
    /// Giver (handover), first holder (holding), or holder (assisted).
    pub giver_or_holder: HandKey,
    /// Receiver (handover), second holder (holding), or actor (assisted).
    pub receiver_or_actor: HandKey,
}

/// All recognition results for one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognizedSegment {
    pub segment: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub fps: Scalar,
    pub hands: Vec<HandSummary>,
    pub collaborations: Vec<CollabEvent>,
}

/// A detected transfer: `ingredient` moved `source` → `destination`,
/// reported at the first segment where the destination holds it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransferEvent {
    pub ingredient: String,
    pub source: String,
    pub destination: String,
    pub segment: usize,
}

/// Temporal detection thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionParams {
    /// Two persons grasping one object at least this long is a holding
    /// collaboration; shorter simultaneous grasps can be handovers.
    pub holding_min_s: Scalar,
    /// Maximum gap between giver release and receiver grasp for a
    /// handover (annotations may miss the exact exchange frames).
    pub handover_gap_s: Scalar,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            holding_min_s: 0.5,
            handover_gap_s: 1.0,
        }
    }
}

/// Ordered container observations per ingredient id:
/// `(segment id, container id)` wherever a ContainerHolds link was
/// recorded.
pub fn container_history(records: &[AssociationRecord]) -> BTreeMap<String, Vec<(usize, String)>> {
    let mut history: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
    for record in records {
        for link in &record.object_links {
            if link.kind == LinkKind::ContainerHolds {
                history
                    .entry(link.target.clone())
                    .or_default()
                    .push((record.segment, link.source.clone()));
            }
        }
    }
    for observations in history.values_mut() {
        observations.sort();
    }
    history
}

/// Detect transfers: for each ingredient whose container changes between
/// consecutive observations, emit one event at the first segment where
/// the new container holds it. Gaps in observation are tolerated — only
/// actual container changes count.
pub fn detect_transfer(history: &BTreeMap<String, Vec<(usize, String)>>) -> Vec<TransferEvent> {
    let mut events = Vec::new();
    for (ingredient, observations) in history {
        for pair in observations.windows(2) {
            let (_, ref c1) = pair[0];
            let (seg2, ref c2) = pair[1];
            if c1 != c2 {
                events.push(TransferEvent {
                    ingredient: ingredient.clone(),
                    source: c1.clone(),
                    destination: c2.clone(),
                    segment: seg2,
                });
            }
        }
    }
    events.sort();
    events
}

/// Merged grasp intervals per object id: which hands held it, where.
pub fn grasp_history(records: &[AssociationRecord]) -> BTreeMap<String, BTreeMap<HandKey, FrameRuns>> {
    let mut history: BTreeMap<String, BTreeMap<HandKey, FrameRuns>> = BTreeMap::new();
    for record in records {
        for link in &record.hand_links {
            let entry = history
                .entry(link.object.clone())
                .or_default()
                .entry(link.hand.clone())
                .or_default();
            *entry = entry.union(&link.support);
        }
    }
    history
}

/// A collaborative event pinned to a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollabDetection {
    pub segment: usize,
    pub event: CollabEvent,
}

/// Detect handover and holding collaborations from grasp history.
///
/// For each object grasped by hands of two different persons: a long
/// simultaneous grasp is a holding (emitted in every segment it covers
/// persistently); a short-or-no overlap with the grasping person
/// changing within the gap tolerance is a handover (emitted where the
/// receiver first grasps).
pub fn detect_collaboration(
    history: &BTreeMap<String, BTreeMap<HandKey, FrameRuns>>,
    records: &[AssociationRecord],
    params: &DetectionParams,
) -> Vec<CollabDetection> {
    let fps = records.first().map_or(30.0, |r| r.fps);
    let holding_min = (params.holding_min_s * fps).round() as u64;
    let gap_frames = (params.handover_gap_s * fps).round() as u64;
    let segment_of = |frame: u64| -> Option<usize> {
        records
            .iter()
            .find(|r| r.start_frame <= frame && frame < r.end_frame)
            .map(|r| r.segment)
    };

    let labels: BTreeMap<&str, &str> = records
        .iter()
        .flat_map(|r| r.hand_links.iter())
        .map(|l| (l.object.as_str(), l.label.as_str()))
        .collect();

    let mut detections = Vec::new();
    for (object, grasps) in history {
        let hands: Vec<(&HandKey, &FrameRuns)> = grasps.iter().collect();
        for i in 0..hands.len() {
            for j in i + 1..hands.len() {
                let (ha, sa) = hands[i];
                let (hb, sb) = hands[j];
                if ha.person == hb.person {
                    continue;
                }
                // Order the pair by first grasp frame.
                let (first, fs, second, ss) = if sa.first() <= sb.first() {
                    (ha, sa, hb, sb)
                } else {
                    (hb, sb, ha, sa)
                };
                let overlap = fs.intersect(ss);
                let obj_ref = ObjRef {
                    id: object.clone(),
                    label: labels.get(object.as_str()).unwrap_or(&"").to_string(),
                };
                if overlap.total() >= holding_min {
                    // Sustained joint grasp → holding, in each segment the
                    // overlap persistently covers.
                    for record in records {
                        let span = FrameRuns::span(record.start_frame, record.end_frame);
                        if overlap.intersect(&span).total() >= holding_min.min(span.total()) {
                            detections.push(CollabDetection {
                                segment: record.segment,
                                event: CollabEvent {
                                    label: ActionLabel::Holding,
                                    object: obj_ref.clone(),
                                    giver_or_holder: first.clone(),
                                    receiver_or_actor: second.clone(),
                                },
                            });
                        }
                    }
                } else {
                    // Grasper changes: handover if the receiver picks up
                    // within the gap tolerance and keeps the object last.
                    let (Some(first_end), Some(second_start), Some(second_end)) =
                        (fs.last_end(), ss.first(), ss.last_end())
                    else {
                        continue;
                    };
                    let adjacent = second_start <= first_end + gap_frames;
                    let keeps_it = second_end > first_end;
                    if adjacent && keeps_it {
                        if let Some(segment) = segment_of(second_start) {
                            detections.push(CollabDetection {
                                segment,
                                event: CollabEvent {
                                    label: ActionLabel::Handover,
                                    object: obj_ref,
                                    giver_or_holder: first.clone(),
                                    receiver_or_actor: second.clone(),
                                },
                            });
                        }
                    }
                }
            }
        }
    }
    detections.sort_by(|a, b| {
        (a.segment, &a.event.object, &a.event.giver_or_holder)
            .cmp(&(b.segment, &b.event.object, &b.event.giver_or_holder))
    });
    detections
}

/// Run full recognition over a stream's association records: individual
/// actions per hand, transfers, and collaborations, with the suppression
/// rules between them applied.
pub fn recognize_segments(
    records: &[AssociationRecord],
    table: &BigramTable,
    opts: &RecognizeOptions,
    params: &DetectionParams,
) -> Vec<RecognizedSegment> {
    let transfers = detect_transfer(&container_history(records));
    let collabs = detect_collaboration(&grasp_history(records), records, params);
    let labels: BTreeMap<String, String> = records
        .iter()
        .flat_map(|r| {
            r.hand_links
                .iter()
                .map(|l| (l.object.clone(), l.label.clone()))
                .chain(r.object_links.iter().flat_map(|l| {
                    [
                        (l.source.clone(), l.source_label.clone()),
                        (l.target.clone(), l.target_label.clone()),
                    ]
                }))
        })
        .collect();
    let obj_ref = |id: &str| ObjRef {
        id: id.to_string(),
        label: labels.get(id).cloned().unwrap_or_default(),
    };

    let mut out: Vec<RecognizedSegment> = Vec::new();
    for record in records {
        let mut hands: Vec<HandSummary> = Vec::new();
        for link in &record.hand_links {
            // Chain the grasped object's targets: direct target, plus the
            // container's content (or the ingredient's container).
            let tool_link = record
                .object_links
                .iter()
                .find(|l| l.kind == LinkKind::ToolOnTarget && l.source == link.object);
            let mut targets: Vec<ObjRef> = Vec::new();
            if let Some(tl) = tool_link {
                let target_class = table.lexicon.class_of(&tl.target_label);
                let held_by = |container: &str| {
                    record
                        .object_links
                        .iter()
                        .find(|l| l.kind == LinkKind::ContainerHolds && l.source == container)
                };
                let holds = |ingredient: &str| {
                    record
                        .object_links
                        .iter()
                        .find(|l| l.kind == LinkKind::ContainerHolds && l.target == ingredient)
                };
                match target_class {
                    Some(ObjectClass::Container) => {
                        if let Some(content) = held_by(&tl.target) {
                            targets.push(obj_ref(&content.target));
                        }
                        targets.push(obj_ref(&tl.target));
                    }
                    Some(ObjectClass::Ingredient) => {
                        targets.push(obj_ref(&tl.target));
                        if let Some(container) = holds(&tl.target) {
                            targets.push(obj_ref(&container.source));
                        }
                    }
                    _ => targets.push(obj_ref(&tl.target)),
                }
            }

            let (action, score) = if targets.is_empty() {
                (None, None)
            } else {
                let mut words: Vec<&str> = vec![link.label.as_str()];
                words.extend(targets.iter().map(|t| t.label.as_str()));
                let (label, score) = recognize_individual(&words, table, opts);
                (Some(label), Some(score))
            };

            hands.push(HandSummary {
                hand: link.hand.clone(),
                grasped: ObjRef {
                    id: link.object.clone(),
                    label: link.label.clone(),
                },
                action,
                score,
                targets,
                assisted_by: None,
                suppressed: false,
                grasp_support: link.support.clone(),
            });
        }

        // Assisted actions (the tool's target is held by another person):
        // embed the holder in the actor's sentence, silence the holder.
        let mut events: Vec<CollabEvent> = Vec::new();
        let held_objects: BTreeMap<String, HandKey> = hands
            .iter()
            .map(|h| (h.grasped.id.clone(), h.hand.clone()))
            .collect();
        let mut assists: Vec<(usize, HandKey, ObjRef)> = Vec::new();
        for (idx, hand) in hands.iter().enumerate() {
            let Some(action) = hand.action else { continue };
            // The worked object is the last target in the chain (the
            // container for ingredient-in-container targets).
            let Some(worked) = hand.targets.last() else { continue };
            let Some(holder) = held_objects.get(&worked.id) else {
                continue;
            };
            if holder.person == hand.hand.person {
                continue;
            }
            assists.push((idx, holder.clone(), worked.clone()));
            events.push(CollabEvent {
                label: action,
                object: worked.clone(),
                giver_or_holder: holder.clone(),
                receiver_or_actor: hand.hand.clone(),
            });
        }
        for (idx, holder, worked) in assists {
            hands[idx].assisted_by = Some((holder.clone(), worked));
            for hand in hands.iter_mut() {
                if hand.hand == holder {
                    hand.suppressed = true;
                }
            }
        }

        // Handover / holding events of this segment silence the
        // participating grasps.
        for det in collabs.iter().filter(|d| d.segment == record.segment) {
            for hand in hands.iter_mut() {
                let participant =
                    hand.hand == det.event.giver_or_holder || hand.hand == det.event.receiver_or_actor;
                if participant && hand.grasped.id == det.event.object.id {
                    hand.suppressed = true;
                }
            }
            events.push(det.event.clone());
        }

        out.push(RecognizedSegment {
            segment: record.segment,
            start_frame: record.start_frame,
            end_frame: record.end_frame,
            fps: record.fps,
            hands,
            collaborations: events,
        });
    }

    // Transfers: rewrite the carrying hand's summary in the segment where
    // it actually carried the ingredient.
    for transfer in &transfers {
        let mut best: Option<(usize, usize, u64)> = None;
        for (seg_idx, seg) in out.iter().enumerate() {
            if seg.segment > transfer.segment {
                break;
            }
            for (hand_idx, hand) in seg.hands.iter().enumerate() {
                if hand.grasped.id != transfer.ingredient || hand.suppressed {
                    continue;
                }
                let support = hand.grasp_support.total();
                if best.map_or(true, |(_, _, b)| support > b) {
                    best = Some((seg_idx, hand_idx, support));
                }
            }
        }
        let Some((seg_idx, hand_idx, _)) = best else {
            log::debug!(
                "transfer of {} at segment {} has no carrying hand; skipped",
                transfer.ingredient,
                transfer.segment
            );
            continue;
        };
        let hand = &mut out[seg_idx].hands[hand_idx];
        hand.action = Some(ActionLabel::Transfer);
        hand.score = None;
        hand.targets = vec![
            obj_ref(&transfer.ingredient),
            obj_ref(&transfer.source),
            obj_ref(&transfer.destination),
        ];
    }

    out
}

/// Write recognized segments, one JSON record per line.
pub fn save_recognized(segments: &[RecognizedSegment], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(file);
    for segment in segments {
        writeln!(w, "{}", serde_json::to_string(segment)?)?;
    }
    Ok(())
}

/// Read recognized segments written by [`save_recognized`].
pub fn load_recognized(path: impl AsRef<Path>) -> Result<Vec<RecognizedSegment>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut segments = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let segment: RecognizedSegment = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("recognized line {}: {e}", idx + 1)))?;
        segments.push(segment);
    }
    Ok(segments)
}
