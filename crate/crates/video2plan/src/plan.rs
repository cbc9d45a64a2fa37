//! Multi-agent plan construction from action trees.
//!
//! Consecutive segments whose trees describe the same activity are
//! merged (ingredient identity is not required — an onion hidden in one
//! segment should not split a stir in two). Each tree then reverses
//! into per-agent directives that a template library decomposes into
//! motion primitives — grasp, engage, actuate, place — and the
//! primitives are chained into an acyclic action graph: one totally
//! ordered lane per agent plus cross-agent sync edges for
//! collaborations. Consecutive actions with the same grasped object
//! instance are *transitioned*: the intervening place and grasp are
//! removed so the agent keeps hold of the tool.

use crate::error::{Error, Result};
use crate::grammar::{
    tree_to_directives, ActionDirective, ActionTree, PhraseLabel, Role, Terminal, TreeRecord,
};
use crate::ingest::{HandKey, Lexicon, ObjectClass};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::BufReader;
use std::path::Path;

/// The four motion primitive kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    /// Close the hand around an object.
    Grasp,
    /// Move the held object toward a target.
    Engage,
    /// Perform the action motion.
    Actuate,
    /// Put the held object down.
    Place,
}

impl PrimitiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PrimitiveKind::Grasp => "grasp",
            PrimitiveKind::Engage => "engage",
            PrimitiveKind::Actuate => "actuate",
            PrimitiveKind::Place => "place",
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One instantiated motion primitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub kind: PrimitiveKind,
    pub agent: HandKey,
    /// The object or tool the primitive moves.
    pub object: String,
    /// Where it moves to; required for engage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Free-form annotations (e.g. the actuation motion).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

impl MotionPrimitive {
    fn validate(&self) -> Result<()> {
        if self.object.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} primitive without an object",
                self.kind
            )));
        }
        if self.kind == PrimitiveKind::Engage && self.target.as_deref().unwrap_or("").is_empty() {
            return Err(Error::InvalidInput("engage primitive without a target".into()));
        }
        Ok(())
    }
}

/// One step of a decomposition template. String fields may hold slots
/// resolved against the directive at instantiation time:
/// `$grasp` (held object), `$action` (action word), `$target` (last
/// target), `$target0`/`$target1`/… (indexed targets), `$partner`
/// (collaborating hand), `$object` (collaboration object).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveStep {
    pub kind: PrimitiveKind,
    pub object: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
}

impl PrimitiveStep {
    fn new(kind: PrimitiveKind, object: &str) -> PrimitiveStep {
        PrimitiveStep {
            kind,
            object: object.into(),
            target: None,
            params: BTreeMap::new(),
        }
    }

    fn with_target(mut self, target: &str) -> PrimitiveStep {
        self.target = Some(target.into());
        self
    }

    fn with_param(mut self, key: &str, value: &str) -> PrimitiveStep {
        self.params.insert(key.into(), value.into());
        self
    }
}

/// Editable decomposition templates for every action and collaboration
/// role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveLibrary {
    /// Fallback for actions without an explicit entry.
    pub individual_default: Vec<PrimitiveStep>,
    /// A grasp with no recognized action.
    pub grasp_only: Vec<PrimitiveStep>,
    /// Per-action overrides, keyed by action word.
    pub actions: BTreeMap<String, Vec<PrimitiveStep>>,
    pub handover_giver: Vec<PrimitiveStep>,
    pub handover_receiver: Vec<PrimitiveStep>,
    pub holding_holder: Vec<PrimitiveStep>,
}

impl Default for PrimitiveLibrary {
    fn default() -> Self {
        use PrimitiveKind::*;
        let individual = vec![
            PrimitiveStep::new(Grasp, "$grasp"),
            PrimitiveStep::new(Engage, "$grasp").with_target("$target"),
            PrimitiveStep::new(Actuate, "$grasp").with_param("motion", "$action"),
            PrimitiveStep::new(Place, "$grasp"),
        ];
        let transfer = vec![
            PrimitiveStep::new(Grasp, "$grasp"),
            PrimitiveStep::new(Engage, "$grasp").with_target("$target1"),
            PrimitiveStep::new(Actuate, "$grasp").with_param("motion", "scoop"),
            PrimitiveStep::new(Engage, "$grasp").with_target("$target2"),
            PrimitiveStep::new(Actuate, "$grasp").with_param("motion", "dump"),
            PrimitiveStep::new(Place, "$grasp"),
        ];
        let mut actions = BTreeMap::new();
        for action in crate::recognize::ActionLabel::INDIVIDUAL {
            actions.insert(action.as_str().to_string(), individual.clone());
        }
        actions.insert("transfer".into(), transfer);
        PrimitiveLibrary {
            individual_default: individual,
            grasp_only: vec![
                PrimitiveStep::new(Grasp, "$grasp"),
                PrimitiveStep::new(Place, "$grasp"),
            ],
            actions,
            handover_giver: vec![
                PrimitiveStep::new(Grasp, "$grasp"),
                PrimitiveStep::new(Engage, "$grasp").with_target("$partner"),
                PrimitiveStep::new(Actuate, "$grasp").with_param("motion", "release"),
            ],
            handover_receiver: vec![
                PrimitiveStep::new(Engage, "$grasp").with_target("$partner"),
                PrimitiveStep::new(Actuate, "$grasp").with_param("motion", "grab"),
                PrimitiveStep::new(Place, "$grasp"),
            ],
            holding_holder: vec![
                PrimitiveStep::new(Grasp, "$grasp"),
                PrimitiveStep::new(Actuate, "$grasp").with_param("motion", "hold"),
                PrimitiveStep::new(Place, "$grasp"),
            ],
        }
    }
}

impl PrimitiveLibrary {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), json + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PrimitiveLibrary> {
        let file = std::fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Resolve one template string against a directive.
fn resolve(template: &str, directive: &ActionDirective) -> Result<String> {
    if !template.starts_with('$') {
        return Ok(template.to_string());
    }
    let missing = |what: &str| {
        Error::InvalidInput(format!(
            "template slot {template} needs {what}, which the directive lacks"
        ))
    };
    match template {
        "$grasp" => Ok(directive.grasp.clone()),
        "$action" => directive
            .action
            .map(|a| a.to_string())
            .ok_or_else(|| missing("an action")),
        "$target" => directive
            .targets
            .last()
            .cloned()
            .ok_or_else(|| missing("a target")),
        "$partner" => directive
            .collab
            .as_ref()
            .map(|c| c.partner.to_string())
            .ok_or_else(|| missing("a collaboration partner")),
        "$object" => directive
            .collab
            .as_ref()
            .map(|c| c.object.clone())
            .ok_or_else(|| missing("a collaboration object")),
        _ => {
            if let Some(idx) = template.strip_prefix("$target") {
                let idx: usize = idx
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("unknown template slot {template}")))?;
                return directive
                    .targets
                    .get(idx)
                    .cloned()
                    .ok_or_else(|| missing(&format!("target {idx}")));
            }
            Err(Error::InvalidInput(format!("unknown template slot {template}")))
        }
    }
}

/// Decompose a directive into its motion primitive sequence.
///
/// The collaboration role picks the template (giver, receiver, holder);
/// otherwise the directive's action does, falling back to an error that
/// lists the library's actions when the action has no entry.
pub fn decompose(
    directive: &ActionDirective,
    library: &PrimitiveLibrary,
) -> Result<Vec<MotionPrimitive>> {
    let template = match directive.collab.as_ref().map(|c| c.role) {
        Some(Role::Giver) => &library.handover_giver,
        Some(Role::Receiver) => &library.handover_receiver,
        Some(Role::Holder) => &library.holding_holder,
        Some(Role::Actor) | None => match directive.action {
            None => &library.grasp_only,
            Some(action) => library.actions.get(action.as_str()).ok_or_else(|| {
                let known: Vec<&str> = library.actions.keys().map(String::as_str).collect();
                Error::InvalidInput(format!(
                    "no decomposition for action {:?}; library provides: {}",
                    action.as_str(),
                    known.join(", ")
                ))
            })?,
        },
    };
    let mut primitives = Vec::with_capacity(template.len());
    for step in template {
        let mut params = BTreeMap::new();
        for (key, value) in &step.params {
            params.insert(key.clone(), resolve(value, directive)?);
        }
        let primitive = MotionPrimitive {
            kind: step.kind,
            agent: directive.agent.clone(),
            object: resolve(&step.object, directive)?,
            target: step
                .target
                .as_ref()
                .map(|t| resolve(t, directive))
                .transpose()?,
            params,
        };
        primitive.validate()?;
        primitives.push(primitive);
    }
    Ok(primitives)
}

/// One hand's tree in a timeline entry, with the grasped instance id
/// when known.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTree {
    pub grasp_id: Option<String>,
    pub tree: ActionTree,
}

/// One span of the merged timeline: per-hand trees over a frame range.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEntry {
    pub start_frame: u64,
    pub end_frame: u64,
    pub trees: BTreeMap<HandKey, HandTree>,
}

/// The merged timeline: ordered entries, no two consecutive entries
/// holding identical (up to ingredient identity) trees for all hands.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergedTimeline {
    pub entries: Vec<TimelineEntry>,
}

/// Rewrite a tree so ingredient identity does not matter: ingredient
/// words become a wildcard, and wildcards are dropped from object
/// chains (an ingredient missing from one segment's chain should not
/// block a merge). Wildcards in structurally required positions — the
/// grasped object, an action's only target — are kept.
fn normalized(tree: &ActionTree, lexicon: &Lexicon) -> ActionTree {
    let wildcard = |word: &str| -> String {
        if lexicon.class_of(word) == Some(ObjectClass::Ingredient) {
            "*".to_string()
        } else {
            word.to_string()
        }
    };
    match tree {
        ActionTree::Leaf(Terminal::O(word)) => ActionTree::Leaf(Terminal::O(wildcard(word))),
        ActionTree::Leaf(other) => ActionTree::Leaf(other.clone()),
        ActionTree::Phrase(PhraseLabel::AP, children) => {
            // Collapse the target chain, dropping wildcarded entries.
            if let [action @ ActionTree::Leaf(Terminal::A(_)), rhs] = children.as_slice() {
                let chain: Option<Vec<String>> = flatten_chain(rhs);
                if let Some(chain) = chain {
                    let kept: Vec<String> = chain
                        .iter()
                        .map(|w| wildcard(w))
                        .filter(|w| w != "*")
                        .collect();
                    let new_rhs = match kept.len() {
                        0 => ActionTree::Leaf(Terminal::O("*".into())),
                        _ => build_chain(&kept),
                    };
                    return ActionTree::Phrase(
                        PhraseLabel::AP,
                        vec![action.clone(), new_rhs],
                    );
                }
            }
            ActionTree::Phrase(
                PhraseLabel::AP,
                children.iter().map(|c| normalized(c, lexicon)).collect(),
            )
        }
        ActionTree::Phrase(label, children) => ActionTree::Phrase(
            *label,
            children.iter().map(|c| normalized(c, lexicon)).collect(),
        ),
    }
}

/// The words of a pure object chain (`O` leaf or right-nested `OP`),
/// or `None` when the subtree embeds anything else.
fn flatten_chain(tree: &ActionTree) -> Option<Vec<String>> {
    match tree {
        ActionTree::Leaf(Terminal::O(word)) => Some(vec![word.clone()]),
        ActionTree::Phrase(PhraseLabel::OP, children) => {
            let mut out = Vec::new();
            for child in children {
                out.extend(flatten_chain(child)?);
            }
            Some(out)
        }
        _ => None,
    }
}

/// Rebuild a right-nested object chain from words.
fn build_chain(words: &[String]) -> ActionTree {
    match words {
        [] => unreachable!("empty chains are handled by the caller"),
        [only] => ActionTree::Leaf(Terminal::O(only.clone())),
        [head, rest @ ..] => {
            let tail = build_chain(rest);
            match tail {
                leaf @ ActionTree::Leaf(_) if rest.len() == 1 => ActionTree::Phrase(
                    PhraseLabel::OP,
                    vec![ActionTree::Leaf(Terminal::O(head.clone())), leaf],
                ),
                tail => ActionTree::Phrase(
                    PhraseLabel::OP,
                    vec![ActionTree::Leaf(Terminal::O(head.clone())), tail],
                ),
            }
        }
    }
}

/// Number of ingredient words a tree mentions.
fn ingredient_count(tree: &ActionTree, lexicon: &Lexicon) -> usize {
    tree.terminals()
        .iter()
        .filter(|t| matches!(t, Terminal::O(w) if lexicon.class_of(w) == Some(ObjectClass::Ingredient)))
        .count()
}

/// Merge consecutive tree records into a timeline.
///
/// Records sharing a frame span form one entry. Two adjacent entries
/// merge when they cover the same hands and every hand's tree is equal
/// after ingredient normalization; the retained trees come from the
/// entry that observed the most ingredient words (ties keep the
/// earlier). The operation is idempotent.
pub fn merge_segments(records: &[TreeRecord], lexicon: &Lexicon) -> MergedTimeline {
    let mut grouped: BTreeMap<(u64, u64), BTreeMap<HandKey, HandTree>> = BTreeMap::new();
    for record in records {
        grouped
            .entry((record.start_frame, record.end_frame))
            .or_default()
            .insert(
                record.hand.clone(),
                HandTree {
                    grasp_id: record.grasp_id.clone(),
                    tree: record.tree.clone(),
                },
            );
    }

    // Fold adjacent compatible entries, carrying each merged entry's
    // best ingredient count so later segments can take over retention.
    let mut merged: Vec<(TimelineEntry, usize)> = Vec::new();
    for ((start, end), trees) in grouped {
        let count: usize = trees
            .values()
            .map(|ht| ingredient_count(&ht.tree, lexicon))
            .sum();
        if let Some((prev, prev_count)) = merged.last_mut() {
            let adjacent = prev.end_frame == start;
            let same_hands = prev.trees.keys().eq(trees.keys());
            let same_trees = same_hands
                && prev.trees.iter().all(|(hand, ht)| {
                    normalized(&ht.tree, lexicon) == normalized(&trees[hand].tree, lexicon)
                });
            if adjacent && same_trees {
                prev.end_frame = end;
                if count > *prev_count {
                    prev.trees = trees;
                    *prev_count = count;
                }
                continue;
            }
        }
        merged.push((
            TimelineEntry {
                start_frame: start,
                end_frame: end,
                trees,
            },
            count,
        ));
    }
    MergedTimeline {
        entries: merged.into_iter().map(|(entry, _)| entry).collect(),
    }
}

/// One node of an action graph: an id plus its primitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: usize,
    #[serde(flatten)]
    pub primitive: MotionPrimitive,
}

/// The executable multi-agent plan: per-agent lanes of primitives,
/// intra-lane ordering edges, and cross-agent sync edges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionGraph {
    pub agents: Vec<HandKey>,
    pub nodes: Vec<PlanNode>,
    /// Ordering edges within an agent's lane: `from` completes before
    /// `to` starts.
    pub edges: Vec<(usize, usize)>,
    /// Cross-agent ordering edges realizing collaboration semantics.
    pub sync_edges: Vec<(usize, usize)>,
}

impl ActionGraph {
    /// Node ids of one agent's lane, in order.
    pub fn lane(&self, agent: &HandKey) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| &n.primitive.agent == agent)
            .map(|n| n.id)
            .collect()
    }

    /// Check ids, lane membership, sync-edge agents, and acyclicity.
    pub fn validate(&self) -> Result<()> {
        for (idx, node) in self.nodes.iter().enumerate() {
            if node.id != idx {
                return Err(Error::InvalidInput(format!(
                    "node ids must be contiguous; found {} at index {idx}",
                    node.id
                )));
            }
            node.primitive.validate()?;
            if !self.agents.contains(&node.primitive.agent) {
                return Err(Error::InvalidInput(format!(
                    "node {} belongs to unlisted agent {}",
                    node.id, node.primitive.agent
                )));
            }
        }
        let check_edge = |&(from, to): &(usize, usize)| -> Result<()> {
            if from >= self.nodes.len() || to >= self.nodes.len() {
                return Err(Error::InvalidInput(format!(
                    "edge ({from}, {to}) references a missing node"
                )));
            }
            Ok(())
        };
        for edge in self.edges.iter().chain(&self.sync_edges) {
            check_edge(edge)?;
        }
        for &(from, to) in &self.sync_edges {
            if self.nodes[from].primitive.agent == self.nodes[to].primitive.agent {
                return Err(Error::InvalidInput(format!(
                    "sync edge ({from}, {to}) does not cross agents"
                )));
            }
        }
        topological_order(self).map(|_| ())
    }
}

/// Kahn topological order over lane and sync edges; an unorderable
/// graph names a node on a cycle. Ready nodes are taken smallest-id
/// first, so the order is deterministic.
pub fn topological_order(graph: &ActionGraph) -> Result<Vec<usize>> {
    let n = graph.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(from, to) in graph.edges.iter().chain(&graph.sync_edges) {
        out[from].push(to);
        indegree[to] += 1;
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&next) = ready.iter().next() {
        ready.remove(&next);
        order.push(next);
        for &to in &out[next] {
            indegree[to] -= 1;
            if indegree[to] == 0 {
                ready.insert(to);
            }
        }
    }
    if order.len() < n {
        let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
        return Err(Error::CyclicPlan {
            node: format!(
                "{} ({} {})",
                stuck, graph.nodes[stuck].primitive.kind, graph.nodes[stuck].primitive.object
            ),
        });
    }
    Ok(order)
}

// A directive's primitives while the graph is under construction;
// elided primitives become `None`.
struct Block {
    agent: HandKey,
    entry: usize,
    directive: ActionDirective,
    instance: Option<String>,
    prims: Vec<Option<MotionPrimitive>>,
    node_ids: Vec<Option<usize>>,
}

impl Block {
    fn first_kind(&self) -> Option<PrimitiveKind> {
        self.prims.iter().flatten().next().map(|p| p.kind)
    }

    fn last_kind(&self) -> Option<PrimitiveKind> {
        self.prims.iter().flatten().last().map(|p| p.kind)
    }

    /// Node id of the first surviving primitive of `kind`.
    fn first_node(&self, kind: PrimitiveKind) -> Option<usize> {
        self.prims
            .iter()
            .zip(&self.node_ids)
            .find(|(p, _)| p.as_ref().is_some_and(|p| p.kind == kind))
            .and_then(|(_, id)| *id)
    }

    /// Node id of the last surviving primitive of `kind`.
    fn last_node(&self, kind: PrimitiveKind) -> Option<usize> {
        self.prims
            .iter()
            .zip(&self.node_ids)
            .filter(|(p, _)| p.as_ref().is_some_and(|p| p.kind == kind))
            .last()
            .and_then(|(_, id)| *id)
    }
}

/// Build the action graph for a merged timeline.
///
/// Each tree reverses into directives; each directive decomposes into
/// primitives appended to its agent's lane in timeline order. Then:
/// consecutive same-instance grasps transition (the intervening place
/// and grasp disappear); handovers order the giver's release after the
/// receiver's engage and the receiver's grab after the release; a
/// holder's hold starts before the partner's engage and their place
/// waits for the partner's last actuate.
pub fn build_graph(timeline: &MergedTimeline, library: &PrimitiveLibrary) -> Result<ActionGraph> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut event_counter: u64 = 0;
    for (entry_idx, entry) in timeline.entries.iter().enumerate() {
        for (hand, hand_tree) in &entry.trees {
            let directives = tree_to_directives(&hand_tree.tree, event_counter)?;
            if directives.len() > 1 {
                event_counter += 1;
            }
            let primary_role = directives
                .iter()
                .find(|d| &d.agent == hand)
                .and_then(|d| d.collab.as_ref().map(|c| c.role));
            for directive in directives {
                // The primary participant's instance id is recorded with
                // the tree. A handover receiver or a co-holder ends up
                // holding the same instance; an assisted actor's partner
                // holds something the tree identifies only by label.
                let instance = if &directive.agent == hand {
                    hand_tree.grasp_id.clone()
                } else if primary_role == Some(Role::Actor) {
                    None
                } else {
                    hand_tree.grasp_id.clone()
                };
                let prims = decompose(&directive, library)?
                    .into_iter()
                    .map(Some)
                    .collect::<Vec<_>>();
                let node_ids = vec![None; prims.len()];
                blocks.push(Block {
                    agent: directive.agent.clone(),
                    entry: entry_idx,
                    directive,
                    instance,
                    prims,
                    node_ids,
                });
            }
        }
    }

    // Lanes: block indices per agent, in timeline order.
    let mut lanes: BTreeMap<HandKey, Vec<usize>> = BTreeMap::new();
    for (idx, block) in blocks.iter().enumerate() {
        lanes.entry(block.agent.clone()).or_default().push(idx);
    }

    // Transitioning: when an agent's consecutive blocks keep hold of
    // the same object instance, drop the place that ends the first and
    // the grasp that starts the second.
    for lane in lanes.values() {
        for pair in lane.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let same_instance = match (&blocks[a].instance, &blocks[b].instance) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            };
            if !same_instance {
                continue;
            }
            if blocks[a].last_kind() == Some(PrimitiveKind::Place)
                && blocks[b].first_kind() == Some(PrimitiveKind::Grasp)
            {
                let last = blocks[a].prims.iter().rposition(|p| p.is_some()).unwrap();
                blocks[a].prims[last] = None;
                let first = blocks[b].prims.iter().position(|p| p.is_some()).unwrap();
                blocks[b].prims[first] = None;
            }
        }
    }

    // Assign node ids lane by lane and chain each lane.
    let mut nodes: Vec<PlanNode> = Vec::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let agents: Vec<HandKey> = lanes.keys().cloned().collect();
    for agent in &agents {
        let mut prev: Option<usize> = None;
        for &block_idx in &lanes[agent] {
            let block = &mut blocks[block_idx];
            for (slot, prim) in block.prims.iter().enumerate() {
                let Some(prim) = prim else { continue };
                let id = nodes.len();
                nodes.push(PlanNode {
                    id,
                    primitive: prim.clone(),
                });
                block.node_ids[slot] = Some(id);
                if let Some(prev) = prev {
                    edges.push((prev, id));
                }
                prev = Some(id);
            }
        }
    }

    // Sync edges per collaborative event.
    let mut by_event: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (idx, block) in blocks.iter().enumerate() {
        if let Some(collab) = &block.directive.collab {
            by_event.entry(collab.event).or_default().push(idx);
        }
    }
    let mut sync_edges: Vec<(usize, usize)> = Vec::new();
    let push_sync = |edges: &mut Vec<(usize, usize)>, from: Option<usize>, to: Option<usize>| {
        if let (Some(from), Some(to)) = (from, to) {
            edges.push((from, to));
        }
    };
    for blocks_of_event in by_event.values() {
        let by_role = |role: Role| -> Option<&Block> {
            blocks_of_event
                .iter()
                .map(|&i| &blocks[i])
                .find(|b| b.directive.collab.as_ref().map(|c| c.role) == Some(role))
        };
        if let (Some(giver), Some(receiver)) = (by_role(Role::Giver), by_role(Role::Receiver)) {
            // The giver releases only after the receiver has engaged,
            // and the receiver grabs only after the release.
            push_sync(
                &mut sync_edges,
                receiver.first_node(PrimitiveKind::Engage),
                giver.last_node(PrimitiveKind::Actuate),
            );
            push_sync(
                &mut sync_edges,
                giver.last_node(PrimitiveKind::Actuate),
                receiver.first_node(PrimitiveKind::Actuate),
            );
            continue;
        }
        if let (Some(actor), Some(holder)) = (by_role(Role::Actor), by_role(Role::Holder)) {
            // The hold brackets the actor's engage..actuate span.
            push_sync(
                &mut sync_edges,
                holder.first_node(PrimitiveKind::Actuate),
                actor
                    .first_node(PrimitiveKind::Engage)
                    .or_else(|| actor.first_node(PrimitiveKind::Actuate)),
            );
            push_sync(
                &mut sync_edges,
                actor.last_node(PrimitiveKind::Actuate),
                holder.last_node(PrimitiveKind::Place),
            );
            continue;
        }
        // Joint holding: neither holder lets go before the other holds.
        let holders: Vec<&Block> = blocks_of_event
            .iter()
            .map(|&i| &blocks[i])
            .filter(|b| b.directive.collab.as_ref().map(|c| c.role) == Some(Role::Holder))
            .collect();
        if let [first, second] = holders.as_slice() {
            push_sync(
                &mut sync_edges,
                first.first_node(PrimitiveKind::Actuate),
                second.last_node(PrimitiveKind::Place),
            );
            push_sync(
                &mut sync_edges,
                second.first_node(PrimitiveKind::Actuate),
                first.last_node(PrimitiveKind::Place),
            );
            // An action by a third hand on the held object in the same
            // entry is bracketed by both holds.
            let object = first.directive.grasp.clone();
            for block in blocks.iter() {
                if block.entry != first.entry
                    || block.agent == first.agent
                    || block.agent == second.agent
                    || block.directive.targets.last() != Some(&object)
                {
                    continue;
                }
                for holder in [first, second] {
                    push_sync(
                        &mut sync_edges,
                        holder.first_node(PrimitiveKind::Actuate),
                        block
                            .first_node(PrimitiveKind::Engage)
                            .or_else(|| block.first_node(PrimitiveKind::Actuate)),
                    );
                    push_sync(
                        &mut sync_edges,
                        block.last_node(PrimitiveKind::Actuate),
                        holder.last_node(PrimitiveKind::Place),
                    );
                }
            }
        }
    }

    let graph = ActionGraph {
        agents,
        nodes,
        edges,
        sync_edges,
    };
    graph.validate()?;
    Ok(graph)
}

/// Write the graph as a plan document (JSON).
pub fn save_plan(graph: &ActionGraph, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(graph)?;
    std::fs::write(path.as_ref(), json + "\n")?;
    Ok(())
}

/// Read a plan document and validate it.
pub fn load_plan(path: impl AsRef<Path>) -> Result<ActionGraph> {
    let file = std::fs::File::open(path.as_ref())?;
    let graph: ActionGraph = serde_json::from_reader(BufReader::new(file))?;
    graph.validate()?;
    Ok(graph)
}

/// Render the graph as a graph description (`dot` digraph): one
/// cluster per agent lane, solid lane edges, dashed sync edges.
pub fn plan_to_dot(graph: &ActionGraph) -> String {
    let mut out = String::from("digraph plan {\n  rankdir=LR;\n  node [shape=box fontname=\"sans-serif\"];\n");
    for (idx, agent) in graph.agents.iter().enumerate() {
        out.push_str(&format!("  subgraph cluster_{idx} {{\n    label=\"{agent}\";\n"));
        for node in &graph.nodes {
            if &node.primitive.agent == agent {
                let target = node
                    .primitive
                    .target
                    .as_ref()
                    .map(|t| format!(" → {t}"))
                    .unwrap_or_default();
                out.push_str(&format!(
                    "    n{} [label=\"{} {}{}\"];\n",
                    node.id, node.primitive.kind, node.primitive.object, target
                ));
            }
        }
        out.push_str("  }\n");
    }
    for &(from, to) in &graph.edges {
        out.push_str(&format!("  n{from} -> n{to};\n"));
    }
    for &(from, to) in &graph.sync_edges {
        out.push_str(&format!("  n{from} -> n{to} [style=dashed constraint=false];\n"));
    }
    out.push_str("}\n");
    out
}
