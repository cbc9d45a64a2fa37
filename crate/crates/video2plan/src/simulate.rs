//! Discrete-event execution of action graphs.
//!
//! The simulator runs a plan over a logical clock: each agent executes
//! its lane strictly in order, a node starts only once every incoming
//! edge (lane or sync) has finished, and agents progress concurrently
//! in logical time. The run is single-threaded and fully deterministic
//! — completions are processed in (time, agent, node) order and idle
//! agents are scanned in sorted order — so identical inputs always
//! produce byte-identical traces.

use crate::error::{Error, Result};
use crate::ingest::HandKey;
use crate::plan::{ActionGraph, PlanNode, PrimitiveKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

/// Whether a trace event marks a node starting or ending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Start,
    End,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Start => "start",
            Phase::End => "end",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Phase> {
        match s {
            "start" => Ok(Phase::Start),
            "end" => Ok(Phase::End),
            other => Err(Error::InvalidInput(format!("unknown phase {other:?}"))),
        }
    }
}

/// One timestamped event of an execution.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    /// Logical time in seconds.
    pub time: f64,
    pub agent: HandKey,
    pub node: usize,
    pub phase: Phase,
}

/// The full execution record: chronological events plus the completion
/// time of the last node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
    pub makespan: f64,
}

/// Execution durations: per-kind defaults with per-node overrides, all
/// in seconds and strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    pub defaults: BTreeMap<PrimitiveKind, f64>,
    /// Node id → seconds, overriding the kind default.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<usize, f64>,
}

impl Default for DurationModel {
    fn default() -> Self {
        let mut defaults = BTreeMap::new();
        defaults.insert(PrimitiveKind::Grasp, 2.0);
        defaults.insert(PrimitiveKind::Engage, 3.0);
        defaults.insert(PrimitiveKind::Actuate, 4.0);
        defaults.insert(PrimitiveKind::Place, 2.0);
        DurationModel {
            defaults,
            overrides: BTreeMap::new(),
        }
    }
}

impl DurationModel {
    /// Check every configured duration is positive and finite.
    pub fn validate(&self) -> Result<()> {
        let check = |name: String, value: f64| -> Result<()> {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!(
                    "duration for {name} must be positive, got {value}"
                )));
            }
            Ok(())
        };
        for (kind, &seconds) in &self.defaults {
            check(kind.to_string(), seconds)?;
        }
        for (node, &seconds) in &self.overrides {
            check(format!("node {node}"), seconds)?;
        }
        Ok(())
    }

    /// Seconds the node takes: its override, else its kind's default.
    pub fn duration_of(&self, node: &PlanNode) -> Result<f64> {
        self.overrides
            .get(&node.id)
            .or_else(|| self.defaults.get(&node.primitive.kind))
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "no duration configured for {} primitives",
                    node.primitive.kind
                ))
            })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), json + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<DurationModel> {
        let file = std::fs::File::open(path.as_ref())?;
        let model: DurationModel = serde_json::from_reader(BufReader::new(file))?;
        model.validate()?;
        Ok(model)
    }
}

/// Execute the graph over a logical clock.
///
/// Every idle agent starts its next lane node as soon as all of the
/// node's incoming edges have finished. When no node is running and
/// unfinished nodes remain, the blocked lane heads are reported as a
/// deadlock — reachable only with hand-authored sync edges that fight
/// the lane order, since generated graphs are validated acyclic.
pub fn run(graph: &ActionGraph, durations: &DurationModel) -> Result<ExecutionTrace> {
    graph.validate()?;
    durations.validate()?;
    let n = graph.nodes.len();
    let seconds: Vec<f64> = graph
        .nodes
        .iter()
        .map(|node| durations.duration_of(node))
        .collect::<Result<_>>()?;
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(from, to) in graph.edges.iter().chain(&graph.sync_edges) {
        preds[to].push(from);
    }
    // Lane = an agent's nodes in id order; ids are assigned lane by
    // lane, so this is the demonstrated order.
    let mut lanes: BTreeMap<HandKey, Vec<usize>> = BTreeMap::new();
    for node in &graph.nodes {
        lanes
            .entry(node.primitive.agent.clone())
            .or_default()
            .push(node.id);
    }
    let mut position: BTreeMap<HandKey, usize> =
        lanes.keys().map(|agent| (agent.clone(), 0)).collect();
    let mut busy: BTreeMap<HandKey, bool> =
        lanes.keys().map(|agent| (agent.clone(), false)).collect();
    let mut done = vec![false; n];
    let mut finished = 0usize;
    let mut running: Vec<(f64, HandKey, usize)> = Vec::new();
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut now = 0.0;
    loop {
        // Start every idle agent whose lane head is unblocked.
        for (agent, lane) in &lanes {
            if busy[agent] {
                continue;
            }
            let Some(&head) = lane.get(position[agent]) else {
                continue;
            };
            if preds[head].iter().all(|&p| done[p]) {
                events.push(TraceEvent {
                    time: now,
                    agent: agent.clone(),
                    node: head,
                    phase: Phase::Start,
                });
                running.push((now + seconds[head], agent.clone(), head));
                busy.insert(agent.clone(), true);
            }
        }
        if finished == n {
            break;
        }
        if running.is_empty() {
            let nodes: Vec<String> = lanes
                .iter()
                .filter_map(|(agent, lane)| lane.get(position[agent]))
                .map(|&head| {
                    let p = &graph.nodes[head].primitive;
                    format!("{head} ({} {})", p.kind, p.object)
                })
                .collect();
            return Err(Error::Deadlock { nodes });
        }
        // Process every completion at the earliest finish time, in
        // (agent, node) order.
        let earliest = running
            .iter()
            .map(|(t, _, _)| *t)
            .min_by(f64::total_cmp)
            .expect("running is non-empty");
        now = earliest;
        let mut completing: Vec<(HandKey, usize)> = Vec::new();
        running.retain(|(t, agent, node)| {
            if *t == earliest {
                completing.push((agent.clone(), *node));
                false
            } else {
                true
            }
        });
        completing.sort();
        for (agent, node) in completing {
            done[node] = true;
            finished += 1;
            *position.get_mut(&agent).expect("agent has a lane") += 1;
            busy.insert(agent.clone(), false);
            events.push(TraceEvent {
                time: now,
                agent,
                node,
                phase: Phase::End,
            });
        }
    }
    Ok(ExecutionTrace {
        events,
        makespan: now,
    })
}

/// One inconsistency between a trace and its graph.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceViolation {
    /// A node never reports the phase.
    MissingPhase { node: usize, phase: Phase },
    /// A node ends at or before its own start.
    NegativeSpan { node: usize },
    /// An ordering edge is not respected: `from` ends after `to` starts.
    EdgeOrder { from: usize, to: usize, sync: bool },
    /// Two lane neighbours overlap.
    LaneOrder {
        agent: HandKey,
        first: usize,
        second: usize,
    },
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            TraceViolation::MissingPhase { node, phase } => {
                write!(f, "node {node} has no {phase} event")
            }
            TraceViolation::NegativeSpan { node } => {
                write!(f, "node {node} ends before it starts")
            }
            TraceViolation::EdgeOrder { from, to, sync } => {
                let kind = if *sync { "sync edge" } else { "edge" };
                write!(f, "{kind} ({from}, {to}) violated: {from} ends after {to} starts")
            }
            TraceViolation::LaneOrder {
                agent,
                first,
                second,
            } => write!(
                f,
                "lane of {agent} out of order: {first} ends after {second} starts"
            ),
        }
    }
}

/// Check a trace against its graph: every node runs with positive
/// span, every edge's source ends no later than its sink starts, and
/// each agent's lane executes in order. Empty iff consistent.
pub fn check_trace(trace: &ExecutionTrace, graph: &ActionGraph) -> Vec<TraceViolation> {
    let mut starts: BTreeMap<usize, f64> = BTreeMap::new();
    let mut ends: BTreeMap<usize, f64> = BTreeMap::new();
    for event in &trace.events {
        match event.phase {
            Phase::Start => starts.insert(event.node, event.time),
            Phase::End => ends.insert(event.node, event.time),
        };
    }
    let mut violations = Vec::new();
    for node in &graph.nodes {
        for (phase, map) in [(Phase::Start, &starts), (Phase::End, &ends)] {
            if !map.contains_key(&node.id) {
                violations.push(TraceViolation::MissingPhase {
                    node: node.id,
                    phase,
                });
            }
        }
        if let (Some(start), Some(end)) = (starts.get(&node.id), ends.get(&node.id)) {
            if end <= start {
                violations.push(TraceViolation::NegativeSpan { node: node.id });
            }
        }
    }
    let ordered = |from: usize, to: usize| -> bool {
        match (ends.get(&from), starts.get(&to)) {
            (Some(end), Some(start)) => end <= start,
            _ => true, // missing phases are already reported
        }
    };
    for (sync, list) in [(false, &graph.edges), (true, &graph.sync_edges)] {
        for &(from, to) in list {
            if !ordered(from, to) {
                violations.push(TraceViolation::EdgeOrder { from, to, sync });
            }
        }
    }
    for agent in &graph.agents {
        let lane = graph.lane(agent);
        for pair in lane.windows(2) {
            if !ordered(pair[0], pair[1]) {
                violations.push(TraceViolation::LaneOrder {
                    agent: agent.clone(),
                    first: pair[0],
                    second: pair[1],
                });
            }
        }
    }
    violations
}

/// Write a trace as CSV rows `time,agent,node,phase`.
pub fn save_trace(trace: &ExecutionTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("time,agent,node,phase\n");
    for event in &trace.events {
        out.push_str(&format!(
            "{},{},{},{}\n",
            event.time, event.agent, event.node, event.phase
        ));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Read a CSV trace; the makespan is the latest end time.
pub fn load_trace(path: impl AsRef<Path>) -> Result<ExecutionTrace> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut events = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if idx == 0 && line.starts_with("time,") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| {
            Error::InvalidInput(format!("trace line {}: {reason}", idx + 1))
        };
        let fields: Vec<&str> = line.split(',').collect();
        let [time, agent, node, phase] = fields.as_slice() else {
            return Err(bad("expected time,agent,node,phase"));
        };
        events.push(TraceEvent {
            time: time.parse().map_err(|_| bad("bad time"))?,
            agent: agent.parse()?,
            node: node.parse().map_err(|_| bad("bad node id"))?,
            phase: phase.parse()?,
        });
    }
    let makespan = events
        .iter()
        .filter(|e| e.phase == Phase::End)
        .map(|e| e.time)
        .max_by(f64::total_cmp)
        .unwrap_or(0.0);
    Ok(ExecutionTrace { events, makespan })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{MotionPrimitive, PlanNode};

    fn node(id: usize, agent: &str, kind: PrimitiveKind) -> PlanNode {
        PlanNode {
            id,
            primitive: MotionPrimitive {
                kind,
                agent: agent.parse().unwrap(),
                object: "thing".into(),
                target: (kind == PrimitiveKind::Engage).then(|| "there".into()),
                params: BTreeMap::new(),
            },
        }
    }

    fn uniform(graph: &ActionGraph, seconds: f64) -> DurationModel {
        let mut model = DurationModel::default();
        for node in &graph.nodes {
            model.overrides.insert(node.id, seconds);
        }
        model
    }

    fn handover_graph() -> ActionGraph {
        use crate::grammar::{ActionTree, TreeRecord};
        use crate::plan::{build_graph, merge_segments, PrimitiveLibrary};
        let tree = ActionTree::from_sexpr(
            "(HP (HP (H LH_P1) (O lemon)) (CP (C handover) (HP (H RH_P2) (O lemon))))",
        )
        .unwrap();
        let records = vec![TreeRecord {
            hand: "LH_P1".parse().unwrap(),
            start_frame: 0,
            end_frame: 90,
            grasp_id: Some("lemon0".into()),
            tree,
        }];
        let timeline = merge_segments(&records, &crate::ingest::Lexicon::new());
        build_graph(&timeline, &PrimitiveLibrary::default()).unwrap()
    }

    #[test]
    fn chain_of_three_sums_durations() {
        let graph = ActionGraph {
            agents: vec!["RH_P1".parse().unwrap()],
            nodes: vec![
                node(0, "RH_P1", PrimitiveKind::Grasp),
                node(1, "RH_P1", PrimitiveKind::Engage),
                node(2, "RH_P1", PrimitiveKind::Actuate),
            ],
            edges: vec![(0, 1), (1, 2)],
            sync_edges: vec![],
        };
        let trace = run(&graph, &uniform(&graph, 1.0)).unwrap();
        assert_eq!(trace.makespan, 3.0);
        assert_eq!(trace.events.len(), 6);
        assert!(check_trace(&trace, &graph).is_empty());
    }

    #[test]
    fn independent_lanes_run_in_parallel() {
        let graph = ActionGraph {
            agents: vec!["LH_P1".parse().unwrap(), "RH_P2".parse().unwrap()],
            nodes: vec![
                node(0, "LH_P1", PrimitiveKind::Grasp),
                node(1, "LH_P1", PrimitiveKind::Place),
                node(2, "RH_P2", PrimitiveKind::Grasp),
                node(3, "RH_P2", PrimitiveKind::Place),
            ],
            edges: vec![(0, 1), (2, 3)],
            sync_edges: vec![],
        };
        let trace = run(&graph, &uniform(&graph, 1.0)).unwrap();
        assert_eq!(trace.makespan, 2.0);
        assert!(check_trace(&trace, &graph).is_empty());
    }

    #[test]
    fn handover_release_waits_for_the_receivers_engage() {
        let graph = handover_graph();
        let trace = run(&graph, &DurationModel::default()).unwrap();
        assert!(check_trace(&trace, &graph).is_empty());
        let time_of = |node: usize, phase: Phase| -> f64 {
            trace
                .events
                .iter()
                .find(|e| e.node == node && e.phase == phase)
                .unwrap()
                .time
        };
        let (engage, release) = graph.sync_edges[0];
        assert!(time_of(engage, Phase::End) <= time_of(release, Phase::Start));
        // grasp 2 + engage 3 + release 4, then grab 4 + place 2.
        assert_eq!(trace.makespan, 15.0);
    }

    #[test]
    fn makespan_equals_the_longest_weighted_path() {
        let graph = handover_graph();
        let durations = DurationModel::default();
        let trace = run(&graph, &durations).unwrap();
        // Longest-path DP over a topological order.
        let order = crate::plan::topological_order(&graph).unwrap();
        let seconds: Vec<f64> = graph
            .nodes
            .iter()
            .map(|n| durations.duration_of(n).unwrap())
            .collect();
        let mut finish = vec![0.0f64; graph.nodes.len()];
        for &id in &order {
            let ready = graph
                .edges
                .iter()
                .chain(&graph.sync_edges)
                .filter(|&&(_, to)| to == id)
                .map(|&(from, _)| finish[from])
                .fold(0.0f64, f64::max);
            finish[id] = ready + seconds[id];
        }
        let longest = finish.iter().copied().fold(0.0f64, f64::max);
        assert_eq!(trace.makespan, longest);
    }

    #[test]
    fn swapped_handover_order_is_one_violation_naming_the_sync_edge() {
        let graph = handover_graph();
        let mut trace = run(&graph, &DurationModel::default()).unwrap();
        let (engage, release) = graph.sync_edges[0];
        let release_start = trace
            .events
            .iter()
            .find(|e| e.node == release && e.phase == Phase::Start)
            .unwrap()
            .time;
        // Slide the receiver's engage to straddle the release start.
        for event in &mut trace.events {
            if event.node == engage {
                event.time = match event.phase {
                    Phase::Start => release_start - 1.0,
                    Phase::End => release_start + 1.0,
                };
            }
        }
        let violations = check_trace(&trace, &graph);
        assert_eq!(
            violations,
            vec![TraceViolation::EdgeOrder {
                from: engage,
                to: release,
                sync: true
            }]
        );
        assert!(violations[0].to_string().contains("sync edge"));
    }

    #[test]
    fn empty_graph_runs_to_an_empty_trace() {
        let graph = ActionGraph::default();
        let trace = run(&graph, &DurationModel::default()).unwrap();
        assert!(trace.events.is_empty());
        assert_eq!(trace.makespan, 0.0);
        assert!(check_trace(&trace, &graph).is_empty());
    }

    #[test]
    fn sync_against_lane_order_deadlocks() {
        // Acyclic edges, but agent A must run node 0 before node 1 and
        // node 0 waits on B, which waits on node 1.
        let graph = ActionGraph {
            agents: vec!["LH_P1".parse().unwrap(), "RH_P2".parse().unwrap()],
            nodes: vec![
                node(0, "LH_P1", PrimitiveKind::Grasp),
                node(1, "LH_P1", PrimitiveKind::Place),
                node(2, "RH_P2", PrimitiveKind::Grasp),
            ],
            edges: vec![],
            sync_edges: vec![(2, 0), (1, 2)],
        };
        let err = run(&graph, &DurationModel::default()).unwrap_err();
        match err {
            Error::Deadlock { nodes } => {
                assert_eq!(nodes.len(), 2);
                assert!(nodes[0].starts_with("0 "), "{nodes:?}");
                assert!(nodes[1].starts_with("2 "), "{nodes:?}");
            }
            other => panic!("expected deadlock, got {other}"),
        }
    }

    #[test]
    fn nonpositive_durations_fail_validation() {
        let mut model = DurationModel::default();
        model.defaults.insert(PrimitiveKind::Grasp, 0.0);
        assert!(model.validate().is_err());
        let mut model = DurationModel::default();
        model.overrides.insert(3, -1.0);
        assert!(model.validate().is_err());
    }

    #[test]
    fn duration_model_file_round_trips() {
        let mut model = DurationModel::default();
        model.overrides.insert(7, 1.25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("durations.json");
        model.save(&path).unwrap();
        assert_eq!(DurationModel::load(&path).unwrap(), model);
    }

    #[test]
    fn trace_csv_round_trips() {
        let graph = handover_graph();
        let trace = run(&graph, &DurationModel::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        save_trace(&trace, &path).unwrap();
        assert_eq!(load_trace(&path).unwrap(), trace);
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let graph = handover_graph();
        let a = run(&graph, &DurationModel::default()).unwrap();
        let b = run(&graph, &DurationModel::default()).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        save_trace(&a, &dir.path().join("a.csv")).unwrap();
        save_trace(&b, &dir.path().join("b.csv")).unwrap();
        assert_eq!(
            std::fs::read(dir.path().join("a.csv")).unwrap(),
            std::fs::read(dir.path().join("b.csv")).unwrap()
        );
    }
}
