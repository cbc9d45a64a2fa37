//! Scoring predicted action trees against ground truth.
//!
//! A prediction counts as correct when some not-yet-matched ground
//! truth entry has an identical tree and a non-zero temporal overlap
//! with it. Matching is greedy in span order with one-to-one
//! assignment; precision is correct/detected and recall is
//! correct/truth. The module also builds row-normalized confusion
//! matrices over action labels and exports per-frame label timelines
//! for color-bar style plots.

use crate::error::{Error, Result};
use crate::grammar::{ActionTree, Terminal, TreeRecord};
use crate::ingest::HandKey;
use crate::recognize::ActionLabel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

/// Hand-annotated classification of why a ground-truth entry failed to
/// match (the association or recognition stage responsible).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum FailureClass {
    /// The action label is what went wrong.
    ActionRecognition,
    /// A hand was linked to the wrong object.
    HandObject,
    /// An object was linked to the wrong container.
    ObjectObject,
}

impl FailureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureClass::ActionRecognition => "action",
            FailureClass::HandObject => "hand-object",
            FailureClass::ObjectObject => "object-object",
        }
    }
}

impl fmt::Display for FailureClass {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<FailureClass> {
        match s {
            "action" => Ok(FailureClass::ActionRecognition),
            "hand-object" => Ok(FailureClass::HandObject),
            "object-object" => Ok(FailureClass::ObjectObject),
            other => Err(Error::InvalidInput(format!(
                "unknown failure class {other:?}"
            ))),
        }
    }
}

/// One ground-truth action tree with its span, agent, and an optional
/// annotation of the expected failure mode should it go unmatched.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthEntry {
    pub agent: HandKey,
    pub start_frame: u64,
    pub end_frame: u64,
    pub failure_class: Option<FailureClass>,
    pub tree: ActionTree,
}

/// The outcome of matching predictions against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    /// correct / detected; 0 when nothing was detected (see the flag).
    pub precision: f64,
    /// correct / ground-truth count.
    pub recall: f64,
    pub detected: usize,
    pub correct: usize,
    pub truth_count: usize,
    /// Set when precision is 0 only because nothing was detected.
    pub no_detections: bool,
    /// Matched (prediction index, truth index) pairs.
    pub matched: Vec<(usize, usize)>,
    /// Unmatched-truth failure counts, for entries that carry an
    /// annotation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub failures: BTreeMap<FailureClass, usize>,
}

fn overlap(a: (u64, u64), b: (u64, u64)) -> u64 {
    let start = a.0.max(b.0);
    let end = a.1.min(b.1);
    end.saturating_sub(start)
}

/// Match predicted trees against ground truth.
///
/// Predictions are visited in span order; each takes the unmatched
/// truth entry with an identical tree, the same agent, and the largest
/// non-zero overlap. The assignment is one-to-one.
pub fn match_trees(pred: &[TreeRecord], truth: &[GroundTruthEntry]) -> MatchReport {
    let mut order: Vec<usize> = (0..pred.len()).collect();
    order.sort_by_key(|&i| (pred[i].start_frame, pred[i].end_frame, pred[i].hand.clone()));
    let mut taken = vec![false; truth.len()];
    let mut matched: Vec<(usize, usize)> = Vec::new();
    for p in order {
        let record = &pred[p];
        let best = truth
            .iter()
            .enumerate()
            .filter(|(t, entry)| {
                !taken[*t]
                    && entry.agent == record.hand
                    && entry.tree == record.tree
                    && overlap(
                        (record.start_frame, record.end_frame),
                        (entry.start_frame, entry.end_frame),
                    ) > 0
            })
            .max_by_key(|(t, entry)| {
                (
                    overlap(
                        (record.start_frame, record.end_frame),
                        (entry.start_frame, entry.end_frame),
                    ),
                    // prefer the earlier entry on ties
                    std::cmp::Reverse(*t),
                )
            });
        if let Some((t, _)) = best {
            taken[t] = true;
            matched.push((p, t));
        }
    }
    matched.sort_unstable();
    let correct = matched.len();
    let detected = pred.len();
    let truth_count = truth.len();
    let mut failures: BTreeMap<FailureClass, usize> = BTreeMap::new();
    for (t, entry) in truth.iter().enumerate() {
        if !taken[t] {
            if let Some(class) = entry.failure_class {
                *failures.entry(class).or_insert(0) += 1;
            }
        }
    }
    let (precision, recall) = precision_recall(detected, correct, truth_count);
    MatchReport {
        precision,
        recall,
        detected,
        correct,
        truth_count,
        no_detections: detected == 0,
        matched,
        failures,
    }
}

/// The two headline metrics from raw counts: precision is
/// correct/detected, recall is correct/truth. Empty denominators give
/// 0 rather than NaN.
pub fn precision_recall(detected: usize, correct: usize, truth_count: usize) -> (f64, f64) {
    let precision = if detected > 0 {
        correct as f64 / detected as f64
    } else {
        0.0
    };
    let recall = if truth_count > 0 {
        correct as f64 / truth_count as f64
    } else {
        0.0
    };
    (precision, recall)
}

impl MatchReport {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), json + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MatchReport> {
        let file = std::fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Write ground truth, one entry per line:
/// `<hand> <start> <end> [fail=<class>] <tree s-expression>`.
pub fn save_truth(entries: &[GroundTruthEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for entry in entries {
        let fail = entry
            .failure_class
            .map(|c| format!("fail={c} "))
            .unwrap_or_default();
        out.push_str(&format!(
            "{} {} {} {}{}\n",
            entry.agent,
            entry.start_frame,
            entry.end_frame,
            fail,
            entry.tree.to_sexpr()
        ));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Read a ground-truth file written by [`save_truth`].
pub fn load_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthEntry>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut entries = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::InvalidInput(format!("truth line {}: {reason}", idx + 1));
        let mut parts = line.splitn(4, ' ');
        let (Some(hand), Some(start), Some(end), Some(rest)) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad("expected <hand> <start> <end> <tree>".into()));
        };
        let agent: HandKey = hand.parse()?;
        let start_frame: u64 = start.parse().map_err(|_| bad(format!("bad start {start:?}")))?;
        let end_frame: u64 = end.parse().map_err(|_| bad(format!("bad end {end:?}")))?;
        if end_frame <= start_frame {
            return Err(bad(format!("empty span {start_frame}..{end_frame}")));
        }
        let (failure_class, sexpr) = match rest.strip_prefix("fail=") {
            Some(tail) => {
                let (class, sexpr) = tail
                    .split_once(' ')
                    .ok_or_else(|| bad("annotation without a tree".into()))?;
                (Some(class.parse()?), sexpr)
            }
            None => (None, rest),
        };
        entries.push(GroundTruthEntry {
            agent,
            start_frame,
            end_frame,
            failure_class,
            tree: ActionTree::from_sexpr(sexpr)
                .map_err(|e| bad(e.to_string()))?,
        });
    }
    Ok(entries)
}

/// Confusion counts over a fixed action set; rows are truth, columns
/// are predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub actions: Vec<ActionLabel>,
    pub counts: Vec<Vec<usize>>,
}

/// Count aligned (prediction, truth) label pairs into a matrix.
pub fn confusion_matrix(
    pred: &[ActionLabel],
    truth: &[ActionLabel],
    actions: &[ActionLabel],
) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "label lists differ in length: {} predictions, {} truths",
            pred.len(),
            truth.len()
        )));
    }
    let index: BTreeMap<ActionLabel, usize> = actions
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, i))
        .collect();
    let mut counts = vec![vec![0usize; actions.len()]; actions.len()];
    for (&p, &t) in pred.iter().zip(truth) {
        let (Some(&col), Some(&row)) = (index.get(&p), index.get(&t)) else {
            return Err(Error::InvalidInput(format!(
                "label outside the action set: predicted {p}, truth {t}"
            )));
        };
        counts[row][col] += 1;
    }
    Ok(ConfusionMatrix { actions: actions.to_vec(), counts })
}

impl ConfusionMatrix {
    /// Rows divided by their sums; all-zero rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if total > 0 {
                            c as f64 / total as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// A labeled frame span of one agent, for timeline plots.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSpan {
    pub agent: HandKey,
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: String,
}

/// One frame of the comparison timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub agent: HandKey,
    pub frame: u64,
    pub predicted: String,
    pub truth: String,
}

/// The action word a tree asserts: its first action or collaboration
/// terminal, or `grasp` for a bare hand phrase.
pub fn tree_label(tree: &ActionTree) -> String {
    tree.terminals()
        .iter()
        .find_map(|t| match t {
            Terminal::A(a) | Terminal::C(a) => Some(a.to_string()),
            _ => None,
        })
        .unwrap_or_else(|| "grasp".to_string())
}

/// Labeled spans of a tree file's records.
pub fn span_labels(records: &[TreeRecord]) -> Vec<LabeledSpan> {
    records
        .iter()
        .map(|r| LabeledSpan {
            agent: r.hand.clone(),
            start_frame: r.start_frame,
            end_frame: r.end_frame,
            label: tree_label(&r.tree),
        })
        .collect()
}

/// Expand predictions and truth into one row per (agent, frame), with
/// `none` where a side has no label. Rows are grouped by agent and
/// ordered by frame.
pub fn timeline_rows(pred: &[LabeledSpan], truth: &[LabeledSpan]) -> Vec<TimelineRow> {
    let mut frames: BTreeMap<HandKey, std::collections::BTreeSet<u64>> = BTreeMap::new();
    for span in pred.iter().chain(truth) {
        let set = frames.entry(span.agent.clone()).or_default();
        set.extend(span.start_frame..span.end_frame);
    }
    let label_at = |spans: &[LabeledSpan], agent: &HandKey, frame: u64| -> String {
        spans
            .iter()
            .find(|s| &s.agent == agent && (s.start_frame..s.end_frame).contains(&frame))
            .map(|s| s.label.clone())
            .unwrap_or_else(|| "none".to_string())
    };
    let mut rows = Vec::new();
    for (agent, frames) in frames {
        for frame in frames {
            rows.push(TimelineRow {
                predicted: label_at(pred, &agent, frame),
                truth: label_at(truth, &agent, frame),
                agent: agent.clone(),
                frame,
            });
        }
    }
    rows
}

/// Write timeline rows as CSV `agent,frame,predicted,truth`.
pub fn save_timeline(rows: &[TimelineRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("agent,frame,predicted,truth\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.agent, row.frame, row.predicted, row.truth
        ));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUT: &str = "(HP (HP (H RH_P1) (O knife)) (AP (A cut) (O onion)))";
    const STIR: &str = "(HP (HP (H RH_P1) (O spoon)) (AP (A stir) (O pot)))";

    fn pred(hand: &str, span: (u64, u64), sexpr: &str) -> TreeRecord {
        TreeRecord {
            hand: hand.parse().unwrap(),
            start_frame: span.0,
            end_frame: span.1,
            grasp_id: None,
            tree: ActionTree::from_sexpr(sexpr).unwrap(),
        }
    }

    fn truth(hand: &str, span: (u64, u64), sexpr: &str) -> GroundTruthEntry {
        GroundTruthEntry {
            agent: hand.parse().unwrap(),
            start_frame: span.0,
            end_frame: span.1,
            failure_class: None,
            tree: ActionTree::from_sexpr(sexpr).unwrap(),
        }
    }

    #[test]
    fn partial_matches_give_the_expected_ratios() {
        // 32 truth entries; 16 predictions match, 8 more miss: 24
        // detected, 16 correct.
        let mut truths = Vec::new();
        let mut preds = Vec::new();
        for i in 0..32u64 {
            truths.push(truth("RH_P1", (i * 100, i * 100 + 50), CUT));
        }
        for i in 0..16u64 {
            preds.push(pred("RH_P1", (i * 100, i * 100 + 50), CUT));
        }
        for i in 0..8u64 {
            // wrong tree, same spans as unmatched truths
            preds.push(pred("RH_P1", ((16 + i) * 100, (16 + i) * 100 + 50), STIR));
        }
        let report = match_trees(&preds, &truths);
        assert_eq!(report.detected, 24);
        assert_eq!(report.correct, 16);
        assert_eq!(report.truth_count, 32);
        assert!((report.precision - 16.0 / 24.0).abs() < 1e-12);
        assert!((report.recall - 0.5).abs() < 1e-12);
        assert!((report.precision * report.detected as f64).round() == 16.0);
        assert!(!report.no_detections);
    }

    #[test]
    fn zero_predictions_flagged() {
        let truths = vec![truth("RH_P1", (0, 50), CUT)];
        let report = match_trees(&[], &truths);
        assert_eq!(report.precision, 0.0);
        assert_eq!(report.recall, 0.0);
        assert!(report.no_detections);
    }

    #[test]
    fn disjoint_spans_do_not_match() {
        let truths = vec![truth("RH_P1", (0, 50), CUT)];
        let preds = vec![pred("RH_P1", (50, 100), CUT)];
        let report = match_trees(&preds, &truths);
        assert_eq!(report.correct, 0);
        assert!(report.matched.is_empty());
    }

    #[test]
    fn matching_is_one_to_one() {
        let truths = vec![truth("RH_P1", (0, 100), CUT)];
        let preds = vec![pred("RH_P1", (0, 40), CUT), pred("RH_P1", (40, 100), CUT)];
        let report = match_trees(&preds, &truths);
        assert_eq!(report.correct, 1);
        assert_eq!(report.matched, vec![(0, 0)]);
    }

    #[test]
    fn ties_prefer_the_larger_overlap() {
        let truths = vec![
            truth("RH_P1", (0, 2), CUT),
            truth("RH_P1", (0, 8), CUT),
        ];
        let preds = vec![pred("RH_P1", (0, 10), CUT)];
        let report = match_trees(&preds, &truths);
        assert_eq!(report.matched, vec![(0, 1)]);
    }

    #[test]
    fn unmatched_annotations_are_counted() {
        let mut missed = truth("RH_P1", (0, 50), CUT);
        missed.failure_class = Some(FailureClass::HandObject);
        let matched = truth("RH_P1", (50, 100), STIR);
        let preds = vec![pred("RH_P1", (50, 100), STIR)];
        let report = match_trees(&preds, &[missed, matched]);
        assert_eq!(report.failures[&FailureClass::HandObject], 1);
        assert_eq!(report.correct, 1);
    }

    #[test]
    fn truth_file_round_trips_with_annotations() {
        let mut entry = truth("RH_P1", (0, 50), CUT);
        entry.failure_class = Some(FailureClass::ObjectObject);
        let entries = vec![entry, truth("LH_P2", (50, 100), STIR)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.txt");
        save_truth(&entries, &path).unwrap();
        assert_eq!(load_truth(&path).unwrap(), entries);
    }

    #[test]
    fn report_file_round_trips() {
        let truths = vec![truth("RH_P1", (0, 50), CUT)];
        let preds = vec![pred("RH_P1", (0, 50), CUT)];
        let report = match_trees(&preds, &truths);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        report.save(&path).unwrap();
        assert_eq!(MatchReport::load(&path).unwrap(), report);
    }

    #[test]
    fn perfect_predictions_give_the_identity_matrix() {
        use ActionLabel::*;
        let labels = [Cut, Stir, Pour, Cut];
        let matrix = confusion_matrix(&labels, &labels, &[Cut, Stir, Pour]).unwrap();
        let norm = matrix.normalized();
        for (i, row) in norm.iter().enumerate() {
            for (j, &value) in row.iter().enumerate() {
                assert_eq!(value, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn systematic_mislabels_fill_one_cell() {
        use ActionLabel::*;
        let pred = [Stir, Stir, Stir];
        let truth = [Cut, Cut, Cut];
        let matrix = confusion_matrix(&pred, &truth, &[Cut, Stir]).unwrap();
        let norm = matrix.normalized();
        assert_eq!(norm[0][1], 1.0); // row cut, column stir
        assert_eq!(norm[0][0], 0.0);
        assert_eq!(norm[1], vec![0.0, 0.0]); // nothing was truly stir
    }

    #[test]
    fn nonzero_rows_sum_to_one() {
        use ActionLabel::*;
        let pred = [Cut, Stir, Pour, Cut, Heat, Stir, Cut];
        let truth = [Cut, Cut, Pour, Stir, Heat, Stir, Pour];
        let actions = [Cut, Stir, Pour, Heat];
        let matrix = confusion_matrix(&pred, &truth, &actions).unwrap();
        let norm = matrix.normalized();
        for (row, counts) in norm.iter().zip(&matrix.counts) {
            let total: usize = counts.iter().sum();
            if total > 0 {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
        // normalized = raw / row sum, cell by cell
        for (i, row) in matrix.counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            for (j, &raw) in row.iter().enumerate() {
                if total > 0 {
                    assert_eq!(norm[i][j], raw as f64 / total as f64);
                }
            }
        }
    }

    #[test]
    fn labels_outside_the_action_set_are_rejected() {
        use ActionLabel::*;
        assert!(confusion_matrix(&[Cut], &[Wrap], &[Cut, Stir]).is_err());
        assert!(confusion_matrix(&[Cut, Cut], &[Cut], &[Cut]).is_err());
    }

    #[test]
    fn one_segment_yields_one_row_per_frame() {
        let preds = vec![LabeledSpan {
            agent: "RH_P1".parse().unwrap(),
            start_frame: 0,
            end_frame: 3,
            label: "cut".into(),
        }];
        let rows = timeline_rows(&preds, &[]);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.predicted == "cut" && r.truth == "none"));
        assert_eq!(rows.iter().map(|r| r.frame).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn empty_prediction_gives_truth_only_rows() {
        let truths = vec![LabeledSpan {
            agent: "RH_P1".parse().unwrap(),
            start_frame: 5,
            end_frame: 8,
            label: "stir".into(),
        }];
        let rows = timeline_rows(&[], &truths);
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.predicted == "none" && r.truth == "stir"));
    }

    #[test]
    fn rows_group_by_agent() {
        let span = |agent: &str, label: &str| LabeledSpan {
            agent: agent.parse().unwrap(),
            start_frame: 0,
            end_frame: 2,
            label: label.into(),
        };
        let rows = timeline_rows(&[span("RH_P2", "cut"), span("LH_P1", "stir")], &[]);
        assert_eq!(rows.len(), 4);
        // BTreeMap ordering: LH_P1 before RH_P2
        assert_eq!(rows[0].agent.to_string(), "LH_P1");
        assert_eq!(rows[3].agent.to_string(), "RH_P2");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("timeline.csv");
        save_timeline(&rows, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("agent,frame,predicted,truth\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn tree_labels_name_the_action() {
        let cut = ActionTree::from_sexpr(CUT).unwrap();
        assert_eq!(tree_label(&cut), "cut");
        let handover = ActionTree::from_sexpr(
            "(HP (HP (H LH_P1) (O lemon)) (CP (C handover) (HP (H RH_P2) (O lemon))))",
        )
        .unwrap();
        assert_eq!(tree_label(&handover), "handover");
        let bare = ActionTree::from_sexpr("(HP (H RH_P1) (O cup))").unwrap();
        assert_eq!(tree_label(&bare), "grasp");
        let records = vec![pred("RH_P1", (0, 10), CUT)];
        assert_eq!(span_labels(&records)[0].label, "cut");
    }
}
