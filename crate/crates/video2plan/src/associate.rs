//! Hand→object and object→object association, per segment.
//!
//! Within every frame a hand is tied to the tool or container its
//! (margin-expanded) box overlaps most, falling back to the nearest
//! ingredient within reach. Grasped objects are then tied to what they
//! act on — the nearest overlapping container first, then the nearest
//! overlapping ingredient — and containers are paired with the
//! ingredients they hold via the Jaccard index. Per-frame links are
//! noisy, so only links persisting for a minimum number of consecutive
//! frames survive into a segment's summary, and each hand keeps a single
//! dominant grasped object per segment.

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::ingest::{self, DetectionStream, FrameDetections, HandDetection, HandKey, Lexicon, ObjectClass};
use crate::segment::Segment;
use crate::Scalar;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Knobs for the association passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    /// Hand boxes are grown by this fraction of their longest side before
    /// the overlap test.
    pub hand_margin: Scalar,
    /// A fallback ingredient must lie within this many hand-box diagonals
    /// of the hand centre.
    pub ingredient_cap_diagonals: Scalar,
    /// Minimum consecutive frames a per-frame link must persist to count.
    /// `None` derives ceil(fps/2) at run time.
    pub persistence: Option<u64>,
    /// Jaccard threshold (strict) for container–ingredient pairing.
    pub tau: Scalar,
    /// Image size for clamping expanded hand boxes, when known.
    pub image_bounds: Option<(Scalar, Scalar)>,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            hand_margin: 0.1,
            ingredient_cap_diagonals: 1.5,
            persistence: None,
            tau: 0.05,
            image_bounds: None,
        }
    }
}

impl AssociationConfig {
    /// Persistence threshold in frames for a given frame rate.
    pub fn n_min(&self, fps: Scalar) -> u64 {
        self.persistence.unwrap_or((fps / 2.0).ceil() as u64)
    }
}

/// Jaccard index (intersection over union) of two boxes; 0 when the
/// union is empty, so always in `[0, 1]`.
pub fn jaccard<T: num_traits::Float>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    a.jaccard(b)
}

/// Sorted, disjoint half-open frame ranges. Compact support-set
/// representation for links that hold over runs of frames.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameRuns(Vec<(u64, u64)>);

impl FrameRuns {
    pub fn new() -> Self {
        FrameRuns::default()
    }

    /// Build from ordered, disjoint `(start, end)` runs.
    pub fn from_runs(runs: &[(u64, u64)]) -> Self {
        let mut out = FrameRuns::new();
        for &(start, end) in runs {
            out.push(start, end);
        }
        out
    }

    /// A single contiguous run `[start, end)`.
    pub fn span(start: u64, end: u64) -> Self {
        FrameRuns::from_runs(&[(start, end)])
    }

    /// Append a run; it must start at or after the end of the last one
    /// (adjacent runs merge).
    pub fn push(&mut self, start: u64, end: u64) {
        if start >= end {
            return;
        }
        if let Some(last) = self.0.last_mut() {
            assert!(start >= last.1, "runs must be appended in order");
            if start == last.1 {
                last.1 = end;
                return;
            }
        }
        self.0.push((start, end));
    }

    pub fn runs(&self) -> &[(u64, u64)] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of frames covered.
    pub fn total(&self) -> u64 {
        self.0.iter().map(|(s, e)| e - s).sum()
    }

    /// First frame covered, if any.
    pub fn first(&self) -> Option<u64> {
        self.0.first().map(|&(s, _)| s)
    }

    /// One past the last frame covered, if any.
    pub fn last_end(&self) -> Option<u64> {
        self.0.last().map(|&(_, e)| e)
    }

    pub fn contains(&self, frame: u64) -> bool {
        self.0.iter().any(|&(s, e)| s <= frame && frame < e)
    }

    /// Frames covered by both run sets.
    pub fn intersect(&self, other: &FrameRuns) -> FrameRuns {
        let mut out = FrameRuns::new();
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a_s, a_e) = self.0[i];
            let (b_s, b_e) = other.0[j];
            let s = a_s.max(b_s);
            let e = a_e.min(b_e);
            if s < e {
                out.push(s, e);
            }
            if a_e <= b_e {
                i += 1;
            } else {
                j += 1;
            }
        }
        out
    }

    pub fn intersects(&self, other: &FrameRuns) -> bool {
        !self.intersect(other).is_empty()
    }

    /// Frames covered by either run set.
    pub fn union(&self, other: &FrameRuns) -> FrameRuns {
        let mut all: Vec<(u64, u64)> = self.0.iter().chain(other.0.iter()).copied().collect();
        all.sort_unstable();
        let mut out = FrameRuns::new();
        for (s, e) in all {
            match out.0.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => out.0.push((s, e)),
            }
        }
        out
    }

    /// Frames covered by `self` but not `other`.
    pub fn subtract(&self, other: &FrameRuns) -> FrameRuns {
        let mut out = FrameRuns::new();
        for &(s, e) in &self.0 {
            let mut cur = s;
            for &(bs, be) in &other.0 {
                if be <= cur {
                    continue;
                }
                if bs >= e {
                    break;
                }
                if bs > cur {
                    out.push(cur, bs.min(e));
                }
                cur = cur.max(be);
                if cur >= e {
                    break;
                }
            }
            if cur < e {
                out.push(cur, e);
            }
        }
        out
    }

    /// Drop runs spanning fewer than `n_min` frames.
    pub fn filter_short(&self, n_min: u64) -> FrameRuns {
        FrameRuns(
            self.0
                .iter()
                .copied()
                .filter(|&(s, e)| e - s >= n_min)
                .collect(),
        )
    }
}

/// How one object acts on another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    /// The grasped source is applied to the target (stir the pot, cut the
    /// chicken).
    ToolOnTarget,
    /// The source container currently holds the target ingredient.
    ContainerHolds,
}

/// A hand's grasped object over part of a segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandObjectLink {
    pub hand: HandKey,
    pub object: String,
    pub label: String,
    pub support: FrameRuns,
}

/// A source object acting on (or holding) a target object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectObjectLink {
    pub source: String,
    pub source_label: String,
    pub target: String,
    pub target_label: String,
    pub kind: LinkKind,
    pub support: FrameRuns,
}

/// Resolved associations of one segment: at most one dominant grasped
/// object per hand, plus the object→object links those grasps imply.
/// Records carry labels and the frame rate so later stages are
/// self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub segment: usize,
    pub start_frame: u64,
    pub end_frame: u64,
    pub fps: Scalar,
    pub hand_links: Vec<HandObjectLink>,
    pub object_links: Vec<ObjectObjectLink>,
}

impl AssociationRecord {
    /// Dominant grasped object of `hand`, if any.
    pub fn grasp_of(&self, hand: &HandKey) -> Option<&HandObjectLink> {
        self.hand_links.iter().find(|l| &l.hand == hand)
    }
}

/// Pick the object a hand operates in one frame: the tool or container
/// with the largest overlap against the margin-expanded hand box, else
/// the nearest ingredient within the distance cap, else none.
pub fn associate_hand(
    frame: &FrameDetections,
    hand: &HandDetection,
    lexicon: &Lexicon,
    cfg: &AssociationConfig,
) -> Option<String> {
    let reach = ingest::hand_box(hand, cfg.hand_margin, cfg.image_bounds).ok()?;

    // Tools and containers compete by overlap area.
    let mut best: Option<(Scalar, &str)> = None;
    for obj in &frame.objects {
        let Some(class) = lexicon.class_of(&obj.label) else {
            continue;
        };
        if class == ObjectClass::Ingredient {
            continue;
        }
        let inter = reach.intersection_area(&obj.bbox);
        if inter <= 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            // Ties go to the lexicographically first id, so frame object
            // order never matters.
            Some((b, id)) => inter > b || (inter == b && obj.id.as_str() < id),
        };
        if better {
            best = Some((inter, &obj.id));
        }
    }
    if let Some((_, id)) = best {
        return Some(id.to_string());
    }

    // Fallback: nearest ingredient within the reach cap.
    let cap = cfg.ingredient_cap_diagonals * hand.bbox.diagonal();
    let mut nearest: Option<(Scalar, &str)> = None;
    for obj in &frame.objects {
        if lexicon.class_of(&obj.label) != Some(ObjectClass::Ingredient) {
            continue;
        }
        let dist = hand.bbox.center_distance(&obj.bbox);
        if dist > cap {
            continue;
        }
        let better = match nearest {
            None => true,
            Some((d, id)) => dist < d || (dist == d && obj.id.as_str() < id),
        };
        if better {
            nearest = Some((dist, &obj.id));
        }
    }
    nearest.map(|(_, id)| id.to_string())
}

/// Pick what a grasped object acts on in one frame: the nearest
/// overlapping container, else the nearest overlapping ingredient, else
/// none. The returned link's support is the single query frame.
pub fn associate_objects(
    frame: &FrameDetections,
    grasped: &str,
    lexicon: &Lexicon,
) -> Option<ObjectObjectLink> {
    let src = frame.object(grasped)?;
    let mut best: Option<(ObjectClass, Scalar, &str)> = None;
    for obj in &frame.objects {
        if obj.id == grasped {
            continue;
        }
        let Some(class) = lexicon.class_of(&obj.label) else {
            continue;
        };
        if class == ObjectClass::Tool {
            continue;
        }
        if src.bbox.intersection_area(&obj.bbox) <= 0.0 {
            continue;
        }
        let dist = src.bbox.center_distance(&obj.bbox);
        let better = match &best {
            None => true,
            Some((bc, bd, bid)) => {
                // Containers beat ingredients outright; within a class,
                // nearer centre wins, then lexicographic id.
                (class, dist, obj.id.as_str()) < (*bc, *bd, *bid)
            }
        };
        if better {
            best = Some((class, dist, &obj.id));
        }
    }
    best.map(|(_, _, id)| {
        let target = frame.object(id).expect("candidate came from this frame");
        ObjectObjectLink {
            source: grasped.to_string(),
            source_label: src.label.clone(),
            target: target.id.clone(),
            target_label: target.label.clone(),
            kind: LinkKind::ToolOnTarget,
            support: FrameRuns(vec![(frame.frame_index, frame.frame_index + 1)]),
        }
    })
}

/// Pair containers with the ingredients they hold in one frame: every
/// ingredient goes to its best container by Jaccard index (strictly above
/// `tau`), ties by smaller container area, then id.
pub fn container_contents(
    frame: &FrameDetections,
    lexicon: &Lexicon,
    tau: Scalar,
) -> Vec<ObjectObjectLink> {
    let mut links = Vec::new();
    for ing in &frame.objects {
        if lexicon.class_of(&ing.label) != Some(ObjectClass::Ingredient) {
            continue;
        }
        let mut best: Option<(Scalar, Scalar, &str)> = None;
        for cont in &frame.objects {
            if lexicon.class_of(&cont.label) != Some(ObjectClass::Container) {
                continue;
            }
            let j = jaccard(&ing.bbox, &cont.bbox);
            if j <= tau {
                continue;
            }
            let area = cont.bbox.area();
            let better = match &best {
                None => true,
                Some((bj, ba, bid)) => {
                    j > *bj || (j == *bj && (area < *ba || (area == *ba && cont.id.as_str() < *bid)))
                }
            };
            if better {
                best = Some((j, area, &cont.id));
            }
        }
        if let Some((_, _, cid)) = best {
            let cont = frame.object(cid).expect("candidate came from this frame");
            links.push(ObjectObjectLink {
                source: cont.id.clone(),
                source_label: cont.label.clone(),
                target: ing.id.clone(),
                target_label: ing.label.clone(),
                kind: LinkKind::ContainerHolds,
                support: FrameRuns(vec![(frame.frame_index, frame.frame_index + 1)]),
            });
        }
    }
    links.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    links
}

/// Runs of identical values over a record sequence, as frame ranges.
/// A run continues while consecutive records carry the same value.
fn value_runs<V: Clone + Eq>(per_record: &[(u64, Option<V>)]) -> Vec<(V, u64, u64)> {
    let mut out: Vec<(V, u64, u64)> = Vec::new();
    let mut current: Option<(V, u64, u64)> = None;
    for (frame, value) in per_record {
        match (value, &mut current) {
            (Some(v), Some((cv, _, end))) if v == cv => *end = frame + 1,
            (Some(v), _) => {
                if let Some(run) = current.take() {
                    out.push(run);
                }
                current = Some((v.clone(), *frame, frame + 1));
            }
            (None, _) => {
                if let Some(run) = current.take() {
                    out.push(run);
                }
            }
        }
    }
    if let Some(run) = current.take() {
        out.push(run);
    }
    out
}

/// Support per value after dropping runs shorter than `n_min` records.
fn persistent_support<V: Clone + Eq + Ord>(
    per_record: &[(u64, Option<V>)],
    n_min: u64,
) -> BTreeMap<V, FrameRuns> {
    let mut by_value: BTreeMap<V, FrameRuns> = BTreeMap::new();
    let mut runs = value_runs(per_record);
    runs.retain(|(_, s, e)| e - s >= n_min);
    runs.sort_by_key(|&(_, s, _)| s);
    for (value, start, end) in runs {
        by_value.entry(value).or_default().push(start, end);
    }
    by_value
}

/// Summarise one segment's associations: per-frame links are computed,
/// runs shorter than the persistence threshold are discarded, each hand
/// keeps its dominant (largest-support) grasped object, and object→object
/// links are recomputed from those dominant grasps.
pub fn summarize_segment(
    stream: &DetectionStream,
    segment: &Segment,
    segment_id: usize,
    cfg: &AssociationConfig,
) -> AssociationRecord {
    let records: Vec<&FrameDetections> = stream
        .frames_in(segment.start_frame, segment.end_frame)
        .collect();
    let n_min = cfg.n_min(stream.fps);
    let lexicon = &stream.lexicon;
    let labels = stream.object_labels();
    let label_of = |id: &str| labels.get(id).cloned().unwrap_or_default();

    // Dominant grasped object per hand.
    let mut hand_links: Vec<HandObjectLink> = Vec::new();
    for hand in stream.hand_keys() {
        let per_record: Vec<(u64, Option<String>)> = records
            .iter()
            .map(|frame| {
                let link = frame
                    .hand(&hand)
                    .and_then(|det| associate_hand(frame, det, lexicon, cfg));
                (frame.frame_index, link)
            })
            .collect();
        let support = persistent_support(&per_record, n_min);
        let dominant = support.into_iter().max_by(|(a_id, a), (b_id, b)| {
            (a.total(), std::cmp::Reverse(a_id)).cmp(&(b.total(), std::cmp::Reverse(b_id)))
        });
        if let Some((object, support)) = dominant {
            let label = label_of(&object);
            hand_links.push(HandObjectLink {
                hand: hand.clone(),
                object,
                label,
                support,
            });
        }
    }

    let mut object_links: Vec<ObjectObjectLink> = Vec::new();

    // What each dominant grasped object acts on.
    for link in &hand_links {
        let per_record: Vec<(u64, Option<(String, LinkKind)>)> = records
            .iter()
            .map(|frame| {
                let target = if link.support.contains(frame.frame_index) {
                    associate_objects(frame, &link.object, lexicon)
                        .map(|l| (l.target, l.kind))
                } else {
                    None
                };
                (frame.frame_index, target)
            })
            .collect();
        let support = persistent_support(&per_record, n_min);
        let dominant = support.into_iter().max_by(|(a_id, a), (b_id, b)| {
            (a.total(), std::cmp::Reverse(a_id)).cmp(&(b.total(), std::cmp::Reverse(b_id)))
        });
        if let Some(((target, kind), support)) = dominant {
            object_links.push(ObjectObjectLink {
                source: link.object.clone(),
                source_label: link.label.clone(),
                target_label: label_of(&target),
                target,
                kind,
                support,
            });
        }
    }

    // Which container holds each ingredient. Frames where a hand grasps
    // the ingredient are subtracted first: a carried object is in the
    // hand, not in whatever container its box happens to cross.
    let mut grasped_frames: BTreeMap<&str, FrameRuns> = BTreeMap::new();
    for link in &hand_links {
        let entry = grasped_frames.entry(link.object.as_str()).or_default();
        *entry = entry.union(&link.support);
    }
    let per_record: Vec<(u64, Vec<(String, String)>)> = records
        .iter()
        .map(|frame| {
            let pairs = container_contents(frame, lexicon, cfg.tau)
                .into_iter()
                .map(|l| (l.source, l.target))
                .collect();
            (frame.frame_index, pairs)
        })
        .collect();
    let mut pair_records: BTreeMap<(String, String), Vec<(u64, Option<()>)>> = BTreeMap::new();
    for (_, pairs) in &per_record {
        for pair in pairs {
            pair_records.entry(pair.clone()).or_default();
        }
    }
    for (pair, records_of_pair) in &mut pair_records {
        for (frame, pairs) in &per_record {
            let held = pairs.iter().any(|p| p == pair);
            records_of_pair.push((*frame, held.then_some(())));
        }
    }
    // Dominant container per ingredient, by persistent support.
    let mut best_per_ingredient: BTreeMap<String, (String, FrameRuns)> = BTreeMap::new();
    for ((container, ingredient), recs) in pair_records {
        let mut support = persistent_support(&recs, n_min)
            .remove(&())
            .unwrap_or_default();
        if let Some(grasped) = grasped_frames.get(ingredient.as_str()) {
            support = support.subtract(grasped).filter_short(n_min);
        }
        if support.is_empty() {
            continue;
        }
        let better = match best_per_ingredient.get(&ingredient) {
            None => true,
            Some((bc, bs)) => {
                support.total() > bs.total() || (support.total() == bs.total() && container < *bc)
            }
        };
        if better {
            best_per_ingredient.insert(ingredient.clone(), (container, support));
        }
    }
    for (ingredient, (container, support)) in best_per_ingredient {
        object_links.push(ObjectObjectLink {
            source_label: label_of(&container),
            source: container,
            target_label: label_of(&ingredient),
            target: ingredient,
            kind: LinkKind::ContainerHolds,
            support,
        });
    }
    object_links.sort_by(|a, b| (a.kind, &a.source, &a.target).cmp(&(b.kind, &b.source, &b.target)));

    AssociationRecord {
        segment: segment_id,
        start_frame: segment.start_frame,
        end_frame: segment.end_frame,
        fps: stream.fps,
        hand_links,
        object_links,
    }
}

/// Summarise every segment of a stream.
pub fn associate_stream(
    stream: &DetectionStream,
    segments: &[Segment],
    cfg: &AssociationConfig,
) -> Vec<AssociationRecord> {
    segments
        .iter()
        .enumerate()
        .map(|(id, seg)| summarize_segment(stream, seg, id, cfg))
        .collect()
}

/// Write association records, one JSON record per line.
pub fn save_associations(records: &[AssociationRecord], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(file);
    for record in records {
        writeln!(w, "{}", serde_json::to_string(record)?)?;
    }
    Ok(())
}

/// Read association records written by [`save_associations`].
pub fn load_associations(path: impl AsRef<Path>) -> Result<Vec<AssociationRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AssociationRecord = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("associations line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    Ok(records)
}
