//! Detection-stream data model, object-class lexicon, and file I/O.
//!
//! Detections arrive pre-computed — this crate never runs vision. A
//! stream file carries one JSON record per line (`frame`, `time_s`,
//! `hands`, `objects`), optionally preceded by a header line holding the
//! frame rate; the lexicon is a sidecar JSON map from object label to
//! class. Loading validates every structural invariant up front and
//! rejects the whole file on the first violation, so a [`DetectionStream`]
//! in memory is always well-formed.

use crate::error::{Error, Result};
use crate::{BBox, Scalar};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

/// Frame rate assumed when a stream file carries no header line.
pub const DEFAULT_FPS: Scalar = 30.0;

/// Which hand of a person a detection belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    fn letter(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

/// Identifier of one hand across the whole video, e.g. `LH_P1`.
///
/// Ordering is by person first, then side, so both hands of one person
/// sort together in reports.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HandKey {
    pub person: String,
    pub side: Side,
}

impl HandKey {
    pub fn new(person: impl Into<String>, side: Side) -> Self {
        HandKey {
            person: person.into(),
            side,
        }
    }
}

impl fmt::Display for HandKey {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{}H_{}", self.side.letter(), self.person)
    }
}

impl FromStr for HandKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rest = s
            .strip_prefix("LH_")
            .map(|p| (Side::Left, p))
            .or_else(|| s.strip_prefix("RH_").map(|p| (Side::Right, p)));
        match rest {
            Some((side, person)) if !person.is_empty() => Ok(HandKey::new(person, side)),
            _ => Err(Error::InvalidInput(format!(
                "bad hand key {s:?} (expected LH_<person> or RH_<person>)"
            ))),
        }
    }
}

impl Serialize for HandKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HandKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One detected hand in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandDetection {
    pub person: String,
    pub side: Side,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: Scalar,
}

impl HandDetection {
    /// The stable identifier of this hand across frames.
    pub fn key(&self) -> HandKey {
        HandKey::new(self.person.clone(), self.side)
    }
}

/// One detected object in one frame. `id` is a stable instance id
/// supplied by the annotator or tracker; `label` must resolve through the
/// lexicon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectDetection {
    pub id: String,
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// The three object classes driving association preferences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Tool,
    Container,
    Ingredient,
}

/// Label → class map. Every object label in a stream must resolve here.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon {
    map: BTreeMap<String, ObjectClass>,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn insert(&mut self, label: impl Into<String>, class: ObjectClass) {
        self.map.insert(label.into(), class);
    }

    pub fn class_of(&self, label: &str) -> Option<ObjectClass> {
        self.map.get(label).copied()
    }

    pub fn labels(&self) -> impl Iterator<Item = (&str, ObjectClass)> {
        self.map.iter().map(|(l, c)| (l.as_str(), *c))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// All detections of one video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    #[serde(rename = "frame")]
    pub frame_index: u64,
    pub time_s: Scalar,
    #[serde(default)]
    pub hands: Vec<HandDetection>,
    #[serde(default)]
    pub objects: Vec<ObjectDetection>,
}

impl FrameDetections {
    /// Detection for `hand` in this frame, if present.
    pub fn hand(&self, hand: &HandKey) -> Option<&HandDetection> {
        self.hands
            .iter()
            .find(|h| h.person == hand.person && h.side == hand.side)
    }

    /// Detection for object instance `id` in this frame, if present.
    pub fn object(&self, id: &str) -> Option<&ObjectDetection> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// A validated detection stream: frames in order plus the lexicon they
/// resolve against. Immutable after load; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionStream {
    pub fps: Scalar,
    pub frames: Vec<FrameDetections>,
    pub lexicon: Lexicon,
}

/// Header line written at the top of stream files.
#[derive(Debug, Serialize, Deserialize)]
struct StreamHeader {
    fps: Scalar,
    #[serde(default)]
    schema: Option<u32>,
}

impl DetectionStream {
    /// Number of frames covered by the stream: one past the last frame
    /// index (frame indices need not be dense).
    pub fn frame_span(&self) -> u64 {
        self.frames.last().map_or(0, |f| f.frame_index + 1)
    }

    /// All hand keys appearing anywhere in the stream, sorted.
    pub fn hand_keys(&self) -> Vec<HandKey> {
        let mut keys = BTreeSet::new();
        for frame in &self.frames {
            for hand in &frame.hands {
                keys.insert(hand.key());
            }
        }
        keys.into_iter().collect()
    }

    /// Frames whose index falls in `[start, end)`.
    pub fn frames_in(&self, start: u64, end: u64) -> impl Iterator<Item = &FrameDetections> {
        self.frames
            .iter()
            .filter(move |f| f.frame_index >= start && f.frame_index < end)
    }

    /// Map from object instance id to its label. Loading guarantees the
    /// mapping is consistent across frames.
    pub fn object_labels(&self) -> BTreeMap<String, String> {
        let mut labels = BTreeMap::new();
        for frame in &self.frames {
            for obj in &frame.objects {
                labels
                    .entry(obj.id.clone())
                    .or_insert_with(|| obj.label.clone());
            }
        }
        labels
    }
}

/// Load and validate a lexicon file (JSON label → class map).
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let file = std::fs::File::open(path.as_ref())?;
    let lexicon: Lexicon = serde_json::from_reader(BufReader::new(file))?;
    Ok(lexicon)
}

/// Load and validate a detection stream.
///
/// The file holds one JSON record per line; an optional first line
/// `{"fps": ...}` fixes the frame rate (otherwise [`DEFAULT_FPS`] is
/// assumed). Validation is total: any violation rejects the whole file
/// with a line-addressed diagnostic.
pub fn load_stream(path: impl AsRef<Path>, lexicon_path: impl AsRef<Path>) -> Result<DetectionStream> {
    let lexicon = load_lexicon(lexicon_path)?;
    let file = std::fs::File::open(path.as_ref())?;
    parse_stream(BufReader::new(file), lexicon)
}

/// Parse a stream from any reader; see [`load_stream`] for the format.
pub fn parse_stream(reader: impl BufRead, lexicon: Lexicon) -> Result<DetectionStream> {
    let mut fps = DEFAULT_FPS;
    let mut frames: Vec<FrameDetections> = Vec::new();
    let mut labels: BTreeMap<String, String> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        // A header line carries `fps` but no `frame` field; it is only
        // honoured before any record.
        if frames.is_empty() && !trimmed.contains("\"frame\"") {
            if let Ok(header) = serde_json::from_str::<StreamHeader>(trimmed) {
                if header.fps <= 0.0 || !header.fps.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "line {line_no}: fps must be positive and finite"
                    )));
                }
                fps = header.fps;
                continue;
            }
        }
        let frame: FrameDetections = serde_json::from_str(trimmed)
            .map_err(|e| Error::InvalidInput(format!("line {line_no}: {e}")))?;
        validate_frame(&frame, &lexicon)?;
        // Instance ids are temporal identity: the same id must keep one
        // label for the whole stream.
        for obj in &frame.objects {
            match labels.get(&obj.id) {
                None => {
                    labels.insert(obj.id.clone(), obj.label.clone());
                }
                Some(known) if *known != obj.label => {
                    return Err(Error::InvalidStream {
                        frame: frame.frame_index,
                        reason: format!(
                            "object id {:?} relabeled {:?} (was {:?})",
                            obj.id, obj.label, known
                        ),
                    });
                }
                Some(_) => {}
            }
        }
        if let Some(prev) = frames.last() {
            if frame.frame_index <= prev.frame_index {
                return Err(Error::InvalidInput(format!(
                    "non-monotone frame index at line {line_no}"
                )));
            }
            if frame.time_s < prev.time_s {
                return Err(Error::InvalidInput(format!(
                    "non-monotone time_s at line {line_no}"
                )));
            }
        }
        // Timestamps must agree with the frame rate to within one frame
        // period, so downstream frame/seconds conversions are sound.
        let expected = frame.frame_index as Scalar / fps;
        if (frame.time_s - expected).abs() > 1.0 / fps + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "line {line_no}: time_s {} inconsistent with fps {} (expected ≈ {:.4})",
                frame.time_s, fps, expected
            )));
        }
        frames.push(frame);
    }

    Ok(DetectionStream { fps, frames, lexicon })
}

fn validate_frame(frame: &FrameDetections, lexicon: &Lexicon) -> Result<()> {
    let fail = |reason: String| {
        Err(Error::InvalidStream {
            frame: frame.frame_index,
            reason,
        })
    };

    if !frame.time_s.is_finite() || frame.time_s < 0.0 {
        return fail(format!("bad time_s {}", frame.time_s));
    }
    let mut seen_hands = BTreeSet::new();
    for hand in &frame.hands {
        if !hand.bbox.is_valid() {
            return fail(format!("hand {} has an invalid box", hand.key()));
        }
        if !(0.0..=1.0).contains(&hand.confidence) {
            return fail(format!(
                "hand {} confidence {} outside [0,1]",
                hand.key(),
                hand.confidence
            ));
        }
        if !seen_hands.insert(hand.key()) {
            return fail(format!("duplicate hand {}", hand.key()));
        }
    }
    let mut seen_objects = BTreeSet::new();
    for object in &frame.objects {
        if !object.bbox.is_valid() {
            return fail(format!("object {:?} has an invalid box", object.id));
        }
        if lexicon.class_of(&object.label).is_none() {
            return fail(format!("unknown label {:?}", object.label));
        }
        if !seen_objects.insert(object.id.as_str()) {
            return fail(format!("duplicate object id {:?}", object.id));
        }
    }
    Ok(())
}

/// Write a stream back to disk: header line, then one record per line.
/// `load_stream` of the result reproduces the input exactly.
pub fn save_stream(stream: &DetectionStream, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut writer = std::io::BufWriter::new(file);
    write_stream(stream, &mut writer)
}

/// Serialize a stream to any writer; see [`save_stream`].
pub fn write_stream(stream: &DetectionStream, writer: &mut impl Write) -> Result<()> {
    let header = StreamHeader {
        fps: stream.fps,
        schema: Some(crate::SCHEMA_VERSION),
    };
    writeln!(writer, "{}", serde_json::to_string(&header)?)?;
    for frame in &stream.frames {
        writeln!(writer, "{}", serde_json::to_string(frame)?)?;
    }
    Ok(())
}

/// Write a lexicon as pretty-printed JSON.
pub fn save_lexicon(lexicon: &Lexicon, path: impl AsRef<Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(lexicon)?;
    std::fs::write(path.as_ref(), json + "\n")?;
    Ok(())
}

/// Normalize a hand detection into its reach box: the detected box grown
/// by `margin · max(w, h)` on every side, clamped to the image bounds
/// when those are known.
pub fn hand_box(hand: &HandDetection, margin: Scalar, image_bounds: Option<(Scalar, Scalar)>) -> Result<BBox> {
    if margin < 0.0 || !margin.is_finite() {
        return Err(Error::InvalidInput(format!(
            "hand margin must be ≥ 0, got {margin}"
        )));
    }
    let delta = margin * hand.bbox.w.max(hand.bbox.h);
    let expanded = hand.bbox.expand_uniform(delta);
    Ok(match image_bounds {
        Some((w, h)) => expanded.clamp_to(w, h),
        None => expanded,
    })
}
