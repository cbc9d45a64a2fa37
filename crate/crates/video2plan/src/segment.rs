//! Temporal segmentation of hand trajectories.
//!
//! Each hand's centre trajectory is treated as a multivariate time series
//! and split greedily: starting from one segment, repeatedly insert the
//! breakpoint that most improves the summed covariance-regularised
//! Gaussian log-likelihood of the segments, then sweep every breakpoint
//! to its locally optimal position, until the relative improvement drops
//! below a threshold. Per-hand breakpoints are then unioned into one
//! timeline and sub-second segments are absorbed into their neighbours,
//! since real manipulation actions take at least a second.
//!
//! The likelihood kernels are generic over the scalar type; the
//! trajectory plumbing is fixed at the crate's default precision.

use crate::error::{Error, Result};
use crate::ingest::{DetectionStream, HandKey};
use crate::Scalar;
use num_traits::Float;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Minimum samples a segment may hold during greedy splitting.
pub const MIN_SEGMENT_SAMPLES: usize = 5;

/// Tuning knobs for trajectory extraction, greedy splitting, and the
/// boundary union.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Covariance regularisation weight λ (pixels²). Added to each
    /// segment's covariance as (λ/m)·I, which keeps every log-det finite.
    pub lambda_reg: Scalar,
    /// Hard cap on interior breakpoints per trajectory chunk.
    pub max_breakpoints: usize,
    /// Stop splitting when the relative objective improvement of an
    /// iteration falls below this.
    pub min_gain: Scalar,
    /// Segments shorter than this are absorbed into a neighbour.
    pub min_segment_s: Scalar,
    /// Boundaries from different hands closer than this many frames are
    /// coalesced to their mean. `None` derives fps/6 at union time.
    pub boundary_merge_tol: Option<u64>,
    /// Detection gaps up to this long are filled by linear interpolation;
    /// longer gaps split the trajectory into independent chunks.
    pub max_interp_gap_s: Scalar,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            lambda_reg: 1.0,
            max_breakpoints: 64,
            min_gain: 0.01,
            min_segment_s: 1.0,
            boundary_merge_tol: None,
            max_interp_gap_s: 0.5,
        }
    }
}

impl SegmentationConfig {
    /// Boundary-merge tolerance in frames for a given frame rate.
    pub fn merge_tol(&self, fps: Scalar) -> u64 {
        self.boundary_merge_tol
            .unwrap_or_else(|| (fps / 6.0).round() as u64)
    }

    /// Reject non-finite or out-of-range knobs.
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_reg.is_finite()
            && self.lambda_reg > 0.0
            && self.min_gain.is_finite()
            && self.min_gain >= 0.0
            && self.min_segment_s.is_finite()
            && self.min_segment_s >= 0.0
            && self.max_interp_gap_s.is_finite()
            && self.max_interp_gap_s >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(
                "segmentation config has non-finite or out-of-range fields".into(),
            ))
        }
    }
}

/// One interpolated trajectory sample: hand-box centre at a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub frame: u64,
    pub x: Scalar,
    pub y: Scalar,
}

/// A hand's centre trajectory with detection gaps recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct HandTrajectory {
    pub hand: HandKey,
    /// Samples sorted by frame; gaps longer than the interpolation limit
    /// leave holes between consecutive samples.
    pub samples: Vec<TrajectorySample>,
    /// Frame ranges `[start, end)` where the hand stayed undetected for
    /// longer than the interpolation limit.
    pub gaps: Vec<(u64, u64)>,
}

impl HandTrajectory {
    /// Contiguous runs of samples (split wherever a gap interrupts).
    pub fn chunks(&self) -> Vec<&[TrajectorySample]> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..self.samples.len() {
            if self.samples[i].frame != self.samples[i - 1].frame + 1 {
                out.push(&self.samples[start..i]);
                start = i;
            }
        }
        if start < self.samples.len() {
            out.push(&self.samples[start..]);
        }
        out
    }
}

/// Pull one hand's centre trajectory out of a stream, filling detection
/// gaps up to `max_interp_gap_s` by linear interpolation. Longer gaps are
/// recorded and split the trajectory into independently segmented chunks.
pub fn extract_trajectory(
    stream: &DetectionStream,
    hand: &HandKey,
    cfg: &SegmentationConfig,
) -> Result<HandTrajectory> {
    let mut detected: Vec<TrajectorySample> = Vec::new();
    for frame in &stream.frames {
        if let Some(det) = frame.hand(hand) {
            let (x, y) = det.bbox.center();
            detected.push(TrajectorySample {
                frame: frame.frame_index,
                x,
                y,
            });
        }
    }
    if detected.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "hand {hand}: insufficient samples ({} detection(s), need ≥ 2)",
            detected.len()
        )));
    }

    let max_missing = (cfg.max_interp_gap_s * stream.fps).floor() as u64;
    let mut samples = Vec::with_capacity(detected.len());
    let mut gaps = Vec::new();
    samples.push(detected[0]);
    for pair in detected.windows(2) {
        let (prev, next) = (pair[0], pair[1]);
        let missing = next.frame - prev.frame - 1;
        if missing == 0 {
            samples.push(next);
        } else if missing <= max_missing {
            for f in prev.frame + 1..next.frame {
                let t = (f - prev.frame) as Scalar / (next.frame - prev.frame) as Scalar;
                samples.push(TrajectorySample {
                    frame: f,
                    x: prev.x + t * (next.x - prev.x),
                    y: prev.y + t * (next.y - prev.y),
                });
            }
            samples.push(next);
        } else {
            gaps.push((prev.frame + 1, next.frame));
            samples.push(next);
        }
    }

    Ok(HandTrajectory {
        hand: hand.clone(),
        samples,
        gaps,
    })
}

fn ln_2pi<T: Float>() -> T {
    T::from(std::f64::consts::TAU.ln()).expect("2π fits any float")
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
/// `a` is row-major `n×n` and is consumed as scratch.
fn cholesky_logdet<T: Float>(a: &mut [T], n: usize) -> T {
    debug_assert_eq!(a.len(), n * n);
    let mut logdet = T::zero();
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum = sum - a[i * n + k] * a[j * n + k];
            }
            if i == j {
                // Regularisation guarantees positive-definiteness; the
                // clamp only guards against last-bit cancellation.
                let sum = sum.max(T::min_positive_value());
                let root = sum.sqrt();
                a[i * n + i] = root;
                logdet = logdet + root.ln();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    logdet + logdet
}

/// Covariance-regularised Gaussian log-likelihood of a sample block.
///
/// `x` is row-major with `n` columns (so `m = x.len() / n` rows). Returns
/// `−(m/2)·[log det(S + (λ/m)·I) + n·log 2π + n]` where `S` is the
/// empirical covariance about the empirical mean. Finite for every input
/// because of the `(λ/m)·I` term.
pub fn segment_loglik<T: Float>(x: &[T], n: usize, lambda: T) -> T {
    assert!(n >= 1, "need at least one column");
    assert!(!x.is_empty() && x.len() % n == 0, "x must be m×n with m ≥ 1");
    assert!(lambda > T::zero(), "lambda must be positive");
    let m = x.len() / n;
    let m_t = T::from(m).expect("row count fits the scalar");

    let mut mean = vec![T::zero(); n];
    for row in x.chunks_exact(n) {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc = *acc + *v;
        }
    }
    for acc in &mut mean {
        *acc = *acc / m_t;
    }

    // S + (λ/m)·I, built in place.
    let mut sigma = vec![T::zero(); n * n];
    for row in x.chunks_exact(n) {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in 0..=i {
                let dj = row[j] - mean[j];
                sigma[i * n + j] = sigma[i * n + j] + di * dj;
            }
        }
    }
    let reg = lambda / m_t;
    for i in 0..n {
        for j in 0..=i {
            let v = sigma[i * n + j] / m_t;
            sigma[i * n + j] = v;
            sigma[j * n + i] = v;
        }
        sigma[i * n + i] = sigma[i * n + i] + reg;
    }

    let logdet = cholesky_logdet(&mut sigma, n);
    let n_t = T::from(n).expect("column count fits the scalar");
    let two = T::one() + T::one();
    -(m_t / two) * (logdet + n_t * ln_2pi::<T>() + n_t)
}

/// Prefix moments of a 2-D point series, giving O(1) segment
/// log-likelihood queries during the greedy search.
struct Moments<T> {
    sx: Vec<T>,
    sy: Vec<T>,
    sxx: Vec<T>,
    syy: Vec<T>,
    sxy: Vec<T>,
}

impl<T: Float> Moments<T> {
    fn new(points: &[(T, T)]) -> Self {
        let len = points.len() + 1;
        let mut m = Moments {
            sx: Vec::with_capacity(len),
            sy: Vec::with_capacity(len),
            sxx: Vec::with_capacity(len),
            syy: Vec::with_capacity(len),
            sxy: Vec::with_capacity(len),
        };
        let z = T::zero();
        m.sx.push(z);
        m.sy.push(z);
        m.sxx.push(z);
        m.syy.push(z);
        m.sxy.push(z);
        for &(x, y) in points {
            m.sx.push(*m.sx.last().unwrap() + x);
            m.sy.push(*m.sy.last().unwrap() + y);
            m.sxx.push(*m.sxx.last().unwrap() + x * x);
            m.syy.push(*m.syy.last().unwrap() + y * y);
            m.sxy.push(*m.sxy.last().unwrap() + x * y);
        }
        m
    }

    /// Log-likelihood of the half-open sample range `[a, b)`; the closed
    /// 2×2 form of [`segment_loglik`].
    fn loglik(&self, a: usize, b: usize, lambda: T) -> T {
        debug_assert!(a < b);
        let m = T::from(b - a).expect("range length fits the scalar");
        let mx = (self.sx[b] - self.sx[a]) / m;
        let my = (self.sy[b] - self.sy[a]) / m;
        // Biased covariance about the empirical mean, clamped at zero so
        // floating-point cancellation can't turn variances negative.
        let cxx = ((self.sxx[b] - self.sxx[a]) / m - mx * mx).max(T::zero());
        let cyy = ((self.syy[b] - self.syy[a]) / m - my * my).max(T::zero());
        let cxy = (self.sxy[b] - self.sxy[a]) / m - mx * my;
        let r = lambda / m;
        let det = ((cxx + r) * (cyy + r) - cxy * cxy).max(T::min_positive_value());
        let two = T::one() + T::one();
        -(m / two) * (det.ln() + two * ln_2pi::<T>() + two)
    }
}

/// Greedy breakpoint search over a 2-D point series.
///
/// Returns sorted interior split indices: a breakpoint `b` separates
/// samples `[.., b)` from `[b, ..)`. Every produced segment keeps at
/// least [`MIN_SEGMENT_SAMPLES`] samples. Series shorter than twice that
/// floor return no breakpoints.
pub fn ggs_split_indices<T: Float>(
    points: &[(T, T)],
    lambda: T,
    min_gain: T,
    max_breakpoints: usize,
) -> Vec<usize> {
    let m = points.len();
    if m < 2 * MIN_SEGMENT_SAMPLES || max_breakpoints == 0 {
        return Vec::new();
    }
    let moments = Moments::new(points);
    let total = |bps: &[usize]| -> T {
        let mut obj = T::zero();
        let mut prev = 0;
        for &b in bps.iter().chain(std::iter::once(&m)) {
            obj = obj + moments.loglik(prev, b, lambda);
            prev = b;
        }
        obj
    };

    let mut breakpoints: Vec<usize> = Vec::new();
    let mut objective = moments.loglik(0, m, lambda);

    while breakpoints.len() < max_breakpoints {
        // (a) Best single insertion across all current segments.
        let mut best: Option<(T, usize)> = None;
        {
            let mut prev = 0;
            for &end in breakpoints.iter().chain(std::iter::once(&m)) {
                if end - prev >= 2 * MIN_SEGMENT_SAMPLES {
                    let whole = moments.loglik(prev, end, lambda);
                    for s in prev + MIN_SEGMENT_SAMPLES..=end - MIN_SEGMENT_SAMPLES {
                        let gain =
                            moments.loglik(prev, s, lambda) + moments.loglik(s, end, lambda) - whole;
                        let better = match best {
                            None => true,
                            Some((g, _)) => gain > g,
                        };
                        if better {
                            best = Some((gain, s));
                        }
                    }
                }
                prev = end;
            }
        }
        let Some((_, split)) = best else { break };

        let saved = breakpoints.clone();
        let pos = breakpoints.partition_point(|&b| b < split);
        breakpoints.insert(pos, split);

        // (b) Sweep each breakpoint to its locally optimal position,
        // holding neighbours fixed, until a full sweep changes nothing.
        // Moves are taken only when strictly better, so the sweep
        // terminates and the objective is monotone.
        loop {
            let mut moved = false;
            for i in 0..breakpoints.len() {
                let lo = if i == 0 { 0 } else { breakpoints[i - 1] };
                let hi = if i + 1 == breakpoints.len() {
                    m
                } else {
                    breakpoints[i + 1]
                };
                let mut best_pos = breakpoints[i];
                let mut best_val =
                    moments.loglik(lo, best_pos, lambda) + moments.loglik(best_pos, hi, lambda);
                for cand in lo + MIN_SEGMENT_SAMPLES..=hi - MIN_SEGMENT_SAMPLES {
                    let val =
                        moments.loglik(lo, cand, lambda) + moments.loglik(cand, hi, lambda);
                    if val > best_val {
                        best_val = val;
                        best_pos = cand;
                    }
                }
                if best_pos != breakpoints[i] {
                    breakpoints[i] = best_pos;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }

        let new_objective = total(&breakpoints);
        let floor = T::from(1e-12).expect("epsilon fits the scalar");
        let rel_gain = (new_objective - objective) / objective.abs().max(floor);
        if rel_gain < min_gain {
            breakpoints = saved;
            break;
        }
        debug_assert!(
            new_objective >= objective - T::from(1e-9).unwrap(),
            "greedy objective must be non-decreasing"
        );
        objective = new_objective;
    }

    breakpoints
}

/// Greedy breakpoints of one contiguous trajectory chunk, as frame
/// numbers.
pub fn ggs_breakpoints(chunk: &[TrajectorySample], cfg: &SegmentationConfig) -> Vec<u64> {
    let points: Vec<(Scalar, Scalar)> = chunk.iter().map(|s| (s.x, s.y)).collect();
    ggs_split_indices(&points, cfg.lambda_reg, cfg.min_gain, cfg.max_breakpoints)
        .into_iter()
        .map(|i| chunk[i].frame)
        .collect()
}

/// All breakpoint frames of one hand: greedy splits within each chunk,
/// plus the chunk edges themselves (a hand vanishing for longer than the
/// interpolation limit is itself a regime change).
pub fn segment_hand(traj: &HandTrajectory, cfg: &SegmentationConfig) -> Vec<u64> {
    let mut frames = BTreeSet::new();
    for chunk in traj.chunks() {
        frames.extend(ggs_breakpoints(chunk, cfg));
    }
    for &(gap_start, gap_end) in &traj.gaps {
        frames.insert(gap_start);
        frames.insert(gap_end);
    }
    if let (Some(first), Some(last)) = (traj.samples.first(), traj.samples.last()) {
        frames.insert(first.frame);
        frames.insert(last.frame + 1);
    }
    frames.into_iter().collect()
}

/// One merged-timeline segment: `[start_frame, end_frame)` plus the hands
/// whose breakpoints bound it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub start_frame: u64,
    pub end_frame: u64,
    pub sources: BTreeSet<HandKey>,
}

impl Segment {
    pub fn len_frames(&self) -> u64 {
        self.end_frame - self.start_frame
    }
}

/// Union all hands' breakpoints into one disjoint, ordered, covering
/// segmentation of `[0, length)`.
///
/// Interior boundaries closer than the merge tolerance are coalesced to
/// the floor of their mean; segments shorter than `min_segment_s` are
/// absorbed into the preceding segment (the first segment absorbs
/// forward). The result partitions `[0, length)` exactly.
pub fn union_segments(
    per_hand: &BTreeMap<HandKey, Vec<u64>>,
    length: u64,
    fps: Scalar,
    cfg: &SegmentationConfig,
) -> Vec<Segment> {
    if length == 0 {
        return Vec::new();
    }
    let tol = cfg.merge_tol(fps);

    // Interior boundaries with their contributing hands.
    let mut interior: BTreeMap<u64, BTreeSet<HandKey>> = BTreeMap::new();
    for (hand, frames) in per_hand {
        for &f in frames {
            if f > 0 && f < length {
                interior.entry(f).or_default().insert(hand.clone());
            }
        }
    }

    // Coalesce chains of boundaries closer than `tol` to their mean.
    let mut boundaries: Vec<(u64, BTreeSet<HandKey>)> = Vec::new();
    let mut cluster: Vec<(u64, BTreeSet<HandKey>)> = Vec::new();
    let flush = |cluster: &mut Vec<(u64, BTreeSet<HandKey>)>,
                 out: &mut Vec<(u64, BTreeSet<HandKey>)>| {
        if cluster.is_empty() {
            return;
        }
        let sum: u64 = cluster.iter().map(|(f, _)| *f).sum();
        let mean = sum / cluster.len() as u64;
        let mut sources = BTreeSet::new();
        for (_, s) in cluster.drain(..) {
            sources.extend(s);
        }
        out.push((mean, sources));
    };
    for (frame, sources) in interior {
        match cluster.last() {
            Some(&(last, _)) if tol > 0 && frame - last < tol => cluster.push((frame, sources)),
            Some(_) => {
                flush(&mut cluster, &mut boundaries);
                cluster.push((frame, sources));
            }
            None => cluster.push((frame, sources)),
        }
    }
    flush(&mut cluster, &mut boundaries);

    // Cut segments at the surviving boundaries.
    let mut segments: Vec<Segment> = Vec::new();
    let mut start = 0;
    let mut start_sources: BTreeSet<HandKey> = BTreeSet::new();
    for (frame, sources) in boundaries {
        if frame <= start || frame >= length {
            start_sources.extend(sources);
            continue;
        }
        let mut seg_sources = start_sources.clone();
        seg_sources.extend(sources.iter().cloned());
        segments.push(Segment {
            start_frame: start,
            end_frame: frame,
            sources: seg_sources,
        });
        start = frame;
        start_sources = sources;
    }
    segments.push(Segment {
        start_frame: start,
        end_frame: length,
        sources: start_sources,
    });

    // Absorb sub-second segments into the preceding one; the first
    // segment absorbs forward instead.
    let min_frames = (cfg.min_segment_s * fps).round() as u64;
    let mut kept: Vec<Segment> = Vec::new();
    for seg in segments {
        let too_short = seg.len_frames() < min_frames;
        match kept.last_mut() {
            Some(prev) if too_short || prev.len_frames() < min_frames => {
                prev.end_frame = seg.end_frame;
                prev.sources.extend(seg.sources);
            }
            _ => kept.push(seg),
        }
    }
    kept
}

/// Per-person variant of [`union_segments`]: each person's hands feed
/// their own union, yielding one timeline per person.
pub fn union_segments_per_person(
    per_hand: &BTreeMap<HandKey, Vec<u64>>,
    length: u64,
    fps: Scalar,
    cfg: &SegmentationConfig,
) -> BTreeMap<String, Vec<Segment>> {
    let mut persons: BTreeMap<String, BTreeMap<HandKey, Vec<u64>>> = BTreeMap::new();
    for (hand, frames) in per_hand {
        persons
            .entry(hand.person.clone())
            .or_default()
            .insert(hand.clone(), frames.clone());
    }
    persons
        .into_iter()
        .map(|(person, hands)| (person, union_segments(&hands, length, fps, cfg)))
        .collect()
}

/// Rows for the per-hand timeline export: `(hand, frame, segment id)`
/// where the id counts that hand's own breakpoints passed so far.
pub fn timeline_rows(
    per_hand: &BTreeMap<HandKey, Vec<u64>>,
    length: u64,
) -> Vec<(HandKey, u64, usize)> {
    let mut rows = Vec::new();
    for (hand, frames) in per_hand {
        let mut sorted = frames.clone();
        sorted.sort_unstable();
        for frame in 0..length {
            let id = sorted.partition_point(|&b| b <= frame);
            rows.push((hand.clone(), frame, id));
        }
    }
    rows
}

/// Write a segment sequence: one line per segment,
/// `start_frame end_frame source_hands` (comma-joined, `-` when empty).
pub fn save_segments(segments: &[Segment], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    let mut w = std::io::BufWriter::new(file);
    for seg in segments {
        let sources = if seg.sources.is_empty() {
            "-".to_string()
        } else {
            seg.sources
                .iter()
                .map(|h| h.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(w, "{} {} {}", seg.start_frame, seg.end_frame, sources)?;
    }
    Ok(())
}

/// Read a segment sequence written by [`save_segments`].
pub fn load_segments(path: impl AsRef<Path>) -> Result<Vec<Segment>> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut segments = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let (start, end, sources) = (parts.next(), parts.next(), parts.next());
        let (Some(start), Some(end), Some(sources)) = (start, end, sources) else {
            return Err(Error::InvalidInput(format!(
                "segments line {}: expected `start end sources`",
                idx + 1
            )));
        };
        let parse_u64 = |s: &str| {
            s.parse::<u64>().map_err(|_| {
                Error::InvalidInput(format!("segments line {}: bad frame number {s:?}", idx + 1))
            })
        };
        let start = parse_u64(start)?;
        let end = parse_u64(end)?;
        if start >= end {
            return Err(Error::InvalidInput(format!(
                "segments line {}: empty segment {start}..{end}",
                idx + 1
            )));
        }
        let mut hands = BTreeSet::new();
        if sources != "-" {
            for part in sources.split(',') {
                hands.insert(part.parse::<HandKey>()?);
            }
        }
        segments.push(Segment {
            start_frame: start,
            end_frame: end,
            sources: hands,
        });
    }
    Ok(segments)
}
