//! End-to-end orchestration behind a single declarative config.
//!
//! [`run_pipeline`] chains the stages — ingest, segment, associate,
//! recognize, parse, plan, then optionally simulate and evaluate — and
//! persists every stage's output as a file in the configured directory,
//! so any stage can be re-run or inspected on its own. A run ends with a
//! manifest listing each artifact with a SHA-256 content hash plus a few
//! summary metrics; identical inputs and config produce identical
//! hashes, which makes runs comparable bit for bit.
//!
//! The config is validated up front: every referenced path must exist
//! before the first stage starts. Stage failures abort the run wrapped
//! in [`Error::Stage`], naming the stage that died.

use crate::associate::{associate_stream, save_associations, AssociationConfig};
use crate::error::{Error, Result};
use crate::evalkit::load_truth;
use crate::grammar::{save_trees, trees_from_segments};
use crate::ingest::{load_stream, save_stream};
use crate::plan::{build_graph, merge_segments, save_plan, PrimitiveLibrary};
use crate::recognize::{
    recognize_segments, save_recognized, BigramTable, DetectionParams, RecognizeOptions,
};
use crate::segment::{
    extract_trajectory, save_segments, segment_hand, union_segments, SegmentationConfig,
};
use crate::simulate::{save_trace, DurationModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

/// Everything one end-to-end run needs. Paths are resolved relative to
/// the process working directory; optional paths fall back to built-in
/// defaults (primitive library, durations) or disable their stage
/// (ground truth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Detection stream (JSONL, see [`crate::ingest`]).
    pub stream: PathBuf,
    /// Object lexicon (JSON label → class map).
    pub lexicon: PathBuf,
    /// Co-occurrence table for action recognition (JSON).
    pub table: PathBuf,
    /// Motion-primitive library; `None` uses the built-in default.
    pub library: Option<PathBuf>,
    /// Primitive duration model; `None` uses the built-in default.
    pub durations: Option<PathBuf>,
    /// Ground truth for evaluation; `None` skips the eval stage.
    pub truth: Option<PathBuf>,
    /// Directory all artifacts are written into (created if absent).
    pub out_dir: PathBuf,
    /// Execute the plan and write a trace.
    pub simulate: bool,
    /// Score trees against `truth` (no effect without a truth path).
    pub evaluate: bool,
    pub segmentation: SegmentationConfig,
    pub association: AssociationConfig,
    pub recognition: RecognizeOptions,
    pub detection: DetectionParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stream: PathBuf::new(),
            lexicon: PathBuf::new(),
            table: PathBuf::new(),
            library: None,
            durations: None,
            truth: None,
            out_dir: PathBuf::new(),
            simulate: true,
            evaluate: true,
            segmentation: SegmentationConfig::default(),
            association: AssociationConfig::default(),
            recognition: RecognizeOptions::default(),
            detection: DetectionParams::default(),
        }
    }
}

impl PipelineConfig {
    /// Check the config is complete and every referenced path exists.
    /// Runs before any stage, so a bad path never leaves half a run on
    /// disk.
    pub fn validate(&self) -> Result<()> {
        let required = [
            ("stream", &self.stream),
            ("lexicon", &self.lexicon),
            ("table", &self.table),
        ];
        for (field, path) in required {
            if path.as_os_str().is_empty() {
                return Err(Error::Config(format!("pipeline config: {field} not set")));
            }
            if !path.exists() {
                return Err(Error::Config(format!(
                    "pipeline config: {field} path {} does not exist",
                    path.display()
                )));
            }
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("pipeline config: out_dir not set".into()));
        }
        let optional = [
            ("library", &self.library),
            ("durations", &self.durations),
            ("truth", &self.truth),
        ];
        for (field, path) in optional {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "pipeline config: {field} path {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        self.segmentation.validate()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), json + "\n")?;
        Ok(())
    }

    /// Load a config file. Validation is separate: load what the user
    /// wrote, then let [`PipelineConfig::validate`] point at problems.
    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let file = std::fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// One persisted stage output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Stage that wrote the file.
    pub stage: String,
    /// File name inside the run's output directory.
    pub file: String,
    /// Lowercase hex SHA-256 of the file's bytes.
    pub sha256: String,
}

/// The record of one run: tool version, every artifact with its content
/// hash, and summary metrics. Written as `manifest.json` in the output
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    /// The entry a given stage wrote, if that stage ran.
    pub fn artifact(&self, stage: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.stage == stage)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path.as_ref(), json + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunManifest> {
        let file = std::fs::File::open(path.as_ref())?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path.as_ref())?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn stage<T>(name: &'static str, run: impl FnOnce() -> Result<T>) -> Result<T> {
    run().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Run every enabled stage in order, persisting each output under
/// `cfg.out_dir` and finishing with `manifest.json`. Returns the
/// manifest. The first failing stage aborts the run with a
/// stage-qualified error; config problems surface before any stage
/// runs.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let mut artifacts: Vec<ArtifactEntry> = Vec::new();
    let mut metrics: BTreeMap<String, f64> = BTreeMap::new();
    let record = |artifacts: &mut Vec<ArtifactEntry>, stage_name: &str, file: &str| {
        sha256_file(cfg.out_dir.join(file)).map(|sha256| {
            artifacts.push(ArtifactEntry {
                stage: stage_name.to_string(),
                file: file.to_string(),
                sha256,
            })
        })
    };

    // Ingest: validate the stream and persist the normalized copy.
    let stream = stage("ingest", || {
        let stream = load_stream(&cfg.stream, &cfg.lexicon)?;
        save_stream(&stream, cfg.out_dir.join("stream.jsonl"))?;
        Ok(stream)
    })?;
    stage("ingest", || record(&mut artifacts, "ingest", "stream.jsonl"))?;
    metrics.insert("frames".into(), stream.frame_span() as f64);
    metrics.insert("hands".into(), stream.hand_keys().len() as f64);

    // Segment: per-hand breakpoints unioned into one timeline.
    let segments = stage("segment", || {
        let mut per_hand = BTreeMap::new();
        for hand in stream.hand_keys() {
            let traj = extract_trajectory(&stream, &hand, &cfg.segmentation)?;
            per_hand.insert(hand, segment_hand(&traj, &cfg.segmentation));
        }
        let segments = union_segments(
            &per_hand,
            stream.frame_span(),
            stream.fps,
            &cfg.segmentation,
        );
        save_segments(&segments, cfg.out_dir.join("segments.txt"))?;
        Ok(segments)
    })?;
    stage("segment", || record(&mut artifacts, "segment", "segments.txt"))?;
    metrics.insert("segments".into(), segments.len() as f64);

    // Associate: hand→object and object→object links per segment.
    let records = stage("associate", || {
        let records = associate_stream(&stream, &segments, &cfg.association);
        save_associations(&records, cfg.out_dir.join("associations.jsonl"))?;
        Ok(records)
    })?;
    stage("associate", || {
        record(&mut artifacts, "associate", "associations.jsonl")
    })?;

    // Recognize: actions, transfers, collaborations.
    let recognized = stage("recognize", || {
        let table = BigramTable::load(&cfg.table)?;
        let recognized = recognize_segments(&records, &table, &cfg.recognition, &cfg.detection);
        save_recognized(&recognized, cfg.out_dir.join("recognized.jsonl"))?;
        Ok(recognized)
    })?;
    stage("recognize", || {
        record(&mut artifacts, "recognize", "recognized.jsonl")
    })?;

    // Parse: visual sentences into canonical trees.
    let trees = stage("parse", || {
        let trees = trees_from_segments(&recognized)?;
        save_trees(&trees, cfg.out_dir.join("trees.txt"))?;
        Ok(trees)
    })?;
    stage("parse", || record(&mut artifacts, "parse", "trees.txt"))?;
    metrics.insert("trees".into(), trees.len() as f64);

    // Plan: merge repeats, expand primitives, wire synchronisation.
    let graph = stage("plan", || {
        let library = match &cfg.library {
            Some(path) => PrimitiveLibrary::load(path)?,
            None => PrimitiveLibrary::default(),
        };
        let timeline = merge_segments(&trees, &stream.lexicon);
        let graph = build_graph(&timeline, &library)?;
        save_plan(&graph, cfg.out_dir.join("plan.json"))?;
        Ok(graph)
    })?;
    stage("plan", || record(&mut artifacts, "plan", "plan.json"))?;
    metrics.insert("plan_nodes".into(), graph.nodes.len() as f64);
    metrics.insert("plan_sync_edges".into(), graph.sync_edges.len() as f64);

    // Simulate: execute the plan against the duration model.
    if cfg.simulate {
        let trace = stage("simulate", || {
            let durations = match &cfg.durations {
                Some(path) => DurationModel::load(path)?,
                None => DurationModel::default(),
            };
            let trace = crate::simulate::run(&graph, &durations)?;
            save_trace(&trace, cfg.out_dir.join("trace.csv"))?;
            Ok(trace)
        })?;
        stage("simulate", || record(&mut artifacts, "simulate", "trace.csv"))?;
        metrics.insert("makespan_s".into(), trace.makespan);
    }

    // Evaluate: score trees against the annotated truth.
    if cfg.evaluate {
        if let Some(truth_path) = &cfg.truth {
            let report = stage("eval", || {
                let truth = load_truth(truth_path)?;
                let report = crate::evalkit::match_trees(&trees, &truth);
                report.save(cfg.out_dir.join("report.json"))?;
                Ok(report)
            })?;
            stage("eval", || record(&mut artifacts, "eval", "report.json"))?;
            metrics.insert("precision".into(), report.precision);
            metrics.insert("recall".into(), report.recall);
            metrics.insert("truth_count".into(), report.truth_count as f64);
        }
    }

    let manifest = RunManifest {
        version: crate::version_info(),
        artifacts,
        metrics,
    };
    manifest.save(cfg.out_dir.join("manifest.json"))?;
    Ok(manifest)
}
