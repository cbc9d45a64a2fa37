//! Command-line front end: one subcommand per pipeline stage plus an
//! end-to-end `run`.
//!
//! Every stage reads and writes plain files, so stages can be re-run,
//! diffed, and mixed with hand-edited artifacts. Exit codes: 0 on
//! success, 1 for input or configuration problems, 2 when a pipeline
//! stage fails mid-run.

use clap::{Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use video2plan::associate::{associate_stream, load_associations, save_associations, AssociationConfig};
use video2plan::error::Error;
use video2plan::evalkit::{load_truth, match_trees};
use video2plan::fixtures::{export_fixture, fixture_names};
use video2plan::grammar::{load_trees, save_trees, tree_to_dot, trees_from_segments};
use video2plan::ingest::{load_lexicon, load_stream, Lexicon};
use video2plan::pipeline::{run_pipeline, PipelineConfig};
use video2plan::plan::{
    build_graph, load_plan, merge_segments, plan_to_dot, save_plan, PrimitiveLibrary,
};
use video2plan::recognize::{
    build_bigram_table, load_recognized, recognize_segments, save_recognized, BigramTable,
    DetectionParams, RecognizeOptions,
};
use video2plan::segment::{
    extract_trajectory, load_segments, save_segments, segment_hand, union_segments,
    SegmentationConfig,
};
use video2plan::simulate::{save_trace, DurationModel};

#[derive(Parser)]
#[command(
    name = "video2plan",
    version = Box::leak(video2plan::version_info().into_boxed_str()) as &'static str,
    about = "Turn detection streams from cooking videos into executable action plans"
)]
struct Cli {
    /// Default log filter; the RUST_LOG environment variable overrides it.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a detection stream against its lexicon and report its shape.
    Validate {
        /// Detection stream (JSONL).
        #[arg(long)]
        stream: PathBuf,
        /// Object lexicon (JSON label → class map).
        #[arg(long)]
        lexicon: PathBuf,
    },
    /// Split each hand's trajectory into segments and union the boundaries.
    Segment {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Covariance regularisation weight (pixels²).
        #[arg(long)]
        lambda: Option<f64>,
        /// Minimum relative objective gain to keep splitting.
        #[arg(long)]
        min_gain: Option<f64>,
        /// Hard cap on interior breakpoints per trajectory chunk.
        #[arg(long)]
        max_k: Option<usize>,
        /// Segments file to write (one line per segment).
        #[arg(long)]
        out: PathBuf,
    },
    /// Link hands to objects and objects to containers per segment.
    Associate {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Segments file from `segment`.
        #[arg(long)]
        segments: PathBuf,
        /// Jaccard threshold for container–ingredient pairing.
        #[arg(long)]
        tau: Option<f64>,
        /// Minimum consecutive frames for a link to persist.
        #[arg(long)]
        persistence: Option<u64>,
        /// Associations file to write (JSONL).
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a co-occurrence table from general and recipe text corpora.
    CorpusBuild {
        /// General-language corpus (plain text).
        #[arg(long)]
        general: PathBuf,
        /// Recipe corpus (plain text).
        #[arg(long)]
        recipe: PathBuf,
        /// Action vocabulary, one action per line.
        #[arg(long)]
        actions: PathBuf,
        /// Lexicon supplying the object vocabulary.
        #[arg(long)]
        lexicon: PathBuf,
        /// Additive smoothing constant.
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        /// Table file to write (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Label segments with actions, transfers, and collaborations.
    Recognize {
        /// Associations file from `associate`.
        #[arg(long)]
        associations: PathBuf,
        /// Co-occurrence table from `corpus-build`.
        #[arg(long)]
        table: PathBuf,
        /// Recognized-segments file to write (JSONL).
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse recognized segments into action trees.
    Parse {
        /// Recognized-segments file from `recognize`.
        #[arg(long)]
        recognized: PathBuf,
        /// Trees file to write (one s-expression per line).
        #[arg(long)]
        out: PathBuf,
        /// Also write one graph-description file per tree into this directory.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Merge trees across segments and expand them into an action graph.
    Plan {
        /// Trees file from `parse`.
        #[arg(long)]
        trees: PathBuf,
        /// Motion-primitive library; omitted uses the built-in default.
        #[arg(long)]
        library: Option<PathBuf>,
        /// Lexicon for ingredient-aware merging; omitted merges exact labels only.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Plan file to write (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Also write the graph as a single graph-description file.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Execute a plan and write its event trace.
    Simulate {
        /// Plan file from `plan`.
        #[arg(long)]
        plan: PathBuf,
        /// Duration model; omitted uses the built-in default.
        #[arg(long)]
        durations: Option<PathBuf>,
        /// Trace file to write (CSV time,agent,node,phase).
        #[arg(long)]
        trace: PathBuf,
    },
    /// Score predicted trees against ground truth.
    Eval {
        /// Predicted trees file.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth file (span, agent, tree per line).
        #[arg(long)]
        truth: PathBuf,
        /// Report file to write (JSON).
        #[arg(long)]
        report: PathBuf,
    },
    /// Write a named synthetic scenario with its ground truth, or list the
    /// available names.
    Fixture {
        /// Scenario name; omit to list all names.
        #[arg(long)]
        name: Option<String>,
        /// Directory the scenario files are written into.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every enabled stage from one config file.
    Run {
        /// Pipeline config (JSON); omitted starts from built-in defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        stream: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        durations: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Directory all artifacts are written into.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Skip plan execution.
        #[arg(long)]
        no_simulate: bool,
        /// Skip evaluation even when a truth path is configured.
        #[arg(long)]
        no_evaluate: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version are successes; anything else is an
            // input error, never a stage failure.
            let ok = err.exit_code() == 0;
            let _ = err.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or(cli.log_level.as_str()),
    )
    .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Stage { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

/// Fail with a named path instead of a bare "No such file or directory"
/// when an input flag points nowhere.
fn require(paths: &[&PathBuf]) -> Result<(), Error> {
    for path in paths {
        if !path.exists() {
            return Err(Error::InvalidInput(format!(
                "input {} does not exist",
                path.display()
            )));
        }
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Validate { stream, lexicon } => {
            require(&[&stream, &lexicon])?;
            let stream = load_stream(&stream, &lexicon)?;
            println!(
                "ok: {} frames at {} fps, {} hands",
                stream.frame_span(),
                stream.fps,
                stream.hand_keys().len()
            );
            Ok(())
        }
        Command::Segment {
            stream,
            lexicon,
            lambda,
            min_gain,
            max_k,
            out,
        } => {
            let mut cfg = SegmentationConfig::default();
            if let Some(v) = lambda {
                cfg.lambda_reg = v;
            }
            if let Some(v) = min_gain {
                cfg.min_gain = v;
            }
            if let Some(v) = max_k {
                cfg.max_breakpoints = v;
            }
            cfg.validate()?;
            require(&[&stream, &lexicon])?;
            let stream = load_stream(&stream, &lexicon)?;
            let segments = segment_stream(&stream, &cfg)?;
            save_segments(&segments, &out)?;
            println!("wrote {} segments to {}", segments.len(), out.display());
            Ok(())
        }
        Command::Associate {
            stream,
            lexicon,
            segments,
            tau,
            persistence,
            out,
        } => {
            let mut cfg = AssociationConfig::default();
            if let Some(v) = tau {
                cfg.tau = v;
            }
            if persistence.is_some() {
                cfg.persistence = persistence;
            }
            require(&[&stream, &lexicon, &segments])?;
            let stream = load_stream(&stream, &lexicon)?;
            let segments = load_segments(&segments)?;
            let records = associate_stream(&stream, &segments, &cfg);
            save_associations(&records, &out)?;
            println!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
        Command::CorpusBuild {
            general,
            recipe,
            actions,
            lexicon,
            epsilon,
            out,
        } => {
            require(&[&general, &recipe, &actions, &lexicon])?;
            let general = std::fs::read_to_string(&general)?;
            let recipe = std::fs::read_to_string(&recipe)?;
            let actions: Vec<String> = std::fs::read_to_string(&actions)?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            let lexicon = load_lexicon(&lexicon)?;
            let table = build_bigram_table(&general, &recipe, &actions, &lexicon, epsilon)?;
            table.save(&out)?;
            println!("wrote table for {} actions to {}", actions.len(), out.display());
            Ok(())
        }
        Command::Recognize {
            associations,
            table,
            out,
        } => {
            require(&[&associations, &table])?;
            let records = load_associations(&associations)?;
            let table = BigramTable::load(&table)?;
            let recognized = recognize_segments(
                &records,
                &table,
                &RecognizeOptions::default(),
                &DetectionParams::default(),
            );
            save_recognized(&recognized, &out)?;
            println!("wrote {} segments to {}", recognized.len(), out.display());
            Ok(())
        }
        Command::Parse {
            recognized,
            out,
            dot,
        } => {
            require(&[&recognized])?;
            let segments = load_recognized(&recognized)?;
            let trees = trees_from_segments(&segments)?;
            save_trees(&trees, &out)?;
            if let Some(dir) = dot {
                std::fs::create_dir_all(&dir)?;
                for (i, record) in trees.iter().enumerate() {
                    let name = format!("tree_{i:03}");
                    std::fs::write(dir.join(format!("{name}.dot")), tree_to_dot(&record.tree, &name))?;
                }
            }
            println!("wrote {} trees to {}", trees.len(), out.display());
            Ok(())
        }
        Command::Plan {
            trees,
            library,
            lexicon,
            out,
            dot,
        } => {
            require(&[&trees])?;
            let trees = load_trees(&trees)?;
            let library = match library {
                Some(path) => {
                    require(&[&path])?;
                    PrimitiveLibrary::load(&path)?
                }
                None => PrimitiveLibrary::default(),
            };
            let lexicon = match lexicon {
                Some(path) => {
                    require(&[&path])?;
                    load_lexicon(&path)?
                }
                None => Lexicon::new(),
            };
            let timeline = merge_segments(&trees, &lexicon);
            let graph = build_graph(&timeline, &library)?;
            save_plan(&graph, &out)?;
            if let Some(path) = dot {
                std::fs::write(&path, plan_to_dot(&graph))?;
            }
            println!(
                "wrote plan with {} nodes to {}",
                graph.nodes.len(),
                out.display()
            );
            Ok(())
        }
        Command::Simulate {
            plan,
            durations,
            trace,
        } => {
            require(&[&plan])?;
            let graph = load_plan(&plan)?;
            let durations = match durations {
                Some(path) => {
                    require(&[&path])?;
                    DurationModel::load(&path)?
                }
                None => DurationModel::default(),
            };
            let result = video2plan::simulate::run(&graph, &durations)?;
            save_trace(&result, &trace)?;
            println!(
                "wrote trace ({} events, makespan {:.3} s) to {}",
                result.events.len(),
                result.makespan,
                trace.display()
            );
            Ok(())
        }
        Command::Eval {
            pred,
            truth,
            report,
        } => {
            require(&[&pred, &truth])?;
            let pred = load_trees(&pred)?;
            let truth = load_truth(&truth)?;
            let result = match_trees(&pred, &truth);
            result.save(&report)?;
            println!(
                "precision {:.3} recall {:.3} ({} predicted, {} truth)",
                result.precision,
                result.recall,
                pred.len(),
                result.truth_count
            );
            Ok(())
        }
        Command::Fixture { name, out } => {
            let Some(name) = name else {
                for name in fixture_names() {
                    println!("{name}");
                }
                return Ok(());
            };
            let Some(out) = out else {
                return Err(Error::Config("--out is required with --name".into()));
            };
            let paths = export_fixture(&name, &out)?;
            for path in &paths {
                println!("{}", path.display());
            }
            Ok(())
        }
        Command::Run {
            config,
            stream,
            lexicon,
            table,
            library,
            durations,
            truth,
            out_dir,
            no_simulate,
            no_evaluate,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    require(&[&path])?;
                    PipelineConfig::load(&path)?
                }
                None => PipelineConfig::default(),
            };
            if let Some(v) = stream {
                cfg.stream = v;
            }
            if let Some(v) = lexicon {
                cfg.lexicon = v;
            }
            if let Some(v) = table {
                cfg.table = v;
            }
            if library.is_some() {
                cfg.library = library;
            }
            if durations.is_some() {
                cfg.durations = durations;
            }
            if truth.is_some() {
                cfg.truth = truth;
            }
            if let Some(v) = out_dir {
                cfg.out_dir = v;
            }
            if no_simulate {
                cfg.simulate = false;
            }
            if no_evaluate {
                cfg.evaluate = false;
            }
            let manifest = run_pipeline(&cfg)?;
            for artifact in &manifest.artifacts {
                println!(
                    "{:<10} {}",
                    artifact.stage,
                    cfg.out_dir.join(&artifact.file).display()
                );
            }
            for (key, value) in &manifest.metrics {
                println!("{key} = {value}");
            }
            println!("manifest   {}", cfg.out_dir.join("manifest.json").display());
            Ok(())
        }
    }
}

/// Segment every hand of a stream and union the boundaries — the same
/// recipe the end-to-end pipeline uses.
fn segment_stream(
    stream: &video2plan::ingest::DetectionStream,
    cfg: &SegmentationConfig,
) -> Result<Vec<video2plan::segment::Segment>, Error> {
    let mut per_hand = BTreeMap::new();
    for hand in stream.hand_keys() {
        let traj = extract_trajectory(stream, &hand, cfg)?;
        per_hand.insert(hand, segment_hand(&traj, cfg));
    }
    Ok(union_segments(
        &per_hand,
        stream.frame_span(),
        stream.fps,
        cfg,
    ))
}
