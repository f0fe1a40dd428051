//! `blockctx` command-line front end.
//!
//! Exit status: 0 on success, 1 on invalid input or configuration, 2 when a
//! backend or the filesystem fails (including any image that failed during
//! a batch run).

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use blockctx::adapters::{
    AdapterEndpoint, AdapterSet, EmbedSlot, Embedder, RemoteBackend, ReplayBackend, ToyEmbedder,
};
use blockctx::fixtures::SyntheticFixture;
use blockctx::gate::{route, score, CandidateTexts};
use blockctx::harness::{
    ablate, compute_metrics, context_scenarios, f1_foreground, fg_iou, parse_grid, render_table,
    run_pipeline, write_jsonl, EvalRecord, MetricsReport, Scenario, DEFAULT_GRID,
};
use blockctx::lexsem::Embedding;
use blockctx::localizer::{localize, Localization};
use blockctx::maskio::{load_manifest, read_mask, ManifestEntry, DEFAULT_THRESHOLD};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::{Backend, GateFlags, LocFlags, ResolvedConfig, RunFlags, Validation};

#[derive(Parser)]
#[command(
    name = "blockctx",
    version,
    about = "Confidence-gated scene text recognition engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract ranked text blocks from a PGM mask.
    Localize {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: u8,
        #[arg(long)]
        image_id: Option<String>,
        #[command(flatten)]
        loc: LocFlags,
        /// Output JSON file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score one candidate triple and print the routing decision.
    Score {
        #[arg(long)]
        t1: String,
        #[arg(long)]
        t2: String,
        #[arg(long)]
        t3: String,
        #[command(flatten)]
        gate: GateFlags,
        #[arg(long, value_enum, default_value_t = EmbedderKind::Toy)]
        embedder: EmbedderKind,
        /// JSON object with `T1`, `T2` and `T3` vectors (replay embedder).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Run the full pipeline over a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sweep (alpha, beta, tau) settings over a manifest.
    Ablate {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON array of settings; the built-in five-point grid when omitted.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-run a manifest with the scene description removed or replaced.
    Scenarios {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long)]
        decoy: Option<String>,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Foreground IoU and F1 between two masks.
    Maskmetrics {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: u8,
    },
    /// Write a seeded synthetic replay manifest with masks.
    Synth {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedderKind {
    Toy,
    Replay,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    None,
    Wrong,
    Correct,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::None => Scenario::None,
            ScenarioArg::Wrong => Scenario::Wrong,
            ScenarioArg::Correct => Scenario::Correct,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", render_error(&e));
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// The error chain joined by `: `, skipping causes already quoted by an
/// outer message.
fn render_error(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    let validation = e.chain().any(|cause| {
        cause.downcast_ref::<Validation>().is_some()
            || cause
                .downcast_ref::<blockctx::Error>()
                .is_some_and(blockctx::Error::is_validation)
    });
    if validation {
        1
    } else {
        2
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Localize {
            mask,
            threshold,
            image_id,
            loc,
            out,
        } => {
            let cfg = loc.apply(Default::default());
            cfg.validate()?;
            let mask = read_mask(&mask, threshold)?;
            let result = Localization {
                image_id,
                blocks: localize(&mask, &cfg),
            };
            let text = serde_json::to_string(&result)?;
            emit(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Score {
            t1,
            t2,
            t3,
            gate,
            embedder,
            embeddings,
            endpoint,
        } => cmd_score(
            &t1,
            &t2,
            &t3,
            gate,
            embedder,
            embeddings.as_deref(),
            endpoint,
        ),
        Command::Run {
            manifest,
            run,
            out_dir,
        } => {
            let resolved = run.resolve()?;
            let entries = load_manifest(&manifest)?;
            let adapters = build_adapters(&resolved, &entries)?;
            let records = run_pipeline(&entries, &resolved.run_config(), &adapters)?;
            let report = compute_metrics(&records).with_setting("run", &resolved.gate);
            prepare_out_dir(&out_dir, &resolved)?;
            write_jsonl(out_dir.join("trace.jsonl"), &records)?;
            write_jsonl(out_dir.join("metrics.jsonl"), std::slice::from_ref(&report))?;
            print!("{}", render_table(std::slice::from_ref(&report)));
            Ok(batch_status(&records))
        }
        Command::Ablate {
            manifest,
            grid,
            run,
            out_dir,
        } => {
            let resolved = run.resolve()?;
            let grid = match grid {
                Some(path) => {
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    parse_grid(&text)?
                }
                None => DEFAULT_GRID.to_vec(),
            };
            let entries = load_manifest(&manifest)?;
            let adapters = build_adapters(&resolved, &entries)?;
            let rows = ablate(&entries, &resolved.run_config(), &adapters, &grid)?;
            prepare_out_dir(&out_dir, &resolved)?;
            write_jsonl(out_dir.join("metrics.jsonl"), &rows)?;
            print!("{}", render_table(&rows));
            Ok(rows_status(&rows))
        }
        Command::Scenarios {
            manifest,
            scenario,
            decoy,
            run,
            out_dir,
        } => {
            let mut resolved = run.resolve()?;
            if let Some(decoy) = decoy {
                resolved.scenario_config.decoy = decoy;
            }
            let entries = load_manifest(&manifest)?;
            let adapters = build_adapters(&resolved, &entries)?;
            let (records, report) =
                context_scenarios(&entries, &resolved.run_config(), &adapters, scenario.into())?;
            if let Some(out_dir) = out_dir {
                prepare_out_dir(&out_dir, &resolved)?;
                write_jsonl(out_dir.join("trace.jsonl"), &records)?;
                write_jsonl(out_dir.join("metrics.jsonl"), std::slice::from_ref(&report))?;
            }
            print!("{}", render_table(std::slice::from_ref(&report)));
            Ok(batch_status(&records))
        }
        Command::Maskmetrics {
            pred,
            gt,
            threshold,
        } => {
            let pred = read_mask(&pred, threshold)?;
            let gt = read_mask(&gt, threshold)?;
            let out = json!({
                "fg_iou": fg_iou(&pred, &gt)?,
                "f1": f1_foreground(&pred, &gt)?,
            });
            println!("{out}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { n, seed, out_dir } => {
            let fixture = SyntheticFixture::generate(n, seed);
            let manifest = fixture.write_to(&out_dir)?;
            println!("{}", manifest.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_score(
    t1: &str,
    t2: &str,
    t3: &str,
    gate: GateFlags,
    embedder: EmbedderKind,
    embeddings: Option<&Path>,
    endpoint: Option<String>,
) -> Result<ExitCode> {
    let cfg = gate.apply(Default::default());
    cfg.validate()?;
    let c = CandidateTexts::new(t1, t2, t3);
    let (e1, e2, e3) = match embedder {
        EmbedderKind::Toy => {
            let toy = ToyEmbedder;
            (
                toy.embed_text(&c.t1),
                toy.embed_text(&c.t2),
                toy.embed_text(&c.t3),
            )
        }
        EmbedderKind::Replay => {
            let path = embeddings
                .ok_or_else(|| Validation::new("--embedder replay requires --embeddings"))?;
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let map: std::collections::BTreeMap<String, Embedding> = serde_json::from_str(&text)
                .map_err(|e| Validation::new(format!("bad embeddings file: {e}")))?;
            let get = |keys: &[&str]| {
                keys.iter()
                    .find_map(|k| map.get(*k).cloned())
                    .ok_or_else(|| Validation::new(format!("embeddings file lacks {}", keys[0])))
            };
            (get(&["T1"])?, get(&["T2"])?, get(&["T3", "T3@0"])?)
        }
        EmbedderKind::Remote => {
            let url =
                endpoint.ok_or_else(|| Validation::new("--embedder remote requires --endpoint"))?;
            let remote = RemoteBackend::new(AdapterEndpoint::new(url));
            (
                remote.embed("score", EmbedSlot::T1, &c.t1)?,
                remote.embed("score", EmbedSlot::T2, &c.t2)?,
                remote.embed("score", EmbedSlot::T3(0), &c.t3)?,
            )
        }
    };
    let breakdown = score(&c, &e1, &e2, &e3, &cfg)?;
    let decision = route(&breakdown, &cfg);
    println!(
        "{}",
        serde_json::to_string(
            &json!({ "candidates": c, "breakdown": breakdown, "decision": decision.outcome })
        )?
    );
    Ok(ExitCode::SUCCESS)
}

fn build_adapters(resolved: &ResolvedConfig, entries: &[ManifestEntry]) -> Result<AdapterSet> {
    let mut adapters = match resolved.backend {
        Backend::Replay => AdapterSet::replay(ReplayBackend::from_manifest(entries)?),
        Backend::Remote => {
            let url = resolved
                .endpoint
                .clone()
                .ok_or_else(|| Validation::new("--backend remote requires --endpoint"))?;
            AdapterSet::remote(RemoteBackend::new(AdapterEndpoint {
                base_url: url,
                timeout_ms: resolved.timeout_ms,
                description_length: resolved.description_length,
            }))
        }
    };
    adapters.description_length = resolved.description_length;
    if resolved.toy_embedder {
        adapters = adapters.with_embedder(Arc::new(ToyEmbedder));
    }
    Ok(adapters)
}

fn prepare_out_dir(dir: &Path, resolved: &ResolvedConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join("config.resolved.json");
    let mut text = serde_json::to_string_pretty(resolved)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, format!("{text}\n"))
            .with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn batch_status(records: &[EvalRecord]) -> ExitCode {
    let failed: Vec<&EvalRecord> = records.iter().filter(|r| r.failed()).collect();
    for r in &failed {
        if let Some(err) = &r.error {
            eprintln!(
                "image {} failed in {:?}: {}",
                r.image_id, err.role, err.message
            );
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn rows_status(rows: &[MetricsReport]) -> ExitCode {
    if rows.iter().any(|r| r.failed_images > 0) {
        eprintln!("some images failed; see metrics.jsonl");
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
