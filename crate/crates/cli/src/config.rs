//! Flag groups and the resolved configuration written next to every run.
//!
//! Precedence: command-line flags, then the `--config` file, then defaults.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use blockctx::adapters::DescriptionLength;
use blockctx::exec::Execution;
use blockctx::gate::{GateConfig, ImagePolicy};
use blockctx::harness::{RunConfig, ScenarioConfig};
use blockctx::lexsem::LexicalMode;
use blockctx::localizer::{Connectivity, LocalizerConfig};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

/// Bad user input detected by the CLI itself.
#[derive(Debug)]
pub struct Validation(String);

impl Validation {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl std::fmt::Display for Validation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Validation {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Replay,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Any,
    All,
    Majority,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LengthArg {
    Short,
    Medium,
    Long,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LexicalArg {
    WholeString,
    TokenBest,
}

#[derive(Debug, Clone, Args)]
pub struct LocFlags {
    /// Padding added around each block, in pixels.
    #[arg(long)]
    pub padding: Option<u32>,
    /// Minimum box area kept, in square pixels.
    #[arg(long)]
    pub min_area: Option<u64>,
    /// Maximum number of blocks per image.
    #[arg(long)]
    pub max_blocks: Option<usize>,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(["4", "8"]))]
    pub connectivity: Option<String>,
}

impl LocFlags {
    pub fn apply(&self, mut cfg: LocalizerConfig) -> LocalizerConfig {
        if let Some(p) = self.padding {
            cfg.padding = p;
        }
        if let Some(a) = self.min_area {
            cfg.min_area = a;
        }
        if let Some(n) = self.max_blocks {
            cfg.max_blocks = n;
        }
        if let Some(c) = &self.connectivity {
            cfg.connectivity = if c == "4" {
                Connectivity::Four
            } else {
                Connectivity::Eight
            };
        }
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct GateFlags {
    /// Weight of the semantic score.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the lexical score.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Confidence threshold below which the fallback recognizer runs.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub lexical: Option<LexicalArg>,
}

impl GateFlags {
    pub fn apply(&self, mut cfg: GateConfig) -> GateConfig {
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        if let Some(l) = self.lexical {
            cfg.lexical = match l {
                LexicalArg::WholeString => LexicalMode::WholeString,
                LexicalArg::TokenBest => LexicalMode::TokenBest,
            };
        }
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// JSON configuration overlay (same shape as config.resolved.json).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub loc: LocFlags,
    #[command(flatten)]
    pub gate: GateFlags,
    #[arg(long, value_enum)]
    pub image_level_fallback: Option<PolicyArg>,
    #[arg(long, value_enum)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, value_enum)]
    pub desc_length: Option<LengthArg>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Images processed concurrently.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Embed with the built-in bigram embedder regardless of backend.
    #[arg(long)]
    pub toy_embedder: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolvedConfig {
    pub localizer: LocalizerConfig,
    pub gate: GateConfig,
    pub image_policy: ImagePolicy,
    pub backend: Backend,
    pub endpoint: Option<String>,
    pub description_length: DescriptionLength,
    pub timeout_ms: u64,
    pub workers: usize,
    pub toy_embedder: bool,
    pub scenario_config: ScenarioConfig,
}

impl Default for ResolvedConfig {
    fn default() -> Self {
        Self {
            localizer: LocalizerConfig::default(),
            gate: GateConfig::default(),
            image_policy: ImagePolicy::default(),
            backend: Backend::default(),
            endpoint: None,
            description_length: DescriptionLength::default(),
            timeout_ms: 30_000,
            workers: 1,
            toy_embedder: false,
            scenario_config: ScenarioConfig::default(),
        }
    }
}

impl ResolvedConfig {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            localizer: self.localizer,
            gate: self.gate,
            image_policy: self.image_policy,
            execution: Execution::with_workers(self.workers),
            scenario_config: self.scenario_config.clone(),
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.localizer.validate()?;
        self.gate.validate()?;
        if self.workers == 0 {
            return Err(Validation::new("--workers must be at least 1").into());
        }
        if self.timeout_ms == 0 {
            return Err(Validation::new("--timeout-ms must be positive").into());
        }
        Ok(())
    }
}

impl RunFlags {
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| Validation::new(format!("{}: {e}", path.display())))?
            }
            None => ResolvedConfig::default(),
        };
        cfg.localizer = self.loc.apply(cfg.localizer);
        cfg.gate = self.gate.apply(cfg.gate);
        if let Some(p) = self.image_level_fallback {
            cfg.image_policy = match p {
                PolicyArg::Any => ImagePolicy::Any,
                PolicyArg::All => ImagePolicy::All,
                PolicyArg::Majority => ImagePolicy::Majority,
            };
        }
        if let Some(b) = self.backend {
            cfg.backend = b;
        }
        if let Some(e) = &self.endpoint {
            cfg.endpoint = Some(e.clone());
        }
        if let Some(l) = self.desc_length {
            cfg.description_length = match l {
                LengthArg::Short => DescriptionLength::Short,
                LengthArg::Medium => DescriptionLength::Medium,
                LengthArg::Long => DescriptionLength::Long,
            };
        }
        if let Some(t) = self.timeout_ms {
            cfg.timeout_ms = t;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.toy_embedder |= self.toy_embedder;
        cfg.validate()?;
        Ok(cfg)
    }
}
