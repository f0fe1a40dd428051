//! Batch evaluation: pipeline runs, metrics, parameter sweeps and
//! description-sensitivity scenarios.

mod metrics;
mod pipeline;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, f1_foreground, fg_iou, MetricsReport};
pub use pipeline::{
    finish, finish_all, prepare, prepare_all, run_pipeline, AdapterCalls, EvalRecord, ImageFailure,
    PreparedImage, Role, RunConfig, Scenario, ScenarioConfig, DEFAULT_DECOY,
};

use crate::adapters::AdapterSet;
use crate::error::{Error, Result};
use crate::gate::GateConfig;
use crate::maskio::ManifestEntry;

/// One `(alpha, beta, tau)` sweep point. Accepts `{"alpha":..,"beta":..,"tau":..}`
/// or a bare `[alpha, beta, tau]` triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "SettingRepr")]
pub struct Setting {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SettingRepr {
    Triple([f64; 3]),
    Named { alpha: f64, beta: f64, tau: f64 },
}

impl From<SettingRepr> for Setting {
    fn from(r: SettingRepr) -> Self {
        match r {
            SettingRepr::Triple([alpha, beta, tau]) => Setting { alpha, beta, tau },
            SettingRepr::Named { alpha, beta, tau } => Setting { alpha, beta, tau },
        }
    }
}

impl Setting {
    pub const fn new(alpha: f64, beta: f64, tau: f64) -> Self {
        Self { alpha, beta, tau }
    }

    pub fn label(&self) -> String {
        format!("({}, {}, {})", self.alpha, self.beta, self.tau)
    }

    /// Applies the weights and threshold on top of `base`.
    pub fn gate(&self, base: &GateConfig) -> Result<GateConfig> {
        let cfg = GateConfig {
            alpha: self.alpha,
            beta: self.beta,
            tau: self.tau,
            ..*base
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// The five-point sweep around the default operating point.
pub const DEFAULT_GRID: [Setting; 5] = [
    Setting::new(0.5, 0.5, 0.8),
    Setting::new(0.6, 0.4, 0.8),
    Setting::new(0.7, 0.3, 0.8),
    Setting::new(0.6, 0.4, 0.75),
    Setting::new(0.6, 0.4, 0.85),
];

pub fn parse_grid(text: &str) -> Result<Vec<Setting>> {
    let grid: Vec<Setting> =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad grid: {e}")))?;
    if grid.is_empty() {
        return Err(Error::Config("grid has no settings".into()));
    }
    Ok(grid)
}

/// Metrics for every grid setting. Candidates and embeddings are gathered
/// once; only gating and the fallback recognizer run per setting.
pub fn ablate(
    entries: &[ManifestEntry],
    cfg: &RunConfig,
    adapters: &AdapterSet,
    grid: &[Setting],
) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    let gates = grid
        .iter()
        .map(|s| s.gate(&cfg.gate))
        .collect::<Result<Vec<_>>>()?;
    let prepared = prepare_all(entries, adapters, cfg);
    Ok(grid
        .iter()
        .zip(&gates)
        .map(|(setting, gate)| {
            let records = finish_all(&prepared, gate, cfg.image_policy, adapters, cfg.execution);
            compute_metrics(&records).with_setting(setting.label(), gate)
        })
        .collect())
}

/// Runs the pipeline with the scene description replaced per `scenario`.
pub fn context_scenarios(
    entries: &[ManifestEntry],
    cfg: &RunConfig,
    adapters: &AdapterSet,
    scenario: Scenario,
) -> Result<(Vec<EvalRecord>, MetricsReport)> {
    let cfg = RunConfig {
        scenario,
        ..cfg.clone()
    };
    let records = run_pipeline(entries, &cfg, adapters)?;
    let mut report =
        compute_metrics(&records).with_setting(format!("{scenario:?}").to_lowercase(), &cfg.gate);
    report.scenario = Some(scenario);
    Ok((records, report))
}

/// Writes one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Fixed-width table of metric rows for terminal output.
pub fn render_table(rows: &[MetricsReport]) -> String {
    let mut out = format!(
        "{:<22} {:>7} {:>9} {:>6} {:>9} {:>6} {:>7}\n",
        "setting", "images", "accuracy", "CBR", "fallbacks", "FPR", "failed"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<22} {:>7} {:>8.1}% {:>6} {:>9} {:>6} {:>7}\n",
            if r.label.is_empty() { "-" } else { &r.label },
            r.images,
            100.0 * r.accuracy,
            r.cbr,
            r.fallbacks,
            r.false_positives,
            r.failed_images
        ));
    }
    out
}
