use serde::{Deserialize, Serialize};

use crate::adapters::{image_ref, AdapterSet, CropRegion, EmbedSlot};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gate::{route, score, CandidateTexts, GateConfig, ImagePolicy, Outcome, ScoreBreakdown};
use crate::lexsem::{Embedding, NormalizedText};
use crate::localizer::{localize, LocalizerConfig, TextBlock};
use crate::maskio::{ManifestEntry, SourceImageRef};

/// Default stand-in description for [`Scenario::Wrong`].
pub const DEFAULT_DECOY: &str = "a bowl of fruit on a wooden kitchen table";

/// Which scene description the gate sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// The captioner's output.
    #[default]
    Correct,
    /// An empty description; its embedding is the zero vector.
    None,
    /// A fixed unrelated description.
    Wrong,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correct" => Ok(Scenario::Correct),
            "none" => Ok(Scenario::None),
            "wrong" => Ok(Scenario::Wrong),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub decoy: String,
    /// Vector for the decoy when the embedder cannot embed free text
    /// (recorded replay embeddings).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoy_embedding: Option<Embedding>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            decoy: DEFAULT_DECOY.into(),
            decoy_embedding: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub localizer: LocalizerConfig,
    pub gate: GateConfig,
    pub image_policy: ImagePolicy,
    pub execution: Execution,
    pub scenario: Scenario,
    pub scenario_config: ScenarioConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.localizer.validate()?;
        self.gate.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AdapterCalls {
    pub segmenter: u32,
    pub recognizer: u32,
    pub captioner: u32,
    pub embedder: u32,
    pub fallback: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Segmenter,
    Recognizer,
    Captioner,
    Embedder,
    Gate,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageFailure {
    pub role: Role,
    pub message: String,
}

/// Replayable trace of one image through the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub embedder: String,
    pub blocks: Vec<TextBlock>,
    pub candidates: Vec<CandidateTexts>,
    pub breakdowns: Vec<ScoreBreakdown>,
    pub decisions: Vec<Outcome>,
    pub image_fallback: bool,
    pub final_texts: Vec<NormalizedText>,
    pub ground_truth: Vec<String>,
    pub adapter_calls: AdapterCalls,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ImageFailure>,
}

impl EvalRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Everything the gate needs, gathered once per image. Ablations re-gate
/// these without touching the recognizer, captioner or embedder again.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    entry_id: String,
    ground_truth: Vec<String>,
    image: Option<SourceImageRef>,
    embedder: String,
    blocks: Vec<TextBlock>,
    candidates: Vec<CandidateTexts>,
    e1: Option<Embedding>,
    e2: Option<Embedding>,
    e3: Vec<Embedding>,
    calls: AdapterCalls,
    warnings: Vec<String>,
    error: Option<ImageFailure>,
}

impl PreparedImage {
    pub fn image_id(&self) -> &str {
        &self.entry_id
    }

    pub fn candidates(&self) -> &[CandidateTexts] {
        &self.candidates
    }

    fn empty(entry: &ManifestEntry) -> Self {
        Self {
            entry_id: entry.image_id.clone(),
            ground_truth: entry.ground_truth.clone(),
            image: None,
            embedder: String::new(),
            blocks: Vec::new(),
            candidates: Vec::new(),
            e1: None,
            e2: None,
            e3: Vec::new(),
            calls: AdapterCalls::default(),
            warnings: Vec::new(),
            error: None,
        }
    }
}

fn fail(role: Role) -> impl Fn(Error) -> ImageFailure {
    move |e| ImageFailure {
        role,
        message: e.to_string(),
    }
}

/// Segments, localizes, recognizes, captions and embeds one image.
pub fn prepare(entry: &ManifestEntry, adapters: &AdapterSet, cfg: &RunConfig) -> PreparedImage {
    let mut out = PreparedImage::empty(entry);
    if let Err(e) = prepare_into(&mut out, entry, adapters, cfg) {
        out.error = Some(e);
    }
    out
}

fn prepare_into(
    out: &mut PreparedImage,
    entry: &ManifestEntry,
    adapters: &AdapterSet,
    cfg: &RunConfig,
) -> std::result::Result<(), ImageFailure> {
    out.calls.segmenter += 1;
    let mask = adapters
        .segmenter
        .segment(entry)
        .map_err(fail(Role::Segmenter))?;
    let image = image_ref(entry, &mask);
    out.image = Some(image.clone());
    out.embedder = adapters.embedder.describe(&entry.image_id);
    out.blocks = localize(&mask, &cfg.localizer);
    if out.blocks.is_empty() {
        return Ok(());
    }

    out.calls.recognizer += 1;
    let t1 = NormalizedText::new(
        &adapters
            .recognizer
            .recognize(&image, None)
            .map_err(fail(Role::Recognizer))?,
    );
    let t2 = match cfg.scenario {
        Scenario::Correct => {
            out.calls.captioner += 1;
            let caption = adapters
                .captioner
                .caption(&image, adapters.description_length)
                .map_err(fail(Role::Captioner))?;
            out.warnings.extend(caption.warning);
            NormalizedText::new(&caption.text)
        }
        Scenario::None => NormalizedText::default(),
        Scenario::Wrong => NormalizedText::new(&cfg.scenario_config.decoy),
    };
    let mut t3s = Vec::with_capacity(out.blocks.len());
    for block in &out.blocks {
        out.calls.recognizer += 1;
        let region = CropRegion {
            rank: block.rank,
            bbox: block.bbox,
        };
        let text = adapters
            .recognizer
            .recognize(&image, Some(&region))
            .map_err(fail(Role::Recognizer))?;
        t3s.push(NormalizedText::new(&text));
    }

    let embed = |slot: EmbedSlot, text: &NormalizedText, calls: &mut AdapterCalls| {
        calls.embedder += 1;
        adapters
            .embedder
            .embed(&entry.image_id, slot, text)
            .map_err(fail(Role::Embedder))
    };
    let e1 = embed(EmbedSlot::T1, &t1, &mut out.calls)?;
    let e2 = match (cfg.scenario, &cfg.scenario_config.decoy_embedding) {
        (Scenario::Correct, _) => embed(EmbedSlot::T2, &t2, &mut out.calls)?,
        (Scenario::None, _) => Embedding::zeros(e1.dim()),
        (Scenario::Wrong, Some(decoy)) => decoy.clone(),
        (Scenario::Wrong, None) => embed(EmbedSlot::Free, &t2, &mut out.calls)?,
    };
    let mut e3 = Vec::with_capacity(t3s.len());
    for (block, t3) in out.blocks.iter().zip(&t3s) {
        e3.push(embed(EmbedSlot::T3(block.rank), t3, &mut out.calls)?);
    }

    out.candidates = t3s
        .into_iter()
        .map(|t3| CandidateTexts {
            t1: t1.clone(),
            t2: t2.clone(),
            t3,
        })
        .collect();
    out.e1 = Some(e1);
    out.e2 = Some(e2);
    out.e3 = e3;
    Ok(())
}

/// Gates every block of a prepared image and invokes the fallback
/// recognizer only if the image policy demands it.
pub fn finish(
    prepared: &PreparedImage,
    gate: &GateConfig,
    policy: ImagePolicy,
    adapters: &AdapterSet,
) -> EvalRecord {
    let mut record = EvalRecord {
        image_id: prepared.entry_id.clone(),
        embedder: prepared.embedder.clone(),
        blocks: prepared.blocks.clone(),
        candidates: prepared.candidates.clone(),
        breakdowns: Vec::new(),
        decisions: Vec::new(),
        image_fallback: false,
        final_texts: Vec::new(),
        ground_truth: prepared.ground_truth.clone(),
        adapter_calls: prepared.calls,
        warnings: prepared.warnings.clone(),
        error: prepared.error.clone(),
    };
    if record.error.is_some() || prepared.candidates.is_empty() {
        return record;
    }
    let (Some(e1), Some(e2), Some(image)) = (&prepared.e1, &prepared.e2, &prepared.image) else {
        return record;
    };

    let mut breakdowns = Vec::with_capacity(prepared.candidates.len());
    for (c, e3) in prepared.candidates.iter().zip(&prepared.e3) {
        match score(c, e1, e2, e3, gate) {
            Ok(b) => breakdowns.push(b),
            Err(e) => {
                record.error = Some(fail(Role::Gate)(e));
                return record;
            }
        }
    }
    let decisions: Vec<Outcome> = breakdowns.iter().map(|b| route(b, gate).outcome).collect();
    record.image_fallback = policy.image_falls_back(&decisions);
    record.breakdowns = breakdowns;

    if record.image_fallback {
        record.adapter_calls.fallback += 1;
        match adapters.fallback.fallback_recognize(image) {
            Ok(texts) => {
                record.final_texts = texts.iter().map(|t| NormalizedText::new(t)).collect();
            }
            Err(e) => record.error = Some(fail(Role::Fallback)(e)),
        }
    } else {
        record.final_texts = decisions
            .iter()
            .filter_map(|d| match d {
                Outcome::Confident { final_text } => Some(final_text.clone()),
                Outcome::Fallback => None,
            })
            .collect();
    }
    record.decisions = decisions;
    record
}

pub fn prepare_all(
    entries: &[ManifestEntry],
    adapters: &AdapterSet,
    cfg: &RunConfig,
) -> Vec<PreparedImage> {
    cfg.execution
        .map(entries, |entry| prepare(entry, adapters, cfg))
}

pub fn finish_all(
    prepared: &[PreparedImage],
    gate: &GateConfig,
    policy: ImagePolicy,
    adapters: &AdapterSet,
    execution: Execution,
) -> Vec<EvalRecord> {
    execution.map(prepared, |p| finish(p, gate, policy, adapters))
}

/// Runs every manifest entry through the full pipeline. Records come back
/// in manifest order; per-image failures are recorded, not propagated.
pub fn run_pipeline(
    entries: &[ManifestEntry],
    cfg: &RunConfig,
    adapters: &AdapterSet,
) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    let prepared = prepare_all(entries, adapters, cfg);
    Ok(finish_all(
        &prepared,
        &cfg.gate,
        cfg.image_policy,
        adapters,
        cfg.execution,
    ))
}
