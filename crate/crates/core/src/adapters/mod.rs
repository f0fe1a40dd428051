//! Interfaces to the external model roles and their backends.
//!
//! The engine never runs a neural model itself. Each role is a trait:
//! [`Segmenter`] yields the binary mask, [`Recognizer`] reads the full
//! image or a crop, [`Captioner`] describes the scene, [`Embedder`] turns
//! text into vectors and [`FallbackRecognizer`] is the expensive
//! end-to-end reader used when the gate is not confident.
//!
//! Three backends exist: [`ReplayBackend`] serves recorded outputs from the
//! manifest, [`ToyEmbedder`] is a deterministic character-bigram embedder,
//! and [`RemoteBackend`] speaks JSON over HTTP to a model server.

mod remote;
mod replay;
mod toy;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use remote::{AdapterEndpoint, RemoteBackend, ServerInfo};
pub use replay::{ReplayBackend, ReplayBundle};
pub use toy::{ToyEmbedder, TOY_DIM, TOY_SEED};

use crate::error::{Error, Result};
use crate::lexsem::{Embedding, NormalizedText};
use crate::localizer::BBox;
use crate::maskio::{read_mask, BinaryMask, ManifestEntry, SourceImageRef, DEFAULT_THRESHOLD};

/// Caption verbosity preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionLength {
    Short,
    #[default]
    Medium,
    Long,
}

impl DescriptionLength {
    /// `(max_length, min_length)` generation bounds.
    pub fn bounds(self) -> (u32, u32) {
        match self {
            DescriptionLength::Short => (40, 20),
            DescriptionLength::Medium => (80, 40),
            DescriptionLength::Long => (120, 80),
        }
    }
}

impl std::str::FromStr for DescriptionLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(Self::Short),
            "medium" => Ok(Self::Medium),
            "long" => Ok(Self::Long),
            other => Err(Error::Config(format!(
                "unknown description length {other:?}"
            ))),
        }
    }
}

/// A text block handed to the crop recognizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropRegion {
    pub rank: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Caption {
    pub text: String,
    /// Set when the backend produced a description outside the requested bounds.
    pub warning: Option<String>,
}

impl Caption {
    pub fn plain(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            warning: None,
        }
    }
}

/// Which recorded text an embedding request refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbedSlot {
    T1,
    T2,
    T3(usize),
    /// Text with no recorded counterpart, e.g. a substituted description.
    Free,
}

impl EmbedSlot {
    pub fn key(self) -> String {
        match self {
            EmbedSlot::T1 => "T1".into(),
            EmbedSlot::T2 => "T2".into(),
            EmbedSlot::T3(rank) => format!("T3@{rank}"),
            EmbedSlot::Free => "free".into(),
        }
    }
}

pub trait Segmenter: Send + Sync {
    fn segment(&self, entry: &ManifestEntry) -> Result<BinaryMask>;
}

pub trait Recognizer: Send + Sync {
    /// Full-image recognition when `region` is `None`, crop recognition otherwise.
    fn recognize(&self, image: &SourceImageRef, region: Option<&CropRegion>) -> Result<String>;
}

pub trait Captioner: Send + Sync {
    fn caption(&self, image: &SourceImageRef, length: DescriptionLength) -> Result<Caption>;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, image_id: &str, slot: EmbedSlot, text: &NormalizedText) -> Result<Embedding>;

    /// Name recorded in the trace for embeddings of this image.
    fn describe(&self, image_id: &str) -> String;
}

pub trait FallbackRecognizer: Send + Sync {
    fn fallback_recognize(&self, image: &SourceImageRef) -> Result<Vec<String>>;
}

/// Reads `mask_path` from disk.
#[derive(Debug, Clone, Copy)]
pub struct MaskFileSegmenter {
    pub threshold: u8,
}

impl Default for MaskFileSegmenter {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl Segmenter for MaskFileSegmenter {
    fn segment(&self, entry: &ManifestEntry) -> Result<BinaryMask> {
        read_mask(&entry.mask_path, self.threshold)
    }
}

/// Serves masks held in memory, keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct InMemorySegmenter {
    masks: HashMap<String, BinaryMask>,
}

impl InMemorySegmenter {
    pub fn new(masks: HashMap<String, BinaryMask>) -> Self {
        Self { masks }
    }

    pub fn insert(&mut self, image_id: impl Into<String>, mask: BinaryMask) {
        self.masks.insert(image_id.into(), mask);
    }
}

impl Segmenter for InMemorySegmenter {
    fn segment(&self, entry: &ManifestEntry) -> Result<BinaryMask> {
        self.masks
            .get(&entry.image_id)
            .cloned()
            .ok_or_else(|| Error::Fixture(format!("no mask for image {:?}", entry.image_id)))
    }
}

/// One backend per model role.
#[derive(Clone)]
pub struct AdapterSet {
    pub segmenter: Arc<dyn Segmenter>,
    pub recognizer: Arc<dyn Recognizer>,
    pub captioner: Arc<dyn Captioner>,
    pub embedder: Arc<dyn Embedder>,
    pub fallback: Arc<dyn FallbackRecognizer>,
    pub description_length: DescriptionLength,
}

impl AdapterSet {
    /// Every role served from recorded outputs, masks read from disk.
    pub fn replay(backend: ReplayBackend) -> Self {
        Self::replay_with_segmenter(backend, Arc::new(MaskFileSegmenter::default()))
    }

    pub fn replay_with_segmenter(backend: ReplayBackend, segmenter: Arc<dyn Segmenter>) -> Self {
        let backend = Arc::new(backend);
        Self {
            segmenter,
            recognizer: backend.clone(),
            captioner: backend.clone(),
            embedder: backend.clone(),
            fallback: backend,
            description_length: DescriptionLength::default(),
        }
    }

    /// Every model role served by a remote server, masks read from disk.
    pub fn remote(backend: RemoteBackend) -> Self {
        let description_length = backend.endpoint().description_length;
        let backend = Arc::new(backend);
        Self {
            segmenter: Arc::new(MaskFileSegmenter::default()),
            recognizer: backend.clone(),
            captioner: backend.clone(),
            embedder: backend.clone(),
            fallback: backend,
            description_length,
        }
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }
}

/// The image reference for an entry whose mask is known.
pub fn image_ref(entry: &ManifestEntry, mask: &BinaryMask) -> SourceImageRef {
    SourceImageRef::for_mask(entry.image_id.clone(), entry.image_path.clone(), mask)
}

pub(crate) fn read_sidecar(
    path: &PathBuf,
) -> Result<std::collections::BTreeMap<String, Embedding>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Fixture(format!("{}: bad embeddings sidecar: {e}", path.display())))
}
