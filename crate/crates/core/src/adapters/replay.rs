use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexsem::{Embedding, NormalizedText};
use crate::maskio::{ManifestEntry, SourceImageRef};

use super::{
    read_sidecar, Caption, Captioner, CropRegion, DescriptionLength, EmbedSlot, Embedder,
    FallbackRecognizer, Recognizer, ToyEmbedder,
};

/// Recorded model outputs for one image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReplayBundle {
    pub t1: String,
    pub t2: String,
    #[serde(default)]
    pub t3_by_rank: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_text: Option<String>,
    /// Keyed `T1`, `T2`, `T3@<rank>`. Absent means the toy embedder is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<BTreeMap<String, Embedding>>,
}

/// Serves every model role from recorded bundles.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    bundles: HashMap<String, ReplayBundle>,
    toy: ToyEmbedder,
}

impl ReplayBackend {
    pub fn new(bundles: HashMap<String, ReplayBundle>) -> Self {
        Self {
            bundles,
            toy: ToyEmbedder,
        }
    }

    /// Collects the `recorded` bundles of a manifest, merging sidecar
    /// embedding files. Entries without a bundle fail only when looked up.
    pub fn from_manifest(entries: &[ManifestEntry]) -> Result<Self> {
        let mut bundles = HashMap::new();
        for entry in entries {
            let Some(mut bundle) = entry.recorded.clone() else {
                continue;
            };
            if let Some(path) = &entry.embeddings_path {
                if bundle.embeddings.is_some() {
                    return Err(Error::Fixture(format!(
                        "image {:?} has both inline embeddings and embeddings_path",
                        entry.image_id
                    )));
                }
                bundle.embeddings = Some(read_sidecar(path)?);
            }
            bundles.insert(entry.image_id.clone(), bundle);
        }
        Ok(Self::new(bundles))
    }

    pub fn bundle(&self, image_id: &str) -> Result<&ReplayBundle> {
        self.bundles
            .get(image_id)
            .ok_or_else(|| Error::Fixture(format!("no recorded bundle for image {image_id:?}")))
    }
}

impl Recognizer for ReplayBackend {
    fn recognize(&self, image: &SourceImageRef, region: Option<&CropRegion>) -> Result<String> {
        let bundle = self.bundle(&image.image_id)?;
        match region {
            None => Ok(bundle.t1.clone()),
            Some(region) => bundle.t3_by_rank.get(region.rank).cloned().ok_or_else(|| {
                Error::Fixture(format!(
                    "image {:?} has no recorded crop text for rank {} ({} recorded)",
                    image.image_id,
                    region.rank,
                    bundle.t3_by_rank.len()
                ))
            }),
        }
    }
}

impl Captioner for ReplayBackend {
    fn caption(&self, image: &SourceImageRef, _length: DescriptionLength) -> Result<Caption> {
        Ok(Caption::plain(self.bundle(&image.image_id)?.t2.clone()))
    }
}

impl Embedder for ReplayBackend {
    fn embed(&self, image_id: &str, slot: EmbedSlot, text: &NormalizedText) -> Result<Embedding> {
        let bundle = self.bundle(image_id)?;
        let Some(recorded) = &bundle.embeddings else {
            return Ok(self.toy.embed_text(text));
        };
        if slot == EmbedSlot::Free {
            return Err(Error::Fixture(format!(
                "image {image_id:?} uses recorded embeddings; no vector exists for unrecorded text {:?}",
                text.as_str()
            )));
        }
        let key = slot.key();
        recorded.get(&key).cloned().ok_or_else(|| {
            Error::Fixture(format!(
                "image {image_id:?} has no recorded embedding {key}"
            ))
        })
    }

    fn describe(&self, image_id: &str) -> String {
        match self.bundles.get(image_id) {
            Some(ReplayBundle {
                embeddings: Some(_),
                ..
            }) => "replay".into(),
            _ => "toy".into(),
        }
    }
}

impl FallbackRecognizer for ReplayBackend {
    fn fallback_recognize(&self, image: &SourceImageRef) -> Result<Vec<String>> {
        let bundle = self.bundle(&image.image_id)?;
        bundle.fallback_text.clone().map(|t| vec![t]).ok_or_else(|| {
            Error::Fixture(format!(
                "image {:?} was routed to fallback but its fixture is incomplete: record fallback_text",
                image.image_id
            ))
        })
    }
}
