use std::sync::OnceLock;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexsem::{Embedding, NormalizedText};
use crate::localizer::BBox;
use crate::maskio::SourceImageRef;

use super::{
    Caption, Captioner, CropRegion, DescriptionLength, EmbedSlot, Embedder, FallbackRecognizer,
    Recognizer,
};

pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterEndpoint {
    pub base_url: String,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub description_length: DescriptionLength,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl AdapterEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            description_length: DescriptionLength::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerInfo {
    pub dim: usize,
    pub model_name: String,
}

#[derive(Serialize)]
struct RecognizeRequest<'a> {
    image_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bbox: Option<BBox>,
}

#[derive(Serialize)]
struct CaptionRequest<'a> {
    image_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_b64: Option<String>,
    max_length: u32,
    min_length: u32,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Serialize)]
struct FallbackRequest<'a> {
    image_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_b64: Option<String>,
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

#[derive(Deserialize)]
struct VectorResponse {
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct TextsResponse {
    texts: Vec<String>,
}

/// HTTP client for a model server implementing `/recognize`, `/caption`,
/// `/embed`, `/fallback` and `/info`.
pub struct RemoteBackend {
    endpoint: AdapterEndpoint,
    agent: ureq::Agent,
    info: OnceLock<ServerInfo>,
}

impl RemoteBackend {
    pub fn new(endpoint: AdapterEndpoint) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
            .build();
        Self {
            endpoint,
            agent: config.into(),
            info: OnceLock::new(),
        }
    }

    pub fn endpoint(&self) -> &AdapterEndpoint {
        &self.endpoint
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{route}", self.endpoint.base_url.trim_end_matches('/'))
    }

    fn transport(&self, route: &str, e: impl std::fmt::Display) -> Error {
        Error::Transport(format!("{}: {e}", self.url(route)))
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R> {
        self.agent
            .post(&self.url(route))
            .send_json(body)
            .map_err(|e| self.transport(route, e))?
            .body_mut()
            .read_json()
            .map_err(|e| self.transport(route, e))
    }

    /// Embedding dimension and model name, fetched once.
    pub fn info(&self) -> Result<&ServerInfo> {
        if let Some(info) = self.info.get() {
            return Ok(info);
        }
        let info: ServerInfo = self
            .agent
            .get(&self.url("info"))
            .call()
            .map_err(|e| self.transport("info", e))?
            .body_mut()
            .read_json()
            .map_err(|e| self.transport("info", e))?;
        if info.dim == 0 {
            return Err(self.transport("info", "server reports embedding dimension 0"));
        }
        Ok(self.info.get_or_init(|| info))
    }

    fn image_payload(image: &SourceImageRef) -> Result<Option<String>> {
        image
            .path
            .as_ref()
            .map(|p| {
                std::fs::read(p)
                    .map(|bytes| BASE64.encode(bytes))
                    .map_err(|e| Error::io(p, e))
            })
            .transpose()
    }
}

impl Recognizer for RemoteBackend {
    fn recognize(&self, image: &SourceImageRef, region: Option<&CropRegion>) -> Result<String> {
        let req = RecognizeRequest {
            image_id: &image.image_id,
            image_b64: Self::image_payload(image)?,
            bbox: region.map(|r| r.bbox),
        };
        Ok(self.post::<_, TextResponse>("recognize", &req)?.text)
    }
}

impl Captioner for RemoteBackend {
    fn caption(&self, image: &SourceImageRef, length: DescriptionLength) -> Result<Caption> {
        let (max_length, min_length) = length.bounds();
        let req = CaptionRequest {
            image_id: &image.image_id,
            image_b64: Self::image_payload(image)?,
            max_length,
            min_length,
        };
        let text = self.post::<_, TextResponse>("caption", &req)?.text;
        let tokens = text.split_whitespace().count() as u32;
        let warning = (!(min_length..=max_length).contains(&tokens))
            .then(|| format!("caption has {tokens} tokens, outside [{min_length}, {max_length}]"));
        Ok(Caption { text, warning })
    }
}

impl Embedder for RemoteBackend {
    fn embed(&self, _image_id: &str, _slot: EmbedSlot, text: &NormalizedText) -> Result<Embedding> {
        let dim = self.info()?.dim;
        let vector = self
            .post::<_, VectorResponse>(
                "embed",
                &EmbedRequest {
                    text: text.as_str(),
                },
            )?
            .vector;
        if vector.len() != dim {
            return Err(self.transport(
                "embed",
                format!("vector has dimension {}, /info reports {dim}", vector.len()),
            ));
        }
        Embedding::new(vector).map_err(|e| self.transport("embed", e))
    }

    fn describe(&self, _image_id: &str) -> String {
        match self.info() {
            Ok(info) => format!("remote:{}", info.model_name),
            Err(_) => "remote".into(),
        }
    }
}

impl FallbackRecognizer for RemoteBackend {
    fn fallback_recognize(&self, image: &SourceImageRef) -> Result<Vec<String>> {
        let req = FallbackRequest {
            image_id: &image.image_id,
            image_b64: Self::image_payload(image)?,
        };
        Ok(self.post::<_, TextsResponse>("fallback", &req)?.texts)
    }
}
