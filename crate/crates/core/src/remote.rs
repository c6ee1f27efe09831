//! HTTP client for the embedding / attribute-generation service.
//!
//! Wire format (JSON bodies over HTTP/1.1, documented in `docs/protocol.md`):
//!
//! - `GET /info` returns [`ServiceInfo`].
//! - `POST /embed` takes an [`EmbedRequest`] and returns an [`EmbedResponse`].
//! - `POST /attributes` takes an [`AttributesRequest`] and returns an [`AttributeSet`].
//!
//! Failures come back with a non-2xx status and an [`ErrorBody`].

use std::io::Cursor;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use base64::Engine as _;
use base64::engine::general_purpose::STANDARD as BASE64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::AttributeSet;
use crate::image::RgbImage;
use crate::pyramid::{EmbeddingProvider, ProviderError};

/// Norm tolerance accepted from the service before renormalizing.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service error {kind}: {message}")]
    Service {
        kind: String,
        message: String,
        raw: Option<String>,
    },
    #[error("protocol violation: {0}")]
    Protocol(String),
}

impl From<RemoteError> for ProviderError {
    fn from(e: RemoteError) -> Self {
        match e {
            RemoteError::Transport(m) => ProviderError::Unavailable(m),
            other => ProviderError::Protocol(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceInfo {
    pub model: String,
    pub dim: usize,
    /// `[width, height]` the encoder expects; patches are resized client-side.
    #[serde(default)]
    pub input_size: Option<[u32; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedKind {
    Images,
    Texts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub id: String,
    pub kind: EmbedKind,
    /// Base64 PNG images or raw strings, depending on `kind`.
    pub payload: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub id: String,
    pub vectors: Vec<Vec<f64>>,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributesRequest {
    pub target: String,
    pub n_g: usize,
    pub n_a: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

pub fn encode_png_base64(img: &RgbImage) -> Result<String, RemoteError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| RemoteError::Protocol(format!("png encode: {e}")))?;
    Ok(BASE64.encode(buf.into_inner()))
}

pub fn decode_png_base64(s: &str) -> Result<RgbImage, RemoteError> {
    let bytes = BASE64
        .decode(s)
        .map_err(|e| RemoteError::Protocol(format!("base64: {e}")))?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map(|i| i.to_rgb8())
        .map_err(|e| RemoteError::Protocol(format!("png decode: {e}")))
}

/// Blocking client; also usable directly as an [`EmbeddingProvider`].
pub struct RemoteClient {
    base: String,
    agent: ureq::Agent,
    info: ServiceInfo,
    next_id: AtomicU64,
}

impl RemoteClient {
    /// Connects and reads `/info`.
    pub fn connect(base_url: &str) -> Result<Self, RemoteError> {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(60))
            .build();
        let base = base_url.trim_end_matches('/').to_string();
        let info: ServiceInfo = read_json(agent.get(&format!("{base}/info")).call())?;
        if info.dim == 0 {
            return Err(RemoteError::Protocol("service reports dim 0".into()));
        }
        Ok(Self {
            base,
            agent,
            info,
            next_id: AtomicU64::new(0),
        })
    }

    pub fn info(&self) -> &ServiceInfo {
        &self.info
    }

    fn post<T: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &impl Serialize,
    ) -> Result<T, RemoteError> {
        let body = serde_json::to_value(body).map_err(|e| RemoteError::Protocol(e.to_string()))?;
        read_json(
            self.agent
                .post(&format!("{}{path}", self.base))
                .send_json(body),
        )
    }

    pub fn embed(&self, kind: EmbedKind, payload: Vec<String>) -> Result<Vec<Vec<f64>>, RemoteError> {
        let n = payload.len();
        let id = format!("req-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let resp: EmbedResponse = self.post(
            "/embed",
            &EmbedRequest {
                id: id.clone(),
                kind,
                payload,
            },
        )?;
        if resp.id != id {
            return Err(RemoteError::Protocol(format!(
                "response id {} does not match request {id}",
                resp.id
            )));
        }
        if resp.vectors.len() != n {
            return Err(RemoteError::Protocol(format!(
                "{} vectors for {n} inputs",
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.info.dim {
                    return Err(RemoteError::Protocol(format!(
                        "vector of dimension {} (service declares {})",
                        v.len(),
                        self.info.dim
                    )));
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(RemoteError::Protocol(format!("vector norm {norm}")));
                }
                Ok(v.into_iter().map(|x| x / norm).collect())
            })
            .collect()
    }

    /// Asks the service to generate attributes with the two attribute prompts.
    pub fn attributes(
        &self,
        target: &str,
        n_g: usize,
        n_a: usize,
    ) -> Result<AttributeSet, RemoteError> {
        let set: AttributeSet = self.post(
            "/attributes",
            &AttributesRequest {
                target: target.to_string(),
                n_g,
                n_a,
            },
        )?;
        if set.geometric.len() != n_g || set.affordance.len() != n_a {
            return Err(RemoteError::Protocol(format!(
                "asked for {n_g}+{n_a} attributes, got {}+{}",
                set.geometric.len(),
                set.affordance.len()
            )));
        }
        Ok(set)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(
    result: Result<ureq::Response, ureq::Error>,
) -> Result<T, RemoteError> {
    match result {
        Ok(resp) => resp
            .into_json()
            .map_err(|e| RemoteError::Protocol(format!("bad body: {e}"))),
        Err(ureq::Error::Status(code, resp)) => {
            let text = resp.into_string().unwrap_or_default();
            match serde_json::from_str::<ErrorBody>(&text) {
                Ok(body) => Err(RemoteError::Service {
                    kind: body.error.kind,
                    message: body.error.message,
                    raw: body.error.raw,
                }),
                Err(_) => Err(RemoteError::Service {
                    kind: format!("http {code}"),
                    message: text,
                    raw: None,
                }),
            }
        }
        Err(e) => Err(RemoteError::Transport(e.to_string())),
    }
}

impl EmbeddingProvider for RemoteClient {
    fn dim(&self) -> usize {
        self.info.dim
    }

    fn input_size(&self) -> Option<(u32, u32)> {
        self.info.input_size.map(|[w, h]| (w, h))
    }

    fn embed_images(&self, patches: &[RgbImage]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let payload = patches
            .iter()
            .map(encode_png_base64)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.embed(EmbedKind::Images, payload)?)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        Ok(self.embed(EmbedKind::Texts, texts.to_vec())?)
    }
}
