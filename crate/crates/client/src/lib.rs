//! Thin async client for the curation service.

use reqwest::{Response, StatusCode, Url};
use serde::de::DeserializeOwned;
use snowgt_core::api::{
    ErrorBody, ExportAck, MutationAck, RejectionRequest, SelectionRequest, VideoDetail,
    VideoSummary,
};
use snowgt_core::dataset::FrameKind;

pub use snowgt_core::api;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid server URL {0:?}")]
    InvalidUrl(String),
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error body.
    #[error("{code} ({status}): {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
    },
}

impl ClientError {
    /// Machine-readable code of an API error.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: Url,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8641`.
    pub fn new(base: &str) -> Result<Self> {
        let with_scheme = if base.contains("://") {
            base.to_string()
        } else {
            format!("http://{base}")
        };
        let base =
            Url::parse(&with_scheme).map_err(|_| ClientError::InvalidUrl(base.to_string()))?;
        if !matches!(base.scheme(), "http" | "https")
            || base.host_str().is_none()
            || base.cannot_be_a_base()
        {
            return Err(ClientError::InvalidUrl(base.to_string()));
        }
        Ok(Self {
            http: reqwest::Client::new(),
            base,
        })
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        {
            let mut path = url.path_segments_mut().expect("checked in new");
            path.pop_if_empty().push("api");
            path.extend(segments);
        }
        url
    }

    pub async fn videos(&self) -> Result<Vec<VideoSummary>> {
        json(self.http.get(self.url(&["videos"])).send().await?).await
    }

    pub async fn video(&self, id: &str) -> Result<VideoDetail> {
        json(self.http.get(self.url(&["videos", id])).send().await?).await
    }

    pub async fn frame_png(
        &self,
        id: &str,
        n: usize,
        kind: FrameKind,
        params: Option<&str>,
    ) -> Result<Vec<u8>> {
        let kind = match kind {
            FrameKind::Snowy => "snowy",
            FrameKind::Candidate => "candidate",
        };
        let mut req = self
            .http
            .get(self.url(&["videos", id, "frames", &n.to_string()]))
            .query(&[("kind", kind)]);
        if let Some(p) = params {
            req = req.query(&[("params", p)]);
        }
        bytes(req.send().await?).await
    }

    pub async fn residual_png(
        &self,
        id: &str,
        n: usize,
        tau: Option<f64>,
        params: Option<&str>,
    ) -> Result<Vec<u8>> {
        let mut req = self
            .http
            .get(self.url(&["videos", id, "residual", &n.to_string()]));
        if let Some(t) = tau {
            req = req.query(&[("tau", t)]);
        }
        if let Some(p) = params {
            req = req.query(&[("params", p)]);
        }
        bytes(req.send().await?).await
    }

    pub async fn select(&self, id: &str, request: &SelectionRequest) -> Result<MutationAck> {
        let url = self.url(&["videos", id, "selection"]);
        json(self.http.post(url).json(request).send().await?).await
    }

    pub async fn reject(&self, id: &str, note: &str) -> Result<MutationAck> {
        let url = self.url(&["videos", id, "rejection"]);
        let body = RejectionRequest {
            note: note.to_string(),
        };
        json(self.http.post(url).json(&body).send().await?).await
    }

    pub async fn export(&self) -> Result<ExportAck> {
        let url = self.url(&["export"]);
        json(
            self.http
                .post(url)
                .json(&serde_json::Map::new())
                .send()
                .await?,
        )
        .await
    }
}

async fn check(res: Response) -> Result<Response> {
    let status = res.status();
    if status.is_success() {
        return Ok(res);
    }
    let text = res.text().await?;
    Err(match serde_json::from_str::<ErrorBody>(&text) {
        Ok(body) => ClientError::Api {
            status: status.as_u16(),
            code: body.code,
            message: body.error,
        },
        Err(_) => ClientError::Api {
            status: status.as_u16(),
            code: fallback_code(status).to_string(),
            message: text,
        },
    })
}

fn fallback_code(status: StatusCode) -> &'static str {
    if status.is_client_error() {
        "bad_request"
    } else {
        "internal"
    }
}

async fn json<T: DeserializeOwned>(res: Response) -> Result<T> {
    Ok(check(res).await?.json().await?)
}

async fn bytes(res: Response) -> Result<Vec<u8>> {
    Ok(check(res).await?.bytes().await?.to_vec())
}
