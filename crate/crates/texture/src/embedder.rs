//! Query embedders available to the service.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use texture_core::{Embedder, EmbeddingError, HashedEmbedder};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Calls an HTTP endpoint: `POST {"text": ...}` answered by `{"embedding": [...]}`.
#[derive(Clone, Debug)]
pub struct RemoteEmbedder {
    url: String,
    token: Option<String>,
    dimension: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(url: &str, token: Option<&str>, dimension: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: url.to_string(),
            token: token.map(str::to_string),
            dimension,
            agent,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let failure = |e: ureq::Error| EmbeddingError::EmbedderFailure(format!("{}: {e}", self.url));
        let mut request = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request.send_json(EmbedRequest { text }).map_err(failure)?;
        let body: EmbedResponse = response.body_mut().read_json().map_err(failure)?;
        Ok(body.embedding)
    }
}

/// Which embedder text similarity uses.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum EmbedderConfig {
    /// Text similarity is unavailable.
    #[default]
    None,
    /// The deterministic offline [`HashedEmbedder`].
    Hashed,
    Remote {
        url: String,
        token: Option<String>,
        timeout: Duration,
    },
}

impl EmbedderConfig {
    /// An embedder matching a dataset's dimension, if one is configured.
    pub fn for_dimension(&self, dimension: usize) -> Option<Box<dyn Embedder + Send>> {
        match self {
            EmbedderConfig::None => None,
            EmbedderConfig::Hashed => Some(Box::new(HashedEmbedder::new(dimension))),
            EmbedderConfig::Remote {
                url,
                token,
                timeout,
            } => Some(Box::new(RemoteEmbedder::new(
                url,
                token.as_deref(),
                dimension,
                *timeout,
            ))),
        }
    }
}
