//! JSON-over-HTTP likelihood scorer.
//!
//! Request body: `{"document": .., "prefix_tokens": [..], "candidate_token": ..}`.
//! Response body: `{"probability": ..}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{check_probability, LikelihoodScorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub document: String,
    pub prefix_tokens: Vec<String>,
    pub candidate_token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteScorerConfig {
    pub id: String,
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

pub struct RemoteScorer {
    config: RemoteScorerConfig,
    agent: Agent,
}

impl RemoteScorer {
    pub fn new(config: RemoteScorerConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        RemoteScorer { config, agent }
    }

    fn call(&self, req: &ScoreRequest) -> std::result::Result<f64, String> {
        let mut resp = self
            .agent
            .post(&self.config.url)
            .send_json(req)
            .map_err(|e| e.to_string())?;
        let body: ScoreResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(body.probability)
    }
}

impl LikelihoodScorer for RemoteScorer {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn first_token_likelihood(
        &self,
        document: &str,
        prefix: &[String],
        candidate_token: &str,
    ) -> Result<f64> {
        let req = ScoreRequest {
            document: document.to_string(),
            prefix_tokens: prefix.to_vec(),
            candidate_token: candidate_token.to_string(),
        };
        let mut last_err = String::new();
        for attempt in 0..=self.config.retries {
            match self.call(&req) {
                Ok(p) => return check_probability(p),
                Err(e) => {
                    log::warn!("remote scorer attempt {} failed: {e}", attempt + 1);
                    last_err = e;
                }
            }
        }
        Err(Error::Remote(last_err))
    }
}
