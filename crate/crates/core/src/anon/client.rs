use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{AnonymizeError, Anonymizer};

#[derive(Deserialize)]
struct Reply {
    id: Option<String>,
    error: Option<String>,
}

/// HTTP client for the anonymizer service.
#[derive(Debug, Clone)]
pub struct AnonymizerClient {
    agent: ureq::Agent,
    url: String,
}

impl AnonymizerClient {
    /// `addr` is `host:port` or a full `http://` base URL.
    pub fn new(addr: &str) -> Self {
        Self::with_timeout(addr, Duration::from_secs(10))
    }

    pub fn with_timeout(addr: &str, timeout: Duration) -> Self {
        let base = if addr.starts_with("http://") || addr.starts_with("https://") {
            addr.trim_end_matches('/').to_string()
        } else {
            format!("http://{addr}")
        };
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.into(),
            url: format!("{base}/anonymize"),
        }
    }
}

impl Anonymizer for AnonymizerClient {
    fn pseudonym(&self, nickname: &str) -> Result<String, AnonymizeError> {
        let body = json!({ "nickname": nickname }).to_string();
        let mut response = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| AnonymizeError::Unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| AnonymizeError::Unavailable(e.to_string()))?;
        let reply: Reply = serde_json::from_str(&text)
            .map_err(|e| AnonymizeError::Unavailable(format!("bad reply ({status}): {e}")))?;
        match (status, reply.id, reply.error) {
            (200, Some(id), _) => Ok(id),
            (400, _, _) if nickname.trim().is_empty() => Err(AnonymizeError::EmptyNickname),
            (400, _, error) => Err(AnonymizeError::Rejected(error.unwrap_or_default())),
            (_, _, error) => Err(AnonymizeError::Unavailable(format!(
                "status {status}: {}",
                error.unwrap_or_default()
            ))),
        }
    }
}
