//! Nickname pseudonymization: a persistent id store, an HTTP front end for it
//! and a client.

mod client;
mod server;
mod store;

use std::collections::HashMap;

use thiserror::Error;

pub use client::AnonymizerClient;
pub use server::{serve, ServerHandle};
pub use store::{AnonymizationStore, StoreError};

/// Environment variable that overrides the service bind address.
pub const BIND_ENV: &str = "ANONYMIZER_BIND";

#[derive(Debug, Error)]
pub enum AnonymizeError {
    #[error("nickname is empty")]
    EmptyNickname,
    #[error("anonymizer unavailable: {0}")]
    Unavailable(String),
    #[error("anonymizer rejected request: {0}")]
    Rejected(String),
    #[error("store write failed: {0}")]
    Storage(String),
    #[error("no id resolved for {0:?}")]
    Unresolved(String),
}

impl AnonymizeError {
    /// Short machine-readable name used in failure reasons.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::EmptyNickname => "EmptyNickname",
            Self::Unavailable(_) | Self::Unresolved(_) => "AnonymizerUnavailable",
            Self::Rejected(_) => "AnonymizerRejected",
            Self::Storage(_) => "AnonymizerStorage",
        }
    }
}

/// Anything that can turn a nickname into a stable opaque id.
pub trait Anonymizer: Send + Sync {
    fn pseudonym(&self, nickname: &str) -> Result<String, AnonymizeError>;
}

/// Ids resolved ahead of time. Unknown names are an error rather than a new
/// assignment.
impl Anonymizer for HashMap<String, String> {
    fn pseudonym(&self, nickname: &str) -> Result<String, AnonymizeError> {
        self.get(nickname)
            .cloned()
            .ok_or_else(|| AnonymizeError::Unresolved(nickname.to_string()))
    }
}

impl<T: Anonymizer + ?Sized> Anonymizer for std::sync::Arc<T> {
    fn pseudonym(&self, nickname: &str) -> Result<String, AnonymizeError> {
        (**self).pseudonym(nickname)
    }
}

/// True if `s` looks like an id issued by the store.
pub fn is_anonymized_id(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()) && (s == "0" || !s.starts_with('0'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_pattern() {
        assert!(is_anonymized_id("0"));
        assert!(is_anonymized_id("999"));
        assert!(!is_anonymized_id("007"));
        assert!(!is_anonymized_id(""));
        assert!(!is_anonymized_id("Alice"));
    }

    #[test]
    fn resolved_map_refuses_unknown() {
        let map = HashMap::from([("Alice".to_string(), "0".to_string())]);
        assert_eq!(map.pseudonym("Alice").unwrap(), "0");
        assert!(matches!(
            map.pseudonym("Bob"),
            Err(AnonymizeError::Unresolved(_))
        ));
    }
}
