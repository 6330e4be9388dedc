//! Blocking JSON-over-HTTP client shared by the remote backends.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Header carrying the wire-protocol version on every request and response.
pub const PROTOCOL_HEADER: &str = "X-LamMsc-Protocol";
pub const PROTOCOL_VERSION: &str = "lam-msc/1";

/// Address and retry policy of one remote service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub base: String,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Endpoint {
    pub fn new(base: impl Into<String>) -> Self {
        Endpoint {
            base: base.into(),
            timeout_ms: 5_000,
            retries: 2,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base.trim_end_matches('/'), path.trim_start_matches('/'))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RemoteError {
    #[error("endpoint timeout must be positive")]
    ZeroTimeout,
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("remote error (status {status}) {error}: {message}")]
    Remote { status: u16, error: String, message: String },
}

/// Body of a non-success response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

/// POSTs `body` to `path`, retrying transport failures up to `ep.retries`
/// times; each attempt is bounded by `ep.timeout_ms`.
pub fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    ep: &Endpoint,
    path: &str,
    body: &Req,
) -> Result<Resp, RemoteError> {
    if ep.timeout_ms == 0 {
        return Err(RemoteError::ZeroTimeout);
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(ep.timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into();
    let url = ep.url(path);
    let mut attempts = 0;
    loop {
        attempts += 1;
        let result = agent.post(&url).header(PROTOCOL_HEADER, PROTOCOL_VERSION).send_json(body);
        let mut response = match result {
            Ok(r) => r,
            Err(_) if attempts <= ep.retries => continue,
            Err(e) => {
                return Err(RemoteError::Transport {
                    attempts,
                    message: e.to_string(),
                })
            }
        };
        let status = response.status().as_u16();
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| RemoteError::Protocol(format!("unreadable response body: {e}")))?;
        if !(200..300).contains(&status) {
            let body: ErrorBody = serde_json::from_value(value)
                .map_err(|e| RemoteError::Protocol(format!("status {status} without error body: {e}")))?;
            return Err(RemoteError::Remote {
                status,
                error: body.error,
                message: body.message,
            });
        }
        return serde_json::from_value(value).map_err(|e| RemoteError::Protocol(e.to_string()));
    }
}
