//! In-process mock of the transform, personalize and embed services.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use base64::Engine;
use serde::Serialize;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::lkb::{prompt_user_text, PersonalizeRequest, PersonalizeResponse};
use crate::mma::{scene_to_text, text_to_scene, Modality, ScenePayload, TransformRequest, TransformResponse};
use crate::remote::{ErrorBody, PROTOCOL_HEADER, PROTOCOL_VERSION};
use crate::semeval::{embed, EmbedRequest, EmbedResponse};

/// Behaviour of `/transform`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformMode {
    /// Runs the built-in caption grammar in the requested direction.
    Codec,
    /// Always answers with this caption.
    FixedCaption(String),
    /// Answers without the `data` field.
    MissingField,
    /// Answers with this status and an error body.
    Fail(u16, String),
}

/// Behaviour of `/personalize`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PersonalizeMode {
    /// Returns the user text embedded in the prompt.
    Echo,
    Fixed(String),
    MissingField,
    Fail(u16, String),
}

/// Behaviour of `/embed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedMode {
    /// The built-in trigram embedding.
    Trigram,
    MissingField,
    Fail(u16, String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockConfig {
    pub transform: TransformMode,
    pub personalize: PersonalizeMode,
    pub embed: EmbedMode,
    /// Delay before every response.
    pub delay: Duration,
}

impl Default for MockConfig {
    /// The echo configuration: remote results equal local ones.
    fn default() -> Self {
        MockConfig {
            transform: TransformMode::Codec,
            personalize: PersonalizeMode::Echo,
            embed: EmbedMode::Trigram,
            delay: Duration::ZERO,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("cannot bind mock server to {addr}: {message}")]
pub struct BindError {
    pub addr: String,
    pub message: String,
}

/// A running mock server; stops when dropped.
pub struct MockServer {
    server: Arc<Server>,
    base: String,
    requests: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves on a
    /// background thread.
    pub fn start(addr: &str, config: MockConfig) -> Result<Self, BindError> {
        let server = Server::http(addr).map_err(|e| BindError {
            addr: addr.to_string(),
            message: e.to_string(),
        })?;
        let base = match server.server_addr().to_ip() {
            Some(ip) => format!("http://{ip}"),
            None => {
                return Err(BindError {
                    addr: addr.to_string(),
                    message: "not an IP listener".into(),
                })
            }
        };
        let server = Arc::new(server);
        let requests = Arc::new(AtomicUsize::new(0));
        let worker = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    requests.fetch_add(1, Ordering::SeqCst);
                    if !config.delay.is_zero() {
                        std::thread::sleep(config.delay);
                    }
                    handle(request, &config);
                }
            })
        };
        Ok(MockServer {
            server,
            base,
            requests,
            worker: Some(worker),
        })
    }

    /// `http://ip:port`.
    pub fn base_url(&self) -> &str {
        &self.base
    }

    /// Requests received so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks until the server is stopped from elsewhere.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

type Reply = (u16, serde_json::Value);

fn ok<T: Serialize>(body: &T) -> Reply {
    (200, serde_json::to_value(body).expect("serializable"))
}

fn fail(status: u16, error: &str, message: impl Into<String>) -> Reply {
    let body = ErrorBody {
        error: error.to_string(),
        message: message.into(),
    };
    (status, serde_json::to_value(body).expect("serializable"))
}

fn b64() -> base64::engine::GeneralPurpose {
    base64::engine::general_purpose::STANDARD
}

fn handle(mut request: Request, config: &MockConfig) {
    let reply = route(&mut request, config);
    let header = Header::from_bytes(PROTOCOL_HEADER, PROTOCOL_VERSION).expect("static header");
    let json = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let response = Response::from_string(reply.1.to_string())
        .with_status_code(reply.0)
        .with_header(header)
        .with_header(json);
    let _ = request.respond(response);
}

fn route(request: &mut Request, config: &MockConfig) -> Reply {
    if *request.method() != Method::Post {
        return fail(405, "method_not_allowed", "only POST is served");
    }
    let version = request
        .headers()
        .iter()
        .find(|h| h.field.equiv(PROTOCOL_HEADER))
        .map(|h| h.value.as_str().to_string());
    if version.as_deref() != Some(PROTOCOL_VERSION) {
        return fail(400, "protocol", format!("expected {PROTOCOL_HEADER}: {PROTOCOL_VERSION}"));
    }
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        return fail(400, "bad_request", "body is not UTF-8");
    }
    match request.url() {
        "/transform" => transform(&body, &config.transform),
        "/personalize" => personalize(&body, &config.personalize),
        "/embed" => embedding(&body, &config.embed),
        other => fail(404, "not_found", format!("no endpoint {other}")),
    }
}

fn transform(body: &str, mode: &TransformMode) -> Reply {
    let req: TransformRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return fail(400, "bad_request", e.to_string()),
    };
    let Ok(data) = b64().decode(&req.data) else {
        return fail(400, "bad_request", "data is not base64");
    };
    let out: Vec<u8> = match mode {
        TransformMode::MissingField => return (200, serde_json::json!({ "target_modality": req.target_modality })),
        TransformMode::Fail(status, message) => return fail(*status, "service_failure", message.clone()),
        TransformMode::FixedCaption(caption) => caption.as_bytes().to_vec(),
        TransformMode::Codec => match (req.source_modality, req.target_modality) {
            (Modality::Text, Modality::Text) => data,
            (Modality::Text, target) => {
                let text = String::from_utf8_lossy(&data);
                match text_to_scene(&text, target) {
                    Ok(scene) => serde_json::to_vec(&scene).expect("serializable"),
                    Err(e) => return fail(422, "unprocessable", e.to_string()),
                }
            }
            (_, Modality::Text) => match serde_json::from_slice::<ScenePayload>(&data) {
                Ok(scene) => scene_to_text(&scene).into_bytes(),
                Err(e) => return fail(422, "unprocessable", format!("media is not a scene description: {e}")),
            },
            (source, target) => return fail(422, "unsupported", format!("{source:?} to {target:?}")),
        },
    };
    ok(&TransformResponse {
        target_modality: req.target_modality,
        data: b64().encode(out),
    })
}

fn personalize(body: &str, mode: &PersonalizeMode) -> Reply {
    let req: PersonalizeRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return fail(400, "bad_request", e.to_string()),
    };
    match mode {
        PersonalizeMode::Echo => ok(&PersonalizeResponse {
            text: prompt_user_text(&req.prompt).unwrap_or(&req.prompt).to_string(),
        }),
        PersonalizeMode::Fixed(text) => ok(&PersonalizeResponse { text: text.clone() }),
        PersonalizeMode::MissingField => (200, serde_json::json!({ "reply": "no text here" })),
        PersonalizeMode::Fail(status, message) => fail(*status, "service_failure", message.clone()),
    }
}

fn embedding(body: &str, mode: &EmbedMode) -> Reply {
    let req: EmbedRequest = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return fail(400, "bad_request", e.to_string()),
    };
    match mode {
        EmbedMode::Trigram => ok(&EmbedResponse {
            vector: embed(&req.text).values,
        }),
        EmbedMode::MissingField => (200, serde_json::json!({ "dims": 1024 })),
        EmbedMode::Fail(status, message) => fail(*status, "service_failure", message.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lkb::{personalize_remote, Direction, PromptBase};
    use crate::mma::{transform_remote, Aligner, MockAligner, RemoteAligner, WirePayload};
    use crate::remote::{post_json, Endpoint, RemoteError};
    use crate::semeval::{Embedder, RemoteEmbedder, TrigramEmbedder};

    fn serve(config: MockConfig) -> (MockServer, Endpoint) {
        let server = MockServer::start("127.0.0.1:0", config).unwrap();
        let ep = Endpoint {
            base: server.base_url().to_string(),
            timeout_ms: 2_000,
            retries: 2,
        };
        (server, ep)
    }

    fn scene() -> ScenePayload {
        crate::mma::vocab::synthetic_corpus(1, 9).remove(0)
    }

    #[test]
    fn echo_configuration_matches_local_backends() {
        let (_server, ep) = serve(MockConfig::default());
        let remote = RemoteAligner { endpoint: ep.clone() };
        let text = remote.to_text(&scene()).unwrap();
        assert_eq!(text, MockAligner.to_text(&scene()).unwrap());
        assert_eq!(remote.to_scene(&text, scene().modality).unwrap(), scene());

        let base = PromptBase::example();
        let mike = base.get("mike").unwrap();
        assert_eq!(personalize_remote("A boy waves.", mike, Direction::Extract, &ep).unwrap(), "A boy waves.");

        let remote = RemoteEmbedder { endpoint: ep };
        assert_eq!(remote.embed("a garden").unwrap(), TrigramEmbedder.embed("a garden").unwrap());
    }

    #[test]
    fn fixed_caption_returned_verbatim() {
        let caption = "Exactly this caption.";
        let (_server, ep) = serve(MockConfig {
            transform: TransformMode::FixedCaption(caption.into()),
            ..MockConfig::default()
        });
        let out = transform_remote(&WirePayload::scene(&scene()), Modality::Text, &ep).unwrap();
        assert_eq!(out.data, caption.as_bytes());
        assert_eq!(out.modality, Modality::Text);
    }

    #[test]
    fn missing_fields_are_protocol_errors() {
        let (_server, ep) = serve(MockConfig {
            transform: TransformMode::MissingField,
            personalize: PersonalizeMode::MissingField,
            embed: EmbedMode::MissingField,
            delay: Duration::ZERO,
        });
        let err = transform_remote(&WirePayload::text("x"), Modality::Image, &ep).unwrap_err();
        assert!(matches!(err, crate::mma::MmaError::Remote(RemoteError::Protocol(_))), "{err}");
        let mike = PromptBase::example().get("mike").unwrap().clone();
        let err = personalize_remote("x", &mike, Direction::Recover, &ep).unwrap_err();
        assert!(matches!(err, crate::lkb::LkbError::Remote(RemoteError::Protocol(_))), "{err}");
        let err = RemoteEmbedder { endpoint: ep }.embed("x").unwrap_err();
        assert!(matches!(err, crate::semeval::SemevalError::Remote(RemoteError::Protocol(_))), "{err}");
    }

    #[test]
    fn service_failures_carry_the_message() {
        let (server, ep) = serve(MockConfig {
            transform: TransformMode::Fail(503, "model offline".into()),
            ..MockConfig::default()
        });
        let err = transform_remote(&WirePayload::text("x"), Modality::Image, &ep).unwrap_err();
        match err {
            crate::mma::MmaError::Remote(RemoteError::Remote { status, message, .. }) => {
                assert_eq!(status, 503);
                assert_eq!(message, "model offline");
            }
            other => panic!("{other}"),
        }
        // no retries on a service-side failure
        assert_eq!(server.request_count(), 1);
    }

    #[test]
    fn unreachable_endpoint_attempts_retries_plus_one() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        drop(listener);
        let ep = Endpoint {
            base: format!("http://127.0.0.1:{port}"),
            timeout_ms: 500,
            retries: 2,
        };
        let err = post_json::<_, serde_json::Value>(&ep, "embed", &EmbedRequest { text: "x".into() }).unwrap_err();
        assert!(matches!(err, RemoteError::Transport { attempts: 3, .. }), "{err}");
    }

    #[test]
    fn timeouts_retry_and_stay_bounded() {
        let (server, mut ep) = serve(MockConfig {
            delay: Duration::from_millis(400),
            ..MockConfig::default()
        });
        ep.timeout_ms = 100;
        ep.retries = 1;
        let start = std::time::Instant::now();
        let err = RemoteEmbedder { endpoint: ep }.embed("x").unwrap_err();
        assert!(matches!(err, crate::semeval::SemevalError::Remote(RemoteError::Transport { attempts: 2, .. })), "{err}");
        assert!(start.elapsed() < Duration::from_millis(2 * 100 + 150), "{:?}", start.elapsed());
        drop(server);
    }

    #[test]
    fn requests_without_version_header_rejected() {
        let (_server, ep) = serve(MockConfig::default());
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        let resp = agent.post(&ep.url("embed")).send_json(&EmbedRequest { text: "x".into() }).unwrap();
        assert_eq!(resp.status().as_u16(), 400);
        assert_eq!(resp.headers().get(PROTOCOL_HEADER).unwrap(), PROTOCOL_VERSION);
    }
}
