//! Modal alignment: scenes to caption text and back.

mod caption;
pub mod vocab;

pub use caption::{classify, noun, scene_to_text, text_to_scene, AttributeClass};

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::remote::{post_json, Endpoint, RemoteError};

#[derive(Debug, thiserror::Error)]
pub enum MmaError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("cannot parse sentence \"{sentence}\": {reason}")]
    Parse { sentence: String, reason: String },
    #[error("payload data is not valid {0}")]
    Payload(&'static str),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Audio,
    Video,
    Text,
}

impl Modality {
    pub const MEDIA: [Modality; 3] = [Modality::Image, Modality::Audio, Modality::Video];
}

/// A described thing in a scene; serialized as `[descriptor, [attributes]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(String, Vec<String>)", into = "(String, Vec<String>)")]
pub struct Entity {
    pub descriptor: String,
    pub attributes: Vec<String>,
}

impl Entity {
    pub fn new<S: Into<String>>(descriptor: &str, attributes: impl IntoIterator<Item = S>) -> Self {
        Entity {
            descriptor: descriptor.to_string(),
            attributes: attributes.into_iter().map(Into::into).collect(),
        }
    }
}

impl From<(String, Vec<String>)> for Entity {
    fn from((descriptor, attributes): (String, Vec<String>)) -> Self {
        Entity { descriptor, attributes }
    }
}

impl From<Entity> for (String, Vec<String>) {
    fn from(e: Entity) -> Self {
        (e.descriptor, e.attributes)
    }
}

mod blob {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(b) => s.serialize_some(&base64::engine::general_purpose::STANDARD.encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| {
                base64::engine::general_purpose::STANDARD
                    .decode(s)
                    .map_err(serde::de::Error::custom)
            })
            .transpose()
    }
}

/// A multimodal message described as entities in a setting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenePayload {
    pub modality: Modality,
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<String>,
    pub background: String,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "blob")]
    pub raw_blob: Option<Vec<u8>>,
}

const RESERVED: &[&str] = &["and", "has", "with", "is", "wearing", "in"];

fn check_phrase(what: &str, s: &str, reserved: &[&str]) -> Result<(), MmaError> {
    let bad = |why: &str| Err(MmaError::InvalidScene(format!("{what} \"{s}\" {why}")));
    if s.is_empty() {
        return bad("is empty");
    }
    if s.contains(['.', ',', '\n', '\r']) {
        return bad("contains sentence punctuation");
    }
    if s.split_whitespace().collect::<Vec<_>>().join(" ") != s {
        return bad("has irregular spacing");
    }
    if let Some(w) = s.split(' ').find(|w| reserved.contains(&w.to_lowercase().as_str())) {
        return bad(&format!("uses the reserved word \"{w}\""));
    }
    Ok(())
}

impl ScenePayload {
    /// Canonical scene: lowercase descriptors, sorted attributes, no pose
    /// without entities.
    pub fn new(
        modality: Modality,
        entities: Vec<Entity>,
        pose: Option<&str>,
        background: &str,
    ) -> Result<Self, MmaError> {
        ScenePayload {
            modality,
            entities,
            pose: pose.map(str::to_string),
            background: background.to_string(),
            raw_blob: None,
        }
        .canonical()
    }

    /// Validates against the caption grammar and normalizes.
    pub fn canonical(mut self) -> Result<Self, MmaError> {
        if self.modality == Modality::Text {
            return Err(MmaError::InvalidScene("scenes carry a media modality".into()));
        }
        let mut nouns = std::collections::BTreeSet::new();
        for e in &mut self.entities {
            e.descriptor = e.descriptor.to_lowercase();
            check_phrase("descriptor", &e.descriptor, RESERVED)?;
            let n = noun(&e.descriptor);
            if n == "background" {
                return Err(MmaError::InvalidScene("descriptor noun \"background\" is reserved".into()));
            }
            if !nouns.insert(n.to_string()) {
                return Err(MmaError::InvalidScene(format!("duplicate descriptor noun \"{n}\"")));
            }
            for a in &e.attributes {
                check_phrase("attribute", a, RESERVED)?;
            }
            e.attributes.sort();
        }
        if self.entities.is_empty() {
            self.pose = None;
        }
        if let Some(p) = &self.pose {
            check_phrase("pose", p, &[])?;
        }
        check_phrase("background", &self.background, &[])?;
        Ok(self)
    }

    pub fn is_canonical(&self) -> bool {
        self.clone().canonical().is_ok_and(|c| c == *self)
    }
}

/// Opaque bytes tagged with their modality, as exchanged with a remote
/// transform service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WirePayload {
    pub modality: Modality,
    pub data: Vec<u8>,
}

impl WirePayload {
    pub fn text(s: &str) -> Self {
        WirePayload {
            modality: Modality::Text,
            data: s.as_bytes().to_vec(),
        }
    }

    /// Raw media when present, otherwise the scene's JSON description.
    pub fn scene(p: &ScenePayload) -> Self {
        WirePayload {
            modality: p.modality,
            data: p
                .raw_blob
                .clone()
                .unwrap_or_else(|| serde_json::to_vec(p).expect("scene serializes")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformRequest {
    pub source_modality: Modality,
    pub target_modality: Modality,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformResponse {
    pub target_modality: Modality,
    pub data: String,
}

fn b64() -> base64::engine::GeneralPurpose {
    base64::engine::general_purpose::STANDARD
}

/// `POST <base>/transform`.
pub fn transform_remote(payload: &WirePayload, target: Modality, ep: &Endpoint) -> Result<WirePayload, MmaError> {
    let req = TransformRequest {
        source_modality: payload.modality,
        target_modality: target,
        data: b64().encode(&payload.data),
    };
    let resp: TransformResponse = post_json(ep, "transform", &req)?;
    let data = b64()
        .decode(resp.data)
        .map_err(|e| RemoteError::Protocol(format!("data is not base64: {e}")))?;
    Ok(WirePayload {
        modality: resp.target_modality,
        data,
    })
}

/// Converts between scenes and caption text.
pub trait Aligner {
    fn to_text(&self, scene: &ScenePayload) -> Result<String, MmaError>;
    fn to_scene(&self, text: &str, modality: Modality) -> Result<ScenePayload, MmaError>;
}

/// The deterministic caption grammar.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockAligner;

impl Aligner for MockAligner {
    fn to_text(&self, scene: &ScenePayload) -> Result<String, MmaError> {
        Ok(scene_to_text(scene))
    }

    fn to_scene(&self, text: &str, modality: Modality) -> Result<ScenePayload, MmaError> {
        text_to_scene(text, modality)
    }
}

/// Delegates both directions to a transform service.
#[derive(Debug, Clone)]
pub struct RemoteAligner {
    pub endpoint: Endpoint,
}

impl Aligner for RemoteAligner {
    fn to_text(&self, scene: &ScenePayload) -> Result<String, MmaError> {
        let out = transform_remote(&WirePayload::scene(scene), Modality::Text, &self.endpoint)?;
        String::from_utf8(out.data).map_err(|_| MmaError::Payload("UTF-8 text"))
    }

    fn to_scene(&self, text: &str, modality: Modality) -> Result<ScenePayload, MmaError> {
        let out = transform_remote(&WirePayload::text(text), modality, &self.endpoint)?;
        let scene: ScenePayload = serde_json::from_slice(&out.data).map_err(|_| MmaError::Payload("scene JSON"))?;
        scene.canonical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_form() {
        let p = ScenePayload::new(
            Modality::Image,
            vec![Entity::new("A Boy", ["red hair", "a blue coat"])],
            Some("a pose"),
            "a beach",
        )
        .unwrap();
        assert_eq!(p.entities[0].descriptor, "a boy");
        assert_eq!(p.entities[0].attributes, vec!["a blue coat", "red hair"]);
        assert!(p.is_canonical());
    }

    #[test]
    fn grammar_breaking_scenes_rejected() {
        let bad = |e: Vec<Entity>, bg: &str| ScenePayload::new(Modality::Image, e, None, bg).is_err();
        assert!(bad(vec![Entity::new("", Vec::<String>::new())], "x"));
        assert!(bad(vec![Entity::new("salt and pepper", Vec::<String>::new())], "x"));
        assert!(bad(vec![Entity::new("a cat", ["a hat, big"])], "x"));
        assert!(bad(vec![Entity::new("a cat", ["x"]), Entity::new("the cat", ["y"])], "x"));
        assert!(bad(vec![], "a garden."));
        assert!(ScenePayload::new(Modality::Text, vec![], None, "x").is_err());
    }

    #[test]
    fn corpus_json_shape() {
        let line = r#"{"modality":"image","entities":[["a boy",["golden hair"]]],"pose":"a playful pose","background":"a garden"}"#;
        let p: ScenePayload = serde_json::from_str(line).unwrap();
        assert_eq!(p.entities[0], Entity::new("a boy", ["golden hair"]));
        assert_eq!(serde_json::to_string(&p).unwrap(), line);
        let with_blob = ScenePayload {
            raw_blob: Some(vec![0, 255, 7]),
            ..p
        };
        let json = serde_json::to_string(&with_blob).unwrap();
        assert!(json.contains("\"raw_blob\":\"AP8H\""));
        assert_eq!(serde_json::from_str::<ScenePayload>(&json).unwrap(), with_blob);
    }
}
