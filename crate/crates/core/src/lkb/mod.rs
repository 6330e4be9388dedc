//! Personalized knowledge base: user profiles and the personalization
//! operators applied before sending and after receiving.

mod rules;

pub use rules::{normalize_coordination, personalize_extract, personalize_recover, split_sentences, Personalized};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::remote::{post_json, Endpoint, RemoteError};

#[derive(Debug, thiserror::Error)]
pub enum LkbError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("duplicate profile name \"{0}\"")]
    DuplicateName(String),
    #[error("unknown user \"{0}\"")]
    UnknownUser(String),
    #[error("prompt base line {line}: {message}")]
    Table { line: u64, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub age: u32,
    pub identity: String,
    pub gender: String,
    pub interests: Vec<String>,
    /// Lowercase descriptors that refer to this person in captions.
    pub aliases: Vec<String>,
    pub focus_keywords: Vec<String>,
}

impl Profile {
    pub fn new(
        name: &str,
        age: u32,
        identity: &str,
        gender: &str,
        interests: &[&str],
        aliases: &[&str],
        focus_keywords: &[&str],
    ) -> Result<Self, LkbError> {
        let owned = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Profile {
            name: name.to_string(),
            age,
            identity: identity.to_string(),
            gender: gender.to_string(),
            interests: owned(interests),
            aliases: owned(aliases),
            focus_keywords: owned(focus_keywords),
        }
        .validated()
    }

    /// Trims fields, lowercases aliases and rejects blank names or
    /// characters that would break the table or prompt layout.
    pub fn validated(mut self) -> Result<Self, LkbError> {
        self.name = self.name.trim().to_string();
        if self.name.is_empty() {
            return Err(LkbError::InvalidProfile("name is empty".into()));
        }
        for a in &mut self.aliases {
            *a = a.trim().to_lowercase();
        }
        self.aliases.retain(|a| !a.is_empty());
        let all = [&self.name, &self.identity, &self.gender]
            .into_iter()
            .chain(&self.interests)
            .chain(&self.aliases)
            .chain(&self.focus_keywords);
        for field in all {
            if field.contains(['\n', '\r', ';', '|']) {
                return Err(LkbError::InvalidProfile(format!(
                    "{}: field \"{field}\" contains a reserved character",
                    self.name
                )));
            }
        }
        Ok(self)
    }

    /// User id: the lowercased name.
    pub fn id(&self) -> String {
        self.name.to_lowercase()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    name: String,
    age: u32,
    identity: String,
    gender: String,
    interests: String,
    aliases: String,
    focus: String,
}

fn split_field(s: &str) -> Vec<String> {
    s.split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

/// Profiles keyed by user id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PromptBase {
    profiles: BTreeMap<String, Profile>,
}

impl PromptBase {
    pub fn from_profiles(profiles: impl IntoIterator<Item = Profile>) -> Result<Self, LkbError> {
        let mut base = PromptBase::default();
        for p in profiles {
            base.insert(p)?;
        }
        Ok(base)
    }

    pub fn insert(&mut self, p: Profile) -> Result<(), LkbError> {
        let p = p.validated()?;
        if self.profiles.contains_key(&p.id()) {
            return Err(LkbError::DuplicateName(p.name));
        }
        self.profiles.insert(p.id(), p);
        Ok(())
    }

    /// Looks a user up by id or name, case-insensitively.
    pub fn get(&self, user: &str) -> Result<&Profile, LkbError> {
        self.profiles
            .get(&user.trim().to_lowercase())
            .ok_or_else(|| LkbError::UnknownUser(user.to_string()))
    }

    pub fn profiles(&self) -> impl Iterator<Item = &Profile> {
        self.profiles.values()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// The two-person base used by the default configuration.
    pub fn example() -> Self {
        PromptBase::from_profiles([
            Profile::new(
                "Mike",
                12,
                "student",
                "male",
                &["football", "drawing"],
                &["a boy"],
                &["pose", "garden", "background"],
            )
            .expect("valid"),
            Profile::new("Jane", 11, "student", "female", &["dancing", "music"], &["a girl"], &["dance"])
                .expect("valid"),
        ])
        .expect("distinct names")
    }

    /// CSV with columns `name,age,identity,gender,interests,aliases,focus`;
    /// list columns are `;`-separated.
    pub fn from_csv(text: &str) -> Result<Self, LkbError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut base = PromptBase::default();
        for record in reader.deserialize::<Row>() {
            let row = record.map_err(|e| LkbError::Table {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            base.insert(Profile {
                name: row.name,
                age: row.age,
                identity: row.identity,
                gender: row.gender,
                interests: split_field(&row.interests),
                aliases: split_field(&row.aliases),
                focus_keywords: split_field(&row.focus),
            })?;
        }
        Ok(base)
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for p in self.profiles.values() {
            writer
                .serialize(Row {
                    name: p.name.clone(),
                    age: p.age,
                    identity: p.identity.clone(),
                    gender: p.gender.clone(),
                    interests: p.interests.join(";"),
                    aliases: p.aliases.join(";"),
                    focus: p.focus_keywords.join(";"),
                })
                .expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv of UTF-8 fields")
    }

    pub fn load(path: &Path) -> Result<Self, LkbError> {
        let text = std::fs::read_to_string(path).map_err(|source| LkbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), LkbError> {
        std::fs::write(path, self.to_csv()).map_err(|source| LkbError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Extract,
    Recover,
}

const TEXT_MARKER: &str = "\n### Text\n";

/// Instruction, profile table and the user text, in that order.
pub fn build_prompt(profile: &Profile, text: &str, direction: Direction) -> String {
    let instruction = match direction {
        Direction::Extract => {
            "Extract the semantics of the message below that matter to this user as the sender. \
             Keep only what the user intends to convey and refer to the user in the first person."
        }
        Direction::Recover => {
            "Rewrite the received semantics below for this user as the receiver. \
             Refer to the user in the first person and name the sender explicitly."
        }
    };
    let mut out = String::from("You are the knowledge base of a personalized semantic communication system.\n");
    let _ = writeln!(out, "{instruction}\n\n### Profile");
    let _ = writeln!(out, "| field | value |\n| --- | --- |");
    let rows = [
        ("name", profile.name.clone()),
        ("age", profile.age.to_string()),
        ("identity", profile.identity.clone()),
        ("gender", profile.gender.clone()),
        ("interests", profile.interests.join("; ")),
        ("aliases", profile.aliases.join("; ")),
        ("focus", profile.focus_keywords.join("; ")),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "| {k} | {v} |");
    }
    out.push_str(TEXT_MARKER);
    out.push_str(text);
    out
}

/// The user text embedded by [`build_prompt`].
pub fn prompt_user_text(prompt: &str) -> Option<&str> {
    prompt.find(TEXT_MARKER).map(|i| &prompt[i + TEXT_MARKER.len()..])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalizeRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalizeResponse {
    pub text: String,
}

/// `POST <base>/personalize`.
pub fn personalize_remote(
    text: &str,
    profile: &Profile,
    direction: Direction,
    ep: &Endpoint,
) -> Result<String, LkbError> {
    let req = PersonalizeRequest {
        prompt: build_prompt(profile, text, direction),
    };
    let resp: PersonalizeResponse = post_json(ep, "personalize", &req)?;
    Ok(resp.text)
}

/// Sender- and receiver-side personalization.
pub trait Personalizer {
    fn extract(&self, text: &str, sender: &Profile, receiver: &Profile) -> Result<Personalized, LkbError>;
    fn recover(&self, text: &str, receiver: &Profile, sender: &Profile) -> Result<Personalized, LkbError>;
}

/// The local rule set.
#[derive(Debug, Clone, Copy, Default)]
pub struct RulePersonalizer;

impl Personalizer for RulePersonalizer {
    fn extract(&self, text: &str, sender: &Profile, receiver: &Profile) -> Result<Personalized, LkbError> {
        Ok(personalize_extract(text, sender, receiver))
    }

    fn recover(&self, text: &str, receiver: &Profile, sender: &Profile) -> Result<Personalized, LkbError> {
        Ok(personalize_recover(text, receiver, &sender.name))
    }
}

/// Personalization disabled: text passes through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThrough;

impl Personalizer for PassThrough {
    fn extract(&self, text: &str, _: &Profile, _: &Profile) -> Result<Personalized, LkbError> {
        Ok(unchanged(text))
    }

    fn recover(&self, text: &str, _: &Profile, _: &Profile) -> Result<Personalized, LkbError> {
        Ok(unchanged(text))
    }
}

fn unchanged(text: &str) -> Personalized {
    Personalized {
        text: text.to_string(),
        empty: text.is_empty(),
    }
}

/// Prompts a remote language-model service.
#[derive(Debug, Clone)]
pub struct RemotePersonalizer {
    pub endpoint: Endpoint,
}

impl Personalizer for RemotePersonalizer {
    fn extract(&self, text: &str, sender: &Profile, _: &Profile) -> Result<Personalized, LkbError> {
        Ok(unchanged(&personalize_remote(text, sender, Direction::Extract, &self.endpoint)?))
    }

    fn recover(&self, text: &str, receiver: &Profile, _: &Profile) -> Result<Personalized, LkbError> {
        Ok(unchanged(&personalize_remote(text, receiver, Direction::Recover, &self.endpoint)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let base = PromptBase::example();
        let csv = base.to_csv();
        assert!(csv.starts_with("name,age,identity,gender,interests,aliases,focus\n"));
        assert!(csv.contains("Mike,12,student,male,football;drawing,a boy,pose;garden;background"));
        assert_eq!(PromptBase::from_csv(&csv).unwrap(), base);
    }

    #[test]
    fn table_errors() {
        let header = "name,age,identity,gender,interests,aliases,focus\n";
        let dup = format!("{header}Ann,3,x,f,,,\nann,4,y,f,,,\n");
        assert!(matches!(PromptBase::from_csv(&dup), Err(LkbError::DuplicateName(_))));
        let bad_age = format!("{header}Ann,old,x,f,,,\n");
        assert!(matches!(PromptBase::from_csv(&bad_age), Err(LkbError::Table { line: 2, .. })));
        let blank = format!("{header} ,3,x,f,,,\n");
        assert!(PromptBase::from_csv(&blank).is_err());
    }

    #[test]
    fn lookup_by_name_or_id() {
        let base = PromptBase::example();
        assert_eq!(base.get("MIKE").unwrap().name, "Mike");
        assert!(matches!(base.get("zed"), Err(LkbError::UnknownUser(_))));
    }

    #[test]
    fn prompt_is_stable_and_carries_fields() {
        let base = PromptBase::example();
        let mike = base.get("mike").unwrap();
        let a = build_prompt(mike, "A boy runs.", Direction::Extract);
        assert_eq!(a, build_prompt(mike, "A boy runs.", Direction::Extract));
        for field in ["| name | Mike |", "| age | 12 |", "| identity | student |", "| interests | football; drawing |", "| aliases | a boy |"] {
            assert!(a.contains(field), "{field}");
        }
        let b = build_prompt(mike, "A boy runs.", Direction::Recover);
        assert_ne!(a, b);
        assert!(a.contains("Extract the semantics") && b.contains("Rewrite the received semantics"));
        assert_eq!(prompt_user_text(&a), Some("A boy runs."));
        assert_eq!(prompt_user_text(&build_prompt(mike, "x\n### Text\ny", Direction::Recover)), Some("x\n### Text\ny"));
    }
}
