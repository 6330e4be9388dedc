use std::collections::HashMap;
use std::sync::LazyLock;

use regex::{Captures, Regex};

use super::Profile;

/// Output of a personalization step; `empty` flags that nothing survived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Personalized {
    pub text: String,
    pub empty: bool,
}

impl Personalized {
    fn new(text: String) -> Self {
        let empty = text.is_empty();
        Personalized { text, empty }
    }
}

const FIRST_PERSON: &[&str] = &["me", "i", "my"];
const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "will", "would", "can", "could", "shall", "should", "may", "might", "must",
    "has", "have", "had", "do", "does", "did",
];

/// Splits at ". " boundaries; every sentence but the last regains its period.
pub fn split_sentences(text: &str) -> Vec<String> {
    let parts: Vec<&str> = text.split(". ").collect();
    let last = parts.len() - 1;
    parts
        .iter()
        .enumerate()
        .map(|(i, s)| if i < last { format!("{s}.") } else { s.to_string() })
        .collect()
}

fn word_pattern(phrases: &[String]) -> Option<Regex> {
    let mut phrases: Vec<&String> = phrases.iter().filter(|p| !p.is_empty()).collect();
    if phrases.is_empty() {
        return None;
    }
    phrases.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    phrases.dedup();
    let alternation = phrases.iter().map(|p| regex::escape(p)).collect::<Vec<_>>().join("|");
    Some(Regex::new(&format!(r"(?i)\b(?:{alternation})\b")).expect("escaped phrases form a valid pattern"))
}

fn lower_all<'a>(items: impl IntoIterator<Item = &'a String>) -> Vec<String> {
    items.into_iter().map(|s| s.to_lowercase()).collect()
}

fn capitalize_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

static COORDINATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(me|i) and ((?:(?:a|an|the) )?[\w'’]+)\b").unwrap());

/// `me and Y` / `I and Y` → `Y and me` / `Y and I`, unless Y starts a longer
/// coordination.
pub fn normalize_coordination(sentence: &str) -> String {
    COORDINATION
        .replace_all(sentence, |c: &Captures| {
            let whole = c.get(0).unwrap();
            if sentence[whole.end()..].starts_with(" and ") {
                return whole.as_str().to_string();
            }
            let fp = if c[1].eq_ignore_ascii_case("i") { "I" } else { "me" };
            format!("{} and {fp}", &c[2])
        })
        .into_owned()
}

fn finish(sentences: Vec<String>) -> String {
    sentences
        .iter()
        .map(|s| capitalize_first(&normalize_coordination(s)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Keeps sentences that mention the sender's focus or either party, then
/// rewrites sender references to "me" and receiver references to the
/// receiver's name.
pub fn personalize_extract(text: &str, sender: &Profile, receiver: &Profile) -> Personalized {
    if text.trim().is_empty() {
        return Personalized::new(String::new());
    }
    let sender_refs: Vec<String> = lower_all(sender.aliases.iter().chain([&sender.name]));
    let receiver_refs: Vec<String> = lower_all(receiver.aliases.iter().chain([&receiver.name]));
    let mut relevant = lower_all(&sender.focus_keywords);
    relevant.extend(sender_refs.iter().cloned());
    relevant.extend(receiver_refs.iter().cloned());
    relevant.extend(FIRST_PERSON.iter().map(|s| s.to_string()));
    let keep = word_pattern(&relevant).expect("first-person tokens are always present");

    let mut map: HashMap<String, String> = HashMap::new();
    for r in &receiver_refs {
        map.insert(r.clone(), receiver.name.clone());
    }
    for s in &sender_refs {
        map.insert(s.clone(), "me".to_string());
    }
    let keys: Vec<String> = map.keys().cloned().collect();
    let substitute = word_pattern(&keys);

    let kept: Vec<String> = split_sentences(text)
        .into_iter()
        .filter(|s| keep.is_match(s))
        .map(|s| match &substitute {
            Some(re) => re.replace_all(&s, |c: &Captures| map[&c[0].to_lowercase()].clone()).into_owned(),
            None => s,
        })
        .collect();
    Personalized::new(finish(kept))
}

fn is_subject_position(sentence: &str, start: usize, end: usize) -> bool {
    static LEADING_CONJUNCT: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?i)^(?:(?:a|an|the) )?[\w'’]+ and $").unwrap());
    let prefix = sentence[..start].trim_start();
    if prefix.is_empty() || LEADING_CONJUNCT.is_match(prefix) {
        return true;
    }
    let next = sentence[end..].split_whitespace().next().unwrap_or("");
    AUXILIARIES.contains(&next.to_lowercase().as_str())
}

/// Rewrites first-person tokens to the sender and receiver references to the
/// first person ("I" in subject position, "me" otherwise).
pub fn personalize_recover(text: &str, receiver: &Profile, sender_name: &str) -> Personalized {
    if text.trim().is_empty() {
        return Personalized::new(String::new());
    }
    enum Repl {
        Fixed(String),
        FirstPerson,
    }
    let mut map: HashMap<String, Repl> = HashMap::new();
    for r in lower_all(receiver.aliases.iter().chain([&receiver.name])) {
        map.insert(format!("{r}'s"), Repl::Fixed("my".into()));
        map.insert(r, Repl::FirstPerson);
    }
    map.insert("me".into(), Repl::Fixed(sender_name.to_string()));
    map.insert("i".into(), Repl::Fixed(sender_name.to_string()));
    map.insert("my".into(), Repl::Fixed(format!("{sender_name}'s")));
    let keys: Vec<String> = map.keys().cloned().collect();
    let re = word_pattern(&keys).expect("first-person tokens are always present");

    let sentences = split_sentences(text)
        .into_iter()
        .map(|s| {
            re.replace_all(&s, |c: &Captures| {
                let m = c.get(0).unwrap();
                match &map[&m.as_str().to_lowercase()] {
                    Repl::Fixed(v) => v.clone(),
                    Repl::FirstPerson if is_subject_position(&s, m.start(), m.end()) => "I".into(),
                    Repl::FirstPerson => "me".into(),
                }
            })
            .into_owned()
        })
        .collect();
    Personalized::new(finish(sentences))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mike() -> Profile {
        Profile::new("Mike", 12, "student", "male", &[], &["a boy"], &["pose", "garden"]).unwrap()
    }

    fn jane() -> Profile {
        Profile::new("Jane", 11, "student", "female", &[], &["a girl"], &[]).unwrap()
    }

    const CAPTION: &str = "A boy and a girl in a playful pose. The boy has golden hair and is wearing a brown suit with a red tie. The girl has black hair and is wearing a white dress with a black bow. The background is a garden.";

    #[test]
    fn extract_example() {
        let out = personalize_extract(CAPTION, &mike(), &jane());
        assert_eq!(out.text, "Jane and me in a playful pose. The background is a garden.");
        assert!(!out.empty);
    }

    #[test]
    fn recover_example() {
        let out = personalize_recover("Jane and I are playfully posing. The background is a garden", &jane(), "Mike");
        assert_eq!(out.text, "Mike and I are playfully posing. The background is a garden");
    }

    #[test]
    fn recover_of_extract() {
        let extracted = personalize_extract(CAPTION, &mike(), &jane());
        let out = personalize_recover(&extracted.text, &jane(), "Mike");
        assert_eq!(out.text, "Mike and I in a playful pose. The background is a garden.");
    }

    #[test]
    fn extract_drops_everything_irrelevant() {
        let out = personalize_extract("The sky is blue. Clouds drift.", &mike(), &jane());
        assert_eq!(out.text, "");
        assert!(out.empty);
        assert!(personalize_extract("", &mike(), &jane()).empty);
    }

    #[test]
    fn extract_fixed_point() {
        let once = personalize_extract(CAPTION, &mike(), &jane()).text;
        assert_eq!(personalize_extract(&once, &mike(), &jane()).text, once);
    }

    #[test]
    fn recover_leaves_unrelated_text() {
        let t = "The background is a quiet lake.";
        assert_eq!(personalize_recover(t, &jane(), "Mike").text, t);
        assert!(personalize_recover("  ", &jane(), "Mike").empty);
    }

    #[test]
    fn recover_cases_and_possessives() {
        let out = personalize_recover("Mike waves at Jane. My dog likes Jane's hat", &jane(), "Mike");
        assert_eq!(out.text, "Mike waves at me. Mike's dog likes my hat");
        let out = personalize_recover("Tom said Jane will read", &jane(), "Tom");
        assert_eq!(out.text, "Tom said I will read");
    }

    #[test]
    fn coordination_rules() {
        assert_eq!(normalize_coordination("me and Jane in a pose."), "Jane and me in a pose.");
        assert_eq!(normalize_coordination("I and the dog run"), "the dog and I run");
        assert_eq!(normalize_coordination("me and Jane and Tom"), "me and Jane and Tom");
        assert_eq!(normalize_coordination("Jane and me"), "Jane and me");
    }
}
