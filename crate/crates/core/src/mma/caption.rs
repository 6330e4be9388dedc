//! Caption grammar.
//!
//! ```text
//! caption   = [headline] {entity} background
//! headline  = List(descriptor) [" in " pose] "."
//! entity    = "The " noun [" has " List(feature)] [" and"] [" is wearing " List(item) [" with " List(accessory)]] "."
//! background = "The background is " text "."
//! List(x)   = x | x " and " x | x ", " ... ", " x " and " x
//! ```
//!
//! Attributes are grouped by [`classify`]; accessories follow garments with
//! "with", or take the garment slot when there are no garments. Entities
//! without attributes get no sentence.

use super::{Entity, MmaError, Modality, ScenePayload};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeClass {
    Feature,
    Garment,
    Accessory,
}

const FEATURE_HEADS: &[&str] = &[
    "hair", "eyes", "beard", "moustache", "skin", "smile", "freckles", "fur", "mane", "feathers", "tail",
];
const ACCESSORY_HEADS: &[&str] = &[
    "tie", "bow", "hat", "cap", "scarf", "necklace", "glasses", "watch", "bag", "backpack", "umbrella", "collar",
    "belt", "earrings", "bracelet", "ribbon", "crown", "gloves",
];

/// Class of an attribute, judged by its last word.
pub fn classify(attribute: &str) -> AttributeClass {
    let head = attribute.rsplit(' ').next().unwrap_or("").to_lowercase();
    if FEATURE_HEADS.contains(&head.as_str()) {
        AttributeClass::Feature
    } else if ACCESSORY_HEADS.contains(&head.as_str()) {
        AttributeClass::Accessory
    } else {
        AttributeClass::Garment
    }
}

/// Descriptor without its leading article.
pub fn noun(descriptor: &str) -> &str {
    for article in ["a ", "an ", "the "] {
        if let Some(rest) = descriptor.strip_prefix(article) {
            if !rest.is_empty() {
                return rest;
            }
        }
    }
    descriptor
}

fn join_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

fn split_list(text: &str) -> Vec<String> {
    let (head, last) = match text.rsplit_once(" and ") {
        Some((h, l)) => (h, Some(l)),
        None => (text, None),
    };
    head.split(", ").chain(last).map(str::to_string).collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn decapitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

fn entity_sentence(e: &Entity) -> Option<String> {
    if e.attributes.is_empty() {
        return None;
    }
    let pick = |class| -> Vec<&str> {
        e.attributes
            .iter()
            .filter(|a| classify(a) == class)
            .map(String::as_str)
            .collect()
    };
    let (features, garments, accessories) = (
        pick(AttributeClass::Feature),
        pick(AttributeClass::Garment),
        pick(AttributeClass::Accessory),
    );
    let mut clauses = Vec::new();
    if !features.is_empty() {
        clauses.push(format!("has {}", join_list(&features)));
    }
    if garments.is_empty() && !accessories.is_empty() {
        clauses.push(format!("is wearing {}", join_list(&accessories)));
    } else if !garments.is_empty() {
        let mut clause = format!("is wearing {}", join_list(&garments));
        if !accessories.is_empty() {
            clause.push_str(" with ");
            clause.push_str(&join_list(&accessories));
        }
        clauses.push(clause);
    }
    Some(format!("The {} {}.", noun(&e.descriptor), clauses.join(" and ")))
}

/// Renders a scene as caption text.
pub fn scene_to_text(p: &ScenePayload) -> String {
    let mut sentences = Vec::new();
    if !p.entities.is_empty() {
        let names: Vec<&str> = p.entities.iter().map(|e| e.descriptor.as_str()).collect();
        let mut headline = capitalize(&join_list(&names));
        if let Some(pose) = &p.pose {
            headline.push_str(" in ");
            headline.push_str(pose);
        }
        headline.push('.');
        sentences.push(headline);
    }
    sentences.extend(p.entities.iter().filter_map(entity_sentence));
    sentences.push(format!("The background is {}.", p.background));
    sentences.join(" ")
}

fn parse_error(sentence: &str, reason: &str) -> MmaError {
    MmaError::Parse {
        sentence: sentence.to_string(),
        reason: reason.to_string(),
    }
}

const BACKGROUND_PREFIX: &str = "The background is ";

fn is_entity_sentence(s: &str) -> bool {
    s.starts_with("The ") && !s.starts_with(BACKGROUND_PREFIX) && (s.contains(" has ") || s.contains(" is wearing "))
}

/// `(noun, attributes)` of an entity sentence (without its period).
fn parse_entity(s: &str) -> Result<(String, Vec<String>), MmaError> {
    let body = &s["The ".len()..];
    let (noun, rest, has_first) = match (body.find(" has "), body.find(" is wearing ")) {
        (Some(h), Some(w)) if h < w => (&body[..h], &body[h + 1..], true),
        (Some(h), None) => (&body[..h], &body[h + 1..], true),
        (_, Some(w)) => (&body[..w], &body[w + 1..], false),
        (None, None) => return Err(parse_error(s, "expected \"has\" or \"is wearing\"")),
    };
    if noun.is_empty() {
        return Err(parse_error(s, "missing subject"));
    }
    let mut attributes = Vec::new();
    let wearing = if has_first {
        let features = rest.strip_prefix("has ").unwrap_or(rest);
        match features.split_once(" and is wearing ") {
            Some((f, w)) => {
                attributes.extend(split_list(f));
                Some(w)
            }
            None => {
                attributes.extend(split_list(features));
                None
            }
        }
    } else {
        Some(rest.strip_prefix("is wearing ").unwrap_or(rest))
    };
    if let Some(w) = wearing {
        match w.split_once(" with ") {
            Some((g, a)) => {
                attributes.extend(split_list(g));
                attributes.extend(split_list(a));
            }
            None => attributes.extend(split_list(w)),
        }
    }
    if attributes.iter().any(|a| a.is_empty()) {
        return Err(parse_error(s, "empty attribute"));
    }
    Ok((noun.to_string(), attributes))
}

/// Parses caption text back into a canonical scene. The headline is optional;
/// without it, entities are named "the <noun>".
pub fn text_to_scene(text: &str, modality: Modality) -> Result<ScenePayload, MmaError> {
    let trimmed = text.trim();
    let body = trimmed.strip_suffix('.').unwrap_or(trimmed);
    if body.is_empty() {
        return Err(parse_error(text, "empty caption"));
    }
    let sentences: Vec<&str> = body.split(". ").collect();
    let (last, init) = sentences.split_last().expect("non-empty split");
    let background = last
        .strip_prefix(BACKGROUND_PREFIX)
        .ok_or_else(|| parse_error(last, "expected \"The background is ...\" as the final sentence"))?;

    let mut entities: Vec<Entity> = Vec::new();
    let mut pose = None;
    let mut rest = init;
    if let Some((first, tail)) = init.split_first() {
        if !is_entity_sentence(first) {
            let (list, p) = match first.split_once(" in ") {
                Some((l, p)) => (l, Some(p.to_string())),
                None => (*first, None),
            };
            pose = p;
            entities = split_list(&decapitalize(list))
                .into_iter()
                .map(|d| Entity {
                    descriptor: d,
                    attributes: Vec::new(),
                })
                .collect();
            rest = tail;
        }
    }
    let headline_given = !entities.is_empty();
    let mut cursor = 0;
    for s in rest {
        if !is_entity_sentence(s) {
            return Err(parse_error(s, "expected an entity sentence"));
        }
        let (n, attributes) = parse_entity(s)?;
        if headline_given {
            let pos = entities[cursor..]
                .iter()
                .position(|e| noun(&e.descriptor) == n)
                .ok_or_else(|| parse_error(s, "subject is not listed in the headline"))?;
            cursor += pos;
            entities[cursor].attributes = attributes;
            cursor += 1;
        } else {
            entities.push(Entity {
                descriptor: format!("the {n}"),
                attributes,
            });
        }
    }
    ScenePayload {
        modality,
        entities,
        pose,
        background: background.to_string(),
        raw_blob: None,
    }
    .canonical()
}
