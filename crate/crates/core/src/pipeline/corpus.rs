use std::path::Path;

use super::PipelineError;
use super::PipelineConfig;
use crate::mma::vocab::synthetic_corpus;
use crate::mma::ScenePayload;

/// One JSON scene per line; blank lines are skipped, line numbers are 1-based.
pub fn parse_corpus(text: &str) -> Result<Vec<ScenePayload>, PipelineError> {
    let mut scenes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PipelineError::Corpus { line: i + 1, message };
        let scene: ScenePayload = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        scenes.push(scene.canonical().map_err(|e| bad(e.to_string()))?);
    }
    if scenes.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    Ok(scenes)
}

pub fn load_corpus(path: &Path) -> Result<Vec<ScenePayload>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

/// The config's corpus file, or its synthetic corpus when none is set.
pub fn config_corpus(cfg: &PipelineConfig) -> Result<Vec<ScenePayload>, PipelineError> {
    match &cfg.corpus {
        Some(path) => load_corpus(path),
        None if cfg.corpus_size == 0 => Err(PipelineError::EmptyCorpus),
        None => Ok(synthetic_corpus(cfg.corpus_size, cfg.corpus_seed)),
    }
}

pub fn write_corpus(scenes: &[ScenePayload], path: &Path) -> Result<(), PipelineError> {
    let mut out = String::new();
    for s in scenes {
        out.push_str(&serde_json::to_string(s).expect("scene serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_keeps_order_and_duplicates() {
        let mut scenes = synthetic_corpus(5, 3);
        scenes.push(scenes[0].clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_corpus(&scenes, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), scenes);
    }

    #[test]
    fn line_format_and_errors() {
        let line = r#"{"modality":"image","entities":[["A boy",["a red tie","golden hair"]]],"pose":"a playful pose","background":"a garden"}"#;
        let scenes = parse_corpus(line).unwrap();
        assert_eq!(scenes[0].entities[0].descriptor, "a boy");
        assert_eq!(scenes[0].entities[0].attributes, ["a red tie", "golden hair"]);
        assert!(matches!(parse_corpus(""), Err(PipelineError::EmptyCorpus)));
        let bad = format!("{line}\n{{\"modality\":\"image\"}}\n");
        assert!(matches!(parse_corpus(&bad), Err(PipelineError::Corpus { line: 2, .. })));
        let punct = line.replace("a garden", "a garden, a lake");
        assert!(matches!(parse_corpus(&punct), Err(PipelineError::Corpus { line: 1, .. })));
    }
}
