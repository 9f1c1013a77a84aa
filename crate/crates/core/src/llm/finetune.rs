use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use super::parse::serialize_values;
use super::VALUES_TEMPLATE;
use crate::corpus::{render_context, Post};
use crate::io::{write_atomic, IoError};
use crate::value_system::ValueVector;

/// JSON schema for one exported line.
pub const FINETUNE_SCHEMA: &str = include_str!("../../schemas/finetune_record.v1.schema.json");

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("post `{0}` has no label")]
    MissingLabel(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// One chat-format record per post: system = value prompt preamble,
/// user = rendered post, assistant = the label in the prompt's output shape.
pub fn finetune_lines(
    posts: &[Post],
    labels: &BTreeMap<String, ValueVector>,
) -> Result<Vec<String>, FinetuneError> {
    if let Some(p) = posts.iter().find(|p| !labels.contains_key(&p.id)) {
        return Err(FinetuneError::MissingLabel(p.id.clone()));
    }
    Ok(posts
        .iter()
        .map(|p| {
            json!({
                "messages": [
                    {"role": "system", "content": VALUES_TEMPLATE},
                    {"role": "user", "content": render_context(p)},
                    {"role": "assistant", "content": serialize_values(&labels[&p.id])},
                ]
            })
            .to_string()
        })
        .collect())
}

/// Writes the export. Every label is checked before anything touches disk.
pub fn export_finetune(
    posts: &[Post],
    labels: &BTreeMap<String, ValueVector>,
    path: &Path,
) -> Result<usize, FinetuneError> {
    let lines = finetune_lines(posts, labels)?;
    let mut body = String::new();
    for l in &lines {
        body.push_str(l);
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())?;
    Ok(lines.len())
}

/// Checks one line against the constraints in `FINETUNE_SCHEMA`.
pub fn validate_finetune_line(line: &str) -> Result<(), String> {
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = v.as_object().ok_or("record is not an object")?;
    if obj.len() != 1 {
        return Err("record must only contain `messages`".into());
    }
    let msgs = obj
        .get("messages")
        .and_then(Value::as_array)
        .ok_or("`messages` must be an array")?;
    let roles = ["system", "user", "assistant"];
    if msgs.len() != roles.len() {
        return Err(format!("expected 3 messages, got {}", msgs.len()));
    }
    for (m, role) in msgs.iter().zip(roles) {
        let m = m.as_object().ok_or("message is not an object")?;
        if m.len() != 2 {
            return Err("message must have exactly `role` and `content`".into());
        }
        if m.get("role").and_then(Value::as_str) != Some(role) {
            return Err(format!("expected role `{role}`"));
        }
        match m.get("content").and_then(Value::as_str) {
            Some(c) if !c.is_empty() => {}
            _ => return Err(format!("`{role}` content must be a non-empty string")),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FeedSource;
    use crate::llm::parse_values_response;
    use proptest::prelude::*;

    fn post(i: usize) -> Post {
        Post::new(
            format!("p{i}"),
            format!("post {i}"),
            None,
            FeedSource::Following,
            "u",
        )
        .unwrap()
    }

    #[test]
    fn missing_label_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ft.jsonl");
        let err = export_finetune(&[post(0)], &BTreeMap::new(), &path).unwrap_err();
        assert!(matches!(err, FinetuneError::MissingLabel(id) if id == "p0"));
        assert!(!path.exists());
    }

    #[test]
    fn empty_export_is_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ft.jsonl");
        assert_eq!(export_finetune(&[], &BTreeMap::new(), &path).unwrap(), 0);
        assert_eq!(std::fs::read(&path).unwrap(), b"");
    }

    #[test]
    fn line_count_and_schema() {
        let posts: Vec<_> = (0..600).map(post).collect();
        let labels: BTreeMap<_, _> = posts
            .iter()
            .map(|p| (p.id.clone(), ValueVector::zeros()))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ft.jsonl");
        assert_eq!(export_finetune(&posts, &labels, &path).unwrap(), 600);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 600);
        for l in text.lines() {
            validate_finetune_line(l).unwrap();
        }
        assert!(validate_finetune_line(r#"{"messages": []}"#).is_err());
        let schema: Value = serde_json::from_str(FINETUNE_SCHEMA).unwrap();
        assert_eq!(schema["properties"]["messages"]["minItems"], 3);
    }

    proptest! {
        #[test]
        fn assistant_message_round_trips(labels in prop::collection::vec(prop::array::uniform19(0u8..=6), 1..8)) {
            let posts: Vec<_> = (0..labels.len()).map(post).collect();
            let map: BTreeMap<_, _> = posts
                .iter()
                .zip(&labels)
                .map(|(p, l)| (p.id.clone(), ValueVector::from_u8(l).unwrap()))
                .collect();
            for (line, p) in finetune_lines(&posts, &map).unwrap().iter().zip(&posts) {
                let v: Value = serde_json::from_str(line).unwrap();
                let content = v["messages"][2]["content"].as_str().unwrap();
                let parsed = parse_values_response(content).unwrap();
                prop_assert_eq!(parsed.values(), Some(&map[&p.id]));
            }
        }
    }
}
