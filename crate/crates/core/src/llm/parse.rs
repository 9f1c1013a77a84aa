use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::Template;
use crate::corpus::FilterVerdict;
use crate::value_system::{LikertRating, ValueId, ValueVector, LIKERT_MAX};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJson,
    #[error("response JSON is malformed: {0}")]
    Json(String),
    #[error("response is missing key `{0}`")]
    MissingKey(String),
    #[error("rating for `{key}` is not an integer: {found}")]
    NotInteger { key: String, found: String },
    #[error("rating {value} for `{key}` is outside [0, {max}]")]
    OutOfRange { key: String, value: i64, max: u8 },
}

/// Per-concept and final ratings from a filter prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub final_rating: u8,
    pub final_why: String,
    /// concept -> (rating, why)
    pub concepts: BTreeMap<String, (u8, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parsed {
    Values(ValueVector),
    Filter(FilterReport),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRatings {
    pub template: Template,
    pub parsed: Parsed,
    pub raw: String,
}

impl ParsedRatings {
    pub fn values(&self) -> Option<&ValueVector> {
        match &self.parsed {
            Parsed::Values(v) => Some(v),
            Parsed::Filter(_) => None,
        }
    }

    pub fn filter(&self) -> Option<&FilterReport> {
        match &self.parsed {
            Parsed::Filter(f) => Some(f),
            Parsed::Values(_) => None,
        }
    }
}

/// Returns the first balanced `{...}` span, honoring JSON string escapes.
pub fn extract_json_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in raw[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn first_object(raw: &str) -> Result<Map<String, Value>, ParseError> {
    let span = extract_json_object(raw).ok_or(ParseError::NoJson)?;
    match serde_json::from_str::<Value>(span) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ParseError::NoJson),
        Err(e) => Err(ParseError::Json(e.to_string())),
    }
}

fn rating(key: &str, v: &Value, max: u8) -> Result<u8, ParseError> {
    let n = v.as_i64().ok_or_else(|| ParseError::NotInteger {
        key: key.to_string(),
        found: v.to_string(),
    })?;
    if !(0..=max as i64).contains(&n) {
        return Err(ParseError::OutOfRange {
            key: key.to_string(),
            value: n,
            max,
        });
    }
    Ok(n as u8)
}

/// Parses `{"Rating": {"FACE_SCHWARTZ": 3, ...}}` into a full vector.
/// A bare concept map without the `Rating` wrapper is also accepted.
pub fn parse_values_response(raw: &str) -> Result<ParsedRatings, ParseError> {
    let obj = first_object(raw)?;
    let ratings = match obj.get("Rating") {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(ParseError::Json("`Rating` is not an object".into())),
        None => &obj,
    };
    let mut out = ValueVector::zeros();
    for v in ValueId::ALL {
        let key = v.prompt_key();
        let value = ratings
            .get(key)
            .ok_or_else(|| ParseError::MissingKey(key.to_string()))?;
        let r = rating(key, value, LIKERT_MAX)?;
        out.set(v, LikertRating::new(r).expect("range checked"));
    }
    Ok(ParsedRatings {
        template: Template::Values,
        parsed: Parsed::Values(out),
        raw: raw.to_string(),
    })
}

/// Parses the codebook/final-rating JSON the filter prompts request.
pub fn parse_filter_response(template: Template, raw: &str) -> Result<ParsedRatings, ParseError> {
    let obj = first_object(raw)?;
    let fin = obj
        .get("Final Rating")
        .ok_or_else(|| ParseError::MissingKey("Final Rating".into()))?;
    let final_rating = rating(
        "Final Rating",
        fin.get("Rating")
            .ok_or_else(|| ParseError::MissingKey("Final Rating.Rating".into()))?,
        3,
    )?;
    let why = |v: &Value| {
        v.get("Why")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string()
    };
    let mut concepts = BTreeMap::new();
    if let Some(Value::Object(app)) = obj.get("Codebook Application") {
        for (name, entry) in app {
            let r = entry
                .get("Rating")
                .ok_or_else(|| ParseError::MissingKey(format!("{name}.Rating")))?;
            concepts.insert(name.clone(), (rating(name, r, 3)?, why(entry)));
        }
    }
    Ok(ParsedRatings {
        template,
        parsed: Parsed::Filter(FilterReport {
            final_rating,
            final_why: why(fin),
            concepts,
        }),
        raw: raw.to_string(),
    })
}

pub fn parse_response(template: Template, raw: &str) -> Result<ParsedRatings, ParseError> {
    match template {
        Template::Values => parse_values_response(raw),
        t => parse_filter_response(t, raw),
    }
}

/// Serializes a vector in the value prompt's output shape, keys in
/// canonical order.
pub fn serialize_values(v: &ValueVector) -> String {
    let body: Vec<String> = v
        .iter()
        .map(|(id, r)| format!("\"{}\": {}", id.prompt_key(), r))
        .collect();
    format!("{{\"Rating\": {{{}}}}}", body.join(", "))
}

impl FilterVerdict {
    /// Merges separately parsed comprehensibility and NSFW reports.
    pub fn from_reports(
        comprehensibility: Option<&FilterReport>,
        nsfw: Option<&FilterReport>,
    ) -> Self {
        let mut rationales = BTreeMap::new();
        for (prefix, rep) in [("comprehensibility", comprehensibility), ("nsfw", nsfw)] {
            if let Some(rep) = rep {
                rationales.insert(format!("{prefix}/Final Rating"), rep.final_why.clone());
                for (concept, (_, why)) in &rep.concepts {
                    rationales.insert(format!("{prefix}/{concept}"), why.clone());
                }
            }
        }
        FilterVerdict {
            comprehensibility: comprehensibility.map(|r| r.final_rating),
            nsfw: nsfw.map(|r| r.final_rating),
            rationales,
        }
    }
}
