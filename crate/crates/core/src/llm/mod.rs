//! Prompt construction, chat backends, response parsing, and fine-tune export.

mod backend;
mod batch;
mod finetune;
mod parse;

pub use backend::{
    BackendConfig, BackendError, BackendKind, ChatBackend, ChatMessage, ChatRequest, MockBackend,
    RemoteBackend,
};
pub use batch::{annotate_batch, BatchError, BatchOutcome, BatchPolicy, QuarantineEntry};
pub use finetune::{
    export_finetune, finetune_lines, validate_finetune_line, FinetuneError, FINETUNE_SCHEMA,
};
pub use parse::{
    extract_json_object, parse_filter_response, parse_response, parse_values_response,
    serialize_values, FilterReport, ParseError, Parsed, ParsedRatings,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{render_context, Post};

pub const COMPREHENSIBILITY_TEMPLATE: &str = include_str!("../../templates/comprehensibility.txt");
pub const NSFW_TEMPLATE: &str = include_str!("../../templates/nsfw.txt");
/// The value-rating prompt. It has no post slot of its own; the post is
/// appended in the same fenced block the filter prompts use.
pub const VALUES_TEMPLATE: &str = include_str!("../../templates/values.txt");

const POST_SLOT: &str = "{post}";
const VALUES_POST_BLOCK: &str = "\nSocial Media Post -- \n\n###\n{post}\n###\n";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown template `{0}` (expected comprehensibility, nsfw or values)")]
pub struct UnknownTemplate(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    Comprehensibility,
    Nsfw,
    Values,
}

impl Template {
    pub const ALL: [Template; 3] = [
        Template::Comprehensibility,
        Template::Nsfw,
        Template::Values,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Template::Comprehensibility => "comprehensibility",
            Template::Nsfw => "nsfw",
            Template::Values => "values",
        }
    }

    /// Verbatim template text as shipped.
    pub fn source(self) -> &'static str {
        match self {
            Template::Comprehensibility => COMPREHENSIBILITY_TEMPLATE,
            Template::Nsfw => NSFW_TEMPLATE,
            Template::Values => VALUES_TEMPLATE,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Template {
    type Err = UnknownTemplate;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.id() == s)
            .ok_or_else(|| UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub seed: i64,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 1.0,
            seed: 0,
        }
    }
}

/// A rendered prompt for one post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub template: Template,
    pub text: String,
    /// `render_context` output substituted into the template.
    pub post_text: String,
    pub decoding: Decoding,
}

impl PromptSpec {
    /// Messages sent to a chat backend. Filter prompts go out as a single
    /// user turn; the value prompt sends its preamble as the system turn and
    /// the rendered post as the user turn, the same layout the fine-tune
    /// export uses.
    pub fn messages(&self) -> Vec<ChatMessage> {
        match self.template {
            Template::Values => vec![
                ChatMessage::new("system", VALUES_TEMPLATE),
                ChatMessage::new("user", &self.post_text),
            ],
            _ => vec![ChatMessage::new("user", &self.text)],
        }
    }

    pub fn request(&self) -> ChatRequest {
        ChatRequest {
            template: self.template,
            post_text: self.post_text.clone(),
            messages: self.messages(),
            temperature: self.decoding.temperature,
            seed: self.decoding.seed,
        }
    }
}

pub fn build_prompt(template: Template, post: &Post) -> PromptSpec {
    build_prompt_with(template, post, Decoding::default())
}

pub fn build_prompt_with(template: Template, post: &Post, decoding: Decoding) -> PromptSpec {
    let post_text = render_context(post);
    let text = match template {
        Template::Values => {
            let mut t = VALUES_TEMPLATE.to_string();
            t.push_str(&VALUES_POST_BLOCK.replace(POST_SLOT, &post_text));
            t
        }
        _ => template.source().replacen(POST_SLOT, &post_text, 1),
    };
    PromptSpec {
        template,
        text,
        post_text,
        decoding,
    }
}
