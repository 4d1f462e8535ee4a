//! Prompt construction, backend querying and structured-response parsing.
//!
//! The scene prompt comes in two variants: `VisionOnly` (object labels
//! only) and `VisionPlusDepth` (labels plus the rendered pairwise distances
//! and the plain-text threshold rules). Responses follow one structured
//! grammar, `Obstruction: <Yes|No>; Interaction: <Yes|No>; Message: <text>`.

mod backend;
mod parse;
mod prompt;

pub use backend::{mock_judgment, query_backend};
pub use parse::{parse_response, parse_response_lenient};
pub use prompt::build_prompt;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::ClassLabel;
use crate::rules::{JudgmentSource, RuleError, SceneJudgment};

/// Prompt ablation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptVariant {
    #[serde(rename = "vision")]
    VisionOnly,
    #[serde(rename = "vision+depth")]
    VisionPlusDepth,
}

impl PromptVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            PromptVariant::VisionOnly => "vision",
            PromptVariant::VisionPlusDepth => "vision+depth",
        }
    }

    pub fn parse(s: &str) -> Option<PromptVariant> {
        match s {
            "vision" => Some(PromptVariant::VisionOnly),
            "vision+depth" | "vision_plus_depth" => Some(PromptVariant::VisionPlusDepth),
            _ => None,
        }
    }
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A ready-to-send prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub text: String,
    /// Passed through opaquely; attached when the backend supports images.
    pub image_ref: Option<String>,
    pub labels: Vec<ClassLabel>,
    pub distances_included: bool,
}

/// Parsed backend response.
#[derive(Debug, Clone, PartialEq)]
pub struct VlmResponse {
    pub obstruction: bool,
    pub interaction: bool,
    pub message: String,
    /// The exact text the model produced; reparsing it reproduces the
    /// three fields above.
    pub raw: String,
}

impl VlmResponse {
    pub fn to_judgment(&self, source: JudgmentSource) -> SceneJudgment {
        SceneJudgment::new(self.obstruction, self.interaction, self.message.clone(), source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

impl BackendKind {
    /// The source tag carried by judgments this backend produces.
    pub fn judgment_source(&self) -> JudgmentSource {
        match self {
            BackendKind::Mock => JudgmentSource::Mock,
            BackendKind::Http => JudgmentSource::Live,
        }
    }
}

/// Backend selection and transport knobs. `epsilon`/`seed` apply to the
/// mock only; `endpoint_url`/`model_name`/timeouts to the HTTP path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// Per-label flip probability of the mock.
    pub epsilon: f64,
    pub seed: u64,
    /// Accept bare yes/no answers when the structured grammar fails.
    pub lenient_parse: bool,
}

impl Default for BackendConfig {
    fn default() -> BackendConfig {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint_url: String::new(),
            model_name: "labmate-mock".to_string(),
            timeout_ms: 10_000,
            max_retries: 2,
            epsilon: 0.0,
            seed: 0,
            lenient_parse: false,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ReasoningError> {
        if !(0.0..=1.0).contains(&self.epsilon) || !self.epsilon.is_finite() {
            return Err(ReasoningError::InvalidConfig {
                detail: format!("epsilon must lie in [0, 1], got {}", self.epsilon),
            });
        }
        if self.timeout_ms == 0 {
            return Err(ReasoningError::InvalidConfig {
                detail: "timeout_ms must be positive".to_string(),
            });
        }
        if self.kind == BackendKind::Http && self.endpoint_url.is_empty() {
            return Err(ReasoningError::InvalidConfig {
                detail: "http backend needs an endpoint_url".to_string(),
            });
        }
        Ok(())
    }

    /// Short label used in evaluation reports.
    pub fn label(&self) -> String {
        match self.kind {
            BackendKind::Mock => format!("mock(eps={:.4})", self.epsilon),
            BackendKind::Http => self.model_name.clone(),
        }
    }
}

/// Structured-grammar failure: byte offset where matching stopped plus the
/// expectation that failed there.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: {reason}")]
pub struct ParseError {
    pub offset: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error("cannot build a prompt for an empty scene")]
    EmptyScene,
    #[error("backend response did not match the expected grammar: {error} (raw: {raw:?})")]
    Parse {
        raw: String,
        #[source]
        error: ParseError,
    },
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport { detail: String, attempts: u32 },
    #[error("request timed out after {attempts} attempt(s): {detail}")]
    Timeout { detail: String, attempts: u32 },
    #[error("invalid backend config: {detail}")]
    InvalidConfig { detail: String },
    #[error(transparent)]
    Rule(#[from] RuleError),
}
