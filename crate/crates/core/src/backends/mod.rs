//! Grounding and verification backends behind one interface.

pub mod llm;
pub mod parse;
pub mod prompts;
pub mod rule;

use thiserror::Error;

use crate::dynamics::SwarmState;
use crate::supervision::{
    FormationTemplate, Intent, SearchRegion, Shape, SupervisionError, TemplateSource, VerificationVerdict,
};

pub use llm::{llm_call, EndpointConfig, LlmBackend, ReplayEntry, Transport};
pub use parse::{feedback_csv, parse_feedback_json, parse_formation_csv, parse_motion_descriptor, ParseError};
pub use prompts::{OutputFormat, PromptName, PromptTemplate};
pub use rule::RuleBackend;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("endpoint failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint not configured: {0}")]
    Config(String),
    #[error("replay: {0}")]
    Replay(String),
    #[error("prompt: {0}")]
    Prompt(String),
    #[error(transparent)]
    Supervision(#[from] SupervisionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// What a backend may look at when grounding a command.
#[derive(Debug, Clone, Copy)]
pub struct GroundingContext<'a> {
    pub state: &'a SwarmState,
    pub stored: Option<&'a Intent>,
    pub default_region: Option<SearchRegion>,
    pub search_target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grounded {
    pub intent: Intent,
    pub warnings: Vec<String>,
    /// False when the text matched nothing and the intent is a fallback.
    pub recognized: bool,
}

#[derive(Debug, Clone)]
pub struct CheckRequest<'a> {
    pub cmd_text: &'a str,
    pub intent: &'a Intent,
    /// Per-group relative coordinates, `# group` separated.
    pub feedback_csv: String,
    /// Verdict of the built-in checks.
    pub deterministic: &'a VerificationVerdict,
}

pub trait SupervisorBackend: Send {
    fn name(&self) -> &'static str;

    /// True when grounding has no side effects, so it can be previewed freely.
    fn is_pure(&self) -> bool {
        false
    }

    fn ground(&mut self, text: &str, ctx: &GroundingContext<'_>) -> Result<Grounded, BackendError>;

    fn formation(&mut self, shape: Shape, count: usize, spacing: f64, height: f64) -> Result<FormationTemplate, BackendError>;

    fn check(&mut self, request: &CheckRequest<'_>) -> Result<VerificationVerdict, BackendError>;
}

/// Routes template requests through a backend.
pub struct BackendTemplates<'a>(pub &'a mut dyn SupervisorBackend);

impl TemplateSource for BackendTemplates<'_> {
    fn template(&mut self, shape: Shape, count: usize, spacing: f64, height: f64) -> Result<FormationTemplate, SupervisionError> {
        self.0.formation(shape, count, spacing, height).map_err(|e| match e {
            BackendError::Supervision(s) => s,
            other => SupervisionError::Template(other.to_string()),
        })
    }
}
