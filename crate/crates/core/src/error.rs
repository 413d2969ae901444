use std::fmt;

use serde::{Deserialize, Serialize};

/// A single rule violation (or warning) attached to an instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Diagnostic {
    /// Instance the finding belongs to; empty for document-level findings.
    pub instance_id: String,
    pub rule: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(instance_id: impl Into<String>, rule: &str, message: impl Into<String>) -> Self {
        Self {
            instance_id: instance_id.into(),
            rule: rule.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.instance_id.is_empty() {
            write!(f, "[{}] {}", self.rule, self.message)
        } else {
            write!(f, "{}: [{}] {}", self.instance_id, self.rule, self.message)
        }
    }
}

/// Validation outcome for a document. The document is accepted iff `errors` is empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl Diagnostics {
    pub fn error(&mut self, instance_id: impl Into<String>, rule: &str, message: impl Into<String>) {
        self.errors.push(Diagnostic::new(instance_id, rule, message));
    }

    pub fn warn(&mut self, instance_id: impl Into<String>, rule: &str, message: impl Into<String>) {
        self.warnings.push(Diagnostic::new(instance_id, rule, message));
    }

    pub fn is_accepted(&self) -> bool {
        self.errors.is_empty()
    }

    /// Sorts and deduplicates both lists so the result does not depend on
    /// the order in which instances were visited.
    pub fn normalize(&mut self) {
        self.errors.sort();
        self.errors.dedup();
        self.warnings.sort();
        self.warnings.dedup();
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The document is not well-formed (bad JSON or wrong shape).
    #[error("parse error: {0}")]
    Parse(String),

    /// The document is well-formed but breaks one or more rules.
    #[error("validation failed with {} error(s)", .0.errors.len())]
    Validation(Diagnostics),

    /// A value handed to a library function violates its precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `--check-oracle` found an instance where the solver and the exhaustive
    /// search disagree.
    #[error("assignment oracle mismatch on {instance_id}: hungarian {hungarian} vs exhaustive {exhaustive}")]
    OracleMismatch {
        instance_id: String,
        hungarian: f64,
        exhaustive: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
