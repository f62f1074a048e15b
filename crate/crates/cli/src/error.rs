use std::fmt;
use std::path::Path;

use ctrp_core::Error as CoreError;
use serde::Serialize;

/// Failure class of a command. Each maps to its own exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Config,
    Io,
    Numerical,
    Ingestion,
    Shape,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Io => 3,
            Category::Numerical => 4,
            Category::Ingestion => 5,
            Category::Shape => 6,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn ingestion(message: impl Into<String>) -> Self {
        Self::new(Category::Ingestion, message)
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::new(Category::Io, format!("{}: {e}", path.display()))
    }

    pub fn context(mut self, context: impl fmt::Display) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }

    /// One-line JSON written to stderr on failure.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "category": self.category,
                "exit_code": self.category.exit_code(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let category = match e.root() {
            CoreError::Shape(_) | CoreError::UnsupportedShape(_) => Category::Shape,
            CoreError::Parameter(_) => Category::Config,
            CoreError::Empty(_) => Category::Ingestion,
            _ => Category::Numerical,
        };
        Self::new(category, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
