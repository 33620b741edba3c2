use std::fmt;
use std::process::ExitCode;

/// Failure category; each maps to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    MissingFile,
    Config,
    Shape,
    Other,
}

impl Category {
    pub fn code(self) -> u8 {
        match self {
            Category::MissingFile => 2,
            Category::Config => 3,
            Category::Shape => 4,
            Category::Other => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::MissingFile => "missing-file",
            Category::Config => "config",
            Category::Shape => "shape",
            Category::Other => "runtime",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { category: Category::Config, message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.category.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // one line, so the category can be parsed from stderr
        let msg = self.message.replace('\n', " ");
        write!(f, "error[{}]: {}", self.category.label(), msg.trim())
    }
}

impl From<nlswag::Error> for CliError {
    fn from(e: nlswag::Error) -> Self {
        use nlswag::Error as E;
        let category = match &e {
            E::MissingFile(_) => Category::MissingFile,
            E::InvalidParameter { .. } | E::Calibration(_) => Category::Config,
            E::ShapeMismatch { .. } => Category::Shape,
            _ => Category::Other,
        };
        Self { category, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self { category: Category::Other, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
