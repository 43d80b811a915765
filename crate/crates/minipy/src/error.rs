use std::fmt;

/// A compile-time error: the snippet could not be tokenized or parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    /// `SyntaxError` or `IndentationError`.
    pub kind: &'static str,
    pub message: String,
    pub line: u32,
}

impl SyntaxError {
    pub fn new(message: impl Into<String>, line: u32) -> Self {
        SyntaxError {
            kind: "SyntaxError",
            message: message.into(),
            line,
        }
    }

    pub fn indentation(message: impl Into<String>, line: u32) -> Self {
        SyntaxError {
            kind: "IndentationError",
            message: message.into(),
            line,
        }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (<cell>, line {})", self.message, self.line)
    }
}

impl std::error::Error for SyntaxError {}
