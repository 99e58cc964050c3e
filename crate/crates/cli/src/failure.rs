use std::fmt;
use std::path::Path;

/// A failure reported as `error: <kind>: <message>` on one stderr line.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        write!(f, "error: {}: {message}", self.kind)
    }
}

impl From<markermap_core::Error> for Failure {
    fn from(e: markermap_core::Error) -> Self {
        use markermap_core::Error as E;
        // The kind already names these; keep just the detail.
        let message = match &e {
            E::InvalidArgument(m) | E::Unsupported(m) | E::Degenerate(m) => m.clone(),
            other => other.to_string(),
        };
        Self::new(e.kind(), message)
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::new("json", e.to_string())
    }
}
