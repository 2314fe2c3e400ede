use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Error => "error",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A non-fatal finding about one track (or one input file).
///
/// Serialized as a single line: `<severity> <track_id> <message>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub track_id: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(
        severity: Severity,
        track_id: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Self {
            severity,
            track_id: track_id.into(),
            message: message.into(),
        }
    }

    pub fn warning(track_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Severity::Warning, track_id, message)
    }

    pub fn error(track_id: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(Severity::Error, track_id, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = if self.track_id.is_empty() {
            "-"
        } else {
            &self.track_id
        };
        write!(f, "{} {} {}", self.severity, id, self.message)
    }
}

/// Renders diagnostics one per line, each terminated by `\n`.
pub fn render(diagnostics: &[Diagnostic]) -> String {
    diagnostics.iter().map(|d| format!("{d}\n")).collect()
}
