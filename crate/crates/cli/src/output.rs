use std::fmt;

use serde::Serialize;

/// Failure of a command, carrying its exit code class.
#[derive(Debug)]
pub enum CliError {
    /// Malformed files, bad flags, violated preconditions (exit 2).
    Input(String),
    /// Numerical or solver failure (exit 3).
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Solver(m) => write!(f, "solver failure: {m}"),
        }
    }
}

impl From<ile_core::Error> for CliError {
    fn from(e: ile_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Solver(e.to_string())
        }
    }
}

pub fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

#[derive(Serialize)]
struct Header<'a, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    resolved: &'a R,
}

#[derive(Serialize)]
struct Document<'a, R: Serialize, T: Serialize> {
    header: Header<'a, R>,
    result: &'a T,
}

/// `{"header": {...}, "result": ...}` as pretty JSON with a final newline.
pub fn json_document<R: Serialize, T: Serialize>(
    command: &str,
    resolved: &R,
    result: &T,
) -> Result<String, CliError> {
    let doc = Document {
        header: Header {
            tool: "ile",
            version: ile_core::VERSION,
            command,
            resolved,
        },
        result,
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Solver(format!("serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Shortest representation that reads back to the same value.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).unwrap_or_default()
    } else {
        format!("{x}")
    }
}

pub fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Solver(format!("CSV output: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Solver(format!("CSV output: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Solver(e.to_string()))
}
