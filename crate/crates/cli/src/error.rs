use serde_json::json;

/// Failures surfaced by the command line, each with a stable tag and exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] varme_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("I/O: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }

    /// 2 for bad input or configuration, 3 for numerical refusals, 4 for I/O.
    pub fn exit_code(&self) -> u8 {
        use varme_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Core(E::Io(_)) => 4,
            CliError::Core(
                E::Parse { .. } | E::InvalidArgument(_) | E::Dimension(_) | E::Index(_),
            ) => 2,
            CliError::Core(_) => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Core(varme_core::Error::Parse { row, column, .. }) = self {
            body["row"] = json!(row);
            body["column"] = json!(column);
        }
        json!({ "error": body })
    }
}
