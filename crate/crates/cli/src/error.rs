use std::fmt;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or an empty grid.
    Usage(String),
    /// Malformed or inconsistent configuration.
    Config(String),
    /// The solver broke down.
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Numerical(m) | CliError::Io(m) => {
                m
            }
        }
    }

    /// Single stderr line: `error kind=<kind> exit=<code> message=<json string>`.
    pub fn line(&self) -> String {
        format!(
            "error kind={} exit={} message={}",
            self.kind(),
            self.exit_code(),
            serde_json::to_string(self.message()).expect("string serialises")
        )
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<nvcav::Error> for CliError {
    fn from(e: nvcav::Error) -> Self {
        match e {
            nvcav::Error::Io(io) => CliError::Io(io.to_string()),
            e if e.is_config_error() => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
