use std::fmt;

/// Failure class; each maps to a fixed process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Parse,
    Exec,
    Template,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Parse => 4,
            Kind::Exec => 5,
            Kind::Template => 6,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// `err.context(Kind::Data, "ingest foo")` style conversion for any displayable error.
pub trait Context<T> {
    fn context(self, kind: Kind, what: &str) -> CliResult<T>;
}

impl<T, E: fmt::Display> Context<T> for Result<T, E> {
    fn context(self, kind: Kind, what: &str) -> CliResult<T> {
        self.map_err(|e| CliError {
            kind,
            message: if what.is_empty() { e.to_string() } else { format!("{what}: {e}") },
        })
    }
}

pub fn fail<T>(kind: Kind, message: impl Into<String>) -> CliResult<T> {
    Err(CliError {
        kind,
        message: message.into(),
    })
}
