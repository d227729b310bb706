//! Crate-wide error type.
//!
//! Errors split into two classes: invalid inputs (rejected preconditions,
//! hypothesis violations, malformed configs) and runtime failures (solver
//! breakdown, IO). The CLI maps the first class to exit code 1 and the
//! second to exit code 2.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// A precondition or hypothesis of an operation is violated.
    Invalid(String),
    /// Config text rejected; `line` is 1-based.
    Config {
        line: usize,
        msg: String,
    },
    /// Requested time step exceeds the stability bound.
    Cfl {
        dt: f64,
        admissible: f64,
    },
    /// The support of the solution reached the padded box boundary.
    SupportOverflow {
        time: f64,
    },
    /// An iterative solver did not reach its tolerance within the cap.
    NonConvergence(String),
    /// Snapshot file malformed.
    Snapshot(String),
    Io(std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// CLI exit code class: 1 for validation failures, 2 for runtime/IO.
    pub fn exit_class(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Config { .. } | Error::Cfl { .. } => 1,
            Error::SupportOverflow { .. }
            | Error::NonConvergence(_)
            | Error::Snapshot(_)
            | Error::Io(_) => 2,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Invalid(msg) => write!(f, "invalid input: {msg}"),
            Error::Config { line, msg } => write!(f, "config line {line}: {msg}"),
            Error::Cfl { dt, admissible } => {
                write!(f, "CFL violation: dt = {dt:.6e} exceeds the stable bound; admissible dt = {admissible:.6e}")
            }
            Error::SupportOverflow { time } => {
                write!(f, "support reached the box boundary at t = {time:.6}")
            }
            Error::NonConvergence(msg) => write!(f, "iteration did not converge: {msg}"),
            Error::Snapshot(msg) => write!(f, "snapshot: {msg}"),
            Error::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
