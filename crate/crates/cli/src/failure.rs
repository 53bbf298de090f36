//! Errors that end the process, each with its exit code.

use std::fmt;

use tsc_core::Error;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_CONFIG, message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self::new(EXIT_DATA, message)
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Validation(_) => EXIT_CONFIG,
            Error::Data(_) | Error::Parse { .. } | Error::Csv(_) | Error::Io(_) | Error::Json(_) => EXIT_DATA,
            Error::Numeric { .. } => EXIT_NUMERIC,
            _ => EXIT_FAILURE,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

/// Attaches a file path to I/O and parse errors.
pub trait PathContext<T> {
    fn at(self, path: &std::path::Path) -> Result<T, Failure>;
}

impl<T, E: Into<Failure>> PathContext<T> for Result<T, E> {
    fn at(self, path: &std::path::Path) -> Result<T, Failure> {
        self.map_err(|e| e.into().context(&path.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(Failure::from(Error::Config("x".into())).code, EXIT_CONFIG);
        assert_eq!(Failure::from(Error::Data("x".into())).code, EXIT_DATA);
        assert_eq!(Failure::from(Error::Numeric { param: "w".into() }).code, EXIT_NUMERIC);
        assert_eq!(Failure::from(Error::Shape("x".into())).code, EXIT_FAILURE);
    }
}
