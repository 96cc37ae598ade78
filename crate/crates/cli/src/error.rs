use std::fmt;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INSUFFICIENT_DATA: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<grmc::Error> for CliError {
    fn from(e: grmc::Error) -> Self {
        use grmc::Error::*;
        let code = match &e {
            InsufficientWeeks { .. } => EXIT_INSUFFICIENT_DATA,
            SingularSubproblem { .. } | Uncompletable { .. } => EXIT_SOLVER,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}
