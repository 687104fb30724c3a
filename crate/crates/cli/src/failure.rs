use std::fmt;

/// Why a command stopped, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad experiment file or command-line argument.
    Config(String),
    /// Anything that went wrong while executing a valid request.
    Runtime(String),
}

impl Failure {
    pub const CONFIG_CODE: u8 = 1;
    pub const RUNTIME_CODE: u8 = 2;

    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => Self::CONFIG_CODE,
            Failure::Runtime(_) => Self::RUNTIME_CODE,
        }
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(msg) => write!(f, "configuration error: {msg}"),
            Failure::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl From<xmam::Error> for Failure {
    fn from(e: xmam::Error) -> Self {
        match e {
            xmam::Error::Config(msg) | xmam::Error::Argument(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}
