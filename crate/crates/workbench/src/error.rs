use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Particles(#[from] ghostflow_core::Error),
    #[error(transparent)]
    Fluid(#[from] ghostflow_pde::Error),
    #[error("gate failed: {}", .0.join(", "))]
    Gate(Vec<String>),
    #[error("checksum: {0}")]
    Checksum(String),
}

impl Error {
    pub fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        Error::Io { context: context.to_string(), source }
    }

    /// 2 for configuration and file problems, 3 for numerical failures,
    /// 4 for failed gates and checksums.
    pub fn exit_code(&self) -> i32 {
        use ghostflow_core::Error as C;
        use ghostflow_pde::Error as P;
        match self {
            Error::Config(_) | Error::Io { .. } => 2,
            Error::Particles(C::Io(_) | C::Checkpoint(_)) => 2,
            Error::Fluid(P::Io(_) | P::Snapshot(_) | P::Config(_)) => 2,
            Error::Particles(_) | Error::Fluid(_) => 3,
            Error::Gate(_) | Error::Checksum(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
