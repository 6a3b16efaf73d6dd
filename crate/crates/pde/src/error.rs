use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error("projection solve did not converge: residual {residual:e} after {iterations} iterations")]
    Poisson { residual: f64, iterations: usize },
    #[error("no density root for P={pressure}, T={temperature}: {message}")]
    Constraint { pressure: f64, temperature: f64, message: String },
    #[error("positivity lost at t={time}: {field} min {min} at node {node}")]
    Positivity { time: f64, field: &'static str, min: f64, node: usize },
    #[error("state equation derivatives unavailable at ρ={rho}, T={temperature}")]
    Derivatives { rho: f64, temperature: f64 },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
