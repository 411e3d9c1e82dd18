use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] hypoloop_core::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{flagged} of {total} paths left the finite range (more than 1%)")]
    Overflow { flagged: usize, total: usize },

    #[error(
        "acceptance rate {rate:.3e} at radius {radius} is below 1e-4; \
         increase the radius (try {suggested_radius:.3}) or run at least {suggested_paths} paths"
    )]
    RadiusTooSmall {
        rate: f64,
        radius: f64,
        suggested_radius: f64,
        suggested_paths: usize,
    },

    #[error("only {accepted} loops accepted, {required} required; raise the path budget to about {suggested_paths}")]
    TooFewAccepted {
        accepted: usize,
        required: usize,
        suggested_paths: usize,
    },

    #[error("density estimate unusable (no samples in the ball) at eps = {0:?}")]
    UnusableDensity(Vec<f64>),

    #[error("effective sample size {0:.1} is below 100")]
    LowEffectiveSampleSize(f64),

    #[error("{path}:{line}:{column}: {message}")]
    ModelFile {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("check {check} failed: {detail}")]
    CheckFailed { check: String, detail: String },

    #[error("malformed ensemble data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
