use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("no records")]
    NoRecords,
    #[error("row {row}: {msg}")]
    MalformedRow { row: usize, msg: String },
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("agent {agent}: frames are not contiguous (gap after frame {frame})")]
    NonContiguous { agent: i64, frame: i64 },
    #[error("duplicate record for agent {agent} at frame {frame}")]
    Duplicate { agent: i64, frame: i64 },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("target dt {target} is not an integer multiple of {dt}")]
    NotMultiple { dt: f64, target: f64 },
    #[error("history of {have} frames is too short for {variant} (needs offsets down to t-{needed})")]
    HistoryTooShort { have: usize, needed: usize, variant: String },
    #[error("missing run for agent {agent} touches the end of the history window")]
    UnboundedGap { agent: i64 },
    #[error("degenerate pair: agents coincide")]
    DegeneratePair,
    #[error("decay factor violates spectral bound (alpha {alpha} >= 1/lambda_max {bound})")]
    SpectralBound { alpha: f64, bound: f64 },
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("infeasible density: {0}")]
    InfeasibleDensity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;
