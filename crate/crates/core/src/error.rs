use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("level count overflow: m={m}, L={levels} exceeds the supported range (m + L <= 64)")]
    Overflow { m: u32, levels: u32 },

    #[error("enumeration of {count} node assignments exceeds the cap of {cap}")]
    EnumerationTooLarge { count: u64, cap: u64 },

    #[error("no node size reaches {required} levels with L={levels}")]
    Infeasible { levels: u32, required: u64 },

    #[error("aging collapses the conductance window (r_on'={r_on} ohm, r_off'={r_off} ohm)")]
    AgingCollapse { r_on: f64, r_off: f64 },

    #[error("zero conductance in a series path")]
    DegeneratePath,

    #[error("quantizer window is degenerate: g_min == g_max == {0} S")]
    DegenerateWindow(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("column {0} appears in more than one differential pair")]
    OverlappingPairs(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from user configuration rather than the simulation itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
