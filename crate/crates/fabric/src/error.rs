use thiserror::Error;

/// Errors surfaced by the rank group, the cost model, and calibration loading.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum FabricError {
    /// Ranks disagreed about a collective: mismatched kinds, shapes, payload
    /// types, or participation. `site` is the per-rank collective call
    /// counter, which identifies the call site in an SPMD program.
    #[error("protocol error at collective site {site}: {detail}")]
    Protocol { site: u64, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("calibration error: {0}")]
    Calibration(String),
}
