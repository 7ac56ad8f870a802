//! A deterministic SPMD rank group with per-rank simulated clocks and the
//! latency/bandwidth cost model that assigns durations to communication.
//!
//! Nothing here moves real bytes over a real link: ranks are logical
//! processes, collectives are rendezvous points over shared memory, and time
//! is a per-rank `f64` microsecond counter advanced by the cost model. Given
//! the same configuration and seed, a run produces identical results and
//! clocks under either scheduling strategy.

pub mod calibration;
pub mod cost;
pub mod error;
pub mod group;

pub use calibration::{
    default_cost_model, load_calibration, parse_calibration, DEFAULT_CALIBRATION_TEXT,
    PCIE_TEMPLATE_TEXT,
};
pub use cost::{rank_factor, BackendProfile, CollectiveCost, CollectiveKind, CostModel, Saturation};
pub use error::FabricError;
pub use group::{
    advance_collective, spawn_spmd, CostContext, Exchange, RankCtx, RankGroup, Scheduler, SpmdRun,
};
