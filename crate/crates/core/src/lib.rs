//! Domain types and single-rank reference kernels for distributed embedding
//! pooling simulation.
//!
//! This crate holds everything that does not involve communication: embedding
//! tables, jagged (indices/lengths) batches, the row-wise sharding planner,
//! the single-rank embedding bag used as the correctness oracle, and seeded
//! synthetic data generation.

pub mod error;
pub mod oracle;
pub mod plan;
pub mod synth;
pub mod types;

pub use error::CoreError;
pub use oracle::{oracle_embedding_bag, oracle_embedding_bag_seq};
pub use plan::{owner_of_row, plan_row_wise, ShardingPlan, ShardingStrategy};
pub use synth::{synth_batch, synth_table, LengthMode, SplitMix64};
pub use types::{EmbeddingTable, JaggedBatch, PooledOutput, PooledTable, TableBatch};
