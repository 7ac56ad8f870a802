use thiserror::Error;

/// Errors produced by type construction, planning, and the oracle kernel.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoreError {
    #[error("table {table_id}: index {index} at position {position} is out of range (num_rows = {num_rows})")]
    IndexOutOfRange {
        table_id: u32,
        position: usize,
        index: u64,
        num_rows: u64,
    },

    #[error("table {table_id}: sum of lengths ({sum_lengths}) does not match number of indices ({num_indices})")]
    LengthMismatch {
        table_id: u32,
        sum_lengths: u64,
        num_indices: usize,
    },

    #[error("table {table_id}: values buffer has {actual} elements, expected rows * dim = {expected}")]
    BadTableShape {
        table_id: u32,
        actual: usize,
        expected: usize,
    },

    #[error("table {table_id}: non-finite value at offset {offset}")]
    NonFiniteValue { table_id: u32, offset: usize },

    #[error("cannot split {num_rows} rows across {num_ranks} ranks: every rank must own at least one row")]
    TooManyRanks { num_rows: u64, num_ranks: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}
