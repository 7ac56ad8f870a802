use std::ops::Range;

use crate::error::CoreError;
use crate::types::EmbeddingTable;

/// How tables are split across ranks. Only `RowWise` execution is implemented;
/// the other two strategies exist so plans can describe them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShardingStrategy {
    RowWise,
    TableWise,
    ColumnWise,
}

/// Per-table, per-rank contiguous row ranges.
#[derive(Debug, Clone)]
pub struct ShardingPlan {
    pub strategy: ShardingStrategy,
    pub num_ranks: usize,
    /// `row_ranges[table][rank]` is the half-open interval of global rows owned
    /// by `rank`.
    pub row_ranges: Vec<Vec<Range<u64>>>,
}

impl ShardingPlan {
    /// Builds a row-wise plan splitting every table evenly across `num_ranks`,
    /// remainder rows going to the lowest-numbered ranks.
    pub fn row_wise(tables: &[EmbeddingTable], num_ranks: usize) -> Result<Self, CoreError> {
        let row_ranges = tables
            .iter()
            .map(|t| plan_row_wise(t.num_rows, num_ranks))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            strategy: ShardingStrategy::RowWise,
            num_ranks,
            row_ranges,
        })
    }

    /// Rank owning `row` of table `table_idx`, plus the row offset within that
    /// rank's shard.
    pub fn owner_of_row(&self, table_idx: usize, row: u64) -> Result<(usize, u64), CoreError> {
        owner_of_row(&self.row_ranges[table_idx], row)
    }

    /// Number of rows of table `table_idx` held by `rank`.
    pub fn shard_rows(&self, table_idx: usize, rank: usize) -> u64 {
        let r = &self.row_ranges[table_idx][rank];
        r.end - r.start
    }
}

/// Splits `[0, num_rows)` into `num_ranks` contiguous ranges ordered by rank.
/// Rank `r` gets `floor(num_rows / num_ranks)` rows and the first
/// `num_rows % num_ranks` ranks get one extra.
pub fn plan_row_wise(num_rows: u64, num_ranks: usize) -> Result<Vec<Range<u64>>, CoreError> {
    assert!(num_rows >= 1 && num_ranks >= 1);
    let ranks = num_ranks as u64;
    if ranks > num_rows {
        return Err(CoreError::TooManyRanks {
            num_rows,
            num_ranks,
        });
    }
    let base = num_rows / ranks;
    let extra = num_rows % ranks;
    let mut ranges = Vec::with_capacity(num_ranks);
    let mut start = 0u64;
    for r in 0..ranks {
        let len = base + u64::from(r < extra);
        ranges.push(start..start + len);
        start += len;
    }
    debug_assert_eq!(start, num_rows);
    Ok(ranges)
}

/// Resolves the owning rank and local offset of `row` in an even contiguous
/// split. Closed form rather than a scan: the first `extra` ranks hold
/// `base + 1` rows each.
pub fn owner_of_row(ranges: &[Range<u64>], row: u64) -> Result<(usize, u64), CoreError> {
    let num_rows = ranges.last().map(|r| r.end).unwrap_or(0);
    if row >= num_rows {
        return Err(CoreError::Config(format!(
            "row {row} is out of range (num_rows = {num_rows})"
        )));
    }
    let ranks = ranges.len() as u64;
    let base = num_rows / ranks;
    let extra = num_rows % ranks;
    let fat = (base + 1) * extra; // rows held by the ranks with one extra row
    let (rank, local) = if row < fat {
        (row / (base + 1), row % (base + 1))
    } else {
        (extra + (row - fat) / base, (row - fat) % base)
    };
    let rank = rank as usize;
    debug_assert!(ranges[rank].contains(&row));
    debug_assert_eq!(local, row - ranges[rank].start);
    Ok((rank, local))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_split_of_a_million_rows() {
        let ranges = plan_row_wise(1_000_000, 2).unwrap();
        assert_eq!(ranges, vec![0..500_000, 500_000..1_000_000]);
    }

    #[test]
    fn identity_split() {
        let ranges = plan_row_wise(20, 1).unwrap();
        assert_eq!(ranges, vec![0..20]);
    }

    #[test]
    fn remainder_rows_go_to_low_ranks() {
        let ranges = plan_row_wise(10, 4).unwrap();
        assert_eq!(ranges, vec![0..3, 3..6, 6..8, 8..10]);
    }

    #[test]
    fn more_ranks_than_rows_is_an_error() {
        let err = plan_row_wise(3, 4).unwrap_err();
        assert!(matches!(err, CoreError::TooManyRanks { .. }));
    }

    #[test]
    fn owner_of_row_examples() {
        let ranges = plan_row_wise(32, 2).unwrap();
        assert_eq!(owner_of_row(&ranges, 14).unwrap(), (0, 14));
        assert_eq!(owner_of_row(&ranges, 29).unwrap(), (1, 13));

        let ranges = plan_row_wise(10, 4).unwrap();
        assert_eq!(owner_of_row(&ranges, 8).unwrap(), (3, 0));
    }

    #[test]
    fn owner_of_row_out_of_range() {
        let ranges = plan_row_wise(32, 2).unwrap();
        assert!(owner_of_row(&ranges, 32).is_err());
    }
}
