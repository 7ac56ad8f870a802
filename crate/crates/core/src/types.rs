use crate::error::CoreError;

/// A dense row-major `num_rows x dim` matrix of fp32 embedding vectors for one
/// categorical feature.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub table_id: u32,
    pub num_rows: u64,
    pub dim: u32,
    pub values: Vec<f32>,
}

impl EmbeddingTable {
    /// Builds a table, checking the shape and that every value is finite.
    pub fn new(table_id: u32, num_rows: u64, dim: u32, values: Vec<f32>) -> Result<Self, CoreError> {
        assert!(num_rows >= 1 && dim >= 1, "table dimensions must be positive");
        let expected = (num_rows as usize) * (dim as usize);
        if values.len() != expected {
            return Err(CoreError::BadTableShape {
                table_id,
                actual: values.len(),
                expected,
            });
        }
        if let Some(offset) = values.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::NonFiniteValue { table_id, offset });
        }
        Ok(Self {
            table_id,
            num_rows,
            dim,
            values,
        })
    }

    /// The embedding vector stored at `row`.
    #[inline]
    pub fn row(&self, row: u64) -> &[f32] {
        let d = self.dim as usize;
        let start = row as usize * d;
        &self.values[start..start + d]
    }
}

/// Indices and lengths for one table within a jagged batch: `lengths[b]`
/// consecutive entries of `indices` make up the bag for sample `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableBatch {
    pub indices: Vec<u64>,
    pub lengths: Vec<u32>,
}

impl TableBatch {
    /// Half-open segment `[start, end)` of `indices` belonging to sample `b`,
    /// derived from the prefix sums of `lengths`.
    pub fn segment(&self, b: usize) -> (usize, usize) {
        let start: u64 = self.lengths[..b].iter().map(|&l| u64::from(l)).sum();
        let end = start + u64::from(self.lengths[b]);
        (start as usize, end as usize)
    }
}

/// A per-table jagged batch of lookups for `batch_size` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct JaggedBatch {
    pub batch_size: usize,
    pub tables: Vec<TableBatch>,
}

impl JaggedBatch {
    /// Validates the batch against a set of tables: every `lengths` array has
    /// exactly `batch_size` entries, lengths sum to the index count, and every
    /// index addresses a valid row. Zero lengths (empty bags) are allowed.
    pub fn validate(&self, tables: &[EmbeddingTable]) -> Result<(), CoreError> {
        assert_eq!(self.tables.len(), tables.len(), "batch/table count mismatch");
        for (tb, table) in self.tables.iter().zip(tables) {
            assert_eq!(
                tb.lengths.len(),
                self.batch_size,
                "table {}: lengths array must have one entry per sample",
                table.table_id
            );
            let sum_lengths: u64 = tb.lengths.iter().map(|&l| u64::from(l)).sum();
            if sum_lengths != tb.indices.len() as u64 {
                return Err(CoreError::LengthMismatch {
                    table_id: table.table_id,
                    sum_lengths,
                    num_indices: tb.indices.len(),
                });
            }
            for (position, &index) in tb.indices.iter().enumerate() {
                if index >= table.num_rows {
                    return Err(CoreError::IndexOutOfRange {
                        table_id: table.table_id,
                        position,
                        index,
                        num_rows: table.num_rows,
                    });
                }
            }
        }
        Ok(())
    }

    /// Total number of row lookups across all tables.
    pub fn total_lookups(&self) -> u64 {
        self.tables.iter().map(|t| t.indices.len() as u64).sum()
    }
}

/// Pooled output for one table: a dense `batch_size x dim` fp32 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledTable {
    pub batch_size: usize,
    pub dim: u32,
    pub data: Vec<f32>,
}

impl PooledTable {
    pub fn zeros(batch_size: usize, dim: u32) -> Self {
        Self {
            batch_size,
            dim,
            data: vec![0.0; batch_size * dim as usize],
        }
    }

    #[inline]
    pub fn row(&self, b: usize) -> &[f32] {
        let d = self.dim as usize;
        &self.data[b * d..(b + 1) * d]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize) -> &mut [f32] {
        let d = self.dim as usize;
        &mut self.data[b * d..(b + 1) * d]
    }
}

/// Pooled outputs for every table of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledOutput {
    pub tables: Vec<PooledTable>,
}

impl PooledOutput {
    /// Largest relative per-element difference against another output.
    /// Denominator is `max(|a|, |b|, 1)` so zeros compare exactly.
    pub fn max_rel_error(&self, other: &PooledOutput) -> f64 {
        assert_eq!(self.tables.len(), other.tables.len());
        let mut worst = 0.0f64;
        for (a, b) in self.tables.iter().zip(&other.tables) {
            assert_eq!(a.data.len(), b.data.len());
            for (&x, &y) in a.data.iter().zip(&b.data) {
                let denom = f64::from(x.abs()).max(f64::from(y.abs())).max(1.0);
                let err = (f64::from(x) - f64::from(y)).abs() / denom;
                if err > worst {
                    worst = err;
                }
            }
        }
        worst
    }
}
