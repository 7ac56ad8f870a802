//! Single-rank reference embedding bag.
//!
//! The distributed forward pass is validated against this kernel, so its
//! semantics are pinned: output row `b` is the element-wise fp32 sum, in
//! index-array order, of the rows selected by the `b`-th segment of the
//! indices array. An empty segment produces a zero vector.

use crate::error::CoreError;
use crate::types::{EmbeddingTable, PooledTable};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Bag count below which the parallel path is not worth the fork/join cost.
#[cfg(feature = "parallel")]
const PAR_MIN_BAGS: usize = 64;

/// Pools one table's bags. Dispatches to the data-parallel kernel when the
/// `parallel` feature is enabled and the batch is large enough; both paths
/// produce identical bytes because each bag is summed sequentially in index
/// order.
pub fn oracle_embedding_bag(
    table: &EmbeddingTable,
    indices: &[u64],
    lengths: &[u32],
) -> Result<PooledTable, CoreError> {
    #[cfg(feature = "parallel")]
    if lengths.len() >= PAR_MIN_BAGS {
        return oracle_embedding_bag_par(table, indices, lengths);
    }
    oracle_embedding_bag_seq(table, indices, lengths)
}

/// Sequential pooling kernel.
pub fn oracle_embedding_bag_seq(
    table: &EmbeddingTable,
    indices: &[u64],
    lengths: &[u32],
) -> Result<PooledTable, CoreError> {
    check_shape(table, indices, lengths)?;
    let dim = table.dim as usize;
    let mut out = PooledTable::zeros(lengths.len(), table.dim);
    let mut cursor = 0usize;
    for (b, &len) in lengths.iter().enumerate() {
        let seg = &indices[cursor..cursor + len as usize];
        pool_segment(table, seg, cursor, out.row_mut(b))?;
        cursor += len as usize;
        debug_assert_eq!(out.row(b).len(), dim);
    }
    Ok(out)
}

/// Data-parallel pooling kernel: bags are independent, so they are pooled in
/// parallel while the summation order inside each bag stays fixed.
#[cfg(feature = "parallel")]
pub fn oracle_embedding_bag_par(
    table: &EmbeddingTable,
    indices: &[u64],
    lengths: &[u32],
) -> Result<PooledTable, CoreError> {
    check_shape(table, indices, lengths)?;
    let dim = table.dim as usize;
    let mut offsets = Vec::with_capacity(lengths.len());
    let mut cursor = 0usize;
    for &len in lengths {
        offsets.push(cursor);
        cursor += len as usize;
    }
    let mut out = PooledTable::zeros(lengths.len(), table.dim);
    out.data
        .par_chunks_mut(dim)
        .zip(lengths.par_iter().zip(offsets.par_iter()))
        .try_for_each(|(row, (&len, &start))| {
            let seg = &indices[start..start + len as usize];
            pool_segment(table, seg, start, row)
        })?;
    Ok(out)
}

#[inline]
fn pool_segment(
    table: &EmbeddingTable,
    segment: &[u64],
    segment_start: usize,
    out: &mut [f32],
) -> Result<(), CoreError> {
    for (i, &index) in segment.iter().enumerate() {
        if index >= table.num_rows {
            return Err(CoreError::IndexOutOfRange {
                table_id: table.table_id,
                position: segment_start + i,
                index,
                num_rows: table.num_rows,
            });
        }
        for (acc, &v) in out.iter_mut().zip(table.row(index)) {
            *acc += v;
        }
    }
    Ok(())
}

fn check_shape(table: &EmbeddingTable, indices: &[u64], lengths: &[u32]) -> Result<(), CoreError> {
    let sum_lengths: u64 = lengths.iter().map(|&l| u64::from(l)).sum();
    if sum_lengths != indices.len() as u64 {
        return Err(CoreError::LengthMismatch {
            table_id: table.table_id,
            sum_lengths,
            num_indices: indices.len(),
        });
    }
    Ok(())
}
