//! Seeded synthetic tables and batches.
//!
//! Generation is built on SplitMix64 so that every value is a pure function of
//! the seed and its coordinates: same seed, same bytes, on any platform and
//! under any thread count. Sub-streams (per table, per rank, per row) are
//! derived by mixing identifiers into the seed rather than by sequential
//! draws, which keeps generation order-independent.

use crate::error::CoreError;
use crate::types::{EmbeddingTable, JaggedBatch, TableBatch};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// SplitMix64 with the standard constants; `split` derives independent
/// sub-streams.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(Self::GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Derives a stream whose draws are independent of this one. The label
    /// keeps streams for different roles (tables, batches, ranks) apart even
    /// when their numeric ids collide.
    pub fn split(&self, label: u64, id: u64) -> SplitMix64 {
        let mut mixer = SplitMix64::new(self.state ^ label.rotate_left(17));
        let a = mixer.next_u64();
        let mut mixer = SplitMix64::new(a ^ id);
        SplitMix64::new(mixer.next_u64())
    }

    /// Uniform draw in `[0, bound)` via 128-bit widening multiply.
    #[inline]
    pub fn next_bounded(&mut self, bound: u64) -> u64 {
        assert!(bound > 0);
        ((u128::from(self.next_u64()) * u128::from(bound)) >> 64) as u64
    }

    /// Uniform f32 in `[-1, 1)` using the top 24 bits of a draw.
    #[inline]
    pub fn next_unit_f32(&mut self) -> f32 {
        let u = (self.next_u64() >> 40) as f32 / (1u64 << 24) as f32;
        2.0 * u - 1.0
    }
}

const LABEL_TABLE_ROW: u64 = 0x7461_626c_655f_726f; // "table_ro"
const LABEL_BATCH_TABLE: u64 = 0x6261_7463_685f_7462; // "batch_tb"

/// Generates a table with values uniform in `[-1, 1)`. Each row draws from its
/// own sub-stream so rows can be filled in parallel without changing bytes.
pub fn synth_table(seed: u64, num_rows: u64, dim: u32) -> EmbeddingTable {
    assert!(num_rows >= 1 && dim >= 1);
    let d = dim as usize;
    let root = SplitMix64::new(seed);
    let mut values = vec![0.0f32; num_rows as usize * d];

    let fill_row = |row: u64, out: &mut [f32]| {
        let mut rng = root.split(LABEL_TABLE_ROW, row);
        for v in out {
            *v = rng.next_unit_f32();
        }
    };

    #[cfg(feature = "parallel")]
    {
        values
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(row, chunk)| fill_row(row as u64, chunk));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (row, chunk) in values.chunks_mut(d).enumerate() {
            fill_row(row as u64, chunk);
        }
    }

    EmbeddingTable::new(0, num_rows, dim, values).expect("generated table is well-formed")
}

/// Bag length policy for synthetic batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthMode {
    /// Every bag has exactly the pooling factor entries.
    Constant,
    /// Bag lengths drawn uniformly from `[0, pooling]`; used by oracle tests.
    Variable,
}

/// Generates one rank's jagged batch: for each table, `batch_size` bags of
/// indices over `[0, num_rows)`. `pooling` must not exceed any table's rows.
pub fn synth_batch(
    seed: u64,
    batch_size: usize,
    tables: &[EmbeddingTable],
    pooling: u32,
    mode: LengthMode,
) -> Result<JaggedBatch, CoreError> {
    assert!(batch_size >= 1);
    for t in tables {
        if u64::from(pooling) > t.num_rows {
            return Err(CoreError::Config(format!(
                "pooling factor {pooling} exceeds table {} rows ({})",
                t.table_id, t.num_rows
            )));
        }
    }
    let root = SplitMix64::new(seed);
    let tables_out = tables
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let mut rng = root.split(LABEL_BATCH_TABLE, ti as u64);
            let lengths: Vec<u32> = (0..batch_size)
                .map(|_| match mode {
                    LengthMode::Constant => pooling,
                    LengthMode::Variable => rng.next_bounded(u64::from(pooling) + 1) as u32,
                })
                .collect();
            let total: u64 = lengths.iter().map(|&l| u64::from(l)).sum();
            let indices: Vec<u64> = (0..total).map(|_| rng.next_bounded(t.num_rows)).collect();
            TableBatch { indices, lengths }
        })
        .collect();
    Ok(JaggedBatch {
        batch_size,
        tables: tables_out,
    })
}
