//! The five communication primitives, implemented as rendezvous exchanges over
//! the fabric.
//!
//! Data results are backend-independent: the backend profile only selects how
//! the simulated cost is computed, and — for reduce-scatter under the
//! one-sided profile — how the operation is composed. Reductions fold
//! contributions in ascending rank order, so integer payloads reduce exactly
//! and fp32 payloads are reproducible bit for bit across schedulers and
//! backends.
//!
//! Message-size convention for costing: `msg_bytes` is the bytes a rank sends
//! (its full send buffer, self-addressed chunks included); for unequal
//! all-to-all chunks it is the maximum over ranks. Reduce-scatter is priced
//! against the per-rank result chunk, with the group dependence in the rank
//! factor.

use std::mem::size_of;
use std::ops::AddAssign;

use embsim_fabric::{BackendProfile, CollectiveKind, FabricError, RankCtx};

/// Reduction operator. Only `Sum` is implemented; the paper-shaped workloads
/// never use anything else, and `Max` reports a clear error instead of a
/// silent fallback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Max,
}

fn require_sum(reduction: Reduction) -> Result<(), FabricError> {
    match reduction {
        Reduction::Sum => Ok(()),
        Reduction::Max => Err(FabricError::Config(
            "max reduction is not implemented; only sum is supported".into(),
        )),
    }
}

fn check_equal_lengths<T>(
    label: &str,
    site: u64,
    contribs: &[Vec<T>],
) -> Result<usize, FabricError> {
    let n = contribs[0].len();
    for (rank, c) in contribs.iter().enumerate() {
        if c.len() != n {
            return Err(FabricError::Protocol {
                site,
                detail: format!(
                    "{label}: rank 0 supplied {n} elements but rank {rank} supplied {}",
                    c.len()
                ),
            });
        }
    }
    Ok(n)
}

/// Every rank ends with the element-wise sum of all ranks' buffers.
pub async fn all_reduce<T>(
    ctx: &RankCtx,
    data: &[T],
    reduction: Reduction,
) -> Result<Vec<T>, FabricError>
where
    T: Copy + Default + AddAssign + Send + 'static,
{
    require_sum(reduction)?;
    ctx.exchange(
        "all_reduce",
        data.to_vec(),
        move |contribs: Vec<Vec<T>>, cc| {
            let n = check_equal_lengths("all_reduce", cc.site, &contribs)?;
            let mut acc = vec![T::default(); n];
            for c in &contribs {
                for (a, v) in acc.iter_mut().zip(c) {
                    *a += *v;
                }
            }
            let duration = cc.cost.eval_cost(
                cc.backend,
                CollectiveKind::AllReduce,
                (n * size_of::<T>()) as u64,
                cc.num_ranks,
            )?;
            Ok((vec![acc; cc.num_ranks], duration))
        },
    )
    .await
}

/// Every rank ends with the rank-ordered concatenation of all buffers.
pub async fn all_gather<T>(ctx: &RankCtx, data: &[T]) -> Result<Vec<T>, FabricError>
where
    T: Clone + Send + 'static,
{
    ctx.exchange(
        "all_gather",
        data.to_vec(),
        move |contribs: Vec<Vec<T>>, cc| {
            let n = check_equal_lengths("all_gather", cc.site, &contribs)?;
            let concatenated: Vec<T> = contribs.into_iter().flatten().collect();
            let duration = cc.cost.eval_cost(
                cc.backend,
                CollectiveKind::AllGather,
                (n * size_of::<T>()) as u64,
                cc.num_ranks,
            )?;
            Ok((vec![concatenated; cc.num_ranks], duration))
        },
    )
    .await
}

/// Each rank supplies `G` chunks, chunk `g` destined for rank `g`; rank `r`
/// receives chunk `r` from every rank in sender order. Chunks may have unequal
/// sizes; the cost is charged at the largest per-rank send volume.
pub async fn all_to_all<T>(ctx: &RankCtx, chunks: Vec<Vec<T>>) -> Result<Vec<Vec<T>>, FabricError>
where
    T: Send + 'static,
{
    ctx.exchange("all_to_all", chunks, move |contribs: Vec<Vec<Vec<T>>>, cc| {
        let g = cc.num_ranks;
        for (rank, c) in contribs.iter().enumerate() {
            if c.len() != g {
                return Err(FabricError::Protocol {
                    site: cc.site,
                    detail: format!("all_to_all: rank {rank} supplied {} chunks for {g} ranks", c.len()),
                });
            }
        }
        let max_send_bytes = contribs
            .iter()
            .map(|c| c.iter().map(|chunk| chunk.len() * size_of::<T>()).sum::<usize>())
            .max()
            .unwrap_or(0) as u64;
        // Transpose: results[r][s] = chunk r sent by rank s.
        let mut results: Vec<Vec<Vec<T>>> = (0..g).map(|_| Vec::with_capacity(g)).collect();
        for sender_chunks in contribs {
            for (dest, chunk) in sender_chunks.into_iter().enumerate() {
                results[dest].push(chunk);
            }
        }
        let duration = cc.cost.eval_cost(
            cc.backend,
            CollectiveKind::AllToAll,
            max_send_bytes,
            cc.num_ranks,
        )?;
        Ok((results, duration))
    })
    .await
}

/// Variable-size all-to-all: peers first learn chunk sizes through a small
/// all-to-all of `G` 64-bit counts (charged separately), then exchange the
/// payload.
pub async fn all_to_all_var<T>(
    ctx: &RankCtx,
    chunks: Vec<Vec<T>>,
) -> Result<Vec<Vec<T>>, FabricError>
where
    T: Send + 'static,
{
    let counts: Vec<Vec<u64>> = chunks.iter().map(|c| vec![c.len() as u64]).collect();
    let received_counts = all_to_all(ctx, counts).await?;
    let received = all_to_all(ctx, chunks).await?;
    for (sender, (counts, chunk)) in received_counts.iter().zip(&received).enumerate() {
        if counts[0] != chunk.len() as u64 {
            return Err(FabricError::Protocol {
                site: 0,
                detail: format!(
                    "all_to_all_var: rank {sender} announced {} elements but sent {}",
                    counts[0],
                    chunk.len()
                ),
            });
        }
    }
    Ok(received)
}

/// Every rank ends with the root's buffer.
pub async fn broadcast<T>(ctx: &RankCtx, root: usize, data: &[T]) -> Result<Vec<T>, FabricError>
where
    T: Clone + Send + 'static,
{
    if root >= ctx.num_ranks() {
        return Err(FabricError::Config(format!(
            "broadcast root {root} is out of range for {} ranks",
            ctx.num_ranks()
        )));
    }
    ctx.exchange(
        "broadcast",
        data.to_vec(),
        move |mut contribs: Vec<Vec<T>>, cc| {
            let payload = std::mem::take(&mut contribs[root]);
            let duration = cc.cost.eval_cost(
                cc.backend,
                CollectiveKind::Broadcast,
                (payload.len() * size_of::<T>()) as u64,
                cc.num_ranks,
            )?;
            Ok((vec![payload; cc.num_ranks], duration))
        },
    )
    .await
}

/// Rank `r` ends with the element-wise sum of everyone's `r`-th chunk. Buffers
/// must have the same length on every rank, divisible by `G`.
///
/// Under the collective-optimized profile this is one native collective.
/// Under the one-sided profile it is composed: an all-to-all of the chunks
/// followed by a local rank-ordered sum, costed as the all-to-all plus a
/// memory sweep over the received bytes.
pub async fn reduce_scatter<T>(
    ctx: &RankCtx,
    data: &[T],
    reduction: Reduction,
) -> Result<Vec<T>, FabricError>
where
    T: Copy + Default + AddAssign + Send + 'static,
{
    require_sum(reduction)?;
    let g = ctx.num_ranks();
    if data.len() % g != 0 {
        return Err(FabricError::Config(format!(
            "reduce_scatter buffer of {} elements is not divisible by {g} ranks",
            data.len()
        )));
    }
    let chunk_len = data.len() / g;

    match ctx.backend() {
        BackendProfile::CollectiveOptimized => {
            ctx.exchange(
                "reduce_scatter",
                data.to_vec(),
                move |contribs: Vec<Vec<T>>, cc| {
                    let n = check_equal_lengths("reduce_scatter", cc.site, &contribs)?;
                    if n % cc.num_ranks != 0 {
                        return Err(FabricError::Config(format!(
                            "reduce_scatter buffer of {n} elements is not divisible by {} ranks",
                            cc.num_ranks
                        )));
                    }
                    let chunk = n / cc.num_ranks;
                    let mut results = Vec::with_capacity(cc.num_ranks);
                    for r in 0..cc.num_ranks {
                        let mut acc = vec![T::default(); chunk];
                        for c in &contribs {
                            for (a, v) in acc.iter_mut().zip(&c[r * chunk..(r + 1) * chunk]) {
                                *a += *v;
                            }
                        }
                        results.push(acc);
                    }
                    let duration = cc.cost.eval_cost(
                        cc.backend,
                        CollectiveKind::ReduceScatter,
                        (chunk * size_of::<T>()) as u64,
                        cc.num_ranks,
                    )?;
                    Ok((results, duration))
                },
            )
            .await
        }
        BackendProfile::OneSided => {
            let chunks: Vec<Vec<T>> = (0..g)
                .map(|r| data[r * chunk_len..(r + 1) * chunk_len].to_vec())
                .collect();
            let received = all_to_all(ctx, chunks).await?;
            let mut acc = vec![T::default(); chunk_len];
            for c in &received {
                if c.len() != chunk_len {
                    return Err(FabricError::Protocol {
                        site: 0,
                        detail: format!(
                            "reduce_scatter composition: peer chunk of {} elements, expected {chunk_len}",
                            c.len()
                        ),
                    });
                }
                for (a, v) in acc.iter_mut().zip(c) {
                    *a += *v;
                }
            }
            let summed_bytes = (g * chunk_len * size_of::<T>()) as u64;
            ctx.advance_local(ctx.cost_model().memory_sweep_cost(summed_bytes));
            Ok(acc)
        }
    }
}
