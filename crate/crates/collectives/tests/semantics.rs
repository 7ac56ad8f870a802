//! Data-semantics tests for the five primitives against brute-force
//! references, exact on integer payloads, across group sizes, backends, and
//! both schedulers.

use embsim_collectives::{
    all_gather, all_reduce, all_to_all, all_to_all_var, broadcast, reduce_scatter, Reduction,
};
use embsim_core::SplitMix64;
use embsim_fabric::{
    default_cost_model, BackendProfile, FabricError, RankGroup, Scheduler, SpmdRun,
};

const GROUP_SIZES: [usize; 5] = [1, 2, 3, 4, 8];

fn group(g: usize, backend: BackendProfile) -> RankGroup {
    RankGroup::new(g, backend, default_cost_model())
}

/// Per-rank integer payloads of a given length, deterministic in (seed, rank).
fn payloads(seed: u64, g: usize, n: usize) -> Vec<Vec<i64>> {
    (0..g)
        .map(|r| {
            let mut rng = SplitMix64::new(seed ^ (r as u64) << 32);
            (0..n).map(|_| rng.next_u64() as i64 % 1000).collect()
        })
        .collect()
}

// Brute-force references over the full per-rank input matrix.

fn ref_all_reduce(inputs: &[Vec<i64>]) -> Vec<i64> {
    let n = inputs[0].len();
    let mut out = vec![0i64; n];
    for c in inputs {
        for (a, v) in out.iter_mut().zip(c) {
            *a += v;
        }
    }
    out
}

fn ref_all_gather(inputs: &[Vec<i64>]) -> Vec<i64> {
    inputs.iter().flatten().copied().collect()
}

fn ref_all_to_all(inputs: &[Vec<Vec<i64>>]) -> Vec<Vec<Vec<i64>>> {
    let g = inputs.len();
    (0..g)
        .map(|dest| (0..g).map(|src| inputs[src][dest].clone()).collect())
        .collect()
}

fn ref_reduce_scatter(inputs: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let g = inputs.len();
    let chunk = inputs[0].len() / g;
    (0..g)
        .map(|r| {
            let mut acc = vec![0i64; chunk];
            for c in inputs {
                for (a, v) in acc.iter_mut().zip(&c[r * chunk..(r + 1) * chunk]) {
                    *a += v;
                }
            }
            acc
        })
        .collect()
}

fn sizes_for(g: usize) -> [usize; 4] {
    [0, 1, g, 17 * g]
}

#[test]
fn all_reduce_matches_reference() {
    for g in GROUP_SIZES {
        for n in sizes_for(g) {
            for backend in BackendProfile::ALL {
                for scheduler in Scheduler::ALL {
                    let inputs = payloads(11, g, n);
                    let expected = ref_all_reduce(&inputs);
                    let inputs_ref = &inputs;
                    let run: SpmdRun<Vec<i64>> = group(g, backend)
                        .run(scheduler, |ctx| async move {
                            all_reduce(&ctx, &inputs_ref[ctx.rank()], Reduction::Sum).await
                        })
                        .unwrap();
                    for r in run.results {
                        assert_eq!(r, expected, "all_reduce g={g} n={n} {backend:?} {scheduler:?}");
                    }
                    let first = run.clocks_us[0];
                    assert!(run.clocks_us.iter().all(|&c| c == first), "clocks unequal");
                }
            }
        }
    }
}

#[test]
fn all_gather_matches_reference() {
    for g in GROUP_SIZES {
        for n in sizes_for(g) {
            let inputs = payloads(23, g, n);
            let expected = ref_all_gather(&inputs);
            let inputs_ref = &inputs;
            let run: SpmdRun<Vec<i64>> = group(g, BackendProfile::OneSided)
                .run(Scheduler::ConcurrentWorkers, |ctx| async move {
                    all_gather(&ctx, &inputs_ref[ctx.rank()]).await
                })
                .unwrap();
            for r in run.results {
                assert_eq!(r, expected, "all_gather g={g} n={n}");
            }
        }
    }
}

#[test]
fn all_to_all_matches_reference_on_unequal_chunks() {
    for g in GROUP_SIZES {
        let mut rng = SplitMix64::new(31);
        // Random unequal chunk sizes, including empties.
        let inputs: Vec<Vec<Vec<i64>>> = (0..g)
            .map(|r| {
                (0..g)
                    .map(|d| {
                        let len = rng.next_bounded(6) as usize;
                        (0..len).map(|i| (r * 100 + d * 10 + i) as i64).collect()
                    })
                    .collect()
            })
            .collect();
        let expected = ref_all_to_all(&inputs);
        for scheduler in Scheduler::ALL {
            let inputs_ref = &inputs;
            let run: SpmdRun<Vec<Vec<i64>>> = group(g, BackendProfile::CollectiveOptimized)
                .run(scheduler, |ctx| async move {
                    all_to_all_var(&ctx, inputs_ref[ctx.rank()].clone()).await
                })
                .unwrap();
            for (r, got) in run.results.iter().enumerate() {
                assert_eq!(got, &expected[r], "all_to_all g={g} rank={r} {scheduler:?}");
            }
        }
    }
}

#[test]
fn all_to_all_empty_chunks_cost_alpha_only() {
    let m = default_cost_model();
    for backend in BackendProfile::ALL {
        let run: SpmdRun<Vec<Vec<i64>>> = group(4, backend)
            .run(Scheduler::RoundRobin, |ctx| async move {
                all_to_all(&ctx, vec![Vec::new(); ctx.num_ranks()]).await
            })
            .unwrap();
        for r in &run.results {
            assert!(r.iter().all(|c| c.is_empty()));
        }
        let alpha = m
            .params(backend, embsim_fabric::CollectiveKind::AllToAll)
            .unwrap()
            .alpha_us;
        assert_eq!(run.clocks_us, vec![alpha; 4]);
    }
}

#[test]
fn broadcast_matches_reference() {
    for g in GROUP_SIZES {
        let mut rng = SplitMix64::new(47);
        let root = rng.next_bounded(g as u64) as usize;
        let inputs = payloads(53, g, 7);
        let expected = inputs[root].clone();
        let inputs_ref = &inputs;
        let run: SpmdRun<Vec<i64>> = group(g, BackendProfile::CollectiveOptimized)
            .run(Scheduler::ConcurrentWorkers, |ctx| async move {
                broadcast(&ctx, root, &inputs_ref[ctx.rank()]).await
            })
            .unwrap();
        for r in run.results {
            assert_eq!(r, expected, "broadcast g={g} root={root}");
        }
    }
}

#[test]
fn broadcast_bad_root_is_a_config_error() {
    let err = group(4, BackendProfile::CollectiveOptimized)
        .run(Scheduler::RoundRobin, |ctx| async move {
            broadcast(&ctx, 4, &[1i64]).await
        })
        .unwrap_err();
    assert!(matches!(err, FabricError::Config(_)));
}

#[test]
fn reduce_scatter_matches_reference_on_both_backends() {
    for g in GROUP_SIZES {
        for per_chunk in [0usize, 1, 17] {
            let n = per_chunk * g;
            let inputs = payloads(61, g, n);
            let expected = ref_reduce_scatter(&inputs);
            let mut outputs = Vec::new();
            for backend in BackendProfile::ALL {
                for scheduler in Scheduler::ALL {
                    let inputs_ref = &inputs;
                    let run: SpmdRun<Vec<i64>> = group(g, backend)
                        .run(scheduler, |ctx| async move {
                            reduce_scatter(&ctx, &inputs_ref[ctx.rank()], Reduction::Sum).await
                        })
                        .unwrap();
                    for (r, got) in run.results.iter().enumerate() {
                        assert_eq!(got, &expected[r], "reduce_scatter g={g} {backend:?}");
                    }
                    outputs.push(run.results);
                }
            }
            // One-sided composition equals the native result exactly.
            assert!(outputs.windows(2).all(|w| w[0] == w[1]));
        }
    }
}

#[test]
fn reduce_scatter_indivisible_length_is_an_error() {
    // 5 elements across 4 ranks: shape error on every backend.
    for backend in BackendProfile::ALL {
        let err = group(4, backend)
            .run(Scheduler::RoundRobin, |ctx| async move {
                reduce_scatter(&ctx, &[1i64, 2, 3, 4, 5], Reduction::Sum).await
            })
            .unwrap_err();
        assert!(matches!(err, FabricError::Config(_)), "{backend:?}");
    }
}

#[test]
fn max_reduction_reports_unimplemented() {
    let err = group(2, BackendProfile::CollectiveOptimized)
        .run(Scheduler::RoundRobin, |ctx| async move {
            all_reduce(&ctx, &[1i64], Reduction::Max).await
        })
        .unwrap_err();
    match err {
        FabricError::Config(msg) => assert!(msg.contains("max reduction")),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn mismatched_buffer_lengths_are_protocol_errors() {
    let err = group(2, BackendProfile::CollectiveOptimized)
        .run(Scheduler::ConcurrentWorkers, |ctx| async move {
            let data = vec![1i64; 2 + ctx.rank()];
            all_reduce(&ctx, &data, Reduction::Sum).await
        })
        .unwrap_err();
    match err {
        FabricError::Protocol { detail, .. } => assert!(detail.contains("all_reduce")),
        other => panic!("expected protocol error, got {other:?}"),
    }
}

/// all_reduce == reduce_scatter then all_gather, exactly, on integers.
#[test]
fn all_reduce_decomposes_into_reduce_scatter_plus_all_gather() {
    for g in [2usize, 4, 8] {
        let inputs = payloads(71, g, 6 * g);
        let inputs_ref = &inputs;
        for backend in BackendProfile::ALL {
            let run: SpmdRun<(Vec<i64>, Vec<i64>)> = group(g, backend)
                .run(Scheduler::ConcurrentWorkers, |ctx| async move {
                    let direct = all_reduce(&ctx, &inputs_ref[ctx.rank()], Reduction::Sum).await?;
                    let chunk = reduce_scatter(&ctx, &inputs_ref[ctx.rank()], Reduction::Sum).await?;
                    let composed = all_gather(&ctx, &chunk).await?;
                    Ok::<_, FabricError>((direct, composed))
                })
                .unwrap();
            for (direct, composed) in run.results {
                assert_eq!(direct, composed, "decomposition mismatch g={g} {backend:?}");
            }
        }
    }
}

/// Applying all_to_all twice returns every chunk to its sender.
#[test]
fn all_to_all_is_an_involution() {
    for g in [2usize, 3, 8] {
        let mut rng = SplitMix64::new(83);
        let inputs: Vec<Vec<Vec<i64>>> = (0..g)
            .map(|_| {
                (0..g)
                    .map(|_| (0..rng.next_bounded(4)).map(|_| rng.next_u64() as i64).collect())
                    .collect()
            })
            .collect();
        let inputs_ref = &inputs;
        let run: SpmdRun<Vec<Vec<i64>>> = group(g, BackendProfile::CollectiveOptimized)
            .run(Scheduler::RoundRobin, |ctx| async move {
                let once = all_to_all(&ctx, inputs_ref[ctx.rank()].clone()).await?;
                all_to_all(&ctx, once).await
            })
            .unwrap();
        for (r, got) in run.results.iter().enumerate() {
            assert_eq!(got, &inputs[r], "involution failed at rank {r}");
        }
    }
}

/// fp32 payloads agree across backends bit for bit: summation order is pinned
/// to rank order on both.
#[test]
fn fp32_results_are_backend_invariant() {
    let g = 8;
    let inputs: Vec<Vec<f32>> = (0..g)
        .map(|r| {
            let mut rng = SplitMix64::new(r as u64 + 1);
            (0..64).map(|_| rng.next_unit_f32()).collect()
        })
        .collect();
    let inputs_ref = &inputs;
    let mut per_backend = Vec::new();
    for backend in BackendProfile::ALL {
        let run: SpmdRun<(Vec<f32>, Vec<f32>)> = group(g, backend)
            .run(Scheduler::ConcurrentWorkers, |ctx| async move {
                let ar = all_reduce(&ctx, &inputs_ref[ctx.rank()], Reduction::Sum).await?;
                let rs = reduce_scatter(&ctx, &inputs_ref[ctx.rank()], Reduction::Sum).await?;
                Ok::<_, FabricError>((ar, rs))
            })
            .unwrap();
        per_backend.push(run.results);
    }
    assert_eq!(per_backend[0], per_backend[1]);
}
