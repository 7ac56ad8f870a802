//! Deterministic SPMD execution.
//!
//! A `RankGroup` runs one program on every logical rank. The only cross-rank
//! channel is `RankCtx::exchange`: a full-group rendezvous in which every rank
//! deposits a contribution, one combining function (run once, when the last
//! rank arrives) produces per-rank results plus a simulated duration, and every
//! participant's clock advances to `max(entry clocks) + duration`.
//!
//! Rank programs are futures so the same program can be driven two ways:
//!
//! * `Scheduler::ConcurrentWorkers` — one OS thread per rank, parked while a
//!   rendezvous is incomplete;
//! * `Scheduler::RoundRobin` — a single-threaded executor polling rank futures
//!   in rank order.
//!
//! Results and clocks are identical under both because a rendezvous combines
//! rank-indexed contributions; arrival order never influences data.

use std::any::Any;
use std::collections::BTreeMap;
use std::future::Future;
use std::marker::PhantomData;
use std::pin::Pin;
use std::sync::{Arc, Condvar, Mutex};
use std::task::{Context, Poll, Wake, Waker};

use crate::cost::{BackendProfile, CostModel};
use crate::error::FabricError;

/// How rank programs are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    /// One worker thread per rank with rendezvous wakeups.
    ConcurrentWorkers,
    /// Single-threaded round scheduler polling ranks in rank order.
    RoundRobin,
}

impl Scheduler {
    pub const ALL: [Scheduler; 2] = [Scheduler::ConcurrentWorkers, Scheduler::RoundRobin];
}

/// Results of one SPMD run: per-rank program outputs and final simulated
/// clocks in microseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SpmdRun<T> {
    pub results: Vec<T>,
    pub clocks_us: Vec<f64>,
}

/// Immutable description of a rank group: group size, backend persona, and the
/// cost model pricing its communication.
pub struct RankGroup {
    num_ranks: usize,
    backend: BackendProfile,
    cost: CostModel,
}

/// Everything the combining function may consult when pricing a collective.
pub struct CostContext<'a> {
    pub cost: &'a CostModel,
    pub backend: BackendProfile,
    pub num_ranks: usize,
    /// Call-site counter of the rendezvous being combined, for error reports.
    pub site: u64,
}

type Payload = Box<dyn Any + Send>;
type CombineFn =
    Box<dyn FnOnce(Vec<Payload>, &CostContext<'_>) -> Result<(Vec<Payload>, f64), FabricError> + Send>;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum RankState {
    Running,
    /// Deposited at this site and not yet collected its result.
    Blocked(u64),
    Finished,
}

struct Rendezvous {
    label: &'static str,
    combine: Option<CombineFn>,
    payloads: Vec<Option<Payload>>,
    arrived: usize,
    /// `None` until finalized; then per-rank results or the shared error.
    outcome: Option<Result<(), FabricError>>,
    results: Vec<Option<Payload>>,
    collected: usize,
    wakers: Vec<Option<Waker>>,
}

impl Rendezvous {
    fn new(label: &'static str, num_ranks: usize) -> Self {
        Self {
            label,
            combine: None,
            payloads: (0..num_ranks).map(|_| None).collect(),
            arrived: 0,
            outcome: None,
            results: (0..num_ranks).map(|_| None).collect(),
            collected: 0,
            wakers: (0..num_ranks).map(|_| None).collect(),
        }
    }

    fn wake_all(&mut self) {
        for w in &mut self.wakers {
            if let Some(w) = w.take() {
                w.wake();
            }
        }
    }
}

struct Inner {
    clocks: Vec<f64>,
    sites: BTreeMap<u64, Rendezvous>,
    states: Vec<RankState>,
    poison: Option<FabricError>,
    /// Counts deposits and finalizations; the round scheduler uses it to
    /// detect a pass that made no progress.
    epoch: u64,
}

struct Shared {
    num_ranks: usize,
    backend: BackendProfile,
    cost: CostModel,
    inner: Mutex<Inner>,
}

impl Shared {
    /// True if some rank can still run: it is either executing or parked on a
    /// rendezvous that has completed.
    fn any_runnable(inner: &Inner) -> bool {
        inner.states.iter().any(|s| match s {
            RankState::Running => true,
            RankState::Finished => false,
            RankState::Blocked(site) => inner
                .sites
                .get(site)
                .is_none_or(|rv| rv.outcome.is_some()),
        })
    }

    /// Poisons the group when no rank can make progress while collectives are
    /// still pending: some rank finished early or ranks diverged onto
    /// different call sites.
    fn check_stuck(inner: &mut Inner) {
        if inner.poison.is_some() || Self::any_runnable(inner) {
            return;
        }
        let pending: Vec<String> = inner
            .sites
            .iter()
            .filter(|(_, rv)| rv.outcome.is_none())
            .map(|(site, rv)| format!("site {site} ({}, {} arrived)", rv.label, rv.arrived))
            .collect();
        if pending.is_empty() {
            return; // clean global finish
        }
        let first_site = inner
            .sites
            .iter()
            .find(|(_, rv)| rv.outcome.is_none())
            .map(|(s, _)| *s)
            .unwrap_or(0);
        let err = FabricError::Protocol {
            site: first_site,
            detail: format!(
                "collective participation mismatch: some ranks finished or diverged while peers wait ({})",
                pending.join("; ")
            ),
        };
        inner.poison = Some(err);
        inner.epoch += 1;
        for rv in inner.sites.values_mut() {
            rv.wake_all();
        }
    }

    fn finalize(&self, inner: &mut Inner, site: u64) {
        let cost_ctx = CostContext {
            cost: &self.cost,
            backend: self.backend,
            num_ranks: self.num_ranks,
            site,
        };
        let rv = inner.sites.get_mut(&site).expect("finalizing unknown site");
        let payloads: Vec<Payload> = rv
            .payloads
            .iter_mut()
            .map(|p| p.take().expect("finalize with missing payload"))
            .collect();
        let combine = rv.combine.take().expect("finalize without combine");
        match combine(payloads, &cost_ctx) {
            Ok((results, duration)) => {
                assert!(
                    duration.is_finite() && duration >= 0.0,
                    "collective duration must be finite and non-negative"
                );
                assert_eq!(results.len(), self.num_ranks, "combine must return one result per rank");
                let entry_max = inner.clocks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let synced = entry_max + duration;
                for c in &mut inner.clocks {
                    *c = synced;
                }
                let rv = inner.sites.get_mut(&site).unwrap();
                rv.results = results.into_iter().map(Some).collect();
                rv.outcome = Some(Ok(()));
                rv.wake_all();
            }
            Err(e) => {
                let rv = inner.sites.get_mut(&site).unwrap();
                rv.outcome = Some(Err(e));
                rv.wake_all();
            }
        }
        inner.epoch += 1;
    }

    fn finish_rank(&self, rank: usize) {
        let mut guard = self.inner.lock().unwrap();
        let inner = &mut *guard;
        inner.states[rank] = RankState::Finished;
        Self::check_stuck(inner);
    }

    fn epoch(&self) -> u64 {
        self.inner.lock().unwrap().epoch
    }

    /// Safety net for the round scheduler: force-poison when a full pass made
    /// no progress and `check_stuck` did not already fire.
    fn poison_no_progress(&self) {
        let mut guard = self.inner.lock().unwrap();
        let inner = &mut *guard;
        if inner.poison.is_some() {
            return;
        }
        inner.poison = Some(FabricError::Protocol {
            site: inner.sites.keys().next().copied().unwrap_or(0),
            detail: "scheduler made no progress; rank programs are stalled outside any rendezvous".into(),
        });
        inner.epoch += 1;
        for rv in inner.sites.values_mut() {
            rv.wake_all();
        }
    }
}

/// Per-rank handle passed to the program: identifies the rank and exposes the
/// clock, the cost model, and the rendezvous primitive.
pub struct RankCtx {
    rank: usize,
    next_site: std::cell::Cell<u64>,
    shared: Arc<Shared>,
}

impl RankCtx {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_ranks(&self) -> usize {
        self.shared.num_ranks
    }

    pub fn backend(&self) -> BackendProfile {
        self.shared.backend
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.shared.cost
    }

    /// This rank's simulated clock in microseconds.
    pub fn clock_us(&self) -> f64 {
        self.shared.inner.lock().unwrap().clocks[self.rank]
    }

    /// Advances this rank's clock by a local (non-communication) duration.
    pub fn advance_local(&self, duration_us: f64) {
        assert!(
            duration_us.is_finite() && duration_us >= 0.0,
            "local durations must be finite and non-negative"
        );
        self.shared.inner.lock().unwrap().clocks[self.rank] += duration_us;
    }

    /// Full-group rendezvous. Every rank deposits `payload`; when the last
    /// arrives, `combine` runs once over the rank-indexed contributions and
    /// returns per-rank results plus the simulated duration; all clocks
    /// synchronize to `max(entry clocks) + duration`. The label tags the call
    /// site in protocol errors and must agree across ranks.
    pub fn exchange<T, R, C>(&self, label: &'static str, payload: T, combine: C) -> Exchange<'_, R>
    where
        T: Send + 'static,
        R: Send + 'static,
        C: FnOnce(Vec<T>, &CostContext<'_>) -> Result<(Vec<R>, f64), FabricError> + Send + 'static,
    {
        let site = self.next_site.get();
        self.next_site.set(site + 1);
        let num_ranks = self.shared.num_ranks;
        let erased: CombineFn = Box::new(move |payloads, cost_ctx| {
            let mut typed = Vec::with_capacity(payloads.len());
            for (rank, p) in payloads.into_iter().enumerate() {
                match p.downcast::<T>() {
                    Ok(v) => typed.push(*v),
                    Err(_) => {
                        return Err(FabricError::Protocol {
                            site,
                            detail: format!("rank {rank} deposited a payload of a different type"),
                        })
                    }
                }
            }
            let (results, duration) = combine(typed, cost_ctx)?;
            if results.len() != num_ranks {
                return Err(FabricError::Protocol {
                    site,
                    detail: format!(
                        "combine produced {} results for {num_ranks} ranks",
                        results.len()
                    ),
                });
            }
            Ok((
                results
                    .into_iter()
                    .map(|r| Box::new(r) as Payload)
                    .collect(),
                duration,
            ))
        });
        Exchange {
            ctx: self,
            site,
            label,
            stage: Stage::Deposit {
                payload: Box::new(payload),
                combine: erased,
            },
            _out: PhantomData,
        }
    }

    /// Zero-duration synchronization point: clocks align to the group maximum.
    pub fn barrier(&self) -> Exchange<'_, ()> {
        let g = self.shared.num_ranks;
        self.exchange("barrier", (), move |_: Vec<()>, _| Ok((vec![(); g], 0.0)))
    }
}

enum Stage {
    Deposit { payload: Payload, combine: CombineFn },
    Waiting,
    Done,
}

/// Future returned by [`RankCtx::exchange`].
pub struct Exchange<'a, R> {
    ctx: &'a RankCtx,
    site: u64,
    label: &'static str,
    stage: Stage,
    _out: PhantomData<fn() -> R>,
}

impl<R: Send + 'static> Future for Exchange<'_, R> {
    type Output = Result<R, FabricError>;

    fn poll(self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Self::Output> {
        let this = self.get_mut();
        let rank = this.ctx.rank;
        let shared = &this.ctx.shared;
        let mut guard = shared.inner.lock().unwrap();
        let inner = &mut *guard;

        if let Some(p) = &inner.poison {
            this.stage = Stage::Done;
            inner.states[rank] = RankState::Running;
            return Poll::Ready(Err(p.clone()));
        }

        match std::mem::replace(&mut this.stage, Stage::Waiting) {
            Stage::Deposit { payload, combine } => {
                let g = shared.num_ranks;
                let rv = inner
                    .sites
                    .entry(this.site)
                    .or_insert_with(|| Rendezvous::new(this.label, g));
                if rv.label != this.label {
                    let err = FabricError::Protocol {
                        site: this.site,
                        detail: format!(
                            "rank {rank} called {} but peers called {}",
                            this.label, rv.label
                        ),
                    };
                    inner.poison = Some(err.clone());
                    inner.epoch += 1;
                    for rv in inner.sites.values_mut() {
                        rv.wake_all();
                    }
                    this.stage = Stage::Done;
                    return Poll::Ready(Err(err));
                }
                assert!(rv.payloads[rank].is_none(), "rank re-entered a rendezvous");
                rv.payloads[rank] = Some(payload);
                if rv.combine.is_none() {
                    rv.combine = Some(combine);
                }
                rv.arrived += 1;
                let complete = rv.arrived == g;
                inner.states[rank] = RankState::Blocked(this.site);
                inner.epoch += 1;
                if complete {
                    shared.finalize(inner, this.site);
                } else {
                    Shared::check_stuck(inner);
                    if let Some(p) = &inner.poison {
                        this.stage = Stage::Done;
                        inner.states[rank] = RankState::Running;
                        return Poll::Ready(Err(p.clone()));
                    }
                }
            }
            Stage::Waiting => {}
            Stage::Done => panic!("exchange polled after completion"),
        }

        let rv = inner
            .sites
            .get_mut(&this.site)
            .expect("rendezvous vanished before collection");
        match &rv.outcome {
            Some(Ok(())) => {
                let result = rv.results[rank].take().expect("result already collected");
                rv.collected += 1;
                if rv.collected == shared.num_ranks {
                    inner.sites.remove(&this.site);
                }
                inner.states[rank] = RankState::Running;
                this.stage = Stage::Done;
                let value = result
                    .downcast::<R>()
                    .expect("combine result type mismatch (internal error)");
                Poll::Ready(Ok(*value))
            }
            Some(Err(e)) => {
                let e = e.clone();
                rv.collected += 1;
                if rv.collected == shared.num_ranks {
                    inner.sites.remove(&this.site);
                }
                inner.states[rank] = RankState::Running;
                this.stage = Stage::Done;
                Poll::Ready(Err(e))
            }
            None => {
                rv.wakers[rank] = Some(cx.waker().clone());
                Poll::Pending
            }
        }
    }
}

impl RankGroup {
    pub fn new(num_ranks: usize, backend: BackendProfile, cost: CostModel) -> Self {
        assert!(num_ranks >= 1, "a rank group needs at least one rank");
        Self {
            num_ranks,
            backend,
            cost,
        }
    }

    pub fn num_ranks(&self) -> usize {
        self.num_ranks
    }

    pub fn backend(&self) -> BackendProfile {
        self.backend
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    /// Runs `program` on every rank under the chosen scheduler. The program
    /// receives its `RankCtx` and returns a future; errors from any rank fail
    /// the whole run (reported in rank order).
    pub fn run<T, E, F, Fut>(&self, scheduler: Scheduler, program: F) -> Result<SpmdRun<T>, E>
    where
        F: Fn(RankCtx) -> Fut + Sync,
        Fut: Future<Output = Result<T, E>>,
        T: Send,
        E: From<FabricError> + Send,
    {
        let shared = Arc::new(Shared {
            num_ranks: self.num_ranks,
            backend: self.backend,
            cost: self.cost.clone(),
            inner: Mutex::new(Inner {
                clocks: vec![0.0; self.num_ranks],
                sites: BTreeMap::new(),
                states: vec![RankState::Running; self.num_ranks],
                poison: None,
                epoch: 0,
            }),
        });

        let outputs: Vec<Result<T, E>> = match scheduler {
            Scheduler::RoundRobin => run_round_robin(&shared, &program),
            Scheduler::ConcurrentWorkers => run_workers(&shared, &program),
        };

        let clocks_us = shared.inner.lock().unwrap().clocks.clone();
        let mut results = Vec::with_capacity(outputs.len());
        for out in outputs {
            results.push(out?);
        }
        Ok(SpmdRun { results, clocks_us })
    }
}

/// `spawn_spmd(group, scheduler, program)`: alias for [`RankGroup::run`].
pub fn spawn_spmd<T, E, F, Fut>(
    group: &RankGroup,
    scheduler: Scheduler,
    program: F,
) -> Result<SpmdRun<T>, E>
where
    F: Fn(RankCtx) -> Fut + Sync,
    Fut: Future<Output = Result<T, E>>,
    T: Send,
    E: From<FabricError> + Send,
{
    group.run(scheduler, program)
}

struct NoopWake;
impl Wake for NoopWake {
    fn wake(self: Arc<Self>) {}
}

fn run_round_robin<T, E, F, Fut>(shared: &Arc<Shared>, program: &F) -> Vec<Result<T, E>>
where
    F: Fn(RankCtx) -> Fut + Sync,
    Fut: Future<Output = Result<T, E>>,
{
    let g = shared.num_ranks;
    let mut futures: Vec<Option<Pin<Box<Fut>>>> = (0..g)
        .map(|rank| {
            Some(Box::pin(program(RankCtx {
                rank,
                next_site: std::cell::Cell::new(0),
                shared: Arc::clone(shared),
            })))
        })
        .collect();
    let mut outputs: Vec<Option<Result<T, E>>> = (0..g).map(|_| None).collect();
    let waker = Waker::from(Arc::new(NoopWake));
    let mut cx = Context::from_waker(&waker);

    let mut remaining = g;
    while remaining > 0 {
        let epoch_before = shared.epoch();
        let mut completed = 0usize;
        for rank in 0..g {
            if let Some(fut) = futures[rank].as_mut() {
                if let Poll::Ready(out) = fut.as_mut().poll(&mut cx) {
                    futures[rank] = None;
                    outputs[rank] = Some(out);
                    shared.finish_rank(rank);
                    completed += 1;
                }
            }
        }
        remaining -= completed;
        if remaining > 0 && completed == 0 && shared.epoch() == epoch_before {
            shared.poison_no_progress();
        }
    }
    outputs.into_iter().map(|o| o.expect("rank produced no output")).collect()
}

/// Thread-parking waker: wakes by unparking the worker.
struct Unparker {
    thread: std::thread::Thread,
    /// Guards against a wake racing the transition into `park`.
    notified: Mutex<bool>,
    cv: Condvar,
}

impl Wake for Unparker {
    fn wake(self: Arc<Self>) {
        self.wake_by_ref();
    }
    fn wake_by_ref(self: &Arc<Self>) {
        *self.notified.lock().unwrap() = true;
        self.cv.notify_all();
        self.thread.unpark();
    }
}

fn run_workers<T, E, F, Fut>(shared: &Arc<Shared>, program: &F) -> Vec<Result<T, E>>
where
    F: Fn(RankCtx) -> Fut + Sync,
    Fut: Future<Output = Result<T, E>>,
    T: Send,
    E: Send,
{
    let g = shared.num_ranks;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..g)
            .map(|rank| {
                let shared = Arc::clone(shared);
                scope.spawn(move || {
                    let ctx = RankCtx {
                        rank,
                        next_site: std::cell::Cell::new(0),
                        shared: Arc::clone(&shared),
                    };
                    let fut = program(ctx);
                    let mut fut = std::pin::pin!(fut);
                    let unparker = Arc::new(Unparker {
                        thread: std::thread::current(),
                        notified: Mutex::new(false),
                        cv: Condvar::new(),
                    });
                    let waker = Waker::from(Arc::clone(&unparker));
                    let mut cx = Context::from_waker(&waker);
                    let out = loop {
                        match fut.as_mut().poll(&mut cx) {
                            Poll::Ready(v) => break v,
                            Poll::Pending => {
                                let mut notified = unparker.notified.lock().unwrap();
                                while !*notified {
                                    notified = unparker.cv.wait(notified).unwrap();
                                }
                                *notified = false;
                            }
                        }
                    };
                    shared.finish_rank(rank);
                    out
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank worker panicked"))
            .collect()
    })
}

/// Synchronizes participant clocks after a collective of the given duration:
/// every clock becomes `max(clocks) + duration_us`.
pub fn advance_collective(clocks: &mut [f64], duration_us: f64) {
    assert!(duration_us.is_finite() && duration_us >= 0.0);
    let entry_max = clocks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for c in clocks {
        *c = entry_max + duration_us;
    }
}
