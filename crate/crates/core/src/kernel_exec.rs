//! Teams-style hierarchical kernel execution.
//!
//! A kernel is launched over a grid of `teams × threads`. The launch body is
//! invoked once per team with a [`LaunchContext`] that exposes the team index,
//! inner thread loops, team-shared scratch and a team barrier. Two backends
//! are selectable at run time through [`ExecPlace`]:
//!
//! * `Sequential` runs every team in index order on the calling thread.
//! * `Threaded(n)` distributes teams over a pool of `n` workers. Threads of a
//!   single team always run on one worker, in a fixed order, so any value a
//!   team computes is bitwise identical between the two backends.
//!
//! Team scratch is a fixed per-team budget (48 KiB by default, the size of a
//! typical GPU shared-memory partition). Scratch handed to a team is zeroed,
//! so nothing written by one team is ever observed by another.

use std::cell::{Cell, UnsafeCell};
use std::collections::HashMap;
use std::fmt;
use std::num::NonZeroUsize;
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use thiserror::Error;

/// Default per-team scratch budget in bytes.
pub const DEFAULT_SCRATCH_BYTES: usize = 48 * 1024;

/// Number of indices folded into one partial accumulator by [`reduce`].
pub const REDUCE_BLOCK: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("grid dimension `{0}` must be positive")]
    ZeroGrid(&'static str),
    #[error("at most 3 thread dimensions are supported, got {0}")]
    ThreadRank(usize),
    #[error("worker count must be at least 1")]
    ZeroWorkers,
    #[error("invalid execution place `{0}` (expected `seq` or `threads:N`)")]
    ParsePlace(String),
    #[error("team {team}: scratch request of {requested} bytes exceeds the remaining {available} of {capacity} bytes")]
    ScratchOverflow {
        team: usize,
        requested: usize,
        available: usize,
        capacity: usize,
    },
    #[error("output of length {len} cannot be split into {teams} team chunks of {chunk}")]
    OutputShape { len: usize, teams: usize, chunk: usize },
    #[error("team {team} panicked: {message}")]
    KernelPanic { team: usize, message: String },
    #[error("team {team} failed: {message}")]
    KernelFailed { team: usize, message: String },
}

/// Run-time backend selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ExecPlace {
    #[default]
    Sequential,
    Threaded(NonZeroUsize),
}

impl ExecPlace {
    pub fn threaded(workers: usize) -> Result<Self, ExecError> {
        NonZeroUsize::new(workers)
            .map(ExecPlace::Threaded)
            .ok_or(ExecError::ZeroWorkers)
    }

    pub fn worker_count(&self) -> usize {
        match self {
            ExecPlace::Sequential => 1,
            ExecPlace::Threaded(n) => n.get(),
        }
    }
}

impl fmt::Display for ExecPlace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExecPlace::Sequential => write!(f, "seq"),
            ExecPlace::Threaded(n) => write!(f, "threads:{n}"),
        }
    }
}

impl FromStr for ExecPlace {
    type Err = ExecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "seq" || s == "sequential" {
            return Ok(ExecPlace::Sequential);
        }
        if let Some(n) = s.strip_prefix("threads:") {
            let n: usize = n.parse().map_err(|_| ExecError::ParsePlace(s.to_string()))?;
            return ExecPlace::threaded(n).map_err(|_| ExecError::ParsePlace(s.to_string()));
        }
        Err(ExecError::ParsePlace(s.to_string()))
    }
}

/// Grid of teams and per-team thread extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    teams: usize,
    threads: [usize; 3],
    scratch_bytes: usize,
}

impl GridConfig {
    pub fn new(teams: usize, thread_dims: &[usize]) -> Result<Self, ExecError> {
        if teams == 0 {
            return Err(ExecError::ZeroGrid("teams"));
        }
        if thread_dims.len() > 3 {
            return Err(ExecError::ThreadRank(thread_dims.len()));
        }
        let mut threads = [1usize; 3];
        for (slot, &t) in threads.iter_mut().zip(thread_dims) {
            if t == 0 {
                return Err(ExecError::ZeroGrid("threads"));
            }
            *slot = t;
        }
        Ok(Self {
            teams,
            threads,
            scratch_bytes: DEFAULT_SCRATCH_BYTES,
        })
    }

    /// Override the per-team scratch budget.
    pub fn with_scratch_bytes(mut self, bytes: usize) -> Self {
        self.scratch_bytes = bytes;
        self
    }

    pub fn teams(&self) -> usize {
        self.teams
    }

    pub fn thread_dims(&self) -> [usize; 3] {
        self.threads
    }

    pub fn scratch_bytes(&self) -> usize {
        self.scratch_bytes
    }
}

/// Fixed-capacity bump region shared by the threads of one team.
pub struct TeamScratch {
    words: Box<[UnsafeCell<f64>]>,
    used: Cell<usize>,
}

impl TeamScratch {
    fn new(bytes: usize) -> Self {
        let n = bytes / std::mem::size_of::<f64>();
        let words: Vec<UnsafeCell<f64>> = (0..n).map(|_| UnsafeCell::new(0.0)).collect();
        Self {
            words: words.into_boxed_slice(),
            used: Cell::new(0),
        }
    }

    pub fn capacity_bytes(&self) -> usize {
        self.words.len() * std::mem::size_of::<f64>()
    }

    fn reset(&self) {
        self.used.set(0);
    }

    #[allow(clippy::mut_from_ref)]
    fn alloc(&self, team: usize, len: usize) -> Result<&mut [f64], ExecError> {
        let start = self.used.get();
        let end = start + len;
        if end > self.words.len() {
            return Err(ExecError::ScratchOverflow {
                team,
                requested: len * std::mem::size_of::<f64>(),
                available: (self.words.len() - start) * std::mem::size_of::<f64>(),
                capacity: self.capacity_bytes(),
            });
        }
        self.used.set(end);
        let cells = &self.words[start..end];
        // SAFETY: the bump pointer hands out each word range at most once per
        // team, the cells are `UnsafeCell` so mutation through a shared
        // reference is permitted, and `UnsafeCell<f64>` has the layout of f64.
        let slice = unsafe {
            std::slice::from_raw_parts_mut(UnsafeCell::raw_get(cells.as_ptr()), cells.len())
        };
        slice.fill(0.0);
        Ok(slice)
    }
}

/// Control handle passed to a kernel body, confined to one team.
pub struct LaunchContext<'a> {
    team: usize,
    grid: &'a GridConfig,
    scratch: &'a TeamScratch,
    syncs: Cell<usize>,
}

impl<'a> LaunchContext<'a> {
    pub fn team_index(&self) -> usize {
        self.team
    }

    pub fn league_size(&self) -> usize {
        self.grid.teams
    }

    pub fn thread_dims(&self) -> [usize; 3] {
        self.grid.threads
    }

    /// Team barrier. Threads of a team execute in a fixed order on a single
    /// worker, so every write issued by an earlier thread loop is complete.
    pub fn team_sync(&self) {
        self.syncs.set(self.syncs.get() + 1);
    }

    pub fn sync_count(&self) -> usize {
        self.syncs.get()
    }

    /// Zeroed team-shared scratch of `len` f64 values.
    pub fn scratch(&self, len: usize) -> Result<&'a mut [f64], ExecError> {
        self.scratch.alloc(self.team, len)
    }

    pub fn fail(&self, message: impl Into<String>) -> ExecError {
        ExecError::KernelFailed {
            team: self.team,
            message: message.into(),
        }
    }

    /// Outer loop: indices of `range` are dealt to teams round-robin, so team
    /// `t` executes `start + t, start + t + teams, ...`.
    pub fn team_loop(&self, range: Range<usize>, mut body: impl FnMut(usize)) {
        let mut i = range.start + self.team;
        while i < range.end {
            body(i);
            i += self.grid.teams;
        }
    }

    /// Inner 1D loop over the x thread extent.
    pub fn thread_loop(&self, n: usize, mut body: impl FnMut(usize)) {
        let tx = self.grid.threads[0];
        for t in 0..tx {
            let mut i = t;
            while i < n {
                body(i);
                i += tx;
            }
        }
    }

    /// Inner 2D loop; `(i, j)` is distributed over the (x, y) thread extents.
    pub fn thread_loop_2d(&self, n1: usize, n2: usize, mut body: impl FnMut(usize, usize)) {
        let [tx, ty, _] = self.grid.threads;
        for y in 0..ty {
            for x in 0..tx {
                let mut j = y;
                while j < n2 {
                    let mut i = x;
                    while i < n1 {
                        body(i, j);
                        i += tx;
                    }
                    j += ty;
                }
            }
        }
    }

    /// Inner 3D loop over the (x, y, z) thread extents.
    pub fn thread_loop_3d(
        &self,
        n1: usize,
        n2: usize,
        n3: usize,
        mut body: impl FnMut(usize, usize, usize),
    ) {
        let [tx, ty, tz] = self.grid.threads;
        for z in 0..tz {
            for y in 0..ty {
                for x in 0..tx {
                    let mut k = z;
                    while k < n3 {
                        let mut j = y;
                        while j < n2 {
                            let mut i = x;
                            while i < n1 {
                                body(i, j, k);
                                i += tx;
                            }
                            j += ty;
                        }
                        k += tz;
                    }
                }
            }
        }
    }
}

fn pool_for(workers: usize) -> Arc<rayon::ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let pools = POOLS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = pools.lock().unwrap_or_else(|e| e.into_inner());
    map.entry(workers)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("ale-exec-{i}"))
                    .build()
                    .expect("failed to build worker pool"),
            )
        })
        .clone()
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

fn run_team<F>(grid: &GridConfig, scratch: &TeamScratch, team: usize, kernel: F) -> Result<(), ExecError>
where
    F: FnOnce(&LaunchContext<'_>) -> Result<(), ExecError>,
{
    scratch.reset();
    let ctx = LaunchContext {
        team,
        grid,
        scratch,
        syncs: Cell::new(0),
    };
    match catch_unwind(AssertUnwindSafe(|| kernel(&ctx))) {
        Ok(r) => r,
        Err(payload) => Err(ExecError::KernelPanic {
            team,
            message: panic_message(payload),
        }),
    }
}

fn first_error(results: Vec<Result<(), ExecError>>) -> Result<(), ExecError> {
    results.into_iter().collect()
}

/// Launch `kernel` once per team.
pub fn launch<F>(place: ExecPlace, grid: GridConfig, kernel: F) -> Result<(), ExecError>
where
    F: Fn(&LaunchContext<'_>) -> Result<(), ExecError> + Sync,
{
    match place {
        ExecPlace::Sequential => {
            let scratch = TeamScratch::new(grid.scratch_bytes);
            for team in 0..grid.teams {
                run_team(&grid, &scratch, team, &kernel)?;
            }
            Ok(())
        }
        ExecPlace::Threaded(n) => {
            let pool = pool_for(n.get());
            let results: Vec<Result<(), ExecError>> = pool.install(|| {
                (0..grid.teams)
                    .into_par_iter()
                    .map_init(
                        || TeamScratch::new(grid.scratch_bytes),
                        |scratch, team| run_team(&grid, scratch, team, &kernel),
                    )
                    .collect()
            });
            first_error(results)
        }
    }
}

/// Launch with one exclusive output chunk per team: team `t` receives
/// `out[t * chunk..(t + 1) * chunk]`.
pub fn launch_chunked<T, F>(
    place: ExecPlace,
    grid: GridConfig,
    out: &mut [T],
    chunk: usize,
    kernel: F,
) -> Result<(), ExecError>
where
    T: Send,
    F: Fn(&LaunchContext<'_>, &mut [T]) -> Result<(), ExecError> + Sync,
{
    if out.len() != grid.teams * chunk {
        return Err(ExecError::OutputShape {
            len: out.len(),
            teams: grid.teams,
            chunk,
        });
    }
    if chunk == 0 {
        return launch(place, grid, |ctx| kernel(ctx, &mut []));
    }
    match place {
        ExecPlace::Sequential => {
            let scratch = TeamScratch::new(grid.scratch_bytes);
            for (team, piece) in out.chunks_mut(chunk).enumerate() {
                run_team(&grid, &scratch, team, |ctx: &LaunchContext<'_>| kernel(ctx, piece))?;
            }
            Ok(())
        }
        ExecPlace::Threaded(n) => {
            let pool = pool_for(n.get());
            let results: Vec<Result<(), ExecError>> = pool.install(|| {
                out.par_chunks_mut(chunk)
                    .enumerate()
                    .map_init(
                        || TeamScratch::new(grid.scratch_bytes),
                        |scratch, (team, piece)| {
                            run_team(&grid, scratch, team, |ctx: &LaunchContext<'_>| kernel(ctx, piece))
                        },
                    )
                    .collect()
            });
            first_error(results)
        }
    }
}

/// Flat data-parallel loop (the `forall` pattern); `body` must be race free.
pub fn forall<F>(place: ExecPlace, range: Range<usize>, body: F)
where
    F: Fn(usize) + Sync + Send,
{
    match place {
        ExecPlace::Sequential => range.for_each(body),
        ExecPlace::Threaded(n) => pool_for(n.get()).install(|| range.into_par_iter().for_each(body)),
    }
}

/// Element-wise map over mutable chunks of a slice.
pub fn for_each_chunk_mut<T, F>(place: ExecPlace, data: &mut [T], chunk: usize, body: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    match place {
        ExecPlace::Sequential => data.chunks_mut(chunk).enumerate().for_each(|(i, c)| body(i, c)),
        ExecPlace::Threaded(n) => pool_for(n.get())
            .install(|| data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| body(i, c))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Min,
    Max,
}

impl ReduceOp {
    pub fn identity(self) -> f64 {
        match self {
            ReduceOp::Sum => 0.0,
            ReduceOp::Min => f64::INFINITY,
            ReduceOp::Max => f64::NEG_INFINITY,
        }
    }

    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            ReduceOp::Sum => a + b,
            ReduceOp::Min => a.min(b),
            ReduceOp::Max => a.max(b),
        }
    }
}

/// Reduce `map(i)` over `range`.
///
/// The range is cut into fixed blocks of [`REDUCE_BLOCK`] indices whose
/// partials are combined in block order, so the result does not depend on
/// the backend or the worker count.
pub fn reduce<F>(place: ExecPlace, range: Range<usize>, op: ReduceOp, map: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    if range.is_empty() {
        return op.identity();
    }
    let start = range.start;
    let len = range.end - range.start;
    let nblocks = len.div_ceil(REDUCE_BLOCK);
    let block = |b: usize| {
        let lo = start + b * REDUCE_BLOCK;
        let hi = (lo + REDUCE_BLOCK).min(range.end);
        (lo..hi).fold(op.identity(), |acc, i| op.combine(acc, map(i)))
    };
    let partials: Vec<f64> = match place {
        ExecPlace::Sequential => (0..nblocks).map(block).collect(),
        ExecPlace::Threaded(n) => {
            pool_for(n.get()).install(|| (0..nblocks).into_par_iter().map(block).collect())
        }
    };
    partials.into_iter().fold(op.identity(), |acc, p| op.combine(acc, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn places() -> [ExecPlace; 3] {
        [
            ExecPlace::Sequential,
            ExecPlace::threaded(2).unwrap(),
            ExecPlace::threaded(8).unwrap(),
        ]
    }

    #[test]
    fn team_index_identity_mapping() {
        for place in places() {
            let mut out = vec![usize::MAX; 4];
            let grid = GridConfig::new(4, &[1]).unwrap();
            launch_chunked(place, grid, &mut out, 1, |ctx, o| {
                o[0] = ctx.team_index();
                Ok(())
            })
            .unwrap();
            assert_eq!(out, vec![0, 1, 2, 3], "{place}");
        }
    }

    #[test]
    fn zero_sized_grid_rejected() {
        assert_eq!(GridConfig::new(0, &[1]), Err(ExecError::ZeroGrid("teams")));
        assert_eq!(GridConfig::new(3, &[2, 0]), Err(ExecError::ZeroGrid("threads")));
        assert!(matches!(GridConfig::new(3, &[1, 1, 1, 1]), Err(ExecError::ThreadRank(4))));
        assert_eq!(ExecPlace::threaded(0), Err(ExecError::ZeroWorkers));
    }

    #[test]
    fn panics_carry_team_index() {
        for place in places() {
            let grid = GridConfig::new(6, &[1]).unwrap();
            let err = launch(place, grid, |ctx| {
                if ctx.team_index() == 3 {
                    panic!("boom");
                }
                Ok(())
            })
            .unwrap_err();
            assert_eq!(
                err,
                ExecError::KernelPanic {
                    team: 3,
                    message: "boom".into()
                }
            );
        }
    }

    #[test]
    fn team_loop_partitions_range() {
        let ne = 5;
        for factor in [1usize, 2] {
            let grid = GridConfig::new(ne, &[1]).unwrap();
            let mut seen = vec![Vec::new(); ne];
            launch_chunked(ExecPlace::Sequential, grid, &mut seen, 1, |ctx, s| {
                ctx.team_loop(0..factor * ne, |i| s[0].push(i));
                Ok(())
            })
            .unwrap();
            let mut all: Vec<usize> = Vec::new();
            for (t, s) in seen.iter().enumerate() {
                assert_eq!(s.len(), factor);
                if factor == 1 {
                    assert_eq!(s, &vec![t]);
                }
                all.extend(s);
            }
            all.sort_unstable();
            assert_eq!(all, (0..factor * ne).collect::<Vec<_>>());
        }
    }

    #[test]
    fn empty_ranges_never_invoke_body() {
        let grid = GridConfig::new(3, &[2, 2]).unwrap();
        let calls = AtomicUsize::new(0);
        launch(ExecPlace::Sequential, grid, |ctx| {
            ctx.team_loop(0..0, |_| {
                calls.fetch_add(1, Ordering::Relaxed);
            });
            ctx.thread_loop_2d(0, 4, |_, _| {
                calls.fetch_add(1, Ordering::Relaxed);
            });
            Ok(())
        })
        .unwrap();
        assert_eq!(calls.load(Ordering::Relaxed), 0);
    }

    #[test]
    fn thread_loop_2d_covers_each_pair_once() {
        for threads in [[1usize, 1], [2, 1], [2, 3], [4, 4]] {
            let grid = GridConfig::new(1, &threads).unwrap();
            let mut hits = [[0u32; 5]; 3];
            launch_chunked(ExecPlace::threaded(2).unwrap(), grid, std::slice::from_mut(&mut hits), 1, |ctx, h| {
                ctx.thread_loop_2d(3, 5, |i, j| h[0][i][j] += 1);
                Ok(())
            })
            .unwrap();
            assert!(hits.iter().flatten().all(|&c| c == 1), "{threads:?}");
        }
        let grid = GridConfig::new(1, &[1, 1]).unwrap();
        let calls = AtomicUsize::new(0);
        launch(ExecPlace::Sequential, grid, |ctx| {
            ctx.thread_loop_2d(1, 1, |_, _| {
                calls.fetch_add(1, Ordering::Relaxed);
            });
            Ok(())
        })
        .unwrap();
        assert_eq!(calls.into_inner(), 1);
    }

    #[test]
    fn thread_loop_3d_coverage_count() {
        let grid = GridConfig::new(4, &[2, 2, 2]).unwrap();
        let calls = AtomicUsize::new(0);
        launch(ExecPlace::threaded(3).unwrap(), grid, |ctx| {
            ctx.thread_loop_3d(3, 4, 5, |_, _, _| {
                calls.fetch_add(1, Ordering::Relaxed);
            });
            Ok(())
        })
        .unwrap();
        assert_eq!(calls.into_inner(), 4 * 60);
    }

    #[test]
    fn shared_tile_load_matches_source() {
        // A(d, q, z) with d fastest, loaded into a per-team D1D x Q1D tile.
        let (d1d, q1d, ne) = (3usize, 4usize, 7usize);
        let a: Vec<f64> = (0..d1d * q1d * ne).map(|i| i as f64 * 0.5 + 1.0).collect();
        for place in places() {
            let grid = GridConfig::new(ne, &[q1d, q1d]).unwrap();
            let mut tiles = vec![0.0; d1d * q1d * ne];
            launch_chunked(place, grid, &mut tiles, d1d * q1d, |ctx, tile| {
                let z = ctx.team_index();
                let s_a = ctx.scratch(d1d * q1d)?;
                ctx.thread_loop_2d(d1d, q1d, |d, q| s_a[d + d1d * q] = a[d + d1d * (q + q1d * z)]);
                ctx.team_sync();
                tile.copy_from_slice(s_a);
                Ok(())
            })
            .unwrap();
            assert_eq!(tiles, a);
        }
    }

    #[test]
    fn scratch_is_isolated_between_teams() {
        for place in places() {
            let grid = GridConfig::new(16, &[4]).unwrap();
            let mut observed = vec![0.0; 16];
            launch_chunked(place, grid, &mut observed, 1, |ctx, o| {
                let s = ctx.scratch(64)?;
                // A fresh team must never see another team's canary.
                let stale = s.iter().filter(|&&v| v != 0.0).count();
                s.fill(1000.0 + ctx.team_index() as f64);
                ctx.team_sync();
                o[0] = if stale == 0 && s.iter().all(|&v| v == 1000.0 + ctx.team_index() as f64) {
                    1.0
                } else {
                    -1.0
                };
                Ok(())
            })
            .unwrap();
            assert!(observed.iter().all(|&v| v == 1.0), "{place}");
        }
    }

    #[test]
    fn scratch_budget_overflow_is_an_error() {
        let grid = GridConfig::new(2, &[1]).unwrap().with_scratch_bytes(1024);
        let err = launch(ExecPlace::Sequential, grid, |ctx| {
            ctx.scratch(100)?;
            ctx.scratch(100)?;
            Ok(())
        })
        .unwrap_err();
        assert!(matches!(err, ExecError::ScratchOverflow { team: 0, capacity: 1024, .. }));
    }

    #[test]
    fn reductions_match_examples() {
        for place in places() {
            assert_eq!(reduce(place, 0..10, ReduceOp::Sum, |i| i as f64), 45.0);
            assert_eq!(reduce(place, 0..10, ReduceOp::Min, |i| i as f64 - 5.0), -5.0);
            assert_eq!(reduce(place, 0..10, ReduceOp::Max, |i| i as f64 - 5.0), 4.0);
            assert_eq!(reduce(place, 3..3, ReduceOp::Sum, |_| 1.0), 0.0);
            assert_eq!(reduce(place, 3..3, ReduceOp::Min, |_| 1.0), f64::INFINITY);
            assert_eq!(reduce(place, 3..3, ReduceOp::Max, |_| 1.0), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn large_sum_backend_agreement() {
        let seq = reduce(ExecPlace::Sequential, 0..1_000_000, ReduceOp::Sum, |_| 1.0);
        let thr = reduce(ExecPlace::threaded(8).unwrap(), 0..1_000_000, ReduceOp::Sum, |_| 1.0);
        assert!(((seq - thr) / seq).abs() <= 1e-9);
        let f = |i: usize| (i as f64 * 0.37).sin();
        let a = reduce(ExecPlace::Sequential, 0..100_003, ReduceOp::Sum, f);
        let b = reduce(ExecPlace::threaded(5).unwrap(), 0..100_003, ReduceOp::Sum, f);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn parse_place() {
        assert_eq!("seq".parse::<ExecPlace>().unwrap(), ExecPlace::Sequential);
        assert_eq!("threads:4".parse::<ExecPlace>().unwrap(), ExecPlace::threaded(4).unwrap());
        assert!("threads:0".parse::<ExecPlace>().is_err());
        assert!("gpu".parse::<ExecPlace>().is_err());
        assert_eq!(ExecPlace::threaded(3).unwrap().to_string(), "threads:3");
    }

    #[test]
    fn output_shape_checked() {
        let grid = GridConfig::new(3, &[1]).unwrap();
        let mut out = vec![0.0; 5];
        let err = launch_chunked(ExecPlace::Sequential, grid, &mut out, 2, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, ExecError::OutputShape { len: 5, teams: 3, chunk: 2 }));
    }
}
