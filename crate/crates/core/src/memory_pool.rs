//! Two-arena memory manager.
//!
//! The `Permanent` arena holds long-lived data (mesh, quadrature data, state
//! vectors); every allocation is an individual aligned block. The
//! `TemporaryPool` arena serves short-lived work vectors out of large chunks
//! with first-fit placement. Releasing a temporary block does not merge it
//! with its neighbours; merging happens lazily when a request does not fit,
//! or explicitly through [`MemoryManager::coalesce`].
//!
//! All blocks are 64-byte aligned and zero-filled when handed out.

use std::alloc::{self, Layout};
use std::collections::{BTreeMap, HashMap};
use std::ops::{Deref, DerefMut};
use std::ptr::NonNull;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use thiserror::Error;

pub const ALIGNMENT: usize = 64;
/// Size of the first temporary-pool chunk.
pub const INITIAL_POOL_BYTES: usize = 4 << 20;

const SEQ_BITS: u32 = 40;
const SEQ_MASK: u64 = (1 << SEQ_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ArenaKind {
    Permanent,
    TemporaryPool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PoolStats {
    pub current_bytes: u64,
    pub peak_bytes: u64,
    pub pool_capacity_bytes: u64,
    pub allocation_count: u64,
    pub release_count: u64,
    pub growth_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferHandle {
    id: u64,
    size_bytes: usize,
    arena: ArenaKind,
}

impl BufferHandle {
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Requested size in bytes.
    pub fn size_bytes(&self) -> usize {
        self.size_bytes
    }

    pub fn arena(&self) -> ArenaKind {
        self.arena
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakReport {
    pub live_temporary: usize,
    pub live_temporary_bytes: u64,
    pub live_permanent: usize,
    pub live_permanent_bytes: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("allocation size must be positive")]
    ZeroSize,
    #[error("out of memory in {arena:?}: requested {requested} bytes (current {}, capacity {})", stats.current_bytes, stats.pool_capacity_bytes)]
    OutOfMemory {
        arena: ArenaKind,
        requested: usize,
        stats: PoolStats,
    },
    #[error("buffer {0} was already released")]
    DoubleRelease(u64),
    #[error("buffer {0} does not belong to this memory manager")]
    ForeignHandle(u64),
    #[error("buffer {0} is currently borrowed")]
    InUse(u64),
    #[error("{} temporary buffers ({} bytes) still live at shutdown", .0.live_temporary, .0.live_temporary_bytes)]
    Leak(LeakReport),
    #[error("footprint input `{0}` must be positive")]
    ZeroInput(&'static str),
    #[error("footprint computation overflows")]
    Overflow,
}

fn round_up(n: usize) -> usize {
    n.div_ceil(ALIGNMENT) * ALIGNMENT
}

struct RawBlock {
    ptr: NonNull<u8>,
    size: usize,
}

impl RawBlock {
    fn new(size: usize) -> Option<Self> {
        let layout = Layout::from_size_align(size, ALIGNMENT).ok()?;
        // SAFETY: size is non-zero (callers round up positive requests).
        let ptr = unsafe { alloc::alloc_zeroed(layout) };
        NonNull::new(ptr).map(|ptr| Self { ptr, size })
    }
}

impl Drop for RawBlock {
    fn drop(&mut self) {
        // SAFETY: allocated in `new` with the same layout.
        unsafe {
            alloc::dealloc(
                self.ptr.as_ptr(),
                Layout::from_size_align_unchecked(self.size, ALIGNMENT),
            )
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct FreeBlock {
    chunk: u64,
    offset: usize,
    size: usize,
}

enum Placement {
    // Held only to free the block on release.
    Own(#[allow(dead_code)] RawBlock),
    Pooled { chunk: u64, offset: usize },
}

struct Live {
    ptr: NonNull<u8>,
    size: usize,
    requested: usize,
    arena: ArenaKind,
    placement: Placement,
    borrowed: bool,
}

#[derive(Default)]
struct ArenaCounters {
    current: u64,
    peak: u64,
    allocs: u64,
    releases: u64,
}

struct Inner {
    tag: u64,
    next_seq: u64,
    chunks: BTreeMap<u64, RawBlock>,
    next_chunk: u64,
    free: Vec<FreeBlock>,
    live: HashMap<u64, Live>,
    permanent: ArenaCounters,
    temporary: ArenaCounters,
    growth_events: u64,
    max_pool_bytes: Option<usize>,
}

// SAFETY: the raw pointers refer to heap blocks owned by `Inner` itself and
// are only dereferenced through borrow guards that enforce exclusivity.
unsafe impl Send for Inner {}

impl Inner {
    fn capacity(&self) -> u64 {
        self.chunks.values().map(|c| c.size as u64).sum()
    }

    fn counters(&mut self, arena: ArenaKind) -> &mut ArenaCounters {
        match arena {
            ArenaKind::Permanent => &mut self.permanent,
            ArenaKind::TemporaryPool => &mut self.temporary,
        }
    }

    fn stats(&self, arena: ArenaKind) -> PoolStats {
        match arena {
            ArenaKind::Permanent => PoolStats {
                current_bytes: self.permanent.current,
                peak_bytes: self.permanent.peak,
                pool_capacity_bytes: self.permanent.current,
                allocation_count: self.permanent.allocs,
                release_count: self.permanent.releases,
                growth_events: 0,
            },
            ArenaKind::TemporaryPool => PoolStats {
                current_bytes: self.temporary.current,
                peak_bytes: self.temporary.peak,
                pool_capacity_bytes: self.capacity(),
                allocation_count: self.temporary.allocs,
                release_count: self.temporary.releases,
                growth_events: self.growth_events,
            },
        }
    }

    fn first_fit(&mut self, size: usize) -> Option<(u64, usize)> {
        let idx = self.free.iter().position(|b| b.size >= size)?;
        let b = self.free[idx];
        if b.size == size {
            self.free.remove(idx);
        } else {
            self.free[idx].offset += size;
            self.free[idx].size -= size;
        }
        Some((b.chunk, b.offset))
    }

    fn merge_free(&mut self) {
        self.free.sort_by_key(|b| (b.chunk, b.offset));
        let mut merged: Vec<FreeBlock> = Vec::with_capacity(self.free.len());
        for b in self.free.drain(..) {
            if let Some(last) = merged.last_mut() {
                if last.chunk == b.chunk && last.offset + last.size == b.offset {
                    last.size += b.size;
                    continue;
                }
            }
            merged.push(b);
        }
        self.free = merged;
    }

    fn grow(&mut self, size: usize) -> Result<(), MemoryError> {
        let capacity = self.capacity() as usize;
        let chunk_size = if self.chunks.is_empty() {
            INITIAL_POOL_BYTES.max(size)
        } else {
            INITIAL_POOL_BYTES.max(2 * size).max(capacity)
        };
        let oom = |inner: &Inner| MemoryError::OutOfMemory {
            arena: ArenaKind::TemporaryPool,
            requested: size,
            stats: inner.stats(ArenaKind::TemporaryPool),
        };
        let chunk_size = match self.max_pool_bytes {
            Some(limit) if capacity + chunk_size > limit => {
                if capacity + size > limit {
                    return Err(oom(self));
                }
                limit - capacity
            }
            _ => chunk_size,
        };
        let block = RawBlock::new(chunk_size).ok_or_else(|| oom(self))?;
        let id = self.next_chunk;
        self.next_chunk += 1;
        self.chunks.insert(id, block);
        self.free.push(FreeBlock {
            chunk: id,
            offset: 0,
            size: chunk_size,
        });
        self.growth_events += 1;
        Ok(())
    }

    fn allocate(&mut self, arena: ArenaKind, bytes: usize) -> Result<BufferHandle, MemoryError> {
        if bytes == 0 {
            return Err(MemoryError::ZeroSize);
        }
        let size = round_up(bytes);
        let (ptr, placement) = match arena {
            ArenaKind::Permanent => {
                let block = RawBlock::new(size).ok_or(MemoryError::OutOfMemory {
                    arena,
                    requested: bytes,
                    stats: self.stats(arena),
                })?;
                (block.ptr, Placement::Own(block))
            }
            ArenaKind::TemporaryPool => {
                let spot = match self.first_fit(size) {
                    Some(s) => s,
                    None => {
                        self.merge_free();
                        match self.first_fit(size) {
                            Some(s) => s,
                            None => {
                                self.grow(size)?;
                                self.first_fit(size).expect("fresh chunk fits the request")
                            }
                        }
                    }
                };
                let base = self.chunks[&spot.0].ptr;
                // SAFETY: offset + size lies within the chunk.
                let ptr = unsafe {
                    let p = base.as_ptr().add(spot.1);
                    std::ptr::write_bytes(p, 0, size);
                    NonNull::new_unchecked(p)
                };
                (
                    ptr,
                    Placement::Pooled {
                        chunk: spot.0,
                        offset: spot.1,
                    },
                )
            }
        };
        let seq = self.next_seq;
        self.next_seq += 1;
        let id = (self.tag << SEQ_BITS) | seq;
        self.live.insert(
            id,
            Live {
                ptr,
                size,
                requested: bytes,
                arena,
                placement,
                borrowed: false,
            },
        );
        let c = self.counters(arena);
        c.current += size as u64;
        c.peak = c.peak.max(c.current);
        c.allocs += 1;
        Ok(BufferHandle {
            id,
            size_bytes: bytes,
            arena,
        })
    }

    fn classify_missing(&self, id: u64) -> MemoryError {
        if id >> SEQ_BITS == self.tag && (id & SEQ_MASK) < self.next_seq {
            MemoryError::DoubleRelease(id)
        } else {
            MemoryError::ForeignHandle(id)
        }
    }

    fn release(&mut self, handle: BufferHandle, force: bool) -> Result<(), MemoryError> {
        let live = match self.live.get(&handle.id) {
            Some(l) => l,
            None => return Err(self.classify_missing(handle.id)),
        };
        if live.arena != handle.arena {
            return Err(MemoryError::ForeignHandle(handle.id));
        }
        if live.borrowed && !force {
            return Err(MemoryError::InUse(handle.id));
        }
        let live = self.live.remove(&handle.id).expect("checked above");
        if let Placement::Pooled { chunk, offset } = live.placement {
            self.free.push(FreeBlock {
                chunk,
                offset,
                size: live.size,
            });
        }
        let c = self.counters(live.arena);
        c.current -= live.size as u64;
        c.releases += 1;
        Ok(())
    }
}

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

/// Thread-safe owner of both arenas.
pub struct MemoryManager {
    inner: Mutex<Inner>,
}

impl Default for MemoryManager {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for MemoryManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryManager")
            .field("temporary", &self.stats(ArenaKind::TemporaryPool))
            .field("permanent", &self.stats(ArenaKind::Permanent))
            .finish()
    }
}

impl MemoryManager {
    pub fn new() -> Self {
        Self::build(None)
    }

    /// Manager whose temporary pool may never exceed `bytes` of capacity.
    pub fn with_pool_limit(bytes: usize) -> Self {
        Self::build(Some(bytes))
    }

    fn build(max_pool_bytes: Option<usize>) -> Self {
        Self {
            inner: Mutex::new(Inner {
                tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed) & ((1 << 23) - 1),
                next_seq: 0,
                chunks: BTreeMap::new(),
                next_chunk: 0,
                free: Vec::new(),
                live: HashMap::new(),
                permanent: ArenaCounters::default(),
                temporary: ArenaCounters::default(),
                growth_events: 0,
                max_pool_bytes,
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn allocate(&self, arena: ArenaKind, bytes: usize) -> Result<BufferHandle, MemoryError> {
        self.lock().allocate(arena, bytes)
    }

    pub fn release(&self, handle: BufferHandle) -> Result<(), MemoryError> {
        self.lock().release(handle, false)
    }

    pub fn stats(&self, arena: ArenaKind) -> PoolStats {
        self.lock().stats(arena)
    }

    /// Merge adjacent free blocks and return fully free chunks to the system.
    /// Returns the number of bytes handed back.
    pub fn coalesce(&self) -> u64 {
        let mut inner = self.lock();
        inner.merge_free();
        let whole: Vec<(usize, u64)> = inner
            .free
            .iter()
            .enumerate()
            .filter(|(_, b)| b.offset == 0 && inner.chunks.get(&b.chunk).map(|c| c.size) == Some(b.size))
            .map(|(i, b)| (i, b.chunk))
            .collect();
        let mut returned = 0;
        for &(i, chunk) in whole.iter().rev() {
            inner.free.remove(i);
            if let Some(c) = inner.chunks.remove(&chunk) {
                returned += c.size as u64;
            }
        }
        returned
    }

    /// Exclusive view of a live buffer.
    pub fn borrow(&self, handle: &BufferHandle) -> Result<BufferGuard<'_>, MemoryError> {
        let mut inner = self.lock();
        let missing = inner.classify_missing(handle.id);
        let live = inner.live.get_mut(&handle.id).ok_or(missing)?;
        if live.borrowed {
            return Err(MemoryError::InUse(handle.id));
        }
        live.borrowed = true;
        Ok(BufferGuard {
            manager: self,
            id: handle.id,
            ptr: live.ptr,
            len: live.requested,
        })
    }

    /// RAII allocation of `len` zeroed f64 values.
    pub fn take(self: &Arc<Self>, arena: ArenaKind, len: usize) -> Result<PoolVec, MemoryError> {
        let bytes = (len.max(1)) * std::mem::size_of::<f64>();
        let mut inner = self.lock();
        let handle = inner.allocate(arena, bytes)?;
        let live = inner.live.get_mut(&handle.id).expect("just allocated");
        live.borrowed = true;
        let ptr = live.ptr.cast::<f64>();
        drop(inner);
        Ok(PoolVec {
            manager: Arc::clone(self),
            handle,
            ptr,
            len,
        })
    }

    /// Temporary vector initialised from a slice.
    pub fn temp_from(self: &Arc<Self>, data: &[f64]) -> Result<PoolVec, MemoryError> {
        let mut v = self.take(ArenaKind::TemporaryPool, data.len())?;
        v.copy_from_slice(data);
        Ok(v)
    }

    pub fn temp(self: &Arc<Self>, len: usize) -> Result<PoolVec, MemoryError> {
        self.take(ArenaKind::TemporaryPool, len)
    }

    /// Tear-down check. Live temporaries are an error; live permanent
    /// buffers are reported (they are freed when the manager drops).
    pub fn shutdown(&self) -> Result<LeakReport, MemoryError> {
        let inner = self.lock();
        let mut report = LeakReport {
            live_temporary: 0,
            live_temporary_bytes: 0,
            live_permanent: 0,
            live_permanent_bytes: 0,
        };
        for l in inner.live.values() {
            match l.arena {
                ArenaKind::TemporaryPool => {
                    report.live_temporary += 1;
                    report.live_temporary_bytes += l.size as u64;
                }
                ArenaKind::Permanent => {
                    report.live_permanent += 1;
                    report.live_permanent_bytes += l.size as u64;
                }
            }
        }
        if report.live_temporary > 0 {
            Err(MemoryError::Leak(report))
        } else {
            Ok(report)
        }
    }

    fn unborrow(&self, id: u64) {
        if let Some(l) = self.lock().live.get_mut(&id) {
            l.borrowed = false;
        }
    }
}

/// Exclusive access to the bytes of one buffer.
pub struct BufferGuard<'a> {
    manager: &'a MemoryManager,
    id: u64,
    ptr: NonNull<u8>,
    len: usize,
}

impl BufferGuard<'_> {
    pub fn bytes(&self) -> &[u8] {
        // SAFETY: the buffer is live and exclusively borrowed by this guard.
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr(), self.len) }
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        // SAFETY: as above.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr(), self.len) }
    }

    /// View as f64 values (the block is 64-byte aligned).
    pub fn as_f64_mut(&mut self) -> &mut [f64] {
        // SAFETY: aligned, live, exclusive; trailing bytes are ignored.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr().cast(), self.len / 8) }
    }
}

impl Drop for BufferGuard<'_> {
    fn drop(&mut self) {
        self.manager.unborrow(self.id);
    }
}

/// Owned f64 buffer that returns itself to its arena on drop.
pub struct PoolVec {
    manager: Arc<MemoryManager>,
    handle: BufferHandle,
    ptr: NonNull<f64>,
    len: usize,
}

// SAFETY: a PoolVec is the unique owner of its block.
unsafe impl Send for PoolVec {}
unsafe impl Sync for PoolVec {}

impl PoolVec {
    pub fn handle(&self) -> BufferHandle {
        self.handle
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.deref().to_vec()
    }
}

impl Deref for PoolVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        // SAFETY: live block of at least len f64 values, owned by self.
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr(), self.len) }
    }
}

impl DerefMut for PoolVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        // SAFETY: as above, with exclusive access through &mut self.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr(), self.len) }
    }
}

impl std::fmt::Debug for PoolVec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoolVec")
            .field("arena", &self.handle.arena)
            .field("len", &self.len)
            .finish()
    }
}

impl Drop for PoolVec {
    fn drop(&mut self) {
        let _ = self.manager.lock().release(self.handle, true);
    }
}

/// Bytes of thread-local scratch needed by a kernel launch:
/// `teams × threads_per_team × bytes_per_thread`.
pub fn thread_local_footprint(
    teams: u64,
    threads_per_team: u64,
    bytes_per_thread: u64,
) -> Result<u64, MemoryError> {
    if teams == 0 {
        return Err(MemoryError::ZeroInput("teams"));
    }
    if threads_per_team == 0 {
        return Err(MemoryError::ZeroInput("threads_per_team"));
    }
    if bytes_per_thread == 0 {
        return Err(MemoryError::ZeroInput("bytes_per_thread"));
    }
    teams
        .checked_mul(threads_per_team)
        .and_then(|v| v.checked_mul(bytes_per_thread))
        .ok_or(MemoryError::Overflow)
}
