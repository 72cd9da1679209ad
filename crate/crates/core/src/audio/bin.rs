//! Deferred buffer release.
//!
//! A playback driver invokes its completion callback while holding its own
//! device lock, so the callback must not call back into the driver to
//! release the buffer. The callback here only flips the buffer's state to
//! `Done` and pushes its handle onto a preallocated lock-free queue; a
//! dedicated cleanup worker pops handles and releases them outside the
//! driver's lock.
//!
//! Buffer slots are preallocated. A handle is `(slot, generation)` and the
//! slot's state word packs both, so stale handles from an earlier use of the
//! same slot are recognised and ignored.

use std::cell::Cell;
use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_queue::ArrayQueue;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::AudioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BufferHandle {
    pub slot: u32,
    pub generation: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum BufferState {
    Free = 0,
    Prepared = 1,
    Playing = 2,
    Done = 3,
    Released = 4,
}

impl BufferState {
    fn from_u8(v: u8) -> Self {
        match v {
            1 => BufferState::Prepared,
            2 => BufferState::Playing,
            3 => BufferState::Done,
            4 => BufferState::Released,
            _ => BufferState::Free,
        }
    }
}

fn pack(generation: u32, state: BufferState) -> u64 {
    (u64::from(generation) << 8) | state as u64
}

fn unpack(word: u64) -> (u32, BufferState) {
    ((word >> 8) as u32, BufferState::from_u8((word & 0xFF) as u8))
}

thread_local! {
    static IN_CALLBACK: Cell<bool> = const { Cell::new(false) };
}

/// True while the current thread is executing a playback-completion
/// callback.
pub fn in_callback_context() -> bool {
    IN_CALLBACK.with(Cell::get)
}

struct CallbackScope {
    prev: bool,
}

impl CallbackScope {
    fn enter() -> Self {
        Self {
            prev: IN_CALLBACK.with(|c| c.replace(true)),
        }
    }
}

impl Drop for CallbackScope {
    fn drop(&mut self) {
        IN_CALLBACK.with(|c| c.set(self.prev));
    }
}

/// Performs the real release (unprepare the header, free the memory).
pub trait BufferReleaser: Send + Sync {
    fn release(&self, handle: BufferHandle);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinStats {
    pub prepared: u64,
    pub completions: u64,
    pub spurious_callbacks: u64,
    pub released: u64,
    /// Release attempts refused because they came from callback context.
    pub releases_in_callback: u64,
    pub pending: usize,
}

pub struct GarbageBin {
    slots: Box<[AtomicU64]>,
    done: ArrayQueue<BufferHandle>,
    free: ArrayQueue<u32>,
    prepared: AtomicU64,
    completions: AtomicU64,
    spurious: AtomicU64,
    released: AtomicU64,
    releases_in_callback: AtomicU64,
}

impl GarbageBin {
    pub fn with_capacity(slots: usize) -> Self {
        let slots = slots.max(1);
        let free = ArrayQueue::new(slots);
        for i in 0..slots {
            let _ = free.push(i as u32);
        }
        Self {
            slots: (0..slots).map(|_| AtomicU64::new(pack(0, BufferState::Free))).collect(),
            done: ArrayQueue::new(slots),
            free,
            prepared: AtomicU64::new(0),
            completions: AtomicU64::new(0),
            spurious: AtomicU64::new(0),
            released: AtomicU64::new(0),
            releases_in_callback: AtomicU64::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn state(&self, h: BufferHandle) -> Option<BufferState> {
        let word = self.slots.get(h.slot as usize)?.load(Ordering::Acquire);
        let (generation, state) = unpack(word);
        (generation == h.generation).then_some(state)
    }

    /// Takes a free slot and marks it `Prepared`.
    pub fn prepare(&self) -> Result<BufferHandle, AudioError> {
        let slot = self.free.pop().ok_or(AudioError::PoolExhausted(self.slots.len()))?;
        let cell = &self.slots[slot as usize];
        let (generation, _) = unpack(cell.load(Ordering::Acquire));
        let generation = generation.wrapping_add(1);
        cell.store(pack(generation, BufferState::Prepared), Ordering::Release);
        self.prepared.fetch_add(1, Ordering::Relaxed);
        Ok(BufferHandle { slot, generation })
    }

    fn transition(&self, h: BufferHandle, from: BufferState, to: BufferState) -> Result<(), AudioError> {
        let cell = self.slots.get(h.slot as usize).ok_or(AudioError::WrongState(h, from))?;
        cell.compare_exchange(
            pack(h.generation, from),
            pack(h.generation, to),
            Ordering::AcqRel,
            Ordering::Acquire,
        )
        .map(|_| ())
        .map_err(|_| AudioError::WrongState(h, from))
    }

    pub fn mark_playing(&self, h: BufferHandle) -> Result<(), AudioError> {
        self.transition(h, BufferState::Prepared, BufferState::Playing)
    }

    /// Completion callback body: `Playing -> Done` and enqueue. Never
    /// releases, never blocks, never allocates. Repeated or stale
    /// completions are ignored with a warning.
    pub fn playback_complete_callback(&self, h: BufferHandle) {
        let _scope = CallbackScope::enter();
        if self.transition(h, BufferState::Playing, BufferState::Done).is_ok() {
            self.completions.fetch_add(1, Ordering::Relaxed);
            // capacity == slot count and a handle is queued at most once
            let pushed = self.done.push(h);
            debug_assert!(pushed.is_ok());
        } else {
            self.spurious.fetch_add(1, Ordering::Relaxed);
            log::warn!("ignoring completion for {h:?}: not playing");
        }
    }

    fn release_one(&self, h: BufferHandle, releaser: &dyn BufferReleaser) {
        if self.transition(h, BufferState::Done, BufferState::Released).is_err() {
            panic!("buffer {h:?} released twice or released before completion");
        }
        releaser.release(h);
        self.released.fetch_add(1, Ordering::Relaxed);
        let recycled = self.free.push(h.slot);
        debug_assert!(recycled.is_ok());
    }

    /// Cleanup-worker body: releases every completed buffer and returns how
    /// many. Refuses to run inside callback context.
    pub fn cleanup_worker_drain(&self, releaser: &dyn BufferReleaser) -> usize {
        if in_callback_context() {
            self.releases_in_callback.fetch_add(1, Ordering::Relaxed);
            log::error!("cleanup drain attempted from playback callback; refused");
            return 0;
        }
        let mut n = 0;
        while let Some(h) = self.done.pop() {
            self.release_one(h, releaser);
            n += 1;
        }
        n
    }

    pub fn pending(&self) -> usize {
        self.done.len()
    }

    pub fn stats(&self) -> BinStats {
        BinStats {
            prepared: self.prepared.load(Ordering::Relaxed),
            completions: self.completions.load(Ordering::Relaxed),
            spurious_callbacks: self.spurious.load(Ordering::Relaxed),
            released: self.released.load(Ordering::Relaxed),
            releases_in_callback: self.releases_in_callback.load(Ordering::Relaxed),
            pending: self.done.len(),
        }
    }
}

/// Software stand-in for a playback driver: it holds its device lock while
/// invoking completion callbacks, and its unprepare call needs the same lock.
pub struct SimulatedDevice {
    bin: Arc<GarbageBin>,
    device_lock: Mutex<()>,
    queued: Mutex<VecDeque<BufferHandle>>,
    max_callback_ns: AtomicU64,
    unprepared: AtomicU64,
    lock_timeouts: AtomicU64,
    lock_timeout: Duration,
}

impl SimulatedDevice {
    pub fn new(bin: Arc<GarbageBin>) -> Self {
        Self {
            bin,
            device_lock: Mutex::new(()),
            queued: Mutex::new(VecDeque::new()),
            max_callback_ns: AtomicU64::new(0),
            unprepared: AtomicU64::new(0),
            lock_timeouts: AtomicU64::new(0),
            lock_timeout: Duration::from_millis(100),
        }
    }

    pub fn bin(&self) -> &Arc<GarbageBin> {
        &self.bin
    }

    /// Queues a prepared buffer for playback.
    pub fn write(&self, h: BufferHandle) -> Result<(), AudioError> {
        self.bin.mark_playing(h)?;
        self.queued.lock().push_back(h);
        Ok(())
    }

    fn run_callbacks<F: FnMut(BufferHandle)>(&self, handles: &[BufferHandle], mut extra: F) {
        let _driver = self.device_lock.lock();
        let start = Instant::now();
        for &h in handles {
            self.bin.playback_complete_callback(h);
            let _scope = CallbackScope::enter();
            extra(h);
        }
        let ns = start.elapsed().as_nanos() as u64;
        self.max_callback_ns.fetch_max(ns, Ordering::Relaxed);
    }

    /// The oldest queued buffer finishes playing.
    pub fn complete_next(&self) -> Option<BufferHandle> {
        let h = self.queued.lock().pop_front()?;
        self.run_callbacks(&[h], |_| {});
        Some(h)
    }

    /// Stop/reset: every queued buffer is returned through the callback.
    pub fn reset(&self) -> usize {
        let handles: Vec<BufferHandle> = self.queued.lock().drain(..).collect();
        self.run_callbacks(&handles, |_| {});
        handles.len()
    }

    /// Reset with a callback that (wrongly) releases inline, as a driver
    /// client without a garbage bin would. Demonstrates the lock hazard.
    pub fn reset_releasing_inline(&self) -> usize {
        let handles: Vec<BufferHandle> = self.queued.lock().drain(..).collect();
        self.run_callbacks(&handles, |_| {
            self.bin.cleanup_worker_drain(self);
            // the unguarded variant: go straight to the driver
            self.unprepare_with_timeout();
        });
        handles.len()
    }

    fn unprepare_with_timeout(&self) -> bool {
        match self.device_lock.try_lock_for(self.lock_timeout) {
            Some(_g) => {
                self.unprepared.fetch_add(1, Ordering::Relaxed);
                true
            }
            None => {
                self.lock_timeouts.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }

    /// Longest single callback batch, i.e. longest time the playback context
    /// was held inside the driver.
    pub fn max_callback_stall(&self) -> Duration {
        Duration::from_nanos(self.max_callback_ns.load(Ordering::Relaxed))
    }

    pub fn unprepared(&self) -> u64 {
        self.unprepared.load(Ordering::Relaxed)
    }

    pub fn lock_timeouts(&self) -> u64 {
        self.lock_timeouts.load(Ordering::Relaxed)
    }

    pub fn queued(&self) -> usize {
        self.queued.lock().len()
    }
}

impl BufferReleaser for SimulatedDevice {
    fn release(&self, _handle: BufferHandle) {
        self.unprepare_with_timeout();
    }
}

/// Background thread that drains a [`GarbageBin`] on a fixed period.
pub struct CleanupWorker {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<u64>>,
}

impl CleanupWorker {
    pub fn spawn(bin: Arc<GarbageBin>, releaser: Arc<dyn BufferReleaser>, period: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let thread = std::thread::Builder::new()
            .name("buffer-cleanup".into())
            .spawn(move || {
                let mut total = 0u64;
                while !flag.load(Ordering::Acquire) {
                    total += bin.cleanup_worker_drain(releaser.as_ref()) as u64;
                    std::thread::park_timeout(period);
                }
                total + bin.cleanup_worker_drain(releaser.as_ref()) as u64
            })
            .expect("spawn cleanup worker");
        Self {
            stop,
            thread: Some(thread),
        }
    }

    pub fn wake(&self) {
        if let Some(t) = &self.thread {
            t.thread().unpark();
        }
    }

    /// Stops the worker after a final drain and returns the total released.
    pub fn shutdown(mut self) -> u64 {
        self.finish()
    }

    fn finish(&mut self) -> u64 {
        self.stop.store(true, Ordering::Release);
        match self.thread.take() {
            Some(t) => {
                t.thread().unpark();
                t.join().unwrap_or(0)
            }
            None => 0,
        }
    }
}

impl Drop for CleanupWorker {
    fn drop(&mut self) {
        self.finish();
    }
}
