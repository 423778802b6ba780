//! Lock-free Chase-Lev work-stealing deque.
//!
//! Owner-side `push`/`pop` operate FILO at the bottom; `steal` removes FIFO
//! from the top and may be called from any thread concurrently with
//! everything else. Items are single machine words (continuation handles);
//! the deque never inspects them.
//!
//! The memory-ordering discipline follows the weak-memory formulation of
//! Le et al.: `steal` claims an element with a compare-exchange on `top`,
//! and a sequentially-consistent fence separates the owner's `bottom`
//! decrement from its `top` read in `pop`.
//!
//! The buffer grows by doubling. Superseded buffers are retired (kept
//! alive) until the deque is dropped, so a thief holding a stale buffer
//! pointer can still complete its read; the element it reads is identical
//! in the old and new buffers because growth copies the live range and the
//! owner never overwrites a slot a pending steal could claim.

use std::cell::UnsafeCell;
use std::sync::atomic::{fence, AtomicIsize, AtomicPtr, AtomicUsize, Ordering};

/// Initial buffer capacity in handles.
pub const INITIAL_DEQUE_CAPACITY: usize = 64;

/// Outcome of a [`WorkStealingDeque::steal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Steal {
    /// The deque was observed empty.
    Empty,
    /// A concurrent operation interfered; the caller may retry.
    Abort,
    /// The oldest unremoved handle.
    Success(usize),
}

struct Buffer {
    cells: Box<[AtomicUsize]>,
}

impl Buffer {
    fn new(cap: usize) -> Box<Buffer> {
        debug_assert!(cap.is_power_of_two());
        Box::new(Buffer {
            cells: (0..cap).map(|_| AtomicUsize::new(0)).collect(),
        })
    }

    #[inline]
    fn cell(&self, index: isize) -> &AtomicUsize {
        let mask = self.cells.len() - 1;
        &self.cells[index as usize & mask]
    }

    #[inline]
    fn capacity(&self) -> isize {
        self.cells.len() as isize
    }
}

pub struct WorkStealingDeque {
    top: AtomicIsize,
    bottom: AtomicIsize,
    buffer: AtomicPtr<Buffer>,
    /// Superseded buffers, mutated only by the owner during growth and
    /// freed on drop.
    retired: UnsafeCell<Vec<*mut Buffer>>,
}

// The deque is shared between the owner and thieves; the owner-only parts
// (`push`/`pop`/`retired`) are guarded by the ownership contract below.
unsafe impl Send for WorkStealingDeque {}
unsafe impl Sync for WorkStealingDeque {}

impl Default for WorkStealingDeque {
    fn default() -> Self {
        Self::new()
    }
}

impl WorkStealingDeque {
    pub fn new() -> Self {
        Self::with_capacity(INITIAL_DEQUE_CAPACITY)
    }

    pub fn with_capacity(cap: usize) -> Self {
        let cap = cap.next_power_of_two().max(2);
        WorkStealingDeque {
            top: AtomicIsize::new(0),
            bottom: AtomicIsize::new(0),
            buffer: AtomicPtr::new(Box::into_raw(Buffer::new(cap))),
            retired: UnsafeCell::new(Vec::new()),
        }
    }

    /// Number of items at a quiescent point; racy but never negative.
    pub fn len(&self) -> usize {
        let b = self.bottom.load(Ordering::Relaxed);
        let t = self.top.load(Ordering::Relaxed);
        (b - t).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn capacity(&self) -> usize {
        unsafe { (*self.buffer.load(Ordering::Relaxed)).capacity() as usize }
    }

    /// Owner-only: append a handle at the bottom. Grows (doubling) when
    /// full; growth preserves element order and pending steals.
    pub fn push(&self, item: usize) {
        let b = self.bottom.load(Ordering::Relaxed);
        let t = self.top.load(Ordering::Acquire);
        let mut buf = self.buffer.load(Ordering::Relaxed);
        unsafe {
            if b - t >= (*buf).capacity() {
                buf = self.grow(t, b, buf);
            }
            (*buf).cell(b).store(item, Ordering::Relaxed);
        }
        self.bottom.store(b + 1, Ordering::Release);
    }

    /// Owner-only: remove the most recently pushed unremoved handle.
    /// Linearizes against concurrent steals on the last element.
    pub fn pop(&self) -> Option<usize> {
        let b = self.bottom.load(Ordering::Relaxed) - 1;
        let buf = self.buffer.load(Ordering::Relaxed);
        self.bottom.store(b, Ordering::Relaxed);
        fence(Ordering::SeqCst);
        let t = self.top.load(Ordering::Relaxed);

        if t <= b {
            let item = unsafe { (*buf).cell(b).load(Ordering::Relaxed) };
            if t == b {
                // Last element: race resolution against thieves on `top`.
                let won = self
                    .top
                    .compare_exchange(t, t + 1, Ordering::SeqCst, Ordering::Relaxed)
                    .is_ok();
                self.bottom.store(b + 1, Ordering::Relaxed);
                if won {
                    Some(item)
                } else {
                    None
                }
            } else {
                Some(item)
            }
        } else {
            self.bottom.store(b + 1, Ordering::Relaxed);
            None
        }
    }

    /// Any-thread: remove the oldest unremoved handle.
    pub fn steal(&self) -> Steal {
        let t = self.top.load(Ordering::Acquire);
        fence(Ordering::SeqCst);
        let b = self.bottom.load(Ordering::Acquire);
        if t < b {
            let buf = self.buffer.load(Ordering::Acquire);
            let item = unsafe { (*buf).cell(t).load(Ordering::Relaxed) };
            if self
                .top
                .compare_exchange(t, t + 1, Ordering::SeqCst, Ordering::Relaxed)
                .is_err()
            {
                return Steal::Abort;
            }
            Steal::Success(item)
        } else {
            Steal::Empty
        }
    }

    /// Owner-only growth. The old buffer is retired, not freed: thieves
    /// may still be reading through a stale pointer.
    unsafe fn grow(&self, t: isize, b: isize, old: *mut Buffer) -> *mut Buffer {
        let new = Buffer::new((*old).capacity() as usize * 2);
        for i in t..b {
            let v = (*old).cell(i).load(Ordering::Relaxed);
            new.cell(i).store(v, Ordering::Relaxed);
        }
        let new = Box::into_raw(new);
        self.buffer.store(new, Ordering::Release);
        (*self.retired.get()).push(old);
        new
    }
}

impl Drop for WorkStealingDeque {
    fn drop(&mut self) {
        unsafe {
            drop(Box::from_raw(self.buffer.load(Ordering::Relaxed)));
            for p in (*self.retired.get()).drain(..) {
                drop(Box::from_raw(p));
            }
        }
    }
}
