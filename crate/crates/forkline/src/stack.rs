//! Geometric segmented stacks: the branches of the cactus stack.
//!
//! A `SegmentedStack` is a doubly-linked chain of stacklets. Each stacklet
//! is one heap allocation holding a fixed 48-byte header followed by a
//! bump-allocation region. Allocation is a pointer increment on the fast
//! path; when the top stacklet is full a successor of twice its capacity
//! (or the request size, whichever is greater) is appended. When the top
//! stacklet drains it is popped, and kept as a single cached successor iff
//! its capacity is at most twice its predecessor's. The cache guards
//! against hot-splitting: an alloc/dealloc cycle straddling a stacklet
//! boundary touches the heap only once.
//!
//! Stacks are single-owner and transferable. `into_raw`/`from_raw` convert
//! between the handle and a bare stacklet pointer so a stack can be parked
//! inside a suspended frame and reconstructed by whichever worker adopts
//! it; all chain state lives in the stacklet headers themselves. The
//! happens-before edge for a transfer is the caller's responsibility.

use std::alloc::{alloc, dealloc as heap_dealloc, handle_alloc_error, Layout};
use std::ptr::{self, NonNull};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

/// Per-stacklet metadata size in bytes, the `c` of the footprint bounds.
pub const STACKLET_METADATA_BYTES: usize = std::mem::size_of::<StackletHeader>();

/// Initial stacklet capacity in bytes.
pub const INITIAL_STACKLET_CAPACITY: usize = 4096;

/// Allocation alignment and size granularity.
pub const STACK_ALIGN: usize = 16;

/// Sentinel for an unowned stack.
pub const NO_OWNER: usize = usize::MAX;

#[repr(C, align(16))]
pub struct StackletHeader {
    prev: *mut StackletHeader,
    /// Successor in the chain. Beyond the top stacklet this is either null
    /// or the single cached empty stacklet.
    next: *mut StackletHeader,
    /// Bump cursor within [lo, hi].
    sp: *mut u8,
    hi: *mut u8,
    control: *mut StackControl,
    _pad: usize,
}

const _: () = assert!(std::mem::size_of::<StackletHeader>() == 48);
const _: () = assert!(STACKLET_METADATA_BYTES <= 64);

impl StackletHeader {
    #[inline]
    fn lo(this: *mut StackletHeader) -> *mut u8 {
        unsafe { (this as *mut u8).add(STACKLET_METADATA_BYTES) }
    }

    #[inline]
    fn capacity(this: *mut StackletHeader) -> usize {
        unsafe { (*this).hi as usize - Self::lo(this) as usize }
    }

    fn layout(capacity: usize) -> Layout {
        Layout::from_size_align(STACKLET_METADATA_BYTES + capacity, STACK_ALIGN).unwrap()
    }
}

/// Shared accounting for pool-wide peak frame memory. Stacklet allocation
/// and release report their footprint deltas here from any worker.
#[derive(Default)]
pub struct MemCounters {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl MemCounters {
    pub fn new() -> Self {
        Self::default()
    }

    fn add(&self, bytes: usize) {
        let now = self.current.fetch_add(bytes, Ordering::Relaxed) + bytes;
        let mut peak = self.peak.load(Ordering::Relaxed);
        while now > peak {
            match self.peak.compare_exchange_weak(
                peak,
                now,
                Ordering::Relaxed,
                Ordering::Relaxed,
            ) {
                Ok(_) => break,
                Err(p) => peak = p,
            }
        }
    }

    fn sub(&self, bytes: usize) {
        self.current.fetch_sub(bytes, Ordering::Relaxed);
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::Relaxed)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }
}

/// Per-stack bookkeeping, reachable from every stacklet header so a stack
/// handle can be rebuilt from any of its stacklets.
pub struct StackControl {
    live: usize,
    footprint: usize,
    peak_footprint: usize,
    heap_allocs: u64,
    owner: AtomicUsize,
    mem: Option<Arc<MemCounters>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackMetrics {
    /// Currently allocated user bytes, the `M` of the footprint bound.
    pub live_bytes: usize,
    /// Total heap bytes of all stacklets including metadata.
    pub footprint_bytes: usize,
    pub peak_footprint_bytes: usize,
}

/// One branch of the cactus stack. Exclusively owned; `&mut` enforces the
/// single-owner contract within safe code, and the `owner` field catches
/// double-adoption across raw-pointer transfers.
pub struct SegmentedStack {
    top: NonNull<StackletHeader>,
}

unsafe impl Send for SegmentedStack {}

#[inline]
fn align_up(bytes: usize) -> usize {
    bytes.max(1).div_ceil(STACK_ALIGN) * STACK_ALIGN
}

impl SegmentedStack {
    pub fn new() -> Self {
        Self::with_counters(None)
    }

    pub fn with_counters(mem: Option<Arc<MemCounters>>) -> Self {
        let control = Box::into_raw(Box::new(StackControl {
            live: 0,
            footprint: 0,
            peak_footprint: 0,
            heap_allocs: 0,
            owner: AtomicUsize::new(NO_OWNER),
            mem,
        }));
        let top = unsafe {
            Self::new_stacklet(control, INITIAL_STACKLET_CAPACITY, ptr::null_mut())
        };
        SegmentedStack {
            top: NonNull::new(top).unwrap(),
        }
    }

    unsafe fn new_stacklet(
        control: *mut StackControl,
        capacity: usize,
        prev: *mut StackletHeader,
    ) -> *mut StackletHeader {
        let layout = StackletHeader::layout(capacity);
        let base = alloc(layout) as *mut StackletHeader;
        if base.is_null() {
            handle_alloc_error(layout);
        }
        let lo = StackletHeader::lo(base);
        base.write(StackletHeader {
            prev,
            next: ptr::null_mut(),
            sp: lo,
            hi: lo.add(capacity),
            control,
            _pad: 0,
        });
        let c = &mut *control;
        c.footprint += STACKLET_METADATA_BYTES + capacity;
        c.peak_footprint = c.peak_footprint.max(c.footprint);
        c.heap_allocs += 1;
        if let Some(m) = &c.mem {
            m.add(STACKLET_METADATA_BYTES + capacity);
        }
        base
    }

    unsafe fn free_stacklet(control: *mut StackControl, s: *mut StackletHeader) {
        let capacity = StackletHeader::capacity(s);
        let c = &mut *control;
        c.footprint -= STACKLET_METADATA_BYTES + capacity;
        if let Some(m) = &c.mem {
            m.sub(STACKLET_METADATA_BYTES + capacity);
        }
        heap_dealloc(s as *mut u8, StackletHeader::layout(capacity));
    }

    #[inline]
    fn control(&self) -> *mut StackControl {
        unsafe { (*self.top.as_ptr()).control }
    }

    /// Bump-allocate `bytes` (rounded up to 16-byte alignment, zero rounds
    /// to 16). Appends a stacklet when the top one lacks space.
    pub fn alloc(&mut self, bytes: usize) -> *mut u8 {
        let size = align_up(bytes);
        unsafe {
            let top = self.top.as_ptr();
            let sp = (*top).sp;
            if (*top).hi as usize - sp as usize >= size {
                (*top).sp = sp.add(size);
                (*self.control()).live += size;
                return sp;
            }
            self.alloc_slow(size)
        }
    }

    #[cold]
    unsafe fn alloc_slow(&mut self, size: usize) -> *mut u8 {
        let top = self.top.as_ptr();
        let control = (*top).control;
        let cached = (*top).next;
        let next = if !cached.is_null() && StackletHeader::capacity(cached) >= size {
            cached
        } else {
            if !cached.is_null() {
                (*top).next = ptr::null_mut();
                Self::free_stacklet(control, cached);
            }
            let capacity = (2 * StackletHeader::capacity(top)).max(size);
            let s = Self::new_stacklet(control, capacity, top);
            (*top).next = s;
            s
        };
        self.top = NonNull::new_unchecked(next);
        let sp = (*next).sp;
        debug_assert_eq!(sp, StackletHeader::lo(next));
        (*next).sp = sp.add(size);
        (*control).live += size;
        sp
    }

    /// Release the most recent live allocation. Strict FILO; violations
    /// trip a debug assertion. Pops (and possibly caches) the top stacklet
    /// when it drains.
    pub fn dealloc(&mut self, addr: *mut u8, bytes: usize) {
        let size = align_up(bytes);
        unsafe {
            let top = self.top.as_ptr();
            debug_assert_eq!(
                addr as usize + size,
                (*top).sp as usize,
                "non-FILO stack dealloc"
            );
            (*top).sp = (*top).sp.sub(size);
            (*self.control()).live -= size;
            if (*top).sp == StackletHeader::lo(top) && !(*top).prev.is_null() {
                self.pop_stacklet();
            }
        }
    }

    #[cold]
    unsafe fn pop_stacklet(&mut self) {
        let top = self.top.as_ptr();
        let control = (*top).control;
        let prev = (*top).prev;
        // At most one cached stacklet per stack: anything beyond the
        // drained top goes back to the heap.
        let beyond = (*top).next;
        if !beyond.is_null() {
            (*top).next = ptr::null_mut();
            Self::free_stacklet(control, beyond);
        }
        if StackletHeader::capacity(top) <= 2 * StackletHeader::capacity(prev) {
            // Keep it cached for the hot-split guard.
            debug_assert_eq!((*prev).next, top);
        } else {
            (*prev).next = ptr::null_mut();
            Self::free_stacklet(control, top);
        }
        self.top = NonNull::new_unchecked(prev);
    }

    pub fn empty(&self) -> bool {
        unsafe {
            let top = self.top.as_ptr();
            (*top).prev.is_null() && (*top).sp == StackletHeader::lo(top)
        }
    }

    pub fn metrics(&self) -> StackMetrics {
        unsafe {
            let c = &*self.control();
            StackMetrics {
                live_bytes: c.live,
                footprint_bytes: c.footprint,
                peak_footprint_bytes: c.peak_footprint,
            }
        }
    }

    /// Heap allocations performed over the stack's lifetime (amortization
    /// diagnostics).
    pub fn heap_allocs(&self) -> u64 {
        unsafe { (*self.control()).heap_allocs }
    }

    /// Current top stacklet, for parking inside a frame header.
    pub fn top_raw(&self) -> *mut StackletHeader {
        self.top.as_ptr()
    }

    /// Whether `stacklet` belongs to this stack (shared control block).
    pub(crate) fn same_stack(&self, stacklet: *mut StackletHeader) -> bool {
        !stacklet.is_null() && unsafe { (*stacklet).control == (*self.top.as_ptr()).control }
    }

    /// Record `worker` as owner. Asserts the stack was unowned: no two
    /// workers may own a stack simultaneously.
    pub fn claim_owner(&self, worker: usize) {
        let prev = unsafe { (*self.control()).owner.swap(worker, Ordering::Relaxed) };
        assert_eq!(prev, NO_OWNER, "stack adopted while still owned");
    }

    pub fn yield_owner(&self) {
        unsafe { (*self.control()).owner.store(NO_OWNER, Ordering::Relaxed) };
    }

    /// Dissolve the handle without freeing anything. The chain is
    /// reconstructable from any pointer into it via [`Self::from_raw`].
    pub fn into_raw(self) -> *mut StackletHeader {
        let p = self.top.as_ptr();
        std::mem::forget(self);
        p
    }

    /// Rebuild a handle from a stacklet of a previously dissolved stack.
    ///
    /// # Safety
    /// `stacklet` must point into a live chain released by `into_raw`, the
    /// pointed-to stacklet must be the chain's top, and the caller must
    /// have established a happens-before edge covering all prior mutations.
    pub unsafe fn from_raw(stacklet: *mut StackletHeader) -> Self {
        SegmentedStack {
            top: NonNull::new(stacklet).expect("null stacklet"),
        }
    }
}

impl Default for SegmentedStack {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for SegmentedStack {
    fn drop(&mut self) {
        unsafe {
            let control = self.control();
            // Walk to the chain tail (top.next may hold the cached
            // stacklet), then free back to front.
            let mut s = self.top.as_ptr();
            while !(*s).next.is_null() {
                s = (*s).next;
            }
            while !s.is_null() {
                let prev = (*s).prev;
                Self::free_stacklet(control, s);
                s = prev;
            }
            drop(Box::from_raw(control));
        }
    }
}

/// Worst-case footprint of a segmented stack holding `m` live bytes with
/// metadata constant `c`: `(floor(log2(2m + 1)) + 1) * c + 4m`.
pub fn theorem1_bound(m: usize, c: usize) -> usize {
    assert!(m >= 1, "bound requires at least one live byte");
    let n = (2 * m + 1).ilog2() as usize;
    (n + 1) * c + 4 * m
}
