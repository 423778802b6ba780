//! The task/frame model for continuation stealing.
//!
//! A task is a hand-written state machine implementing [`Task`]. Its frame
//! (a [`FrameHeader`] followed by the task struct) lives on a worker's
//! segmented stack; root frames live in a heap box instead. The worker
//! trampoline calls `step` repeatedly; every control transfer (fork, call,
//! join, return, migrate) is encoded as a returned [`Action`] rather than
//! a native call, so native stack depth is O(1) per scheduler iteration no
//! matter how deep the task chain grows.
//!
//! Join synchronization uses a split counter: `joins` starts at
//! [`JOIN_SENTINEL`]; each stranded child (one whose parent's continuation
//! was stolen out from under it) subtracts 1, and the frame's executor
//! reconciles at the join by subtracting `SENTINEL - steals`. Whoever
//! brings the counter to exactly zero is the last participant and resumes
//! the frame. Each theft of the continuation strands exactly one child, so
//! decrements and steals balance at every reset.

use std::cell::UnsafeCell;
use std::mem::MaybeUninit;
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, Condvar, Mutex};

use crate::sched::Cx;
use crate::stack::StackletHeader;

/// Initial value of the split join counter.
pub const JOIN_SENTINEL: u64 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Root,
    Call,
    Fork,
}

/// What a task asks the worker trampoline to do next. Tasks must advance
/// their own state *before* returning one of these, since `Descend` makes
/// the continuation stealable the moment the fork's push lands.
pub enum Action {
    /// Run the freshly created child (set up by `Cx::fork`/`Cx::call`).
    Descend(*mut FrameHeader),
    /// Suspend at a join; the worker consults the split counter.
    Join,
    /// The task is done and has written its result.
    Return,
    /// Suspend and resume on the given worker's thread.
    Migrate(usize),
}

/// A suspendable state-machine task.
///
/// `step` is re-entered after every suspension; keep resumption state in
/// the struct. Frames are deallocated without running destructors, so task
/// types must not own heap resources (use `Cx::frame_alloc` for scratch
/// memory instead).
pub trait Task {
    type Output;
    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action;
}

pub(crate) type StepFn = unsafe fn(*mut FrameHeader, &mut Cx<'_>) -> Action;
pub(crate) type CompleteFn = unsafe fn(*mut FrameHeader);

/// Per-task record at the head of every frame.
#[repr(C)]
pub struct FrameHeader {
    pub(crate) step: StepFn,
    /// Parent frame; for root frames this slot instead holds the
    /// monomorphized completion function (`kind` disambiguates).
    pub(crate) parent: *mut FrameHeader,
    /// Stacklet holding the frame's most recent live allocation (the frame
    /// itself until `frame_alloc` is used). This is where the frame's
    /// stack is reconstructed from when a worker adopts it at a join;
    /// null for a root frame that has not yet touched a stack.
    pub(crate) stacklet: *mut StackletHeader,
    /// Where the task's return value goes.
    pub(crate) result: *mut u8,
    pub(crate) joins: AtomicU64,
    pub(crate) steals: AtomicU64,
    /// Outstanding children; guards the fully-strict discipline.
    pub(crate) live_children: AtomicU64,
    pub(crate) kind: FrameKind,
    /// True between the first fork of a scope and the matching join;
    /// frame_alloc is forbidden while set.
    pub(crate) open_scope: bool,
    /// Size of the task's output type; lets `ret` check that the value
    /// written matches the slot the parent allocated.
    pub(crate) result_size: u16,
    /// Bytes to release at return (zero for heap-boxed roots).
    pub(crate) alloc_size: u32,
}

impl FrameHeader {
    pub(crate) fn new(
        step: StepFn,
        parent: *mut FrameHeader,
        stacklet: *mut StackletHeader,
        result: *mut u8,
        kind: FrameKind,
        result_size: u16,
        alloc_size: u32,
    ) -> Self {
        FrameHeader {
            step,
            parent,
            stacklet,
            result,
            joins: AtomicU64::new(JOIN_SENTINEL),
            steals: AtomicU64::new(0),
            live_children: AtomicU64::new(0),
            kind,
            open_scope: false,
            result_size,
            alloc_size,
        }
    }
}

/// In-stack layout of a non-root frame.
#[repr(C)]
pub(crate) struct TaskFrame<T> {
    pub(crate) header: FrameHeader,
    pub(crate) task: T,
}

pub(crate) unsafe fn step_thunk<T: Task>(
    frame: *mut FrameHeader,
    cx: &mut Cx<'_>,
) -> Action {
    let f = frame as *mut TaskFrame<T>;
    (*f).task.step(frame, cx)
}

/// One-shot result slot plus wakeup for an external `sync_wait` caller.
pub struct RootChannel<R> {
    slot: UnsafeCell<MaybeUninit<R>>,
    done: Mutex<bool>,
    cv: Condvar,
}

unsafe impl<R: Send> Send for RootChannel<R> {}
unsafe impl<R: Send> Sync for RootChannel<R> {}

impl<R> RootChannel<R> {
    fn new() -> Self {
        RootChannel {
            slot: UnsafeCell::new(MaybeUninit::uninit()),
            done: Mutex::new(false),
            cv: Condvar::new(),
        }
    }

    pub(crate) fn slot_ptr(&self) -> *mut u8 {
        self.slot.get() as *mut u8
    }

    fn signal(&self) {
        let mut done = self.done.lock().unwrap();
        *done = true;
        self.cv.notify_all();
    }

    /// Block until the root's final-awaitable signals; returns the result.
    pub(crate) fn wait(&self) -> R {
        let mut done = self.done.lock().unwrap();
        while !*done {
            done = self.cv.wait(done).unwrap();
        }
        // The result write happens-before the signal via the mutex.
        unsafe { (*self.slot.get()).assume_init_read() }
    }
}

/// Heap allocation backing a root task; prefix-compatible with the frames
/// the protocol manipulates through `*mut FrameHeader`.
#[repr(C)]
pub(crate) struct RootBox<T: Task> {
    pub(crate) header: FrameHeader,
    pub(crate) task: T,
    pub(crate) channel: Arc<RootChannel<T::Output>>,
}

unsafe fn root_complete<T: Task>(frame: *mut FrameHeader) {
    let boxed = Box::from_raw(frame as *mut RootBox<T>);
    let channel = Arc::clone(&boxed.channel);
    drop(boxed);
    channel.signal();
}

/// Build a root frame; returns the raw frame (owned by the runtime until
/// completion) and the channel the external caller waits on.
pub(crate) fn new_root<T: Task>(task: T) -> (*mut FrameHeader, Arc<RootChannel<T::Output>>) {
    let channel = Arc::new(RootChannel::new());
    let complete: CompleteFn = root_complete::<T>;
    let boxed = Box::new(RootBox {
        header: FrameHeader::new(
            step_thunk::<T>,
            complete as *mut FrameHeader,
            std::ptr::null_mut(),
            channel.slot_ptr(),
            FrameKind::Root,
            std::mem::size_of::<T::Output>() as u16,
            0,
        ),
        task,
        channel: Arc::clone(&channel),
    });
    (Box::into_raw(boxed) as *mut FrameHeader, channel)
}
