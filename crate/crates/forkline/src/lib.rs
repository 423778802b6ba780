//! forkline: a continuation-stealing fork-join runtime.
//!
//! Task frames live on worker-owned geometric segmented stacks linked into
//! a cactus stack. Workers schedule by lock-free work stealing with
//! NUMA-weighted victim selection, in either a busy-spinning or lazily
//! sleeping loop. The crate also ships executable forms of the runtime's
//! footprint bounds and an instrumented benchmark harness (see the
//! `forkline` binary).

pub mod bench;
pub mod metrics;
pub mod rng;
pub mod sched;
pub mod stack;
pub mod task;
pub mod topo;
pub mod wsq;
