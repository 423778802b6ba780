//! Scheduler-level tests: weighted victim selection, lazy sleep and
//! wakeup behavior, the greedy (no sleep with local work) invariant, and
//! explicit migration.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use forkline::rng::Rng64;
use forkline::sched::{Cx, Pool, PoolConfig, SchedulerKind};
use forkline::task::{Action, FrameHeader, Task};
use forkline::topo::{build_victim_table, select_victim, NumaTopology};

fn empirical_distribution(topology: &NumaTopology, from: usize, draws: usize) -> Vec<f64> {
    let table = build_victim_table(topology, from);
    let mut counts = vec![0usize; topology.workers()];
    let mut rng = Rng64::new(99);
    for _ in 0..draws {
        counts[select_victim(&table, &mut rng)] += 1;
    }
    counts.iter().map(|&c| c as f64 / draws as f64).collect()
}

#[test]
fn victim_distribution_flat_is_uniform() {
    let topo = NumaTopology::flat(4);
    let probs = empirical_distribution(&topo, 0, 1_000_000);
    assert_eq!(probs[0], 0.0, "never select yourself");
    for j in 1..4 {
        assert!((probs[j] - 1.0 / 3.0).abs() < 0.01, "worker {j}: {}", probs[j]);
    }
}

#[test]
fn victim_distribution_two_level_follows_weights() {
    // Two nodes of two cores: the sibling at distance 1 gets weight 1,
    // the two remote workers at distance 2 get 1/(2*4) each.
    let topo = NumaTopology::two_level(2, 2);
    let probs = empirical_distribution(&topo, 0, 1_000_000);
    let want = [0.0, 0.8, 0.1, 0.1];
    for j in 0..4 {
        assert!(
            (probs[j] - want[j]).abs() < 0.01,
            "worker {j}: got {} want {}",
            probs[j],
            want[j]
        );
    }
}

fn lazy_pool(threads: usize) -> Pool {
    Pool::with_config(PoolConfig {
        kind: SchedulerKind::Lazy,
        ..PoolConfig::new(threads)
    })
}

struct Leaf;

impl Task for Leaf {
    type Output = u64;

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        cx.ret(frame, 7u64)
    }
}

/// Small fork tree to give the lazy pool real load balancing to do.
struct Tree {
    depth: u32,
    left: u64,
    right: u64,
    state: u8,
}

impl Task for Tree {
    type Output = u64;

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        loop {
            match self.state {
                0 => {
                    if self.depth == 0 {
                        return cx.ret(frame, 1u64);
                    }
                    self.state = 1;
                    return cx.fork(frame, Tree::new(self.depth - 1), &mut self.left);
                }
                1 => {
                    self.state = 2;
                    return cx.call(frame, Tree::new(self.depth - 1), &mut self.right);
                }
                2 => {
                    self.state = 3;
                    return Action::Join;
                }
                3 => return cx.ret(frame, self.left + self.right),
                _ => unreachable!(),
            }
        }
    }
}

impl Tree {
    fn new(depth: u32) -> Self {
        Tree {
            depth,
            left: 0,
            right: 0,
            state: 0,
        }
    }
}

/// An idle lazy pool puts every worker to sleep, and a submission after
/// full quiescence still completes.
#[test]
fn lazy_pool_quiesces_and_wakes() {
    let pool = lazy_pool(3);
    assert_eq!(pool.run(Tree::new(6)), 64);
    let deadline = Instant::now() + Duration::from_secs(10);
    while (0..3).any(|w| !pool.debug_is_sleeping(w)) {
        assert!(Instant::now() < deadline, "workers never went to sleep");
        thread::sleep(Duration::from_millis(5));
    }
    assert_eq!(pool.run(Leaf), 7, "wakeup after quiescence failed");
    pool.shutdown();
}

/// Liveness: repeated submissions to a (possibly sleeping) lazy pool all
/// complete; no lost-wakeup deadlock over 10^4 cycles.
#[test]
fn lazy_submission_cycles_complete() {
    let pool = lazy_pool(2);
    for i in 0..10_000usize {
        let want = if i % 16 == 0 {
            // Occasionally give the pool time to go back to sleep so the
            // sleeping path is exercised, not just the awake path.
            thread::sleep(Duration::from_micros(200));
            8
        } else {
            8
        };
        assert_eq!(pool.run(Tree::new(3)), want);
    }
    pool.shutdown();
}

/// Greedy invariant: no worker stays asleep while it has local work.
/// Samples during a steal-heavy workload; a hit must persist for 50 ms
/// to count, filtering the benign window between a push and its wakeup.
#[test]
fn lazy_workers_do_not_sleep_on_local_work() {
    let pool = Arc::new(lazy_pool(3));
    let stop = Arc::new(AtomicBool::new(false));

    let monitor = {
        let pool = Arc::clone(&pool);
        let stop = Arc::clone(&stop);
        thread::spawn(move || {
            let mut violations = 0usize;
            while !stop.load(Ordering::Acquire) {
                for w in 0..3 {
                    if pool.debug_is_sleeping(w) && pool.debug_has_local_work(w) {
                        // Candidate: confirm it persists.
                        let t0 = Instant::now();
                        let mut persisted = true;
                        while t0.elapsed() < Duration::from_millis(50) {
                            if !(pool.debug_is_sleeping(w) && pool.debug_has_local_work(w)) {
                                persisted = false;
                                break;
                            }
                            thread::yield_now();
                        }
                        if persisted {
                            violations += 1;
                        }
                    }
                }
                thread::yield_now();
            }
            violations
        })
    };

    for _ in 0..30 {
        assert_eq!(pool.run(Tree::new(12)), 1 << 12);
        thread::sleep(Duration::from_millis(2));
    }
    stop.store(true, Ordering::Release);
    let violations = monitor.join().unwrap();
    assert_eq!(violations, 0, "sleep-with-local-work events observed");
}

/// Visits every worker via explicit migration and checks on arrival that
/// it is actually running there; includes a self-migration.
struct Tour {
    workers: usize,
    next: usize,
    expected: Option<usize>,
    extra_done: bool,
    visited: u64,
}

impl Task for Tour {
    type Output = u64;

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        if let Some(e) = self.expected.take() {
            assert_eq!(cx.worker_id(), e, "resumed on the wrong worker");
            self.visited += 1;
        }
        if self.next < self.workers {
            let target = self.next;
            self.next += 1;
            self.expected = Some(target);
            return Action::Migrate(target);
        }
        if !self.extra_done {
            // One extra hop back onto the current worker: self-migration
            // must be an in-place no-op that still resumes correctly.
            self.extra_done = true;
            self.expected = Some(cx.worker_id());
            return Action::Migrate(cx.worker_id());
        }
        cx.ret(frame, self.visited)
    }
}

#[test]
fn migration_identity_visits_every_worker() {
    for threads in [1, 2, 4] {
        let pool = Pool::new(threads);
        let visited = pool.run(Tour {
            workers: threads,
            next: 0,
            expected: None,
            extra_done: false,
            visited: 0,
        });
        assert_eq!(visited, threads as u64 + 1);
        pool.shutdown();
    }
}

/// A single task bouncing between workers 0 and 1 appends a strictly
/// increasing sequence: migration preserves program order.
struct PingPong {
    hops: usize,
    done: usize,
    expected: Option<usize>,
    log: *mut Vec<usize>,
}

unsafe impl Send for PingPong {}

impl Task for PingPong {
    type Output = u64;

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        if let Some(e) = self.expected.take() {
            assert_eq!(cx.worker_id(), e);
            unsafe { (*self.log).push(self.done) };
            self.done += 1;
        }
        if self.done < self.hops {
            let target = self.done % 2;
            self.expected = Some(target);
            return Action::Migrate(target);
        }
        cx.ret(frame, self.done as u64)
    }
}

#[test]
fn ping_pong_migrations_preserve_order() {
    let pool = Pool::new(2);
    let mut log: Vec<usize> = Vec::new();
    let hops = 1_000;
    let got = pool.run(PingPong {
        hops,
        done: 0,
        expected: None,
        log: &mut log,
    });
    assert_eq!(got, hops as u64);
    assert_eq!(log, (0..hops).collect::<Vec<_>>());
    pool.shutdown();
}
