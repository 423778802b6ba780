//! Unbalanced tree search: count the nodes of a deterministic random
//! tree. Each node's identity is a 64-bit hash; child i of a node with
//! hash h has hash mix64(h xor (i+1)), so the tree shape is a pure
//! function of the seed and can be traversed identically by the serial
//! oracle and any parallel schedule.
//!
//! Shapes:
//! - geometric: every node above the depth cutoff draws its child count
//!   from a geometric distribution with mean b (constant expected
//!   branching, sampled as floor(ln(u) / ln(1 - p)) with p = 1/(b+1));
//! - binomial: the root has 2000 children; every other node has m
//!   children with probability q, else none (q*m < 1 keeps the expected
//!   size finite).

use crate::rng::mix64;
use crate::sched::Cx;
use crate::task::{Action, FrameHeader, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtsShape {
    Geometric,
    Binomial,
}

#[derive(Debug, Clone, Copy)]
pub struct UtsParams {
    pub shape: UtsShape,
    /// Geometric: depth cutoff.
    pub d: u32,
    /// Geometric: mean branching factor.
    pub b: f64,
    /// Binomial: child probability.
    pub q: f64,
    /// Binomial: children on success.
    pub m: u32,
    /// Tree seed.
    pub r: u64,
}

pub const BINOMIAL_ROOT_CHILDREN: u32 = 2000;

impl UtsParams {
    pub fn geometric(d: u32, b: f64, r: u64) -> Self {
        assert!(b > 0.0, "branching factor must be positive");
        UtsParams {
            shape: UtsShape::Geometric,
            d,
            b,
            q: 0.0,
            m: 0,
            r,
        }
    }

    pub fn binomial(q: f64, m: u32, r: u64) -> Self {
        assert!((0.0..=1.0).contains(&q), "probability out of range");
        assert!(q * (m as f64) < 1.0, "divergent parameters: q*m must be < 1");
        UtsParams {
            shape: UtsShape::Binomial,
            d: 0,
            b: 0.0,
            q,
            m,
            r,
        }
    }

    fn root_hash(&self) -> u64 {
        mix64(self.r)
    }

    /// Children of the node with `hash` at `depth`; deterministic.
    fn child_count(&self, hash: u64, depth: u32) -> u32 {
        // Unit draw in (0, 1), derived from the node hash alone.
        let u = ((hash >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        match self.shape {
            UtsShape::Geometric => {
                if depth >= self.d {
                    0
                } else {
                    let p = 1.0 / (self.b + 1.0);
                    (u.ln() / (1.0 - p).ln()) as u32
                }
            }
            UtsShape::Binomial => {
                if depth == 0 {
                    BINOMIAL_ROOT_CHILDREN
                } else if u < self.q {
                    self.m
                } else {
                    0
                }
            }
        }
    }
}

#[inline]
fn child_hash(parent: u64, i: u32) -> u64 {
    mix64(parent ^ (i as u64 + 1))
}

pub struct Uts {
    params: UtsParams,
    hash: u64,
    depth: u32,
    buf: *mut u64,
    children: u32,
    next: u32,
    state: u8,
}

// The buffer pointer targets this frame's own stack allocation.
unsafe impl Send for Uts {}

impl Uts {
    pub fn new(params: UtsParams) -> Self {
        Self::node(params, params.root_hash(), 0)
    }

    fn node(params: UtsParams, hash: u64, depth: u32) -> Self {
        Uts {
            params,
            hash,
            depth,
            buf: std::ptr::null_mut(),
            children: 0,
            next: 0,
            state: 0,
        }
    }
}

impl Task for Uts {
    type Output = u64;

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        loop {
            match self.state {
                0 => {
                    self.children = self.params.child_count(self.hash, self.depth);
                    if self.children == 0 {
                        return cx.ret(frame, 1u64);
                    }
                    self.buf =
                        cx.frame_alloc(frame, self.children as usize * 8) as *mut u64;
                    self.state = 1;
                }
                1 => {
                    if self.next < self.children {
                        let i = self.next;
                        self.next += 1;
                        let child = Uts::node(
                            self.params,
                            child_hash(self.hash, i),
                            self.depth + 1,
                        );
                        let out = unsafe { self.buf.add(i as usize) };
                        return cx.fork(frame, child, out);
                    }
                    self.state = 2;
                    return Action::Join;
                }
                2 => {
                    let mut total = 1u64;
                    for i in 0..self.children as usize {
                        total += unsafe { self.buf.add(i).read() };
                    }
                    cx.frame_dealloc(frame, self.buf as *mut u8, self.children as usize * 8);
                    return cx.ret(frame, total);
                }
                _ => unreachable!(),
            }
        }
    }
}

/// Serial oracle: iterative traversal (the tree can be deep).
pub fn uts_serial(params: UtsParams) -> u64 {
    let mut count = 0u64;
    let mut stack = vec![(params.root_hash(), 0u32)];
    while let Some((hash, depth)) = stack.pop() {
        count += 1;
        let k = params.child_count(hash, depth);
        for i in 0..k {
            stack.push((child_hash(hash, i), depth + 1));
        }
    }
    count
}
