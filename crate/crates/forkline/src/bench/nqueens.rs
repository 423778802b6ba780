//! N-queens solution counting by row-wise bitmask placement. Every
//! feasible column placement forks a subtree count; the per-child count
//! buffer lives on the frame's stack via the stack-allocation API.

use crate::sched::Cx;
use crate::task::{Action, FrameHeader, Task};

pub struct NQueens {
    full: u32,
    cols: u32,
    diag_l: u32,
    diag_r: u32,
    remaining: u32,
    buf: *mut u64,
    children: u32,
    next: u32,
    state: u8,
}

// The buffer pointer targets this frame's own stack allocation; children
// write disjoint slots and complete before the parent reads them.
unsafe impl Send for NQueens {}

impl NQueens {
    pub fn new(n: u32) -> Self {
        assert!((1..=16).contains(&n), "board size out of range");
        Self::node((1u32 << n) - 1, 0, 0, 0)
    }

    fn node(full: u32, cols: u32, diag_l: u32, diag_r: u32) -> Self {
        NQueens {
            full,
            cols,
            diag_l,
            diag_r,
            remaining: 0,
            buf: std::ptr::null_mut(),
            children: 0,
            next: 0,
            state: 0,
        }
    }
}

impl Task for NQueens {
    type Output = u64;

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        loop {
            match self.state {
                0 => {
                    if self.cols == self.full {
                        return cx.ret(frame, 1u64);
                    }
                    let avail = !(self.cols | self.diag_l | self.diag_r) & self.full;
                    if avail == 0 {
                        return cx.ret(frame, 0u64);
                    }
                    self.children = avail.count_ones();
                    self.buf =
                        cx.frame_alloc(frame, self.children as usize * 8) as *mut u64;
                    self.remaining = avail;
                    self.state = 1;
                }
                1 => {
                    // Spawn loop: one fork per feasible placement.
                    if self.remaining != 0 {
                        let bit = self.remaining & self.remaining.wrapping_neg();
                        self.remaining ^= bit;
                        let child = NQueens::node(
                            self.full,
                            self.cols | bit,
                            (self.diag_l | bit) << 1,
                            (self.diag_r | bit) >> 1,
                        );
                        let out = unsafe { self.buf.add(self.next as usize) };
                        self.next += 1;
                        return cx.fork(frame, child, out);
                    }
                    self.state = 2;
                    return Action::Join;
                }
                2 => {
                    let mut total = 0u64;
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

/// Serial backtracking oracle.
pub fn nqueens_serial(n: u32) -> u64 {
    fn rec(full: u32, cols: u32, dl: u32, dr: u32) -> u64 {
        if cols == full {
            return 1;
        }
        let mut avail = !(cols | dl | dr) & full;
        let mut count = 0;
        while avail != 0 {
            let bit = avail & avail.wrapping_neg();
            avail ^= bit;
            count += rec(full, cols | bit, (dl | bit) << 1, (dr | bit) >> 1);
        }
        count
    }
    rec((1u32 << n) - 1, 0, 0, 0)
}
