//! Divide-and-conquer matrix multiplication over f64.
//!
//! Each level forks the four quadrant products that land in disjoint
//! quadrants of C, joins, forks the four products into a stack-allocated
//! temporary, joins, and adds the temporary into C. The 32x32 base case
//! is a serial triple loop. Operands are views (pointer plus row stride)
//! into the caller's matrices.

use crate::sched::Cx;
use crate::task::{Action, FrameHeader, Task};

pub const BASE: usize = 32;

fn dangling() -> *mut () {
    std::ptr::NonNull::dangling().as_ptr()
}

/// C := A * B for an n-by-n block, serial triple loop.
unsafe fn multiply_base(
    a: *const f64,
    sa: usize,
    b: *const f64,
    sb: usize,
    c: *mut f64,
    sc: usize,
    n: usize,
) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += *a.add(i * sa + k) * *b.add(k * sb + j);
            }
            *c.add(i * sc + j) = acc;
        }
    }
}

/// C := A * B where all three are n-by-n views; n a power of two.
pub struct MatMul {
    a: *const f64,
    sa: usize,
    b: *const f64,
    sb: usize,
    c: *mut f64,
    sc: usize,
    n: usize,
    tmp: *mut f64,
    state: u8,
}

// Views point into buffers the scheduling caller keeps alive across the
// whole computation; the runtime serializes all access to each quadrant.
unsafe impl Send for MatMul {}

impl MatMul {
    pub fn new(a: *const f64, b: *const f64, c: *mut f64, n: usize) -> Self {
        assert!(n.is_power_of_two(), "matrix size must be a power of two");
        Self::view(a, n, b, n, c, n, n)
    }

    fn view(
        a: *const f64,
        sa: usize,
        b: *const f64,
        sb: usize,
        c: *mut f64,
        sc: usize,
        n: usize,
    ) -> Self {
        MatMul {
            a,
            sa,
            b,
            sb,
            c,
            sc,
            n,
            tmp: std::ptr::null_mut(),
            state: 0,
        }
    }

    /// Quadrant (i, j) of an n-by-n view.
    unsafe fn quad<T>(p: *const T, stride: usize, i: usize, j: usize, h: usize) -> *const T {
        p.add(i * h * stride + j * h)
    }

    /// Phase-1 product task: C_ij := A_i0 * B_0j.
    unsafe fn phase1(&self, i: usize, j: usize) -> MatMul {
        let h = self.n / 2;
        MatMul::view(
            Self::quad(self.a, self.sa, i, 0, h),
            self.sa,
            Self::quad(self.b, self.sb, 0, j, h),
            self.sb,
            Self::quad(self.c, self.sc, i, j, h) as *mut f64,
            self.sc,
            h,
        )
    }

    /// Phase-2 product task: T_ij := A_i1 * B_1j, T compact with stride n.
    unsafe fn phase2(&self, i: usize, j: usize) -> MatMul {
        let h = self.n / 2;
        MatMul::view(
            Self::quad(self.a, self.sa, i, 1, h),
            self.sa,
            Self::quad(self.b, self.sb, 1, j, h),
            self.sb,
            Self::quad(self.tmp, self.n, i, j, h) as *mut f64,
            self.n,
            h,
        )
    }
}

impl Task for MatMul {
    type Output = ();

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        unsafe {
            loop {
                match self.state {
                    0 => {
                        if self.n <= BASE {
                            multiply_base(self.a, self.sa, self.b, self.sb, self.c, self.sc, self.n);
                            return cx.ret(frame, ());
                        }
                        self.state = 1;
                        return cx.fork(frame, self.phase1(0, 0), dangling());
                    }
                    1 => {
                        self.state = 2;
                        return cx.fork(frame, self.phase1(0, 1), dangling());
                    }
                    2 => {
                        self.state = 3;
                        return cx.fork(frame, self.phase1(1, 0), dangling());
                    }
                    3 => {
                        self.state = 4;
                        return cx.call(frame, self.phase1(1, 1), dangling());
                    }
                    4 => {
                        self.state = 5;
                        return Action::Join;
                    }
                    5 => {
                        self.tmp =
                            cx.frame_alloc(frame, self.n * self.n * 8) as *mut f64;
                        self.state = 6;
                        return cx.fork(frame, self.phase2(0, 0), dangling());
                    }
                    6 => {
                        self.state = 7;
                        return cx.fork(frame, self.phase2(0, 1), dangling());
                    }
                    7 => {
                        self.state = 8;
                        return cx.fork(frame, self.phase2(1, 0), dangling());
                    }
                    8 => {
                        self.state = 9;
                        return cx.call(frame, self.phase2(1, 1), dangling());
                    }
                    9 => {
                        self.state = 10;
                        return Action::Join;
                    }
                    10 => {
                        for i in 0..self.n {
                            for j in 0..self.n {
                                *self.c.add(i * self.sc + j) += *self.tmp.add(i * self.n + j);
                            }
                        }
                        cx.frame_dealloc(frame, self.tmp as *mut u8, self.n * self.n * 8);
                        return cx.ret(frame, ());
                    }
                    _ => unreachable!(),
                }
            }
        }
    }
}

/// Serial projection: the same recursion, forks and joins removed.
pub fn matmul_serial(a: &[f64], b: &[f64], c: &mut [f64], n: usize) {
    assert!(n.is_power_of_two());
    unsafe { serial_rec(a.as_ptr(), n, b.as_ptr(), n, c.as_mut_ptr(), n, n) }
}

unsafe fn serial_rec(
    a: *const f64,
    sa: usize,
    b: *const f64,
    sb: usize,
    c: *mut f64,
    sc: usize,
    n: usize,
) {
    if n <= BASE {
        multiply_base(a, sa, b, sb, c, sc, n);
        return;
    }
    let h = n / 2;
    let q = |p: *const f64, s: usize, i: usize, j: usize| p.add(i * h * s + j * h);
    for i in 0..2 {
        for j in 0..2 {
            serial_rec(q(a, sa, i, 0), sa, q(b, sb, 0, j), sb, q(c, sc, i, j) as *mut f64, sc, h);
        }
    }
    let tmp = vec![0.0f64; n * n];
    for i in 0..2 {
        for j in 0..2 {
            serial_rec(
                q(a, sa, i, 1),
                sa,
                q(b, sb, 1, j),
                sb,
                q(tmp.as_ptr(), n, i, j) as *mut f64,
                n,
                h,
            );
        }
    }
    for i in 0..n {
        for j in 0..n {
            *c.add(i * sc + j) += tmp[i * n + j];
        }
    }
}

/// Independent value oracle: one flat triple loop.
pub fn matmul_naive(a: &[f64], b: &[f64], c: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[i * n + k] * b[k * n + j];
            }
            c[i * n + j] = acc;
        }
    }
}

/// Deterministic test matrix.
pub fn random_matrix(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = crate::rng::Rng64::new(seed);
    (0..n * n).map(|_| rng.next_f64() * 2.0 - 1.0).collect()
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::Pool;

    fn run_parallel(a: &[f64], b: &[f64], n: usize, threads: usize) -> Vec<f64> {
        let mut c = vec![0.0; n * n];
        let pool = Pool::new(threads);
        pool.run(MatMul::new(a.as_ptr(), b.as_ptr(), c.as_mut_ptr(), n));
        c
    }

    #[test]
    fn base_case_equals_triple_loop_exactly() {
        let n = 32;
        let a = random_matrix(n, 1);
        let b = random_matrix(n, 2);
        let mut want = vec![0.0; n * n];
        matmul_naive(&a, &b, &mut want, n);
        let got = run_parallel(&a, &b, n, 1);
        assert_eq!(got, want, "base case is the same triple loop");
    }

    #[test]
    fn identity_times_a_is_a() {
        let n = 128;
        let a = random_matrix(n, 3);
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        let got = run_parallel(&id, &a, n, 2);
        assert_eq!(got, a);
    }

    #[test]
    fn recursive_matches_naive_within_tolerance() {
        let n = 256;
        let a = random_matrix(n, 4);
        let b = random_matrix(n, 5);
        let mut want = vec![0.0; n * n];
        matmul_naive(&a, &b, &mut want, n);
        let got = run_parallel(&a, &b, n, 4);
        assert!(max_abs_diff(&got, &want) <= 1e-8 * n as f64);
        let mut serial = vec![0.0; n * n];
        matmul_serial(&a, &b, &mut serial, n);
        assert!(max_abs_diff(&serial, &want) <= 1e-8 * n as f64);
    }

    #[test]
    #[should_panic(expected = "power of two")]
    fn rejects_non_power_of_two() {
        MatMul::new(std::ptr::null(), std::ptr::null(), std::ptr::null_mut(), 48);
    }
}
