//! The Fibonacci recurrence: fork fib(n-1), call fib(n-2), join, sum.
//! Maximal task-spawn rate with near-zero leaf work, so it measures pure
//! runtime overhead.

use crate::sched::Cx;
use crate::task::{Action, FrameHeader, Task};

pub struct Fib {
    n: u64,
    a: u64,
    b: u64,
    state: u8,
}

impl Fib {
    pub fn new(n: u64) -> Self {
        Fib {
            n,
            a: 0,
            b: 0,
            state: 0,
        }
    }
}

impl Task for Fib {
    type Output = u64;

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        loop {
            match self.state {
                0 => {
                    if self.n < 2 {
                        return cx.ret(frame, self.n);
                    }
                    self.state = 1;
                    return cx.fork(frame, Fib::new(self.n - 1), &mut self.a);
                }
                1 => {
                    self.state = 2;
                    return cx.call(frame, Fib::new(self.n - 2), &mut self.b);
                }
                2 => {
                    self.state = 3;
                    return Action::Join;
                }
                3 => return cx.ret(frame, self.a + self.b),
                _ => unreachable!(),
            }
        }
    }
}

/// Serial projection: the same recursion with the forks and joins deleted.
pub fn fib_serial(n: u64) -> u64 {
    if n < 2 {
        n
    } else {
        fib_serial(n - 1) + fib_serial(n - 2)
    }
}

/// Independent oracle for the recurrence's value.
pub fn fib_iterative(n: u64) -> u64 {
    let (mut a, mut b) = (0u64, 1u64);
    for _ in 0..n {
        let t = a + b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::Pool;

    #[test]
    fn base_cases() {
        let pool = Pool::new(1);
        assert_eq!(pool.run(Fib::new(0)), 0);
        assert_eq!(pool.run(Fib::new(1)), 1);
    }

    #[test]
    fn matches_oracles() {
        assert_eq!(fib_serial(10), 55);
        assert_eq!(fib_iterative(10), 55);
        let pool = Pool::new(2);
        assert_eq!(pool.run(Fib::new(10)), 55);
        assert_eq!(pool.run(Fib::new(20)), fib_iterative(20));
    }

    #[test]
    #[ignore = "full-scale input; takes minutes on a small machine"]
    fn full_scale_fib42() {
        let pool = Pool::new(Pool::default_threads());
        assert_eq!(pool.run(Fib::new(42)), fib_iterative(42));
    }
}
