//! Adaptive trapezoidal integration of f(x) = x^2 by interval bisection.
//! The split tree is determined entirely by the tolerance, and the sum is
//! built with the same association in serial and parallel runs, so the
//! parallel result is bit-identical to the serial projection.

use crate::sched::Cx;
use crate::task::{Action, FrameHeader, Task};

#[inline]
fn f(x: f64) -> f64 {
    x * x
}

#[inline]
fn trapezoid(lo: f64, hi: f64) -> f64 {
    (hi - lo) * (f(lo) + f(hi)) / 2.0
}

pub struct Integrate {
    lo: f64,
    hi: f64,
    eps: f64,
    left: f64,
    right: f64,
    state: u8,
}

impl Integrate {
    pub fn new(lo: f64, hi: f64, eps: f64) -> Self {
        assert!(lo < hi, "invalid interval");
        assert!(eps > 0.0, "invalid tolerance");
        Integrate {
            lo,
            hi,
            eps,
            left: 0.0,
            right: 0.0,
            state: 0,
        }
    }
}

impl Task for Integrate {
    type Output = f64;

    fn step(&mut self, frame: *mut FrameHeader, cx: &mut Cx<'_>) -> Action {
        loop {
            match self.state {
                0 => {
                    let mid = (self.lo + self.hi) / 2.0;
                    let whole = trapezoid(self.lo, self.hi);
                    let halves = trapezoid(self.lo, mid) + trapezoid(mid, self.hi);
                    if (whole - halves).abs() <= self.eps {
                        return cx.ret(frame, halves);
                    }
                    self.state = 1;
                    return cx.fork(
                        frame,
                        Integrate::new(self.lo, mid, self.eps),
                        &mut self.left,
                    );
                }
                1 => {
                    let mid = (self.lo + self.hi) / 2.0;
                    self.state = 2;
                    return cx.call(
                        frame,
                        Integrate::new(mid, self.hi, self.eps),
                        &mut self.right,
                    );
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

/// Serial projection: identical split tree and summation order.
pub fn integrate_serial(lo: f64, hi: f64, eps: f64) -> f64 {
    let mid = (lo + hi) / 2.0;
    let whole = trapezoid(lo, hi);
    let halves = trapezoid(lo, mid) + trapezoid(mid, hi);
    if (whole - halves).abs() <= eps {
        halves
    } else {
        integrate_serial(lo, mid, eps) + integrate_serial(mid, hi, eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::Pool;

    #[test]
    fn unit_interval_matches_closed_form() {
        // Integral of x^2 over [0, 1] is 1/3.
        let got = integrate_serial(0.0, 1.0, 1e-9);
        assert!((got - 1.0 / 3.0).abs() < 1e-6, "{got}");
    }

    #[test]
    fn tiny_interval_is_an_immediate_base_case() {
        let lo = 0.0;
        let hi = 1e-12;
        assert_eq!(integrate_serial(lo, hi, 1e-9), trapezoid(lo, 0.5e-12) + trapezoid(0.5e-12, hi));
    }

    #[test]
    fn parallel_is_bit_identical_to_serial() {
        let serial = integrate_serial(0.0, 64.0, 1e-6);
        for p in [1, 2, 4] {
            let pool = Pool::new(p);
            let got = pool.run(Integrate::new(0.0, 64.0, 1e-6));
            assert_eq!(got.to_bits(), serial.to_bits());
        }
    }

    #[test]
    #[should_panic(expected = "invalid interval")]
    fn rejects_empty_interval() {
        Integrate::new(1.0, 1.0, 1e-9);
    }
}
