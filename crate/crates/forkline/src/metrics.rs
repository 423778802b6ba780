//! Executable forms of the runtime's performance and memory claims:
//! speedup/efficiency ratios, the worst-case memory bound for a P-worker
//! pool, and the power-law fit `MRSS ~ a + b * M1 * P^n` used to
//! characterize how peak frame memory scales with worker count.
//!
//! The fit is a 1-D grid search over the exponent with an exact linear
//! least-squares subproblem for (a, b) at each candidate: deterministic,
//! dependency-free, and 0.001 exponent resolution is far below the
//! uncertainty of any measured data.

/// Wall-time measurements for one benchmark configuration. `ts` is the
/// serial projection (forks/joins removed), `t1` a single-worker pool,
/// `tp` a P-worker pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRecord {
    pub ts: f64,
    pub t1: f64,
    pub tp: f64,
    pub p: usize,
}

/// Peak frame-memory measurements for one configuration: `m1` at one
/// worker, `mp` at `p` workers, with stacklet metadata constant `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemRecord {
    pub p: usize,
    pub m1: usize,
    pub mp: usize,
    pub c: usize,
}

impl MemRecord {
    /// Whether the measured peak respects the worst-case pool bound.
    pub fn within_bound(&self) -> bool {
        self.mp <= theorem2_bound(self.p, self.m1, self.c)
    }
}

/// Result of [`fit_power_law`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub n: f64,
    pub sse: f64,
    pub n_stderr: f64,
}

/// Parallel speedup `ts / tp`.
pub fn speedup(rec: &TimingRecord) -> f64 {
    assert!(rec.ts > 0.0 && rec.tp > 0.0, "non-positive timing");
    rec.ts / rec.tp
}

/// Parallel efficiency `speedup / p`.
pub fn efficiency(rec: &TimingRecord) -> f64 {
    assert!(rec.p >= 1);
    speedup(rec) / rec.p as f64
}

/// Worst-case peak frame memory of a `p`-worker pool whose single-worker
/// peak is `m1`, with stacklet metadata constant `c`:
/// `(2c + 3) * p * m1`. Deliberately loose.
pub fn theorem2_bound(p: usize, m1: usize, c: usize) -> usize {
    (2 * c + 3) * p * m1
}

/// Least-squares (a, b) for `y ~ a + b x`; returns (a, b, sse).
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let (a, b) = if det.abs() < 1e-9 * n * sxx.max(1.0) {
        // Degenerate regressor (constant x): flat fit absorbs the mean.
        (sy / n, 0.0)
    } else {
        let b = (n * sxy - sx * sy) / det;
        let a = (sy - b * sx) / n;
        (a, b)
    };
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (a + b * x);
            r * r
        })
        .sum();
    (a, b, sse)
}

/// Fit `mrss ~ a + b * m1 * p^n` over `(p, m1, mrss)` points by grid
/// search on `n` in [0, 2] (step 0.001) with an exact linear subproblem
/// per candidate. Requires at least 4 points spanning at least 3 distinct
/// `p` values. The exponent's standard error comes from the local
/// curvature of sse(n) at the minimum.
pub fn fit_power_law(points: &[(usize, usize, usize)]) -> PowerLawFit {
    assert!(points.len() >= 4, "need at least 4 points");
    let mut ps: Vec<usize> = points.iter().map(|&(p, _, _)| p).collect();
    ps.sort_unstable();
    ps.dedup();
    assert!(ps.len() >= 3, "need at least 3 distinct worker counts");

    let ys: Vec<f64> = points.iter().map(|&(_, _, m)| m as f64).collect();
    let sse_at = |n: f64| {
        let xs: Vec<f64> = points
            .iter()
            .map(|&(p, m1, _)| m1 as f64 * (p as f64).powf(n))
            .collect();
        linear_fit(&xs, &ys)
    };

    let step = 0.001;
    // When the data is (near-)flat the exponent is unidentifiable: any n
    // fits with b ~ 0, and noise would let large exponents win by chance.
    // A small multiplicative ridge on n^2 breaks those ties toward the
    // simplest exponent while being dwarfed by the sse gradient whenever
    // the exponent actually is identified.
    const RIDGE: f64 = 0.05;
    let mut best = (f64::INFINITY, f64::INFINITY, 0.0, 0.0, 0.0); // (score, sse, n, a, b)
    for i in 0..=2000 {
        let n = i as f64 * step;
        let (a, b, sse) = sse_at(n);
        let score = sse * (1.0 + RIDGE * n * n);
        if score < best.0 {
            best = (score, sse, n, a, b);
        }
    }
    let (_, sse, n, a, b) = best;

    // sigma^2 from residual variance (3 fitted parameters), curvature via
    // central finite difference; stderr = sqrt(2 sigma^2 / sse''(n)).
    let dof = points.len() as f64 - 3.0;
    let n_stderr = if dof > 0.0 {
        let sigma2 = sse / dof;
        let lo = sse_at((n - step).max(0.0)).2;
        let hi = sse_at((n + step).min(2.0)).2;
        let curvature = (lo - 2.0 * sse + hi) / (step * step);
        if curvature > 0.0 {
            (2.0 * sigma2 / curvature).sqrt()
        } else {
            f64::INFINITY
        }
    } else {
        f64::INFINITY
    };

    PowerLawFit {
        a,
        b,
        n,
        sse,
        n_stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ts: f64, tp: f64, p: usize) -> TimingRecord {
        TimingRecord { ts, t1: ts, tp, p }
    }

    #[test]
    fn speedup_is_the_serial_ratio() {
        assert_eq!(speedup(&rec(10.0, 2.0, 5)), 5.0);
        assert_eq!(speedup(&rec(3.0, 3.0, 1)), 1.0);
    }

    #[test]
    fn overhead_is_speedup_at_one_worker() {
        let r = TimingRecord {
            ts: 1.0,
            t1: 8.8,
            tp: 8.8,
            p: 1,
        };
        // At P = 1 the efficiency reads back the framework overhead.
        assert!((speedup(&r) - 1.0 / 8.8).abs() < 1e-12);
    }

    #[test]
    fn efficiency_divides_by_workers() {
        assert_eq!(efficiency(&rec(10.0, 2.0, 5)), 1.0);
        assert_eq!(efficiency(&rec(10.0, 2.0, 10)), 0.5);
    }

    #[test]
    #[should_panic(expected = "non-positive")]
    fn non_positive_timing_rejected() {
        speedup(&rec(0.0, 1.0, 1));
    }

    #[test]
    fn theorem2_examples() {
        assert_eq!(theorem2_bound(4, 1_000_000, 48), 99 * 4 * 1_000_000);
        assert_eq!(theorem2_bound(1, 7, 0), 21);
    }

    #[test]
    fn fit_recovers_linear_exponent() {
        let m1 = 1_000_000usize;
        let points: Vec<_> = [1usize, 2, 4, 8]
            .iter()
            .map(|&p| {
                let mrss = 1_000_000.0 + 0.2 * m1 as f64 * p as f64;
                (p, m1, mrss as usize)
            })
            .collect();
        let fit = fit_power_law(&points);
        assert!((fit.n - 1.0).abs() <= 0.05, "n = {}", fit.n);
        assert!((fit.b - 0.2).abs() < 0.01);
    }

    #[test]
    fn constant_memory_fits_flat() {
        let points = vec![(1, 500, 800), (2, 500, 800), (4, 500, 800), (8, 500, 800)];
        let fit = fit_power_law(&points);
        // Flat data: either n ~ 0 or the slope vanishes.
        assert!(fit.n <= 0.01 || fit.b.abs() < 1e-9, "{fit:?}");
        assert!(fit.sse < 1e-6);
    }

    #[test]
    fn flat_data_with_noise_stays_near_zero_exponent() {
        // Constant memory plus noise: without tie-breaking the grid could
        // pick an arbitrary exponent with a vanishing slope.
        let mut rng = crate::rng::Rng64::new(5);
        let m1 = 1_000_000usize;
        let points: Vec<_> = (1usize..=16)
            .flat_map(|p| (0..3).map(move |_| p))
            .map(|p| {
                let noise = 1.0 + 0.05 * (2.0 * rng.next_f64() - 1.0);
                (p, m1, (m1 as f64 * noise) as usize)
            })
            .collect();
        let fit = fit_power_law(&points);
        assert!(fit.n <= 0.15, "{fit:?}");
    }

    #[test]
    #[should_panic(expected = "3 distinct")]
    fn constant_p_rejected() {
        let points = vec![(4, 1, 1), (4, 1, 2), (4, 1, 3), (4, 1, 4)];
        fit_power_law(&points);
    }

    #[test]
    fn mem_record_bound_check() {
        let r = MemRecord {
            p: 4,
            m1: 1000,
            mp: 3500,
            c: 48,
        };
        assert!(r.within_bound());
    }
}
