//! NUMA topology model and weighted victim selection.
//!
//! A topology is a rooted tree with workers at its leaves. The distance
//! between two workers is the maximum of the edge counts from each leaf to
//! their lowest common ancestor; workers on the same NUMA node are
//! "closer" and make better steal victims. Victim i steals from j with
//! probability proportional to `1 / (n_ij * r_ij^2)`, where `r_ij` is the
//! distance and `n_ij` the number of workers at that distance, so each
//! distance class as a whole receives weight `1 / r^2`.
//!
//! Topologies are synthetic and pluggable; nothing below depends on real
//! hardware discovery.

use crate::rng::Rng64;

#[derive(Debug, Clone)]
pub struct NumaTopology {
    /// Per-leaf path of internal-node ids from the root (exclusive) down
    /// to the leaf (inclusive).
    paths: Vec<Vec<usize>>,
    /// NUMA-group id per leaf; the partition used by the lazy scheduler.
    node_of: Vec<usize>,
}

impl NumaTopology {
    /// All workers equidistant, one NUMA group: a single-socket machine.
    pub fn flat(workers: usize) -> Self {
        assert!(workers >= 1);
        NumaTopology {
            paths: (0..workers).map(|i| vec![i]).collect(),
            node_of: vec![0; workers],
        }
    }

    /// `nodes` NUMA nodes of `cores` workers each; distance 1 within a
    /// node, 2 across nodes.
    pub fn two_level(nodes: usize, cores: usize) -> Self {
        assert!(nodes >= 1 && cores >= 1);
        let mut paths = Vec::with_capacity(nodes * cores);
        let mut node_of = Vec::with_capacity(nodes * cores);
        for n in 0..nodes {
            for c in 0..cores {
                paths.push(vec![n, nodes + n * cores + c]);
                node_of.push(n);
            }
        }
        NumaTopology { paths, node_of }
    }

    /// Detected shape of the current machine. Without OS-level NUMA
    /// discovery this is flat over the available hardware threads.
    pub fn detect() -> Self {
        let n = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        Self::flat(n)
    }

    pub fn workers(&self) -> usize {
        self.paths.len()
    }

    pub fn group_of(&self, worker: usize) -> usize {
        self.node_of[worker]
    }

    pub fn groups(&self) -> usize {
        self.node_of.iter().copied().max().unwrap_or(0) + 1
    }

    /// Max edge count from either leaf to the lowest common ancestor.
    pub fn distance(&self, i: usize, j: usize) -> usize {
        if i == j {
            return 0;
        }
        let (a, b) = (&self.paths[i], &self.paths[j]);
        let common = a.iter().zip(b.iter()).take_while(|(x, y)| x == y).count();
        (a.len() - common).max(b.len() - common)
    }
}

/// Cumulative steal-probability table for one worker.
#[derive(Debug, Clone, Default)]
pub struct VictimTable {
    victims: Vec<usize>,
    /// cdf[k] = P(victim index <= k); last entry is 1.
    cdf: Vec<f64>,
}

impl VictimTable {
    pub fn is_empty(&self) -> bool {
        self.victims.is_empty()
    }

    /// Normalized probability of stealing from `j`, for diagnostics.
    pub fn probability_of(&self, j: usize) -> f64 {
        match self.victims.iter().position(|&v| v == j) {
            Some(k) if k == 0 => self.cdf[0],
            Some(k) => self.cdf[k] - self.cdf[k - 1],
            None => 0.0,
        }
    }
}

/// Victim probabilities for worker `i`: p_j proportional to
/// `1 / (n_ij * r_ij^2)`. A single-worker topology yields an empty table
/// (stealing disabled).
pub fn build_victim_table(topology: &NumaTopology, i: usize) -> VictimTable {
    let p = topology.workers();
    assert!(i < p);
    if p < 2 {
        return VictimTable::default();
    }
    let distances: Vec<usize> = (0..p).map(|j| topology.distance(i, j)).collect();
    let count_at = |r: usize| distances.iter().filter(|&&d| d == r).count();
    let mut victims = Vec::with_capacity(p - 1);
    let mut weights = Vec::with_capacity(p - 1);
    for j in 0..p {
        if j == i {
            continue;
        }
        let r = distances[j];
        victims.push(j);
        weights.push(1.0 / (count_at(r) as f64 * (r * r) as f64));
    }
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let cdf = weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect::<Vec<_>>();
    debug_assert!((acc - 1.0).abs() < 1e-12);
    VictimTable { victims, cdf }
}

/// Draw a victim with the table's distribution.
pub fn select_victim(table: &VictimTable, rng: &mut Rng64) -> usize {
    debug_assert!(!table.is_empty());
    let u = rng.next_f64();
    let k = table.cdf.partition_point(|&c| c <= u);
    table.victims[k.min(table.victims.len() - 1)]
}
