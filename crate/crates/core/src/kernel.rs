//! Normalized shortest-path graph kernel between two CFGs
//! (Borgwardt–Kriegel construction with Dirac base kernels).
//!
//! A graph is summarized as the multiset of (kind(u), kind(w), d(u, w))
//! entries over every ordered node pair with a finite directed distance,
//! self-pairs at distance 0 included. The kernel between two graphs counts
//! matching entry pairs; both the length factor and the label factor are
//! Dirac, which keeps everything exact integer arithmetic. Entries are
//! stored as a bucketed histogram so the pairwise sum is
//! O(|buckets_a| · |buckets_b|) instead of O(n² · m²).

use crate::graph::{Cfg, NodeKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Copy, Clone, Debug, Serialize, Deserialize)]
pub struct KernelOptions {
    /// Dirac factor on endpoint kinds; `false` compares distances only.
    pub labeled: bool,
    /// Distances on the directed graph; `false` symmetrizes edges first.
    pub directed: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            labeled: true,
            directed: true,
        }
    }
}

/// Pair-distance histogram: (kind_u, kind_w, distance) → multiplicity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpGraph {
    buckets: BTreeMap<(NodeKind, NodeKind, u32), u64>,
}

impl SpGraph {
    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    /// Total number of finite ordered pairs.
    pub fn pair_count(&self) -> u64 {
        self.buckets.values().sum()
    }

    fn by_distance(&self) -> BTreeMap<u32, u64> {
        let mut m = BTreeMap::new();
        for (&(_, _, d), &c) in &self.buckets {
            *m.entry(d).or_insert(0) += c;
        }
        m
    }
}

const UNREACHED: u32 = u32::MAX;

/// All-pairs shortest path lengths; Floyd–Warshall up to 512 nodes, per-source
/// BFS beyond that (edges are unweighted so BFS is exact).
pub fn shortest_paths(g: &Cfg) -> SpGraph {
    shortest_paths_with(g, KernelOptions::default())
}

pub fn shortest_paths_with(g: &Cfg, opts: KernelOptions) -> SpGraph {
    let n = g.node_count();
    let adj = g.adjacency(!opts.directed);
    let mut buckets = BTreeMap::new();
    let mut record = |u: usize, w: usize, d: u32| {
        *buckets
            .entry((g.kind(u as u32), g.kind(w as u32), d))
            .or_insert(0u64) += 1;
    };

    if n <= 512 {
        let mut dist = vec![vec![UNREACHED; n]; n];
        for (u, row) in dist.iter_mut().enumerate() {
            row[u] = 0;
            for &v in &adj[u] {
                if v as usize != u {
                    row[v as usize] = 1;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = dist[i][k];
                if dik == UNREACHED {
                    continue;
                }
                for j in 0..n {
                    let dkj = dist[k][j];
                    if dkj != UNREACHED && dik + dkj < dist[i][j] {
                        dist[i][j] = dik + dkj;
                    }
                }
            }
        }
        for u in 0..n {
            for w in 0..n {
                if dist[u][w] != UNREACHED {
                    record(u, w, dist[u][w]);
                }
            }
        }
    } else {
        let mut dist = vec![UNREACHED; n];
        let mut queue = std::collections::VecDeque::new();
        for u in 0..n {
            dist.fill(UNREACHED);
            dist[u] = 0;
            queue.clear();
            queue.push_back(u);
            while let Some(x) = queue.pop_front() {
                for &v in &adj[x] {
                    if dist[v as usize] == UNREACHED {
                        dist[v as usize] = dist[x] + 1;
                        queue.push_back(v as usize);
                    }
                }
            }
            for w in 0..n {
                if dist[w] != UNREACHED {
                    record(u, w, dist[w]);
                }
            }
        }
    }
    SpGraph { buckets }
}

/// Exact integer kernel value; `None` when a product overflows u128 (caller
/// falls back to floating point).
fn kernel_exact(a: &SpGraph, b: &SpGraph, labeled: bool) -> Option<u128> {
    let mut total: u128 = 0;
    if labeled {
        for (key, &ca) in &a.buckets {
            if let Some(&cb) = b.buckets.get(key) {
                total = total.checked_add((ca as u128).checked_mul(cb as u128)?)?;
            }
        }
    } else {
        let da = a.by_distance();
        let db = b.by_distance();
        for (d, &ca) in &da {
            if let Some(&cb) = db.get(d) {
                total = total.checked_add((ca as u128).checked_mul(cb as u128)?)?;
            }
        }
    }
    Some(total)
}

fn kernel_f64(a: &SpGraph, b: &SpGraph, labeled: bool) -> f64 {
    match kernel_exact(a, b, labeled) {
        Some(v) => v as f64,
        None => {
            let mut total = 0.0;
            if labeled {
                for (key, &ca) in &a.buckets {
                    if let Some(&cb) = b.buckets.get(key) {
                        total += ca as f64 * cb as f64;
                    }
                }
            } else {
                let da = a.by_distance();
                let db = b.by_distance();
                for (d, &ca) in &da {
                    if let Some(&cb) = db.get(d) {
                        total += ca as f64 * cb as f64;
                    }
                }
            }
            total
        }
    }
}

/// k(a, b) with Dirac length and label factors.
pub fn sp_kernel(a: &SpGraph, b: &SpGraph) -> f64 {
    kernel_f64(a, b, true)
}

pub fn sp_kernel_with(a: &SpGraph, b: &SpGraph, opts: KernelOptions) -> f64 {
    kernel_f64(a, b, opts.labeled)
}

/// Normalized similarity between two precomputed pair histograms.
///
/// Identical histograms give exactly 1.0: the Cauchy–Schwarz equality case is
/// detected on the integer values before any square root is taken.
pub fn similarity_sp(a: &SpGraph, b: &SpGraph, opts: KernelOptions) -> f64 {
    let (kab, kaa, kbb) = (
        kernel_exact(a, b, opts.labeled),
        kernel_exact(a, a, opts.labeled),
        kernel_exact(b, b, opts.labeled),
    );
    if let (Some(kab), Some(kaa), Some(kbb)) = (kab, kaa, kbb) {
        if kaa == 0 || kbb == 0 {
            return 0.0;
        }
        if let (Some(sq), Some(prod)) = (kab.checked_mul(kab), kaa.checked_mul(kbb)) {
            if sq == prod {
                return 1.0;
            }
        }
        return ((kab as f64) / ((kaa as f64) * (kbb as f64)).sqrt()).clamp(0.0, 1.0);
    }
    // Overflow path: pure floating point.
    let kaa = kernel_f64(a, a, opts.labeled);
    let kbb = kernel_f64(b, b, opts.labeled);
    if kaa == 0.0 || kbb == 0.0 {
        return 0.0;
    }
    (kernel_f64(a, b, opts.labeled) / (kaa * kbb).sqrt()).clamp(0.0, 1.0)
}

/// sim_G between two CFGs: k(a,b) / sqrt(k(a,a)·k(b,b)), in [0, 1].
pub fn similarity(src: &Cfg, ir: &Cfg) -> f64 {
    similarity_with(src, ir, KernelOptions::default())
}

pub fn similarity_with(a: &Cfg, b: &Cfg, opts: KernelOptions) -> f64 {
    similarity_sp(
        &shortest_paths_with(a, opts),
        &shortest_paths_with(b, opts),
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::CfgOrigin;

    fn path3() -> Cfg {
        let mut g = Cfg::new(CfgOrigin::Ir);
        let a = g.add_node(NodeKind::Plain);
        let b = g.add_node(NodeKind::Plain);
        let c = g.add_node(NodeKind::Plain);
        g.add_edge(a, b);
        g.add_edge(b, c);
        g
    }

    fn cycle3() -> Cfg {
        let mut g = Cfg::new(CfgOrigin::Ir);
        let a = g.add_node(NodeKind::Plain);
        let b = g.add_node(NodeKind::Plain);
        let c = g.add_node(NodeKind::Plain);
        g.add_edge(a, b);
        g.add_edge(b, c);
        g.add_edge(c, a);
        g
    }

    #[test]
    fn path3_entries() {
        // a→b→c: three d=0 self pairs, d(a,b)=d(b,c)=1, d(a,c)=2.
        let sp = shortest_paths(&path3());
        assert_eq!(sp.pair_count(), 6);
        let by_d = sp.by_distance();
        assert_eq!(by_d[&0], 3);
        assert_eq!(by_d[&1], 2);
        assert_eq!(by_d[&2], 1);
    }

    #[test]
    fn path3_self_kernel_is_14() {
        // Uniform labels, so labeled and unlabeled agree: 3² + 2² + 1².
        let sp = shortest_paths(&path3());
        assert_eq!(sp_kernel(&sp, &sp), 14.0);
        assert_eq!(
            sp_kernel_with(&sp, &sp, KernelOptions { labeled: false, directed: true }),
            14.0
        );
    }

    #[test]
    fn cycle3_all_pairs_finite() {
        // Directed 3-cycle: all 9 ordered pairs finite, off-diagonal in {1,2}.
        let sp = shortest_paths(&cycle3());
        assert_eq!(sp.pair_count(), 9);
        let by_d = sp.by_distance();
        assert_eq!(by_d[&0], 3);
        assert_eq!(by_d[&1], 3);
        assert_eq!(by_d[&2], 3);
    }

    #[test]
    fn path3_vs_cycle3_frozen() {
        // Hand-computed from the histograms above:
        // k = 3·3 + 2·3 + 1·3 = 18, k_pp = 14, k_cc = 27,
        // sim = 18 / sqrt(14·27) = 0.9258200997725514.
        let sim = similarity(&path3(), &cycle3());
        assert!((sim - 18.0 / (14.0f64 * 27.0).sqrt()).abs() < 1e-15);
        assert!((sim - 0.9258200997725514).abs() < 1e-12);
    }

    #[test]
    fn identical_graphs_exactly_one() {
        let g = cycle3();
        assert_eq!(similarity(&g, &g), 1.0);
    }

    #[test]
    fn isolated_node_contributes_only_self_pair() {
        let mut g = path3();
        g.add_node(NodeKind::Exit);
        let sp = shortest_paths(&g);
        assert_eq!(sp.pair_count(), 7);
    }

    #[test]
    fn empty_histogram_gives_zero() {
        let empty = SpGraph { buckets: BTreeMap::new() };
        let sp = shortest_paths(&path3());
        assert_eq!(sp_kernel(&empty, &sp), 0.0);
        assert_eq!(similarity_sp(&empty, &sp, KernelOptions::default()), 0.0);
    }

    #[test]
    fn labels_distinguish() {
        let mut a = Cfg::new(CfgOrigin::Ir);
        let x = a.add_node(NodeKind::Entry);
        let y = a.add_node(NodeKind::Return);
        a.add_edge(x, y);
        let mut b = Cfg::new(CfgOrigin::Ir);
        let x = b.add_node(NodeKind::Entry);
        let y = b.add_node(NodeKind::Branch);
        b.add_edge(x, y);
        // Shapes identical, labels differ: only the entry self-pair matches.
        let ka = shortest_paths(&a);
        let kb = shortest_paths(&b);
        assert_eq!(sp_kernel(&ka, &kb), 1.0);
        assert_eq!(
            sp_kernel_with(&ka, &kb, KernelOptions { labeled: false, directed: true }),
            // distance histograms equal: 2·2 + 1·1
            5.0
        );
    }

    #[test]
    fn undirected_option_symmetrizes() {
        let opts = KernelOptions { labeled: true, directed: false };
        let sp = shortest_paths_with(&path3(), opts);
        // Undirected path: all 9 pairs finite.
        assert_eq!(sp.pair_count(), 9);
    }
}
