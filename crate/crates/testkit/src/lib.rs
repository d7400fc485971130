//! Reference implementations used as oracles by the test suites.
//!
//! Everything in here is intentionally written from scratch, without touching
//! the production crate, so tests compare two independent derivations of the
//! same quantity. Keep it that way: no `irforge-core` dependency, ever.

pub mod corpusgen;

use std::path::PathBuf;

/// Deterministic xorshift64* generator so the oracles need no external RNG.
#[derive(Clone)]
pub struct XorShift64 {
    state: u64,
}

impl XorShift64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed.wrapping_mul(2685821657736338717).max(1),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.state = x;
        x.wrapping_mul(2685821657736338717)
    }

    /// Uniform in [0, bound).
    pub fn below(&mut self, bound: u64) -> u64 {
        self.next_u64() % bound
    }

    /// Uniform float in [0, 1).
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// A small labeled digraph in adjacency-matrix form.
#[derive(Clone, Debug)]
pub struct RefGraph {
    pub n: usize,
    pub adj: Vec<Vec<bool>>,
    pub labels: Vec<u8>,
}

impl RefGraph {
    pub fn random(rng: &mut XorShift64, max_n: usize, n_labels: u8, edge_p: f64) -> Self {
        let n = 1 + rng.below(max_n as u64) as usize;
        let labels = (0..n).map(|_| rng.below(n_labels as u64) as u8).collect();
        let mut adj = vec![vec![false; n]; n];
        for (i, row) in adj.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if i != j && rng.unit() < edge_p {
                    *cell = true;
                }
            }
        }
        Self { n, adj, labels }
    }
}

const INF: u64 = u64::MAX / 4;

/// All-pairs shortest distances by min-plus matrix powering — a different
/// algorithm from the production code on purpose.
pub fn ref_distances(g: &RefGraph) -> Vec<Vec<u64>> {
    let n = g.n;
    let mut d = vec![vec![INF; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if g.adj[i][j] {
                d[i][j] = 1;
            }
        }
    }
    // n-1 rounds of min-plus squaring-free products are enough for n hops.
    for _ in 0..n {
        let prev = d.clone();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let via = prev[i][k].saturating_add(prev[k][j]);
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
    }
    d
}

/// Naive shortest-path kernel: double loop over every finite ordered pair of
/// each graph, Dirac on distance, Dirac on endpoint labels.
pub fn ref_sp_kernel(a: &RefGraph, b: &RefGraph, labeled: bool) -> u128 {
    let da = ref_distances(a);
    let db = ref_distances(b);
    let mut total: u128 = 0;
    for ua in 0..a.n {
        for wa in 0..a.n {
            if da[ua][wa] >= INF {
                continue;
            }
            for ub in 0..b.n {
                for wb in 0..b.n {
                    if db[ub][wb] >= INF {
                        continue;
                    }
                    if da[ua][wa] != db[ub][wb] {
                        continue;
                    }
                    if labeled && (a.labels[ua] != b.labels[ub] || a.labels[wa] != b.labels[wb]) {
                        continue;
                    }
                    total += 1;
                }
            }
        }
    }
    total
}

pub fn ref_similarity(a: &RefGraph, b: &RefGraph, labeled: bool) -> f64 {
    let kab = ref_sp_kernel(a, b, labeled) as f64;
    let kaa = ref_sp_kernel(a, a, labeled) as f64;
    let kbb = ref_sp_kernel(b, b, labeled) as f64;
    if kaa == 0.0 || kbb == 0.0 {
        return 0.0;
    }
    kab / (kaa * kbb).sqrt()
}

/// Average precision over a ranked relevance list: mean of precision@i taken
/// at each relevant position. None when nothing is relevant.
pub fn ref_average_precision(relevance: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (i, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            acc += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        None
    } else {
        Some(acc / hits as f64)
    }
}

/// Brute-force MAP@R and mean AP over a point set with class labels.
///
/// For each query: rank every other item by ascending Euclidean distance,
/// ties broken by item index. R = number of other same-class items; queries
/// with R = 0 are skipped. Returns (map_at_r, mean_ap, skipped).
pub fn ref_retrieval_metrics(points: &[Vec<f64>], labels: &[usize]) -> (f64, f64, usize) {
    assert_eq!(points.len(), labels.len());
    let n = points.len();
    let mut map_sum = 0.0;
    let mut ap_sum = 0.0;
    let mut counted = 0usize;
    let mut skipped = 0usize;
    for q in 0..n {
        let r = (0..n).filter(|&i| i != q && labels[i] == labels[q]).count();
        if r == 0 {
            skipped += 1;
            continue;
        }
        let mut order: Vec<usize> = (0..n).filter(|&i| i != q).collect();
        order.sort_by(|&i, &j| {
            let di = euclid2(&points[q], &points[i]);
            let dj = euclid2(&points[q], &points[j]);
            di.partial_cmp(&dj).unwrap().then(i.cmp(&j))
        });
        let relevance: Vec<bool> = order.iter().map(|&i| labels[i] == labels[q]).collect();
        // MAP@R term: precision@i summed over relevant positions within top R.
        let mut hits = 0usize;
        let mut prec_sum = 0.0;
        for (i, &rel) in relevance.iter().take(r).enumerate() {
            if rel {
                hits += 1;
                prec_sum += hits as f64 / (i + 1) as f64;
            }
        }
        map_sum += prec_sum / r as f64;
        ap_sum += ref_average_precision(&relevance).unwrap_or(0.0);
        counted += 1;
    }
    if counted == 0 {
        (0.0, 0.0, skipped)
    } else {
        (map_sum / counted as f64, ap_sum / counted as f64, skipped)
    }
}

fn euclid2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Locate a clang-style frontend for integration tests: `IRFORGE_CC` if set,
/// otherwise the first of `clang-14`/`clang` that answers `--version`.
pub fn find_cc() -> PathBuf {
    if let Ok(cc) = std::env::var("IRFORGE_CC") {
        return PathBuf::from(cc);
    }
    for cand in ["clang-14", "clang"] {
        if std::process::Command::new(cand)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
        {
            return PathBuf::from(cand);
        }
    }
    panic!("no clang found for integration tests; set IRFORGE_CC");
}

/// The bundled llvmlite-backed optimizer shim, resolved relative to the repo.
pub fn shim_opt() -> PathBuf {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let p = root.join("../../tools/irforge-opt");
    p.canonicalize().expect("tools/irforge-opt missing")
}

/// Repo-level fixtures directory.
pub fn fixtures_dir() -> PathBuf {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    root.join("../../fixtures").canonicalize().expect("fixtures/ missing")
}
