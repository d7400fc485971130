//! Desk-scale validator of the augmentation claim: signed feature hashing
//! over statement bags, a linear projection trained with triplet loss, and
//! MAP@R / AP retrieval metrics.
//!
//! The anchor of a triplet is an IR embedding, the positive is the source
//! embedding of the same program, the negative an unrelated source drawn
//! uniformly from other classes. Distances are squared Euclidean between
//! L2-normalized projections, so d(u, v) = 2 − 2·û·v̂ and the hinge loss is
//! max(0, m + d(a,p) − d(a,n)). Gradients are analytic and go through the
//! normalization (the Jacobian of z ↦ z/‖z‖ is (I − ẑẑᵀ)/‖z‖).

use crate::irgraph::IrModule;
use crate::srcgraph::source_tokens;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub const DEFAULT_HASH_DIM: usize = 2048;
pub const DEFAULT_EMBED_DIM: usize = 128;
pub const DEFAULT_MARGIN: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("training needs at least one triplet")]
    EmptyBatch,
    #[error("training diverged at step {step}: batch loss is not finite")]
    Diverged { step: usize },
    #[error("{0} embeddings but {1} labels")]
    LabelMismatch(usize, usize),
    #[error("no valid retrieval queries (every class is a singleton)")]
    NoQueries,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, token: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes() {
        h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
    }
    for b in token.bytes() {
        h = (h ^ b as u64).wrapping_mul(FNV_PRIME);
    }
    h
}

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Signed feature hashing: each token lands in bucket (h >> 1) mod dim with
/// sign from the low hash bit; the result is L2-normalized. FNV-1a keeps it
/// stable across platforms for a fixed seed.
pub fn hash_features<'a>(
    tokens: impl IntoIterator<Item = &'a str>,
    dim: usize,
    seed: u64,
) -> Vec<f64> {
    assert!(dim > 0, "hash dimension must be positive");
    let mut v = vec![0.0; dim];
    for t in tokens {
        let h = fnv1a(seed, t);
        let idx = ((h >> 1) % dim as u64) as usize;
        v[idx] += if h & 1 == 0 { 1.0 } else { -1.0 };
    }
    l2_normalize(&mut v);
    v
}

/// Bag of canonical IR statements, hashed.
pub fn ir_features(module: &IrModule, dim: usize, seed: u64) -> Vec<f64> {
    hash_features(module.statements().map(|s| s.text.as_str()), dim, seed)
}

pub fn ir_features_batch(modules: &[IrModule], dim: usize, seed: u64) -> Vec<Vec<f64>> {
    modules.par_iter().map(|m| ir_features(m, dim, seed)).collect()
}

/// Bag of stripped source lexemes, hashed.
pub fn source_features(source_text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let toks = source_tokens(source_text);
    hash_features(toks.iter().map(|s| s.as_str()), dim, seed)
}

/// Linear projection R^d → R^e plus the triplet margin. `w` is row-major
/// d×e: `w[i*e + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletModel {
    pub d: usize,
    pub e: usize,
    pub margin: f64,
    pub w: Vec<f64>,
}

impl TripletModel {
    /// Xavier-uniform init, deterministic for a seed.
    pub fn init(d: usize, e: usize, margin: f64, seed: u64) -> TripletModel {
        assert!(d > 0 && e > 0);
        let bound = (6.0 / (d + e) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..d * e).map(|_| rng.gen::<f64>() * 2.0 * bound - bound).collect();
        TripletModel { d, e, margin, w }
    }

    fn project_raw(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "input dimension");
        let mut z = vec![0.0; self.e];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w[i * self.e..(i + 1) * self.e];
            for (zj, wj) in z.iter_mut().zip(row) {
                *zj += xi * wj;
            }
        }
        z
    }

    /// L2-normalized projection — the embedding used everywhere downstream.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.project_raw(x);
        l2_normalize(&mut z);
        z
    }
}

pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len());
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Hinge triplet loss on projections: inputs are normalized (idempotent for
/// already-unit vectors) and compared by squared Euclidean distance.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> Result<f64, EmbedError> {
    if a.len() != p.len() {
        return Err(EmbedError::DimMismatch(a.len(), p.len()));
    }
    if a.len() != n.len() {
        return Err(EmbedError::DimMismatch(a.len(), n.len()));
    }
    let (mut a, mut p, mut n) = (a.to_vec(), p.to_vec(), n.to_vec());
    l2_normalize(&mut a);
    l2_normalize(&mut p);
    l2_normalize(&mut n);
    let d_ap = squared_distance(&a, &p);
    let d_an = squared_distance(&a, &n);
    Ok(hinge(margin + d_ap - d_an))
}

/// max(0, l), but NaN propagates instead of being eaten by `f64::max`.
fn hinge(l: f64) -> f64 {
    if l.is_nan() {
        f64::NAN
    } else {
        l.max(0.0)
    }
}

/// Indices into a shared feature matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

pub struct Batch<'a> {
    pub features: &'a [Vec<f64>],
    pub triplets: &'a [Triplet],
}

struct Projected {
    hat: Vec<f64>,
    norm: f64,
}

fn project_parts(model: &TripletModel, x: &[f64]) -> Projected {
    let z = model.project_raw(x);
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut hat = z;
    if norm > 0.0 {
        for v in hat.iter_mut() {
            *v /= norm;
        }
    }
    Projected { hat, norm }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Mean triplet loss over the batch (inactive triplets contribute 0).
pub fn mean_loss(model: &TripletModel, batch: &Batch) -> f64 {
    assert!(!batch.triplets.is_empty());
    let total: f64 = batch
        .triplets
        .iter()
        .map(|t| {
            let a = project_parts(model, &batch.features[t.anchor]);
            let p = project_parts(model, &batch.features[t.positive]);
            let n = project_parts(model, &batch.features[t.negative]);
            let s_ap = dot(&a.hat, &p.hat);
            let s_an = dot(&a.hat, &n.hat);
            hinge(model.margin + 2.0 * (s_an - s_ap))
        })
        .sum();
    total / batch.triplets.len() as f64
}

/// Analytic gradient of [`mean_loss`] with respect to the projection,
/// same row-major d×e shape. Inactive triplets contribute exactly zero;
/// a degenerate leg (projection norm ~ 0) is skipped.
pub fn loss_gradient(model: &TripletModel, batch: &Batch) -> Vec<f64> {
    assert!(!batch.triplets.is_empty());
    let (d, e) = (model.d, model.e);
    let mut grad = vec![0.0; d * e];
    for t in batch.triplets {
        let xa = &batch.features[t.anchor];
        let xp = &batch.features[t.positive];
        let xn = &batch.features[t.negative];
        let a = project_parts(model, xa);
        let p = project_parts(model, xp);
        let n = project_parts(model, xn);
        if a.norm < 1e-9 || p.norm < 1e-9 || n.norm < 1e-9 {
            continue;
        }
        let s_ap = dot(&a.hat, &p.hat);
        let s_an = dot(&a.hat, &n.hat);
        if model.margin + 2.0 * (s_an - s_ap) <= 0.0 {
            continue;
        }
        // loss = m + 2(â·n̂ − â·p̂); ∂(â·b̂)/∂W =
        //   xa ⊗ (b̂ − (â·b̂)â)/‖za‖ + xb ⊗ (â − (â·b̂)b̂)/‖zb‖
        let mut ga = vec![0.0; e];
        let mut gp = vec![0.0; e];
        let mut gn = vec![0.0; e];
        for j in 0..e {
            ga[j] = ((n.hat[j] - s_an * a.hat[j]) - (p.hat[j] - s_ap * a.hat[j])) / a.norm;
            gp[j] = -(a.hat[j] - s_ap * p.hat[j]) / p.norm;
            gn[j] = (a.hat[j] - s_an * n.hat[j]) / n.norm;
        }
        accumulate_outer(&mut grad, xa, &ga, 2.0, e);
        accumulate_outer(&mut grad, xp, &gp, 2.0, e);
        accumulate_outer(&mut grad, xn, &gn, 2.0, e);
    }
    let scale = 1.0 / batch.triplets.len() as f64;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    grad
}

fn accumulate_outer(grad: &mut [f64], x: &[f64], g: &[f64], coeff: f64, e: usize) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &mut grad[i * e..(i + 1) * e];
        for (r, &gj) in row.iter_mut().zip(g) {
            *r += coeff * xi * gj;
        }
    }
}

/// Plain full-batch gradient descent for `steps` iterations. The batch mean
/// is order-independent up to rounding; the seed pins the accumulation
/// order so a run is reproducible bit-for-bit.
pub fn train(
    model: &TripletModel,
    batch: &Batch,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<TripletModel, EmbedError> {
    if batch.triplets.is_empty() {
        return Err(EmbedError::EmptyBatch);
    }
    let mut order: Vec<Triplet> = batch.triplets.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut m = model.clone();
    for step in 0..steps {
        let view = Batch { features: batch.features, triplets: &order };
        let g = loss_gradient(&m, &view);
        for (w, gi) in m.w.iter_mut().zip(&g) {
            *w -= lr * gi;
        }
        if !mean_loss(&m, &view).is_finite() {
            return Err(EmbedError::Diverged { step });
        }
    }
    Ok(m)
}

/// Average precision over a ranked relevance list: mean of precision@i at
/// each relevant position i. `None` when nothing is relevant.
pub fn average_precision(relevance_in_rank_order: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (i, &rel) in relevance_in_rank_order.iter().enumerate() {
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

#[derive(Clone, Debug, PartialEq)]
pub struct QueryDetail {
    pub query: usize,
    /// Count of other same-class items.
    pub r: usize,
    pub ap_at_r: f64,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    pub map_at_r: f64,
    pub ap: f64,
    pub per_query: Vec<QueryDetail>,
    /// Queries whose class has no other member.
    pub skipped: Vec<usize>,
}

impl RetrievalResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("query\tr\tap_at_r\tap\n");
        for q in &self.per_query {
            out.push_str(&format!("{}\t{}\t{:.9}\t{:.9}\n", q.query, q.r, q.ap_at_r, q.ap));
        }
        out.push_str(&format!("# map_at_r {:.9}\n", self.map_at_r));
        out.push_str(&format!("# ap {:.9}\n", self.ap));
        if !self.skipped.is_empty() {
            let ids: Vec<String> = self.skipped.iter().map(|s| s.to_string()).collect();
            out.push_str(&format!("# skipped {}\n", ids.join(",")));
        }
        out
    }
}

/// MAP@R and mean AP over a labeled embedding set. Each query ranks every
/// other item by ascending distance (ties by item index); R is the count of
/// other same-class items; singleton-class queries are skipped and reported.
pub fn retrieval_metrics<L: PartialEq>(
    embeddings: &[Vec<f64>],
    labels: &[L],
) -> Result<RetrievalResult, EmbedError> {
    if embeddings.len() != labels.len() {
        return Err(EmbedError::LabelMismatch(embeddings.len(), labels.len()));
    }
    if let Some(first) = embeddings.first() {
        for v in embeddings {
            if v.len() != first.len() {
                return Err(EmbedError::DimMismatch(first.len(), v.len()));
            }
        }
    }
    let n = embeddings.len();
    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    for q in 0..n {
        let r = (0..n).filter(|&i| i != q && labels[i] == labels[q]).count();
        if r == 0 {
            skipped.push(q);
            continue;
        }
        let mut order: Vec<usize> = (0..n).filter(|&i| i != q).collect();
        order.sort_by(|&i, &j| {
            squared_distance(&embeddings[q], &embeddings[i])
                .total_cmp(&squared_distance(&embeddings[q], &embeddings[j]))
                .then(i.cmp(&j))
        });
        let relevance: Vec<bool> = order.iter().map(|&i| labels[i] == labels[q]).collect();
        let mut hits = 0usize;
        let mut prec_sum = 0.0;
        for (i, &rel) in relevance.iter().take(r).enumerate() {
            if rel {
                hits += 1;
                prec_sum += hits as f64 / (i + 1) as f64;
            }
        }
        per_query.push(QueryDetail {
            query: q,
            r,
            ap_at_r: prec_sum / r as f64,
            // r >= 1 guarantees a relevant item somewhere in the ranking
            ap: average_precision(&relevance).unwrap(),
        });
    }
    if per_query.is_empty() {
        return Err(EmbedError::NoQueries);
    }
    let m = per_query.len() as f64;
    Ok(RetrievalResult {
        map_at_r: per_query.iter().map(|q| q.ap_at_r).sum::<f64>() / m,
        ap: per_query.iter().map(|q| q.ap).sum::<f64>() / m,
        per_query,
        skipped,
    })
}

pub fn map_at_r<L: PartialEq>(embeddings: &[Vec<f64>], labels: &[L]) -> Result<f64, EmbedError> {
    retrieval_metrics(embeddings, labels).map(|r| r.map_at_r)
}

/// For each item, a uniformly drawn index with a different label; `None`
/// when no other class exists.
pub fn sample_negatives<L: PartialEq>(labels: &[L], seed: u64) -> Vec<Option<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels
        .iter()
        .map(|l| {
            let candidates: Vec<usize> =
                (0..labels.len()).filter(|&j| labels[j] != *l).collect();
            if candidates.is_empty() {
                None
            } else {
                Some(candidates[rng.gen_range(0..candidates.len())])
            }
        })
        .collect()
}

/// Embedding matrix as a delimited table: id, then the vector components.
pub fn embeddings_tsv(ids: &[String], vectors: &[Vec<f64>]) -> String {
    assert_eq!(ids.len(), vectors.len());
    let mut out = String::new();
    for (id, v) in ids.iter().zip(vectors) {
        out.push_str(id);
        for x in v {
            out.push_str(&format!("\t{x:.9}"));
        }
        out.push('\n');
    }
    out
}
