//! Generational GA over flag bit-vectors.
//!
//! One generation: seeded shuffle, pair adjacent individuals, each pair
//! undergoes k-point crossover with probability `crossover_prob`, every
//! individual gets exactly round(mutation_rate × L) distinct bit flips, the
//! varied population is evaluated, the global top-K archive absorbs the
//! results, and fitness-proportional roulette selection (with replacement)
//! draws the next generation. The initial population is evaluated as
//! generation 0 before any variation. Every generation ends with a
//! checkpoint of (population, RNG state, archive, trace) so an interrupted
//! run resumes bit-for-bit.

use crate::compile::FlagVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("genome length must be positive")]
    EmptyGenome,
    #[error("population must be even and positive, got {0}")]
    BadPopulation(usize),
    #[error("k_points must be in 1..genome_len, got {0}")]
    BadKPoints(usize),
    #[error("{what} must be in [0, 1], got {value}")]
    BadProbability { what: &'static str, value: f64 },
    #[error("archive capacity must be positive")]
    BadArchiveK,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaConfig {
    pub genome_len: usize,
    pub population: usize,
    pub generations: u32,
    pub k_points: usize,
    pub crossover_prob: f64,
    pub mutation_rate: f64,
    pub archive_k: usize,
    pub init_density: f64,
    pub seed: u64,
}

impl GaConfig {
    /// Reference hyperparameters: M=20, N=800, 2-point crossover at 0.4,
    /// 1% mutation, top-6 archive, init density 0.25.
    pub fn paper_defaults(genome_len: usize, seed: u64) -> GaConfig {
        GaConfig {
            genome_len,
            population: 20,
            generations: 800,
            k_points: 2,
            crossover_prob: 0.4,
            mutation_rate: 0.01,
            archive_k: 6,
            init_density: 0.25,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), GaError> {
        if self.genome_len == 0 {
            return Err(GaError::EmptyGenome);
        }
        if self.population == 0 || self.population % 2 != 0 {
            return Err(GaError::BadPopulation(self.population));
        }
        if self.k_points == 0 || self.k_points >= self.genome_len {
            return Err(GaError::BadKPoints(self.k_points));
        }
        for (what, value) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_rate", self.mutation_rate),
            ("init_density", self.init_density),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(GaError::BadProbability { what, value });
            }
        }
        if self.archive_k == 0 {
            return Err(GaError::BadArchiveK);
        }
        Ok(())
    }
}

/// Fitness provider for one whole generation; `t` is the generation index
/// (0 = initial population).
pub trait GenerationEval {
    fn eval_generation(&mut self, t: u32, genomes: &[FlagVector]) -> Vec<f64>;
}

/// Wraps a plain per-genome closure as a [`GenerationEval`].
pub struct FnEval<F>(pub F);

impl<F: FnMut(&FlagVector) -> f64> GenerationEval for FnEval<F> {
    fn eval_generation(&mut self, _t: u32, genomes: &[FlagVector]) -> Vec<f64> {
        genomes.iter().map(&mut self.0).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub genome: FlagVector,
    pub fitness: f64,
    pub generation: u32,
}

/// Global best-K store. Total order: fitness desc, then discovery
/// generation asc, then genome hex asc — so eviction of the minimum is
/// deterministic and the reported best never decreases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    k: usize,
    entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub fn new(k: usize) -> Archive {
        Archive { k, entries: Vec::new() }
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn best(&self) -> Option<&ArchiveEntry> {
        self.entries.first()
    }

    pub fn offer(&mut self, genome: &FlagVector, fitness: f64, generation: u32) {
        if self.entries.iter().any(|e| e.genome == *genome) {
            return;
        }
        self.entries.push(ArchiveEntry { genome: genome.clone(), fitness, generation });
        self.entries.sort_by(|a, b| {
            b.fitness
                .total_cmp(&a.fitness)
                .then(a.generation.cmp(&b.generation))
                .then(a.genome.to_hex().cmp(&b.genome.to_hex()))
        });
        self.entries.truncate(self.k);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: u32,
    pub best_f: f64,
    pub mean_f: f64,
}

pub fn trace_tsv(rows: &[TraceRow]) -> String {
    let mut out = String::from("generation\tbest_F\tmean_F\n");
    for r in rows {
        out.push_str(&format!("{}\t{:.9}\t{:.9}\n", r.generation, r.best_f, r.mean_f));
    }
    out
}

/// Complete resumable search state as of the end of generation `t`.
/// `population` is the already-selected parent pool for generation `t + 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaState {
    pub config: GaConfig,
    pub t: u32,
    pub population: Vec<FlagVector>,
    pub rng: ChaCha8Rng,
    pub archive: Archive,
    pub trace: Vec<TraceRow>,
}

pub trait CheckpointSink {
    fn save(&mut self, state: &GaState) -> Result<(), GaError>;
}

pub struct NullSink;

impl CheckpointSink for NullSink {
    fn save(&mut self, _state: &GaState) -> Result<(), GaError> {
        Ok(())
    }
}

/// Writes `checkpoint-<t>.json` plus a `latest.json` alias per generation.
pub struct DirSink {
    pub dir: PathBuf,
}

impl CheckpointSink for DirSink {
    fn save(&mut self, state: &GaState) -> Result<(), GaError> {
        let bytes = serde_json::to_vec(state).map_err(|e| GaError::Checkpoint(e.to_string()))?;
        let numbered = self.dir.join(format!("checkpoint-{:04}.json", state.t));
        crate::workspace::atomic_write(&numbered, &bytes)
            .and_then(|_| crate::workspace::atomic_write(&self.dir.join("latest.json"), &bytes))
            .map_err(|e| GaError::Checkpoint(e.to_string()))
    }
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<GaState, GaError> {
    let bytes = std::fs::read(path).map_err(|e| GaError::Checkpoint(e.to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| GaError::Checkpoint(e.to_string()))
}

pub fn init_population(cfg: &GaConfig, rng: &mut ChaCha8Rng) -> Vec<FlagVector> {
    (0..cfg.population)
        .map(|_| {
            let mut g = FlagVector::zeros(cfg.genome_len);
            for i in 0..cfg.genome_len {
                if rng.gen_bool(cfg.init_density) {
                    g.set(i, true);
                }
            }
            g
        })
        .collect()
}

/// k-point crossover at explicit cut positions (sorted, each in 1..L,
/// "cut before index c"): segments between cuts alternate parents starting
/// with the originals.
pub fn crossover_at(a: &FlagVector, b: &FlagVector, cuts: &[usize]) -> (FlagVector, FlagVector) {
    assert_eq!(a.len(), b.len());
    let l = a.len();
    let mut c = a.clone();
    let mut d = b.clone();
    let mut bounds = Vec::with_capacity(cuts.len() + 1);
    bounds.extend_from_slice(cuts);
    bounds.push(l);
    let mut swap = false;
    let mut lo = 0usize;
    for &hi in &bounds {
        if swap {
            for i in lo..hi {
                c.set(i, b.get(i));
                d.set(i, a.get(i));
            }
        }
        swap = !swap;
        lo = hi;
    }
    (c, d)
}

pub fn crossover(
    a: &FlagVector,
    b: &FlagVector,
    k_points: usize,
    rng: &mut ChaCha8Rng,
) -> (FlagVector, FlagVector) {
    let cuts = sample_cuts(a.len(), k_points, rng);
    crossover_at(a, b, &cuts)
}

/// k distinct cut positions from 1..=L-1, ascending.
fn sample_cuts(l: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, l - 1, k)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    cuts.sort_unstable();
    cuts
}

/// Flip exactly round(rate × L) distinct positions.
pub fn mutate(g: &mut FlagVector, rate: f64, rng: &mut ChaCha8Rng) {
    let n = (rate * g.len() as f64).round() as usize;
    if n == 0 {
        return;
    }
    for i in rand::seq::index::sample(rng, g.len(), n.min(g.len())) {
        g.flip(i);
    }
}

/// Fitness-proportional roulette wheel, `m` draws with replacement.
/// Degenerate total (all zero) falls back to uniform.
pub fn select(
    pop: &[FlagVector],
    fits: &[f64],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<FlagVector> {
    assert_eq!(pop.len(), fits.len());
    let total: f64 = fits.iter().map(|f| f.max(0.0)).sum();
    (0..m)
        .map(|_| {
            if !(total > 0.0) {
                return pop[rng.gen_range(0..pop.len())].clone();
            }
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            for (i, f) in fits.iter().enumerate() {
                acc += f.max(0.0);
                if r < acc {
                    return pop[i].clone();
                }
            }
            pop[pop.len() - 1].clone()
        })
        .collect()
}

pub struct GaRun {
    pub archive: Archive,
    pub trace: Vec<TraceRow>,
    pub final_state: GaState,
}

fn record(state: &mut GaState, t: u32, fits: &[f64]) {
    assert_eq!(fits.len(), state.population.len());
    for (g, &f) in state.population.iter().zip(fits) {
        state.archive.offer(g, f, t);
    }
    let best = fits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = fits.iter().sum::<f64>() / fits.len() as f64;
    state.trace.push(TraceRow { generation: t, best_f: best, mean_f: mean });
}

pub fn run<E: GenerationEval + ?Sized>(
    cfg: &GaConfig,
    eval: &mut E,
    sink: &mut dyn CheckpointSink,
) -> Result<GaRun, GaError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let population = init_population(cfg, &mut rng);
    let mut state = GaState {
        config: cfg.clone(),
        t: 0,
        population,
        rng,
        archive: Archive::new(cfg.archive_k),
        trace: Vec::new(),
    };
    let fits = eval.eval_generation(0, &state.population);
    record(&mut state, 0, &fits);
    sink.save(&state)?;
    resume(state, eval, sink)
}

/// Continue a checkpointed run through generation N. Produces results
/// identical to the uninterrupted run: the checkpoint carries the RNG.
pub fn resume<E: GenerationEval + ?Sized>(
    mut state: GaState,
    eval: &mut E,
    sink: &mut dyn CheckpointSink,
) -> Result<GaRun, GaError> {
    state.config.validate()?;
    let cfg = state.config.clone();
    for t in (state.t + 1)..=cfg.generations {
        state.population.shuffle(&mut state.rng);
        for i in (0..cfg.population).step_by(2) {
            if state.rng.gen::<f64>() < cfg.crossover_prob {
                let (c, d) = crossover(
                    &state.population[i],
                    &state.population[i + 1],
                    cfg.k_points,
                    &mut state.rng,
                );
                state.population[i] = c;
                state.population[i + 1] = d;
            }
        }
        for g in &mut state.population {
            mutate(g, cfg.mutation_rate, &mut state.rng);
        }
        let fits = eval.eval_generation(t, &state.population);
        record(&mut state, t, &fits);
        state.population = select(&state.population, &fits, cfg.population, &mut state.rng);
        state.t = t;
        sink.save(&state)?;
    }
    Ok(GaRun { archive: state.archive.clone(), trace: state.trace.clone(), final_state: state })
}
