//! The GA objective: per-program fitness and its mean over the validation
//! set.
//!
//! For a program p and genome v:
//!
//! ```text
//! score(p, v) = sim_G(source_cfg(p), ir_cfg(optimize(baseline(p), v)))
//!             × (oov_base(p) + 1) / (oov_opt(p, v) + 1)
//! ```
//!
//! Pipeline faults never escape: a program whose baseline cannot be built is
//! quarantined (dropped from the mean for every genome this run), while a
//! genome that breaks the optimizer or produces unparseable IR scores 0 for
//! that program and stays in the mean, so fragile sequences lose the
//! selection race. Per-program baseline artifacts and (program, genome)
//! scores are memoized; the compile module adds its own on-disk cache
//! underneath.

use crate::compile::{CompileEngine, CompileOutcome, FlagVector, IrText};
use crate::corpus::ProgramRecord;
use crate::ga::GenerationEval;
use crate::graph::Cfg;
use crate::irgraph::{ir_cfg, parse_ir};
use crate::kernel::{similarity_with, KernelOptions};
use crate::srcgraph::source_cfg;
use crate::vocab::{count_oov, oov_ratio, oov_ratio_unsmoothed, OovCount, Vocabulary};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

/// The two toolchain operations fitness needs; [`CompileEngine`] is the real
/// implementation, tests substitute canned ones.
pub trait CompileBackend: Sync {
    fn compile_baseline(&self, rec: &ProgramRecord) -> CompileOutcome;
    fn optimize(&self, ir: &IrText, v: &FlagVector) -> CompileOutcome;
}

impl CompileBackend for CompileEngine {
    fn compile_baseline(&self, rec: &ProgramRecord) -> CompileOutcome {
        CompileEngine::compile_baseline(self, rec)
    }
    fn optimize(&self, ir: &IrText, v: &FlagVector) -> CompileOutcome {
        CompileEngine::optimize(self, ir, v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SrcProxy {
    /// Source parse failure quarantines the program.
    Off,
    /// Fall back to the -O0 IR CFG when source parsing fails (sim then
    /// measures O0-vs-optimized similarity). C++ sources always take this
    /// route.
    OnFailure,
    Always,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OovMode {
    /// (base+1)/(opt+1) on occurrence counts.
    Smoothed,
    /// Same smoothing on occurrences/total fractions.
    SmoothedFraction,
    /// base/opt; undefined (score 0) when opt has no OOV.
    Unsmoothed,
}

#[derive(Clone, Copy, Debug)]
pub struct FitnessOptions {
    pub kernel: KernelOptions,
    pub src_proxy: SrcProxy,
    pub oov: OovMode,
}

impl Default for FitnessOptions {
    fn default() -> Self {
        FitnessOptions {
            kernel: KernelOptions::default(),
            src_proxy: SrcProxy::OnFailure,
            oov: OovMode::Smoothed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProgramStatus {
    Ok,
    /// Scored normally, but the source CFG is the -O0 proxy.
    OkSrcProxy,
    /// Baseline unavailable; excluded from the aggregate for the whole run.
    Quarantined,
    OptimizeFailed,
    IrParseFailed,
    OovUndefined,
}

impl ProgramStatus {
    pub fn contributes(self) -> bool {
        self != ProgramStatus::Quarantined
    }
}

impl fmt::Display for ProgramStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProgramStatus::Ok => "ok",
            ProgramStatus::OkSrcProxy => "ok-src-proxy",
            ProgramStatus::Quarantined => "quarantined",
            ProgramStatus::OptimizeFailed => "optimize-failed",
            ProgramStatus::IrParseFailed => "ir-parse-failed",
            ProgramStatus::OovUndefined => "oov-undefined",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramScore {
    pub program_id: String,
    pub sim_g: f64,
    pub oov_base: u64,
    pub oov_opt: u64,
    pub score: f64,
    pub status: ProgramStatus,
    pub note: String,
}

impl ProgramScore {
    fn failed(id: &str, status: ProgramStatus, note: String) -> ProgramScore {
        ProgramScore {
            program_id: id.to_string(),
            sim_g: 0.0,
            oov_base: 0,
            oov_opt: 0,
            score: 0.0,
            status,
            note,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub per_program: Vec<ProgramScore>,
    /// Mean score over non-quarantined programs (0 when none).
    pub aggregate_f: f64,
    /// Programs that contributed a forced 0 or were quarantined.
    pub failures: usize,
    pub all_quarantined: bool,
}

impl FitnessReport {
    pub fn tsv_header() -> &'static str {
        "program_id\tsim_g\toov_base\toov_opt\tscore\tstatus"
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(Self::tsv_header());
        out.push('\n');
        for r in &self.per_program {
            out.push_str(&format!(
                "{}\t{:.9}\t{}\t{}\t{:.9}\t{}\n",
                r.program_id, r.sim_g, r.oov_base, r.oov_opt, r.score, r.status
            ));
        }
        out.push_str(&format!("# aggregate_F {:.9}\n", self.aggregate_f));
        out.push_str(&format!("# failures {}\n", self.failures));
        out
    }
}

struct BaseArtifacts {
    ir: IrText,
    src: Cfg,
    src_proxy: bool,
    base_oov: OovCount,
}

enum BaseOutcome {
    Ready(Box<BaseArtifacts>),
    Quarantined(String),
}

pub struct FitnessEngine<'a, B: CompileBackend> {
    backend: &'a B,
    vocab: &'a Vocabulary,
    opts: FitnessOptions,
    bases: Mutex<HashMap<String, Arc<BaseOutcome>>>,
    memo: Mutex<HashMap<(String, String), ProgramScore>>,
}

impl<'a, B: CompileBackend> FitnessEngine<'a, B> {
    pub fn new(backend: &'a B, vocab: &'a Vocabulary, opts: FitnessOptions) -> Self {
        FitnessEngine {
            backend,
            vocab,
            opts,
            bases: Mutex::new(HashMap::new()),
            memo: Mutex::new(HashMap::new()),
        }
    }

    fn prepare_base(&self, rec: &ProgramRecord) -> Arc<BaseOutcome> {
        if let Some(b) = self.bases.lock().unwrap().get(&rec.id) {
            return b.clone();
        }
        let outcome = self.build_base(rec);
        let mut map = self.bases.lock().unwrap();
        map.entry(rec.id.clone()).or_insert_with(|| Arc::new(outcome)).clone()
    }

    fn build_base(&self, rec: &ProgramRecord) -> BaseOutcome {
        let compiled = self.backend.compile_baseline(rec);
        let Some(ir) = compiled.ir else {
            return BaseOutcome::Quarantined(format!(
                "baseline {:?}: {}",
                compiled.status,
                compiled.stderr_excerpt.lines().next().unwrap_or("")
            ));
        };
        let base_module = match parse_ir(&ir.text) {
            Ok(m) => m,
            Err(e) => return BaseOutcome::Quarantined(format!("baseline IR unparseable: {e}")),
        };
        let base_oov = count_oov(&base_module, self.vocab);
        let is_cpp = rec
            .source_path
            .extension()
            .map(|e| e == "cpp")
            .unwrap_or(false);
        let parsed_src = if is_cpp || self.opts.src_proxy == SrcProxy::Always {
            None
        } else {
            match std::fs::read_to_string(&rec.source_path) {
                Ok(text) => source_cfg(&text).ok(),
                Err(_) => None,
            }
        };
        let (src, src_proxy) = match parsed_src {
            Some(g) => (g, false),
            None => {
                if self.opts.src_proxy == SrcProxy::Off {
                    return BaseOutcome::Quarantined("source CFG unavailable".into());
                }
                (ir_cfg(&base_module), true)
            }
        };
        BaseOutcome::Ready(Box::new(BaseArtifacts { ir, src, src_proxy, base_oov }))
    }

    /// Fitness of one (program, genome) pair.
    pub fn program_fitness(&self, rec: &ProgramRecord, v: &FlagVector) -> ProgramScore {
        let memo_key = (rec.id.clone(), v.to_hex());
        if let Some(hit) = self.memo.lock().unwrap().get(&memo_key) {
            return hit.clone();
        }
        let score = self.program_fitness_uncached(rec, v);
        self.memo.lock().unwrap().insert(memo_key, score.clone());
        score
    }

    fn program_fitness_uncached(&self, rec: &ProgramRecord, v: &FlagVector) -> ProgramScore {
        let base = self.prepare_base(rec);
        let art = match base.as_ref() {
            BaseOutcome::Quarantined(reason) => {
                return ProgramScore::failed(&rec.id, ProgramStatus::Quarantined, reason.clone())
            }
            BaseOutcome::Ready(a) => a,
        };
        let optimized = self.backend.optimize(&art.ir, v);
        let Some(opt_ir) = optimized.ir else {
            return ProgramScore::failed(
                &rec.id,
                ProgramStatus::OptimizeFailed,
                format!(
                    "{:?}: {}",
                    optimized.status,
                    optimized.stderr_excerpt.lines().next().unwrap_or("")
                ),
            );
        };
        let opt_module = match parse_ir(&opt_ir.text) {
            Ok(m) => m,
            Err(e) => {
                return ProgramScore::failed(&rec.id, ProgramStatus::IrParseFailed, e.to_string())
            }
        };
        let sim_g = similarity_with(&art.src, &ir_cfg(&opt_module), self.opts.kernel);
        let opt_oov = count_oov(&opt_module, self.vocab);
        let ratio = match self.opts.oov {
            OovMode::Smoothed => oov_ratio(&art.base_oov, &opt_oov),
            OovMode::SmoothedFraction => {
                let frac = |c: &OovCount| {
                    if c.total_statements == 0 {
                        0.0
                    } else {
                        c.oov_occurrences as f64 / c.total_statements as f64
                    }
                };
                (frac(&art.base_oov) + 1.0) / (frac(&opt_oov) + 1.0)
            }
            OovMode::Unsmoothed => match oov_ratio_unsmoothed(&art.base_oov, &opt_oov) {
                Some(r) => r,
                None => {
                    let mut s = ProgramScore::failed(
                        &rec.id,
                        ProgramStatus::OovUndefined,
                        "unsmoothed ratio with zero OOV in optimized module".into(),
                    );
                    s.sim_g = sim_g;
                    s.oov_base = art.base_oov.oov_occurrences;
                    return s;
                }
            },
        };
        ProgramScore {
            program_id: rec.id.clone(),
            sim_g,
            oov_base: art.base_oov.oov_occurrences,
            oov_opt: opt_oov.oov_occurrences,
            score: sim_g * ratio,
            status: if art.src_proxy {
                ProgramStatus::OkSrcProxy
            } else {
                ProgramStatus::Ok
            },
            note: String::new(),
        }
    }

    /// Evaluate one genome over the validation members and aggregate.
    pub fn sequence_fitness(&self, v: &FlagVector, members: &[&ProgramRecord]) -> FitnessReport {
        assert!(!members.is_empty(), "validation set must be non-empty");
        let per_program: Vec<ProgramScore> = members
            .par_iter()
            .map(|rec| self.program_fitness(rec, v))
            .collect();
        report_from_scores(per_program)
    }
}

fn report_from_scores(per_program: Vec<ProgramScore>) -> FitnessReport {
    let contributing: Vec<&ProgramScore> = per_program
        .iter()
        .filter(|s| s.status.contributes())
        .collect();
    let aggregate_f = if contributing.is_empty() {
        0.0
    } else {
        contributing.iter().map(|s| s.score).sum::<f64>() / contributing.len() as f64
    };
    let failures = per_program
        .iter()
        .filter(|s| !matches!(s.status, ProgramStatus::Ok | ProgramStatus::OkSrcProxy))
        .count();
    FitnessReport {
        all_quarantined: contributing.is_empty(),
        aggregate_f,
        failures,
        per_program,
    }
}

/// Adapter plugging a [`FitnessEngine`] plus validation members into the GA
/// loop; optionally serializes a per-(generation, genome) report.
pub struct ValidationEval<'a, B: CompileBackend> {
    pub fitness: &'a FitnessEngine<'a, B>,
    pub members: Vec<&'a ProgramRecord>,
    pub reports_dir: Option<PathBuf>,
}

impl<B: CompileBackend> GenerationEval for ValidationEval<'_, B> {
    fn eval_generation(&mut self, t: u32, genomes: &[FlagVector]) -> Vec<f64> {
        let reports: Vec<FitnessReport> = genomes
            .par_iter()
            .map(|g| self.fitness.sequence_fitness(g, &self.members))
            .collect();
        if let Some(dir) = &self.reports_dir {
            for (g, rep) in genomes.iter().zip(&reports) {
                let path = dir.join(format!("gen-{t:04}")).join(format!("{}.tsv", g.to_hex()));
                let _ = crate::workspace::atomic_write(&path, rep.to_tsv().as_bytes());
            }
        }
        reports.into_iter().map(|r| r.aggregate_f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{CompileStatus, Producer};
    use crate::vocab::build_vocab;
    use std::io::Write;

    /// Canned backend: baseline text per program id, optimized text per
    /// (program id, genome hex); anything absent fails.
    struct MockBackend {
        baselines: HashMap<String, String>,
        optimized: HashMap<(String, String), String>,
    }

    impl CompileBackend for MockBackend {
        fn compile_baseline(&self, rec: &ProgramRecord) -> CompileOutcome {
            match self.baselines.get(&rec.id) {
                Some(text) => ok_outcome(text, Producer::Baseline, &rec.id),
                None => fail_outcome("no baseline"),
            }
        }
        fn optimize(&self, ir: &IrText, v: &FlagVector) -> CompileOutcome {
            match self.optimized.get(&(ir.program_id.clone(), v.to_hex())) {
                Some(text) => ok_outcome(
                    text,
                    Producer::Optimized { bits_hex: v.to_hex() },
                    &ir.program_id,
                ),
                None => fail_outcome("optimizer rejected genome"),
            }
        }
    }

    fn ok_outcome(text: &str, producer: Producer, id: &str) -> CompileOutcome {
        CompileOutcome {
            status: CompileStatus::Ok,
            ir: Some(IrText {
                text: text.to_string(),
                producer,
                program_id: id.to_string(),
                digest: crate::sha256_hex(text.as_bytes()),
            }),
            stderr_excerpt: String::new(),
            wall_time: 0.0,
            cached: false,
        }
    }

    fn fail_outcome(msg: &str) -> CompileOutcome {
        CompileOutcome {
            status: CompileStatus::CompileError,
            ir: None,
            stderr_excerpt: msg.into(),
            wall_time: 0.0,
            cached: false,
        }
    }

    const BASE_IR: &str = "define i32 @main() {\n  ret i32 0\n}\n";

    fn write_src(dir: &std::path::Path, name: &str, text: &str) -> ProgramRecord {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        ProgramRecord {
            id: name.to_string(),
            source_path: p,
            class_label: "t".into(),
            content_hash: crate::sha256_hex(text.as_bytes()),
        }
    }

    fn vocab_for(texts: &[&str]) -> Vocabulary {
        let modules: Vec<_> = texts.iter().map(|t| parse_ir(t).unwrap()).collect();
        build_vocab(&modules, "d", "t").unwrap()
    }

    #[test]
    fn manual_arithmetic_oracle() {
        // src CFG: Entry -> Plain -> Return (3-node path).
        // IR CFG:  Entry -> Return (2-node path).
        // Labeled SP kernel: k(src,src)=6, k(ir,ir)=3, cross matches only the
        // two self-pairs (E,E,0) and (R,R,0) => k=2; sim = 2/sqrt(18).
        let dir = tempfile::tempdir().unwrap();
        let rec = write_src(dir.path(), "p.c", "int main() { int a = 1; return a; }");
        let genome = FlagVector::zeros(4);
        let mock = MockBackend {
            baselines: HashMap::from([(rec.id.clone(), BASE_IR.to_string())]),
            optimized: HashMap::from([((rec.id.clone(), genome.to_hex()), BASE_IR.to_string())]),
        };
        let vocab = vocab_for(&[BASE_IR]);
        let eng = FitnessEngine::new(&mock, &vocab, FitnessOptions::default());
        let s = eng.program_fitness(&rec, &genome);
        assert_eq!(s.status, ProgramStatus::Ok);
        assert_eq!(s.oov_base, 0);
        assert_eq!(s.oov_opt, 0);
        let expected = 2.0 / 18.0_f64.sqrt();
        assert!((s.sim_g - expected).abs() < 1e-9, "sim {}", s.sim_g);
        assert!((s.score - expected).abs() < 1e-9, "score {}", s.score);
    }

    #[test]
    fn oov_multiplier_applies() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_src(dir.path(), "p.c", "int main() { int a = 1; return a; }");
        let genome = {
            let mut g = FlagVector::zeros(4);
            g.set(1, true);
            g
        };
        // Optimized IR introduces one statement outside the baseline vocab.
        let opt_ir = "define i32 @main() {\n  %1 = add nsw i32 2, 3\n  ret i32 0\n}\n";
        let mock = MockBackend {
            baselines: HashMap::from([(rec.id.clone(), BASE_IR.to_string())]),
            optimized: HashMap::from([((rec.id.clone(), genome.to_hex()), opt_ir.to_string())]),
        };
        let vocab = vocab_for(&[BASE_IR]);
        let eng = FitnessEngine::new(&mock, &vocab, FitnessOptions::default());
        let s = eng.program_fitness(&rec, &genome);
        assert_eq!(s.oov_opt, 1);
        assert!((s.score - s.sim_g * 0.5).abs() < 1e-12, "multiplier 1/2");
    }

    #[test]
    fn src_proxy_gives_self_similarity_one() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_src(dir.path(), "broken.c", "int f( { not c at all");
        let genome = FlagVector::zeros(4);
        let mock = MockBackend {
            baselines: HashMap::from([(rec.id.clone(), BASE_IR.to_string())]),
            optimized: HashMap::from([((rec.id.clone(), genome.to_hex()), BASE_IR.to_string())]),
        };
        let vocab = vocab_for(&[BASE_IR]);
        let eng = FitnessEngine::new(&mock, &vocab, FitnessOptions::default());
        let s = eng.program_fitness(&rec, &genome);
        assert_eq!(s.status, ProgramStatus::OkSrcProxy);
        assert_eq!(s.sim_g, 1.0, "identical graphs are exactly 1");
        assert_eq!(s.score, 1.0);
    }

    #[test]
    fn src_proxy_off_quarantines_unparseable_source() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_src(dir.path(), "broken.c", "int f( {");
        let mock = MockBackend {
            baselines: HashMap::from([(rec.id.clone(), BASE_IR.to_string())]),
            optimized: HashMap::new(),
        };
        let vocab = vocab_for(&[BASE_IR]);
        let opts = FitnessOptions { src_proxy: SrcProxy::Off, ..Default::default() };
        let eng = FitnessEngine::new(&mock, &vocab, opts);
        let s = eng.program_fitness(&rec, &FlagVector::zeros(4));
        assert_eq!(s.status, ProgramStatus::Quarantined);
        assert_eq!(s.score, 0.0);
    }

    #[test]
    fn failures_stay_in_the_mean_quarantine_leaves_it() {
        let dir = tempfile::tempdir().unwrap();
        let good = write_src(dir.path(), "good.c", "int main() { return 0; }");
        let fragile = write_src(dir.path(), "fragile.c", "int main() { return 1; }");
        let dead = write_src(dir.path(), "dead.c", "int main() { return 2; }");
        let genome = FlagVector::zeros(4);
        let mock = MockBackend {
            baselines: HashMap::from([
                (good.id.clone(), BASE_IR.to_string()),
                (fragile.id.clone(), BASE_IR.to_string()),
                // dead.c has no baseline => quarantined
            ]),
            // fragile.c has no optimized entry => optimize fails, scores 0
            optimized: HashMap::from([((good.id.clone(), genome.to_hex()), BASE_IR.to_string())]),
        };
        let vocab = vocab_for(&[BASE_IR]);
        let eng = FitnessEngine::new(&mock, &vocab, FitnessOptions::default());
        let rep = eng.sequence_fitness(&genome, &[&good, &fragile, &dead]);
        assert_eq!(rep.per_program.len(), 3);
        assert_eq!(rep.per_program[1].status, ProgramStatus::OptimizeFailed);
        assert_eq!(rep.per_program[2].status, ProgramStatus::Quarantined);
        let good_score = rep.per_program[0].score;
        assert!(good_score > 0.0);
        // mean over {good, fragile}: fragile contributes a hard 0
        assert!((rep.aggregate_f - good_score / 2.0).abs() < 1e-12);
        assert_eq!(rep.failures, 2);
        assert!(!rep.all_quarantined);
    }

    #[test]
    fn all_quarantined_aggregates_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_src(dir.path(), "p.c", "int main() { return 0; }");
        let mock = MockBackend { baselines: HashMap::new(), optimized: HashMap::new() };
        let vocab = vocab_for(&[BASE_IR]);
        let eng = FitnessEngine::new(&mock, &vocab, FitnessOptions::default());
        let rep = eng.sequence_fitness(&FlagVector::zeros(4), &[&rec]);
        assert!(rep.all_quarantined);
        assert_eq!(rep.aggregate_f, 0.0);
    }

    #[test]
    fn evaluation_is_deterministic_and_memoized() {
        let dir = tempfile::tempdir().unwrap();
        let rec = write_src(dir.path(), "p.c", "int main() { int a = 1; return a; }");
        let genome = FlagVector::zeros(4);
        let mock = MockBackend {
            baselines: HashMap::from([(rec.id.clone(), BASE_IR.to_string())]),
            optimized: HashMap::from([((rec.id.clone(), genome.to_hex()), BASE_IR.to_string())]),
        };
        let vocab = vocab_for(&[BASE_IR]);
        let eng = FitnessEngine::new(&mock, &vocab, FitnessOptions::default());
        let a = eng.sequence_fitness(&genome, &[&rec]);
        let b = eng.sequence_fitness(&genome, &[&rec]);
        assert_eq!(a, b);
        assert_eq!(a.aggregate_f, a.per_program[0].score, "|P|=1 aggregate");
    }

    #[test]
    fn report_tsv_shape() {
        let rep = report_from_scores(vec![
            ProgramScore {
                program_id: "x.c".into(),
                sim_g: 0.8,
                oov_base: 0,
                oov_opt: 2,
                score: 0.8 / 3.0,
                status: ProgramStatus::Ok,
                note: String::new(),
            },
            ProgramScore::failed("y.c", ProgramStatus::OptimizeFailed, "boom".into()),
        ]);
        let tsv = rep.to_tsv();
        assert!(tsv.starts_with("program_id\t"));
        assert!(tsv.contains("x.c\t0.8"));
        assert!(tsv.contains("optimize-failed"));
        assert!(tsv.contains("# aggregate_F"));
        let mean = (0.8 / 3.0) / 2.0;
        assert!((rep.aggregate_f - mean).abs() < 1e-12);
    }
}
