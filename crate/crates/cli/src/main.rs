//! irforge: search LLVM optimization-flag subsets whose output IR stays
//! structurally close to the source, then validate the payoff with a
//! retrieval experiment.
//!
//! Workflow: `build` (ingest + baselines + vocabulary + flag catalog) →
//! `search` (GA over flag vectors) → `apply` (emit top-K optimized IR) →
//! `eval` (triplet-trained embeddings, MAP@R / AP) → `ablate` (per-flag
//! leave-one-out potency).
//!
//! Exit codes: 0 success, 1 partial (quarantines or per-pair failures),
//! 2 usage/configuration error.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use irforge_core::ablate::{leave_one_out, CategoryMap};
use irforge_core::compile::{
    enumerate_flags, CompileEngine, EngineOptions, FlagCatalog, FlagFilter, Toolchain,
};
use irforge_core::corpus::{sample_validation, Corpus, ProgramRecord, ValidationSet};
use irforge_core::embed::{
    ir_features, retrieval_metrics, sample_negatives, source_features, train, Batch, Triplet,
    TripletModel,
};
use irforge_core::fitness::{FitnessEngine, FitnessOptions, ValidationEval};
use irforge_core::ga::{self, Archive, DirSink, GaConfig};
use irforge_core::irgraph::parse_ir;
use irforge_core::vocab::{build_vocab, Vocabulary};
use irforge_core::workspace::{atomic_write, Workspace, WorkspaceMeta};
use irforge_core::{embed, sha256_hex};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "irforge", version, about = "source-proximate LLVM flag search")]
struct Cli {
    /// Worker pool size (default: logical CPU count).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ingest a corpus, compile -O0 baselines, build vocabulary and catalog.
    Build(BuildArgs),
    /// Run the GA flag search over the validation subset.
    Search(SearchArgs),
    /// Compile training programs with each archived flag sequence.
    Apply(ApplyArgs),
    /// Train embeddings per mode and report retrieval metrics.
    Eval(EvalArgs),
    /// Leave-one-out potency of one archived genome.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Directory of .c programs (subdirectory name = class label).
    #[arg(long)]
    corpus: PathBuf,
    /// Optional manifest: `relative/path.c<TAB>label` per line.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    workspace: PathBuf,
    /// Fraction of each class reserved for the test split.
    #[arg(long, default_value_t = 0.2)]
    test_frac: f64,
    /// Truncate the enumerated flag catalog to its first N entries.
    #[arg(long)]
    max_flags: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    workspace: PathBuf,
    #[arg(long, default_value_t = 800)]
    gens: u32,
    #[arg(long, default_value_t = 20)]
    pop: usize,
    #[arg(long, default_value_t = 6)]
    topk: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Validation subset fraction of the train split.
    #[arg(long, default_value_t = 0.05)]
    val_frac: f64,
    /// Continue from the latest checkpoint instead of starting fresh.
    #[arg(long, default_value_t = false)]
    resume: bool,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    workspace: PathBuf,
    /// Output directory for optimized IR files and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// How many archive entries to apply (clamped to archive size).
    #[arg(long, default_value_t = 6)]
    topk: usize,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    workspace: PathBuf,
    /// Comma-separated: src, src+o0, src+topk.
    #[arg(long, value_delimiter = ',', required = true)]
    mode: Vec<String>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = embed::DEFAULT_HASH_DIM)]
    hash_dim: usize,
    #[arg(long, default_value_t = embed::DEFAULT_EMBED_DIM)]
    embed_dim: usize,
    #[arg(long, default_value_t = embed::DEFAULT_MARGIN)]
    margin: f64,
    #[arg(long, default_value_t = 400)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    workspace: PathBuf,
    /// 1-based archive rank to ablate.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Validation sampling seed; only used when the workspace has no
    /// stored validation set from a previous search.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    val_frac: f64,
    /// Optional flag-category map file (flag<TAB>category per line).
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

/// Usage/configuration problems exit 2; partial completions exit 1.
enum Outcome {
    Clean,
    Partial,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let res = match cli.cmd {
        Cmd::Build(a) => cmd_build(a),
        Cmd::Search(a) => cmd_search(a),
        Cmd::Apply(a) => cmd_apply(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Ablate(a) => cmd_ablate(a),
    };
    match res {
        Ok(Outcome::Clean) => ExitCode::from(0),
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("irforge: error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn toolchain_from_env() -> Result<Toolchain> {
    Toolchain::from_env().map_err(|e| {
        anyhow!(
            "{e}\nset IRFORGE_CC to a clang-compatible driver and IRFORGE_OPT to an \
             opt-compatible IR optimizer"
        )
    })
}

fn sanitize_id(id: &str) -> String {
    id.chars().map(|c| if c == '/' || c == '\\' { "__".to_string() } else { c.to_string() }).collect()
}

// ---------------------------------------------------------------------------
// Shared workspace loading

struct Loaded {
    ws: Workspace,
    toolchain: Toolchain,
    catalog: FlagCatalog,
    corpus: Corpus,
    quarantined: BTreeSet<String>,
}

fn load_workspace(root: &Path) -> Result<Loaded> {
    let ws = Workspace::open(root).map_err(|e| anyhow!("{e}"))?;
    let meta = ws.read_meta().context("reading workspace.json")?;
    let toolchain = toolchain_from_env()?;
    if toolchain.version != meta.toolchain_version {
        eprintln!(
            "irforge: warning: toolchain changed since build ({} -> {}); cache keys will miss",
            meta.toolchain_version, toolchain.version
        );
    }
    let catalog = FlagCatalog::from_text(
        &std::fs::read_to_string(ws.flag_catalog()).context("reading flag catalog")?,
    )?;
    let corpus = Corpus::from_index_text(
        &meta.corpus_root,
        &std::fs::read_to_string(ws.corpus_index()).context("reading corpus index")?,
    )?;
    let quarantined = read_quarantine(&ws)?;
    Ok(Loaded { ws, toolchain, catalog, corpus, quarantined })
}

fn read_quarantine(ws: &Workspace) -> Result<BTreeSet<String>> {
    let path = ws.quarantine_file();
    if !path.is_file() {
        return Ok(BTreeSet::new());
    }
    Ok(std::fs::read_to_string(&path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split('\t').next().unwrap_or(l).to_string())
        .collect())
}

fn load_vocab(ws: &Workspace) -> Result<Vocabulary> {
    let text = std::fs::read_to_string(ws.vocab_file()).context("reading vocabulary")?;
    Vocabulary::from_text(&text).map_err(|e| anyhow!("{e}"))
}

fn engine_for(l: &Loaded) -> CompileEngine {
    CompileEngine::new(
        l.toolchain.clone(),
        l.catalog.clone(),
        &l.ws.cache_dir(),
        EngineOptions::default(),
    )
}

fn members_of<'c>(l: &'c Loaded, sample: &ValidationSet) -> Vec<&'c ProgramRecord> {
    sample.member_ids.iter().filter_map(|id| l.corpus.record(id)).collect()
}

fn validation_file(ws: &Workspace) -> PathBuf {
    ws.checkpoints_dir().join("validation.json")
}

/// The validation subset is pinned to the search run: written once at search
/// start, then reloaded verbatim by `--resume` and by `ablate` so fitness
/// values stay comparable across invocations.
fn stored_validation(ws: &Workspace) -> Result<Option<ValidationSet>> {
    let path = validation_file(ws);
    if !path.is_file() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&std::fs::read(&path)?).context("parsing validation.json")?))
}

fn read_archive(ws: &Workspace) -> Result<Archive> {
    let path = ws.checkpoints_dir().join("archive.json");
    let bytes = std::fs::read(&path)
        .with_context(|| format!("{} missing (run `irforge search` first)", path.display()))?;
    serde_json::from_slice(&bytes).context("parsing archive.json")
}

// ---------------------------------------------------------------------------
// build

#[derive(Serialize)]
struct BuildSummary {
    programs: usize,
    train: usize,
    test: usize,
    classes: usize,
    flags: usize,
    compiled: usize,
    quarantined: Vec<String>,
    vocabulary_size: usize,
}

fn cmd_build(a: BuildArgs) -> Result<Outcome> {
    let toolchain = toolchain_from_env()?;
    let ws = Workspace::create(&a.workspace).context("creating workspace")?;
    let corpus_root = a.corpus.canonicalize().context("corpus directory")?;
    let mut corpus = Corpus::ingest(&corpus_root, a.manifest.as_deref())?;
    for w in &corpus.warnings {
        eprintln!("irforge: warning: {w}");
    }
    corpus.split_by_record(a.test_frac)?;

    let mut catalog = enumerate_flags(&toolchain, &FlagFilter::default())?;
    if let Some(mx) = a.max_flags {
        if mx == 0 {
            return Err(anyhow!("--max-flags must be positive"));
        }
        catalog.flags.truncate(mx);
    }
    atomic_write(&ws.flag_catalog(), catalog.to_text().as_bytes())?;

    let engine =
        CompileEngine::new(toolchain.clone(), catalog.clone(), &ws.cache_dir(), EngineOptions::default());
    let results: Vec<(String, irforge_core::compile::CompileOutcome)> = corpus
        .records()
        .par_iter()
        .map(|r| (r.id.clone(), engine.compile_baseline(r)))
        .collect();

    let mut quarantined: BTreeMap<String, String> = BTreeMap::new();
    for (id, out) in &results {
        if !out.is_ok() {
            let note = out.stderr_excerpt.lines().next().unwrap_or("").to_string();
            quarantined.insert(id.clone(), format!("{:?}\t{}", out.status, note));
        }
    }
    let compiled = results.len() - quarantined.len();
    if compiled == 0 {
        return Err(anyhow!("zero compilable programs in {}", corpus_root.display()));
    }

    // Vocabulary over compilable train baselines; IR that will not parse is
    // quarantined alongside compile failures.
    let mut train_modules = Vec::new();
    for rec in corpus.train() {
        if quarantined.contains_key(&rec.id) {
            continue;
        }
        let out = engine.compile_baseline(rec); // cache hit
        let ir = out.ir.expect("ok outcome has IR");
        match parse_ir(&ir.text) {
            Ok(m) => train_modules.push(m),
            Err(e) => {
                quarantined.insert(rec.id.clone(), format!("IrParse\t{e}"));
            }
        }
    }
    if train_modules.is_empty() {
        return Err(anyhow!("zero compilable training programs; cannot build vocabulary"));
    }

    let index_text = corpus.to_index_text();
    let corpus_digest = sha256_hex(index_text.as_bytes());
    let vocab = build_vocab(&train_modules, &corpus_digest, &toolchain.version)?;
    atomic_write(&ws.vocab_file(), vocab.to_text().as_bytes())?;
    atomic_write(&ws.corpus_index(), index_text.as_bytes())?;
    let qtext: String =
        quarantined.iter().map(|(id, note)| format!("{id}\t{note}\n")).collect();
    atomic_write(&ws.quarantine_file(), qtext.as_bytes())?;
    ws.write_meta(&WorkspaceMeta {
        corpus_root,
        cc: toolchain.cc.clone(),
        opt: toolchain.opt.clone(),
        toolchain_version: toolchain.version.clone(),
    })?;

    let summary = BuildSummary {
        programs: corpus.records().len(),
        train: corpus.train().len(),
        test: corpus.test().len(),
        classes: corpus.class_labels().len(),
        flags: catalog.len(),
        compiled,
        quarantined: quarantined.keys().cloned().collect(),
        vocabulary_size: vocab.len(),
    };
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary)?),
        Format::Tsv => {
            println!("programs\t{}", summary.programs);
            println!("train\t{}", summary.train);
            println!("test\t{}", summary.test);
            println!("classes\t{}", summary.classes);
            println!("flags\t{}", summary.flags);
            println!("compiled\t{}", summary.compiled);
            println!("vocabulary_size\t{}", summary.vocabulary_size);
            println!("quarantined\t{}", summary.quarantined.join(","));
        }
    }
    if summary.quarantined.is_empty() {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::Partial)
    }
}

// ---------------------------------------------------------------------------
// search

fn archive_tsv(archive: &Archive, catalog: &FlagCatalog) -> String {
    let mut out = String::from("rank\tbits\tfitness\tgeneration\tflags\n");
    for (i, e) in archive.entries().iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{:.9}\t{}\t{}\n",
            i + 1,
            e.genome.to_hex(),
            e.fitness,
            e.generation,
            e.genome.enabled(catalog).join(" ")
        ));
    }
    out
}

fn cmd_search(a: SearchArgs) -> Result<Outcome> {
    let l = load_workspace(&a.workspace)?;
    let vocab = load_vocab(&l.ws)?;
    let sample = if a.resume {
        stored_validation(&l.ws)?.ok_or_else(|| {
            anyhow!("--resume: {} missing", validation_file(&l.ws).display())
        })?
    } else {
        let s = sample_validation(&l.corpus, a.val_frac, a.seed)?;
        atomic_write(&validation_file(&l.ws), &serde_json::to_vec_pretty(&s)?)?;
        s
    };
    let members = members_of(&l, &sample);
    let in_quarantine =
        members.iter().filter(|r| l.quarantined.contains(&r.id)).count();
    if in_quarantine > 0 {
        eprintln!(
            "irforge: warning: {in_quarantine}/{} validation members are quarantined",
            members.len()
        );
    }
    let engine = engine_for(&l);
    let fitness = FitnessEngine::new(&engine, &vocab, FitnessOptions::default());
    let mut eval = ValidationEval {
        fitness: &fitness,
        members,
        reports_dir: Some(l.ws.reports_dir().join("fitness")),
    };
    let ckpt_dir = l.ws.checkpoints_dir();
    let mut sink = DirSink { dir: ckpt_dir.clone() };

    let run = if a.resume {
        let state = ga::load_checkpoint(&ckpt_dir.join("latest.json"))
            .map_err(|e| anyhow!("--resume: {e} (no checkpoint to resume?)"))?;
        if state.config.genome_len != l.catalog.len() {
            return Err(anyhow!(
                "checkpoint genome length {} does not match catalog {}",
                state.config.genome_len,
                l.catalog.len()
            ));
        }
        eprintln!(
            "irforge: resuming from generation {} of {}",
            state.t, state.config.generations
        );
        ga::resume(state, &mut eval, &mut sink)?
    } else {
        let cfg = GaConfig {
            genome_len: l.catalog.len(),
            population: a.pop,
            generations: a.gens,
            archive_k: a.topk,
            seed: a.seed,
            ..GaConfig::paper_defaults(l.catalog.len(), a.seed)
        };
        ga::run(&cfg, &mut eval, &mut sink)?
    };

    atomic_write(&ckpt_dir.join("archive.json"), &serde_json::to_vec_pretty(&run.archive)?)?;
    atomic_write(&ckpt_dir.join("archive.tsv"), archive_tsv(&run.archive, &l.catalog).as_bytes())?;
    atomic_write(&ckpt_dir.join("trace.tsv"), ga::trace_tsv(&run.trace).as_bytes())?;

    match a.format {
        Format::Json => {
            let best = run.archive.best();
            println!(
                "{}",
                serde_json::json!({
                    "generations": run.trace.len().saturating_sub(1),
                    "archive_len": run.archive.entries().len(),
                    "best_fitness": best.map(|b| b.fitness),
                    "best_bits": best.map(|b| b.genome.to_hex()),
                })
            );
        }
        Format::Tsv => print!("{}", archive_tsv(&run.archive, &l.catalog)),
    }
    Ok(Outcome::Clean)
}

// ---------------------------------------------------------------------------
// apply

#[derive(Serialize)]
struct ApplyRow {
    program_id: String,
    rank: usize,
    bits: String,
    status: String,
    digest: String,
    file: String,
}

fn manifest_tsv(rows: &[ApplyRow]) -> String {
    let mut out = String::from("program_id\trank\tbits\tstatus\tdigest\tfile\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.program_id, r.rank, r.bits, r.status, r.digest, r.file
        ));
    }
    out
}

fn cmd_apply(a: ApplyArgs) -> Result<Outcome> {
    let l = load_workspace(&a.workspace)?;
    let archive = read_archive(&l.ws)?;
    if archive.entries().is_empty() {
        return Err(anyhow!("archive is empty; nothing to apply"));
    }
    let k = a.topk.min(archive.entries().len());
    let entries = &archive.entries()[..k];
    std::fs::create_dir_all(&a.out).context("creating --out directory")?;
    let out_dir = a.out.canonicalize()?;
    let engine = engine_for(&l);

    let programs: Vec<&ProgramRecord> = l
        .corpus
        .train()
        .into_iter()
        .filter(|r| !l.quarantined.contains(&r.id))
        .collect();
    let rows: Vec<ApplyRow> = programs
        .par_iter()
        .flat_map_iter(|rec| {
            let base = engine.compile_baseline(rec);
            let mut rows = Vec::with_capacity(k);
            for (i, e) in entries.iter().enumerate() {
                let rank = i + 1;
                let row = match &base.ir {
                    None => ApplyRow {
                        program_id: rec.id.clone(),
                        rank,
                        bits: e.genome.to_hex(),
                        status: "baseline-failed".into(),
                        digest: String::new(),
                        file: String::new(),
                    },
                    Some(ir) => {
                        let out = engine.optimize(ir, &e.genome);
                        match out.ir {
                            Some(opt) => {
                                let file = out_dir
                                    .join(format!("{}.rank{}.ll", sanitize_id(&rec.id), rank));
                                match atomic_write(&file, opt.text.as_bytes()) {
                                    Ok(()) => ApplyRow {
                                        program_id: rec.id.clone(),
                                        rank,
                                        bits: e.genome.to_hex(),
                                        status: "ok".into(),
                                        digest: opt.digest.clone(),
                                        file: file.display().to_string(),
                                    },
                                    Err(err) => ApplyRow {
                                        program_id: rec.id.clone(),
                                        rank,
                                        bits: e.genome.to_hex(),
                                        status: format!("write-failed: {err}"),
                                        digest: String::new(),
                                        file: String::new(),
                                    },
                                }
                            }
                            None => ApplyRow {
                                program_id: rec.id.clone(),
                                rank,
                                bits: e.genome.to_hex(),
                                status: format!("optimize-failed: {:?}", out.status),
                                digest: String::new(),
                                file: String::new(),
                            },
                        }
                    }
                };
                rows.push(row);
            }
            rows
        })
        .collect();

    let ok = rows.iter().filter(|r| r.status == "ok").count();
    if ok == 0 {
        return Err(anyhow!("no optimized IR produced ({} attempts failed)", rows.len()));
    }
    let text = manifest_tsv(&rows);
    atomic_write(&out_dir.join("manifest.tsv"), text.as_bytes())?;
    atomic_write(&l.ws.apply_manifest(), text.as_bytes())?;

    // distinctness: programs with >= 2 digest-distinct optimized outputs
    let mut by_prog: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == "ok") {
        by_prog.entry(&r.program_id).or_default().insert(&r.digest);
    }
    let distinct2 = by_prog.values().filter(|s| s.len() >= 2).count();

    match a.format {
        Format::Json => println!(
            "{}",
            serde_json::json!({
                "programs": programs.len(),
                "ranks": k,
                "written": ok,
                "failed": rows.len() - ok,
                "programs_with_2_distinct": distinct2,
                "manifest": out_dir.join("manifest.tsv").display().to_string(),
            })
        ),
        Format::Tsv => {
            println!("programs\t{}", programs.len());
            println!("ranks\t{k}");
            println!("written\t{ok}");
            println!("failed\t{}", rows.len() - ok);
            println!("programs_with_2_distinct\t{distinct2}");
        }
    }
    if ok == rows.len() {
        Ok(Outcome::Clean)
    } else {
        Ok(Outcome::Partial)
    }
}

// ---------------------------------------------------------------------------
// eval

#[derive(Clone, Copy, PartialEq, Eq)]
enum EvalMode {
    Src,
    SrcO0,
    SrcTopK,
}

impl EvalMode {
    fn parse(s: &str) -> Result<EvalMode> {
        match s {
            "src" => Ok(EvalMode::Src),
            "src+o0" => Ok(EvalMode::SrcO0),
            "src+topk" => Ok(EvalMode::SrcTopK),
            other => Err(anyhow!("unknown eval mode {other:?} (src, src+o0, src+topk)")),
        }
    }

    fn name(self) -> &'static str {
        match self {
            EvalMode::Src => "src",
            EvalMode::SrcO0 => "src+o0",
            EvalMode::SrcTopK => "src+topk",
        }
    }
}

#[derive(Serialize)]
struct EvalRow {
    mode: String,
    map_at_r: f64,
    ap: f64,
    queries: usize,
    skipped: usize,
    triplets: usize,
}

fn cmd_eval(a: EvalArgs) -> Result<Outcome> {
    use rand::{Rng, SeedableRng};
    let modes: Vec<EvalMode> =
        a.mode.iter().map(|m| EvalMode::parse(m)).collect::<Result<_>>()?;
    let l = load_workspace(&a.workspace)?;
    let engine = engine_for(&l);

    let train: Vec<&ProgramRecord> = l
        .corpus
        .train()
        .into_iter()
        .filter(|r| !l.quarantined.contains(&r.id))
        .collect();
    if train.is_empty() {
        return Err(anyhow!("no usable training programs"));
    }

    // Test queries come from classes with >= 2 surviving test members.
    let test_all: Vec<&ProgramRecord> = l
        .corpus
        .test()
        .into_iter()
        .filter(|r| !l.quarantined.contains(&r.id))
        .collect();
    let mut class_count: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &test_all {
        *class_count.entry(r.class_label.as_str()).or_default() += 1;
    }
    let excluded: Vec<&str> = class_count
        .iter()
        .filter(|(_, &c)| c < 2)
        .map(|(&k, _)| k)
        .collect();
    if !excluded.is_empty() {
        eprintln!(
            "irforge: notice: excluding test classes with <2 members: {}",
            excluded.join(", ")
        );
    }
    let test: Vec<&ProgramRecord> = test_all
        .iter()
        .filter(|r| class_count[r.class_label.as_str()] >= 2)
        .copied()
        .collect();
    if test.len() < 2 {
        return Err(anyhow!("fewer than 2 usable test programs; cannot evaluate retrieval"));
    }

    let read_src = |rec: &ProgramRecord| -> Result<Vec<f64>> {
        let text = std::fs::read_to_string(&rec.source_path)
            .with_context(|| format!("reading {}", rec.source_path.display()))?;
        Ok(source_features(&text, a.hash_dim, a.seed))
    };
    let train_src: Vec<Vec<f64>> =
        train.iter().map(|r| read_src(r)).collect::<Result<_>>()?;
    let test_src: Vec<Vec<f64>> = test.iter().map(|r| read_src(r)).collect::<Result<_>>()?;

    // IR view providers, computed lazily per mode; each view carries the
    // class label of its program.
    let o0_features = |()| -> Result<Vec<(usize, Vec<f64>)>> {
        train
            .par_iter()
            .enumerate()
            .map(|(i, rec)| {
                let out = engine.compile_baseline(rec);
                let ir = out
                    .ir
                    .ok_or_else(|| anyhow!("baseline missing for {} at eval time", rec.id))?;
                let module = parse_ir(&ir.text).map_err(|e| anyhow!("{}: {e}", rec.id))?;
                Ok((i, ir_features(&module, a.hash_dim, a.seed)))
            })
            .collect()
    };
    let topk_features = |()| -> Result<Vec<(usize, Vec<f64>)>> {
        let manifest = std::fs::read_to_string(l.ws.apply_manifest())
            .context("apply manifest missing (run `irforge apply` first)")?;
        let index_of: BTreeMap<&str, usize> =
            train.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        let mut jobs = Vec::new();
        for line in manifest.lines().skip(1) {
            let cols: Vec<&str> = line.split('\t').collect();
            let [program_id, _rank, _bits, status, _digest, file] = cols[..] else {
                continue;
            };
            if status != "ok" {
                continue;
            }
            if let Some(&i) = index_of.get(program_id) {
                jobs.push((i, file.to_string()));
            }
        }
        jobs.par_iter()
            .map(|(i, file)| {
                let text = std::fs::read_to_string(file)
                    .with_context(|| format!("reading optimized IR {file}"))?;
                let module = parse_ir(&text).map_err(|e| anyhow!("{file}: {e}"))?;
                Ok((*i, ir_features(&module, a.hash_dim, a.seed)))
            })
            .collect()
    };

    let train_labels: Vec<&str> = train.iter().map(|r| r.class_label.as_str()).collect();
    let negatives = sample_negatives(&train_labels, a.seed);
    let positives = sample_positives(&train_labels, a.seed.wrapping_add(1));

    let mut rows = Vec::new();
    for mode in &modes {
        // Base triplets are source-vs-source over the train split. IR modes
        // then add one triplet per (program, IR view): the anchor is the IR
        // embedding, the positive the program's own source embedding, the
        // negative a freshly sampled unrelated source (one negative per
        // (anchor, positive) pair).
        let mut features = train_src.clone();
        let mut triplets: Vec<Triplet> = (0..train.len())
            .filter_map(|i| match (positives[i], negatives[i]) {
                (Some(p), Some(n)) => {
                    Some(Triplet { anchor: i, positive: p, negative: n })
                }
                _ => None,
            })
            .collect();
        let ir_views: Vec<(usize, Vec<f64>)> = match mode {
            EvalMode::Src => vec![],
            EvalMode::SrcO0 => o0_features(())?,
            EvalMode::SrcTopK => topk_features(())?,
        };
        let mut neg_rng = rand_chacha::ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(2));
        for (prog_idx, feat) in ir_views {
            let others: Vec<usize> = (0..train.len())
                .filter(|&j| train_labels[j] != train_labels[prog_idx])
                .collect();
            if others.is_empty() {
                continue;
            }
            let neg = others[neg_rng.gen_range(0..others.len())];
            let anchor = features.len();
            features.push(feat);
            triplets.push(Triplet { anchor, positive: prog_idx, negative: neg });
        }
        if triplets.is_empty() {
            return Err(anyhow!(
                "no trainable triplets (need >=2 classes with >=2 train members)"
            ));
        }
        let batch = Batch { features: &features, triplets: &triplets };
        let model0 = TripletModel::init(a.hash_dim, a.embed_dim, a.margin, a.seed);
        let trained = train_model(&model0, &batch, a.steps, a.lr, a.seed)?;
        let embeddings: Vec<Vec<f64>> =
            test_src.iter().map(|x| trained.project(x)).collect();
        let labels: Vec<&str> = test.iter().map(|r| r.class_label.as_str()).collect();
        let res = retrieval_metrics(&embeddings, &labels).map_err(|e| anyhow!("{e}"))?;
        rows.push(EvalRow {
            mode: mode.name().to_string(),
            map_at_r: res.map_at_r,
            ap: res.ap,
            queries: res.per_query.len(),
            skipped: res.skipped.len(),
            triplets: triplets.len(),
        });
    }

    let tsv = eval_tsv(&rows);
    atomic_write(
        &l.ws.reports_dir().join(format!("eval-seed{}.tsv", a.seed)),
        tsv.as_bytes(),
    )?;
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rows)?),
        Format::Tsv => print!("{tsv}"),
    }
    Ok(Outcome::Clean)
}

fn train_model(
    model: &TripletModel,
    batch: &Batch,
    steps: usize,
    lr: f64,
    seed: u64,
) -> Result<TripletModel> {
    train(model, batch, steps, lr, seed).map_err(|e| anyhow!("training failed: {e}"))
}

fn eval_tsv(rows: &[EvalRow]) -> String {
    let mut out = String::from("mode\tmap_at_r\tap\tqueries\tskipped\ttriplets\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.9}\t{:.9}\t{}\t{}\t{}\n",
            r.mode, r.map_at_r, r.ap, r.queries, r.skipped, r.triplets
        ));
    }
    out
}

/// For each item, a seeded same-class partner (None for singletons).
fn sample_positives(labels: &[&str], seed: u64) -> Vec<Option<usize>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let candidates: Vec<usize> = (0..labels.len())
                .filter(|&j| j != i && labels[j] == *l)
                .collect();
            if candidates.is_empty() {
                None
            } else {
                Some(candidates[rng.gen_range(0..candidates.len())])
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// ablate

fn cmd_ablate(a: AblateArgs) -> Result<Outcome> {
    let l = load_workspace(&a.workspace)?;
    let vocab = load_vocab(&l.ws)?;
    let archive = read_archive(&l.ws)?;
    let n = archive.entries().len();
    if a.rank == 0 || a.rank > n {
        return Err(anyhow!("--rank {} out of range (archive has {n} entries)", a.rank));
    }
    let entry = &archive.entries()[a.rank - 1];
    if entry.genome.count_ones() == 0 {
        return Err(anyhow!("archive rank {} enables no flags; nothing to ablate", a.rank));
    }
    let sample = match stored_validation(&l.ws)? {
        Some(s) => s,
        None => sample_validation(&l.corpus, a.val_frac, a.seed)?,
    };
    let members = members_of(&l, &sample);
    let categories = match &a.categories {
        Some(path) => CategoryMap::from_text(&std::fs::read_to_string(path)?)
            .map_err(|e| anyhow!("--categories: {e}"))?,
        None => CategoryMap::builtin(),
    };
    let engine = engine_for(&l);
    let fitness = FitnessEngine::new(&engine, &vocab, FitnessOptions::default());
    let report = leave_one_out(&fitness, &l.catalog, &entry.genome, &members, &categories);
    let tsv = report.to_tsv();
    atomic_write(
        &l.ws.reports_dir().join(format!("potency-rank{}.tsv", a.rank)),
        tsv.as_bytes(),
    )?;
    match a.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Tsv => {
            print!("{tsv}");
            eprintln!("{}", report.summary());
        }
    }
    Ok(Outcome::Clean)
}
