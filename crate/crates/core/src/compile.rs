//! External-toolchain driver: baseline -O0 IR per program, flag-subset
//! optimization runs, and a content-addressed on-disk cache for both.
//!
//! Two binaries are involved, supplied by the caller (the CLI reads
//! `IRFORGE_CC` / `IRFORGE_OPT`): a C frontend that can emit textual IR
//! without optimization, and a standalone IR optimizer. Three optimizer
//! dialects are recognized at probe time:
//!
//! * `Shim`   — responds to `--print-flags`; takes `-flag` arguments.
//! * `NewPm`  — responds to `--print-passes`; takes `-passes=a,b`.
//! * `Legacy` — classic `opt`; flags scraped from `--help`.
//!
//! Baselines are normalized through an identity optimizer run so that the
//! all-zeros genome reproduces the baseline byte-for-byte and the statement
//! vocabulary sees one printing style regardless of the frontend.
//!
//! Every child process runs with a wall-clock timeout and an address-space
//! cap; failures (nonzero exit, timeout) are cached like successes so the GA
//! never pays for the same broken genome twice.

use crate::corpus::ProgramRecord;
use crate::sha256_hex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{Read, Seek};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("{role} binary not found or not runnable at `{path}`: {source}. Set {env} to a working binary.")]
    ToolNotFound {
        role: &'static str,
        env: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("optimizer at `{path}` answered neither --print-flags, --print-passes, nor --help; cannot determine dialect")]
    UnknownDialect { path: PathBuf },
    #[error("environment variable {0} is not set (point it at the toolchain binary)")]
    EnvUnset(&'static str),
    #[error("flag catalog is empty after filtering; search cannot start")]
    EmptyCatalog,
    #[error("flag catalog line {line}: {msg}")]
    CatalogParse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Flag vectors

/// A fixed-length bit vector over the flag catalog: bit i enables flag i.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlagVector {
    bits: Vec<bool>,
}

impl FlagVector {
    pub fn zeros(len: usize) -> Self {
        FlagVector { bits: vec![false; len] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        FlagVector { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Little-endian byte packing (bit i at byte i/8, position i%8), hex
    /// encoded. The stable identity used in cache keys and reports.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, len: usize) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut bits = vec![false; len];
        for (i, bit) in bits.iter_mut().enumerate() {
            *bit = bytes[i / 8] >> (i % 8) & 1 == 1;
        }
        // Bits beyond len must be zero.
        for (i, &byte) in bytes.iter().enumerate() {
            for j in 0..8 {
                if i * 8 + j >= len && byte >> j & 1 == 1 {
                    return None;
                }
            }
        }
        Some(FlagVector { bits })
    }

    pub fn bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    /// Enabled flag names, in catalog order.
    pub fn enabled<'c>(&self, catalog: &'c FlagCatalog) -> Vec<&'c str> {
        assert_eq!(self.bits.len(), catalog.flags.len(), "genome/catalog length mismatch");
        catalog
            .flags
            .iter()
            .zip(&self.bits)
            .filter(|(_, &b)| b)
            .map(|(f, _)| f.as_str())
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Toolchain probing

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptDialect {
    Shim,
    NewPm,
    Legacy,
}

#[derive(Clone, Debug)]
pub struct Toolchain {
    pub cc: PathBuf,
    pub opt: PathBuf,
    pub version: String,
    pub dialect: OptDialect,
}

fn first_line(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes)
        .lines()
        .next()
        .unwrap_or("")
        .trim()
        .to_string()
}

impl Toolchain {
    /// Identify both binaries and the optimizer dialect.
    pub fn probe(cc: &Path, opt: &Path) -> Result<Toolchain, CompileError> {
        let cc_ver = Command::new(cc)
            .arg("--version")
            .output()
            .map_err(|e| CompileError::ToolNotFound {
                role: "frontend",
                env: "IRFORGE_CC",
                path: cc.to_path_buf(),
                source: e,
            })?;
        let opt_ver = Command::new(opt)
            .arg("--version")
            .output()
            .map_err(|e| CompileError::ToolNotFound {
                role: "optimizer",
                env: "IRFORGE_OPT",
                path: opt.to_path_buf(),
                source: e,
            })?;
        let dialect = if run_ok(opt, &["--print-flags"]) {
            OptDialect::Shim
        } else if run_ok(opt, &["--print-passes"]) {
            OptDialect::NewPm
        } else if run_ok(opt, &["--help"]) {
            OptDialect::Legacy
        } else {
            return Err(CompileError::UnknownDialect { path: opt.to_path_buf() });
        };
        Ok(Toolchain {
            cc: cc.to_path_buf(),
            opt: opt.to_path_buf(),
            version: format!("cc={} | opt={}", first_line(&cc_ver.stdout), first_line(&opt_ver.stdout)),
            dialect,
        })
    }

    /// Probe from `IRFORGE_CC` / `IRFORGE_OPT`.
    pub fn from_env() -> Result<Toolchain, CompileError> {
        let cc = std::env::var_os("IRFORGE_CC").ok_or(CompileError::EnvUnset("IRFORGE_CC"))?;
        let opt = std::env::var_os("IRFORGE_OPT").ok_or(CompileError::EnvUnset("IRFORGE_OPT"))?;
        Toolchain::probe(Path::new(&cc), Path::new(&opt))
    }
}

fn run_ok(bin: &Path, args: &[&str]) -> bool {
    Command::new(bin)
        .args(args)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

// ---------------------------------------------------------------------------
// Flag catalog

#[derive(Clone, Debug, Default)]
pub struct FlagFilter {
    /// When set, only these names (without leading `-`) survive.
    pub allow: Option<BTreeSet<String>>,
    pub deny: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCatalog {
    pub flags: Vec<String>,
    pub platform: String,
    pub toolchain_version: String,
}

impl FlagCatalog {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# irforge-flags v1\n");
        out.push_str(&format!("# platform {}\n", self.platform));
        out.push_str(&format!("# toolchain {}\n", self.toolchain_version));
        for f in &self.flags {
            out.push_str(f);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<FlagCatalog, CompileError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "# irforge-flags v1")) => {}
            other => {
                return Err(CompileError::CatalogParse {
                    line: 1,
                    msg: format!("bad header {:?}", other.map(|(_, l)| l)),
                })
            }
        }
        let mut platform = String::new();
        let mut toolchain_version = String::new();
        let mut flags = Vec::new();
        for (idx, line) in lines {
            if let Some(rest) = line.strip_prefix("# platform ") {
                platform = rest.to_string();
            } else if let Some(rest) = line.strip_prefix("# toolchain ") {
                toolchain_version = rest.to_string();
            } else if line.is_empty() {
                continue;
            } else if line.starts_with('-') {
                flags.push(line.to_string());
            } else {
                return Err(CompileError::CatalogParse {
                    line: idx + 1,
                    msg: format!("expected a flag starting with `-`, got `{line}`"),
                });
            }
        }
        Ok(FlagCatalog { flags, platform, toolchain_version })
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

/// Names that are listed by real optimizers but are not IR transforms.
fn is_hygiene_denied(name: &str) -> bool {
    name.starts_with("print")
        || name.starts_with("dot-")
        || name.starts_with("view-")
        || name.contains("verify")
        || name.contains("debugify")
}

/// Shim dialect: one `-flag` per line.
pub fn parse_shim_listing(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| l.starts_with('-') && l.len() > 1)
        .map(|l| l.trim_start_matches('-').to_string())
        .collect()
}

/// New-PM dialect: `opt --print-passes` sections; only `... passes:`
/// sections count, parameterized and analysis-style entries are dropped.
pub fn parse_print_passes(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut in_pass_section = false;
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.ends_with(':') {
            let header = trimmed.to_ascii_lowercase();
            in_pass_section = header.contains("passes") && !header.contains("analyses");
            continue;
        }
        if !in_pass_section || trimmed.is_empty() {
            continue;
        }
        let name = trimmed;
        let plausible = name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-');
        if plausible && !is_hygiene_denied(name) {
            out.push(name.to_string());
        }
    }
    out
}

/// Legacy dialect: scrape the `Optimizations available` section of
/// `opt --help`.
pub fn parse_legacy_help(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut in_section = false;
    for line in text.lines() {
        if line.contains("Optimizations available") {
            in_section = true;
            continue;
        }
        if !in_section {
            continue;
        }
        let t = line.trim_start();
        if let Some(rest) = t.strip_prefix("--").or_else(|| t.strip_prefix('-')) {
            let name: String = rest
                .chars()
                .take_while(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || *c == '-')
                .collect();
            if !name.is_empty()
                && rest[name.len()..].trim_start().starts_with('-')
                && !is_hygiene_denied(&name)
            {
                out.push(name);
            }
            continue;
        }
        // Wrapped description lines are deeply indented; anything else ends
        // the section.
        if !line.starts_with("        ") && !t.is_empty() {
            in_section = false;
        }
    }
    out
}

/// List the optimizer's transform flags, filter them, and pin the catalog.
pub fn enumerate_flags(tc: &Toolchain, filter: &FlagFilter) -> Result<FlagCatalog, CompileError> {
    let arg = match tc.dialect {
        OptDialect::Shim => "--print-flags",
        OptDialect::NewPm => "--print-passes",
        OptDialect::Legacy => "--help",
    };
    let output = Command::new(&tc.opt).arg(arg).output()?;
    let text = String::from_utf8_lossy(&output.stdout).into_owned();
    let names = match tc.dialect {
        OptDialect::Shim => parse_shim_listing(&text),
        OptDialect::NewPm => parse_print_passes(&text),
        OptDialect::Legacy => parse_legacy_help(&text),
    };
    let mut seen = BTreeSet::new();
    let mut flags = Vec::new();
    for name in names {
        if let Some(allow) = &filter.allow {
            if !allow.contains(&name) {
                continue;
            }
        }
        if filter.deny.contains(&name) || !seen.insert(name.clone()) {
            continue;
        }
        flags.push(format!("-{name}"));
    }
    if flags.is_empty() {
        return Err(CompileError::EmptyCatalog);
    }
    Ok(FlagCatalog {
        flags,
        platform: std::env::consts::ARCH.to_string(),
        toolchain_version: tc.version.clone(),
    })
}

// ---------------------------------------------------------------------------
// Outcomes

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompileStatus {
    Ok,
    CompileError,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Producer {
    Baseline,
    Optimized { bits_hex: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrText {
    pub text: String,
    pub producer: Producer,
    pub program_id: String,
    pub digest: String,
}

impl IrText {
    fn new(text: String, producer: Producer, program_id: String) -> IrText {
        let digest = sha256_hex(text.as_bytes());
        IrText { text, producer, program_id, digest }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileOutcome {
    pub status: CompileStatus,
    pub ir: Option<IrText>,
    pub stderr_excerpt: String,
    pub wall_time: f64,
    pub cached: bool,
}

impl CompileOutcome {
    pub fn is_ok(&self) -> bool {
        self.status == CompileStatus::Ok
    }
}

const STDERR_EXCERPT_LIMIT: usize = 2000;

fn excerpt(bytes: &[u8]) -> String {
    let s = String::from_utf8_lossy(bytes);
    s.chars().take(STDERR_EXCERPT_LIMIT).collect()
}

// ---------------------------------------------------------------------------
// Subprocess harness

struct RunOut {
    timed_out: bool,
    success: bool,
    stderr: Vec<u8>,
    wall: f64,
}

/// Run a child with stdout/stderr redirected to unlinked temp files (no pipe
/// back-pressure), a wall-clock timeout, and an optional RLIMIT_AS cap.
fn run_limited(
    mut cmd: Command,
    timeout: Duration,
    mem_cap: Option<u64>,
) -> std::io::Result<RunOut> {
    let out_file = tempfile::tempfile()?;
    let mut err_file = tempfile::tempfile()?;
    cmd.stdin(Stdio::null())
        .stdout(Stdio::from(out_file))
        .stderr(Stdio::from(err_file.try_clone()?));
    if let Some(cap) = mem_cap {
        use std::os::unix::process::CommandExt;
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit { rlim_cur: cap, rlim_max: cap };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let (timed_out, success) = loop {
        match child.try_wait()? {
            Some(status) => break (false, status.success()),
            None => {
                if start.elapsed() > timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    break (true, false);
                }
                std::thread::sleep(Duration::from_millis(5));
            }
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let mut stderr = Vec::new();
    err_file.rewind()?;
    err_file.read_to_end(&mut stderr)?;
    Ok(RunOut { timed_out, success, stderr, wall })
}

// ---------------------------------------------------------------------------
// The engine

#[derive(Clone, Debug)]
pub struct EngineOptions {
    pub baseline_timeout: Duration,
    pub opt_timeout: Duration,
    pub memory_cap_bytes: Option<u64>,
    /// Record cache hits so a 1% sample can be re-verified afterwards.
    pub verify_cache: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            baseline_timeout: Duration::from_secs(30),
            opt_timeout: Duration::from_secs(60),
            memory_cap_bytes: Some(4 << 30),
            verify_cache: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Sidecar {
    status: CompileStatus,
    program_id: String,
    producer: String,
    source_hash: Option<String>,
    base_digest: Option<String>,
    bits_hex: Option<String>,
    stderr_excerpt: String,
    wall_time: f64,
    toolchain_version: String,
}

enum HitKind {
    Baseline(ProgramRecord),
    Opt(Box<IrText>, FlagVector),
}

struct Hit {
    kind: HitKind,
    cached: CompileOutcome,
}

pub struct VerifyReport {
    pub checked: usize,
    pub mismatches: Vec<String>,
}

pub struct CompileEngine {
    toolchain: Toolchain,
    catalog: FlagCatalog,
    catalog_digest: String,
    cache_dir: PathBuf,
    opts: EngineOptions,
    hits: Mutex<Vec<Hit>>,
}

impl CompileEngine {
    pub fn new(
        toolchain: Toolchain,
        catalog: FlagCatalog,
        cache_dir: &Path,
        opts: EngineOptions,
    ) -> CompileEngine {
        CompileEngine {
            catalog_digest: catalog.digest(),
            toolchain,
            catalog,
            cache_dir: cache_dir.to_path_buf(),
            opts,
            hits: Mutex::new(Vec::new()),
        }
    }

    pub fn catalog(&self) -> &FlagCatalog {
        &self.catalog
    }

    pub fn toolchain(&self) -> &Toolchain {
        &self.toolchain
    }

    fn baseline_key(&self, rec: &ProgramRecord) -> String {
        sha256_hex(
            format!("baseline\0{}\0{}", rec.content_hash, self.toolchain.version).as_bytes(),
        )
    }

    fn opt_key(&self, ir: &IrText, bits_hex: &str) -> String {
        sha256_hex(
            format!("opt\0{}\0{}\0{}", ir.digest, self.catalog_digest, bits_hex).as_bytes(),
        )
    }

    fn cache_paths(&self, key: &str) -> (PathBuf, PathBuf) {
        let dir = self.cache_dir.join(&key[..2]);
        (dir.join(format!("{key}.ll")), dir.join(format!("{key}.json")))
    }

    fn read_cache(&self, key: &str, producer: Producer) -> Option<CompileOutcome> {
        let (ll, side) = self.cache_paths(key);
        let side_text = std::fs::read_to_string(side).ok()?;
        let sc: Sidecar = serde_json::from_str(&side_text).ok()?;
        let ir = match sc.status {
            CompileStatus::Ok => {
                let text = std::fs::read_to_string(ll).ok()?;
                Some(IrText::new(text, producer, sc.program_id.clone()))
            }
            _ => None,
        };
        Some(CompileOutcome {
            status: sc.status,
            ir,
            stderr_excerpt: sc.stderr_excerpt,
            wall_time: 0.0,
            cached: true,
        })
    }

    fn write_cache(&self, key: &str, outcome: &CompileOutcome, sc: Sidecar) {
        let (ll, side) = self.cache_paths(key);
        if let Some(ir) = &outcome.ir {
            let _ = crate::workspace::atomic_write(&ll, ir.text.as_bytes());
        }
        if let Ok(json) = serde_json::to_string_pretty(&sc) {
            let _ = crate::workspace::atomic_write(&side, json.as_bytes());
        }
    }

    /// Frontend + identity normalization, bypassing the cache.
    fn compile_baseline_uncached(&self, rec: &ProgramRecord) -> CompileOutcome {
        let tmp = match tempfile::tempdir() {
            Ok(t) => t,
            Err(e) => return io_failure(&e),
        };
        let raw = tmp.path().join("front.ll");
        let mut cmd = Command::new(&self.toolchain.cc);
        cmd.args(["-S", "-emit-llvm", "-O0", "-g0", "-w", "-Xclang", "-disable-O0-optnone", "-o"])
            .arg(&raw)
            .arg(&rec.source_path);
        let front = match run_limited(cmd, self.opts.baseline_timeout, self.opts.memory_cap_bytes)
        {
            Ok(r) => r,
            Err(e) => return io_failure(&e),
        };
        if front.timed_out || !front.success {
            return CompileOutcome {
                status: if front.timed_out { CompileStatus::Timeout } else { CompileStatus::CompileError },
                ir: None,
                stderr_excerpt: excerpt(&front.stderr),
                wall_time: front.wall,
                cached: false,
            };
        }
        // Normalize the printing style with an identity optimizer pass.
        let norm = tmp.path().join("base.ll");
        let norm_run = match self.run_opt(&[], &raw, &norm, self.opts.baseline_timeout) {
            Ok(r) => r,
            Err(e) => return io_failure(&e),
        };
        if norm_run.timed_out || !norm_run.success {
            return CompileOutcome {
                status: if norm_run.timed_out { CompileStatus::Timeout } else { CompileStatus::CompileError },
                ir: None,
                stderr_excerpt: excerpt(&norm_run.stderr),
                wall_time: front.wall + norm_run.wall,
                cached: false,
            };
        }
        match std::fs::read_to_string(&norm) {
            Ok(text) => CompileOutcome {
                status: CompileStatus::Ok,
                ir: Some(IrText::new(text, Producer::Baseline, rec.id.clone())),
                stderr_excerpt: excerpt(&front.stderr),
                wall_time: front.wall + norm_run.wall,
                cached: false,
            },
            Err(e) => io_failure(&e),
        }
    }

    /// Produce (or fetch) the normalized -O0 baseline for one program.
    pub fn compile_baseline(&self, rec: &ProgramRecord) -> CompileOutcome {
        let key = self.baseline_key(rec);
        if let Some(hit) = self.read_cache(&key, Producer::Baseline) {
            if self.opts.verify_cache {
                self.hits.lock().unwrap().push(Hit {
                    kind: HitKind::Baseline(rec.clone()),
                    cached: hit.clone(),
                });
            }
            return hit;
        }
        let outcome = self.compile_baseline_uncached(rec);
        self.write_cache(
            &key,
            &outcome,
            Sidecar {
                status: outcome.status,
                program_id: rec.id.clone(),
                producer: "baseline".into(),
                source_hash: Some(rec.content_hash.clone()),
                base_digest: None,
                bits_hex: None,
                stderr_excerpt: outcome.stderr_excerpt.clone(),
                wall_time: outcome.wall_time,
                toolchain_version: self.toolchain.version.clone(),
            },
        );
        outcome
    }

    fn run_opt(
        &self,
        enabled: &[&str],
        input: &Path,
        output: &Path,
        timeout: Duration,
    ) -> std::io::Result<RunOut> {
        let mut cmd = Command::new(&self.toolchain.opt);
        match self.toolchain.dialect {
            OptDialect::Shim | OptDialect::Legacy => {
                cmd.args(enabled);
            }
            OptDialect::NewPm => {
                if !enabled.is_empty() {
                    let passes: Vec<&str> =
                        enabled.iter().map(|f| f.trim_start_matches('-')).collect();
                    cmd.arg(format!("-passes={}", passes.join(",")));
                }
            }
        }
        cmd.arg("-S").arg(input).arg("-o").arg(output);
        run_limited(cmd, timeout, self.opts.memory_cap_bytes)
    }

    fn optimize_uncached(&self, ir: &IrText, v: &FlagVector) -> CompileOutcome {
        let tmp = match tempfile::tempdir() {
            Ok(t) => t,
            Err(e) => return io_failure(&e),
        };
        // Fixed input name: some printers embed it, and cache keys must not
        // depend on temp paths.
        let input = tmp.path().join("in.ll");
        let output = tmp.path().join("out.ll");
        if let Err(e) = std::fs::write(&input, &ir.text) {
            return io_failure(&e);
        }
        let enabled = v.enabled(&self.catalog);
        let run = match self.run_opt(&enabled, &input, &output, self.opts.opt_timeout) {
            Ok(r) => r,
            Err(e) => return io_failure(&e),
        };
        if run.timed_out || !run.success {
            return CompileOutcome {
                status: if run.timed_out { CompileStatus::Timeout } else { CompileStatus::CompileError },
                ir: None,
                stderr_excerpt: excerpt(&run.stderr),
                wall_time: run.wall,
                cached: false,
            };
        }
        match std::fs::read_to_string(&output) {
            Ok(text) => CompileOutcome {
                status: CompileStatus::Ok,
                ir: Some(IrText::new(
                    text,
                    Producer::Optimized { bits_hex: v.to_hex() },
                    ir.program_id.clone(),
                )),
                stderr_excerpt: excerpt(&run.stderr),
                wall_time: run.wall,
                cached: false,
            },
            Err(e) => io_failure(&e),
        }
    }

    /// Apply the enabled flags (catalog order, one optimizer invocation) to
    /// a baseline module.
    pub fn optimize(&self, ir: &IrText, v: &FlagVector) -> CompileOutcome {
        assert_eq!(
            ir.producer,
            Producer::Baseline,
            "optimize() takes baseline IR"
        );
        let bits_hex = v.to_hex();
        let key = self.opt_key(ir, &bits_hex);
        let producer = Producer::Optimized { bits_hex: bits_hex.clone() };
        if let Some(hit) = self.read_cache(&key, producer) {
            if self.opts.verify_cache {
                self.hits.lock().unwrap().push(Hit {
                    kind: HitKind::Opt(Box::new(ir.clone()), v.clone()),
                    cached: hit.clone(),
                });
            }
            return hit;
        }
        let outcome = self.optimize_uncached(ir, v);
        self.write_cache(
            &key,
            &outcome,
            Sidecar {
                status: outcome.status,
                program_id: ir.program_id.clone(),
                producer: "opt".into(),
                source_hash: None,
                base_digest: Some(ir.digest.clone()),
                bits_hex: Some(bits_hex),
                stderr_excerpt: outcome.stderr_excerpt.clone(),
                wall_time: outcome.wall_time,
                toolchain_version: self.toolchain.version.clone(),
            },
        );
        outcome
    }

    /// Recompile every 100th recorded cache hit and compare digests.
    pub fn verify_cache_sample(&self) -> VerifyReport {
        let hits = std::mem::take(&mut *self.hits.lock().unwrap());
        let mut checked = 0;
        let mut mismatches = Vec::new();
        for (i, hit) in hits.iter().enumerate() {
            if i % 100 != 0 {
                continue;
            }
            checked += 1;
            let fresh = match &hit.kind {
                HitKind::Baseline(rec) => self.compile_baseline_uncached(rec),
                HitKind::Opt(ir, v) => self.optimize_uncached(ir, v),
            };
            let fresh_digest = fresh.ir.as_ref().map(|i| i.digest.as_str());
            let cached_digest = hit.cached.ir.as_ref().map(|i| i.digest.as_str());
            if fresh.status != hit.cached.status || fresh_digest != cached_digest {
                mismatches.push(match &hit.kind {
                    HitKind::Baseline(rec) => format!("baseline {}", rec.id),
                    HitKind::Opt(ir, v) => format!("opt {} {}", ir.program_id, v.to_hex()),
                });
            }
        }
        VerifyReport { checked, mismatches }
    }
}

fn io_failure(e: &std::io::Error) -> CompileOutcome {
    CompileOutcome {
        status: CompileStatus::CompileError,
        ir: None,
        stderr_excerpt: format!("io error: {e}"),
        wall_time: 0.0,
        cached: false,
    }
}
