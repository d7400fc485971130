//! Black-box tests of the `irforge` binary: exit codes, artifact layout,
//! determinism of each subcommand.

use irforge_testkit::{find_cc, fixtures_dir, shim_opt};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_irforge"));
    c.env("IRFORGE_CC", find_cc());
    c.env("IRFORGE_OPT", shim_opt());
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn poj20() -> String {
    fixtures_dir().join("poj20").display().to_string()
}

/// build with the 30-flag reduced catalog; returns the workspace path.
fn build_ws(root: &Path, extra: &[&str]) -> PathBuf {
    let ws = root.join("ws");
    let out = run(&[
        &["build", "--corpus", &poj20(), "--workspace", ws.to_str().unwrap(), "--max-flags", "30"],
        extra,
    ]
    .concat());
    assert_eq!(code(&out), 0, "build failed: {}", stderr(&out));
    ws
}

#[test]
fn build_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = build_ws(tmp.path(), &[]);
    for f in ["workspace.json", "corpus-index.tsv", "flag-catalog.txt", "vocab.tsv", "quarantined.txt"] {
        assert!(ws.join(f).is_file(), "{f} missing");
    }
    assert!(ws.join("cache").is_dir());
    assert!(ws.join("checkpoints").is_dir());
    assert!(ws.join("reports").is_dir());
    let catalog = std::fs::read_to_string(ws.join("flag-catalog.txt")).unwrap();
    assert_eq!(catalog.lines().filter(|l| l.starts_with('-')).count(), 30);
}

#[test]
fn build_without_env_exits_2_with_hint() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_irforge"))
        .args(["build", "--corpus", &poj20(), "--workspace"])
        .arg(tmp.path().join("ws"))
        .env_remove("IRFORGE_CC")
        .env_remove("IRFORGE_OPT")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("IRFORGE_CC"), "hint missing: {err}");
}

#[test]
fn build_with_only_broken_sources_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = fixtures_dir().join("broken").display().to_string();
    let out = run(&[
        "build",
        "--corpus",
        &corpus,
        "--workspace",
        tmp.path().join("ws").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("zero compilable programs"), "{}", stderr(&out));
}

#[test]
fn build_with_a_broken_program_exits_1_and_quarantines() {
    let tmp = tempfile::tempdir().unwrap();
    // Mixed corpus: the good fixtures plus one file that will not compile.
    let corpus = tmp.path().join("corpus");
    let class = corpus.join("mixed");
    std::fs::create_dir_all(&class).unwrap();
    for rel in ["poj20/sum/sum_a.c", "poj20/gcd/gcd_a.c", "poj20/gcd/gcd_b.c"] {
        let src = fixtures_dir().join(rel);
        std::fs::copy(&src, class.join(src.file_name().unwrap())).unwrap();
    }
    std::fs::copy(fixtures_dir().join("broken/syntax_error.c"), class.join("bad.c")).unwrap();

    let ws = tmp.path().join("ws");
    let out = run(&[
        "build",
        "--corpus",
        corpus.to_str().unwrap(),
        "--workspace",
        ws.to_str().unwrap(),
        "--test-frac",
        "0.25",
    ]);
    assert_eq!(code(&out), 1, "stderr: {}", stderr(&out));
    let q = std::fs::read_to_string(ws.join("quarantined.txt")).unwrap();
    assert!(q.contains("bad.c"), "quarantine list: {q}");
    assert_eq!(q.lines().count(), 1);
}

#[test]
fn search_trace_has_one_row_per_generation() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = build_ws(tmp.path(), &[]);
    let out = run(&["search", "--workspace", ws.to_str().unwrap(), "--gens", "5", "--seed", "11"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let trace = std::fs::read_to_string(ws.join("checkpoints/trace.tsv")).unwrap();
    let rows: Vec<&str> = trace.lines().collect();
    assert_eq!(rows[0], "generation\tbest_F\tmean_F");
    assert_eq!(rows.len(), 1 + 6, "gen 0..=5 inclusive");
    for f in ["archive.json", "archive.tsv", "latest.json", "checkpoint-0005.json"] {
        assert!(ws.join("checkpoints").join(f).is_file(), "{f} missing");
    }
    // stdout carries the ranked archive with flag names.
    let table = stdout(&out);
    assert!(table.starts_with("rank\tbits\tfitness"), "{table}");
    assert!(table.contains('-'), "flag names expected in archive table");
}

#[test]
fn search_same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for sub in ["a", "b"] {
        let ws = build_ws(&tmp.path().join(sub), &[]);
        let out = run(&["search", "--workspace", ws.to_str().unwrap(), "--gens", "4", "--seed", "5"]);
        assert_eq!(code(&out), 0);
        outs.push((
            std::fs::read(ws.join("checkpoints/archive.json")).unwrap(),
            std::fs::read(ws.join("checkpoints/trace.tsv")).unwrap(),
            stdout(&out),
        ));
    }
    assert_eq!(outs[0].0, outs[1].0, "archive.json differs between identical runs");
    assert_eq!(outs[0].1, outs[1].1, "trace.tsv differs between identical runs");
    assert_eq!(outs[0].2, outs[1].2, "stdout differs between identical runs");
}

#[test]
fn search_resume_reproduces_the_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let ws_full = build_ws(&tmp.path().join("full"), &[]);
    let ws_cut = build_ws(&tmp.path().join("cut"), &[]);

    let full = run(&["search", "--workspace", ws_full.to_str().unwrap(), "--gens", "5", "--seed", "3"]);
    assert_eq!(code(&full), 0);
    let cut = run(&["search", "--workspace", ws_cut.to_str().unwrap(), "--gens", "5", "--seed", "3"]);
    assert_eq!(code(&cut), 0);

    // Rewind the second workspace to generation 2, as if the process died.
    let ck = ws_cut.join("checkpoints");
    for t in 3..=5 {
        std::fs::remove_file(ck.join(format!("checkpoint-{t:04}.json"))).unwrap();
    }
    for f in ["latest.json", "archive.json", "archive.tsv", "trace.tsv"] {
        std::fs::remove_file(ck.join(f)).unwrap();
    }
    std::fs::copy(ck.join("checkpoint-0002.json"), ck.join("latest.json")).unwrap();

    let resumed = run(&["search", "--workspace", ws_cut.to_str().unwrap(), "--resume"]);
    assert_eq!(code(&resumed), 0, "stderr: {}", stderr(&resumed));
    assert!(stderr(&resumed).contains("resuming from generation 2"));

    let a = std::fs::read(ws_full.join("checkpoints/archive.json")).unwrap();
    let b = std::fs::read(ck.join("archive.json")).unwrap();
    assert_eq!(a, b, "resume diverged from the uninterrupted run");
    let ta = std::fs::read(ws_full.join("checkpoints/trace.tsv")).unwrap();
    let tb = std::fs::read(ck.join("trace.tsv")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn resume_without_checkpoint_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = build_ws(tmp.path(), &[]);
    let out = run(&["search", "--workspace", ws.to_str().unwrap(), "--resume"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn apply_writes_manifest_and_ir_files() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = build_ws(tmp.path(), &[]);
    run_ok(&["search", "--workspace", ws.to_str().unwrap(), "--gens", "2", "--seed", "1"]);
    let out_dir = tmp.path().join("opt");
    let out = run(&[
        "apply",
        "--workspace",
        ws.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--topk",
        "3",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let manifest = std::fs::read_to_string(out_dir.join("manifest.tsv")).unwrap();
    let rows: Vec<&str> = manifest.lines().skip(1).collect();
    assert_eq!(rows.len(), 16 * 3, "16 train programs x 3 ranks");
    for row in &rows {
        let cols: Vec<&str> = row.split('\t').collect();
        assert_eq!(cols.len(), 6);
        assert_eq!(cols[3], "ok");
        assert!(Path::new(cols[5]).is_file(), "IR file missing: {}", cols[5]);
    }
    // Mirrored into the workspace for `eval --mode src+topk`.
    assert_eq!(std::fs::read_to_string(ws.join("apply-manifest.tsv")).unwrap(), manifest);
}

#[test]
fn apply_without_search_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = build_ws(tmp.path(), &[]);
    let out = run(&["apply", "--workspace", ws.to_str().unwrap(), "--out"]);
    // clap usage error for the missing value also lands on exit 2
    assert_eq!(code(&out), 2);
    let out = run(&[
        "apply",
        "--workspace",
        ws.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("irforge search"), "{}", stderr(&out));
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert_eq!(code(&out), 0, "`{}` failed: {}", args.join(" "), stderr(&out));
}

#[test]
fn eval_modes_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = build_ws(tmp.path(), &["--test-frac", "0.4"]);
    run_ok(&["search", "--workspace", ws.to_str().unwrap(), "--gens", "2", "--seed", "1"]);
    run_ok(&[
        "apply",
        "--workspace",
        ws.to_str().unwrap(),
        "--out",
        tmp.path().join("opt").to_str().unwrap(),
    ]);

    let args = [
        "eval",
        "--workspace",
        ws.to_str().unwrap(),
        "--mode",
        "src,src+o0,src+topk",
        "--steps",
        "30",
        "--seed",
        "9",
    ];
    let first = run(&args);
    assert_eq!(code(&first), 0, "stderr: {}", stderr(&first));
    let table = stdout(&first);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "mode\tmap_at_r\tap\tqueries\tskipped\ttriplets");
    assert_eq!(lines.len(), 4, "one row per mode: {table}");
    assert!(lines[1].starts_with("src\t"));
    assert!(lines[2].starts_with("src+o0\t"));
    assert!(lines[3].starts_with("src+topk\t"));

    let second = run(&args);
    assert_eq!(stdout(&second), table, "eval is not deterministic");
    assert!(ws.join("reports/eval-seed9.tsv").is_file());
}

#[test]
fn eval_src_mode_separates_an_easy_corpus() {
    // Three classes with blatantly distinct surface vocabularies; source-only
    // training should comfortably clear MAP@R 0.5.
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("easy");
    for v in 0..10 {
        let extra = if v % 2 == 0 { "int pad = 0;\n  (void)pad;\n  " } else { "" };
        let mat = format!(
            "#include <stdio.h>\n\nint main(void) {{\n  {extra}int grid[3][3];\n  for (int row = 0; row < 3; row++) {{\n    for (int col = 0; col < 3; col++) {{\n      grid[row][col] = row * {v} + col;\n    }}\n  }}\n  printf(\"%d\\n\", grid[2][1]);\n  return 0;\n}}\n"
        );
        let strz = format!(
            "#include <stdio.h>\n\nint main(void) {{\n  {extra}char text[8] = \"abc{v}\";\n  int cursor = 0;\n  while (text[cursor] != 0) {{\n    cursor++;\n  }}\n  printf(\"%d\\n\", cursor);\n  return 0;\n}}\n"
        );
        let tot = format!(
            "#include <stdio.h>\n\nint main(void) {{\n  {extra}int total = {v};\n  int value = 7;\n  total += value;\n  total += value * 2;\n  printf(\"%d\\n\", total);\n  return 0;\n}}\n"
        );
        for (cls, text) in [("mat", mat), ("strz", strz), ("tot", tot)] {
            let dir = corpus.join(cls);
            std::fs::create_dir_all(&dir).unwrap();
            std::fs::write(dir.join(format!("{cls}_{v:02}.c")), text).unwrap();
        }
    }
    let ws = tmp.path().join("ws");
    run_ok(&[
        "build", "--corpus", corpus.to_str().unwrap(), "--workspace", ws.to_str().unwrap(),
        "--max-flags", "30", "--test-frac", "0.4",
    ]);
    let out = run(&["eval", "--workspace", ws.to_str().unwrap(), "--mode", "src", "--format", "json"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let map = rows[0]["map_at_r"].as_f64().unwrap();
    assert!(map > 0.5, "src MAP@R {map} on separable corpus");
}

#[test]
fn eval_unknown_mode_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = build_ws(tmp.path(), &[]);
    let out = run(&["eval", "--workspace", ws.to_str().unwrap(), "--mode", "bogus"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus"));
}

#[test]
fn ablate_reports_every_enabled_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = build_ws(tmp.path(), &[]);
    run_ok(&["search", "--workspace", ws.to_str().unwrap(), "--gens", "2", "--seed", "4"]);

    let out = run(&["ablate", "--workspace", ws.to_str().unwrap(), "--rank", "1", "--seed", "4"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let table = stdout(&out);
    assert!(table.contains("flag\tbit\tcategory\tfitness_with\tfitness_without\tdelta"));

    // One row per enabled bit of rank 1.
    let archive = std::fs::read_to_string(ws.join("checkpoints/archive.tsv")).unwrap();
    let bits_hex = archive.lines().nth(1).unwrap().split('\t').nth(1).unwrap();
    let ones: u32 = bits_hex
        .chars()
        .map(|c| c.to_digit(16).unwrap().count_ones())
        .sum();
    let data_rows = table.lines().filter(|l| l.starts_with('-')).count();
    assert_eq!(data_rows as u32, ones);
    assert!(ws.join("reports/potency-rank1.tsv").is_file());

    let bad = run(&["ablate", "--workspace", ws.to_str().unwrap(), "--rank", "40"]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("out of range"));
}

#[test]
fn json_format_emits_valid_json() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = tmp.path().join("ws");
    let out = run(&[
        "build",
        "--corpus",
        &poj20(),
        "--workspace",
        ws.to_str().unwrap(),
        "--max-flags",
        "30",
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert_eq!(v["programs"], 20);
    assert_eq!(v["flags"], 30);

    let out = run(&[
        "search", "--workspace", ws.to_str().unwrap(), "--gens", "2", "--format", "json",
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    assert!(v["best_fitness"].as_f64().unwrap() > 0.0);
    assert_eq!(v["archive_len"], 6);
}

#[test]
fn open_missing_workspace_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let ws = tmp.path().join("nope");
    for cmd in [vec!["search"], vec!["apply", "--out", "/tmp/x"], vec!["eval", "--mode", "src"], vec!["ablate"]] {
        let mut args = cmd.clone();
        args.extend(["--workspace", ws.to_str().unwrap()]);
        let out = run(&args.iter().map(|s| *s).collect::<Vec<_>>());
        assert_eq!(code(&out), 2, "cmd {cmd:?}");
        assert!(stderr(&out).contains("irforge build"), "cmd {cmd:?}: {}", stderr(&out));
    }
}
