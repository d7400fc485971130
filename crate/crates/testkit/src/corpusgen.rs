//! Deterministic generator for the 3-class toy retrieval corpus.
//!
//! Each class implements one algorithm; variants within a class differ in
//! surface detail (identifier names, loop style, helper extraction, filler
//! statements) while keeping the algorithm fixed. Surface vocabulary is
//! deliberately class-neutral: identifier pools are shared and selected by
//! the variant index alone, every program reads its bound with the same
//! scanf-and-clamp scaffold, and a uniform decoy block gives every class
//! the `%`, `==`, `/`, `-` operators and an array access. Class identity
//! lives in the algorithmic skeleton, which survives in the compiled IR
//! after optimization strips the decoys — the regime where IR augmentation
//! has something to add. Input-driven bounds keep the loops from being
//! constant-folded away by aggressive flag combinations.

use std::fs;
use std::io;
use std::path::Path;

const IDX: [&str; 5] = ["i", "idx", "k", "pos", "step"];
const ACC: [&str; 5] = ["acc", "total", "sum", "res", "agg"];
const ARR: [&str; 5] = ["buf", "arr", "data", "vals", "store"];
const LIM: [&str; 5] = ["n", "len", "count", "bound", "size"];
const AUX: [&str; 5] = ["t", "tmp", "hold", "aux", "mid"];
const FUN: [&str; 5] = ["work", "calc", "solve", "proc", "runit"];

/// Read the loop bound and clamp it into [2, 12]; identical shape in every
/// program so none of its tokens separate the classes.
fn scaffold(lim: &str) -> String {
    format!(
        "int {lim} = 0;\n  scanf(\"%d\", &{lim});\n  if ({lim} > 12) {{\n    {lim} = 12;\n  }}\n  if ({lim} < 2) {{\n    {lim} = 2;\n  }}"
    )
}

/// Dead computation present in every program: carries `%`, `==`, `/`, `-`
/// and an array store so those tokens are class-neutral. Constants vary by
/// variant but collapse to `<lit>` in the token stream. `pad_off` keeps the
/// decoy array name distinct from a class's working array.
fn decoy_block(v: usize, lim: &str, pad_off: usize) -> String {
    let chk = AUX[(v + 1) % 5];
    let hlf = ACC[(v + 3) % 5];
    let pad = ARR[(v + pad_off) % 5];
    let c1 = 3 + v % 4;
    let c2 = v % 3;
    let c3 = 2 + v % 3;
    format!(
        "int {chk} = {lim} % {c1};\n  if ({chk} == {c2}) {{\n    {chk} = {chk} + 1;\n  }}\n  int {hlf} = {lim} / {c3};\n  int {pad}[4];\n  {pad}[0] = {chk} - {hlf};\n  (void){pad}[0];"
    )
}

/// Presence-varying filler, shared across classes; which pieces appear
/// depends only on the variant index.
fn filler(v: usize, lim: &str) -> String {
    let mut out = String::new();
    if v % 4 == 0 {
        out.push_str("int spare = 0;\n  spare = spare + 2;\n  (void)spare;\n  ");
    }
    if v % 5 == 0 {
        out.push_str(&format!("if ({lim} > 100) {{\n    {lim} = 100;\n  }}\n  "));
    }
    out
}

fn loop_head(style: usize, idx: &str, bound: &str) -> (String, String, String) {
    // Returns (decl, head, step) so callers can lay out for/while forms.
    match style {
        0 => (
            String::new(),
            format!("for (int {idx} = 0; {idx} < {bound}; {idx}++) {{"),
            String::new(),
        ),
        1 => (
            format!("int {idx} = 0;\n  "),
            format!("while ({idx} < {bound}) {{"),
            format!("\n    {idx} = {idx} + 1;"),
        ),
        _ => (
            format!("int {idx} = 0;\n  "),
            format!("for (; {idx} < {bound}; {idx} += 1) {{"),
            String::new(),
        ),
    }
}

/// Wrap the computed body either inline in main or behind a helper function
/// whose name is drawn from the shared pool.
fn program(v: usize, body: &str, result: &str) -> String {
    if v % 4 < 2 {
        format!(
            "#include <stdio.h>\n\nint main(void) {{\n  {body}\n  printf(\"%d\\n\", {result});\n  return 0;\n}}\n"
        )
    } else {
        let f = FUN[v % 5];
        format!(
            "#include <stdio.h>\n\nstatic int {f}(void) {{\n  {body}\n  return {result};\n}}\n\nint main(void) {{\n  printf(\"%d\\n\", {f}());\n  return 0;\n}}\n"
        )
    }
}

fn sum_even(v: usize) -> String {
    let idx = IDX[v % 5];
    let jdx = IDX[(v + 2) % 5];
    let acc = ACC[(v + 1) % 5];
    let arr = ARR[(v + 2) % 5];
    let lim = LIM[(v + 3) % 5];
    let off = AUX[(v + 4) % 5];
    let (d0, h0, s0) = loop_head(v % 3, idx, lim);
    let (d1, h1, s1) = loop_head((v + 1) % 3, jdx, lim);
    let decl = format!("int {arr}[12];\n  int {acc} = 0;");
    let ballast = format!("int {off} = {lim} - 3;\n  {arr}[0] = {off} - 1;\n  (void){arr}[0];");
    let fill = format!("{d0}{h0}\n    {arr}[{idx}] = {idx} * 3 - 1;{s0}\n  }}");
    let fold = format!(
        "{d1}{h1}\n    if ({arr}[{jdx}] % 2 == 0) {{\n      {acc} = {acc} + {arr}[{jdx}];\n    }}{s1}\n  }}"
    );
    let body = format!(
        "{}\n  {}\n  {decl}\n  {ballast}\n  {}{fill}\n  {fold}",
        scaffold(lim),
        decoy_block(v, lim, 4),
        filler(v, lim)
    );
    program(v, &body, acc)
}

fn reverse_ints(v: usize) -> String {
    let idx = IDX[(v + 2) % 5];
    let rdx = IDX[(v + 4) % 5];
    let opp = IDX[(v + 1) % 5];
    let arr = ARR[v % 5];
    let lim = LIM[(v + 1) % 5];
    let tmp = AUX[(v + 4) % 5];
    let (d0, h0, s0) = loop_head((v + 2) % 3, idx, lim);
    let swap = format!(
        "int {opp} = {lim} - 1 - {rdx};\n    int {tmp} = {arr}[{rdx}];\n    {arr}[{rdx}] = {arr}[{opp}];\n    {arr}[{opp}] = {tmp};"
    );
    let half = format!("{lim} / 2");
    let rev = match v % 2 {
        0 => format!("for (int {rdx} = 0; {rdx} < {half}; {rdx}++) {{\n    {swap}\n  }}"),
        _ => format!(
            "int {rdx} = 0;\n  while ({rdx} < {half}) {{\n    {swap}\n    {rdx}++;\n  }}"
        ),
    };
    let decl = format!("int {arr}[12];");
    let fill = format!("{d0}{h0}\n    {arr}[{idx}] = {idx} * 5 + 2;{s0}\n  }}");
    let body = format!(
        "{}\n  {}\n  {decl}\n  {}{fill}\n  {rev}",
        scaffold(lim),
        decoy_block(v, lim, 3),
        filler(v, lim)
    );
    let result = format!("{arr}[0] - {arr}[{lim} - 1]");
    program(v, &body, &result)
}

fn fib(v: usize) -> String {
    let a = ACC[v % 5];
    let b = AUX[(v + 2) % 5];
    let idx = IDX[(v + 1) % 5];
    let pdx = IDX[(v + 3) % 5];
    let pad = ARR[(v + 1) % 5];
    let lim = LIM[(v + 4) % 5];
    let tmp = AUX[(v + 3) % 5];
    let (d0, h0, s0) = loop_head(v % 3, idx, lim);
    let (d2, h2, s2) = loop_head((v + 2) % 3, pdx, "4");
    let step = format!(
        "{d0}{h0}\n    int {tmp} = {a} + {b};\n    {a} = {b};\n    {b} = {tmp};{s0}\n  }}"
    );
    // Dead scratch loop: consumed by nothing, stripped by optimization.
    let scratch = format!(
        "{d2}{h2}\n    {pad}[{pdx}] = {pad}[0] - {pdx} * 3 - 1;{s2}\n  }}"
    );
    let decl = format!("int {a} = 0;\n  int {b} = 1;");
    let body = format!(
        "{}\n  {}\n  {decl}\n  {}{scratch}\n  {step}",
        scaffold(lim),
        decoy_block(v, lim, 1),
        filler(v, lim)
    );
    program(v, &body, a)
}

/// Write the 3-class, 60-program corpus under `root` (one subdirectory per
/// class). Fully deterministic: same output bytes on every call.
pub fn write_toy_corpus(root: &Path) -> io::Result<()> {
    let classes: [(&str, fn(usize) -> String); 3] =
        [("sumeven", sum_even), ("revint", reverse_ints), ("fib", fib)];
    for (name, gen) in classes {
        let dir = root.join(name);
        fs::create_dir_all(&dir)?;
        for v in 0..20 {
            fs::write(dir.join(format!("{name}_{v:02}.c")), gen(v))?;
        }
    }
    Ok(())
}
