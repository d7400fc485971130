//! Textual LLVM-IR parsing: functions, basic blocks, canonicalized
//! statements, and the IR-side CFG.
//!
//! This is a structural parser, not a semantic one. It recognizes function
//! bodies, block labels, and terminators well enough to recover the CFG and
//! a canonical statement stream; anything else passes through verbatim as a
//! plain statement.

use crate::graph::{Cfg, CfgOrigin, NodeKind};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::LazyLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IrParseError {
    #[error("line {line}: unterminated function `{name}` (missing `}}`)")]
    UnterminatedFunction { line: usize, name: String },
    #[error("line {line}: branch references unknown block `{target}` in `{func}`")]
    UnknownBlock {
        line: usize,
        target: String,
        func: String,
    },
    #[error("line {line}: malformed define line")]
    BadDefine { line: usize },
}

/// A canonicalized IR statement.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CanonStmt {
    pub text: String,
    pub opcode: String,
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: String,
    pub stmts: Vec<CanonStmt>,
    /// Original statement text (whitespace-joined), kept so a module can be
    /// reprinted and reparsed.
    pub raw: Vec<String>,
    pub successors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrFunction {
    pub name: String,
    pub blocks: Vec<BasicBlock>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct IrModule {
    pub functions: Vec<IrFunction>,
}

impl IrModule {
    pub fn stmt_count(&self) -> usize {
        self.functions
            .iter()
            .flat_map(|f| &f.blocks)
            .map(|b| b.stmts.len())
            .sum()
    }

    /// All canonical statements in module order.
    pub fn statements(&self) -> impl Iterator<Item = &CanonStmt> {
        self.functions
            .iter()
            .flat_map(|f| &f.blocks)
            .flat_map(|b| &b.stmts)
    }

    /// Reprint in a form `parse_ir` accepts (raw statements, original block
    /// ids). parse(print(parse(x))) == parse(x).
    pub fn print(&self) -> String {
        let mut out = String::new();
        for f in &self.functions {
            let _ = writeln!(out, "define @{}() {{", f.name);
            for b in &f.blocks {
                if b.id != IMPLICIT_ENTRY {
                    let _ = writeln!(out, "{}:", b.id);
                }
                for s in &b.raw {
                    let _ = writeln!(out, "  {s}");
                }
            }
            out.push_str("}\n\n");
        }
        out
    }
}

/// Synthetic id for a function's unnamed entry block. `^` cannot appear in an
/// LLVM identifier, so this never collides with a real label.
pub const IMPLICIT_ENTRY: &str = "^entry";

static RE_ATTR_GROUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+#\d+\b").unwrap());
static RE_METADATA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r",\s*![-\w.$]+(\s+![-\w.$]+)*").unwrap());
static RE_LABEL_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"label %("[^"]*"|[-\w.$]+)"#).unwrap());
static RE_PHI_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#",\s*%("[^"]*"|[-\w.$]+)\s*\]"#).unwrap());
static RE_GLOBAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"@("[^"]*"|[-\w.$]+)"#).unwrap());
static RE_LOCAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"%("[^"]*"|[-\w.$]+)"#).unwrap());
static RE_DEFINE_NAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"@("[^"]*"|[-\w.$]+)\s*\("#).unwrap());
static RE_BLOCK_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^("[^"]*"|[-\w.$]+):"#).unwrap());

/// Truncate at the first `;` that sits outside double quotes.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_str = !in_str,
            ';' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

fn squeeze_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn opcode_of(stmt: &str) -> String {
    let mut toks = stmt.split_whitespace();
    let mut tok = match toks.next() {
        Some(t) => t,
        None => return String::new(),
    };
    if tok.starts_with('%') {
        // `%x = <op> ...`
        for t in toks.by_ref() {
            if t == "=" {
                break;
            }
        }
        tok = toks.next().unwrap_or("");
    }
    // Call qualifiers precede the opcode.
    while matches!(tok, "tail" | "musttail" | "notail") {
        tok = toks.next().unwrap_or("");
    }
    tok.to_string()
}

fn kind_of(opcode: &str, stmt: &str) -> NodeKind {
    match opcode {
        "ret" => NodeKind::Return,
        "br" => {
            // `br i1 %c, label ..` is conditional; `br label ..` is a fall
            // through and labels the block plain.
            if stmt.contains("br i1 ") || stmt.contains(" br i1 ") {
                NodeKind::Branch
            } else {
                NodeKind::Plain
            }
        }
        "switch" => NodeKind::Switch,
        "indirectbr" => NodeKind::Branch,
        "invoke" | "callbr" | "call" => NodeKind::Call,
        "unreachable" | "resume" => NodeKind::Exit,
        "cleanupret" | "catchret" | "catchswitch" => NodeKind::Branch,
        _ => NodeKind::Plain,
    }
}

const TERMINATORS: [&str; 11] = [
    "ret",
    "br",
    "switch",
    "indirectbr",
    "invoke",
    "callbr",
    "resume",
    "unreachable",
    "cleanupret",
    "catchret",
    "catchswitch",
];

fn is_terminator(opcode: &str) -> bool {
    TERMINATORS.contains(&opcode)
}

/// Canonicalize one raw IR statement: whitespace squeezed, comments,
/// metadata and attribute-group trailers stripped, label operands → `LBL`,
/// globals → `@ID`, locals → `%ID`. Idempotent; opcode preserved.
pub fn canonicalize(raw: &str) -> CanonStmt {
    let mut s = squeeze_ws(strip_comment(raw));
    s = RE_ATTR_GROUP.replace_all(&s, "").into_owned();
    s = RE_METADATA.replace_all(&s, "").into_owned();
    s = RE_LABEL_REF.replace_all(&s, "label LBL").into_owned();
    let opcode = opcode_of(&s);
    if opcode == "phi" {
        s = RE_PHI_LABEL.replace_all(&s, ", LBL ]").into_owned();
    }
    s = RE_GLOBAL.replace_all(&s, "@ID").into_owned();
    s = RE_LOCAL.replace_all(&s, "%ID").into_owned();
    let kind = kind_of(&opcode, &s);
    CanonStmt { text: s, opcode, kind }
}

fn successors_of(terminator: &str) -> Vec<String> {
    let mut out = Vec::new();
    for cap in RE_LABEL_REF.captures_iter(terminator) {
        let name = cap[1].trim_matches('"').to_string();
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Parse textual IR into functions, blocks, and canonical statements.
pub fn parse_ir(text: &str) -> Result<IrModule, IrParseError> {
    struct CurFn {
        name: String,
        start_line: usize,
        blocks: Vec<BasicBlock>,
    }
    let mut module = IrModule::default();
    let mut cur: Option<CurFn> = None;
    let mut cur_block: Option<(String, Vec<(String, usize)>)> = None;
    // Multi-line statements (switch tables) accumulate here until `]`.
    let mut pending: Option<(String, usize)> = None;

    let close_block =
        |blocks: &mut Vec<BasicBlock>, blk: Option<(String, Vec<(String, usize)>)>| {
            if let Some((id, raws)) = blk {
                let stmts = raws.iter().map(|(r, _)| canonicalize(r)).collect::<Vec<_>>();
                let successors = match stmts.last() {
                    Some(last) if is_terminator(&last.opcode) => {
                        successors_of(&raws.last().unwrap().0)
                    }
                    _ => Vec::new(),
                };
                blocks.push(BasicBlock {
                    id,
                    stmts,
                    raw: raws.into_iter().map(|(r, _)| r).collect(),
                    successors,
                });
            }
        };

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let stripped = strip_comment(raw_line);
        let t = stripped.trim();
        if t.is_empty() {
            continue;
        }

        match cur.as_mut() {
            None => {
                if t.starts_with("define") && t.ends_with('{') {
                    let name = RE_DEFINE_NAME
                        .captures(t)
                        .map(|c| c[1].trim_matches('"').to_string())
                        .ok_or(IrParseError::BadDefine { line: lineno })?;
                    cur = Some(CurFn {
                        name,
                        start_line: lineno,
                        blocks: Vec::new(),
                    });
                    cur_block = None;
                    pending = None;
                }
                // Globals, declares, metadata, attributes: module-level noise.
            }
            Some(f) => {
                if let Some((ref mut acc, _)) = pending {
                    acc.push(' ');
                    acc.push_str(t);
                    if t.contains(']') {
                        let (stmt, at) = pending.take().unwrap();
                        cur_block
                            .get_or_insert_with(|| (IMPLICIT_ENTRY.to_string(), Vec::new()))
                            .1
                            .push((squeeze_ws(&stmt), at));
                    }
                    continue;
                }
                if t == "}" {
                    close_block(&mut f.blocks, cur_block.take());
                    let done = cur.take().unwrap();
                    module.functions.push(IrFunction {
                        name: done.name,
                        blocks: done.blocks,
                    });
                    continue;
                }
                if let Some(cap) = RE_BLOCK_LABEL.captures(t) {
                    close_block(&mut f.blocks, cur_block.take());
                    cur_block = Some((cap[1].trim_matches('"').to_string(), Vec::new()));
                    continue;
                }
                // A statement line. Switch/indirectbr tables span lines until `]`.
                let opens_bracket = {
                    let op = opcode_of(t);
                    (op == "switch" || op == "indirectbr" || op == "callbr")
                        && t.contains('[')
                        && !t.contains(']')
                };
                if opens_bracket {
                    pending = Some((t.to_string(), lineno));
                } else {
                    cur_block
                        .get_or_insert_with(|| (IMPLICIT_ENTRY.to_string(), Vec::new()))
                        .1
                        .push((t.to_string(), lineno));
                }
            }
        }
    }

    if let Some(f) = cur {
        return Err(IrParseError::UnterminatedFunction {
            line: f.start_line,
            name: f.name,
        });
    }

    // Successor ids must resolve within their function.
    for f in &module.functions {
        let ids: HashMap<&str, ()> = f.blocks.iter().map(|b| (b.id.as_str(), ())).collect();
        for b in &f.blocks {
            for s in &b.successors {
                if !ids.contains_key(s.as_str()) {
                    return Err(IrParseError::UnknownBlock {
                        line: 0,
                        target: s.clone(),
                        func: f.name.clone(),
                    });
                }
            }
        }
    }
    Ok(module)
}

/// Build the module CFG: one node per block plus a synthetic entry node with
/// an edge to each function's entry block. Node kind comes from the block's
/// terminator.
pub fn ir_cfg(m: &IrModule) -> Cfg {
    let mut g = Cfg::new(CfgOrigin::Ir);
    let entry = g.add_node(NodeKind::Entry);
    for f in &m.functions {
        let mut ids = HashMap::new();
        for b in &f.blocks {
            let kind = match b.stmts.last() {
                Some(last) if is_terminator(&last.opcode) => last.kind,
                _ => NodeKind::Plain,
            };
            ids.insert(b.id.as_str(), g.add_node(kind));
        }
        if let Some(first) = f.blocks.first() {
            g.add_edge(entry, ids[first.id.as_str()]);
        }
        for b in &f.blocks {
            for s in &b.successors {
                g.add_edge(ids[b.id.as_str()], ids[s.as_str()]);
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_locals() {
        let c = canonicalize("%3 = add nsw i32 %1, %2");
        assert_eq!(c.text, "%ID = add nsw i32 %ID, %ID");
        assert_eq!(c.opcode, "add");
        assert_eq!(c.kind, NodeKind::Plain);
    }

    #[test]
    fn alpha_equivalent_statements_collide() {
        let a = canonicalize("%3 = add nsw i32 %1, %2");
        let b = canonicalize("%x = add nsw i32 %a, %b");
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn constants_survive() {
        let c = canonicalize("store i32 7, i32* %p, align 4");
        assert_eq!(c.text, "store i32 7, i32* %ID, align 4");
    }

    #[test]
    fn metadata_and_attrs_stripped() {
        let c = canonicalize("br label %4, !llvm.loop !6");
        assert_eq!(c.text, "br label LBL");
        let c = canonicalize("%13 = call i32 @classify(i32 noundef %12) #3");
        assert_eq!(c.text, "%ID = call i32 @ID(i32 noundef %ID)");
        assert_eq!(c.kind, NodeKind::Call);
    }

    #[test]
    fn phi_labels_abstracted() {
        let c = canonicalize("%i = phi i32 [ 0, %2 ], [ %i2, %loop ]");
        assert_eq!(c.text, "%ID = phi i32 [ 0, LBL ], [ %ID, LBL ]");
    }

    #[test]
    fn canonicalize_idempotent() {
        for raw in [
            "%3 = add nsw i32 %1, %2",
            "br i1 %6, label %7, label %23",
            "switch i32 %4, label %8 [ i32 1, label %5 i32 2, label %6 ]",
            "%25 = call i32 (ptr, ...) @printf(ptr noundef @.str, i32 noundef %24)",
            "store i32 -1, ptr %2, align 4 ; a comment",
            "ret void",
            "some ! weird unparseable line",
        ] {
            let once = canonicalize(raw);
            let twice = canonicalize(&once.text);
            assert_eq!(once.text, twice.text, "not idempotent for {raw:?}");
            assert_eq!(once.opcode, twice.opcode);
        }
    }

    #[test]
    fn conditional_br_is_branch_kind() {
        assert_eq!(canonicalize("br i1 %c, label %a, label %b").kind, NodeKind::Branch);
        assert_eq!(canonicalize("br label %a").kind, NodeKind::Plain);
        assert_eq!(canonicalize("ret i32 0").kind, NodeKind::Return);
        assert_eq!(canonicalize("unreachable").kind, NodeKind::Exit);
    }

    const MINI: &str = r#"
define i32 @main() {
  %1 = alloca i32, align 4
  store i32 0, ptr %1, align 4
  ret i32 0
}
"#;

    #[test]
    fn minimal_module() {
        let m = parse_ir(MINI).unwrap();
        assert_eq!(m.functions.len(), 1);
        assert_eq!(m.functions[0].blocks.len(), 1);
        let b = &m.functions[0].blocks[0];
        assert_eq!(b.id, IMPLICIT_ENTRY);
        assert_eq!(b.stmts.last().unwrap().kind, NodeKind::Return);
        assert!(b.successors.is_empty());
        let g = ir_cfg(&m);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn conditional_entry_two_successors() {
        let m = parse_ir(
            r#"
define i32 @f(i32 %0) {
  %2 = icmp eq i32 %0, 0
  br i1 %2, label %3, label %4

3:
  ret i32 1

4:
  ret i32 2
}
"#,
        )
        .unwrap();
        assert_eq!(m.functions[0].blocks[0].successors, vec!["3", "4"]);
    }

    #[test]
    fn unknown_block_reference_errors() {
        let err = parse_ir(
            r#"
define void @f() {
  br label %nope
}
"#,
        )
        .unwrap_err();
        assert!(matches!(err, IrParseError::UnknownBlock { .. }));
    }

    #[test]
    fn unterminated_function_errors() {
        let err = parse_ir("define void @f() {\n  ret void\n").unwrap_err();
        match err {
            IrParseError::UnterminatedFunction { line, name } => {
                assert_eq!(line, 1);
                assert_eq!(name, "f");
            }
            other => panic!("wrong error {other:?}"),
        }
    }

    #[test]
    fn two_functions_disjoint_union() {
        let m = parse_ir(
            r#"
define void @a() {
  ret void
}
define void @b() {
  ret void
}
"#,
        )
        .unwrap();
        let g = ir_cfg(&m);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn print_parse_fixpoint() {
        let m1 = parse_ir(
            r#"
define i32 @f(i32 %0) {
  %2 = icmp eq i32 %0, 0
  br i1 %2, label %on, label %off

on:
  br label %off

off:
  ret i32 2
}
"#,
        )
        .unwrap();
        let m2 = parse_ir(&m1.print()).unwrap();
        assert_eq!(m1, m2);
        let m3 = parse_ir(&m2.print()).unwrap();
        assert_eq!(m2, m3);
    }

    #[test]
    fn edge_count_invariant() {
        let m = parse_ir(
            r#"
define i32 @f(i32 %0) {
  br label %a

a:
  br i1 true, label %a, label %b

b:
  ret i32 0
}
define void @g() {
  ret void
}
"#,
        )
        .unwrap();
        let g = ir_cfg(&m);
        let succ_total: usize = m
            .functions
            .iter()
            .flat_map(|f| &f.blocks)
            .map(|b| b.successors.len())
            .sum();
        assert_eq!(g.edge_count(), succ_total + m.functions.len());
    }
}
