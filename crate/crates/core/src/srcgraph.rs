//! Statement-level CFG extraction for a pragmatic C subset.
//!
//! Comments, string literals, and preprocessor lines are stripped, the rest
//! is tokenized, function bodies are parsed by a small recursive-descent
//! parser (if/else, while, do, for, switch/case, break, continue, return,
//! goto/label, compound statements), and statements are lowered onto a CFG
//! with a frontier-based builder. Anything outside the subset degrades to a
//! plain statement node; the only hard failure is unbalanced token nesting.
//!
//! Shape conventions (shared with the IR side through [`NodeKind`]):
//! runs of simple statements merge into one node, upgraded Plain→Call when
//! any merged statement contains a call; if/loop headers are Branch nodes
//! (calls inside a condition do not change the header kind); `for` gets a
//! separate increment node when an increment clause exists and the body can
//! fall through, and `continue` targets it; a function whose end is
//! reachable gets an implicit Return node.

use crate::graph::{Cfg, CfgOrigin, NodeKind};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SrcParseError {
    #[error("unbalanced `{what}` near token {at}")]
    Unbalanced { what: char, at: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Id(String),
    Lit,
    P(char),
}

fn strip_directives(src: &str) -> String {
    let mut out = String::new();
    let mut continuation = false;
    for line in src.lines() {
        if continuation {
            continuation = line.trim_end().ends_with('\\');
            out.push('\n');
            continue;
        }
        if line.trim_start().starts_with('#') {
            continuation = line.trim_end().ends_with('\\');
            out.push('\n');
            continue;
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn tokenize(src: &str) -> Vec<Tok> {
    let b: Vec<char> = src.chars().collect();
    let n = b.len();
    let mut i = 0;
    let mut out = Vec::new();
    while i < n {
        let c = b[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '/' && i + 1 < n && b[i + 1] == '/' {
            while i < n && b[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && i + 1 < n && b[i + 1] == '*' {
            i += 2;
            while i + 1 < n && !(b[i] == '*' && b[i + 1] == '/') {
                i += 1;
            }
            i = (i + 2).min(n);
        } else if c == '"' || c == '\'' {
            i += 1;
            while i < n && b[i] != c {
                if b[i] == '\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(n + 1);
            out.push(Tok::Lit);
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < n && (b[i].is_ascii_alphanumeric() || b[i] == '_') {
                i += 1;
            }
            out.push(Tok::Id(b[start..i].iter().collect()));
        } else if c.is_ascii_digit() {
            while i < n && (b[i].is_ascii_alphanumeric() || b[i] == '.' || b[i] == '_') {
                i += 1;
            }
            out.push(Tok::Lit);
        } else {
            out.push(Tok::P(c));
            i += 1;
        }
    }
    out
}

const KEYWORDS: [&str; 13] = [
    "if", "else", "while", "do", "for", "switch", "case", "default", "break", "continue",
    "return", "goto", "sizeof",
];

fn is_kw(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

fn matching(toks: &[Tok], open_at: usize, open: char, close: char) -> Result<usize, SrcParseError> {
    let mut depth = 0usize;
    for (i, t) in toks.iter().enumerate().skip(open_at) {
        if let Tok::P(c) = t {
            if *c == open {
                depth += 1;
            } else if *c == close {
                depth -= 1;
                if depth == 0 {
                    return Ok(i);
                }
            }
        }
    }
    Err(SrcParseError::Unbalanced { what: open, at: open_at })
}

/// Top-level scan: `name ( ... ) [idents] {` starts a function definition.
fn split_functions(toks: &[Tok]) -> Result<Vec<(String, std::ops::Range<usize>)>, SrcParseError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        match &toks[i] {
            Tok::Id(name) if !is_kw(name) && matches!(toks.get(i + 1), Some(Tok::P('('))) => {
                let rp = matching(toks, i + 1, '(', ')')?;
                let mut j = rp + 1;
                while matches!(toks.get(j), Some(Tok::Id(_))) {
                    j += 1;
                }
                if matches!(toks.get(j), Some(Tok::P('{'))) {
                    let rb = matching(toks, j, '{', '}')?;
                    out.push((name.clone(), j + 1..rb));
                    i = rb + 1;
                } else {
                    i = rp + 1;
                }
            }
            Tok::P('{') => i = matching(toks, i, '{', '}')? + 1,
            Tok::P('(') => i = matching(toks, i, '(', ')')? + 1,
            _ => i += 1,
        }
    }
    Ok(out)
}

fn range_has_call(toks: &[Tok]) -> bool {
    toks.windows(2).any(|w| {
        matches!((&w[0], &w[1]), (Tok::Id(name), Tok::P('(')) if !is_kw(name))
    })
}

#[derive(Debug)]
struct LStmt {
    case_marks: u32,
    default_mark: bool,
    labels: Vec<String>,
    kind: Stmt,
}

#[derive(Debug)]
enum Stmt {
    Empty,
    Simple { has_call: bool },
    Compound(Vec<LStmt>),
    If { then_b: Box<LStmt>, else_b: Option<Box<LStmt>> },
    While { body: Box<LStmt> },
    DoWhile { body: Box<LStmt> },
    For { init: Option<bool>, inc: Option<bool>, body: Box<LStmt> },
    Switch { body: Box<LStmt> },
    Return,
    Break,
    Continue,
    Goto(String),
}

struct Parser<'t> {
    t: &'t [Tok],
    i: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&Tok> {
        self.t.get(self.i)
    }

    fn at_id(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Id(w)) if w == s)
    }

    fn at_p(&self, c: char) -> bool {
        matches!(self.peek(), Some(Tok::P(w)) if *w == c)
    }

    fn eat_p(&mut self, c: char) -> bool {
        if self.at_p(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    /// Skip a parenthesized group if present; returns the inner token range.
    fn skip_parens(&mut self) -> Result<std::ops::Range<usize>, SrcParseError> {
        if !self.at_p('(') {
            return Ok(self.i..self.i);
        }
        let close = matching(self.t, self.i, '(', ')')?;
        let inner = self.i + 1..close;
        self.i = close + 1;
        Ok(inner)
    }

    /// Consume an expression/declaration statement up to `;` (nesting-aware).
    /// Returns the consumed range, excluding the terminator.
    fn consume_simple(&mut self) -> std::ops::Range<usize> {
        let start = self.i;
        let mut pd = 0i32;
        let mut bd = 0i32;
        while let Some(t) = self.peek() {
            match t {
                Tok::P(';') if pd == 0 && bd == 0 => {
                    let r = start..self.i;
                    self.i += 1;
                    return r;
                }
                Tok::P('}') if bd == 0 => break,
                Tok::P('(') => pd += 1,
                Tok::P(')') => {
                    if pd == 0 {
                        break;
                    }
                    pd -= 1;
                }
                Tok::P('{') => bd += 1,
                Tok::P('}') => bd -= 1,
                _ => {}
            }
            self.i += 1;
        }
        if self.i == start {
            self.i += 1; // guarantee progress on stray tokens
        }
        start..self.i
    }

    fn parse_stmt(&mut self) -> Result<LStmt, SrcParseError> {
        let mut case_marks = 0;
        let mut default_mark = false;
        let mut labels = Vec::new();
        loop {
            if self.at_id("case") {
                self.i += 1;
                let mut pd = 0i32;
                while let Some(t) = self.peek() {
                    match t {
                        Tok::P(':') if pd == 0 => {
                            self.i += 1;
                            break;
                        }
                        Tok::P('(') => pd += 1,
                        Tok::P(')') => pd -= 1,
                        _ => {}
                    }
                    self.i += 1;
                }
                case_marks += 1;
            } else if self.at_id("default") && matches!(self.t.get(self.i + 1), Some(Tok::P(':'))) {
                self.i += 2;
                default_mark = true;
            } else if let (Some(Tok::Id(name)), Some(Tok::P(':'))) =
                (self.peek(), self.t.get(self.i + 1))
            {
                if is_kw(name) {
                    break;
                }
                labels.push(name.clone());
                self.i += 2;
            } else {
                break;
            }
        }
        let kind = self.parse_core()?;
        Ok(LStmt { case_marks, default_mark, labels, kind })
    }

    fn parse_core(&mut self) -> Result<Stmt, SrcParseError> {
        if self.eat_p(';') {
            return Ok(Stmt::Empty);
        }
        if self.at_p('{') {
            let close = matching(self.t, self.i, '{', '}')?;
            self.i += 1;
            let mut items = Vec::new();
            while self.i < close {
                items.push(self.parse_stmt()?);
            }
            self.i = close + 1;
            return Ok(Stmt::Compound(items));
        }
        if self.at_id("if") {
            self.i += 1;
            self.skip_parens()?;
            let then_b = Box::new(self.parse_stmt()?);
            let else_b = if self.at_id("else") {
                self.i += 1;
                Some(Box::new(self.parse_stmt()?))
            } else {
                None
            };
            return Ok(Stmt::If { then_b, else_b });
        }
        if self.at_id("while") {
            self.i += 1;
            self.skip_parens()?;
            return Ok(Stmt::While { body: Box::new(self.parse_stmt()?) });
        }
        if self.at_id("do") {
            self.i += 1;
            let body = Box::new(self.parse_stmt()?);
            if self.at_id("while") {
                self.i += 1;
                self.skip_parens()?;
                self.eat_p(';');
            }
            return Ok(Stmt::DoWhile { body });
        }
        if self.at_id("for") {
            self.i += 1;
            let header = self.skip_parens()?;
            // Split the header on depth-0 semicolons into init/cond/inc.
            let toks = &self.t[header.clone()];
            let mut cuts = Vec::new();
            let mut pd = 0i32;
            for (k, t) in toks.iter().enumerate() {
                match t {
                    Tok::P('(') => pd += 1,
                    Tok::P(')') => pd -= 1,
                    Tok::P(';') if pd == 0 => cuts.push(k),
                    _ => {}
                }
            }
            let (init, inc) = if cuts.len() == 2 {
                let ini = &toks[..cuts[0]];
                let inc = &toks[cuts[1] + 1..];
                (
                    (!ini.is_empty()).then(|| range_has_call(ini)),
                    (!inc.is_empty()).then(|| range_has_call(inc)),
                )
            } else {
                ((!toks.is_empty()).then(|| range_has_call(toks)), None)
            };
            return Ok(Stmt::For { init, inc, body: Box::new(self.parse_stmt()?) });
        }
        if self.at_id("switch") {
            self.i += 1;
            self.skip_parens()?;
            return Ok(Stmt::Switch { body: Box::new(self.parse_stmt()?) });
        }
        if self.at_id("return") {
            self.i += 1;
            self.consume_simple();
            return Ok(Stmt::Return);
        }
        if self.at_id("break") {
            self.i += 1;
            self.eat_p(';');
            return Ok(Stmt::Break);
        }
        if self.at_id("continue") {
            self.i += 1;
            self.eat_p(';');
            return Ok(Stmt::Continue);
        }
        if self.at_id("goto") {
            self.i += 1;
            let name = match self.peek() {
                Some(Tok::Id(n)) => {
                    let n = n.clone();
                    self.i += 1;
                    n
                }
                _ => String::new(),
            };
            self.eat_p(';');
            return Ok(Stmt::Goto(name));
        }
        let r = self.consume_simple();
        Ok(Stmt::Simple { has_call: range_has_call(&self.t[r]) })
    }
}

enum Ctx {
    Loop { breaks: Vec<u32>, continues: Vec<u32> },
    Sw { breaks: Vec<u32> },
}

struct Lower<'g> {
    g: &'g mut Cfg,
    frontier: Vec<u32>,
    open: Option<u32>,
    stack: Vec<Ctx>,
    labels: HashMap<String, u32>,
    gotos: Vec<(Vec<u32>, String)>,
}

fn extend_unique(v: &mut Vec<u32>, add: impl IntoIterator<Item = u32>) {
    for x in add {
        if !v.contains(&x) {
            v.push(x);
        }
    }
}

impl Lower<'_> {
    fn seal(&mut self, kind: NodeKind) -> u32 {
        let n = self.g.add_node(kind);
        for &u in &self.frontier {
            self.g.add_edge(u, n);
        }
        self.frontier = vec![n];
        self.open = None;
        n
    }

    fn take_frontier(&mut self) -> Vec<u32> {
        self.open = None;
        std::mem::take(&mut self.frontier)
    }

    fn lower_lstmt(&mut self, ls: &LStmt) {
        for name in &ls.labels {
            let ln = self.seal(NodeKind::Plain);
            self.labels.entry(name.clone()).or_insert(ln);
        }
        self.lower_core(&ls.kind);
    }

    fn lower_core(&mut self, s: &Stmt) {
        match s {
            Stmt::Empty => {}
            Stmt::Simple { has_call } => {
                if let Some(n) = self.open {
                    if self.frontier == [n] {
                        if *has_call && self.g.kind(n) == NodeKind::Plain {
                            self.g.set_kind(n, NodeKind::Call);
                        }
                        return;
                    }
                }
                let k = if *has_call { NodeKind::Call } else { NodeKind::Plain };
                let n = self.seal(k);
                self.open = Some(n);
            }
            Stmt::Compound(items) => {
                for it in items {
                    self.lower_lstmt(it);
                }
            }
            Stmt::If { then_b, else_b } => {
                let h = self.seal(NodeKind::Branch);
                self.frontier = vec![h];
                self.open = None;
                self.lower_lstmt(then_b);
                let then_f = self.take_frontier();
                let mut joined = then_f;
                match else_b {
                    Some(e) => {
                        self.frontier = vec![h];
                        self.lower_lstmt(e);
                        let else_f = self.take_frontier();
                        extend_unique(&mut joined, else_f);
                    }
                    None => extend_unique(&mut joined, [h]),
                }
                self.frontier = joined;
            }
            Stmt::While { body } => {
                let h = self.seal(NodeKind::Branch);
                self.stack.push(Ctx::Loop { breaks: vec![], continues: vec![] });
                self.frontier = vec![h];
                self.open = None;
                self.lower_lstmt(body);
                let mut tail = self.take_frontier();
                let Some(Ctx::Loop { breaks, continues }) = self.stack.pop() else {
                    unreachable!()
                };
                extend_unique(&mut tail, continues);
                for u in tail {
                    self.g.add_edge(u, h);
                }
                self.frontier = vec![h];
                extend_unique(&mut self.frontier, breaks);
            }
            Stmt::DoWhile { body } => {
                let body_entry = self.g.node_count() as u32;
                self.stack.push(Ctx::Loop { breaks: vec![], continues: vec![] });
                self.open = None;
                self.lower_lstmt(body);
                let Some(Ctx::Loop { breaks, continues }) = self.stack.pop() else {
                    unreachable!()
                };
                extend_unique(&mut self.frontier, continues);
                let c = self.seal(NodeKind::Branch);
                let target = if body_entry < c { body_entry } else { c };
                self.g.add_edge(c, target);
                self.frontier = vec![c];
                extend_unique(&mut self.frontier, breaks);
            }
            Stmt::For { init, inc, body } => {
                if let Some(has_call) = init {
                    self.lower_core(&Stmt::Simple { has_call: *has_call });
                }
                let h = self.seal(NodeKind::Branch);
                self.stack.push(Ctx::Loop { breaks: vec![], continues: vec![] });
                self.frontier = vec![h];
                self.open = None;
                self.lower_lstmt(body);
                let mut tail = self.take_frontier();
                let Some(Ctx::Loop { breaks, continues }) = self.stack.pop() else {
                    unreachable!()
                };
                extend_unique(&mut tail, continues);
                match inc {
                    Some(inc_call) if !tail.is_empty() => {
                        let k = if *inc_call { NodeKind::Call } else { NodeKind::Plain };
                        let n = self.g.add_node(k);
                        for u in tail {
                            self.g.add_edge(u, n);
                        }
                        self.g.add_edge(n, h);
                    }
                    _ => {
                        for u in tail {
                            self.g.add_edge(u, h);
                        }
                    }
                }
                self.frontier = vec![h];
                extend_unique(&mut self.frontier, breaks);
            }
            Stmt::Switch { body } => {
                let s_node = self.seal(NodeKind::Switch);
                self.stack.push(Ctx::Sw { breaks: vec![] });
                self.frontier = vec![];
                self.open = None;
                let single;
                let items: &[LStmt] = match &body.kind {
                    Stmt::Compound(v)
                        if body.case_marks == 0
                            && !body.default_mark
                            && body.labels.is_empty() =>
                    {
                        v
                    }
                    _ => {
                        single = std::slice::from_ref(body.as_ref());
                        &single[..]
                    }
                };
                let mut has_default = false;
                for it in items {
                    if it.case_marks > 0 || it.default_mark {
                        extend_unique(&mut self.frontier, [s_node]);
                        self.open = None;
                        has_default |= it.default_mark;
                    }
                    self.lower_lstmt(it);
                }
                let Some(Ctx::Sw { breaks }) = self.stack.pop() else { unreachable!() };
                self.open = None;
                extend_unique(&mut self.frontier, breaks);
                if !has_default {
                    extend_unique(&mut self.frontier, [s_node]);
                }
            }
            Stmt::Return => {
                self.seal(NodeKind::Return);
                self.frontier.clear();
                self.open = None;
            }
            Stmt::Break => {
                let f = self.take_frontier();
                for ctx in self.stack.iter_mut().rev() {
                    match ctx {
                        Ctx::Loop { breaks, .. } | Ctx::Sw { breaks } => {
                            extend_unique(breaks, f);
                            return;
                        }
                    }
                }
            }
            Stmt::Continue => {
                let f = self.take_frontier();
                for ctx in self.stack.iter_mut().rev() {
                    if let Ctx::Loop { continues, .. } = ctx {
                        extend_unique(continues, f);
                        return;
                    }
                }
            }
            Stmt::Goto(name) => {
                let f = self.take_frontier();
                self.gotos.push((f, name.clone()));
            }
        }
    }
}

/// Lexemes after directive and comment stripping, as feature-hashing input:
/// identifiers and keywords verbatim, every literal collapsed to `<lit>`,
/// punctuation as itself.
pub fn source_tokens(source_text: &str) -> Vec<String> {
    tokenize(&strip_directives(source_text))
        .into_iter()
        .map(|t| match t {
            Tok::Id(s) => s,
            Tok::Lit => "<lit>".to_string(),
            Tok::P(c) => c.to_string(),
        })
        .collect()
}

/// Build the module-level source CFG: one synthetic entry node with an edge
/// into each parsed function's subgraph.
pub fn source_cfg(source_text: &str) -> Result<Cfg, SrcParseError> {
    let toks = tokenize(&strip_directives(source_text));
    let funcs = split_functions(&toks)?;
    let mut g = Cfg::new(CfgOrigin::Source);
    let entry = g.add_node(NodeKind::Entry);
    for (_name, range) in funcs {
        let body = &toks[range];
        let mut p = Parser { t: body, i: 0 };
        let mut items = Vec::new();
        while p.i < body.len() {
            items.push(p.parse_stmt()?);
        }
        let mut lo = Lower {
            g: &mut g,
            frontier: vec![entry],
            open: None,
            stack: Vec::new(),
            labels: HashMap::new(),
            gotos: Vec::new(),
        };
        for it in &items {
            lo.lower_lstmt(it);
        }
        if !lo.frontier.is_empty() {
            lo.seal(NodeKind::Return);
        }
        let gotos = std::mem::take(&mut lo.gotos);
        for (srcs, name) in gotos {
            if let Some(&ln) = lo.labels.get(&name) {
                for u in srcs {
                    lo.g.add_edge(u, ln);
                }
            }
        }
    }
    Ok(g)
}
