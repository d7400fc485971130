//! Baseline statement vocabulary and OOV counting.
//!
//! The vocabulary is the set of canonical statements observed across the
//! training corpus at -O0. `count_oov` then measures, for any module, how
//! many statement occurrences fall outside it. Ids are dense and assigned in
//! lexicographic statement order, so the same corpus and toolchain always
//! serialize to the same bytes.

use crate::irgraph::IrModule;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from zero compiled modules")]
    EmptyCorpus,
    #[error("vocabulary file line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    entries: BTreeMap<String, u32>,
    pub corpus_digest: String,
    pub toolchain_version: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OovCount {
    pub total_statements: u64,
    pub oov_occurrences: u64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id_of(&self, canonical_text: &str) -> Option<u32> {
        self.entries.get(canonical_text).copied()
    }

    pub fn contains(&self, canonical_text: &str) -> bool {
        self.entries.contains_key(canonical_text)
    }

    /// Entries in id order (== lexicographic text order).
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.entries.iter().map(|(t, &i)| (t.as_str(), i))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# irforge-vocab v1\n");
        out.push_str(&format!("# corpus {}\n", self.corpus_digest));
        out.push_str(&format!("# toolchain {}\n", self.toolchain_version));
        for (text, id) in &self.entries {
            out.push_str(&format!("{id}\t{text}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(VocabError::Parse {
            line: 1,
            msg: "empty file".into(),
        })?;
        if header != "# irforge-vocab v1" {
            return Err(VocabError::Parse {
                line: 1,
                msg: format!("unsupported header `{header}`"),
            });
        }
        let mut corpus_digest = String::new();
        let mut toolchain_version = String::new();
        let mut entries = BTreeMap::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if let Some(rest) = line.strip_prefix("# corpus ") {
                corpus_digest = rest.to_string();
            } else if let Some(rest) = line.strip_prefix("# toolchain ") {
                toolchain_version = rest.to_string();
            } else if line.is_empty() {
                continue;
            } else {
                let (id, text) = line.split_once('\t').ok_or_else(|| VocabError::Parse {
                    line: lineno,
                    msg: "expected `<id>\\t<statement>`".into(),
                })?;
                let id: u32 = id.parse().map_err(|_| VocabError::Parse {
                    line: lineno,
                    msg: format!("bad id `{id}`"),
                })?;
                entries.insert(text.to_string(), id);
            }
        }
        // Ids must be dense and in lexicographic text order.
        for (expect, (_, &got)) in entries.iter().enumerate() {
            if got as usize != expect {
                return Err(VocabError::Parse {
                    line: 0,
                    msg: format!("non-dense id {got}, expected {expect}"),
                });
            }
        }
        Ok(Self { entries, corpus_digest, toolchain_version })
    }
}

/// Collect every canonical statement across the training baselines.
pub fn build_vocab(
    train_o0_modules: &[IrModule],
    corpus_digest: &str,
    toolchain_version: &str,
) -> Result<Vocabulary, VocabError> {
    if train_o0_modules.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let mut texts: Vec<&str> = train_o0_modules
        .iter()
        .flat_map(|m| m.statements())
        .map(|s| s.text.as_str())
        .collect();
    texts.sort_unstable();
    texts.dedup();
    let entries = texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t.to_string(), i as u32))
        .collect();
    Ok(Vocabulary {
        entries,
        corpus_digest: corpus_digest.to_string(),
        toolchain_version: toolchain_version.to_string(),
    })
}

/// Statement occurrences (with multiplicity) absent from the vocabulary.
pub fn count_oov(m: &IrModule, v: &Vocabulary) -> OovCount {
    let mut c = OovCount::default();
    for s in m.statements() {
        c.total_statements += 1;
        if !v.contains(&s.text) {
            c.oov_occurrences += 1;
        }
    }
    c
}

/// Add-one smoothed OOV multiplier: (base+1)/(opt+1).
pub fn oov_ratio(base: &OovCount, opt: &OovCount) -> f64 {
    (base.oov_occurrences as f64 + 1.0) / (opt.oov_occurrences as f64 + 1.0)
}

/// The unsmoothed form; undefined when the optimized module has no OOV.
pub fn oov_ratio_unsmoothed(base: &OovCount, opt: &OovCount) -> Option<f64> {
    if opt.oov_occurrences == 0 {
        None
    } else {
        Some(base.oov_occurrences as f64 / opt.oov_occurrences as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irgraph::parse_ir;

    const SAMPLE: &str = r#"
define i32 @main() {
  %1 = alloca i32, align 4
  store i32 0, ptr %1, align 4
  %2 = load i32, ptr %1, align 4
  ret i32 %2
}
"#;

    fn vb(modules: &[IrModule]) -> Vocabulary {
        build_vocab(modules, "d0", "tc0").unwrap()
    }

    #[test]
    fn own_module_has_zero_oov() {
        let m = parse_ir(SAMPLE).unwrap();
        let v = vb(std::slice::from_ref(&m));
        let c = count_oov(&m, &v);
        assert_eq!(c.oov_occurrences, 0);
        assert_eq!(c.total_statements, 4);
    }

    #[test]
    fn alpha_renamed_copy_changes_nothing() {
        let renamed = SAMPLE.replace("%1", "%p").replace("%2", "%q");
        let a = parse_ir(SAMPLE).unwrap();
        let b = parse_ir(&renamed).unwrap();
        assert_eq!(vb(std::slice::from_ref(&a)), vb(&[a.clone(), b.clone()]));
        assert_eq!(count_oov(&b, &vb(std::slice::from_ref(&a))).oov_occurrences, 0);
    }

    #[test]
    fn novel_statement_counts_with_multiplicity() {
        let m = parse_ir(SAMPLE).unwrap();
        let v = vb(std::slice::from_ref(&m));
        let novel = parse_ir(
            r#"
define i32 @f() {
  %1 = mul nsw i32 3, 3
  %2 = mul nsw i32 4, 4
  ret i32 %1
}
"#,
        )
        .unwrap();
        let c = count_oov(&novel, &v);
        // the two muls canonicalize differently (distinct constants); ret i32 %ID is known
        assert_eq!(c.total_statements, 3);
        assert_eq!(c.oov_occurrences, 2);
    }

    #[test]
    fn empty_module_counts_zero() {
        let m = parse_ir("").unwrap();
        let v = vb(&[parse_ir(SAMPLE).unwrap()]);
        assert_eq!(count_oov(&m, &v), OovCount { total_statements: 0, oov_occurrences: 0 });
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(build_vocab(&[], "d", "t"), Err(VocabError::EmptyCorpus)));
    }

    #[test]
    fn ratio_examples() {
        let c = |oov| OovCount { total_statements: 10, oov_occurrences: oov };
        assert_eq!(oov_ratio(&c(0), &c(0)), 1.0);
        assert_eq!(oov_ratio(&c(0), &c(9)), 0.1);
        assert_eq!(oov_ratio(&c(4), &c(4)), 1.0);
        assert_eq!(oov_ratio_unsmoothed(&c(1), &c(0)), None);
        assert_eq!(oov_ratio_unsmoothed(&c(3), &c(2)), Some(1.5));
    }

    #[test]
    fn ratio_strictly_decreases_in_opt() {
        let base = OovCount { total_statements: 5, oov_occurrences: 2 };
        let mut prev = f64::INFINITY;
        for opt in 0..50 {
            let r = oov_ratio(&base, &OovCount { total_statements: 100, oov_occurrences: opt });
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn serialization_round_trips() {
        let m = parse_ir(SAMPLE).unwrap();
        let v = build_vocab(std::slice::from_ref(&m), "abc123", "clang 14.0.0 / opt shim").unwrap();
        let text = v.to_text();
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(v, back);
        assert_eq!(text, back.to_text());
        assert!(text.starts_with("# irforge-vocab v1\n# corpus abc123\n"));
    }

    #[test]
    fn ids_are_dense_and_lexicographic() {
        let m = parse_ir(SAMPLE).unwrap();
        let v = vb(std::slice::from_ref(&m));
        let texts: Vec<&str> = v.iter().map(|(t, _)| t).collect();
        let mut sorted = texts.clone();
        sorted.sort_unstable();
        assert_eq!(texts, sorted);
        for (i, (_, id)) in v.iter().enumerate() {
            assert_eq!(id as usize, i);
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(Vocabulary::from_text("# not-a-vocab\n").is_err());
    }
}
