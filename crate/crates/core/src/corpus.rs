//! Corpus ingest, train/test splitting, and validation-set sampling.
//!
//! Records are ordered lexicographically by relative path and identified by
//! it; content hashes are SHA-256 of the raw bytes. With a manifest
//! (`relative/path<TAB>class_label` per line) only listed files are
//! ingested; without one, every `.c`/`.cpp` file under the root is taken and
//! the parent directory name becomes the class label.

use crate::sha256_hex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use thiserror::Error;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no ingestible programs under {0}")]
    Empty(PathBuf),
    #[error("manifest line {line}: expected `relative/path<TAB>label`")]
    Manifest { line: usize },
    #[error("validation fraction {0} outside (0, 1]")]
    Fraction(f64),
    #[error("train split is empty")]
    EmptyTrain,
    #[error("corpus index line {line}: {msg}")]
    IndexParse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramRecord {
    pub id: String,
    pub source_path: PathBuf,
    pub class_label: String,
    pub content_hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitSide {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    records: Vec<ProgramRecord>,
    split: BTreeMap<String, SplitSide>,
    /// Files skipped at ingest (unreadable, or listed in the manifest but
    /// missing), with reasons. Not part of the serialized index.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSet {
    pub member_ids: Vec<String>,
    pub seed: u64,
    pub fraction: f64,
}

fn rel_id(root: &Path, p: &Path) -> String {
    let rel = p.strip_prefix(root).unwrap_or(p);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut map = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (path, label) = line
            .split_once('\t')
            .ok_or(CorpusError::Manifest { line: idx + 1 })?;
        map.insert(path.to_string(), label.to_string());
    }
    Ok(map)
}

impl Corpus {
    /// Ingest a program tree. Every record lands in the train split; apply
    /// one of the `split_*` methods afterwards to carve out a test set.
    pub fn ingest(root: &Path, manifest: Option<&Path>) -> Result<Corpus, CorpusError> {
        let manifest = match manifest {
            Some(p) => Some(parse_manifest(&std::fs::read_to_string(p)?)?),
            None => None,
        };
        let mut candidates: Vec<(String, PathBuf)> = Vec::new();
        let mut warnings = Vec::new();
        match &manifest {
            Some(map) => {
                for (rel, _) in map {
                    let p = root.join(rel);
                    if p.is_file() {
                        candidates.push((rel.clone(), p));
                    } else {
                        warnings.push(format!("manifest entry missing on disk: {rel}"));
                    }
                }
            }
            None => {
                for entry in WalkDir::new(root).sort_by_file_name() {
                    let entry = match entry {
                        Ok(e) => e,
                        Err(e) => {
                            warnings.push(format!("walk error: {e}"));
                            continue;
                        }
                    };
                    if !entry.file_type().is_file() {
                        continue;
                    }
                    let ext = entry.path().extension().and_then(|e| e.to_str());
                    if matches!(ext, Some("c") | Some("cpp")) {
                        candidates.push((rel_id(root, entry.path()), entry.path().to_path_buf()));
                    }
                }
            }
        }
        candidates.sort_by(|a, b| a.0.cmp(&b.0));

        let mut records = Vec::new();
        let mut split = BTreeMap::new();
        for (id, path) in candidates {
            let bytes = match std::fs::read(&path) {
                Ok(b) => b,
                Err(e) => {
                    warnings.push(format!("unreadable, skipped: {id}: {e}"));
                    continue;
                }
            };
            let class_label = match &manifest {
                Some(map) => map[&id].clone(),
                None => {
                    let parent = Path::new(&id).parent().and_then(|p| p.file_name());
                    parent
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| "unlabeled".to_string())
                }
            };
            split.insert(id.clone(), SplitSide::Train);
            records.push(ProgramRecord {
                id,
                source_path: path,
                class_label,
                content_hash: sha256_hex(&bytes),
            });
        }
        if records.is_empty() {
            return Err(CorpusError::Empty(root.to_path_buf()));
        }
        Ok(Corpus { records, split, warnings })
    }

    pub fn records(&self) -> &[ProgramRecord] {
        &self.records
    }

    pub fn record(&self, id: &str) -> Option<&ProgramRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn side(&self, id: &str) -> Option<SplitSide> {
        self.split.get(id).copied()
    }

    pub fn train(&self) -> Vec<&ProgramRecord> {
        self.records
            .iter()
            .filter(|r| self.split.get(&r.id) == Some(&SplitSide::Train))
            .collect()
    }

    pub fn test(&self) -> Vec<&ProgramRecord> {
        self.records
            .iter()
            .filter(|r| self.split.get(&r.id) == Some(&SplitSide::Test))
            .collect()
    }

    pub fn class_labels(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.class_label.as_str()).collect()
    }

    /// Stratified by-record split: within each class (records in id order),
    /// the last ⌈fraction·n⌉ go to test. Fraction 0 keeps everything in
    /// train.
    pub fn split_by_record(&mut self, test_fraction: f64) -> Result<(), CorpusError> {
        if !(0.0..=1.0).contains(&test_fraction) {
            return Err(CorpusError::Fraction(test_fraction));
        }
        let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for r in &self.records {
            by_class.entry(&r.class_label).or_default().push(&r.id);
        }
        let mut split = BTreeMap::new();
        for (_, ids) in by_class {
            let n_test = (test_fraction * ids.len() as f64).ceil() as usize;
            let cut = ids.len() - n_test.min(ids.len());
            for (i, id) in ids.iter().enumerate() {
                let side = if i < cut { SplitSide::Train } else { SplitSide::Test };
                split.insert(id.to_string(), side);
            }
        }
        self.split = split;
        Ok(())
    }

    /// By-class split: the last ⌈fraction·k⌉ of the k sorted class labels go
    /// entirely to test.
    pub fn split_by_class(&mut self, test_fraction: f64) -> Result<(), CorpusError> {
        if !(0.0..=1.0).contains(&test_fraction) {
            return Err(CorpusError::Fraction(test_fraction));
        }
        let classes: Vec<&str> = self.class_labels().into_iter().collect();
        let n_test = (test_fraction * classes.len() as f64).ceil() as usize;
        let cut = classes.len() - n_test.min(classes.len());
        let test_classes: BTreeSet<String> =
            classes[cut..].iter().map(|s| s.to_string()).collect();
        let mut split = BTreeMap::new();
        for r in &self.records {
            let side = if test_classes.contains(&r.class_label) {
                SplitSide::Test
            } else {
                SplitSide::Train
            };
            split.insert(r.id.clone(), side);
        }
        self.split = split;
        Ok(())
    }

    pub fn to_index_text(&self) -> String {
        let mut out = String::from("# irforge-corpus v1\n");
        for r in &self.records {
            let side = match self.split[&r.id] {
                SplitSide::Train => "train",
                SplitSide::Test => "test",
            };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.id, r.class_label, r.content_hash, side
            ));
        }
        out
    }

    /// Rebuild a corpus from its index; `root` re-anchors source paths.
    pub fn from_index_text(root: &Path, text: &str) -> Result<Corpus, CorpusError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "# irforge-corpus v1")) => {}
            other => {
                return Err(CorpusError::IndexParse {
                    line: 1,
                    msg: format!("bad header {:?}", other.map(|(_, l)| l)),
                })
            }
        }
        let mut records = Vec::new();
        let mut split = BTreeMap::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [id, class_label, content_hash, side] = parts[..] else {
                return Err(CorpusError::IndexParse {
                    line: idx + 1,
                    msg: "expected 4 tab-separated fields".into(),
                });
            };
            let side = match side {
                "train" => SplitSide::Train,
                "test" => SplitSide::Test,
                other => {
                    return Err(CorpusError::IndexParse {
                        line: idx + 1,
                        msg: format!("bad split side `{other}`"),
                    })
                }
            };
            split.insert(id.to_string(), side);
            records.push(ProgramRecord {
                id: id.to_string(),
                source_path: root.join(id),
                class_label: class_label.to_string(),
                content_hash: content_hash.to_string(),
            });
        }
        if records.is_empty() {
            return Err(CorpusError::Empty(root.to_path_buf()));
        }
        Ok(Corpus { records, split, warnings: Vec::new() })
    }
}

/// Draw the GA validation subset P from the train split: round(fraction·n)
/// members (at least 1), uniform without replacement, reproducible in
/// (fraction, seed) and independent of filesystem order.
pub fn sample_validation(
    corpus: &Corpus,
    fraction: f64,
    seed: u64,
) -> Result<ValidationSet, CorpusError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::Fraction(fraction));
    }
    let train: Vec<&str> = corpus.train().iter().map(|r| r.id.as_str()).collect();
    if train.is_empty() {
        return Err(CorpusError::EmptyTrain);
    }
    let n = train.len();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first k slots become the sample.
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut member_ids: Vec<String> = idx[..k].iter().map(|&i| train[i].to_string()).collect();
    member_ids.sort_unstable();
    Ok(ValidationSet { member_ids, seed, fraction })
}

/// Stratified variant: max(1, round(fraction·n_c)) members per class.
pub fn sample_validation_stratified(
    corpus: &Corpus,
    fraction: f64,
    seed: u64,
) -> Result<ValidationSet, CorpusError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CorpusError::Fraction(fraction));
    }
    let train = corpus.train();
    if train.is_empty() {
        return Err(CorpusError::EmptyTrain);
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in train {
        by_class.entry(&r.class_label).or_default().push(&r.id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut member_ids = Vec::new();
    for (_, ids) in by_class {
        let n = ids.len();
        let k = ((fraction * n as f64).round() as usize).clamp(1, n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.gen_range(i..n);
            idx.swap(i, j);
        }
        member_ids.extend(idx[..k].iter().map(|&i| ids[i].to_string()));
    }
    member_ids.sort_unstable();
    Ok(ValidationSet { member_ids, seed, fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn toy_tree(root: &Path) {
        fs::create_dir_all(root.join("alpha")).unwrap();
        fs::create_dir_all(root.join("beta")).unwrap();
        fs::write(root.join("alpha/a1.c"), "int main(){return 1;}\n").unwrap();
        fs::write(root.join("alpha/a2.c"), "int main(){return 2;}\n").unwrap();
        fs::write(root.join("beta/b1.c"), "int main(){return 3;}\n").unwrap();
    }

    #[test]
    fn ingest_counts_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        toy_tree(dir.path());
        let c = Corpus::ingest(dir.path(), None).unwrap();
        assert_eq!(c.records().len(), 3);
        assert_eq!(c.class_labels().len(), 2);
        assert_eq!(c.records()[0].id, "alpha/a1.c");
        assert_eq!(c.records()[0].class_label, "alpha");
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn ingest_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        toy_tree(dir.path());
        let a = Corpus::ingest(dir.path(), None).unwrap();
        let b = Corpus::ingest(dir.path(), None).unwrap();
        assert_eq!(a.to_index_text(), b.to_index_text());
    }

    #[test]
    fn duplicate_bytes_share_hash() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("x")).unwrap();
        fs::write(dir.path().join("x/one.c"), "hello\n").unwrap();
        fs::write(dir.path().join("x/two.c"), "hello\n").unwrap();
        let c = Corpus::ingest(dir.path(), None).unwrap();
        assert_eq!(c.records()[0].content_hash, c.records()[1].content_hash);
        // sha256 of "hello\n", frozen from sha256sum
        assert_eq!(
            c.records()[0].content_hash,
            "5891b5b522d5df086d0ff0b110fbd9d21bb4fc7163af34d08286a2e846f6be03"
        );
    }

    #[test]
    fn manifest_selects_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        toy_tree(dir.path());
        let man = dir.path().join("manifest.tsv");
        fs::write(&man, "alpha/a1.c\tclassX\nbeta/b1.c\tclassY\nmissing.c\tclassZ\n").unwrap();
        let c = Corpus::ingest(dir.path(), Some(&man)).unwrap();
        assert_eq!(c.records().len(), 2);
        assert_eq!(c.records()[0].class_label, "classX");
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn empty_corpus_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Corpus::ingest(dir.path(), None),
            Err(CorpusError::Empty(_))
        ));
    }

    #[test]
    fn index_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        toy_tree(dir.path());
        let mut c = Corpus::ingest(dir.path(), None).unwrap();
        c.split_by_record(0.34).unwrap();
        let text = c.to_index_text();
        let back = Corpus::from_index_text(dir.path(), &text).unwrap();
        assert_eq!(text, back.to_index_text());
        assert_eq!(c.records(), back.records());
    }

    fn synthetic(n_per_class: &[usize]) -> Corpus {
        let mut records = Vec::new();
        let mut split = BTreeMap::new();
        for (ci, &n) in n_per_class.iter().enumerate() {
            for i in 0..n {
                let id = format!("c{ci:02}/p{i:05}.c");
                split.insert(id.clone(), SplitSide::Train);
                records.push(ProgramRecord {
                    id: id.clone(),
                    source_path: PathBuf::from(&id),
                    class_label: format!("c{ci:02}"),
                    content_hash: format!("{i:064x}"),
                });
            }
        }
        Corpus { records, split, warnings: Vec::new() }
    }

    #[test]
    fn split_by_record_is_stratified() {
        let mut c = synthetic(&[10, 10]);
        c.split_by_record(0.2).unwrap();
        assert_eq!(c.train().len(), 16);
        assert_eq!(c.test().len(), 4);
        let test_classes: BTreeSet<&str> =
            c.test().iter().map(|r| r.class_label.as_str()).collect();
        assert_eq!(test_classes.len(), 2, "both classes represented in test");
        // last two ids of each class go to test
        assert_eq!(c.side("c00/p00008.c"), Some(SplitSide::Test));
        assert_eq!(c.side("c00/p00007.c"), Some(SplitSide::Train));
    }

    #[test]
    fn split_by_class_keeps_classes_whole() {
        let mut c = synthetic(&[4, 4, 4]);
        c.split_by_class(0.34).unwrap();
        let test_classes: BTreeSet<&str> =
            c.test().iter().map(|r| r.class_label.as_str()).collect();
        assert_eq!(test_classes.len(), 2); // ceil(0.34*3) = 2
        for r in c.records() {
            let in_test = test_classes.contains(r.class_label.as_str());
            assert_eq!(c.side(&r.id) == Some(SplitSide::Test), in_test);
        }
    }

    #[test]
    fn validation_sample_size_matches_paper_scale() {
        let c = synthetic(&[28103]);
        let v = sample_validation(&c, 0.05, 7).unwrap();
        assert_eq!(v.member_ids.len(), 1405);
        let uniq: BTreeSet<&String> = v.member_ids.iter().collect();
        assert_eq!(uniq.len(), 1405, "no replacement");
    }

    #[test]
    fn validation_sampling_deterministic_and_seed_sensitive() {
        let c = synthetic(&[50, 50]);
        let a = sample_validation(&c, 0.1, 42).unwrap();
        let b = sample_validation(&c, 0.1, 42).unwrap();
        assert_eq!(a, b);
        let d = sample_validation(&c, 0.1, 43).unwrap();
        assert_ne!(a.member_ids, d.member_ids);
        assert_eq!(a.member_ids.len(), 10);
    }

    #[test]
    fn validation_fraction_one_is_whole_train() {
        let mut c = synthetic(&[8]);
        c.split_by_record(0.25).unwrap();
        let v = sample_validation(&c, 1.0, 0).unwrap();
        assert_eq!(v.member_ids.len(), c.train().len());
    }

    #[test]
    fn validation_minimum_one_and_range_checks() {
        let c = synthetic(&[30]);
        let v = sample_validation(&c, 0.001, 0).unwrap();
        assert_eq!(v.member_ids.len(), 1);
        assert!(sample_validation(&c, 0.0, 0).is_err());
        assert!(sample_validation(&c, 1.5, 0).is_err());
    }

    #[test]
    fn stratified_sampling_touches_every_class() {
        let c = synthetic(&[40, 40, 40]);
        let v = sample_validation_stratified(&c, 0.05, 3).unwrap();
        assert_eq!(v.member_ids.len(), 6); // max(1, round(2)) per class
        let classes: BTreeSet<&str> = v
            .member_ids
            .iter()
            .map(|id| id.split('/').next().unwrap())
            .collect();
        assert_eq!(classes.len(), 3);
    }
}
