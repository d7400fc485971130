//! Flag-potency analysis: contribution of each enabled flag measured by
//! clearing exactly that bit and re-running sequence fitness. Deltas are in
//! fitness units (a retrain-per-flag MAP delta is out of desk scope; the
//! report header says so). Categories follow a curated, editable map.

use crate::compile::{FlagCatalog, FlagVector};
use crate::corpus::ProgramRecord;
use crate::fitness::{CompileBackend, FitnessEngine};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagCategory {
    StatementSimplify,
    SourceProximate,
    CfgSimplify,
    Other,
}

impl std::fmt::Display for FlagCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FlagCategory::StatementSimplify => "statement-simplify",
            FlagCategory::SourceProximate => "source-proximate",
            FlagCategory::CfgSimplify => "cfg-simplify",
            FlagCategory::Other => "other",
        })
    }
}

/// Curated flag → category map, shipped as data so it stays editable.
#[derive(Clone, Debug, Default)]
pub struct CategoryMap {
    map: BTreeMap<String, FlagCategory>,
}

impl CategoryMap {
    /// One `flag<TAB>category` pair per line; `#` comments and blanks
    /// ignored. Unknown category words are an error.
    pub fn from_text(text: &str) -> Result<CategoryMap, String> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((flag, cat)) = line.split_once('\t') else {
                return Err(format!("line {}: expected flag<TAB>category", i + 1));
            };
            let cat = match cat.trim() {
                "statement-simplify" => FlagCategory::StatementSimplify,
                "source-proximate" => FlagCategory::SourceProximate,
                "cfg-simplify" => FlagCategory::CfgSimplify,
                "other" => FlagCategory::Other,
                bad => return Err(format!("line {}: unknown category {bad:?}", i + 1)),
            };
            map.insert(flag.trim().to_string(), cat);
        }
        Ok(CategoryMap { map })
    }

    /// Built-in curation for the common pass names; everything else maps to
    /// `other`.
    pub fn builtin() -> CategoryMap {
        let pairs: &[(&str, FlagCategory)] = &[
            ("-instcombine", FlagCategory::StatementSimplify),
            ("-instsimplify", FlagCategory::StatementSimplify),
            ("-gvn", FlagCategory::StatementSimplify),
            ("-early-cse", FlagCategory::StatementSimplify),
            ("-reassociate", FlagCategory::StatementSimplify),
            ("-constprop", FlagCategory::StatementSimplify),
            ("-sccp", FlagCategory::StatementSimplify),
            ("-dce", FlagCategory::StatementSimplify),
            ("-adce", FlagCategory::StatementSimplify),
            ("-bdce", FlagCategory::StatementSimplify),
            ("-dse", FlagCategory::StatementSimplify),
            ("-mem2reg", FlagCategory::SourceProximate),
            ("-sroa", FlagCategory::SourceProximate),
            ("-memcpyopt", FlagCategory::SourceProximate),
            ("-lcssa", FlagCategory::SourceProximate),
            ("-indvars", FlagCategory::SourceProximate),
            ("-simplifycfg", FlagCategory::CfgSimplify),
            ("-loop-simplify", FlagCategory::CfgSimplify),
            ("-loop-rotate", FlagCategory::CfgSimplify),
            ("-loop-deletion", FlagCategory::CfgSimplify),
            ("-loop-unroll", FlagCategory::CfgSimplify),
            ("-jump-threading", FlagCategory::CfgSimplify),
            ("-sink", FlagCategory::CfgSimplify),
            ("-flattencfg", FlagCategory::CfgSimplify),
        ];
        CategoryMap {
            map: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn category(&self, flag: &str) -> FlagCategory {
        self.map.get(flag).copied().unwrap_or(FlagCategory::Other)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# flag\tcategory\n");
        for (k, v) in &self.map {
            out.push_str(&format!("{k}\t{v}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotencyRow {
    pub flag: String,
    pub bit: usize,
    pub category: String,
    pub fitness_with: f64,
    pub fitness_without: f64,
    /// fitness_with − fitness_without: positive means the flag helps.
    pub delta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotencyReport {
    pub genome_hex: String,
    pub fitness_full: f64,
    /// Rows descending by delta (ties: ascending bit index).
    pub rows: Vec<PotencyRow>,
}

impl PotencyReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# leave-one-out flag potency; deltas in fitness units\n");
        out.push_str("# (MAP-delta ablation requires retraining per flag; not measured here)\n");
        out.push_str(&format!("# genome {}\n", self.genome_hex));
        out.push_str(&format!("# fitness_full {:.9}\n", self.fitness_full));
        out.push_str("flag\tbit\tcategory\tfitness_with\tfitness_without\tdelta\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.9}\t{:.9}\t{:+.9}\n",
                r.flag, r.bit, r.category, r.fitness_with, r.fitness_without, r.delta
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} enabled flags, full-genome fitness {:.6}\n",
            self.rows.len(),
            self.fitness_full
        );
        for r in self.rows.iter().take(5) {
            out.push_str(&format!(
                "  {} ({}): removal moves fitness by {:+.6}\n",
                r.flag, r.category, -r.delta
            ));
        }
        out
    }
}

/// Evaluate the full genome plus each single-flag-removed variant over the
/// validation members. Variants run through the same fitness engine, so
/// compile results are cache-amortized across rows.
pub fn leave_one_out<B: CompileBackend>(
    engine: &FitnessEngine<'_, B>,
    catalog: &FlagCatalog,
    genome: &FlagVector,
    members: &[&ProgramRecord],
    categories: &CategoryMap,
) -> PotencyReport {
    assert!(genome.count_ones() > 0, "genome must enable at least one flag");
    assert_eq!(genome.len(), catalog.flags.len(), "genome/catalog width");
    let fitness_full = engine.sequence_fitness(genome, members).aggregate_f;
    let bits: Vec<usize> = (0..genome.len()).filter(|&i| genome.get(i)).collect();
    let mut rows: Vec<PotencyRow> = bits
        .par_iter()
        .map(|&bit| {
            let mut variant = genome.clone();
            variant.set(bit, false);
            let without = engine.sequence_fitness(&variant, members).aggregate_f;
            let flag = catalog.flags[bit].clone();
            PotencyRow {
                category: categories.category(&flag).to_string(),
                flag,
                bit,
                fitness_with: fitness_full,
                fitness_without: without,
                delta: fitness_full - without,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.delta.total_cmp(&a.delta).then(a.bit.cmp(&b.bit)));
    PotencyReport {
        genome_hex: genome.to_hex(),
        fitness_full,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_map_round_trip_and_defaults() {
        let m = CategoryMap::builtin();
        assert_eq!(m.category("-mem2reg"), FlagCategory::SourceProximate);
        assert_eq!(m.category("-simplifycfg"), FlagCategory::CfgSimplify);
        assert_eq!(m.category("-instcombine"), FlagCategory::StatementSimplify);
        assert_eq!(m.category("-no-such-flag"), FlagCategory::Other);
        let text = m.to_text();
        let back = CategoryMap::from_text(&text).unwrap();
        assert_eq!(back.category("-mem2reg"), FlagCategory::SourceProximate);
    }

    #[test]
    fn category_map_rejects_garbage() {
        assert!(CategoryMap::from_text("-x\tnot-a-category").is_err());
        assert!(CategoryMap::from_text("just-one-column").is_err());
        let ok = CategoryMap::from_text("# comment\n\n-x\tother\n").unwrap();
        assert_eq!(ok.category("-x"), FlagCategory::Other);
    }
}
