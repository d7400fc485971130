//! Leave-one-out potency against the real toolchain: every row must equal a
//! direct re-evaluation with that single bit cleared.

use irforge_core::ablate::{leave_one_out, CategoryMap};
use irforge_core::compile::{
    enumerate_flags, CompileEngine, EngineOptions, FlagFilter, FlagVector, Toolchain,
};
use irforge_core::corpus::ProgramRecord;
use irforge_core::fitness::{FitnessEngine, FitnessOptions};
use irforge_core::irgraph::parse_ir;
use irforge_core::sha256_hex;
use irforge_core::vocab::build_vocab;
use irforge_testkit::{find_cc, fixtures_dir, shim_opt};

fn record(rel: &str) -> ProgramRecord {
    let path = fixtures_dir().join(rel);
    let body = std::fs::read(&path).expect("fixture readable");
    ProgramRecord {
        id: rel.to_string(),
        source_path: path,
        class_label: "fixture".into(),
        content_hash: sha256_hex(&body),
    }
}

#[test]
fn rows_match_direct_reevaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let tc = Toolchain::probe(&find_cc(), &shim_opt()).expect("probe");
    let catalog = enumerate_flags(&tc, &FlagFilter::default()).expect("catalog");
    let eng = CompileEngine::new(tc, catalog.clone(), tmp.path(), EngineOptions::default());

    let members_owned = [record("potency/stack_heavy.c"), record("poj20/gcd/gcd_a.c")];
    let members: Vec<&ProgramRecord> = members_owned.iter().collect();

    let modules: Vec<_> = members
        .iter()
        .map(|r| parse_ir(&eng.compile_baseline(r).ir.unwrap().text).unwrap())
        .collect();
    let vocab = build_vocab(&modules, "digest", "tc").unwrap();
    let fit = FitnessEngine::new(&eng, &vocab, FitnessOptions::default());

    let mut bits = vec![false; catalog.len()];
    for (i, f) in catalog.flags.iter().enumerate() {
        if ["-mem2reg", "-simplifycfg", "-instcombine", "-dce"].contains(&f.as_str()) {
            bits[i] = true;
        }
    }
    let genome = FlagVector::from_bits(bits);
    assert_eq!(genome.count_ones(), 4);

    let cats = CategoryMap::builtin();
    let report = leave_one_out(&fit, &catalog, &genome, &members, &cats);

    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.genome_hex, genome.to_hex());
    let full = fit.sequence_fitness(&genome, &members).aggregate_f;
    assert_eq!(report.fitness_full, full);

    for row in &report.rows {
        let mut variant = genome.clone();
        variant.set(row.bit, false);
        let without = fit.sequence_fitness(&variant, &members).aggregate_f;
        assert_eq!(row.fitness_without, without, "flag {}", row.flag);
        assert_eq!(row.delta, full - without, "flag {}", row.flag);
        assert_eq!(row.fitness_with, full);
    }

    // Sorted by delta descending, ties by bit index.
    for w in report.rows.windows(2) {
        assert!(
            w[0].delta > w[1].delta || (w[0].delta == w[1].delta && w[0].bit < w[1].bit),
            "rows out of order"
        );
    }

    // Curated categories surface in the rows.
    let by_flag: std::collections::BTreeMap<&str, &str> = report
        .rows
        .iter()
        .map(|r| (r.flag.as_str(), r.category.as_str()))
        .collect();
    assert_eq!(by_flag["-mem2reg"], "source-proximate");
    assert_eq!(by_flag["-simplifycfg"], "cfg-simplify");
    assert_eq!(by_flag["-dce"], "statement-simplify");
}
