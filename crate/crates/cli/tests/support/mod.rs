//! Shared helpers for the CLI integration tests.
#![allow(dead_code)]

pub mod gen;

use std::collections::BTreeMap;
use std::path::PathBuf;

use aedkit_core::aed::build_records;
use aedkit_core::interp::{interpret, InterpError, InterpOptions, Valuation};
use aedkit_core::ir::Program;
use aedkit_core::rules::{analyze_app, AnalysisOptions};
use aedkit_core::sourcesink::Config;
use aedkit_core::summaries::Catalog;
use aedkit_core::taint::EvSet;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixtures().join(rel)
}

/// Path pattern to evidence, as the AED would list it.
pub type Rows = BTreeMap<String, EvSet>;

pub fn static_rows(program: &Program, config: &Config) -> Rows {
    let opts = AnalysisOptions {
        budget: None,
        ..AnalysisOptions::default()
    };
    let out = analyze_app(program, config, &Catalog::builtin(), &opts);
    build_records(&out.records, &program.package_name)
        .into_iter()
        .map(|r| (r.path_pattern, r.evidence))
        .collect()
}

/// Every 0/1 assignment of `conds`.
pub fn valuations(conds: &[String]) -> Vec<Valuation> {
    (0..1u32 << conds.len())
        .map(|bits| {
            let mut v = Valuation::default();
            for (i, c) in conds.iter().enumerate() {
                v.ints.insert(c.clone(), ((bits >> i) & 1) as i64);
            }
            v
        })
        .collect()
}

/// Union of the interpreter's writes over `vals`, keyed by abstract path.
/// Writes of unlabelled data are dropped unless the config records them.
pub fn oracle_rows(program: &Program, config: &Config, vals: &[Valuation]) -> Result<Rows, InterpError> {
    let mut rows = Rows::new();
    for v in vals {
        for e in interpret(program, config, v, &InterpOptions::default())? {
            if e.labels.is_empty() && !config.record_empty {
                continue;
            }
            rows.entry(e.abstract_path).or_default().extend(e.labels);
        }
    }
    Ok(rows)
}

/// Observed rows not covered by the static rows. A `<unknown>` static row
/// stands for every path.
pub fn uncovered(observed: &Rows, analysed: &Rows) -> Vec<String> {
    let top = analysed.get("<unknown>");
    observed
        .iter()
        .filter(|(path, ev)| {
            let covered = |s: Option<&EvSet>| s.is_some_and(|s| ev.is_subset(s));
            !covered(analysed.get(*path)) && !covered(top)
        })
        .map(|(path, ev)| format!("{path} {ev:?}"))
        .collect()
}
