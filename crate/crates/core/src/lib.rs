//! Static analysis of MJIR programs for file-system evidence.

pub mod aed;
pub mod interp;
pub mod ir;
pub mod matcher;
pub mod rules;
pub mod sourcesink;
pub mod summaries;
pub mod taint;
