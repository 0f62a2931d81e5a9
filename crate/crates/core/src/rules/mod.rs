//! Flow-sensitive taint rules over MJIR.
//!
//! Each entry point is analyzed by a per-method worklist fixpoint. Calls to
//! methods declared in the app are inlined under the caller's context;
//! framework calls go through the summary catalog, the source and sink
//! configuration, and finally a conservative fallback. Recursion is cut at
//! the first repeated method on the call stack.

mod engine;
mod state;

use std::time::Duration;

use crate::aed::SinkRecord;
use crate::ir::Program;
use crate::sourcesink::Config;
use crate::summaries::Catalog;
use crate::taint::DEFAULT_PATH_CAP;

pub use state::{Cell, Obj, SiteId, State};

/// Analysis time budget used when none is given.
pub const DEFAULT_BUDGET: Duration = Duration::from_secs(180);

#[derive(Clone, Debug)]
pub struct AnalysisOptions {
    pub path_cap: usize,
    /// `None` runs to completion.
    pub budget: Option<Duration>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            path_cap: DEFAULT_PATH_CAP,
            budget: Some(DEFAULT_BUDGET),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AnalysisOutcome {
    /// One record per sink call site and calling context, sorted by location.
    pub records: Vec<SinkRecord>,
    pub timed_out: bool,
    pub elapsed: Duration,
    /// Statements processed, a deterministic work measure.
    pub steps: u64,
    /// State after the last entry point returned.
    pub final_state: Option<State>,
}

/// Runs every entry point of `program` in declaration order over a shared
/// heap and static state.
pub fn analyze_app(program: &Program, config: &Config, catalog: &Catalog, opts: &AnalysisOptions) -> AnalysisOutcome {
    // inlining recurses once per call level; give it room
    std::thread::scope(|s| {
        std::thread::Builder::new()
            .stack_size(512 << 20)
            .spawn_scoped(s, || engine::run(program, config, catalog, opts))
            .expect("spawn analysis thread")
            .join()
            .expect("analysis thread panicked")
    })
}
