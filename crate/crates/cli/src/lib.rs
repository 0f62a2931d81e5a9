//! Commands behind the `aedkit` binary, callable without a process.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use aedkit_core::aed::{build_records, merge_aed, AedDatabase};
use aedkit_core::interp::{interpret, InterpError, InterpOptions, LogEntry, Valuation};
use aedkit_core::ir::parse_program;
use aedkit_core::matcher::{ingest_listing, match_image, MatchMode, MatchOptions, RootMap};
use aedkit_core::rules::{analyze_app, AnalysisOptions};
use aedkit_core::sourcesink::Config;
use aedkit_core::summaries::{Catalog, DEFAULT_CATALOG, DEFAULT_CATALOG_VERSION};
use aedkit_core::taint::{render_evset, DEFAULT_PATH_CAP};

/// Exit codes. Stable across releases.
pub mod exit {
    pub const OK: i32 = 0;
    /// Unreadable input, bad config or catalog, unwritable output.
    pub const IO: i32 = 1;
    /// Bad flags or arguments.
    pub const USAGE: i32 = 2;
    /// The program file does not parse.
    pub const PARSE: i32 = 3;
    /// The budget ran out; partial results were still written.
    pub const TIMEOUT: i32 = 4;
    /// The interpreter hit its step limit or an unresolvable reflective call.
    pub const INTERP: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> CliError {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl fmt::Display) -> CliError {
        CliError::new(exit::IO, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Configuration shared by the analysis commands.
#[derive(Clone, Debug)]
pub struct Settings {
    pub config: Config,
    pub catalog: Catalog,
    pub budget: Option<Duration>,
}

impl Settings {
    /// Built-in config and catalog, each extended by the given files.
    pub fn load(config_files: &[PathBuf], catalog_files: &[PathBuf], catalog_version: Option<&str>, budget: Option<Duration>) -> Result<Settings> {
        let config_texts = config_files.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&str> = config_texts.iter().map(String::as_str).collect();
        let config = Config::with_defaults(&refs).map_err(|e| CliError::new(exit::IO, format!("config: {e}")))?;
        let catalog_texts = catalog_files.iter().map(|p| read(p)).collect::<Result<Vec<_>>>()?;
        let mut layers = vec![DEFAULT_CATALOG];
        layers.extend(catalog_texts.iter().map(String::as_str));
        let version = catalog_version.unwrap_or(DEFAULT_CATALOG_VERSION);
        let catalog =
            Catalog::load_layered(&layers, version).map_err(|e| CliError::new(exit::IO, format!("catalog: {e}")))?;
        Ok(Settings {
            config,
            catalog,
            budget,
        })
    }
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            config: Config::builtin(),
            catalog: Catalog::builtin(),
            budget: Some(aedkit_core::rules::DEFAULT_BUDGET),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppStatus {
    Ok,
    Timeout,
    ParseError(String),
}

impl fmt::Display for AppStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppStatus::Ok => f.write_str("ok"),
            AppStatus::Timeout => f.write_str("timeout"),
            AppStatus::ParseError(_) => f.write_str("parse-error"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AppReport {
    /// Input file name.
    pub app: String,
    pub package: Option<String>,
    pub status: AppStatus,
    pub wall: Duration,
    pub sink_records: usize,
    pub aed_rows: usize,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub config_hash: String,
    pub catalog_version: String,
    pub apps: Vec<AppReport>,
}

impl RunReport {
    pub fn count(&self, status: &str) -> usize {
        self.apps.iter().filter(|a| a.status.to_string() == status).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# catalog {}; config-hash {}\napp\tpackage\tstatus\twall_ms\tsink_records\taed_rows\tnote\n",
            self.catalog_version, self.config_hash
        );
        for a in &self.apps {
            let note = match &a.status {
                AppStatus::ParseError(m) => m.replace(['\t', '\n'], " "),
                _ => "-".into(),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                a.app,
                a.package.as_deref().unwrap_or("-"),
                a.status,
                a.wall.as_millis(),
                a.sink_records,
                a.aed_rows,
                note
            );
        }
        let _ = writeln!(
            out,
            "# {} apps: {} ok, {} timeout, {} parse-error",
            self.apps.len(),
            self.count("ok"),
            self.count("timeout"),
            self.count("parse-error")
        );
        out
    }
}

fn analyze_text(name: &str, text: &str, settings: &Settings) -> (AedDatabase, AppReport) {
    let start = Instant::now();
    let mut db = AedDatabase::new(settings.catalog.version(), &settings.config.hash());
    let mut report = AppReport {
        app: name.to_string(),
        package: None,
        status: AppStatus::Ok,
        wall: Duration::ZERO,
        sink_records: 0,
        aed_rows: 0,
    };
    match parse_program(text) {
        Err(e) => report.status = AppStatus::ParseError(e.to_string()),
        Ok(program) => {
            let opts = AnalysisOptions {
                path_cap: DEFAULT_PATH_CAP,
                budget: settings.budget,
            };
            let outcome = analyze_app(&program, &settings.config, &settings.catalog, &opts);
            db.extend(build_records(&outcome.records, &program.package_name));
            report.package = Some(program.package_name.clone());
            report.sink_records = outcome.records.len();
            report.aed_rows = db.len();
            if outcome.timed_out {
                report.status = AppStatus::Timeout;
            }
        }
    }
    report.wall = start.elapsed();
    (db, report)
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Analyzes one program file. A parse error is an error; a timeout is not,
/// and the report says so.
pub fn cmd_analyze(path: &Path, settings: &Settings) -> Result<(AedDatabase, RunReport)> {
    let text = read(path)?;
    let (db, app) = analyze_text(&file_name(path), &text, settings);
    if let AppStatus::ParseError(m) = &app.status {
        return Err(CliError::new(exit::PARSE, format!("{}: {m}", path.display())));
    }
    let report = RunReport {
        config_hash: settings.config.hash(),
        catalog_version: settings.catalog.version().to_string(),
        apps: vec![app],
    };
    Ok((db, report))
}

/// Program files of a corpus directory: `*.mjir`, sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "mjir") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Analyzes every program in `dir` on `jobs` threads and merges the results
/// in file-name order.
pub fn cmd_build_aed(dir: &Path, jobs: usize, settings: &Settings) -> Result<(AedDatabase, RunReport)> {
    let files = corpus_files(dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::new(exit::IO, format!("thread pool: {e}")))?;
    let results: Vec<(AedDatabase, AppReport)> = pool.install(|| {
        files
            .par_iter()
            .map(|p| match fs::read_to_string(p) {
                Ok(text) => analyze_text(&file_name(p), &text, settings),
                Err(e) => {
                    let (db, mut r) = analyze_text(&file_name(p), "", settings);
                    r.status = AppStatus::ParseError(format!("unreadable: {e}"));
                    (db, r)
                }
            })
            .collect()
    });
    let mut dbs = vec![AedDatabase::new(settings.catalog.version(), &settings.config.hash())];
    let mut apps = Vec::new();
    for (db, report) in results {
        dbs.push(db);
        apps.push(report);
    }
    let merged = merge_aed(&dbs).map_err(|e| CliError::new(exit::IO, e.to_string()))?;
    let report = RunReport {
        config_hash: settings.config.hash(),
        catalog_version: settings.catalog.version().to_string(),
        apps,
    };
    Ok((merged, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Tsv,
    Long,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Option<OutputFormat> {
        match s {
            "tsv" => Some(OutputFormat::Tsv),
            "long" => Some(OutputFormat::Long),
            _ => None,
        }
    }
}

/// Matches a listing file or image directory against an AED file. One line
/// per matched device path: path, packages, evidence union, mode.
pub fn cmd_match(aed: &Path, listing: &Path, mode: MatchMode, maps: &[String], installed_only: bool, format: OutputFormat) -> Result<String> {
    let db = AedDatabase::parse(&read(aed)?).map_err(|e| CliError::io(aed, e))?;
    let paths = ingest_listing(listing).map_err(|e| CliError::new(exit::IO, e.to_string()))?;
    let maps = maps
        .iter()
        .map(|m| RootMap::parse(m))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::new(exit::USAGE, e.to_string()))?;
    let opts = MatchOptions {
        maps,
        installed_only,
        ..MatchOptions::default()
    };
    let results = match_image(&paths, &db, mode, &opts).map_err(|e| CliError::new(exit::IO, e.to_string()))?;
    let mut out = String::new();
    for r in &results {
        let packages: Vec<&str> = r.packages().into_iter().collect();
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.device_path, packages.join(","), render_evset(&r.evidence), mode);
        if format == OutputFormat::Long {
            for (rec, m) in &r.matched {
                let _ = writeln!(out, "\t{}\t{}\t{}\t{}", rec.package, rec.path_pattern, render_evset(&rec.evidence), m);
            }
        }
    }
    Ok(out)
}

/// Runs the concrete interpreter and renders its write log, one line per
/// sink call: abstract path, concrete path, labels, sink.
pub fn cmd_interpret(path: &Path, settings: &Settings, valuation: &Valuation) -> Result<Vec<LogEntry>> {
    let program =
        parse_program(&read(path)?).map_err(|e| CliError::new(exit::PARSE, format!("{}: {e}", path.display())))?;
    interpret(&program, &settings.config, valuation, &InterpOptions::default()).map_err(|e: InterpError| {
        CliError::new(exit::INTERP, format!("{}: {e}", path.display()))
    })
}

pub fn render_log(log: &[LogEntry]) -> String {
    log.iter().map(|e| format!("{e}\n")).collect()
}

pub fn cmd_dump_config(settings: &Settings) -> String {
    format!(
        "# config-hash {}\n# catalog {} ({} summaries)\n{}",
        settings.config.hash(),
        settings.catalog.version(),
        settings.catalog.len(),
        settings.config.dump()
    )
}
