use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use aedkit::{exit, CliError, OutputFormat, Settings};
use aedkit_core::interp::Valuation;
use aedkit_core::matcher::MatchMode;

/// Builds App Evidence Databases from MJIR programs and matches them
/// against device file listings.
///
/// Exit codes: 0 ok, 1 input/config/output error, 2 usage error,
/// 3 program parse error, 4 analysis timed out (partial output written),
/// 5 interpreter failure.
#[derive(Parser)]
#[command(name = "aedkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Extra source/sink configuration layered over the built-in one.
    #[arg(long = "config", value_name = "FILE")]
    config: Vec<PathBuf>,
    /// Extra API summaries layered over the built-in catalog.
    #[arg(long = "catalog", value_name = "FILE")]
    catalog: Vec<PathBuf>,
    #[arg(long = "catalog-version", value_name = "V")]
    catalog_version: Option<String>,
    /// Per-app analysis budget in seconds.
    #[arg(long, value_name = "SECS", default_value_t = 180.0)]
    budget: f64,
}

impl ConfigArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        if !(self.budget.is_finite() && self.budget >= 0.0) {
            return Err(CliError::new(exit::USAGE, "--budget must be a non-negative number"));
        }
        Settings::load(
            &self.config,
            &self.catalog,
            self.catalog_version.as_deref(),
            Some(Duration::from_secs_f64(self.budget)),
        )
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Pattern,
    Partial,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Long,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze one program and print its AED.
    Analyze {
        program: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the AED here instead of stdout.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Write the run report here instead of stderr.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Analyze every `*.mjir` file in a directory and print the merged AED.
    BuildAed {
        dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Match a listing file or extracted image directory against an AED.
    Match {
        aed: PathBuf,
        listing: PathBuf,
        #[arg(long, value_enum, default_value = "pattern")]
        mode: Mode,
        /// FROM=TO: device paths under TO are compared as if under FROM.
        #[arg(long = "map", value_name = "FROM=TO")]
        maps: Vec<String>,
        /// Skip packages whose data directory is absent from the listing.
        #[arg(long)]
        installed_only: bool,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
    },
    /// Execute a program concretely and print its sink log.
    Interpret {
        program: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// NAME=VALUE for an integer variable read before assignment.
        #[arg(long = "int", value_name = "NAME=VALUE")]
        ints: Vec<String>,
        /// KEY=VALUE intent extra for intents the program did not build.
        #[arg(long = "extra", value_name = "KEY=VALUE")]
        extras: Vec<String>,
        #[arg(long)]
        intent_text: Option<String>,
        #[arg(long)]
        timestamp: Option<i64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the effective source/sink configuration.
    DumpConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn write_or_print(path: Option<&PathBuf>, text: &str, to_stderr: bool) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::new(exit::IO, format!("{}: {e}", p.display()))),
        None if to_stderr => {
            eprint!("{text}");
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pair(s: &str, flag: &str) -> Result<(String, String), CliError> {
    s.split_once('=')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| CliError::new(exit::USAGE, format!("{flag} expects KEY=VALUE, got {s:?}")))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze {
            program,
            cfg,
            out,
            report,
        } => {
            let (db, rep) = aedkit::cmd_analyze(&program, &cfg.settings()?)?;
            write_or_print(out.as_ref(), &db.to_text(), false)?;
            write_or_print(report.as_ref(), &rep.to_text(), true)?;
            Ok(if rep.count("timeout") > 0 { exit::TIMEOUT } else { exit::OK })
        }
        Command::BuildAed {
            dir,
            cfg,
            jobs,
            out,
            report,
        } => {
            let (db, rep) = aedkit::cmd_build_aed(&dir, jobs, &cfg.settings()?)?;
            write_or_print(out.as_ref(), &db.to_text(), false)?;
            write_or_print(report.as_ref(), &rep.to_text(), true)?;
            Ok(exit::OK)
        }
        Command::Match {
            aed,
            listing,
            mode,
            maps,
            installed_only,
            format,
        } => {
            let mode = match mode {
                Mode::Exact => MatchMode::Exact,
                Mode::Pattern => MatchMode::Pattern,
                Mode::Partial => MatchMode::Partial,
            };
            let format = match format {
                Format::Tsv => OutputFormat::Tsv,
                Format::Long => OutputFormat::Long,
            };
            print!("{}", aedkit::cmd_match(&aed, &listing, mode, &maps, installed_only, format)?);
            Ok(exit::OK)
        }
        Command::Interpret {
            program,
            cfg,
            ints,
            extras,
            intent_text,
            timestamp,
            seed,
        } => {
            let mut val = Valuation {
                seed,
                ..Valuation::default()
            };
            for s in &ints {
                let (k, v) = pair(s, "--int")?;
                let n = v
                    .parse()
                    .map_err(|_| CliError::new(exit::USAGE, format!("--int {k}: {v:?} is not an integer")))?;
                val.ints.insert(k, n);
            }
            for s in &extras {
                let (k, v) = pair(s, "--extra")?;
                val.extras.insert(k, v);
            }
            if let Some(t) = intent_text {
                val.intent_text = t;
            }
            if let Some(t) = timestamp {
                val.timestamp = t;
            }
            let log = aedkit::cmd_interpret(&program, &cfg.settings()?, &val)?;
            print!("{}", aedkit::render_log(&log));
            Ok(exit::OK)
        }
        Command::DumpConfig { cfg } => {
            print!("{}", aedkit::cmd_dump_config(&cfg.settings()?));
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("aedkit: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
