//! Command-line front end for basinscope.

mod args;
mod commands;

use std::ffi::OsString;
use std::io::Write;

use basinscope::{Error, Table};
use clap::Parser;
use serde_json::{json, Value};

use crate::args::{Common, Format};

pub use commands::Command;

#[derive(Debug, Parser)]
#[command(
    name = "basinscope",
    version,
    about = "Resilience indicators for continuous dynamical systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Everything a command hands back: the result table, lines for standard
/// error, and an optional second table written next to the first.
pub(crate) struct Report {
    pub table: Table,
    pub summary: Vec<String>,
    pub extra: Option<(std::path::PathBuf, Table)>,
    pub exit: i32,
}

impl Report {
    pub fn new(table: Table) -> Self {
        Report {
            table,
            summary: Vec::new(),
            extra: None,
            exit: 0,
        }
    }

    pub fn line(mut self, s: impl Into<String>) -> Self {
        self.summary.push(s.into());
        self
    }
}

fn exit_code(e: &Error) -> i32 {
    if e.is_inconclusive() {
        3
    } else if e.is_numerical() {
        2
    } else {
        1
    }
}

fn configure_threads() {
    let Ok(v) = std::env::var("BASINSCOPE_THREADS") else {
        return;
    };
    match v.trim().parse::<usize>() {
        Ok(0) => basinscope::parallel::set_sequential(true),
        Ok(n) => {
            // Fails only if a pool already exists, in which case it stays.
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
        Err(_) => eprintln!("warning: ignoring BASINSCOPE_THREADS={v}"),
    }
}

fn render(table: &Table, common: &Common, command: &str, model: &str) -> String {
    match common.format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            let overrides: serde_json::Map<String, Value> = common
                .params
                .iter()
                .filter_map(|p| p.split_once('='))
                .map(|(k, v)| {
                    (
                        k.trim().to_string(),
                        v.trim().parse::<f64>().map_or(Value::Null, Value::from),
                    )
                })
                .collect();
            let meta = json!({
                "tool": "basinscope",
                "version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "model": model,
                "overrides": overrides,
                "seed": common.seed,
            });
            let mut s = table.to_json(meta);
            if !s.ends_with('\n') {
                s.push('\n');
            }
            s
        }
    }
}

fn write_to(path: Option<&std::path::Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::InvalidArgument(format!("cannot write output: {e}")))
        }
    }
}

fn execute(cli: Cli) -> Result<i32, Error> {
    let command = cli.command.name();
    let common = cli.command.common().clone();
    let model = args::load_model(&common.source)?;
    if model.exceeds_soft_limit() {
        eprintln!(
            "warning: model has {} state variables; analyses may be slow",
            model.dim()
        );
    }
    let report = cli.command.run(&model)?;
    write_to(
        common.out.as_deref(),
        &render(&report.table, &common, command, model.name()),
    )?;
    if let Some((path, table)) = &report.extra {
        write_to(Some(path), &render(table, &common, command, model.name()))?;
    }
    for line in &report.summary {
        eprintln!("{line}");
    }
    Ok(report.exit)
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
