//! The `swinct` command line: dataset preparation, training, evaluation,
//! model accounting and attention benchmarks.
//!
//! Every command is also callable in-process through [`run`].

pub mod args;
mod bench;
pub mod config;
mod count;
mod eval;
mod exit;
pub mod plot;
mod prepare;
mod train;

use std::path::PathBuf;

pub use args::{Cli, Command};
pub use config::RunConfig;
pub use exit::{exit_code, UsageError, EXIT_DATA, EXIT_INTERNAL, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

/// What a command produced: a JSON document for `--json` and a short
/// human-readable summary otherwise.
#[derive(Debug, Clone)]
pub struct Output {
    pub json: serde_json::Value,
    pub text: String,
}

/// Settings shared by all commands after merging flags over the config file.
#[derive(Debug, Clone)]
pub(crate) struct Globals {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub config: RunConfig,
}

impl Globals {
    pub(crate) fn require_out(&self, what: &str) -> anyhow::Result<PathBuf> {
        self.out.clone().ok_or_else(|| UsageError::new(format!("{what} needs --out <dir>")).into())
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<Output> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let globals = Globals {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        out: cli.out.clone().or_else(|| config.out.clone()),
        config,
    };
    match &cli.command {
        Command::Prepare(a) => prepare::run(a, &globals),
        Command::Train(a) => train::run(a, &globals),
        Command::Eval(a) => eval::run(a, &globals),
        Command::Count(a) => count::run(a, &globals),
        Command::Bench(a) => bench::run(a, &globals),
    }
}

/// Joins the error chain with `: `, skipping causes whose text the previous
/// message already ends with.
pub fn render_error(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}
