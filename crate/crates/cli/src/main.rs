use std::io::Write;

use clap::Parser;
use swinct_cli::{exit_code, render_error, run, Cli, EXIT_OK};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(output) => {
            let body = if cli.json {
                serde_json::to_string_pretty(&output.json).expect("output serializes")
            } else {
                output.text
            };
            // A closed pipe (such as `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout().lock(), "{body}");
            std::process::exit(EXIT_OK);
        }
        Err(err) => {
            eprintln!("error: {}", render_error(&err));
            std::process::exit(exit_code(&err));
        }
    }
}
