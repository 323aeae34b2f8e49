use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use freecongest_cli::config::{presets, RawConfig, RunConfig};
use freecongest_cli::runner;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "freecongest", about = "Free-boundary congestion solver and diagnostics")]
struct Args {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset to run; overrides the `preset` key of the config file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// `key=value` override, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// List the presets and exit.
    #[arg(long)]
    list_presets: bool,
}

fn config_failure(message: String, field: Option<&str>, line: Option<usize>) -> ExitCode {
    let record = json!({ "status": "error", "kind": "config", "message": message, "field": field, "line": line });
    eprintln!("{record}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_presets {
        for p in presets() {
            println!("{p}");
        }
        return ExitCode::SUCCESS;
    }
    let file = match &args.config {
        None => None,
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match RawConfig::parse(&text) {
                Ok(raw) => Some(raw),
                Err(e) => return config_failure(e.to_string(), e.field(), e.line()),
            },
            Err(e) => return config_failure(format!("reading {}: {e}", path.display()), None, None),
        },
    };
    if file.is_none() && args.preset.is_none() {
        return config_failure("either --config or --preset is required".into(), Some("preset"), None);
    }
    let cfg = match RunConfig::resolve(file, args.preset.as_deref(), &args.overrides, args.out_dir) {
        Ok(c) => c,
        Err(e) => return config_failure(e.to_string(), e.field(), e.line()),
    };
    match runner::run(&cfg) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let record = runner::write_failure(&cfg.out_dir, "runtime", &format!("{e:#}"));
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
