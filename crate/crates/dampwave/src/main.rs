//! `dampwave <subcommand> --config <path>`: runs one scenario and writes its reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dampwave::output::OutputDir;
use dampwave::{execute, resolve_output, Config, Subcommand, OUTPUT_ENV};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Rays,
    Gcc,
    Escape,
    Wave,
    Led,
    All,
}

impl From<Cmd> for Subcommand {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Rays => Subcommand::Rays,
            Cmd::Gcc => Subcommand::Gcc,
            Cmd::Escape => Subcommand::Escape,
            Cmd::Wave => Subcommand::Wave,
            Cmd::Led => Subcommand::Led,
            Cmd::All => Subcommand::All,
        }
    }
}

#[derive(Parser, Debug)]
#[command(version, about = "Damped wave laboratory: rays, GCC audits, escape checks, wave runs")]
struct Args {
    #[arg(value_enum)]
    subcommand: Cmd,
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's output_dir.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let sub = Subcommand::from(args.subcommand);
    let env = std::env::var_os(OUTPUT_ENV).map(PathBuf::from);
    let loaded = Config::load(&args.config);
    let out = resolve_output(args.output.as_deref(), loaded.as_ref().ok().map(|l| &l.0), env);
    let result = loaded
        .and_then(|(cfg, bytes)| execute(sub, &cfg, &bytes, &args.config.display().to_string(), &out, args.threads));
    match result {
        Ok(m) => {
            eprintln!("{} finished in {:.1} s; reports in {}", m.subcommand, m.wall_time_s, out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = e.report(sub.as_str());
            // Config errors happen before any report is written.
            if e.exit_code() == 2 {
                write_error(&out, &report);
            }
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_error(out: &Path, report: &dampwave::error::ErrorReport<'_>) {
    if let Ok(mut dir) = OutputDir::create(out) {
        let _ = dir.write_json("error.json", report);
    }
}
