//! Command-line experiment runner.
//!
//! Every subcommand sweeps `n` (and its parameter grids), writes one row per
//! sweep point and then audits the emitted rows. Exit status is 0 when all
//! audits pass, 1 when one fails and 2 on usage or runtime errors.

pub mod commands;
pub mod config;
pub mod table;

use std::ffi::OsString;

use clap::Parser;
use waiid_core::io::to_json_string;
use waiid_core::Caps;

use crate::commands::{execute, Res};
use crate::config::{validate, Cli, Format, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_AUDIT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Rendered output of one run.
pub struct Outcome {
    pub text: String,
    pub passed: bool,
}

/// Parses arguments and merges the config file, if any.
pub fn parse_config<I, T>(args: I) -> Res<(RunConfig, bool)>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let (command, mut flags) = cli.sub.split();
    if let Some(path) = flags.config.clone() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        flags = flags.merge_file(&text, command)?;
    }
    let print = flags.print_config;
    Ok((validate(command, flags)?, print))
}

pub fn config_json(cfg: &RunConfig) -> String {
    let mut s = to_json_string(&cfg.to_json());
    s.push('\n');
    s
}

/// Runs a validated configuration and renders it in the requested format.
pub fn render(cfg: &RunConfig, caps: &Caps) -> Res<Outcome> {
    let work = || execute(cfg, caps);
    let report = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build()?.install(work)?,
        None => work()?,
    };
    let text = match cfg.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(cfg.to_json()),
    };
    Ok(Outcome { text, passed: report.passed() })
}

fn run_inner(args: Vec<OsString>) -> Res<i32> {
    let (cfg, print) = parse_config(args)?;
    if print {
        print!("{}", config_json(&cfg));
        return Ok(EXIT_OK);
    }
    let caps = Caps::from_env()?;
    let out = render(&cfg, &caps)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &out.text)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => print!("{}", out.text),
    }
    Ok(if out.passed { EXIT_OK } else { EXIT_AUDIT })
}

/// Entry point of the `waiid` binary; returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match run_inner(args) {
        Ok(code) => code,
        Err(e) => match e.downcast::<clap::Error>() {
            Ok(clap_err) => {
                let _ = clap_err.print();
                if clap_err.use_stderr() { EXIT_USAGE } else { EXIT_OK }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
    }
}
