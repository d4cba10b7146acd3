mod config;
mod estimate;
mod fit;
mod input;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Arg, Command};
use plugeff::{Error, ErrorKind, Result};

use config::{valid_keys, ConfigFile, Settings};

fn command() -> Command {
    Command::new("plugeff")
        .about("Efficient plug-in estimation: fit regression functions, estimate summaries, reproduce simulation studies")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("Sectioned key = value file; every key is a long flag name, flags override it"),
        )
        .arg(Arg::new("out").long("out").global(true).value_name("DIR").default_value("out").help("Directory for all outputs"))
        .arg(
            Arg::new("seed")
                .long("seed")
                .global(true)
                .value_name("SEED")
                .default_value("20240101")
                .help("Seed for simulated data, folds and boosting (base seed for reproduce)"),
        )
        .arg(
            Arg::new("exec")
                .long("exec")
                .global(true)
                .value_parser(PossibleValuesParser::new(["parallel", "sequential"]))
                .default_value("parallel")
                .help("Run cross-validation folds and Monte Carlo replicates in parallel or sequentially"),
        )
        .subcommand(fit::command())
        .subcommand(estimate::command())
        .subcommand(reproduce::command())
}

fn run() -> Result<()> {
    let cmd = command();
    let valid = valid_keys(&cmd);
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let file = match sub.get_one::<String>("config") {
        Some(p) => ConfigFile::read(&PathBuf::from(p), &valid)?,
        None => ConfigFile::default(),
    };
    let settings = Settings::new(sub, &file, name);
    let out = PathBuf::from(settings.require("out")?);
    match name {
        "fit" => fit::run(&settings, &out),
        "estimate" => estimate::run(&settings, &out),
        "reproduce" => reproduce::run(&settings, &out),
        _ => unreachable!("unknown subcommand"),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data | ErrorKind::Io => 3,
        ErrorKind::Numerical | ErrorKind::Resource => 4,
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
