mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{PipelineConfig, BOOL_KEYS, KEYS};
use pipeline::{Pipeline, PipelineError, Stage};

const SUBCOMMANDS: &[(Stage, &str)] = &[
    (Stage::Synth, "Render a synthetic scene with ground truth into --output"),
    (Stage::Acmh, "Single-scale photometric estimation of every image"),
    (Stage::Acmm, "Multi-scale estimation with geometric consistency"),
    (Stage::Fuse, "Fuse <output>/maps into <output>/fused.ply"),
    (Stage::Eval, "Compare depth maps with the ground truth of --input"),
    (Stage::All, "Synthesize (without --input), estimate, fuse and evaluate"),
];

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn cli() -> Command {
    let mut cmd = Command::new("acmm")
        .about("Multi-scale PatchMatch multi-view stereo")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .global(true)
                .help("Configuration file of `key = value` lines; flags take precedence"),
        );
    for (key, help) in KEYS {
        let mut arg = Arg::new(*key).long(flag(key)).help(*help).global(true);
        arg = if BOOL_KEYS.contains(key) {
            arg.value_name("BOOL")
                .num_args(0..=1)
                .default_missing_value("true")
                .action(ArgAction::Set)
        } else {
            arg.value_name("VALUE")
        };
        cmd = cmd.arg(arg);
    }
    for (stage, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(Command::new(stage.name()).about(*about));
    }
    cmd
}

fn build_config(m: &ArgMatches) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        cfg.apply_file(path)?;
    }
    for (key, _) in KEYS {
        if m.value_source(key) == Some(ValueSource::CommandLine) {
            if let Some(v) = m.get_one::<String>(key) {
                cfg.set(key, v)?;
            }
        }
    }
    Ok(cfg)
}

fn run(m: &ArgMatches) -> Result<(), PipelineError> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let stage = SUBCOMMANDS
        .iter()
        .map(|(s, _)| *s)
        .find(|s| s.name() == name)
        .expect("known subcommand");
    let cfg = build_config(sub)?;
    Pipeline::new(cfg).run(stage)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
