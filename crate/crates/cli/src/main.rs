//! `bionica` command-line front end.
//!
//! Every command reads a flat `key=value` config (file plus `--key value`
//! overrides), validates it up front, and writes CSV/PGM artifacts under the
//! output directory.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Config;

const AFTER_HELP: &str = "\
Configuration keys (file lines `key=value`, or flags `--key value`):
  seed            base seed (falls back to $BIONICA_SEED, then 0)
  out             output directory [out]
  in              input directory holding X.csv / S.csv (run, eval)
  algo            bio-nica | nnpca | offline [bio-nica]
  d, k, T         sources, mixture channels, samples [3, 3, 100000]
  runs            repeat with seeds seed..seed+runs-1 [1]
  stride          error-trajectory stride [100]
  gamma           output step size, number or `adaptive`
  eta0, eta_decay learning rate eta0 / (1 + eta_decay * t)
  tau             W/M learning-rate ratio
  dyn_tol, dyn_max_iter, warm_start (cold|previous)
  nnpca_eta0, nnpca_eta_decay   baseline learning rate
  outer_iters, y_inner_tol, y_inner_max_iter   batch algorithm
  images          comma-separated PGM files or a directory [data/images]
  epochs          shuffled passes over the image pixels [15]
  write_stream    write the full output stream Y.csv for images [true]

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numerical abort.";

#[derive(Parser, Debug)]
#[command(name = "bionica", version, about = "Online nonnegative ICA experiments", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Overrides as `--key value` or `--key=value`.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "--KEY VALUE"
    )]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample sparse sources and a random mixing matrix; write S, A, X.
    Generate(Common),
    /// Run one algorithm and evaluate it against the sources.
    Run(Common),
    /// Separate mixtures of grayscale images.
    Images(Common),
    /// Score an output matrix against the true sources.
    Eval(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Generate(c) => ("generate", c),
        Command::Run(c) => ("run", c),
        Command::Images(c) => ("images", c),
        Command::Eval(c) => ("eval", c),
    };
    let result =
        Config::load(common.config.as_deref(), &common.overrides).and_then(|cfg| match name {
            "generate" => commands::generate(&cfg),
            "run" => commands::run(&cfg),
            "images" => commands::images(&cfg),
            _ => commands::eval(&cfg),
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("bionica {name}: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &bionica::Error) -> u8 {
    use bionica::Error as E;
    match err {
        E::Io { .. } | E::Parse { .. } | E::UnsupportedFormat(_) => 3,
        E::Numerical { .. } | E::NonFinite(_) => 4,
        _ => 2,
    }
}
