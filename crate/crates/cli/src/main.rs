mod args;
mod commands;
mod config;
mod manifest;
mod report;

use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use hsnc_core::Error;

use args::{Cli, Command};
use commands::Ran;
use manifest::RunManifest;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
    ExitCode::from(code)
}

fn dispatch(cmd: &Command) -> hsnc_core::Result<Ran> {
    match cmd {
        Command::Synth(a) => commands::synth(a),
        Command::Stats(a) => commands::stats(a),
        Command::TrainVae(a) => commands::train(a, false),
        Command::TrainSupervised(a) => commands::train(a, true),
        Command::Encode(a) => commands::encode(a),
        Command::Decode(a) => commands::decode(a),
        Command::EvalRecon(a) => commands::eval_recon(a),
        Command::TrainProbes(a) => commands::train_probes(a),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return fail("usage", first, EXIT_USAGE);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    hsnc_core::tensor::init_threads(cli.deterministic);

    let started = Instant::now();
    let result = dispatch(&cli.command).and_then(|ran| match ran {
        Ran::Printed => Ok(()),
        Ran::Done(o) => {
            let config_sha256 = manifest::sha256_hex(serde_json::to_string(&o.config)?.as_bytes());
            let m = RunManifest {
                command: o.command.to_string(),
                argv: argv.clone(),
                config: o.config,
                config_sha256,
                inputs: o.inputs,
                input_ids: o.input_ids,
                outputs: o.outputs,
                seed: o.seed,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            m.append(&o.dir).map(|_| ())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Usage(_)) => fail(e.kind(), &e.to_string(), EXIT_USAGE),
        Err(e) => fail(e.kind(), &e.to_string(), EXIT_FAILURE),
    }
}
