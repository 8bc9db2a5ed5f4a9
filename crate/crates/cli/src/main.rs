use std::io::{ErrorKind, Write};
use std::process::ExitCode;

use clap::Parser;
use dosemono::sim::{bandwidth_grid, cube_size_grid, emit_tables, run_grid, TableFormat};
use dosemono::TestConfig;
use dosemono_cli::args::{Cli, Command, FormatArg, GridArg, SimArgs, TableFormatArg};
use dosemono_cli::{render_json, render_text, run, RunSpec};

fn simulate(args: &SimArgs) -> dosemono_cli::Result<String> {
    let (reps, boot) = if args.full { (1000, 1000) } else { (args.reps, args.boot) };
    let base = TestConfig {
        n_boot: boot,
        trim: args.trim.filter(|&t| t > 0.0),
        seed: args.seed,
        ..TestConfig::default()
    };
    let mut cells = match args.grid {
        GridArg::Bandwidth => bandwidth_grid(&base),
        GridArg::CubeSize => cube_size_grid(&base),
    };
    cells.retain(|(spec, ..)| {
        (args.dgp.is_empty() || args.dgp.contains(&spec.id)) && (args.n.is_empty() || args.n.contains(&spec.n))
    });
    let results = run_grid(&cells, reps, !args.serial)?;
    let format = match args.format {
        TableFormatArg::Text => TableFormat::Text,
        TableFormatArg::Json => TableFormat::Json,
        TableFormatArg::Csv => TableFormat::Csv,
    };
    Ok(emit_tables(&results, format))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let output = match &cli.command {
        Command::Run(args) => RunSpec::resolve(args).and_then(|spec| {
            let report = run(&spec)?;
            Ok(match spec.format {
                FormatArg::Text => render_text(&report),
                FormatArg::Json => render_json(&report),
            })
        }),
        Command::Simulate(args) => simulate(args),
    };
    match output {
        Ok(mut text) => {
            if !text.ends_with('\n') {
                text.push('\n');
            }
            // A closed downstream pipe (e.g. `| head`) is not an error.
            match std::io::stdout().write_all(text.as_bytes()) {
                Err(e) if e.kind() != ErrorKind::BrokenPipe => {
                    eprintln!("error: writing output: {e}");
                    ExitCode::FAILURE
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
