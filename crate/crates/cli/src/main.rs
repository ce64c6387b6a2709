use std::process::ExitCode;

use clap::Parser;
use plrdiff_cli::args::{Cli, Command};
use plrdiff_cli::commands;
use plrdiff_cli::Result;

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Degrade(run) => commands::cmd_degrade(&run.resolve()?),
        Command::Pansharpen(run) => {
            if let Some(report) = commands::cmd_pansharpen(&run.resolve()?)? {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            }
            Ok(())
        }
        Command::SweepEta {
            run,
            eta1_grid,
            eta2_grid,
        } => commands::cmd_sweep_eta(&run.resolve()?, &eta1_grid, &eta2_grid),
        Command::SweepBands { run, index_lists } => {
            let lists: Vec<Vec<usize>> = index_lists.into_iter().map(|l| l.0).collect();
            commands::cmd_sweep_bands(&run.resolve()?, &lists)
        }
        Command::SweepSteps { run, steps_list } => commands::cmd_sweep_steps(&run.resolve()?, &steps_list),
        Command::TrainDenoiser { run, train } => {
            let mut cfg = run.resolve()?;
            train.apply(&mut cfg);
            commands::cmd_train_denoiser(&cfg)
        }
        Command::Metrics { run, input } => {
            let report = commands::cmd_metrics(&run.resolve()?, &input)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::ExportBand { input, band, output } => commands::cmd_export_band(&input, band, &output),
        Command::Synthesize {
            height,
            width,
            bands,
            rank,
            seed,
            output,
        } => commands::cmd_synthesize(height, width, bands, rank, seed, &output),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plrdiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
