use clap::{Args, Parser, Subcommand};
use dvf::cli::{apply_overrides, load_config, parse_grid_spec, run, Mode, Overrides};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "dvf",
    version,
    about = "Discrete variational experiments: train collocation networks, \
             solve directly, study inf-sup stability, verify grid calculus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the experiment described by a JSON config file.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides the RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the grid, written as NXxNY (for example 20x20).
    #[arg(long)]
    grid: Option<String>,
    /// Overrides the mode: train, solve, infsup or verify.
    #[arg(long)]
    mode: Option<String>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(args: RunArgs) -> dvf::Result<()> {
    let mut config = load_config(&args.config)?;
    let overrides = Overrides {
        epochs: args.epochs,
        seed: args.seed,
        grid: args.grid.as_deref().map(parse_grid_spec).transpose()?,
        mode: args.mode.as_deref().map(Mode::from_name).transpose()?,
        out: args.out.map(|p| p.display().to_string()),
    };
    apply_overrides(&mut config, &overrides);
    run(&config)
}

fn main() {
    let cli = Cli::parse();
    let Command::Run(args) = cli.command;
    if let Err(err) = execute(args) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
