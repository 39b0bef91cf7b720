use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spectral_crossed::cli::{self, Format, Mode, ScenarioConfig};
use spectral_crossed::Error;

#[derive(Parser)]
#[command(
    name = "spectral-crossed",
    version,
    about = "Spectral triples on crossed products: scenario runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write every output.
    Run(Common),
    /// Run a scenario; exit with status 1 if any check fails.
    Verify(Common),
    /// Only compute and write spectra.
    Spectrum(Common),
    /// Only compute and write distances.
    Distance(Common),
    /// Only compute the Fourier cut-down table.
    Cutdown(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Both,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    format: FormatArg,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 3,
    }
}

fn execute(args: &Common, mode: Mode) -> Result<bool, Error> {
    let cfg = ScenarioConfig::load(&args.config)?;
    let format = match args.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
        FormatArg::Both => Format::Both,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let out = pool.install(|| cli::run_config(&cfg, args.seed, mode))?;
    let written = cli::write_outputs(&out, &args.out, format, mode)?;
    for row in &out.report.rows {
        println!(
            "{} {}: {}",
            if row.passed { "PASS" } else { "FAIL" },
            row.name,
            row.value
        );
    }
    eprintln!("wrote {} to {}", written.join(", "), args.out.display());
    Ok(out.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, mode, strict) = match &cli.command {
        Command::Run(a) => (a, Mode::Full, false),
        Command::Verify(a) => (a, Mode::Full, true),
        Command::Spectrum(a) => (a, Mode::Spectrum, false),
        Command::Distance(a) => (a, Mode::Distance, false),
        Command::Cutdown(a) => (a, Mode::Cutdown, false),
    };
    match execute(args, mode) {
        Ok(passed) if strict && !passed => ExitCode::from(1),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
