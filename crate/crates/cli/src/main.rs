use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use bmtrunc_cli::{parse_n_list, run, Command, CoupleConfig, Format, RunConfig, EXIT_VALIDATION};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    Validate,
    Bound,
    Compare,
    Couple,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Certified error bounds for truncated block-monotone Markov chains.
#[derive(Debug, Parser)]
#[command(name = "bmtrunc", version)]
struct Args {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,

    #[arg(long, value_enum)]
    command: CommandArg,

    /// Truncation levels: "10,20,50", "10..50" or "10..50:5".
    #[arg(long)]
    n: Option<String>,

    /// Largest m scanned; defaults to 10 * ceil(1 / (1 - gamma)).
    #[arg(long)]
    m_max: Option<usize>,

    /// Level of the reference truncation; defaults to 8 * max(n).
    #[arg(long)]
    reference_level: Option<usize>,

    /// Relative slack of the drift check.
    #[arg(long, default_value_t = 1e-10)]
    verify_tol: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,

    /// Steps per coupled path.
    #[arg(long, default_value_t = 1000)]
    steps: usize,

    /// Number of coupled paths.
    #[arg(long, default_value_t = 1000)]
    paths: usize,

    /// Start level of the lower chain.
    #[arg(long, default_value_t = 0)]
    low: usize,

    /// Start level of the upper chain.
    #[arg(long, default_value_t = 5)]
    high: usize,

    /// Initial phase.
    #[arg(long, default_value_t = 0)]
    phase: usize,

    /// Levels of the finite corner used to couple chains with a tail.
    #[arg(long, default_value_t = 400)]
    corner: usize,

    /// Directory for per-path trajectory CSVs.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
}

fn main() {
    let args = Args::parse();
    if let Some(threads) = std::env::var("BMTRUNC_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let n = match args.n.as_deref().map(parse_n_list).transpose() {
        Ok(n) => n.unwrap_or_default(),
        Err(e) => {
            eprintln!("bmtrunc: --n: {e}");
            std::process::exit(EXIT_VALIDATION);
        }
    };
    let config = RunConfig {
        model: args.model,
        command: match args.command {
            CommandArg::Validate => Command::Validate,
            CommandArg::Bound => Command::Bound,
            CommandArg::Compare => Command::Compare,
            CommandArg::Couple => Command::Couple,
        },
        n,
        m_max: args.m_max,
        reference_level: args.reference_level,
        verify_tol: args.verify_tol,
        seed: args.seed,
        out: args.out,
        format: match args.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        },
        couple: CoupleConfig {
            steps: args.steps,
            paths: args.paths,
            low: args.low,
            high: args.high,
            phase: args.phase,
            corner: args.corner,
            dump_dir: args.dump_dir,
        },
    };
    std::process::exit(run(&config));
}
