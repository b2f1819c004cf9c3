use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use momentsos::cli::{parse_backend, render_text, run, ProblemFile, RunOptions};
use momentsos::sdp::serve_adapter;

#[derive(Parser)]
#[command(name = "momentsos", version, about = "Moment-SOS relaxations with rank-based exactness certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file over a range of relaxation orders and print a report.
    Run(RunArgs),
    /// Act as an SDP adapter: read a conic program on stdin, write a result on stdout.
    Adapter,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Json,
    Text,
}

#[derive(clap::Args)]
struct RunArgs {
    problem: PathBuf,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    max_order: Option<usize>,
    #[arg(long)]
    all_orders: bool,
    #[arg(long, default_value_t = 1e-6)]
    tol_rank: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_solve: f64,
    /// `bundled` or `adapter:PATH`; defaults to $MOMENTSOS_SDP_ADAPTER when set.
    #[arg(long)]
    solver: Option<String>,
    #[arg(long, value_enum, default_value = "on")]
    oracle: Toggle,
    #[arg(long, value_enum, default_value = "text")]
    report: ReportKind,
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    #[arg(long)]
    scale_radius: Option<f64>,
}

fn execute(args: RunArgs) -> momentsos::Result<i32> {
    let mut opts = RunOptions {
        order: args.order,
        max_order: args.max_order,
        all_orders: args.all_orders,
        rank_tol: args.tol_rank,
        solve_tol: args.tol_solve,
        oracle: matches!(args.oracle, Toggle::On),
        seed: args.seed,
        scale_radius: args.scale_radius,
        ..RunOptions::default()
    };
    if let Some(s) = &args.solver {
        opts.backend = parse_backend(s)?;
    }
    let problem = ProblemFile::read(&args.problem)?;
    let report = run(&problem, &opts)?;
    match args.report {
        ReportKind::Json => print!("{}", report.to_json()?),
        ReportKind::Text => print!("{}", render_text(&report)),
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => execute(args).unwrap_or_else(|e| {
            eprintln!("error: {e}");
            1
        }),
        Command::Adapter => match serve_adapter(&mut std::io::stdin().lock(), &mut std::io::stdout().lock()) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
    };
    ExitCode::from(code as u8)
}
