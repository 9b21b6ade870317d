use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use dpglab::study::{write_csv_header, write_csv_row};
use dpglab::{fit_slope, run_study_with, Column, ConvergenceRecord, Mode, ProblemChoice, StudyConfig, TrialChoice};

const EXIT_BAD_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "dpg-lab", version, about = "Convergence studies for the ultra-weak DPG method")]
struct Cli {
    /// Log progress per level (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a refinement study and write the convergence table as CSV.
    Run(RunArgs),
    /// Write the initial mesh of a problem after some uniform refinements.
    Mesh(MeshArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ProblemArg {
    Square,
    Lshape,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TrialArg {
    Standard,
    Augmented,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Uniform,
    Adaptive,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    /// Polynomial order p.
    #[arg(long)]
    p: usize,
    #[arg(long, value_enum, default_value = "standard")]
    trial: TrialArg,
    #[arg(long, value_enum, default_value = "uniform")]
    mode: ModeArg,
    /// Bulk marking parameter for adaptive runs.
    #[arg(long, default_value_t = 0.25)]
    theta: f64,
    /// Maximal number of levels.
    #[arg(long, default_value_t = 5)]
    levels: usize,
    /// Stop before solving on a mesh with more unknowns than this.
    #[arg(long, default_value_t = 1_000_000)]
    max_dofs: usize,
    /// Also compute the postprocessed solution and its error.
    #[arg(long)]
    postprocess: bool,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    /// Run elementwise stages on one thread.
    #[arg(long)]
    seq: bool,
    /// Relative residual tolerance of the linear solver.
    #[arg(long, default_value_t = 1e-10)]
    solver_tol: f64,
    /// Extra quadrature exactness.
    #[arg(long, default_value_t = 0)]
    quad_bump: usize,
    /// Test space degree minus p.
    #[arg(long, default_value_t = 2)]
    enrichment: usize,
}

#[derive(clap::Args, Debug)]
struct MeshArgs {
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[arg(long, default_value_t = 0)]
    levels: usize,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ProblemArg {
    fn choice(self) -> ProblemChoice {
        match self {
            ProblemArg::Square => ProblemChoice::Square,
            ProblemArg::Lshape => ProblemChoice::LShape,
        }
    }
}

impl RunArgs {
    fn config(&self) -> StudyConfig {
        StudyConfig {
            problem: self.problem.choice(),
            p: self.p,
            trial: match self.trial {
                TrialArg::Standard => TrialChoice::Standard,
                TrialArg::Augmented => TrialChoice::Augmented,
            },
            mode: match self.mode {
                ModeArg::Uniform => Mode::Uniform,
                ModeArg::Adaptive => Mode::Adaptive,
            },
            theta: self.theta,
            levels: self.levels,
            max_dofs: self.max_dofs,
            postprocess: self.postprocess,
            solver_tol: self.solver_tol,
            quad_bump: self.quad_bump,
            enrichment: self.enrichment,
            parallel: !self.seq,
        }
    }
}

fn run(args: &RunArgs) -> ExitCode {
    let config = args.config();
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_BAD_CONFIG);
    }
    let file = match File::create(&args.out) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot create {}: {e}", args.out.display());
            return ExitCode::from(EXIT_BAD_CONFIG);
        }
    };
    let mut out = BufWriter::new(file);
    let mut records: Vec<ConvergenceRecord> = Vec::new();
    let result = write_csv_header(&mut out).and_then(|_| {
        run_study_with(&config, |r| {
            write_csv_row(&mut out, r)?;
            out.flush()?;
            records.push(r.clone());
            Ok(())
        })
    });
    if let Err(e) = out.flush() {
        eprintln!("error: writing {}: {e}", args.out.display());
        return ExitCode::from(EXIT_SOLVER);
    }
    if let Err(e) = result {
        eprintln!("error: study aborted after {} level(s): {e}", records.len());
        return ExitCode::from(EXIT_SOLVER);
    }
    report_slopes(&records);
    ExitCode::SUCCESS
}

fn report_slopes(records: &[ConvergenceRecord]) {
    if records.len() < 2 {
        return;
    }
    let columns = [
        ("err_u", Column::ErrU),
        ("err_sigma", Column::ErrSigma),
        ("err_u_post", Column::ErrUPost),
        ("eta", Column::Eta),
    ];
    let parts: Vec<String> = columns
        .iter()
        .filter(|(_, c)| records.iter().any(|r| r.value(*c).is_some()))
        .filter_map(|(name, c)| fit_slope(records, *c, 3).ok().map(|s| format!("{name} {s:.3}")))
        .collect();
    eprintln!("slopes vs D_h over the last {} levels: {}", records.len().min(3), parts.join(", "));
}

fn dump_mesh(args: &MeshArgs) -> anyhow::Result<()> {
    let mut mesh = args.problem.choice().problem().initial_mesh();
    for _ in 0..args.levels {
        mesh = mesh.refine_uniform()?;
    }
    match &args.out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            mesh.write_to(BufWriter::new(file))?;
        }
        None => mesh.write_to(std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match &cli.command {
        Command::Run(args) => run(args),
        Command::Mesh(args) => match dump_mesh(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_BAD_CONFIG)
            }
        },
    }
}
