use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stls_sdp::bench::{self, CameraLayout, ExperimentSpec, MissingPattern, Suite};
use stls_sdp::extract::solve_instance;
use stls_sdp::lift::LiftedProblem;
use stls_sdp::sdp::{assemble_primal, SolverConfig};
use stls_sdp::structure::InstanceFile;
use stls_sdp::{Result, StlsError};

/// Nearest rank-deficient structured matrix via a semidefinite relaxation.
#[derive(Parser)]
#[command(name = "stls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance given as JSON and print the solution as JSON.
    Solve {
        file: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        feas_tol: f64,
        #[arg(long, default_value_t = 1e-8)]
        gap_tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// Impose every lifted constraint explicitly instead of solving on
        /// the face they define (slow; for cross-checking).
        #[arg(long)]
        no_facial_reduction: bool,
        /// Report the extracted point without local refinement.
        #[arg(long)]
        no_polish: bool,
        /// Also write the relaxation data in sparse text form.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Run a seeded experiment suite and print a success-rate table.
    Bench {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated noise standard deviations.
        #[arg(long, value_delimiter = ',')]
        noise: Option<Vec<f64>>,
        /// Comma-separated sizes: n for Hankel suites, number of views or
        /// points for multi-view suites.
        #[arg(long, value_delimiter = ',')]
        size: Option<Vec<usize>>,
        /// Row count for hankel-random.
        #[arg(long, default_value_t = 3)]
        rows: usize,
        #[arg(long, value_enum, default_value_t = LayoutArg::Sphere)]
        layout: LayoutArg,
        #[arg(long, value_enum, default_value_t = PatternArg::Mod5)]
        pattern: PatternArg,
        /// Also run the local baseline.
        #[arg(long)]
        baseline: bool,
        /// Leave runtimes out so output depends only on the seed.
        #[arg(long)]
        no_timing: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    HankelRandom,
    Realization,
    RealizationMissing,
    Gcd,
    Triangulation,
    Resectioning,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::HankelRandom => Suite::HankelRandom,
            SuiteArg::Realization => Suite::Realization,
            SuiteArg::RealizationMissing => Suite::RealizationMissing,
            SuiteArg::Gcd => Suite::Gcd,
            SuiteArg::Triangulation => Suite::Triangulation,
            SuiteArg::Resectioning => Suite::Resectioning,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Sphere,
    Line,
}

#[derive(Clone, Copy, ValueEnum)]
enum PatternArg {
    Mod5,
    Mod10,
}

fn cmd_solve(
    file: PathBuf,
    config: SolverConfig,
    export: Option<PathBuf>,
) -> Result<bool> {
    let text = std::fs::read_to_string(&file)?;
    let instance = InstanceFile::from_json(&text)?.build()?;
    if let Some(path) = export {
        let lifted = LiftedProblem::build(&instance);
        let problem = assemble_primal(&lifted, &instance.weight)?;
        let out = std::io::BufWriter::new(std::fs::File::create(path)?);
        problem.write_sparse(out)?;
    }
    let out = solve_instance(&instance, &config)?;
    println!("{}", out.solution.to_json());
    Ok(out.solution.certified)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("STLS_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| StlsError::Input(format!("STLS_THREADS must be a positive integer, got '{v}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| StlsError::Input(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    configure_threads()?;
    match cli.command {
        Command::Solve {
            file,
            feas_tol,
            gap_tol,
            max_iter,
            no_facial_reduction,
            no_polish,
            export,
        } => {
            let config = SolverConfig {
                feas_tol,
                gap_tol,
                max_iter,
                facial_reduction: !no_facial_reduction,
                polish: !no_polish,
                ..SolverConfig::default()
            };
            let certified = cmd_solve(file, config, export)?;
            Ok(if certified { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Bench {
            suite,
            trials,
            seed,
            noise,
            size,
            rows,
            layout,
            pattern,
            baseline,
            no_timing,
            csv,
        } => {
            let mut spec = ExperimentSpec::new(suite.into());
            if let Some(t) = trials {
                spec.trials = t;
            }
            if let Some(n) = noise {
                spec.noise_levels = n;
            }
            if let Some(s) = size {
                spec.sizes = s;
            }
            spec.seed = seed;
            spec.rows = rows;
            spec.baseline = baseline;
            spec.timing = !no_timing;
            spec.layout = match layout {
                LayoutArg::Sphere => CameraLayout::Sphere,
                LayoutArg::Line => CameraLayout::Line,
            };
            spec.pattern = match pattern {
                PatternArg::Mod5 => MissingPattern::Mod5,
                PatternArg::Mod10 => MissingPattern::Mod10,
            };
            let cells = bench::run_experiment(&spec)?;
            print!("{}", bench::to_table(&cells));
            let violations: usize = cells.iter().map(|c| c.weak_duality_violations).sum();
            if violations > 0 {
                eprintln!("warning: {violations} trials violated weak duality");
            }
            if let Some(path) = csv {
                std::fs::write(path, bench::to_csv(&cells))?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
