//! Command-line surface: `solve`, `simulate`, `eval`, `grad-check` and `export-ply`.
//!
//! Exit codes are 0 on success, 1 for invalid input or usage and 2 for numerical failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use relieve::io::{
    export_ply, ground_truth_dir, load_ground_truth, load_problem, load_solution, save_ground_truth, save_problem,
    save_solution, GroundTruth, SolutionBundle,
};
use relieve::losses::finite_difference_check;
use relieve::metrics::{evaluate, Reconstruction};
use relieve::optimizer::{solve, LearningRates, OptimConfig};
use relieve::sim::{fixture, random_instance, CorruptionConfig, MatchNoiseConfig, RandomInstanceSpec};
use relieve::Error;

pub const THREADS_ENV: &str = "RELIEVE_THREADS";
/// Largest finite-difference error `grad-check` accepts.
pub const GRAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "relieve", version, about = "Multi-view registration of monocular depth and camera poses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize poses, depths and confidences of a problem directory.
    Solve(SolveArgs),
    /// Write a synthetic problem directory with its ground truth.
    Simulate(SimulateArgs),
    /// Score a solution bundle against a ground-truth directory.
    Eval { solution_dir: PathBuf, gt_dir: PathBuf },
    /// Compare analytic and finite-difference gradients on a random instance.
    GradCheck(GradCheckArgs),
    /// Write the confident points of a solution as a binary PLY cloud.
    ExportPly {
        solution_dir: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        conf_floor: f64,
    },
}

#[derive(Debug, Args)]
struct SolveArgs {
    problem_dir: PathBuf,
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    /// Weight of the confidence barrier [default: problem value, else 1.0]
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the registration term [default: problem value, else 0.5]
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Pose, scale and confidence rate; residual grids use a tenth of it.
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 picks the machine default. Falls back to RELIEVE_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(short = 'o', long = "output")]
    output: PathBuf,
    #[arg(long, default_value_t = 8)]
    views: usize,
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, default_value = "64x48", value_parser = parse_resolution)]
    res: (usize, usize),
    /// Largest log-depth deviation of the smooth pseudo-depth field.
    #[arg(long, default_value_t = 0.1)]
    corruption: f64,
    /// Pixel noise standard deviation of the matches.
    #[arg(long, default_value_t = 0.5)]
    match_noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 100)]
    probes: usize,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(w)?, parse(h)?))
}

/// Failure of a subcommand with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_numerical() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve(a) => run_solve(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Eval { solution_dir, gt_dir } => run_eval(&solution_dir, &gt_dir),
        Command::GradCheck(a) => run_grad_check(a),
        Command::ExportPly {
            solution_dir,
            output,
            conf_floor,
        } => {
            let bundle = load_solution(&solution_dir)?;
            let n = export_ply(&bundle.point_maps, &bundle.confidences, &output, conf_floor)?;
            println!("vertices={n}");
            Ok(())
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(0),
    }
}

fn run_solve(a: SolveArgs) -> Result<(), Failure> {
    let mut problem = load_problem(&a.problem_dir)?;
    if let Some(alpha) = a.alpha {
        problem.hyperparams.alpha = alpha;
    }
    if let Some(lambda) = a.lambda {
        problem.hyperparams.lambda = lambda;
    }
    problem.hyperparams.validate()?;
    let config = OptimConfig {
        max_iters: a.iters,
        lr: LearningRates::scaled(a.lr),
        grid_size: a.grid,
        seed: a.seed,
        threads: thread_count(a.threads)?,
        ..OptimConfig::default()
    };
    let solution = solve(&problem, &config)?;
    let bundle = SolutionBundle::from_solution(&solution, &config, &problem.hyperparams)?;
    save_solution(&bundle, &a.output)?;
    let last = solution.loss_history.last().map_or(f64::NAN, |l| l.total);
    println!("iterations={}", solution.iterations);
    println!("converged={}", solution.converged);
    println!("total_loss={last:.16e}");
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let corruption = CorruptionConfig {
        amplitude: a.corruption,
        ..CorruptionConfig::default()
    };
    let matches = MatchNoiseConfig {
        sigma: a.match_noise,
        ..MatchNoiseConfig::default()
    };
    let (w, h) = a.res;
    let f = fixture(a.views, w, h, &corruption, &matches, a.seed)?;
    if !f.complete {
        eprintln!("warning: some view pairs have fewer than {} matches", matches.count);
    }
    save_problem(&f.problem, &a.output)?;
    save_ground_truth(&GroundTruth::from_scene(&f.truth)?, &ground_truth_dir(&a.output))?;
    println!("views={}", f.problem.views.len());
    println!("matches={}", f.problem.correspondences.iter().map(|c| c.count()).sum::<usize>());
    Ok(())
}

fn run_eval(solution_dir: &std::path::Path, gt_dir: &std::path::Path) -> Result<(), Failure> {
    let bundle = load_solution(solution_dir)?;
    let truth = load_ground_truth(gt_dir)?;
    if truth.depths.len() != bundle.depths.len() {
        return Err(invalid(format!(
            "solution has {} views, ground truth {}",
            bundle.depths.len(),
            truth.depths.len()
        )));
    }
    let (est_poses, gt_poses) = (bundle.poses(), truth.poses());
    let report = evaluate(
        &Reconstruction {
            poses: &est_poses,
            depths: &bundle.depths,
            point_maps: &bundle.point_maps,
        },
        &Reconstruction {
            poses: &gt_poses,
            depths: &truth.depths,
            point_maps: &truth.point_maps,
        },
    )?;
    print!("{}", report.to_key_value());
    Ok(())
}

fn run_grad_check(a: GradCheckArgs) -> Result<(), Failure> {
    let spec = RandomInstanceSpec {
        views: 3,
        ..RandomInstanceSpec::default()
    };
    let (problem, state) = random_instance(spec, a.seed);
    let err = finite_difference_check(&state, &problem, &problem.hyperparams, a.probes, a.step, a.seed)?;
    println!("max_rel_error={err:.6e}");
    if err < GRAD_TOLERANCE {
        Ok(())
    } else {
        Err(Failure {
            code: 2,
            message: format!("gradient check failed: {err:.3e} >= {GRAD_TOLERANCE:e}"),
        })
    }
}
