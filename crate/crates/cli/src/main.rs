//! `gpsl`: train and compare Pareto set learning models from the command line.

mod runner;
mod settings;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gpsl_core::problems::{Problem, ProblemId};
use gpsl_core::trainer::{Algorithm, Checkpoint, Evaluator, ReferenceFront, TrainConfig};

use runner::{Job, GroupSummary};
use settings::{Settings, UsageError};

#[derive(Debug, Parser)]
#[command(name = "gpsl", version, about = "Pareto set learning by hypervolume maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one algorithm on one problem for each seed.
    Run(Settings),
    /// Train every (problem, algorithm, seed) combination and rank algorithms.
    Compare(Settings),
    /// Sweep the latent dimension or the latent distribution of GPSL.
    Ablate {
        #[arg(value_enum)]
        kind: Ablation,
        #[command(flatten)]
        settings: Settings,
    },
    /// Re-evaluate a saved checkpoint and print the report as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Reference front file; defaults to the analytic front.
        #[arg(long)]
        front: Option<PathBuf>,
        #[arg(long)]
        eval_n: Option<usize>,
        #[arg(long)]
        eval_seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Ablation {
    LatentDim,
    LatentDist,
}

impl Ablation {
    fn name(self) -> &'static str {
        match self {
            Ablation::LatentDim => "latent-dim",
            Ablation::LatentDist => "latent-dist",
        }
    }
}

const ANALYTIC_PROBLEMS: [ProblemId; 3] = [ProblemId::Zdt3, ProblemId::Dtlz5, ProblemId::Dtlz7];

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(settings) => cmd_run(settings.with_config_file()?),
        Command::Compare(settings) => cmd_compare(settings.with_config_file()?),
        Command::Ablate { kind, settings } => cmd_ablate(kind, settings.with_config_file()?),
        Command::Eval {
            checkpoint,
            front,
            eval_n,
            eval_seed,
        } => cmd_eval(checkpoint, front, eval_n, eval_seed),
    }
}

fn references(
    settings: &Settings,
    problems: &[ProblemId],
) -> Result<BTreeMap<ProblemId, Arc<ReferenceFront>>> {
    let files = settings.front_files(problems)?;
    let reference_value = settings.reference.unwrap_or(TrainConfig::new("", Algorithm::GpslG).reference_value);
    problems
        .iter()
        .map(|&id| {
            let front = runner::prepare_reference(id, files.get(&id).map(PathBuf::as_path), reference_value)?;
            Ok((id, Arc::new(front)))
        })
        .collect()
}

fn job(settings: &Settings, problem: ProblemId, algorithm: Algorithm, label: String, seed: u64) -> Result<Job> {
    let mut config = TrainConfig::new(problem.name(), algorithm);
    settings.apply(&mut config)?;
    config.seed = seed;
    Ok(Job {
        problem,
        label,
        config,
    })
}

fn cmd_run(settings: Settings) -> Result<()> {
    let problems = settings.problems(&[])?;
    let algorithms = settings.algorithms(&[])?;
    if problems.len() != 1 || algorithms.len() != 1 {
        return Err(UsageError("run takes one problem and one algorithm; use compare for grids".into()).into());
    }
    let (problem, algorithm) = (problems[0], algorithms[0]);
    let refs = references(&settings, &problems)?;
    let jobs = settings
        .seed_list()?
        .into_iter()
        .map(|seed| job(&settings, problem, algorithm, algorithm.name().to_string(), seed))
        .collect::<Result<Vec<_>>>()?;
    let root = settings.out_dir();
    let finished = runner::execute(&jobs, &refs, &root, settings.jobs())?;
    let summaries = runner::summarize(&finished, &root)?;
    report(&summaries);
    Ok(())
}

fn cmd_compare(settings: Settings) -> Result<()> {
    let problems = settings.problems(&ANALYTIC_PROBLEMS)?;
    let algorithms = settings.algorithms(&Algorithm::ALL)?;
    let seeds = settings.seed_list()?;
    let refs = references(&settings, &problems)?;
    let mut jobs = Vec::new();
    for &problem in &problems {
        for &algorithm in &algorithms {
            for &seed in &seeds {
                jobs.push(job(&settings, problem, algorithm, algorithm.name().to_string(), seed)?);
            }
        }
    }
    let root = settings.out_dir();
    let finished = runner::execute(&jobs, &refs, &root, settings.jobs())?;
    finish_grid(&root, "compare", &finished)
}

fn cmd_ablate(kind: Ablation, settings: Settings) -> Result<()> {
    if settings.algo.is_some() || settings.latent_dim.is_some() {
        return Err(UsageError(format!("{} fixes --algo and --latent-dim itself", kind.name())).into());
    }
    let problems = settings.problems(&[ProblemId::Zdt3])?;
    let seeds = settings.seed_list()?;
    let refs = references(&settings, &problems)?;
    let mut jobs = Vec::new();
    for &problem in &problems {
        let p = Problem::new(problem);
        let arms: Vec<(Algorithm, usize)> = match kind {
            Ablation::LatentDim => {
                let mut ks = vec![1, 2, 5, 10, p.n_var()];
                ks.dedup();
                ks.into_iter().map(|k| (Algorithm::GpslG, k)).collect()
            }
            Ablation::LatentDist => [Algorithm::GpslG, Algorithm::GpslL, Algorithm::GpslD]
                .into_iter()
                .map(|a| (a, p.n_obj()))
                .collect(),
        };
        for (algorithm, k) in arms {
            for &seed in &seeds {
                let mut j = job(&settings, problem, algorithm, format!("{}-k{k}", algorithm.name()), seed)?;
                j.config.latent_dim = Some(k);
                jobs.push(j);
            }
        }
    }
    let root = settings.out_dir().join(format!("ablate-{}", kind.name()));
    let finished = runner::execute(&jobs, &refs, &root, settings.jobs())?;
    finish_grid(&root, &format!("ablate-{}", kind.name()), &finished)
}

fn finish_grid(root: &std::path::Path, name: &str, finished: &[runner::Finished]) -> Result<()> {
    let summaries = runner::summarize(finished, root)?;
    runner::write_grid(&root.join(format!("{name}.csv")), &runner::grid_rows(finished))?;
    runner::write_grid_summary(&root.join(format!("{name}-summary.json")), &summaries)?;
    report(&summaries);
    for (problem, ranks) in runner::ranking(&summaries) {
        let order: Vec<&str> = ranks.iter().map(|r| r.algorithm.as_str()).collect();
        log::info!("{problem} ranking: {}", order.join(" < "));
    }
    Ok(())
}

fn report(summaries: &[GroupSummary]) {
    for s in summaries {
        log::info!(
            "{} {}: median final log HV difference {:.4} (IQR {:.4}) over {} seeds",
            s.problem,
            s.algorithm,
            s.median,
            s.iqr,
            s.seeds.len()
        );
    }
}

fn cmd_eval(path: PathBuf, front: Option<PathBuf>, eval_n: Option<usize>, eval_seed: Option<u64>) -> Result<()> {
    let checkpoint = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let config = &checkpoint.config;
    let id: ProblemId = config
        .problem
        .parse()
        .map_err(|e| UsageError(format!("checkpoint problem: {e}")))?;
    let problem = Problem::new(id);
    if checkpoint.params.output_dim() != problem.n_var() {
        bail!(
            "checkpoint network outputs {} variables, {id} has {}",
            checkpoint.params.output_dim(),
            problem.n_var()
        );
    }
    let reference = runner::prepare_reference(id, front.as_deref(), config.reference_value)?;
    let evaluator = Evaluator::new(
        &problem,
        &config.latent_spec(&problem),
        eval_n.unwrap_or(config.eval_n),
        &reference,
        eval_seed.unwrap_or(config.eval_seed),
    )?;
    let report = evaluator.evaluate(&checkpoint.params)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
