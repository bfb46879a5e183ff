//! Executes batches of training runs and writes their artifacts.
//!
//! Layout under a root directory:
//!
//! ```text
//! <root>/<problem>/<label>/seed-<s>.csv
//! <root>/<problem>/<label>/seed-<s>.checkpoint.json
//! <root>/<problem>/<label>/summary.json
//! ```
//!
//! Every file is written to a temporary name and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use gpsl_core::problems::{load_reference_front, Problem, ProblemId};
use gpsl_core::trainer::{train, write_atomic, MetricsLog, ReferenceFront, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One (problem, arm, seed) training run.
#[derive(Debug, Clone)]
pub struct Job {
    pub problem: ProblemId,
    /// Arm label; the algorithm name unless an ablation renames it.
    pub label: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct Finished {
    pub job: Job,
    pub metrics: MetricsLog,
    pub latent_dim: usize,
    pub elapsed: f64,
}

impl Finished {
    pub fn final_log_hv_difference(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |r| r.log_hv_difference)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub problem: String,
    pub algorithm: String,
    pub latent_dim: usize,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub final_log_hv_difference: Vec<f64>,
    pub final_hv_learned: Vec<f64>,
    pub hv_true: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub wall_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub rank: usize,
    pub algorithm: String,
    pub median_final_log_hv_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub problem: String,
    pub algorithm: String,
    pub seed: u64,
    pub iteration: usize,
    pub log_hv_difference: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Loads `file` if given, else the problem's analytic front.
pub fn prepare_reference(id: ProblemId, file: Option<&Path>, reference_value: f64) -> Result<ReferenceFront> {
    let problem = Problem::new(id);
    let front = match file {
        Some(path) => load_reference_front(path)?,
        None => problem.reference_front().ok_or_else(|| {
            anyhow!("{id} has no analytic front; pass --front {id}=<file>")
        })?,
    };
    if front.n_obj() != problem.n_obj() {
        bail!(
            "front for {id} has {} objectives, the problem has {}",
            front.n_obj(),
            problem.n_obj()
        );
    }
    Ok(ReferenceFront::new(front, reference_value)?)
}

pub fn run_dir(root: &Path, problem: ProblemId, label: &str) -> PathBuf {
    root.join(problem.name()).join(label)
}

fn execute_one(job: &Job, reference: &ReferenceFront, root: &Path) -> Result<Finished> {
    let problem = Problem::new(job.problem);
    let outcome = train(&job.config, &problem, reference)
        .with_context(|| format!("{} {} seed {}", job.problem, job.label, job.config.seed))?;
    let dir = run_dir(root, job.problem, &job.label);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = format!("seed-{}", job.config.seed);
    write_atomic(&dir.join(format!("{stem}.csv")), outcome.metrics.to_csv().as_bytes())
        .with_context(|| format!("writing metrics into {}", dir.display()))?;
    outcome
        .checkpoint
        .save(&dir.join(format!("{stem}.checkpoint.json")))
        .with_context(|| format!("writing checkpoint into {}", dir.display()))?;
    let finished = Finished {
        latent_dim: job.config.effective_latent_dim(&problem),
        job: job.clone(),
        metrics: outcome.metrics,
        elapsed: outcome.elapsed,
    };
    log::info!(
        "{} {} seed {}: final log HV difference {:.4} ({:.1}s)",
        job.problem,
        job.label,
        job.config.seed,
        finished.final_log_hv_difference(),
        finished.elapsed
    );
    Ok(finished)
}

/// Runs every job on a pool of `workers` threads. Completed runs keep their
/// files even when others fail; the error then lists every failure.
pub fn execute(
    jobs: &[Job],
    references: &BTreeMap<ProblemId, Arc<ReferenceFront>>,
    root: &Path,
    workers: usize,
) -> Result<Vec<Finished>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let results: Vec<Result<Finished>> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let reference = references
                    .get(&job.problem)
                    .ok_or_else(|| anyhow!("no reference front prepared for {}", job.problem))?;
                execute_one(job, reference, root)
            })
            .collect()
    });
    let mut finished = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(f) => finished.push(f),
            Err(e) => failures.push(format!("{e:#}")),
        }
    }
    if !failures.is_empty() {
        bail!("{} of {} runs failed:\n  {}", failures.len(), jobs.len(), failures.join("\n  "));
    }
    Ok(finished)
}

/// Groups runs by (problem, label) in first-seen order and writes one
/// summary.json per group.
pub fn summarize(finished: &[Finished], root: &Path) -> Result<Vec<GroupSummary>> {
    let mut order: Vec<(ProblemId, String)> = Vec::new();
    let mut groups: BTreeMap<(ProblemId, String), Vec<&Finished>> = BTreeMap::new();
    for f in finished {
        let key = (f.job.problem, f.job.label.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(f);
    }
    let mut summaries = Vec::with_capacity(order.len());
    for key in order {
        let runs = &groups[&key];
        let finals: Vec<f64> = runs.iter().map(|f| f.final_log_hv_difference()).collect();
        let mut sorted = finals.clone();
        sorted.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.75));
        let summary = GroupSummary {
            problem: key.0.name().to_string(),
            algorithm: key.1.clone(),
            latent_dim: runs[0].latent_dim,
            iterations: runs[0].job.config.iterations,
            seeds: runs.iter().map(|f| f.job.config.seed).collect(),
            final_log_hv_difference: finals,
            final_hv_learned: runs
                .iter()
                .map(|f| f.metrics.last().map_or(f64::NAN, |r| r.hv_learned))
                .collect(),
            hv_true: runs[0].metrics.last().map_or(f64::NAN, |r| r.hv_true),
            median: quantile(&sorted, 0.5),
            q1,
            q3,
            iqr: q3 - q1,
            wall_seconds: runs.iter().map(|f| f.elapsed).collect(),
        };
        let path = run_dir(root, key.0, &key.1).join("summary.json");
        write_atomic(&path, serde_json::to_string_pretty(&summary)?.as_bytes())
            .with_context(|| format!("writing {}", path.display()))?;
        summaries.push(summary);
    }
    Ok(summaries)
}

/// Algorithms per problem, best (lowest median) first.
pub fn ranking(summaries: &[GroupSummary]) -> BTreeMap<String, Vec<RankEntry>> {
    let mut by_problem: BTreeMap<String, Vec<&GroupSummary>> = BTreeMap::new();
    for s in summaries {
        by_problem.entry(s.problem.clone()).or_default().push(s);
    }
    by_problem
        .into_iter()
        .map(|(problem, mut group)| {
            group.sort_by(|a, b| a.median.total_cmp(&b.median));
            let entries = group
                .into_iter()
                .enumerate()
                .map(|(i, s)| RankEntry {
                    rank: i + 1,
                    algorithm: s.algorithm.clone(),
                    median_final_log_hv_difference: s.median,
                })
                .collect();
            (problem, entries)
        })
        .collect()
}

pub fn grid_rows(finished: &[Finished]) -> Vec<GridRow> {
    finished
        .iter()
        .flat_map(|f| {
            f.metrics.records.iter().map(move |r| GridRow {
                problem: f.job.problem.name().to_string(),
                algorithm: f.job.label.clone(),
                seed: f.job.config.seed,
                iteration: r.iteration,
                log_hv_difference: r.log_hv_difference,
            })
        })
        .collect()
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        writer.write_record(["problem", "algorithm", "seed", "iteration", "log_hv_difference"])?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| anyhow!("{e}"))?;
    write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct GridSummary<'a> {
    pub groups: &'a [GroupSummary],
    pub ranking: BTreeMap<String, Vec<RankEntry>>,
}

pub fn write_grid_summary(path: &Path, summaries: &[GroupSummary]) -> Result<()> {
    let doc = GridSummary {
        groups: summaries,
        ranking: ranking(summaries),
    };
    write_atomic(path, serde_json::to_string_pretty(&doc)?.as_bytes())
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&xs, 0.5), 2.5);
        assert_eq!(quantile(&xs, 0.25), 1.75);
        assert_eq!(quantile(&xs, 0.75), 3.25);
        assert_eq!(quantile(&[5.0], 0.9), 5.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    fn summary(problem: &str, algorithm: &str, median: f64) -> GroupSummary {
        GroupSummary {
            problem: problem.into(),
            algorithm: algorithm.into(),
            latent_dim: 2,
            iterations: 1,
            seeds: vec![0],
            final_log_hv_difference: vec![median],
            final_hv_learned: vec![0.0],
            hv_true: 1.0,
            median,
            q1: median,
            q3: median,
            iqr: 0.0,
            wall_seconds: vec![0.0],
        }
    }

    #[test]
    fn ranking_orders_by_median() {
        let r = ranking(&[
            summary("zdt3", "psl-ls", -1.0),
            summary("zdt3", "gpsl-g", -5.0),
            summary("dtlz7", "psl-ls", -0.5),
        ]);
        assert_eq!(r["zdt3"][0].algorithm, "gpsl-g");
        assert_eq!(r["zdt3"][1].rank, 2);
        assert_eq!(r["dtlz7"].len(), 1);
    }
}
