//! Flag and config-file settings, merged into a resolved run specification.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use gpsl_core::problems::ProblemId;
use gpsl_core::trainer::{Algorithm, HvEstimate, TrainConfig, TrainNormalization};

pub const OUT_ENV: &str = "GPSL_OUT";
pub const DEFAULT_OUT: &str = "gpsl-out";

/// A bad name or missing required setting; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

/// Settings shared by every verb. Each one may also appear in a config file
/// as `key = value`, where the key is the flag name without dashes
/// (`eval-n` or `eval_n`). Flags win over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// Problem name, or a comma-separated list for grid verbs.
    #[arg(long)]
    pub problem: Option<String>,
    /// Algorithm name, or a comma-separated list for grid verbs.
    #[arg(long)]
    pub algo: Option<String>,
    /// A count N (seeds 0..N-1), an inclusive range `a..=b`, a half-open
    /// range `a..b`, or a comma-separated list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Training iterations T.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Batch size N.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Latent dimension k.
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Das–Dennis divisions H.
    #[arg(long)]
    pub dirs_h: Option<usize>,
    /// Output root; defaults to $GPSL_OUT, then ./gpsl-out.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Latent samples per evaluation.
    #[arg(long)]
    pub eval_n: Option<usize>,
    /// Iterations between metric rows.
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// Reference front file, or `problem=path`; repeatable.
    #[arg(long)]
    pub front: Vec<String>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden layer widths, comma-separated.
    #[arg(long)]
    pub hidden: Option<String>,
    /// batch-as-set or per-sample.
    #[arg(long)]
    pub hv_estimate: Option<String>,
    /// front, running or batch.
    #[arg(long)]
    pub normalization: Option<String>,
    /// Reference point coordinate in normalized objective space.
    #[arg(long)]
    pub reference: Option<f64>,
    #[arg(long)]
    pub tch_epsilon: Option<f64>,
    #[arg(long)]
    pub cosmos_gamma: Option<f64>,
    #[arg(long)]
    pub dirichlet_alpha: Option<f64>,
    /// Record wall-clock seconds in metrics CSVs (breaks byte-identical reruns).
    #[arg(long)]
    pub wall_clock: bool,
    /// Worker threads for grid runs; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub const CONFIG_KEYS: &[&str] = &[
    "problem",
    "algo",
    "seeds",
    "iters",
    "batch",
    "latent_dim",
    "dirs_h",
    "out",
    "eval_n",
    "eval_interval",
    "eval_seed",
    "front",
    "lr",
    "hidden",
    "hv_estimate",
    "normalization",
    "reference",
    "tch_epsilon",
    "cosmos_gamma",
    "dirichlet_alpha",
    "wall_clock",
    "jobs",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value '{value}' for {key}: {e}"))
}

impl Settings {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.to_string();
        match key {
            "problem" => self.problem = Some(v),
            "algo" => self.algo = Some(v),
            "seeds" => self.seeds = Some(v),
            "iters" => self.iters = Some(parse(key, value)?),
            "batch" => self.batch = Some(parse(key, value)?),
            "latent_dim" => self.latent_dim = Some(parse(key, value)?),
            "dirs_h" => self.dirs_h = Some(parse(key, value)?),
            "out" => self.out = Some(v.into()),
            "eval_n" => self.eval_n = Some(parse(key, value)?),
            "eval_interval" => self.eval_interval = Some(parse(key, value)?),
            "eval_seed" => self.eval_seed = Some(parse(key, value)?),
            "front" => self.front.push(v),
            "lr" => self.lr = Some(parse(key, value)?),
            "hidden" => self.hidden = Some(v),
            "hv_estimate" => self.hv_estimate = Some(v),
            "normalization" => self.normalization = Some(v),
            "reference" => self.reference = Some(parse(key, value)?),
            "tch_epsilon" => self.tch_epsilon = Some(parse(key, value)?),
            "cosmos_gamma" => self.cosmos_gamma = Some(parse(key, value)?),
            "dirichlet_alpha" => self.dirichlet_alpha = Some(parse(key, value)?),
            "wall_clock" => self.wall_clock = parse(key, value)?,
            "jobs" => self.jobs = Some(parse(key, value)?),
            _ => bail!("unknown key '{key}'; valid keys: {}", CONFIG_KEYS.join(", ")),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. Blank lines and `#` comments are
    /// skipped.
    pub fn from_config_text(text: &str, origin: &Path) -> Result<Self> {
        let mut settings = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("{}:{}: expected key = value", origin.display(), idx + 1)))?;
            let key = key.trim().replace('-', "_");
            settings
                .set(&key, value.trim())
                .map_err(|e| usage(format!("{}:{}: {e:#}", origin.display(), idx + 1)))?;
        }
        Ok(settings)
    }

    /// Fields set in `self` win over `base`.
    pub fn over(self, base: Settings) -> Settings {
        Settings {
            problem: self.problem.or(base.problem),
            algo: self.algo.or(base.algo),
            seeds: self.seeds.or(base.seeds),
            iters: self.iters.or(base.iters),
            batch: self.batch.or(base.batch),
            latent_dim: self.latent_dim.or(base.latent_dim),
            dirs_h: self.dirs_h.or(base.dirs_h),
            out: self.out.or(base.out),
            config: self.config.or(base.config),
            eval_n: self.eval_n.or(base.eval_n),
            eval_interval: self.eval_interval.or(base.eval_interval),
            eval_seed: self.eval_seed.or(base.eval_seed),
            front: if self.front.is_empty() { base.front } else { self.front },
            lr: self.lr.or(base.lr),
            hidden: self.hidden.or(base.hidden),
            hv_estimate: self.hv_estimate.or(base.hv_estimate),
            normalization: self.normalization.or(base.normalization),
            reference: self.reference.or(base.reference),
            tch_epsilon: self.tch_epsilon.or(base.tch_epsilon),
            cosmos_gamma: self.cosmos_gamma.or(base.cosmos_gamma),
            dirichlet_alpha: self.dirichlet_alpha.or(base.dirichlet_alpha),
            wall_clock: self.wall_clock || base.wall_clock,
            jobs: self.jobs.or(base.jobs),
        }
    }

    /// Loads the config file named by `--config`, if any, under these flags.
    pub fn with_config_file(self) -> Result<Settings> {
        match &self.config {
            None => Ok(self),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let file = Settings::from_config_text(&text, path)?;
                Ok(self.over(file))
            }
        }
    }

    pub fn problems(&self, default: &[ProblemId]) -> Result<Vec<ProblemId>> {
        match &self.problem {
            None if default.is_empty() => Err(usage(format!(
                "--problem is required; valid problems: {}",
                ProblemId::ALL.map(ProblemId::name).join(", ")
            ))),
            None => Ok(default.to_vec()),
            Some(list) => split_list(list)
                .map(|name| name.parse().map_err(|e| usage(format!("{e}"))))
                .collect(),
        }
    }

    pub fn algorithms(&self, default: &[Algorithm]) -> Result<Vec<Algorithm>> {
        match &self.algo {
            None if default.is_empty() => Err(usage(format!(
                "--algo is required; valid algorithms: {}",
                Algorithm::ALL.map(Algorithm::name).join(", ")
            ))),
            None => Ok(default.to_vec()),
            Some(list) => split_list(list)
                .map(|name| name.parse().map_err(|e| usage(format!("{e}"))))
                .collect(),
        }
    }

    /// Seeds default to 0..=10.
    pub fn seed_list(&self) -> Result<Vec<u64>> {
        parse_seeds(self.seeds.as_deref().unwrap_or("11"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }

    /// Reference front file per problem. A bare path applies to every
    /// requested problem.
    pub fn front_files(&self, problems: &[ProblemId]) -> Result<BTreeMap<ProblemId, PathBuf>> {
        let mut map = BTreeMap::new();
        for entry in &self.front {
            match entry.split_once('=') {
                Some((name, path)) => {
                    let id: ProblemId = name.trim().parse().map_err(|e| usage(format!("{e}")))?;
                    map.insert(id, PathBuf::from(path.trim()));
                }
                None => {
                    if problems.len() != 1 {
                        return Err(usage(format!(
                            "--front {entry} is ambiguous with several problems; use problem=path"
                        )));
                    }
                    map.insert(problems[0], PathBuf::from(entry));
                }
            }
        }
        Ok(map)
    }

    /// Applies every training setting to `config`.
    pub fn apply(&self, config: &mut TrainConfig) -> Result<()> {
        if let Some(v) = self.iters {
            config.iterations = v;
        }
        if let Some(v) = self.batch {
            config.batch_size = v;
        }
        if self.latent_dim.is_some() {
            config.latent_dim = self.latent_dim;
        }
        if self.dirs_h.is_some() {
            config.dirs_h = self.dirs_h;
        }
        if let Some(v) = self.eval_n {
            config.eval_n = v;
        }
        if let Some(v) = self.eval_interval {
            config.eval_interval = v;
        }
        if let Some(v) = self.eval_seed {
            config.eval_seed = v;
        }
        if let Some(v) = self.lr {
            config.adam.learning_rate = v;
        }
        if let Some(h) = &self.hidden {
            config.hidden = split_list(h)
                .map(|w| parse("hidden", w))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = &self.hv_estimate {
            config.hv_estimate = v.parse::<HvEstimate>()?;
        }
        if let Some(v) = &self.normalization {
            config.normalization = v.parse::<TrainNormalization>()?;
        }
        if let Some(v) = self.reference {
            config.reference_value = v;
        }
        if let Some(v) = self.tch_epsilon {
            config.tch_epsilon = v;
        }
        if let Some(v) = self.cosmos_gamma {
            config.cosmos_gamma = v;
        }
        if let Some(v) = self.dirichlet_alpha {
            config.dirichlet_alpha = v;
        }
        config.wall_clock = self.wall_clock;
        config.validate()?;
        Ok(())
    }
}

fn split_list(list: &str) -> impl Iterator<Item = &str> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty())
}

pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..=") {
        (parse::<u64>("seeds", a.trim())?..=parse("seeds", b.trim())?).collect()
    } else if let Some((a, b)) = text.split_once("..") {
        (parse::<u64>("seeds", a.trim())?..parse("seeds", b.trim())?).collect()
    } else if text.contains(',') {
        split_list(text)
            .map(|s| parse("seeds", s))
            .collect::<Result<_>>()?
    } else {
        (0..parse::<u64>("seeds", text)?).collect()
    };
    if seeds.is_empty() {
        bail!("seed selection '{text}' is empty");
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        bail!("seed selection '{text}' repeats a seed");
    }
    Ok(seeds)
}
