//! Training loops, model evaluation and metric logging.
//!
//! GPSL variants maximize the R2 hypervolume approximation of each output
//! batch. Preference-based baselines minimize the batch mean of a
//! scalarization, with preferences drawn from a flat Dirichlet. Both train
//! the same architecture with Adam and are evaluated by the same pathway,
//! differing only in the latent distribution fed to the model.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hv::{exact_hv, nondominated_filter, r2_hv_value_and_subgradient, HvReport, MinMaxNormalizer, ReferencePoint};
use crate::network::{adam_step, init_network, AdamConfig, AdamState, Gradients, NetworkParams};
use crate::problems::{ParetoFrontData, Problem};
use crate::sampling::{das_dennis, default_divisions, DirectionSet, LatentSpec};
use crate::scalarization::{cosmos, hv_scalarization, modified_tchebycheff, tchebycheff, weighted_sum, IdealPoint, Preference, Scalarized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    GpslG,
    GpslL,
    GpslD,
    PslLs,
    PslTch,
    PslMtch,
    Cosmos,
    PslHv,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::GpslG,
        Algorithm::GpslL,
        Algorithm::GpslD,
        Algorithm::PslLs,
        Algorithm::PslTch,
        Algorithm::PslMtch,
        Algorithm::Cosmos,
        Algorithm::PslHv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::GpslG => "gpsl-g",
            Algorithm::GpslL => "gpsl-l",
            Algorithm::GpslD => "gpsl-d",
            Algorithm::PslLs => "psl-ls",
            Algorithm::PslTch => "psl-tch",
            Algorithm::PslMtch => "psl-mtch",
            Algorithm::Cosmos => "cosmos",
            Algorithm::PslHv => "psl-hv",
        }
    }

    pub fn is_gpsl(self) -> bool {
        matches!(self, Algorithm::GpslG | Algorithm::GpslL | Algorithm::GpslD)
    }

    /// The scalarization trained by a preference-based variant.
    pub fn scalarization(self) -> Option<Scalarization> {
        match self {
            Algorithm::PslLs => Some(Scalarization::WeightedSum),
            Algorithm::PslTch => Some(Scalarization::Tchebycheff),
            Algorithm::PslMtch => Some(Scalarization::ModifiedTchebycheff),
            Algorithm::Cosmos => Some(Scalarization::Cosmos),
            Algorithm::PslHv => Some(Scalarization::Hypervolume),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown algorithm '{s}'; valid algorithms: {}",
                    Algorithm::ALL.map(Algorithm::name).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scalarization {
    WeightedSum,
    Tchebycheff,
    ModifiedTchebycheff,
    Cosmos,
    Hypervolume,
}

/// How a batch enters the Monte Carlo hypervolume estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HvEstimate {
    /// One approximation over the whole batch as a set, divided by N.
    BatchAsSet,
    /// Mean of per-sample singleton approximations.
    PerSample,
}

impl FromStr for HvEstimate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch-as-set" => Ok(HvEstimate::BatchAsSet),
            "per-sample" => Ok(HvEstimate::PerSample),
            _ => Err(Error::InvalidArgument(format!(
                "unknown hv estimate '{s}' (expected batch-as-set or per-sample)"
            ))),
        }
    }
}

/// Source of the objective bounds used to normalize during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainNormalization {
    /// Componentwise extremes of the reference front.
    Front,
    /// Running extremes of every objective vector seen so far.
    Running,
    /// Extremes of the current batch only.
    Batch,
}

impl FromStr for TrainNormalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "front" => Ok(TrainNormalization::Front),
            "running" => Ok(TrainNormalization::Running),
            "batch" => Ok(TrainNormalization::Batch),
            _ => Err(Error::InvalidArgument(format!(
                "unknown normalization '{s}' (expected front, running or batch)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub problem: String,
    pub algorithm: Algorithm,
    /// Latent dimension k; `None` picks d for gpsl-g/gpsl-l and m otherwise.
    pub latent_dim: Option<usize>,
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub hidden: Vec<usize>,
    /// Das–Dennis divisions; `None` picks the smallest H with >= 100 directions.
    pub dirs_h: Option<usize>,
    pub eval_n: usize,
    pub eval_interval: usize,
    pub eval_seed: u64,
    pub hv_estimate: HvEstimate,
    pub normalization: TrainNormalization,
    pub reference_value: f64,
    pub tch_epsilon: f64,
    pub cosmos_gamma: f64,
    pub dirichlet_alpha: f64,
    /// Record wall-clock seconds in the metrics. Off by default so repeated
    /// runs produce identical logs.
    pub wall_clock: bool,
}

impl TrainConfig {
    pub fn new(problem: impl Into<String>, algorithm: Algorithm) -> Self {
        TrainConfig {
            problem: problem.into(),
            algorithm,
            latent_dim: None,
            iterations: 1000,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
            hidden: vec![256, 256],
            dirs_h: None,
            eval_n: 1000,
            eval_interval: 10,
            eval_seed: 20_240_901,
            hv_estimate: HvEstimate::BatchAsSet,
            normalization: TrainNormalization::Front,
            reference_value: 1.1,
            tch_epsilon: IdealPoint::DEFAULT_EPSILON,
            cosmos_gamma: 1.0,
            dirichlet_alpha: 1.0,
            wall_clock: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("iterations", self.iterations),
            ("batch_size", self.batch_size),
            ("eval_n", self.eval_n),
            ("eval_interval", self.eval_interval),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if self.latent_dim == Some(0) {
            return Err(Error::InvalidArgument("latent_dim must be at least 1".into()));
        }
        if self.dirs_h == Some(0) {
            return Err(Error::InvalidArgument("dirs_h must be at least 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer sizes must be positive".into()));
        }
        if !(self.reference_value > 1.0) {
            return Err(Error::InvalidArgument("reference_value must exceed 1".into()));
        }
        Ok(())
    }

    /// The latent dimension actually used for `problem`.
    pub fn effective_latent_dim(&self, problem: &Problem) -> usize {
        match self.algorithm {
            Algorithm::GpslG | Algorithm::GpslL => self.latent_dim.unwrap_or(problem.n_var()),
            Algorithm::GpslD => self.latent_dim.unwrap_or(problem.n_obj()),
            _ => problem.n_obj(),
        }
    }

    /// The initial distribution for `problem`.
    ///
    /// Gaussian and LHS latents borrow the problem's box coordinates
    /// cyclically when k differs from d. Preference baselines always sample
    /// a flat Dirichlet over m coordinates.
    pub fn latent_spec(&self, problem: &Problem) -> LatentSpec {
        let k = self.effective_latent_dim(problem);
        let d = problem.n_var();
        match self.algorithm {
            Algorithm::GpslG => {
                let center = problem.center();
                LatentSpec::Gaussian {
                    center: (0..k).map(|i| center[i % d]).collect(),
                }
            }
            Algorithm::GpslL => LatentSpec::Lhs {
                lower: (0..k).map(|i| problem.lower()[i % d]).collect(),
                upper: (0..k).map(|i| problem.upper()[i % d]).collect(),
            },
            Algorithm::GpslD => LatentSpec::Dirichlet {
                dim: k,
                alpha: self.dirichlet_alpha,
            },
            _ => LatentSpec::Dirichlet {
                dim: problem.n_obj(),
                alpha: 1.0,
            },
        }
    }

    pub fn layer_sizes(&self, problem: &Problem) -> Vec<usize> {
        let mut sizes = vec![self.effective_latent_dim(problem)];
        sizes.extend(&self.hidden);
        sizes.push(problem.n_var());
        sizes
    }

    pub fn directions(&self, m: usize) -> Result<DirectionSet> {
        das_dennis(m, self.dirs_h.unwrap_or_else(|| default_divisions(m)))
    }
}

/// Seeds derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub run: u64,
    pub init: u64,
    pub sampling: u64,
    pub eval: u64,
}

impl SeedLineage {
    pub fn new(run: u64, eval: u64) -> Self {
        SeedLineage {
            run,
            init: splitmix(run, 1),
            sampling: splitmix(run, 2),
            eval,
        }
    }
}

fn splitmix(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub loss: f64,
    pub hv_learned: f64,
    pub hv_true: f64,
    pub log_hv_difference: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub const HEADER: &'static str = "iteration,loss,hv_learned,hv_true,log_hv_difference,seconds";

    pub fn push(&mut self, record: MetricsRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.iteration < record.iteration));
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn first(&self) -> Option<&MetricsRecord> {
        self.records.first()
    }

    /// Shortest round-trip decimal for every float.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            writer.serialize(r).expect("in-memory csv write");
        }
        if self.records.is_empty() {
            writer.write_record(Self::HEADER.split(',')).expect("in-memory csv write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
        if header.iter().collect::<Vec<_>>().join(",") != Self::HEADER {
            return Err(csv_error("unexpected metrics header", 1));
        }
        let mut log = MetricsLog::default();
        for (idx, row) in reader.deserialize().enumerate() {
            log.records.push(row.map_err(|e| csv_error(e, idx + 2))?);
        }
        Ok(log)
    }
}

fn csv_error(e: impl fmt::Display, line: usize) -> Error {
    Error::Parse {
        path: "<metrics>".into(),
        line,
        message: e.to_string(),
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// A reference front prepared for scoring: normalization bounds, the
/// reference point in normalized space and the front's own hypervolume.
///
/// Build it once per problem and share it across runs.
#[derive(Debug, Clone)]
pub struct ReferenceFront {
    front: ParetoFrontData,
    normalizer: MinMaxNormalizer,
    reference: ReferencePoint,
    hv_true: f64,
}

impl ReferenceFront {
    pub fn new(front: ParetoFrontData, reference_value: f64) -> Result<Self> {
        let (lo, hi) = front.extremes();
        let normalizer = MinMaxNormalizer::new(lo, hi);
        let reference = ReferencePoint::uniform(front.n_obj(), reference_value);
        let hv_true = exact_hv(&normalizer.apply_all(&front.points), &reference)?;
        Ok(ReferenceFront {
            front,
            normalizer,
            reference,
            hv_true,
        })
    }

    pub fn front(&self) -> &ParetoFrontData {
        &self.front
    }

    pub fn n_obj(&self) -> usize {
        self.front.n_obj()
    }

    pub fn hv_true(&self) -> f64 {
        self.hv_true
    }

    pub fn normalizer(&self) -> &MinMaxNormalizer {
        &self.normalizer
    }

    pub fn reference(&self) -> &ReferencePoint {
        &self.reference
    }

    pub fn reference_value(&self) -> f64 {
        self.reference[0]
    }
}

/// Algorithm-independent scoring of a trained model.
///
/// Objectives are min-max normalized with the reference front's extremes and
/// measured against the reference point in that space. The evaluation
/// latents are drawn once from a fixed seed.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    problem: &'a Problem,
    latent: Array2<f64>,
    reference: &'a ReferenceFront,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        problem: &'a Problem,
        latent: &LatentSpec,
        n_eval: usize,
        reference: &'a ReferenceFront,
        seed: u64,
    ) -> Result<Self> {
        if reference.n_obj() != problem.n_obj() {
            return Err(Error::DimensionMismatch {
                expected: problem.n_obj(),
                found: reference.n_obj(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latent = latent.draw(&mut rng, n_eval)?.samples;
        Ok(Evaluator {
            problem,
            latent,
            reference,
        })
    }

    /// Normalized objective vectors the model produces for the evaluation
    /// latents.
    pub fn learned_objectives(&self, params: &NetworkParams) -> Result<Vec<Vec<f64>>> {
        let (x, _) = params.forward_batch(&self.latent, self.problem.lower(), self.problem.upper())?;
        x.rows()
            .into_iter()
            .map(|row| {
                let y = self.problem.evaluate(row.as_slice().expect("contiguous rows"))?;
                Ok(self.reference.normalizer().apply(&y))
            })
            .collect()
    }

    pub fn evaluate(&self, params: &NetworkParams) -> Result<HvReport> {
        let ys = nondominated_filter(&self.learned_objectives(params)?)?;
        let hv_learned = exact_hv(&ys, self.reference.reference())?;
        HvReport::new(self.reference.hv_true(), hv_learned)
    }
}

/// One-shot evaluation of `params` against `front`.
pub fn evaluate_model(
    params: &NetworkParams,
    problem: &Problem,
    latent: &LatentSpec,
    n_eval: usize,
    reference_value: f64,
    front: &ParetoFrontData,
    seed: u64,
) -> Result<HvReport> {
    let reference = ReferenceFront::new(front.clone(), reference_value)?;
    Evaluator::new(problem, latent, n_eval, &reference, seed)?.evaluate(params)
}

/// Componentwise extremes of every objective vector seen in training. The
/// lower half is the running ideal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningExtremes {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl RunningExtremes {
    pub fn new(m: usize) -> Self {
        RunningExtremes {
            lower: vec![f64::INFINITY; m],
            upper: vec![f64::NEG_INFINITY; m],
        }
    }

    pub fn update(&mut self, ys: &[Vec<f64>]) {
        for y in ys {
            for i in 0..y.len() {
                self.lower[i] = self.lower[i].min(y[i]);
                self.upper[i] = self.upper[i].max(y[i]);
            }
        }
    }

    pub fn normalizer(&self) -> MinMaxNormalizer {
        MinMaxNormalizer::new(self.lower.clone(), self.upper.clone())
    }
}

/// Everything needed to resume or re-evaluate a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub seeds: SeedLineage,
    pub params: NetworkParams,
    pub adam: AdamState,
    pub extremes: RunningExtremes,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: MetricsLog,
    /// Training loss at every iteration.
    pub losses: Vec<f64>,
    /// Total wall-clock seconds, always measured.
    pub elapsed: f64,
}

impl TrainOutcome {
    pub fn params(&self) -> &NetworkParams {
        &self.checkpoint.params
    }
}

/// Loss value and ∂loss/∂y (normalized objectives) for one batch.
struct BatchLoss {
    value: f64,
    grad: Vec<Vec<f64>>,
}

trait LossModel {
    /// `ideal` is the running ideal point in the same normalized space as
    /// `normalized`.
    fn batch_loss(&mut self, latent: &Array2<f64>, normalized: &[Vec<f64>], ideal: &IdealPoint) -> BatchLoss;
}

struct HypervolumeLoss {
    dirs: DirectionSet,
    reference: Vec<f64>,
    estimate: HvEstimate,
}

impl HypervolumeLoss {
    /// Pulls points that are not strictly inside the reference box back
    /// toward it along the diagonal; the R2 term gives them no gradient.
    fn add_box_entry(&self, ys: &[Vec<f64>], loss: &mut BatchLoss) {
        let n = ys.len() as f64;
        let diagonal = vec![1.0 / (self.reference.len() as f64).sqrt(); self.reference.len()];
        for (y, g) in ys.iter().zip(loss.grad.iter_mut()) {
            let h = hv_scalarization(y, &diagonal, &self.reference);
            if h.outside {
                loss.value -= h.s / n;
                for (gi, hi) in g.iter_mut().zip(&h.grad) {
                    *gi -= hi / n;
                }
            }
        }
    }

    fn r2_loss(&self, ys: &[Vec<f64>]) -> BatchLoss {
        let n = ys.len() as f64;
        match self.estimate {
            HvEstimate::BatchAsSet => {
                let (hv, grad) = r2_hv_value_and_subgradient(ys, &self.reference, &self.dirs);
                BatchLoss {
                    value: -hv / n,
                    grad: grad
                        .into_iter()
                        .map(|g| g.into_iter().map(|v| -v / n).collect())
                        .collect(),
                }
            }
            HvEstimate::PerSample => {
                let mut value = 0.0;
                let mut grad = Vec::with_capacity(ys.len());
                for y in ys {
                    let (hv, g) = r2_hv_value_and_subgradient(std::slice::from_ref(y), &self.reference, &self.dirs);
                    value -= hv / n;
                    grad.push(g[0].iter().map(|v| -v / n).collect());
                }
                BatchLoss { value, grad }
            }
        }
    }
}

impl LossModel for HypervolumeLoss {
    fn batch_loss(&mut self, _latent: &Array2<f64>, ys: &[Vec<f64>], _ideal: &IdealPoint) -> BatchLoss {
        let mut loss = self.r2_loss(ys);
        self.add_box_entry(ys, &mut loss);
        loss
    }
}

struct PreferenceLoss {
    kind: Scalarization,
    reference: Vec<f64>,
    gamma: f64,
}

impl PreferenceLoss {
    fn single(&self, y: &[f64], p: &[f64], ideal: &IdealPoint) -> Scalarized {
        match self.kind {
            Scalarization::WeightedSum => weighted_sum(y, p),
            Scalarization::Tchebycheff => tchebycheff(y, p, ideal),
            Scalarization::ModifiedTchebycheff => modified_tchebycheff(y, p, ideal),
            Scalarization::Cosmos => cosmos(y, p, self.gamma),
            Scalarization::Hypervolume => {
                let direction = Preference::new(p.to_vec())
                    .map(|pref| pref.direction())
                    .unwrap_or_else(|_| p.to_vec());
                hv_scalarization(y, &direction, &self.reference).loss()
            }
        }
    }
}

impl LossModel for PreferenceLoss {
    fn batch_loss(&mut self, latent: &Array2<f64>, ys: &[Vec<f64>], ideal: &IdealPoint) -> BatchLoss {
        let n = ys.len() as f64;
        let mut value = 0.0;
        let mut grad = Vec::with_capacity(ys.len());
        for (y, p) in ys.iter().zip(latent.rows()) {
            let s = self.single(y, p.as_slice().expect("contiguous rows"), ideal);
            value += s.value / n;
            grad.push(s.grad.into_iter().map(|g| g / n).collect());
        }
        BatchLoss { value, grad }
    }
}

/// Trains with the algorithm named in `config`.
pub fn train(config: &TrainConfig, problem: &Problem, reference: &ReferenceFront) -> Result<TrainOutcome> {
    match config.algorithm.scalarization() {
        None => train_gpsl(config, problem, reference),
        Some(kind) => train_preference_psl(config, problem, reference, kind),
    }
}

pub fn train_gpsl(config: &TrainConfig, problem: &Problem, reference: &ReferenceFront) -> Result<TrainOutcome> {
    if !config.algorithm.is_gpsl() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a GPSL variant",
            config.algorithm
        )));
    }
    run_loop(config, problem, reference, loss_model(config, problem)?.as_mut())
}

/// Trains a preference-based baseline with the scalarization `kind`, which
/// may differ from the one the algorithm tag names.
pub fn train_preference_psl(
    config: &TrainConfig,
    problem: &Problem,
    reference: &ReferenceFront,
    kind: Scalarization,
) -> Result<TrainOutcome> {
    if config.algorithm.is_gpsl() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a preference-based variant",
            config.algorithm
        )));
    }
    let mut loss = PreferenceLoss {
        kind,
        reference: vec![config.reference_value; problem.n_obj()],
        gamma: config.cosmos_gamma,
    };
    run_loop(config, problem, reference, &mut loss)
}

/// Loss, parameter gradient and raw objectives of one batch.
#[derive(Debug, Clone)]
pub struct Step {
    pub loss: f64,
    pub gradients: Gradients,
    pub objectives: Vec<Vec<f64>>,
}

/// Computes one training step for `batch` without touching the parameters.
///
/// `extremes` are the running objective extremes before this batch; they
/// are updated with the batch's objectives exactly as training would.
pub fn loss_and_gradient(
    config: &TrainConfig,
    problem: &Problem,
    reference: &ReferenceFront,
    params: &NetworkParams,
    batch: &Array2<f64>,
    extremes: &RunningExtremes,
) -> Result<Step> {
    let mut loss = loss_model(config, problem)?;
    let mut extremes = extremes.clone();
    step(loss.as_mut(), config, problem, reference, params, batch, &mut extremes)
}

fn loss_model(config: &TrainConfig, problem: &Problem) -> Result<Box<dyn LossModel>> {
    let reference = vec![config.reference_value; problem.n_obj()];
    Ok(match config.algorithm.scalarization() {
        None => Box::new(HypervolumeLoss {
            dirs: config.directions(problem.n_obj())?,
            reference,
            estimate: config.hv_estimate,
        }),
        Some(kind) => Box::new(PreferenceLoss {
            kind,
            reference,
            gamma: config.cosmos_gamma,
        }),
    })
}

fn step(
    loss_model: &mut dyn LossModel,
    config: &TrainConfig,
    problem: &Problem,
    reference: &ReferenceFront,
    params: &NetworkParams,
    batch: &Array2<f64>,
    extremes: &mut RunningExtremes,
) -> Result<Step> {
    let (m, d) = (problem.n_obj(), problem.n_var());
    let (x, cache) = params.forward_batch(batch, problem.lower(), problem.upper())?;
    let mut ys = Vec::with_capacity(batch.nrows());
    let mut jacobians = Vec::with_capacity(batch.nrows());
    for row in x.rows() {
        let xi = row.as_slice().expect("contiguous rows");
        ys.push(problem.evaluate(xi)?);
        jacobians.push(problem.jacobian(xi)?);
    }
    extremes.update(&ys);
    let normalizer = match config.normalization {
        TrainNormalization::Front => reference.normalizer().clone(),
        TrainNormalization::Running => extremes.normalizer(),
        TrainNormalization::Batch => {
            let mut local = RunningExtremes::new(m);
            local.update(&ys);
            local.normalizer()
        }
    };
    let normalized = normalizer.apply_all(&ys);
    let ideal = IdealPoint::new(normalizer.apply(&extremes.lower), config.tch_epsilon);
    let BatchLoss { value, grad } = loss_model.batch_loss(batch, &normalized, &ideal);

    // Chain rule: ∂L/∂x = Jᵀ (∂L/∂y_normalized / scale).
    let mut upstream = Array2::zeros((batch.nrows(), d));
    for (n, (g, jac)) in grad.iter().zip(&jacobians).enumerate() {
        for i in 0..m {
            let gi = g[i] / normalizer.scale(i);
            if gi == 0.0 {
                continue;
            }
            for j in 0..d {
                upstream[[n, j]] += gi * jac[[i, j]];
            }
        }
    }
    Ok(Step {
        loss: value,
        gradients: params.backward(&cache, &upstream)?,
        objectives: ys,
    })
}

fn run_loop(
    config: &TrainConfig,
    problem: &Problem,
    reference: &ReferenceFront,
    loss_model: &mut dyn LossModel,
) -> Result<TrainOutcome> {
    config.validate()?;
    let started = Instant::now();
    let seeds = SeedLineage::new(config.seed, config.eval_seed);
    let latent = config.latent_spec(problem);
    let mut params = init_network(&config.layer_sizes(problem), seeds.init)?;
    let mut adam = AdamState::new(&params, config.adam);
    if reference.reference_value() != config.reference_value {
        return Err(Error::InvalidArgument(format!(
            "reference front was prepared with r = {}, config asks for {}",
            reference.reference_value(),
            config.reference_value
        )));
    }
    let evaluator = Evaluator::new(problem, &latent, config.eval_n, reference, seeds.eval)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.sampling);
    let mut extremes = RunningExtremes::new(problem.n_obj());
    let mut metrics = MetricsLog::default();
    let mut losses = Vec::with_capacity(config.iterations);

    for iteration in 1..=config.iterations {
        let batch = latent.draw(&mut rng, config.batch_size)?.samples;
        let Step {
            loss: value,
            gradients: grads,
            ..
        } = step(loss_model, config, problem, reference, &params, &batch, &mut extremes)?;
        if !value.is_finite() {
            return Err(Error::Diverged {
                iteration,
                snapshot: Box::new(params),
            });
        }
        losses.push(value);
        adam_step(&mut params, &grads, &mut adam)?;

        if iteration == 1 || iteration % config.eval_interval == 0 || iteration == config.iterations {
            let report = evaluator.evaluate(&params)?;
            metrics.push(MetricsRecord {
                iteration,
                loss: value,
                hv_learned: report.hv_learned,
                hv_true: report.hv_true,
                log_hv_difference: report.log_hv_difference,
                seconds: if config.wall_clock {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
            log::debug!(
                "{} {} seed {} iter {iteration}: loss {value:.6} log HV diff {:.4}",
                config.problem,
                config.algorithm,
                config.seed,
                report.log_hv_difference
            );
        }
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: config.clone(),
            seeds,
            params,
            adam,
            extremes,
        },
        metrics,
        losses,
        elapsed: started.elapsed().as_secs_f64(),
    })
}
