//! Paired-training protocol: seeds, training, evaluation and aggregation.

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::datagen::{Example, Truth, TruthKind};
use crate::error::{Error, Result};
use crate::metrics::{diff_cosine, excess_label_loss, relative_pd, EvalSet};
use crate::nnet::{checkpoint, ArchKind, ArchitectureSpec, GradientSet, Network, Workspace};
use crate::optim::{self, OptimizerConfig, OptimizerState};
use crate::rng::{derive_seed, derived_stream, stream, Purpose};
use crate::scalar::Scalar;
use crate::stream::{derive_pair_seeds, windowed_stream, InitMode, PairSeeds, StreamConfig};

pub const DEFAULT_PAIRS: usize = 8;
pub const DESK_EVAL: usize = 1 << 13;
pub const FULL_EVAL: usize = 1 << 16;
pub const DEFAULT_TEACHER_LR_RATIO: f64 = 0.1;
pub const DEFAULT_STUCK_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(Precision::F32),
            "f64" => Some(Precision::F64),
            _ => None,
        }
    }
}

/// Transfer-learning setup: pairs start from a teacher's parameters and
/// train with a reduced learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    /// Pretrained teacher; when absent one is trained on a dedicated stream.
    pub checkpoint: Option<PathBuf>,
    pub lr_ratio: f64,
}

impl Default for WarmStart {
    fn default() -> Self {
        WarmStart {
            checkpoint: None,
            lr_ratio: DEFAULT_TEACHER_LR_RATIO,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub truth_kind: TruthKind,
    /// Pinned truth; otherwise one is sampled from the master seed.
    pub truth_file: Option<PathBuf>,
    pub architecture: ArchitectureSpec,
    pub optimizer: OptimizerConfig,
    pub stream: StreamConfig,
    /// Number of pairs, `M/2`.
    pub pairs: usize,
    pub init_mode: InitMode,
    pub eval_size: usize,
    pub emulate_batch_nondeterminism: bool,
    pub precision: Precision,
    pub warm_start: Option<WarmStart>,
    /// A pair is flagged stuck when a member's excess loss exceeds this
    /// multiple of the experiment median.
    pub stuck_factor: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            truth_kind: TruthKind::Linear,
            truth_file: None,
            architecture: ArchitectureSpec::linear(),
            optimizer: OptimizerConfig::default(),
            stream: StreamConfig::default(),
            pairs: DEFAULT_PAIRS,
            init_mode: InitMode::Identical,
            eval_size: DESK_EVAL,
            emulate_batch_nondeterminism: false,
            precision: Precision::F64,
            warm_start: None,
            stuck_factor: DEFAULT_STUCK_FACTOR,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        self.optimizer.validate()?;
        self.stream.validate()?;
        if self.pairs == 0 {
            return Err(Error::invalid("harness.pairs", "must be positive"));
        }
        if self.eval_size == 0 {
            return Err(Error::invalid("data.eval_size", "must be positive"));
        }
        if let Some(w) = &self.warm_start {
            if !(w.lr_ratio > 0.0 && w.lr_ratio.is_finite()) {
                return Err(Error::invalid("harness.teacher_lr_ratio", "must be positive"));
            }
        }
        if !(self.stuck_factor > 1.0) {
            return Err(Error::invalid("harness.stuck_factor", "must exceed 1"));
        }
        Ok(())
    }

    /// Legend label: activation and hidden units, then `diff` for distinct
    /// initialization and `TL` for warm starts.
    pub fn label(&self) -> String {
        let mut l = self.architecture.label();
        if self.init_mode == InitMode::Distinct {
            l.push_str(" diff");
        }
        if self.warm_start.is_some() {
            l.push_str(" TL");
        }
        l
    }

    pub fn with_log2_z(mut self, log2_z: u32) -> Self {
        self.stream.log2_z = log2_z;
        self
    }

    /// The experiment's single ground truth.
    pub fn truth(&self) -> Result<Truth> {
        let truth = match &self.truth_file {
            Some(path) => Truth::load(path)?,
            None => Truth::sample(
                self.truth_kind,
                &mut derived_stream(self.stream.master_seed, Purpose::Truth, 0),
            ),
        };
        if truth.kind() != self.truth_kind {
            return Err(Error::invalid(
                "data.truth_file",
                format!(
                    "file holds a {} truth, config asks for {}",
                    truth.kind().as_str(),
                    self.truth_kind.as_str()
                ),
            ));
        }
        Ok(truth)
    }
}

/// Result of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub pair_index: usize,
    pub seeds: PairSeeds,
    pub excess_loss_a: f64,
    pub excess_loss_b: f64,
    pub relative_pd: f64,
    /// Cosine of the two members' first-layer offsets from the true
    /// weights; only defined for linear models on linear data.
    pub diff_cosine: Option<f64>,
    pub stuck: bool,
    pub warm_start: bool,
}

impl PairReport {
    pub fn mean_loss(&self) -> f64 {
        0.5 * (self.excess_loss_a + self.excess_loss_b)
    }
}

/// Aggregate over the completed pairs of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variant: String,
    pub log2_z: u32,
    pub mean_pd: f64,
    pub se_pd: f64,
    pub mean_loss: f64,
    pub se_loss: f64,
    pub completed: usize,
    pub stuck: usize,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub row: SweepRow,
    /// Completed pairs in pair-index order.
    pub pairs: Vec<PairReport>,
    pub failures: Vec<(usize, String)>,
    /// Trained members per completed pair, widened to `f64` (exact for
    /// `f32` runs).
    pub networks: Vec<(Network<f64>, Network<f64>)>,
    pub teacher: Option<Network<f64>>,
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`,
/// zero for fewer than two values).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

const FINITE_CHECK_EVERY: u64 = 64;

/// One pass over `batches`, one optimizer step per mini-batch on the mean
/// batch gradient. With `emul_seed` set, each mini-batch is permuted before
/// its per-example gradients are accumulated.
pub fn train_single<S, I>(
    mut net: Network<S>,
    optimizer: &OptimizerConfig,
    batches: I,
    emul_seed: Option<u64>,
) -> Result<Network<S>>
where
    S: Scalar,
    I: IntoIterator<Item = Vec<Example>>,
{
    let mut state = OptimizerState::for_network(&net, optimizer);
    let mut ws = Workspace::new();
    let mut grad = GradientSet::zeros(net.param_count());
    let mut emul = emul_seed.map(stream);
    for mut batch in batches {
        if let Some(rng) = emul.as_mut() {
            batch.shuffle(rng);
        }
        net.batch_gradient(&mut ws, &batch, &mut grad)?;
        optim::step(&mut state, &mut net, &grad, optimizer)?;
        if state.step_count() % FINITE_CHECK_EVERY == 0 {
            check_finite(&net, state.step_count())?;
        }
    }
    check_finite(&net, state.step_count())?;
    Ok(net)
}

fn check_finite<S: Scalar>(net: &Network<S>, step: u64) -> Result<()> {
    match net.first_non_finite() {
        Some(index) => Err(Error::NonFinite { index, step }),
        None => Ok(()),
    }
}

/// Everything shared by the pairs of one experiment.
pub struct Context<S> {
    pub config: ExperimentConfig,
    pub truth: Arc<Truth>,
    pub teacher: Option<Network<S>>,
}

impl<S: Scalar> Context<S> {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let truth = Arc::new(config.truth()?);
        let teacher = match &config.warm_start {
            None => None,
            Some(w) => Some(match &w.checkpoint {
                Some(path) => checkpoint::load::<S>(path)?,
                None => train_teacher(&config, truth.clone())?,
            }),
        };
        if let Some(t) = &teacher {
            if t.spec() != &config.architecture {
                return Err(Error::SpecMismatch(
                    t.spec().descriptor(),
                    config.architecture.descriptor(),
                ));
            }
        }
        Ok(Context {
            config,
            truth,
            teacher,
        })
    }

    /// Uses an already trained teacher instead of loading or training one.
    pub fn with_teacher(config: ExperimentConfig, teacher: Network<S>) -> Result<Self> {
        config.validate()?;
        if teacher.spec() != &config.architecture {
            return Err(Error::SpecMismatch(
                teacher.spec().descriptor(),
                config.architecture.descriptor(),
            ));
        }
        let truth = Arc::new(config.truth()?);
        Ok(Context {
            config,
            truth,
            teacher: Some(teacher),
        })
    }
}

/// Trains a warm-start teacher at the configured learning rate on a stream
/// derived from its own seed, disjoint from every pair's data.
pub fn train_teacher<S: Scalar>(config: &ExperimentConfig, truth: Arc<Truth>) -> Result<Network<S>> {
    let seed = derive_seed(config.stream.master_seed, Purpose::Teacher, 0);
    let init = Network::init(
        config.architecture.clone(),
        &mut derived_stream(seed, Purpose::InitA, 0),
    )?;
    let batches = windowed_stream(
        config.stream,
        derive_seed(seed, Purpose::Data, 0),
        derive_seed(seed, Purpose::ShuffleA, 0),
        truth,
    );
    let emul = config
        .emulate_batch_nondeterminism
        .then(|| derive_seed(seed, Purpose::EmulA, 0));
    train_single(init, &config.optimizer, batches, emul)
}

pub struct PairOutcome<S> {
    pub report: PairReport,
    pub net_a: Network<S>,
    pub net_b: Network<S>,
}

/// Trains and evaluates one pair. Warm-started pairs take both members from
/// the context's teacher.
pub fn train_pair<S: Scalar>(ctx: &Context<S>, pair_index: usize) -> Result<PairOutcome<S>> {
    let cfg = &ctx.config;
    let seeds = derive_pair_seeds(cfg.stream.master_seed, pair_index as u64, cfg.init_mode);
    let (init_a, init_b, optimizer) = match (&ctx.teacher, &cfg.warm_start) {
        (Some(t), Some(w)) => (t.clone(), t.clone(), cfg.optimizer.with_scaled_lr(w.lr_ratio)),
        _ => (
            Network::init(cfg.architecture.clone(), &mut stream(seeds.init_seed_a))?,
            Network::init(cfg.architecture.clone(), &mut stream(seeds.init_seed_b))?,
            cfg.optimizer,
        ),
    };
    let emulate = cfg.emulate_batch_nondeterminism;
    let net_a = train_single(
        init_a,
        &optimizer,
        windowed_stream(cfg.stream, seeds.data_seed, seeds.shuffle_seed_a, ctx.truth.clone()),
        emulate.then_some(seeds.emul_seed_a),
    )?;
    let net_b = train_single(
        init_b,
        &optimizer,
        windowed_stream(cfg.stream, seeds.data_seed, seeds.shuffle_seed_b, ctx.truth.clone()),
        emulate.then_some(seeds.emul_seed_b),
    )?;

    let eval = EvalSet::draw(&ctx.truth, seeds.data_seed, cfg.eval_size);
    let pred_a = eval.predict(&net_a);
    let pred_b = eval.predict(&net_b);
    let cosine = match (&cfg.architecture.kind, ctx.truth.theta()) {
        (ArchKind::Linear, Some(theta)) => {
            let wa: Vec<f64> = net_a.input_weights(0).iter().map(|v| v.wide()).collect();
            let wb: Vec<f64> = net_b.input_weights(0).iter().map(|v| v.wide()).collect();
            diff_cosine(&wa, &wb, theta)
        }
        _ => None,
    };
    let report = PairReport {
        pair_index,
        seeds,
        excess_loss_a: excess_label_loss(&eval, &pred_a)?,
        excess_loss_b: excess_label_loss(&eval, &pred_b)?,
        relative_pd: relative_pd(&eval, &pred_a, &pred_b)?,
        diff_cosine: cosine,
        stuck: false,
        warm_start: ctx.teacher.is_some(),
    };
    Ok(PairOutcome {
        report,
        net_a,
        net_b,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs every pair of an already prepared context. Pairs execute in
/// parallel; results are reduced in pair-index order.
pub fn run_with<S: Scalar>(ctx: &Context<S>) -> Result<Experiment> {
    let cfg = &ctx.config;
    let results: Vec<Result<PairOutcome<S>>> = (0..cfg.pairs)
        .into_par_iter()
        .map(|k| train_pair(ctx, k))
        .collect();

    let mut pairs = Vec::new();
    let mut networks = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => {
                pairs.push(o.report);
                networks.push((o.net_a.cast::<f64>(), o.net_b.cast::<f64>()));
            }
            Err(e) => {
                log::warn!("pair {k} failed: {e}");
                failures.push((k, e.to_string()));
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::AllPairsFailed(cfg.pairs));
    }
    if !failures.is_empty() {
        log::warn!(
            "aggregating over {} of {} pairs",
            pairs.len(),
            cfg.pairs
        );
    }

    let mut losses: Vec<f64> = pairs
        .iter()
        .flat_map(|p| [p.excess_loss_a, p.excess_loss_b])
        .collect();
    let threshold = cfg.stuck_factor * median(&mut losses);
    for p in &mut pairs {
        p.stuck = p.excess_loss_a > threshold || p.excess_loss_b > threshold;
    }

    let pds: Vec<f64> = pairs.iter().map(|p| p.relative_pd).collect();
    let pair_losses: Vec<f64> = pairs.iter().map(PairReport::mean_loss).collect();
    let (mean_pd, se_pd) = mean_se(&pds);
    let (mean_loss, se_loss) = mean_se(&pair_losses);
    let row = SweepRow {
        variant: cfg.label(),
        log2_z: cfg.stream.log2_z,
        mean_pd,
        se_pd,
        mean_loss,
        se_loss,
        completed: pairs.len(),
        stuck: pairs.iter().filter(|p| p.stuck).count(),
    };
    Ok(Experiment {
        config: cfg.clone(),
        row,
        pairs,
        failures,
        networks,
        teacher: ctx.teacher.as_ref().map(|t| t.cast::<f64>()),
    })
}

fn run_typed<S: Scalar>(config: &ExperimentConfig) -> Result<Experiment> {
    run_with(&Context::<S>::new(config.clone())?)
}

/// Trains all pairs of `config` and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    match config.precision {
        Precision::F64 => run_typed::<f64>(config),
        Precision::F32 => run_typed::<f32>(config),
    }
}

/// One warm-started pair against an explicit teacher.
pub fn warm_start_pair<S: Scalar>(
    config: &ExperimentConfig,
    teacher: &Network<S>,
    pair_index: usize,
) -> Result<PairReport> {
    let mut config = config.clone();
    config.warm_start.get_or_insert_with(WarmStart::default);
    let ctx = Context::with_teacher(config, teacher.clone())?;
    Ok(train_pair(&ctx, pair_index)?.report)
}

/// A named configuration in a sweep. Its `log2_z` is overridden per point.
#[derive(Debug, Clone)]
pub struct Variant {
    pub label: String,
    pub config: ExperimentConfig,
}

impl Variant {
    pub fn new(config: ExperimentConfig) -> Self {
        Variant {
            label: config.label(),
            config,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub experiments: Vec<Experiment>,
}

impl SweepReport {
    pub fn variants(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.variant) {
                seen.push(r.variant.clone());
            }
        }
        seen
    }
}

/// Runs every variant at every window size, in variant order and ascending
/// `log2_z`.
pub fn sweep(variants: &[Variant], z_values: &[u32]) -> Result<SweepReport> {
    if z_values.is_empty() {
        return Err(Error::invalid("sweep.log2z", "need at least one window size"));
    }
    let mut zs = z_values.to_vec();
    zs.sort_unstable();
    zs.dedup();
    let mut report = SweepReport::default();
    for v in variants {
        // A teacher depends only on the variant, not on the window being
        // swept, so train it once.
        let teacher = match &v.config.warm_start {
            Some(w) if w.checkpoint.is_none() => Some(match v.config.precision {
                Precision::F64 => {
                    TeacherNet::F64(train_teacher(&v.config, Arc::new(v.config.truth()?))?)
                }
                Precision::F32 => {
                    TeacherNet::F32(train_teacher(&v.config, Arc::new(v.config.truth()?))?)
                }
            }),
            _ => None,
        };
        for &z in &zs {
            let cfg = v.config.clone().with_log2_z(z);
            let mut exp = match &teacher {
                Some(TeacherNet::F64(t)) => run_with(&Context::with_teacher(cfg, t.clone())?)?,
                Some(TeacherNet::F32(t)) => run_with(&Context::with_teacher(cfg, t.clone())?)?,
                None => run_experiment(&cfg)?,
            };
            exp.row.variant = v.label.clone();
            report.rows.push(exp.row.clone());
            report.experiments.push(exp);
        }
    }
    Ok(report)
}

enum TeacherNet {
    F64(Network<f64>),
    F32(Network<f32>),
}
