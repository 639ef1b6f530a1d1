//! Three-step alternating training, dataset splitting and MAE evaluation.
//!
//! Each batch runs, in order:
//! 1. primary branch plus attribute encoders and classifiers on
//!    `L_S^p + L_U^p + L_S^cr + L_S^co`;
//! 2. attribute encoders and decoders on the reconstruction of their
//!    (fixed) attention-weighted inputs;
//! 3. the fusion head on its supervised loss, all features held fixed.
//!
//! Primary-only mode runs just the primary branch on `L_S^p + L_U^p`.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{Adam, AdamConfig, Branch, Graph, ParamInfo, Part, Tensor};
use crate::model::{attribute_loss, losses, supervised_loss, AttributeBranch, Model, ModelConfig, ModelError, Net, Targets};
use crate::score::{Attribute, ScoreVector, MAX_SCORE};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset too small: {0}")]
    NotEnoughSamples(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    PrimaryOnly,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Labeled samples only; decoder losses stay active.
    FullySupervised,
    SemiSupervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub labeled_count: usize,
    pub unlabeled_count: usize,
    pub architecture: Architecture,
    pub supervision: Supervision,
    pub test_fraction: f64,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 75,
            batch_size: 8,
            adam: AdamConfig::default(),
            seed: 0,
            labeled_count: 100,
            unlabeled_count: 1500,
            architecture: Architecture::Full,
            supervision: Supervision::SemiSupervised,
            test_fraction: 0.2,
            checkpoint_every: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(TrainError::InvalidConfig(format!("test_fraction {} outside [0,1)", self.test_fraction)));
        }
        Ok(())
    }

    /// Unlabeled samples actually used (none when fully supervised).
    pub fn effective_unlabeled(&self) -> usize {
        match self.supervision {
            Supervision::FullySupervised => 0,
            Supervision::SemiSupervised => self.unlabeled_count,
        }
    }
}

/// Per-step (or per-epoch mean) loss values. `l_cr`/`l_co` sum the
/// supervised term of step 1 and the reconstruction term of step 2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub l_p: f64,
    pub l_s_p: f64,
    pub l_u_p: f64,
    pub l_cr: f64,
    pub l_co: f64,
    pub l_f: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "epoch,l_p,l_s_p,l_u_p,l_cr,l_co,l_f";

    fn values(&self) -> [f64; 6] {
        [self.l_p, self.l_s_p, self.l_u_p, self.l_cr, self.l_co, self.l_f]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    fn merge(&mut self, other: &LossReport) {
        self.l_p += other.l_p;
        self.l_s_p += other.l_s_p;
        self.l_u_p += other.l_u_p;
        self.l_cr += other.l_cr;
        self.l_co += other.l_co;
        self.l_f += other.l_f;
    }

    fn scaled(&self, k: f64) -> LossReport {
        let [l_p, l_s_p, l_u_p, l_cr, l_co, l_f] = self.values().map(|v| v * k);
        LossReport { l_p, l_s_p, l_u_p, l_cr, l_co, l_f }
    }

    pub fn csv_row(&self, epoch: usize) -> String {
        let v = self.values().map(|x| format!("{x:.8}"));
        format!("{epoch},{}", v.join(","))
    }
}

/// One image with its (possibly absent) scores.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub image: Array2<f32>,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Array3<f32>,
    pub targets: Targets<f32>,
}

impl Batch {
    pub fn new(examples: &[&Example]) -> Result<Self, TrainError> {
        let first = examples.first().ok_or(TrainError::EmptyBatch)?;
        let (h, w) = first.image.dim();
        let mut images = Array3::zeros((examples.len(), h, w));
        for (i, e) in examples.iter().enumerate() {
            if e.image.dim() != (h, w) {
                return Err(ModelError::InputShape { expected: h, found: e.image.dim() }.into());
            }
            images.index_axis_mut(Axis(0), i).assign(&e.image);
        }
        let labels: Vec<ScoreVector> = examples.iter().map(|e| e.scores).collect();
        Ok(Batch { images, targets: Targets::from_labels(&labels)? })
    }

    pub fn has_labels(&self) -> bool {
        self.targets.attrs_mask.iter().chain(&self.targets.overall_mask).any(|&m| m)
    }
}

/// Train and test partitions of one run.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

/// Holds out `round(test_fraction · n)` fully labeled samples for testing,
/// then takes `labeled_count` labeled and `effective_unlabeled()` further
/// samples (labels stripped) for training, all drawn under `config.seed`.
pub fn split_dataset(examples: &[Example], config: &TrainConfig) -> Result<Split, TrainError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut labeled: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].scores.is_full()).collect();
    labeled.shuffle(&mut rng);
    let test_count = (config.test_fraction * examples.len() as f64).round() as usize;
    let need = test_count + config.labeled_count;
    if labeled.len() < need {
        return Err(TrainError::NotEnoughSamples(format!("{need} fully labeled samples needed, {} available", labeled.len())));
    }
    let test: Vec<Example> = labeled[..test_count].iter().map(|&i| examples[i].clone()).collect();
    let mut train: Vec<Example> = labeled[test_count..need].iter().map(|&i| examples[i].clone()).collect();

    let mut used = vec![false; examples.len()];
    labeled[..need].iter().for_each(|&i| used[i] = true);
    let mut rest: Vec<usize> = (0..examples.len()).filter(|&i| !used[i]).collect();
    rest.shuffle(&mut rng);
    let unlabeled = config.effective_unlabeled();
    if rest.len() < unlabeled {
        return Err(TrainError::NotEnoughSamples(format!("{unlabeled} unlabeled samples needed, {} available", rest.len())));
    }
    train.extend(rest[..unlabeled].iter().map(|&i| Example { scores: ScoreVector::unlabeled(), ..examples[i].clone() }));
    Ok(Split { train, test })
}

fn step1_trainable(info: ParamInfo) -> bool {
    match info.branch {
        Branch::Primary => true,
        Branch::Cracking | Branch::Contamination => info.part == Part::Classifier,
        Branch::Fusion => false,
    }
}

fn primary_trainable(info: ParamInfo) -> bool {
    info.branch == Branch::Primary
}

fn step2_trainable(info: ParamInfo) -> bool {
    matches!(info.branch, Branch::Cracking | Branch::Contamination) && info.part != Part::Classifier
}

fn step3_trainable(info: ParamInfo) -> bool {
    info.branch == Branch::Fusion
}

fn scalar(g: &Graph<f32>, v: crate::diff::Var) -> f64 {
    g.value(v).item() as f64
}

/// Every loss of the full network on `batch`, without updating anything.
pub fn batch_losses(model: &Model, batch: &Batch) -> Result<LossReport, TrainError> {
    let mut g = Graph::new();
    let frozen = |_: ParamInfo| false;
    let mut net = Net::new(&mut g, &model.params, &model.config, &frozen);
    let img = net.image(&batch.images)?;
    let out = net.forward(img)?;
    let l = losses(&mut g, &out, &batch.targets)?;
    let v = |var| scalar(&g, var);
    Ok(LossReport {
        l_p: v(l.supervised_primary) + v(l.unsupervised_primary),
        l_s_p: v(l.supervised_primary),
        l_u_p: v(l.unsupervised_primary),
        l_cr: v(l.supervised_attr[0]) + v(l.unsupervised_attr[0]),
        l_co: v(l.supervised_attr[1]) + v(l.unsupervised_attr[1]),
        l_f: v(l.fusion),
    })
}

/// Model, optimizer and shuffling state of one training run.
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    optimizer: Adam<f32>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        Ok(Trainer {
            model,
            optimizer: Adam::new(config.adam),
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
            epoch: 0,
            config,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// Primary-only update on `L_S^p + L_U^p`.
    pub fn step_primary_only(&mut self, batch: &Batch) -> Result<LossReport, TrainError> {
        let mut g = Graph::new();
        let mut net = Net::new(&mut g, &self.model.params, &self.model.config, &primary_trainable);
        let img = net.image(&batch.images)?;
        let pf = net.feature_network(img, Branch::Primary)?;
        let (attrs, overall) = net.primary_classifier(pf)?;
        let recon = net.decode(pf, Branch::Primary)?;
        let ls = supervised_loss(&mut g, attrs, overall, &batch.targets)?;
        let lu = g.mse(img, recon).map_err(ModelError::from)?;
        let total = g.add(ls, lu).map_err(ModelError::from)?;
        g.backward(total);
        let report = LossReport { l_p: scalar(&g, total), l_s_p: scalar(&g, ls), l_u_p: scalar(&g, lu), ..LossReport::default() };
        self.model.params.absorb_grads(&g);
        self.optimizer.step(&mut self.model.params, primary_trainable);
        Ok(report)
    }

    /// Step 1: primary branch and attribute encoders/classifiers.
    pub fn step1_primary_and_attribute(&mut self, batch: &Batch) -> Result<LossReport, TrainError> {
        let mut g = Graph::new();
        let mut net = Net::new(&mut g, &self.model.params, &self.model.config, &step1_trainable);
        let img = net.image(&batch.images)?;
        let pf = net.feature_network(img, Branch::Primary)?;
        let (attrs, overall) = net.primary_classifier(pf)?;
        let recon = net.decode(pf, Branch::Primary)?;
        let mut preds = [img; 2];
        for target in AttributeBranch::BOTH {
            let att = net.make_attention(pf, target)?;
            let input = net.attention_weight(img, att)?;
            preds[target as usize] = net.attribute_branch(input, target)?.1;
        }
        let ls = supervised_loss(&mut g, attrs, overall, &batch.targets)?;
        let lu = g.mse(img, recon).map_err(ModelError::from)?;
        let lcr = attribute_loss(&mut g, preds[0], AttributeBranch::Cracking, &batch.targets)?;
        let lco = attribute_loss(&mut g, preds[1], AttributeBranch::Contamination, &batch.targets)?;
        let lp = g.add(ls, lu).map_err(ModelError::from)?;
        let total = g.sum(&[lp, lcr, lco]).map_err(ModelError::from)?;
        g.backward(total);
        let report = LossReport {
            l_p: scalar(&g, lp),
            l_s_p: scalar(&g, ls),
            l_u_p: scalar(&g, lu),
            l_cr: scalar(&g, lcr),
            l_co: scalar(&g, lco),
            l_f: 0.0,
        };
        self.model.params.absorb_grads(&g);
        self.optimizer.step(&mut self.model.params, step1_trainable);
        Ok(report)
    }

    /// Step 2: attribute autoencoders on their attention-weighted inputs.
    /// Returns the (frozen) primary features for reuse by step 3.
    pub fn step2_attribute_autoencoder(&mut self, batch: &Batch) -> Result<(LossReport, Tensor<f32>), TrainError> {
        let mut g = Graph::new();
        let mut net = Net::new(&mut g, &self.model.params, &self.model.config, &step2_trainable);
        let img = net.image(&batch.images)?;
        let pf = net.feature_network(img, Branch::Primary)?;
        let mut losses = [img; 2];
        for target in AttributeBranch::BOTH {
            let att = net.make_attention(pf, target)?;
            let input = net.attention_weight(img, att)?;
            let input = net.graph.detach(input);
            let features = net.feature_network(input, target.branch())?;
            let recon = net.decode(features, target.branch())?;
            losses[target as usize] = net.graph.mse(input, recon).map_err(ModelError::from)?;
        }
        let total = g.add(losses[0], losses[1]).map_err(ModelError::from)?;
        g.backward(total);
        let report = LossReport { l_cr: scalar(&g, losses[0]), l_co: scalar(&g, losses[1]), ..LossReport::default() };
        let mut features = g.value(pf).clone();
        features.grad = None;
        self.model.params.absorb_grads(&g);
        self.optimizer.step(&mut self.model.params, step2_trainable);
        Ok((report, features))
    }

    /// Step 3: fusion head on detached features. `primary_features` may be
    /// passed in when the primary branch is unchanged since they were made.
    pub fn step3_fusion(&mut self, batch: &Batch, primary_features: Option<Tensor<f32>>) -> Result<LossReport, TrainError> {
        // Nothing to fit; stepping would still let Adam momentum move the head.
        if !batch.has_labels() {
            return Ok(LossReport::default());
        }
        let mut g = Graph::new();
        let mut net = Net::new(&mut g, &self.model.params, &self.model.config, &step3_trainable);
        let img = net.image(&batch.images)?;
        let pf = match primary_features {
            Some(t) => net.graph.input(t),
            None => {
                let f = net.feature_network(img, Branch::Primary)?;
                net.graph.detach(f)
            }
        };
        let mut feats = [pf; 2];
        for target in AttributeBranch::BOTH {
            let att = net.make_attention(pf, target)?;
            let input = net.attention_weight(img, att)?;
            let f = net.feature_network(input, target.branch())?;
            feats[target as usize] = net.graph.detach(f);
        }
        let (attrs, overall) = net.fusion_branch(pf, feats[0], feats[1])?;
        let lf = supervised_loss(&mut g, attrs, overall, &batch.targets)?;
        g.backward(lf);
        let report = LossReport { l_f: scalar(&g, lf), ..LossReport::default() };
        self.model.params.absorb_grads(&g);
        self.optimizer.step(&mut self.model.params, step3_trainable);
        Ok(report)
    }

    /// All steps of the configured architecture on one batch.
    pub fn train_batch(&mut self, batch: &Batch) -> Result<LossReport, TrainError> {
        match self.config.architecture {
            Architecture::PrimaryOnly => self.step_primary_only(batch),
            Architecture::Full => {
                let mut report = self.step1_primary_and_attribute(batch)?;
                let (r2, features) = self.step2_attribute_autoencoder(batch)?;
                let r3 = self.step3_fusion(batch, Some(features))?;
                report.merge(&r2);
                report.merge(&r3);
                Ok(report)
            }
        }
    }

    /// One pass over `data` in a freshly shuffled order; returns the mean
    /// of the per-batch reports.
    pub fn train_epoch(&mut self, data: &[Example]) -> Result<LossReport, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptyBatch);
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut sum = LossReport::default();
        let mut batches = 0;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let examples: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let report = self.train_batch(&Batch::new(&examples)?)?;
            if !report.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch: self.epoch + 1, batch: b });
            }
            sum.merge(&report);
            batches += 1;
        }
        self.epoch += 1;
        Ok(sum.scaled(1.0 / batches as f64))
    }
}

/// Mean absolute error per score over a test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub brightness: f64,
    pub squareness: f64,
    pub cracking: f64,
    pub contamination: f64,
    pub overall: f64,
    pub count: usize,
}

impl MaeReport {
    pub fn values(&self) -> [f64; 5] {
        [self.brightness, self.squareness, self.cracking, self.contamination, self.overall]
    }

    pub fn get(&self, attr: Attribute) -> f64 {
        self.values()[attr.index()]
    }
}

/// MAE of `predictions` (clamped to [0,4]) against `truth`, per score over
/// the samples where that score is present.
pub fn mae_report(predictions: &[[f32; 5]], truth: &[ScoreVector]) -> Result<MaeReport, TrainError> {
    if predictions.is_empty() || predictions.len() != truth.len() {
        return Err(TrainError::EmptyTestSet);
    }
    let mut sums = [0.0f64; 5];
    let mut counts = [0usize; 5];
    for (p, t) in predictions.iter().zip(truth) {
        for k in 0..5 {
            if let Some(y) = t.0[k] {
                sums[k] += (y as f64 - p[k].clamp(0.0, MAX_SCORE) as f64).abs();
                counts[k] += 1;
            }
        }
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(TrainError::EmptyTestSet);
    }
    let m: Vec<f64> = (0..5).map(|k| sums[k] / counts[k] as f64).collect();
    Ok(MaeReport { brightness: m[0], squareness: m[1], cracking: m[2], contamination: m[3], overall: m[4], count: predictions.len() })
}

/// Scores `examples` with the head matching `architecture`.
pub fn predict(model: &Model, examples: &[Example], architecture: Architecture, batch_size: usize) -> Result<Vec<[f32; 5]>, TrainError> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let batch = Batch::new(&refs)?;
        out.extend(match architecture {
            Architecture::PrimaryOnly => model.predict_primary(&batch.images)?,
            Architecture::Full => model.predict_full(&batch.images)?,
        });
    }
    Ok(out)
}

pub fn evaluate(model: &Model, test: &[Example], architecture: Architecture) -> Result<MaeReport, TrainError> {
    if test.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let preds = predict(model, test, architecture, 32)?;
    let truth: Vec<ScoreVector> = test.iter().map(|e| e.scores).collect();
    mae_report(&preds, &truth)
}

/// Mean and sample standard deviation of MAE across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeSummary {
    pub runs: Vec<MaeReport>,
    pub mean: [f64; 5],
    pub std: [f64; 5],
}

pub fn summarize(runs: &[MaeReport]) -> MaeSummary {
    let n = runs.len() as f64;
    let mut mean = [0.0; 5];
    let mut std = [0.0; 5];
    for k in 0..5 {
        mean[k] = runs.iter().map(|r| r.values()[k]).sum::<f64>() / n.max(1.0);
        if runs.len() > 1 {
            let ss: f64 = runs.iter().map(|r| (r.values()[k] - mean[k]).powi(2)).sum();
            std[k] = (ss / (n - 1.0)).sqrt();
        }
    }
    MaeSummary { runs: runs.to_vec(), mean, std }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub model: Model,
    pub losses: Vec<LossReport>,
    pub mae: MaeReport,
}

/// Files of a training run directory.
pub mod run_files {
    pub const CONFIG: &str = "config.json";
    pub const LOSSES: &str = "losses.csv";
    pub const MODEL: &str = "model.xcn";
    pub const MAE: &str = "mae.json";

    pub fn checkpoint(epoch: usize) -> String {
        format!("epoch_{epoch:03}.xcn")
    }
}

#[derive(Serialize)]
struct RunConfig<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

/// Splits `examples`, trains for `config.epochs`, evaluates on the held-out
/// set. With `run_dir`, writes config, per-epoch losses, periodic and final
/// checkpoints and the MAE report there.
pub fn run_training(
    examples: &[Example],
    model_config: ModelConfig,
    config: TrainConfig,
    run_dir: Option<&Path>,
) -> Result<RunResult, TrainError> {
    run_training_from(Model::new(model_config, config.seed)?, examples, config, run_dir)
}

/// As [`run_training`], starting from existing parameters.
pub fn run_training_from(model: Model, examples: &[Example], config: TrainConfig, run_dir: Option<&Path>) -> Result<RunResult, TrainError> {
    let split = split_dataset(examples, &config)?;
    let model_config = model.config;
    let mut trainer = Trainer::new(model, config)?;

    let mut loss_file = match run_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let cfg = serde_json::to_string_pretty(&RunConfig { model: &model_config, train: &config })?;
            fs::write(dir.join(run_files::CONFIG), cfg)?;
            let mut f = fs::File::create(dir.join(run_files::LOSSES))?;
            writeln!(f, "{}", LossReport::CSV_HEADER)?;
            Some(f)
        }
        None => None,
    };

    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let report = trainer.train_epoch(&split.train)?;
        if let Some(f) = loss_file.as_mut() {
            writeln!(f, "{}", report.csv_row(epoch))?;
            f.flush()?;
        }
        if let Some(dir) = run_dir {
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
                trainer.model.save(dir.join(run_files::checkpoint(epoch)))?;
            }
        }
        losses.push(report);
    }

    let mae = evaluate(&trainer.model, &split.test, config.architecture)?;
    if let Some(dir) = run_dir {
        trainer.model.save(dir.join(run_files::MODEL))?;
        fs::write(dir.join(run_files::MAE), serde_json::to_string_pretty(&mae)?)?;
    }
    Ok(RunResult { model: trainer.model, losses, mae })
}

/// Loads a run's loss CSV.
pub fn read_losses(path: &Path) -> Result<Vec<LossReport>, TrainError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let v: Vec<f64> = line.split(',').skip(1).map(|s| s.trim().parse().unwrap_or(f64::NAN)).collect();
        if v.len() != 6 {
            return Err(TrainError::InvalidConfig(format!("malformed loss row {line:?}")));
        }
        out.push(LossReport { l_p: v[0], l_s_p: v[1], l_u_p: v[2], l_cr: v[3], l_co: v[4], l_f: v[5] });
    }
    Ok(out)
}
