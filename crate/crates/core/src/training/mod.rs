//! Supervised and adversarial training loops with step-decay schedules.
//!
//! A run writes `config.json`, `epochs.jsonl`, `batches.jsonl`, periodic
//! checkpoints and one loss-curve SVG per term into its run directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{concatenate, s, Array3, Array4, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::plots::line_chart;
use crate::error::{Error, Result};
use crate::imaging::{append_jsonl, rgb_to_ycbcr, ColorSpace, FacePairSample, Image};
use crate::losses::{
    adversarial_losses_from_logits, disc_logit_grads, gen_logit_grads, image_terms, Backends, LossWeights, ADVERSARIAL, TERMS,
};
use crate::models::{
    build, checkpoint_file_name, registry_lookup, save_checkpoint, slug, Arch, Channel, Discriminator, Family, Generator,
    ModelChoice, SRModelSpec,
};
use crate::nn::{self, Adam};
use crate::rng::derived_rng;
use crate::tensor::Tensor;

pub const TOTAL: &str = "total";
pub const DISCRIMINATOR: &str = "discriminator";
pub const EPOCHS_FILE: &str = "epochs.jsonl";
pub const BATCHES_FILE: &str = "batches.jsonl";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
}

/// When the discriminator loss is compared against the update threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Current batch loss.
    #[default]
    PerBatch,
    /// Running mean over the batches of the current epoch, current one included.
    EpochAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub model_name: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub optimizer: OptimizerConfig,
    pub loss_weights: LossWeights,
    pub seed: u64,
    /// Pixel-only generator epochs run before the adversarial phase.
    pub pretrain_epochs: usize,
    pub disc_threshold: f64,
    pub threshold_mode: ThresholdMode,
    pub checkpoint_every: usize,
    /// Overrides the family's default layer widths.
    pub arch: Option<Arch>,
}

/// Published hyperparameters for a canonical model name.
pub fn default_config(name: &str) -> Result<TrainRunConfig> {
    let spec = match registry_lookup(name)? {
        ModelChoice::Model(spec) => spec,
        ModelChoice::Bicubic => return Err(Error::Config("bicubic interpolation has nothing to train".into())),
    };
    let (batch_size, mut epochs, base_lr, decay_factor) = match spec.family {
        Family::Srcnn => (64, 50, 0.01, 0.1),
        Family::SubCnn => (32, 50, 0.01, 0.2),
        Family::Fsrcnn => (32, 50, 0.001, 0.2),
        Family::Srgan => (32, 30, 0.001, 0.2),
    };
    if spec.family == Family::Fsrcnn && spec.coord && spec.faceloss {
        epochs = 30;
    }
    let adversarial = spec.family == Family::Srgan && !spec.coord;
    let mut loss_weights = if spec.family == Family::Srgan { LossWeights::SRGAN } else { LossWeights::MSE };
    if !adversarial {
        loss_weights.adversarial = 0.0;
    }
    if spec.faceloss {
        loss_weights = loss_weights.with_face(1.0);
    }
    let beta1 = if spec.family == Family::Srgan { 0.5 } else { 0.9 };
    Ok(TrainRunConfig {
        model_name: spec.name(),
        batch_size,
        epochs,
        base_lr,
        decay_factor,
        decay_every: 15,
        optimizer: OptimizerConfig {
            kind: OptimizerKind::Adam,
            beta1,
            beta2: 0.999,
        },
        loss_weights,
        seed: 0,
        pretrain_epochs: if adversarial { 5 } else { 0 },
        disc_threshold: 0.5,
        threshold_mode: ThresholdMode::PerBatch,
        checkpoint_every: 10,
        arch: None,
    })
}

impl TrainRunConfig {
    pub fn spec(&self) -> Result<SRModelSpec> {
        let mut spec = match registry_lookup(&self.model_name)? {
            ModelChoice::Model(spec) => spec,
            ModelChoice::Bicubic => return Err(Error::Config("bicubic interpolation has nothing to train".into())),
        };
        if let Some(arch) = self.arch {
            spec = spec.with_arch(arch);
        }
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }

    /// Whether the run trains a discriminator alongside the generator.
    pub fn adversarial(&self) -> bool {
        self.loss_weights.adversarial > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec()?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !self.base_lr.is_finite() || self.base_lr < 0.0 {
            return bad(format!("base_lr must be finite and non-negative, got {}", self.base_lr));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!("decay_factor must lie in (0,1], got {}", self.decay_factor));
        }
        if self.decay_every == 0 || self.checkpoint_every == 0 {
            return bad("decay_every and checkpoint_every must be positive".into());
        }
        let betas = [self.optimizer.beta1, self.optimizer.beta2];
        if betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return bad(format!("Adam betas must lie in [0,1), got {betas:?}"));
        }
        if !self.disc_threshold.is_finite() || self.disc_threshold < 0.0 {
            return bad(format!("disc_threshold must be finite and non-negative, got {}", self.disc_threshold));
        }
        self.loss_weights.validate()?;
        if self.adversarial() && spec.family != Family::Srgan {
            return bad(format!("{} has no discriminator; adversarial weight must be 0", spec.name()));
        }
        if (self.loss_weights.content > 0.0 || self.loss_weights.face > 0.0) && spec.channel != Channel::Rgb {
            return bad(format!("{} trains on luma; content and face terms need RGB output", spec.name()));
        }
        Ok(())
    }
}

/// Learning rate for a 0-based epoch: `base · decay^(epoch / decay_every)`.
pub fn lr_at(config: &TrainRunConfig, epoch: usize) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::Argument(format!("epoch {epoch} outside schedule of {} epochs", config.epochs)));
    }
    Ok(config.base_lr * config.decay_factor.powi((epoch / config.decay_every) as i32))
}

/// Training pairs held as 8-bit RGB, converted to the model channel per batch.
#[derive(Debug, Clone)]
pub struct TrainingData {
    ids: Vec<String>,
    lr: Vec<Array3<u8>>,
    hr: Vec<Array3<u8>>,
}

fn to_u8(img: &Image) -> Array3<u8> {
    img.pixels().mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
}

fn channel_planes(px: &Array3<u8>, channel: Channel) -> Result<Array3<f32>> {
    let rgb = Image::new(px.mapv(|v| v as f32 / 255.0), ColorSpace::Rgb)?;
    let hwc = match channel {
        Channel::Rgb => rgb.into_pixels(),
        Channel::Y => rgb_to_ycbcr(&rgb)?.into_pixels().slice_move(s![.., .., 0..1]),
    };
    Ok(hwc.permuted_axes([2, 0, 1]).as_standard_layout().to_owned())
}

impl TrainingData {
    pub fn from_samples(samples: &[FacePairSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let (lr0, hr0) = (samples[0].lr.dims(), samples[0].hr.dims());
        let mut data = TrainingData {
            ids: Vec::with_capacity(samples.len()),
            lr: Vec::with_capacity(samples.len()),
            hr: Vec::with_capacity(samples.len()),
        };
        for s in samples {
            if s.lr.dims() != lr0 || s.hr.dims() != hr0 {
                return Err(Error::Data(format!("{}: pair shape differs from the first sample", s.source_id)));
            }
            if s.lr.colorspace() != ColorSpace::Rgb || s.hr.colorspace() != ColorSpace::Rgb {
                return Err(Error::Data(format!("{}: training pairs must be RGB", s.source_id)));
            }
            data.ids.push(s.source_id.clone());
            data.lr.push(to_u8(&s.lr));
            data.hr.push(to_u8(&s.hr));
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// LR and HR batches for the given sample indices.
    pub fn batch(&self, indices: &[usize], channel: Channel) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let stack = |src: &[Array3<u8>]| -> Result<Tensor<f32>> {
            let planes = indices
                .iter()
                .map(|&i| channel_planes(&src[i], channel).map(|p| p.insert_axis(Axis(0))))
                .collect::<Result<Vec<_>>>()?;
            let views: Vec<_> = planes.iter().map(|p| p.view()).collect();
            concatenate(Axis(0), &views).map_err(|e| Error::State(e.to_string()))
        };
        Ok((stack(&self.lr)?, stack(&self.hr)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Pretrain,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub phase: Phase,
    pub losses: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_loss: Option<f64>,
    pub disc_updated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_checksum_before: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_checksum_after: Option<u64>,
}

/// Mean losses over one epoch. `epoch` counts from 1 across both phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    pub losses: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disc_updates: Option<usize>,
    pub wall_seconds: f64,
}

pub struct TrainOutcome {
    pub generator: Generator<f32>,
    pub discriminator: Option<Discriminator<f32>>,
    pub epochs: Vec<EpochLog>,
    pub batches: Vec<BatchRecord>,
    pub checkpoints: Vec<PathBuf>,
}

/// `<base>/<model-slug>/<stamp>`.
pub fn run_directory(base: &Path, model_name: &str, stamp: &str) -> PathBuf {
    base.join(slug(model_name)).join(stamp)
}

struct Sink<'a> {
    dir: Option<&'a Path>,
}

impl Sink<'_> {
    fn init(&self, config: &TrainRunConfig) -> Result<()> {
        if let Some(dir) = self.dir {
            fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
            for f in [EPOCHS_FILE, BATCHES_FILE] {
                fs::write(dir.join(f), "").map_err(|e| Error::io(dir.join(f), e))?;
            }
            let path = dir.join(CONFIG_FILE);
            fs::write(&path, serde_json::to_string_pretty(config)?).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    fn batch(&self, rec: &BatchRecord) -> Result<()> {
        match self.dir {
            Some(dir) => append_jsonl(&dir.join(BATCHES_FILE), rec),
            None => Ok(()),
        }
    }

    fn epoch(&self, log: &EpochLog) -> Result<()> {
        match self.dir {
            Some(dir) => append_jsonl(&dir.join(EPOCHS_FILE), log),
            None => Ok(()),
        }
    }

    fn checkpoint(&self, gen: &Generator<f32>, disc: Option<&Discriminator<f32>>, epoch: usize, seed: u64) -> Result<Option<PathBuf>> {
        let Some(dir) = self.dir else { return Ok(None) };
        let path = dir.join("checkpoints").join(checkpoint_file_name(gen.spec(), epoch));
        save_checkpoint(&path, gen, disc, epoch, seed)?;
        Ok(Some(path))
    }

    fn plots(&self, name: &str, logs: &[EpochLog]) -> Result<()> {
        let Some(dir) = self.dir else { return Ok(()) };
        let plots = dir.join("plots");
        fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
        let keys: Vec<&String> = logs.first().map(|l| l.losses.keys().collect()).unwrap_or_default();
        for key in keys {
            let points = logs.iter().map(|l| (l.epoch as f64, l.losses.get(key).copied().unwrap_or(0.0))).collect();
            line_chart(
                &plots.join(format!("loss_{key}.svg")),
                &format!("{name}: {key} loss"),
                "epoch",
                "loss",
                &[(name.to_string(), points)],
            )?;
        }
        Ok(())
    }
}

fn non_finite(epoch: usize, batch: usize, what: &str, ids: &[String]) -> Error {
    Error::Numeric(format!("non-finite {what} at epoch {epoch} batch {batch}; samples: [{}]", ids.join(", ")))
}

fn check_finite(losses: &BTreeMap<String, f64>, epoch: usize, batch: usize, ids: &[String]) -> Result<()> {
    match losses.iter().find(|(_, v)| !v.is_finite()) {
        Some((k, _)) => Err(non_finite(epoch, batch, &format!("{k} loss"), ids)),
        None => Ok(()),
    }
}

fn check_params(gen: &Generator<f32>, epoch: usize, batch: usize, ids: &[String]) -> Result<()> {
    let mut ok = true;
    gen.network().visit_params("", &mut |_, p| ok &= p.value.iter().all(|v| v.is_finite()));
    if ok {
        Ok(())
    } else {
        Err(non_finite(epoch, batch, "generator parameter", ids))
    }
}

fn mean_losses(records: &[BatchRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, f64> = BTreeMap::new();
    for r in records {
        for (k, v) in &r.losses {
            *acc.entry(k.clone()).or_default() += v;
        }
    }
    let n = records.len().max(1) as f64;
    acc.values_mut().for_each(|v| *v /= n);
    acc
}

fn logits_tensor(values: &[f64]) -> Tensor<f32> {
    Array4::from_shape_fn((values.len(), 1, 1, 1), |(i, ..)| values[i] as f32)
}

struct Setup {
    spec: SRModelSpec,
    gen: Generator<f32>,
    disc: Option<Discriminator<f32>>,
}

fn setup(config: &TrainRunConfig, data: &TrainingData, backends: &Backends<'_>) -> Result<Setup> {
    config.validate()?;
    backends.check(&config.loss_weights)?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let spec = config.spec()?;
    let built = build::<f32>(&spec, config.seed)?;
    Ok(Setup {
        spec,
        gen: built.generator,
        disc: built.discriminator,
    })
}

/// Pixel, content and face terms on the generator only. Runs `pretrain_epochs`
/// extra epochs at the base rate before the scheduled ones.
pub fn train_supervised(
    config: &TrainRunConfig,
    data: &TrainingData,
    backends: &Backends<'_>,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if config.adversarial() {
        return Err(Error::Config(format!("{} has a nonzero adversarial weight; use the adversarial loop", config.model_name)));
    }
    let Setup { spec, gen, .. } = setup(config, data, backends)?;
    run(config, &spec, gen, None, data, backends, run_dir)
}

/// Alternating discriminator and generator updates after a pixel-only pretrain.
pub fn train_adversarial(
    config: &TrainRunConfig,
    data: &TrainingData,
    backends: &Backends<'_>,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if !config.adversarial() {
        return Err(Error::Config(format!("{} has no adversarial weight", config.model_name)));
    }
    let Setup { spec, gen, disc } = setup(config, data, backends)?;
    let disc = disc.ok_or_else(|| Error::State(format!("{} built without a discriminator", spec.name())))?;
    run(config, &spec, gen, Some(disc), data, backends, run_dir)
}

/// Dispatches on the adversarial weight.
pub fn train(config: &TrainRunConfig, data: &TrainingData, backends: &Backends<'_>, run_dir: Option<&Path>) -> Result<TrainOutcome> {
    if config.adversarial() {
        train_adversarial(config, data, backends, run_dir)
    } else {
        train_supervised(config, data, backends, run_dir)
    }
}

fn run(
    config: &TrainRunConfig,
    spec: &SRModelSpec,
    mut gen: Generator<f32>,
    mut disc: Option<Discriminator<f32>>,
    data: &TrainingData,
    backends: &Backends<'_>,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let sink = Sink { dir: run_dir };
    sink.init(config)?;
    let opt = config.optimizer;
    let mut adam_g = Adam::<f32>::new(opt.beta1, opt.beta2);
    let mut adam_d = Adam::<f32>::new(opt.beta1, opt.beta2);
    let mut shuffle = derived_rng(config.seed, "train/shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let pretrain_weights = LossWeights::MSE;

    let mut epochs = Vec::new();
    let mut batches = Vec::new();
    let mut checkpoints = Vec::new();
    let total_epochs = config.pretrain_epochs + config.epochs;
    for global in 0..total_epochs {
        let start = Instant::now();
        let pretrain = global < config.pretrain_epochs;
        let (phase, lr) = if pretrain {
            (Phase::Pretrain, config.base_lr)
        } else {
            (Phase::Train, lr_at(config, global - config.pretrain_epochs)?)
        };
        let epoch = global + 1;
        order.shuffle(&mut shuffle);
        let mut records = Vec::new();
        let mut disc_losses = Vec::new();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let ids: Vec<String> = chunk.iter().map(|&i| data.ids[i].clone()).collect();
            let (lr_batch, hr) = data.batch(chunk, spec.channel)?;
            let x = gen.prepare_input(&lr_batch)?;
            let sr = gen.forward(&x)?;
            let weights = if pretrain { &pretrain_weights } else { &config.loss_weights };
            let (mut losses, mut grad) = image_terms(&sr, &hr, weights, backends, Some(&ids))?;

            let mut rec = BatchRecord {
                epoch,
                batch: b,
                phase,
                losses: BTreeMap::new(),
                disc_loss: None,
                disc_updated: false,
                disc_checksum_before: None,
                disc_checksum_after: None,
            };
            if let (Some(d), false) = (disc.as_mut(), pretrain) {
                let n = chunk.len();
                let both = concatenate![Axis(0), hr, sr];
                let logits: Vec<f64> = d.forward_logits(&both)?.iter().map(|&z| z as f64).collect();
                let (real, fake) = logits.split_at(n);
                let (_, d_loss) = adversarial_losses_from_logits(real, fake)?;
                if !d_loss.is_finite() {
                    return Err(non_finite(epoch, b, "discriminator loss", &ids));
                }
                disc_losses.push(d_loss);
                let gate = match config.threshold_mode {
                    ThresholdMode::PerBatch => d_loss,
                    ThresholdMode::EpochAverage => disc_losses.iter().sum::<f64>() / disc_losses.len() as f64,
                };
                let before = d.checksum();
                if gate > config.disc_threshold {
                    let (gr, gf) = disc_logit_grads(real, fake);
                    let g: Vec<f64> = gr.into_iter().chain(gf).collect();
                    d.backward(&logits_tensor(&g))?;
                    adam_d.step(d.network_mut(), lr);
                    rec.disc_updated = true;
                }
                rec.disc_loss = Some(d_loss);
                rec.disc_checksum_before = Some(before);
                rec.disc_checksum_after = Some(d.checksum());

                let fake: Vec<f64> = d.forward_logits(&sr)?.iter().map(|&z| z as f64).collect();
                let (g_adv, _) = adversarial_losses_from_logits(&fake, &fake)?;
                let w = config.loss_weights.adversarial;
                let g: Vec<f64> = gen_logit_grads(&fake).into_iter().map(|v| v * w).collect();
                let adv_grad = d.backward(&logits_tensor(&g))?;
                nn::zero_grads(d.network_mut());
                grad += &adv_grad;
                losses.insert(ADVERSARIAL.into(), g_adv);
                losses.insert(DISCRIMINATOR.into(), d_loss);
            }

            let total: f64 = losses.iter().map(|(k, v)| weights.get(k) * v).sum();
            for term in TERMS {
                losses.entry(term.to_string()).or_insert(0.0);
            }
            if disc.is_some() {
                losses.entry(DISCRIMINATOR.to_string()).or_insert(0.0);
            }
            losses.insert(TOTAL.into(), total);
            check_finite(&losses, epoch, b, &ids)?;

            gen.backward(&grad)?;
            adam_g.step(gen.network_mut(), lr);
            check_params(&gen, epoch, b, &ids)?;

            rec.losses = losses;
            sink.batch(&rec)?;
            records.push(rec);
        }
        let log = EpochLog {
            epoch,
            phase,
            lr,
            losses: mean_losses(&records),
            disc_updates: disc.as_ref().map(|_| records.iter().filter(|r| r.disc_updated).count()),
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{} epoch {epoch}/{total_epochs} ({phase:?}) total {:.6}", spec.name(), log.losses[TOTAL]);
        sink.epoch(&log)?;
        epochs.push(log);
        batches.extend(records);
        if epoch % config.checkpoint_every == 0 || epoch == total_epochs {
            if let Some(p) = sink.checkpoint(&gen, disc.as_ref(), epoch, config.seed)? {
                checkpoints.push(p);
            }
        }
    }
    sink.plots(&spec.name(), &epochs)?;
    Ok(TrainOutcome {
        generator: gen,
        discriminator: disc,
        epochs,
        batches,
        checkpoints,
    })
}
