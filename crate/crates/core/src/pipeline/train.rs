use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, TaskKind};
use super::dataset::{read_json, segment_example, write_json, Example, FeatureDir, Normalization};
use crate::audio::{LabelBundle, Split};
use crate::error::{Error, Result};
use crate::models::{Model, ModelOutput, ModelSpec};
use crate::nn::{load_checkpoint, save_checkpoint, Adam, AdamConfig, Graph, Mode, Tensor, Var};

/// Everything besides the weights needed to rebuild and run a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: ExperimentConfig,
    pub spec: ModelSpec,
    pub classes: Vec<String>,
    pub normalization: Normalization,
    pub fingerprint: String,
}

pub fn meta_path(checkpoint: &Path) -> PathBuf {
    sidecar(checkpoint, "meta.json")
}

pub fn log_path(checkpoint: &Path) -> PathBuf {
    sidecar(checkpoint, "log.csv")
}

fn sidecar(checkpoint: &Path, suffix: &str) -> PathBuf {
    let mut name = checkpoint.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    checkpoint.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// Loss of every step that ran.
    pub losses: Vec<f32>,
}

impl TrainSummary {
    pub fn steps(&self) -> usize {
        self.losses.len()
    }

    pub fn final_loss(&self) -> f32 {
        *self.losses.last().expect("at least one step")
    }
}

/// Standardized, segmented examples of one split.
pub fn load_examples(
    dir: &FeatureDir,
    split: Option<Split>,
    cfg: &ExperimentConfig,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for entry in dir.entries(split) {
        let ex = Example {
            clip_id: entry.clip_id.clone(),
            features: dir.load(entry)?,
            labels: entry.labels.clone(),
        };
        out.extend(segment_example(ex, cfg)?);
    }
    Ok(out)
}

fn check_labels(task: TaskKind, examples: &[Example], classes: usize) -> Result<()> {
    for ex in examples {
        if ex.labels.n_classes() != classes {
            return Err(Error::Config(format!(
                "{}: label width differs from the vocabulary",
                ex.clip_id
            )));
        }
        let ok = match (task, &ex.labels) {
            (TaskKind::ClipClass, l) => l.clip_tags().iter().filter(|&&t| t).count() == 1,
            (TaskKind::ClipTag | TaskKind::FrameSed, _) => true,
            (TaskKind::Seld, LabelBundle::Seld { .. }) => true,
            (TaskKind::Seld, _) => false,
        };
        if !ok {
            let need = match task {
                TaskKind::ClipClass => "exactly one label per clip",
                _ => "frame labels with directions",
            };
            return Err(Error::Config(format!(
                "task {task:?} needs {need}; clip {} does not match",
                ex.clip_id
            )));
        }
    }
    Ok(())
}

fn batch_input(batch: &[&Example]) -> Result<Tensor<f32>> {
    let f = &batch[0].features;
    let mut data = Vec::with_capacity(batch.len() * f.data.len());
    for ex in batch {
        let g = &ex.features;
        if (g.channels, g.frames, g.mels) != (f.channels, f.frames, f.mels) {
            return Err(Error::InvalidInput(format!(
                "clips {} and {} differ in shape; set segment_seconds to train on unequal lengths",
                batch[0].clip_id, ex.clip_id
            )));
        }
        data.extend_from_slice(&g.data);
    }
    Tensor::from_vec(&[batch.len(), f.channels, f.frames, f.mels], data)
}

fn bools(v: impl IntoIterator<Item = bool>) -> Vec<f32> {
    v.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
}

/// The training objective of `task` on one batch.
fn task_loss(
    g: &mut Graph<f32>,
    out: &ModelOutput,
    batch: &[&Example],
    cfg: &ExperimentConfig,
    k: usize,
) -> Result<Var> {
    let b = batch.len();
    let tags = || bools(batch.iter().flat_map(|e| e.labels.clip_tags()));
    match cfg.task {
        TaskKind::ClipClass => g.loss_ce(out.logits, &Tensor::from_vec(&[b, k], tags())?),
        TaskKind::ClipTag => g.loss_bce(out.logits, &Tensor::from_vec(&[b, k], tags())?, None),
        TaskKind::FrameSed => {
            let t = batch[0].features.frames;
            let mut frame_target = vec![0.0; b * t * k];
            let mut frame_mask = vec![0.0; b * t * k];
            let mut clip_target = vec![0.0; b * k];
            let mut clip_mask = vec![0.0; b * k];
            for (i, ex) in batch.iter().enumerate() {
                match ex.labels.activity() {
                    Some(active) => {
                        frame_target[i * t * k..(i + 1) * t * k]
                            .copy_from_slice(&bools(active.iter().copied()));
                        frame_mask[i * t * k..(i + 1) * t * k].fill(1.0);
                    }
                    None => {
                        clip_target[i * k..(i + 1) * k]
                            .copy_from_slice(&bools(ex.labels.clip_tags()));
                        clip_mask[i * k..(i + 1) * k].fill(1.0);
                    }
                }
            }
            let mut terms = Vec::new();
            if frame_mask.iter().any(|&m| m > 0.0) {
                let target = Tensor::from_vec(&[b, t, k], frame_target)?;
                let mask = Tensor::from_vec(&[b, t, k], frame_mask)?;
                terms.push(g.loss_bce(out.logits, &target, Some(&mask))?);
            }
            if clip_mask.iter().any(|&m| m > 0.0) {
                let clip = g.max_time(out.logits)?;
                let target = Tensor::from_vec(&[b, k], clip_target)?;
                let mask = Tensor::from_vec(&[b, k], clip_mask)?;
                terms.push(g.loss_bce(clip, &target, Some(&mask))?);
            }
            match terms[..] {
                [one] => Ok(one),
                [a, c] => g.add(a, c),
                _ => unreachable!("every clip has weak or strong labels"),
            }
        }
        TaskKind::Seld => {
            let t = batch[0].features.frames;
            let (mut act, mut azi, mut ele) = (Vec::new(), Vec::new(), Vec::new());
            for ex in batch {
                let LabelBundle::Seld {
                    active,
                    azimuth,
                    elevation,
                    ..
                } = &ex.labels
                else {
                    unreachable!("labels checked before training")
                };
                act.extend(bools(active.iter().copied()));
                azi.extend(azimuth.iter().map(|a| a / 180.0));
                ele.extend(elevation.iter().map(|e| e / 90.0));
            }
            let shape = [b, t, k];
            let (Some(azimuth), Some(elevation)) = (out.azimuth, out.elevation) else {
                return Err(Error::Config(
                    "seld task needs a model with localisation outputs".into(),
                ));
            };
            g.loss_seld(
                out.logits,
                azimuth,
                elevation,
                &Tensor::from_vec(&shape, act)?,
                &Tensor::from_vec(&shape, azi)?,
                &Tensor::from_vec(&shape, ele)?,
                cfg.lambda as f32,
            )
        }
    }
}

/// Trains a fresh model on `examples` for `cfg.steps` Adam steps, or until the step loss drops
/// below `cfg.target_loss`. Batches are drawn from seeded per-epoch permutations.
pub fn fit(
    cfg: &ExperimentConfig,
    examples: &[Example],
    classes: usize,
) -> Result<(Model<f32>, Adam<f32>, TrainSummary)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    check_labels(cfg.task, examples, classes)?;
    let spec = cfg.model_spec(examples[0].features.channels, classes);
    spec.validate()?;
    let mut model = Model::<f32>::build(spec, cfg.seed)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let batch_size = cfg.batch_size.min(examples.len());
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if order.len() < batch_size {
            let mut epoch: Vec<usize> = (0..examples.len()).collect();
            epoch.shuffle(&mut rng);
            order = epoch;
        }
        adam.config.lr = cfg.lr * cfg.lr_schedule.factor(step, cfg.steps);
        let batch: Vec<&Example> = order.drain(..batch_size).map(|i| &examples[i]).collect();
        let mut g = Graph::new();
        let bound = model.params().bind(&mut g);
        let x = g.input(batch_input(&batch)?);
        let (out, bn) = model.forward_graph(&mut g, &bound, x, Mode::Train)?;
        let loss = task_loss(&mut g, &out, &batch, cfg, classes)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("loss is {value} at step {step}")));
        }
        g.backward(loss)?;
        let grads: Vec<_> = bound.iter().map(|&v| g.take_grad(v)).collect();
        adam.update(model.params_mut(), &grads)?;
        model.apply_bn_updates(bn);
        losses.push(value);
        if cfg.target_loss.is_some_and(|t| (value as f64) < t) {
            break;
        }
    }
    Ok((model, adam, TrainSummary { losses }))
}

/// Trains on the training split of a feature directory and writes the checkpoint, its metadata
/// sidecar and the per-step loss log.
pub fn train(cfg: &ExperimentConfig, features: &Path, checkpoint: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let dir = FeatureDir::open(features)?;
    let examples = load_examples(&dir, Some(Split::Train), cfg)?;
    let classes = dir.index.classes.len();
    let (model, adam, summary) = fit(cfg, &examples, classes)?;
    if let Some(parent) = checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    save_checkpoint(checkpoint, model.params(), Some(&adam))?;
    let meta = ModelMeta {
        config: cfg.clone(),
        spec: *model.spec(),
        classes: dir.index.classes.clone(),
        normalization: dir.stats.clone(),
        fingerprint: cfg.fingerprint(),
    };
    write_json(&meta_path(checkpoint), &meta)?;
    let mut log = String::from("step,loss\n");
    for (i, l) in summary.losses.iter().enumerate() {
        writeln!(log, "{i},{l}").unwrap();
    }
    let lp = log_path(checkpoint);
    fs::write(&lp, log).map_err(|e| Error::io(&lp, e))?;
    Ok(summary)
}

/// Rebuilds a trained model from its checkpoint and metadata sidecar.
pub fn load_model(checkpoint: &Path) -> Result<(Model<f32>, ModelMeta)> {
    let meta: ModelMeta = read_json(&meta_path(checkpoint))?;
    let mut model = Model::<f32>::build(meta.spec, 0)?;
    load_checkpoint(checkpoint)?.restore(model.params_mut())?;
    Ok((model, meta))
}
