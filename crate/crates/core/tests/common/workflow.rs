//! Synthetic datasets on disk and the small-model overfit harness.

use std::path::{Path, PathBuf};

use listenkit::audio::{LabelBundle, Split};
use listenkit::models::Arch;
use listenkit::nn::{Graph, Mode, PoolKind, Tensor};
use listenkit::pipeline::{
    extract, fit, load_examples, predict_frames, synthesize, Example, ExperimentConfig, FeatureDir,
    LrSchedule, ModelConfig, SynthConfig, TaskKind,
};

pub const TASKS: [TaskKind; 4] = [
    TaskKind::ClipClass,
    TaskKind::ClipTag,
    TaskKind::FrameSed,
    TaskKind::Seld,
];

/// Synthesizes `synth` under `root/audio` and extracts it into `root/features`.
pub fn feature_dir(root: &Path, synth: &SynthConfig, cfg: &ExperimentConfig) -> PathBuf {
    let audio = root.join("audio");
    let ds = synthesize(synth, &audio).unwrap();
    let out = root.join("features");
    extract(
        &ds.manifest,
        &ds.vocabulary,
        ds.events.as_deref(),
        &out,
        cfg,
    )
    .unwrap();
    out
}

pub fn small_config(task: TaskKind, arch: Arch, pool: PoolKind, base: usize) -> ExperimentConfig {
    ExperimentConfig {
        task,
        model: ModelConfig {
            arch,
            pool,
            base_channels: base,
        },
        batch_size: 8,
        ..Default::default()
    }
}

pub const OVERFIT_BASE_CHANNELS: usize = 4;
pub const OVERFIT_SECONDS: f64 = 2.0;
pub const OVERFIT_STEPS: usize = 500;
pub const OVERFIT_TARGET: f64 = 0.01;

pub fn overfit_config(task: TaskKind, arch: Arch, pool: PoolKind) -> ExperimentConfig {
    ExperimentConfig {
        steps: OVERFIT_STEPS,
        lr: 1e-2,
        lr_schedule: LrSchedule::Cosine,
        target_loss: Some(OVERFIT_TARGET),
        ..small_config(task, arch, pool, OVERFIT_BASE_CHANNELS)
    }
}

#[derive(Debug, Clone)]
pub struct Overfit {
    pub steps: usize,
    pub final_loss: f32,
    /// Training accuracy of the fitted batch, clip classification only.
    pub accuracy: Option<f64>,
    /// Mean absolute direction error over active frames in normalized units, localisation only.
    pub doa_mae: Option<f64>,
}

/// Fits one architecture/head pair to the 8-clip synthetic set. Event boundaries sit on the
/// model's output time grid so that frame targets are representable.
pub fn overfit(root: &Path, task: TaskKind, arch: Arch, pool: PoolKind) -> Overfit {
    let cfg = overfit_config(task, arch, pool);
    let grid = cfg.model_spec(1, 3).downsample_factor() as f64 / 64.0;
    let synth = SynthConfig {
        task,
        seconds: OVERFIT_SECONDS,
        event_grid: Some(grid),
        ..Default::default()
    };
    let dir = FeatureDir::open(feature_dir(root, &synth, &cfg)).unwrap();
    let examples = load_examples(&dir, Some(Split::Train), &cfg).unwrap();
    let classes = dir.index.classes.len();
    let (model, _, summary) = fit(&cfg, &examples, classes).unwrap();

    let accuracy = (task == TaskKind::ClipClass).then(|| {
        let f = &examples[0].features;
        let data = examples
            .iter()
            .flat_map(|e| e.features.data.iter().copied())
            .collect();
        let x = Tensor::from_vec(&[examples.len(), f.channels, f.frames, f.mels], data).unwrap();
        let mut g = Graph::new();
        let bound = model.params().bind(&mut g);
        let x = g.input(x);
        let (out, _) = model.forward_graph(&mut g, &bound, x, Mode::Train).unwrap();
        let logits = g.value(out.logits).data().to_vec();
        let correct = examples
            .iter()
            .zip(logits.chunks(classes))
            .filter(|(e, row)| {
                let pred = (0..classes)
                    .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .unwrap();
                e.labels.clip_tags()[pred]
            })
            .count();
        correct as f64 / examples.len() as f64
    });
    let doa_mae = (task == TaskKind::Seld).then(|| doa_mae(&model, &examples));
    Overfit {
        steps: summary.steps(),
        final_loss: summary.final_loss(),
        accuracy,
        doa_mae,
    }
}

/// Eval-mode direction error, azimuth over 180 and elevation over 90, averaged over both angles
/// of every active (frame, class) pair.
pub fn doa_mae(model: &listenkit::models::Model<f32>, examples: &[Example]) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for ex in examples {
        let LabelBundle::Seld {
            active,
            azimuth,
            elevation,
            ..
        } = &ex.labels
        else {
            panic!("seld labels")
        };
        let p = predict_frames(model, &ex.features).unwrap();
        let (azi, ele) = (p.azimuth.unwrap(), p.elevation.unwrap());
        for i in (0..active.len()).filter(|&i| active[i]) {
            sum += ((azi[i] - azimuth[i]) / 180.0).abs() as f64
                + ((ele[i] - elevation[i]) / 90.0).abs() as f64;
            n += 2;
        }
    }
    sum / n as f64
}
