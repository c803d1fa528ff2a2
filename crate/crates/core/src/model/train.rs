use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{parse_key_values, Task};
use super::data::Sample;
use super::metrics::{accuracy, mean_iou};
use super::net::{Model, Prepared, Target};
use crate::equivariant::Mode;
use crate::error::{Error, Result};
use crate::features::{deform, DeformParams};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Random deformation redrawn for every batch; 0 disables it.
    pub deform_scale: f64,
    pub deform_hidden: usize,
    /// Largest allowed gradient norm per step; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
            deform_scale: 0.0,
            deform_hidden: 8,
            clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 8] = [
        "batch_size",
        "clip_norm",
        "deform_hidden",
        "deform_scale",
        "epochs",
        "lr",
        "momentum",
        "train_seed",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("invalid value '{value}' for '{key}'"));
        match key {
            "epochs" => self.epochs = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad())?,
            "lr" => self.lr = value.parse().map_err(|_| bad())?,
            "momentum" => self.momentum = value.parse().map_err(|_| bad())?,
            "train_seed" => self.seed = value.parse().map_err(|_| bad())?,
            "deform_scale" => self.deform_scale = value.parse().map_err(|_| bad())?,
            "deform_hidden" => self.deform_hidden = value.parse().map_err(|_| bad())?,
            "clip_norm" => self.clip_norm = value.parse().map_err(|_| bad())?,
            _ => return Err(Error::Config(format!("unknown training key '{key}'"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "batch_size = {}\nclip_norm = {}\ndeform_hidden = {}\ndeform_scale = {}\nepochs = {}\nlr = {}\nmomentum = {}\ntrain_seed = {}\n",
            self.batch_size, self.clip_norm, self.deform_hidden, self.deform_scale, self.epochs, self.lr, self.momentum, self.seed
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (line, k, v) in parse_key_values(text)? {
            cfg.set(&k, &v).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("lr must be nonnegative and momentum in [0, 1)".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be nonnegative".into()));
        }
        if !(self.deform_scale >= 0.0) {
            return Err(Error::Config("deform_scale must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss: f64,
    /// Training accuracy or mIoU over the epoch, measured before each update.
    pub metric: f64,
    pub metric_name: &'static str,
}

impl EpochRecord {
    pub fn to_json(&self) -> String {
        format!(
            "{{\"epoch\":{},\"step\":{},\"loss\":{},\"{}\":{}}}",
            self.epoch, self.step, self.loss, self.metric_name, self.metric
        )
    }
}

/// Momentum SGD: `v ← μv + g`, `θ ← θ − ηv`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, params: usize) -> Self {
        Self {
            lr,
            momentum,
            velocity: vec![0.0; params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p -= self.lr * *v;
        }
    }
}

fn target_of(model: &Model, sample: &Sample) -> Target {
    match model.config().task {
        Task::Classification => sample.label.map_or(Target::None, Target::Class),
        Task::Segmentation => sample.cloud.labels().map_or(Target::None, |l| Target::Points(l.to_vec())),
    }
}

pub fn prepare_all(model: &Model, samples: &[Sample]) -> Result<Vec<Prepared>> {
    let seed = model.config().seed;
    samples
        .iter()
        .map(|s| model.prepare(&s.cloud, target_of(model, s), seed))
        .collect()
}

/// Epoch metric from logits: accuracy or mIoU.
fn epoch_metric(task: Task, classes: usize, items: &[(&Prepared, Vec<f64>)]) -> Result<f64> {
    match task {
        Task::Classification => {
            let (mut pred, mut truth) = (vec![], vec![]);
            for (p, z) in items {
                if let Target::Class(c) = p.target {
                    pred.push(super::net::argmax(z));
                    truth.push(c);
                }
            }
            accuracy(&pred, &truth)
        }
        Task::Segmentation => {
            let mut shapes = vec![];
            for (p, z) in items {
                if let Target::Points(labels) = &p.target {
                    let pred = z.chunks_exact(classes).map(super::net::argmax).collect();
                    shapes.push((0, pred, labels.clone()));
                }
            }
            mean_iou(&shapes, classes)
        }
    }
}

/// Trains in place and returns one record per epoch; `on_epoch` sees each record as it
/// is produced. Actnorm layers are initialized from the first batch before any update;
/// batch-norm statistics are recomputed over the training set after the last update.
pub fn train(
    model: &mut Model,
    samples: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let mut prepared = prepare_all(model, samples)?;
    if prepared.iter().any(|p| p.target == Target::None) {
        return Err(Error::Config("every training cloud needs a label".into()));
    }
    let bs = cfg.batch_size.min(samples.len());
    {
        let first: Vec<&Prepared> = prepared.iter().take(bs).collect();
        model.forward(&first, Mode::Train)?;
    }
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum, model.param_count());
    let mut params = model.params();
    let mut step = 0;
    let mut records = vec![];
    let task = model.config().task;
    let classes = model.config().classes;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64)));
        let mut total = 0.0;
        let mut seen: Vec<(usize, Vec<f64>)> = Vec::with_capacity(samples.len());
        for chunk in order.chunks(bs) {
            if cfg.deform_scale > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let net = DeformParams::random(&[cfg.deform_hidden], cfg.deform_scale, &mut rng)?;
                for &i in chunk {
                    let moved = deform(&samples[i].cloud, &net)?;
                    prepared[i] = model.prepare(&moved, target_of(model, &samples[i]), model.config().seed)?;
                }
            }
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
            let (loss, mut grad, logits) = model.loss_and_grad(&batch, Mode::Train)?;
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss {loss} at epoch {epoch}, step {step}; gradient norm {norm}"
                )));
            }
            if cfg.clip_norm > 0.0 && norm > cfg.clip_norm {
                grad.iter_mut().for_each(|g| *g *= cfg.clip_norm / norm);
            }
            total += loss * chunk.len() as f64;
            sgd.step(&mut params, &grad);
            model.set_params(&params)?;
            step += 1;
            seen.extend(chunk.iter().copied().zip(logits));
        }
        let items: Vec<(&Prepared, Vec<f64>)> = seen.into_iter().map(|(i, z)| (&prepared[i], z)).collect();
        let record = EpochRecord {
            epoch,
            step,
            loss: total / samples.len() as f64,
            metric: epoch_metric(task, classes, &items)?,
            metric_name: match task {
                Task::Classification => "accuracy",
                Task::Segmentation => "miou",
            },
        };
        log::info!("{}", record.to_json());
        on_epoch(&record);
        records.push(record);
    }
    model.recalibrate(&prepared, bs)?;
    Ok(records)
}

/// Accuracy for classification, mIoU for segmentation, in evaluation mode.
pub fn evaluate(model: &mut Model, samples: &[Sample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set is empty".into()));
    }
    let prepared = prepare_all(model, samples)?;
    evaluate_prepared(model, &prepared, batch_size)
}

pub fn evaluate_prepared(model: &mut Model, prepared: &[Prepared], batch_size: usize) -> Result<f64> {
    if prepared.is_empty() {
        return Err(Error::Empty("evaluation set is empty".into()));
    }
    let mut items = vec![];
    for chunk in prepared.chunks(batch_size.max(1)) {
        let batch: Vec<&Prepared> = chunk.iter().collect();
        let (logits, _) = model.forward(&batch, Mode::Eval)?;
        items.extend(batch.into_iter().zip(logits));
    }
    epoch_metric(model.config().task, model.config().classes, &items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::data::{barbell_dataset, cube_sphere_dataset};
    use crate::model::ModelConfig;

    fn tiny(task: Task) -> ModelConfig {
        ModelConfig {
            task,
            bandwidth: 3,
            samples: 6,
            widths: vec![2, 3],
            ring_rank: Some(2),
            attn_k: 4,
            attn_hidden: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = cube_sphere_dataset(4, 30, &mut rng);
        let mut model = Model::new(tiny(Task::Classification)).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 2,
            lr: 0.0,
            ..TrainConfig::default()
        };
        let mut init = model.clone();
        train(&mut init, &data, &TrainConfig { epochs: 0, ..cfg.clone() }, |_| {}).unwrap();
        train(&mut model, &data, &cfg, |_| {}).unwrap();
        assert_eq!(model.params(), init.params());
    }

    #[test]
    fn single_sample_overfits() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = cube_sphere_dataset(1, 30, &mut rng);
        let mut model = Model::new(tiny(Task::Classification)).unwrap();
        let cfg = TrainConfig {
            epochs: 500,
            batch_size: 1,
            lr: 0.05,
            momentum: 0.9,
            ..TrainConfig::default()
        };
        let records = train(&mut model, &data, &cfg, |_| {}).unwrap();
        let last = records.last().unwrap();
        assert!(last.loss < 1e-2, "loss {}", last.loss);
        assert!(records.iter().position(|r| r.loss < 1e-2).unwrap() < 500);
        assert_eq!(evaluate(&mut model, &data, 1).unwrap(), 1.0);
    }

    #[test]
    fn fixed_seed_gives_identical_logs() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let data = barbell_dataset(3, 24, &mut rng);
            let mut model = Model::new(tiny(Task::Segmentation)).unwrap();
            let cfg = TrainConfig {
                epochs: 2,
                batch_size: 2,
                deform_scale: 0.02,
                ..TrainConfig::default()
            };
            train(&mut model, &data, &cfg, |_| {})
                .unwrap()
                .iter()
                .map(EpochRecord::to_json)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_sets_are_errors() {
        let mut model = Model::new(tiny(Task::Classification)).unwrap();
        assert!(matches!(train(&mut model, &[], &TrainConfig::default(), |_| {}), Err(Error::Empty(_))));
        assert!(matches!(evaluate(&mut model, &[], 4), Err(Error::Empty(_))));
    }

    #[test]
    fn config_text_round_trip() {
        let cfg = TrainConfig {
            lr: 0.0125,
            epochs: 7,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }
}
