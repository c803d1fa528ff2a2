use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ModelConfig, PoolKind, Task};
use crate::equivariant::{EquivariantStack, Mode, NormKind, StackConfig, Tape};
use crate::error::{Error, Result};
use crate::features::{
    affine_coords, max_pool, max_pool_backward, AffineCoords, Attention, AttentionTape, FeatureField, FeatureRole,
    Interpolator, Linear,
};
use crate::geometry::PointCloud;
use crate::sphere::{downsample, make_grid, refined_response_scores, respond, response_scores, ResponseConfig};

/// Training target of a prepared cloud.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    None,
    Class(usize),
    Points(Vec<usize>),
}

/// Everything about a cloud that does not depend on learned parameters.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub subset: Vec<usize>,
    /// One normalized spherical response per subset point.
    pub signals: Vec<Vec<f64>>,
    pub target: Target,
    seg: Option<SegInputs>,
}

#[derive(Clone, Debug)]
struct SegInputs {
    cloud: PointCloud,
    interp: Interpolator,
    affine: AffineCoords,
}

impl Prepared {
    pub fn point_count(&self) -> Option<usize> {
        self.seg.as_ref().map(|s| s.cloud.len())
    }
}

#[derive(Clone, Debug)]
pub enum Head {
    Classifier { conv1: Option<Linear>, fc: Linear },
    Segmenter { attention: Attention, fc: Linear },
}

impl Head {
    fn parts(&self) -> Vec<&Linear> {
        match self {
            Head::Classifier { conv1, fc } => conv1.iter().chain(std::iter::once(fc)).collect(),
            Head::Segmenter { attention, fc } => vec![&attention.neighbor, &attention.head, fc],
        }
    }

    fn parts_mut(&mut self) -> Vec<&mut Linear> {
        match self {
            Head::Classifier { conv1, fc } => conv1.iter_mut().chain(std::iter::once(fc)).collect(),
            Head::Segmenter { attention, fc } => vec![&mut attention.neighbor, &mut attention.head, fc],
        }
    }

    pub fn param_count(&self) -> usize {
        self.parts().iter().map(|l| l.param_count()).sum()
    }
}

enum SampleTape {
    Class {
        rows: Vec<Vec<f64>>,
        features: Vec<Vec<f64>>,
        arg: Vec<usize>,
        pooled: Vec<f64>,
    },
    Seg {
        combined: FeatureField,
        attn: AttentionTape,
    },
}

/// Records of a batched forward pass.
pub struct ModelTape {
    stack: Tape,
    samples: Vec<SampleTape>,
    sizes: Vec<usize>,
}

impl ModelTape {
    /// ReLU signs and max-pool winners; equal patterns mean no kink lies between two passes.
    pub fn pattern(&self) -> (Vec<bool>, Vec<usize>) {
        let winners = self
            .samples
            .iter()
            .flat_map(|s| match s {
                SampleTape::Class { arg, .. } => arg.clone(),
                SampleTape::Seg { .. } => vec![],
            })
            .collect();
        (self.stack.relu_pattern(), winners)
    }
}

/// Rotation-invariant classifier or segmenter.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    stack: EquivariantStack,
    head: Head,
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() + m - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / total).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let stack = EquivariantStack::new(
            StackConfig {
                bandwidth: config.bandwidth,
                in_channels: config.response_channels(),
                widths: config.widths.clone(),
                norm: config.norm,
                ring_rank: config.ring_rank,
                activation: true,
            },
            &mut rng,
        )?;
        let d = stack.output_dim();
        let head = match config.task {
            Task::Classification => {
                let (conv1, width) = match config.pool {
                    PoolKind::Max => (None, d),
                    PoolKind::Conv1 => (Some(Linear::random(d, config.pool_width, &mut rng)?), config.pool_width),
                };
                Head::Classifier {
                    conv1,
                    fc: Linear::random(width, config.classes, &mut rng)?,
                }
            }
            Task::Segmentation => Head::Segmenter {
                attention: Attention::random(d, config.attn_hidden, config.attn_k, &mut rng)?,
                fc: Linear::random(d + config.samples, config.classes, &mut rng)?,
            },
        };
        Ok(Self { config, stack, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stack(&self) -> &EquivariantStack {
        &self.stack
    }

    pub fn stack_mut(&mut self) -> &mut EquivariantStack {
        &mut self.stack
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    /// All learnable scalars, tensor-ring cores included.
    pub fn param_count(&self) -> usize {
        self.stack.param_count() + self.head.param_count()
    }

    /// The same architecture with every kernel stored densely.
    pub fn dense_param_count(&self) -> usize {
        self.stack.dense_param_count() + self.head.param_count()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.stack.params();
        for l in self.head.parts() {
            p.extend(l.params());
        }
        p
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::Shape(format!("{} values for {} parameters", values.len(), self.param_count())));
        }
        let n = self.stack.param_count();
        self.stack.set_params(&values[..n])?;
        let mut at = n;
        for l in self.head.parts_mut() {
            let k = l.param_count();
            l.set_params(&values[at..at + k])?;
            at += k;
        }
        Ok(())
    }

    pub fn buffers(&self) -> Vec<f64> {
        self.stack.buffers()
    }

    pub fn set_buffers(&mut self, values: &[f64]) -> Result<()> {
        self.stack.set_buffers(values)
    }

    /// Downsamples the cloud and computes the normalized responses at the subset.
    pub fn prepare(&self, cloud: &PointCloud, target: Target, seed: u64) -> Result<Prepared> {
        let cfg = &self.config;
        if cloud.len() < cfg.samples {
            return Err(Error::Size(format!(
                "cloud has {} points but the model samples {}",
                cloud.len(),
                cfg.samples
            )));
        }
        let diameter = cloud.diameter();
        if !(diameter > 0.0) {
            return Err(Error::Numerical("cloud has zero diameter".into()));
        }
        let radius = cfg.radius * diameter;
        let rcfg = ResponseConfig {
            radius,
            partitions: cfg.partitions,
            use_normals: cfg.use_normals,
        };
        let grid = make_grid(cfg.bandwidth)?;
        let scores = if cfg.refine {
            refined_response_scores(cloud, &rcfg, &grid)?
        } else {
            response_scores(cloud, &rcfg, &grid)?
        };
        let subset = downsample(&scores, cfg.samples, seed)?;
        let scale = 1.0 / (radius * diameter * cloud.len() as f64);
        let signals = subset
            .par_iter()
            .map(|&i| {
                let s = respond(cloud, i, &rcfg, &grid)?;
                Ok(s.values().iter().map(|v| v * scale).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let seg = match cfg.task {
            Task::Classification => None,
            Task::Segmentation => Some(SegInputs {
                cloud: cloud.clone(),
                interp: Interpolator::new(cloud, &subset, cfg.interp_k.min(subset.len()))?,
                affine: affine_coords(cloud, &subset)?,
            }),
        };
        match (&target, cfg.task) {
            (Target::Class(c), Task::Classification) if *c >= cfg.classes => {
                return Err(Error::Config(format!("label {c} out of range for {} classes", cfg.classes)))
            }
            (Target::Points(p), Task::Segmentation) => {
                if p.len() != cloud.len() {
                    return Err(Error::Shape(format!("{} labels for {} points", p.len(), cloud.len())));
                }
                if let Some(l) = p.iter().find(|&&l| l >= cfg.classes) {
                    return Err(Error::Config(format!("part {l} out of range for {} parts", cfg.classes)));
                }
            }
            (Target::None, _) | (Target::Class(_), Task::Classification) => {}
            _ => return Err(Error::Config("target does not match the model task".into())),
        }
        Ok(Prepared {
            subset,
            signals,
            target,
            seg,
        })
    }

    /// Target taken from the cloud labels for segmentation.
    pub fn prepare_labeled(&self, cloud: &PointCloud, class: Option<usize>, seed: u64) -> Result<Prepared> {
        let target = match self.config.task {
            Task::Classification => class.map_or(Target::None, Target::Class),
            Task::Segmentation => cloud.labels().map_or(Target::None, |l| Target::Points(l.to_vec())),
        };
        self.prepare(cloud, target, seed)
    }

    /// Replaces batch-norm running statistics with batch averages over `prepared` at the
    /// current parameters. A no-op for other normalizations.
    pub fn recalibrate(&mut self, prepared: &[Prepared], batch_size: usize) -> Result<()> {
        if self.config.norm != NormKind::Batch || prepared.is_empty() {
            return Ok(());
        }
        let batches: Vec<Vec<Vec<f64>>> = prepared
            .chunks(batch_size.max(1))
            .map(|chunk| chunk.iter().flat_map(|p| p.signals.iter().cloned()).collect())
            .collect();
        self.stack.recalibrate(&batches)
    }

    /// Logits per prepared cloud: one vector per cloud for classification, row-major
    /// `points × parts` for segmentation.
    pub fn forward(&mut self, batch: &[&Prepared], mode: Mode) -> Result<(Vec<Vec<f64>>, ModelTape)> {
        if batch.is_empty() {
            return Err(Error::Empty("empty batch".into()));
        }
        let sizes: Vec<usize> = batch.iter().map(|p| p.signals.len()).collect();
        let inputs: Vec<Vec<f64>> = batch.iter().flat_map(|p| p.signals.iter().cloned()).collect();
        let (features, stack_tape) = self.stack.forward(&inputs, mode)?;
        let mut logits = Vec::with_capacity(batch.len());
        let mut samples = Vec::with_capacity(batch.len());
        let mut at = 0;
        for (p, &n) in batch.iter().zip(&sizes) {
            let feats = features[at..at + n].to_vec();
            at += n;
            match &self.head {
                Head::Classifier { conv1, fc } => {
                    let rows: Vec<Vec<f64>> = match conv1 {
                        Some(map) => feats.iter().map(|f| map.forward(f)).collect(),
                        None => feats.clone(),
                    };
                    let (pooled, arg) = max_pool(&rows)?;
                    logits.push(fc.forward(&pooled));
                    samples.push(SampleTape::Class {
                        rows,
                        features: feats,
                        arg,
                        pooled,
                    });
                }
                Head::Segmenter { attention, fc } => {
                    let seg = p
                        .seg
                        .as_ref()
                        .ok_or_else(|| Error::State("cloud was prepared for classification".into()))?;
                    let local_s = FeatureField::from_rows(&feats, FeatureRole::Local)?;
                    let local_x = seg.interp.apply(&local_s)?;
                    let (combined, attn) = attention.forward(&local_x, &seg.affine, &seg.cloud)?;
                    let out: Vec<f64> = combined.rows().flat_map(|r| fc.forward(r)).collect();
                    logits.push(out);
                    samples.push(SampleTape::Seg { combined, attn });
                }
            }
        }
        Ok((
            logits,
            ModelTape {
                stack: stack_tape,
                samples,
                sizes,
            },
        ))
    }

    /// Parameter gradient given the logit gradients of every cloud in the batch.
    pub fn backward(&self, tape: &ModelTape, batch: &[&Prepared], grads: &[Vec<f64>]) -> Result<Vec<f64>> {
        if grads.len() != tape.samples.len() || batch.len() != tape.samples.len() {
            return Err(Error::State("gradients do not match the recorded batch".into()));
        }
        let mut head_grad = vec![0.0; self.head.param_count()];
        let mut g_features: Vec<Vec<f64>> = Vec::with_capacity(tape.sizes.iter().sum());
        for ((st, g), p) in tape.samples.iter().zip(grads).zip(batch) {
            match (&self.head, st) {
                (
                    Head::Classifier { conv1, fc },
                    SampleTape::Class {
                        rows,
                        features,
                        arg,
                        pooled,
                    },
                ) => {
                    let offset = conv1.as_ref().map_or(0, Linear::param_count);
                    let g_pooled = fc.backward(pooled, g, &mut head_grad[offset..]);
                    let g_rows = max_pool_backward(arg, &g_pooled, rows.len());
                    match conv1 {
                        Some(map) => {
                            for (f, gr) in features.iter().zip(&g_rows) {
                                g_features.push(map.backward(f, gr, &mut head_grad[..offset]));
                            }
                        }
                        None => g_features.extend(g_rows),
                    }
                }
                (Head::Segmenter { attention, fc }, SampleTape::Seg { combined, attn }) => {
                    let seg = p.seg.as_ref().ok_or_else(|| Error::State("missing segmentation inputs".into()))?;
                    let offset = attention.param_count();
                    let w = combined.dim();
                    let parts = fc.outputs();
                    let mut g_combined = Vec::with_capacity(combined.data().len());
                    for (i, row) in combined.rows().enumerate() {
                        g_combined.extend(fc.backward(row, &g[i * parts..(i + 1) * parts], &mut head_grad[offset..]));
                    }
                    debug_assert_eq!(g_combined.len(), combined.len() * w);
                    let (g_local_x, g_attn) = attention.backward(attn, &g_combined)?;
                    head_grad[..offset].iter_mut().zip(&g_attn).for_each(|(a, b)| *a += b);
                    let d = self.stack.output_dim();
                    let g_local_s = seg.interp.transpose(&g_local_x, d);
                    g_features.extend(g_local_s.chunks_exact(d).map(<[f64]>::to_vec));
                }
                _ => return Err(Error::State("record does not match the model head".into())),
            }
        }
        let (_, mut grad) = self.stack.backward(&tape.stack, &g_features)?;
        grad.extend(head_grad);
        Ok(grad)
    }

    /// Mean loss over the batch, its parameter gradient, and the logits.
    pub fn loss_and_grad(&mut self, batch: &[&Prepared], mode: Mode) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
        let (logits, tape) = self.forward(batch, mode)?;
        let b = batch.len() as f64;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(batch.len());
        for (p, z) in batch.iter().zip(&logits) {
            match &p.target {
                Target::Class(c) => {
                    let (l, g) = cross_entropy(z, *c);
                    loss += l / b;
                    grads.push(g.into_iter().map(|v| v / b).collect());
                }
                Target::Points(labels) => {
                    let parts = self.config.classes;
                    let n = labels.len() as f64;
                    let mut g = Vec::with_capacity(z.len());
                    for (i, &lab) in labels.iter().enumerate() {
                        let (l, gi) = cross_entropy(&z[i * parts..(i + 1) * parts], lab);
                        loss += l / (n * b);
                        g.extend(gi.into_iter().map(|v| v / (n * b)));
                    }
                    grads.push(g);
                }
                Target::None => return Err(Error::Config("training needs labeled clouds".into())),
            }
        }
        let grad = self.backward(&tape, batch, &grads)?;
        Ok((loss, grad, logits))
    }

    /// Class logits of a single cloud, downsampled with the configured seed.
    pub fn forward_classify(&mut self, cloud: &PointCloud) -> Result<Vec<f64>> {
        if self.config.task != Task::Classification {
            return Err(Error::Config("model is not a classifier".into()));
        }
        let p = self.prepare(cloud, Target::None, self.config.seed)?;
        Ok(self.forward(&[&p], Mode::Eval)?.0.remove(0))
    }

    /// Per-point part logits of a single cloud.
    pub fn forward_segment(&mut self, cloud: &PointCloud) -> Result<Vec<Vec<f64>>> {
        if self.config.task != Task::Segmentation {
            return Err(Error::Config("model is not a segmenter".into()));
        }
        let p = self.prepare(cloud, Target::None, self.config.seed)?;
        let flat = self.forward(&[&p], Mode::Eval)?.0.remove(0);
        Ok(flat.chunks_exact(self.config.classes).map(<[f64]>::to_vec).collect())
    }

    /// Predicted class per cloud, or predicted part per point (flattened per cloud).
    pub fn predict(&mut self, batch: &[&Prepared]) -> Result<Vec<Vec<usize>>> {
        let (logits, _) = self.forward(batch, Mode::Eval)?;
        let k = self.config.classes;
        Ok(logits
            .iter()
            .map(|z| match self.config.task {
                Task::Classification => vec![argmax(z)],
                Task::Segmentation => z.chunks_exact(k).map(argmax).collect(),
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivariant::NormKind;
    use crate::geometry::Rotation;
    use crate::model::data::{barbell, sphere_surface};

    fn small_config(task: Task) -> ModelConfig {
        ModelConfig {
            task,
            bandwidth: 4,
            samples: 8,
            widths: vec![2, 3],
            ring_rank: Some(2),
            classes: 2,
            attn_k: 4,
            attn_hidden: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn cross_entropy_gradient() {
        let (l, g) = cross_entropy(&[0.0, 0.0], 1);
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, vec![0.5, -0.5]);
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn permuting_the_cloud_keeps_the_logits() {
        // With |S| = N every point is a camera center, so only the order of the pooled
        // rows changes.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = sphere_surface(24, &mut rng);
        let mut cfg = small_config(Task::Classification);
        cfg.samples = 24;
        let mut model = Model::new(cfg).unwrap();
        let a = model.forward_classify(&cloud).unwrap();
        let perm: Vec<usize> = (0..24).rev().collect();
        let b = model.forward_classify(&cloud.permuted(&perm)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn segmentation_labels_survive_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cloud = barbell(64, &mut rng);
        let mut model = Model::new(small_config(Task::Segmentation)).unwrap();
        let a = model.forward_segment(&cloud).unwrap();
        let b = model.forward_segment(&cloud.rotated(&Rotation::random(5))).unwrap();
        // Untrained logits are near ties, so compare values; the raw sampling error at
        // this bandwidth is a few percent.
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 5e-2 * scale, "{u} vs {v}");
            }
            let margin = (x[0] - x[1]).abs();
            if margin > 0.1 * scale {
                assert_eq!(argmax(x), argmax(y));
            }
        }
    }

    fn fd_check(task: Task, norm: NormKind) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cfg = small_config(task);
        cfg.norm = norm;
        let mut model = Model::new(cfg).unwrap();
        let clouds = [barbell(16, &mut rng), barbell(16, &mut rng)];
        let prepared: Vec<Prepared> = clouds
            .iter()
            .enumerate()
            .map(|(i, c)| model.prepare_labeled(c, Some(i % 2), 0).unwrap())
            .collect();
        let batch: Vec<&Prepared> = prepared.iter().collect();
        model.forward(&batch, Mode::Train).unwrap();
        let (_, grad, _) = model.loss_and_grad(&batch, Mode::Train).unwrap();
        let base = model.params();
        let h = 1e-5;
        let step = (base.len() / 40).max(1);
        let mut checked = 0;
        for j in (0..base.len()).step_by(step) {
            let mut v = base.clone();
            v[j] += h;
            let mut p = model.clone();
            p.set_params(&v).unwrap();
            v[j] -= 2.0 * h;
            let mut m = model.clone();
            m.set_params(&v).unwrap();
            // Central differences are meaningless across a ReLU or max-pool switch.
            if p.forward(&batch, Mode::Train).unwrap().1.pattern() != m.forward(&batch, Mode::Train).unwrap().1.pattern() {
                continue;
            }
            let lp = p.loss_and_grad(&batch, Mode::Train).unwrap().0;
            let lm = m.loss_and_grad(&batch, Mode::Train).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1e-7);
            assert!(rel < 1e-4, "param {j}: {fd} vs {}", grad[j]);
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} parameters checked");
    }

    #[test]
    fn classifier_gradient_matches_finite_differences() {
        fd_check(Task::Classification, NormKind::Act);
    }

    #[test]
    fn segmenter_gradient_matches_finite_differences() {
        fd_check(Task::Segmentation, NormKind::Act);
        fd_check(Task::Segmentation, NormKind::Batch);
    }

    #[test]
    fn mismatched_targets_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Model::new(small_config(Task::Classification)).unwrap();
        let cloud = sphere_surface(20, &mut rng);
        assert!(model.prepare(&cloud, Target::Class(5), 0).is_err());
        assert!(model.prepare(&cloud, Target::Points(vec![0; 20]), 0).is_err());
        assert!(matches!(model.prepare(&sphere_surface(4, &mut rng), Target::None, 0), Err(Error::Size(_))));
    }
}
