//! Unsupervised atlas detection: geodesic candidate regions are scored against an atlas
//! shape by the cosine of their rotation-invariant features, and the extractor is trained
//! to make the softmax over candidates confident.

use std::collections::BTreeMap;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::equivariant::{EquivariantStack, Mode, NormKind, StackConfig, Tape};
use crate::error::{Error, Result};
use crate::geometry::{geodesic_affinity, median_nn_spacing, GeodesicAffinity, PointCloud};
use crate::model::parse_key_values;
use crate::sphere::{make_grid, respond_from, SphereGrid, SphericalSignal};

/// A region made of an anchor point and its nearest geodesic neighbors.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub anchor: usize,
    /// The anchor first, then neighbors by ascending geodesic distance.
    pub members: Vec<usize>,
    pub response: SphericalSignal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub entropy: f64,
    pub selected: usize,
    /// Members of the selected candidate; empty when produced by [`select`] alone.
    pub members: Vec<usize>,
    /// Entropy after every accepted training step, starting with the untrained value.
    pub entropy_trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionConfig {
    /// Graph radius as a multiple of the median nearest-neighbor spacing.
    pub epsilon_factor: f64,
    pub bandwidth: usize,
    /// Exclusion radius as a fraction of the atlas diameter.
    pub radius: f64,
    pub widths: Vec<usize>,
    pub ring_rank: Option<usize>,
    /// Batch normalization centers features across the pool, which keeps cosines informative.
    pub norm: NormKind,
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            epsilon_factor: 5.0,
            bandwidth: 8,
            radius: 0.1,
            widths: vec![4, 8],
            ring_rank: None,
            norm: NormKind::Batch,
            steps: 200,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl DetectionConfig {
    pub const KEYS: [&'static str; 10] = [
        "bandwidth",
        "epsilon_factor",
        "lr",
        "momentum",
        "norm",
        "radius",
        "ring_rank",
        "seed",
        "steps",
        "widths",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
        }
        match key {
            "bandwidth" => self.bandwidth = num(key, value)?,
            "epsilon_factor" => self.epsilon_factor = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "norm" => self.norm = NormKind::parse(value)?,
            "radius" => self.radius = num(key, value)?,
            "ring_rank" => {
                let p: usize = num(key, value)?;
                self.ring_rank = (p > 0).then_some(p);
            }
            "seed" => self.seed = num(key, value)?,
            "steps" => self.steps = num(key, value)?,
            "widths" => {
                self.widths = value
                    .split(',')
                    .map(|w| num(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::Config(format!("unknown detection key '{key}'"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        let map = BTreeMap::from([
            ("bandwidth", self.bandwidth.to_string()),
            ("epsilon_factor", self.epsilon_factor.to_string()),
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("norm", self.norm.name().to_string()),
            ("radius", self.radius.to_string()),
            ("ring_rank", self.ring_rank.unwrap_or(0).to_string()),
            ("seed", self.seed.to_string()),
            ("steps", self.steps.to_string()),
            ("widths", widths.join(",")),
        ]);
        map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
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
        if !(self.epsilon_factor > 0.0 && self.epsilon_factor.is_finite()) {
            return Err(Error::Config(format!("epsilon_factor must be positive, got {}", self.epsilon_factor)));
        }
        if !(self.radius > 0.0 && self.radius < 1.0) {
            return Err(Error::Config(format!("radius must lie in (0, 1), got {}", self.radius)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("lr must be non-negative and momentum in [0, 1)".into()));
        }
        self.stack_config().validate()
    }

    fn stack_config(&self) -> StackConfig {
        StackConfig {
            bandwidth: self.bandwidth,
            in_channels: 1,
            widths: self.widths.clone(),
            norm: self.norm,
            ring_rank: self.ring_rank,
            activation: true,
        }
    }
}

/// Response of a whole shape seen from its centroid, divided by `radius · N` so that
/// shapes of equal size and extent are comparable.
pub fn shape_response(cloud: &PointCloud, grid: &SphereGrid, radius: f64) -> Result<SphericalSignal> {
    let origin = cloud.mean()?;
    let mut sig = respond_from(cloud, &origin, radius, grid)?;
    let scale = 1.0 / (radius * cloud.len() as f64);
    sig.values_mut().iter_mut().for_each(|v| *v *= scale);
    Ok(sig)
}

/// Member lists of every anchor with at least `m - 1` reachable neighbors.
pub fn candidate_members(affinity: &GeodesicAffinity, m: usize) -> Result<Vec<(usize, Vec<usize>)>> {
    if m == 0 || m > affinity.len() {
        return Err(Error::Size(format!("candidate size {m} for {} points", affinity.len())));
    }
    let mut out = vec![];
    for i in 0..affinity.len() {
        let row = affinity.row(i);
        let mut near: Vec<usize> = (0..row.len()).filter(|&j| j != i && row[j].is_finite()).collect();
        if near.len() < m - 1 {
            debug!("anchor {i} skipped: {} reachable neighbors", near.len());
            continue;
        }
        near.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let mut members = vec![i];
        members.extend_from_slice(&near[..m - 1]);
        out.push((i, members));
    }
    Ok(out)
}

/// Builds one candidate per anchor; the response of each distinct member set is
/// computed once.
pub fn build_candidates(
    cloud: &PointCloud,
    affinity: &GeodesicAffinity,
    m: usize,
    grid: &SphereGrid,
    radius: f64,
) -> Result<Vec<Candidate>> {
    if affinity.len() != cloud.len() {
        return Err(Error::Shape(format!("affinity of {} points for a cloud of {}", affinity.len(), cloud.len())));
    }
    let lists = candidate_members(affinity, m)?;
    let (keys, ids) = dedupe(&lists);
    let responses: Vec<SphericalSignal> = keys
        .par_iter()
        .map(|set| shape_response(&cloud.subset(set), grid, radius))
        .collect::<Result<_>>()?;
    Ok(lists
        .into_iter()
        .zip(ids)
        .map(|((anchor, members), id)| Candidate {
            anchor,
            members,
            response: responses[id].clone(),
        })
        .collect())
}

/// Distinct sorted member sets, and the set index of every list.
fn dedupe(lists: &[(usize, Vec<usize>)]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut index: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut keys = vec![];
    let ids = lists
        .iter()
        .map(|(_, members)| {
            let mut key = members.clone();
            key.sort_unstable();
            *index.entry(key.clone()).or_insert_with(|| {
                keys.push(key);
                keys.len() - 1
            })
        })
        .collect();
    (keys, ids)
}

fn normalized(v: &[f64]) -> (Vec<f64>, f64) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-300 {
        (vec![0.0; v.len()], 0.0)
    } else {
        (v.iter().map(|x| x / n).collect(), n)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity of every candidate's invariant features with the atlas features.
pub fn score_candidates(
    candidates: &[Candidate],
    atlas: &PointCloud,
    extractor: &mut EquivariantStack,
    radius: f64,
) -> Result<Vec<f64>> {
    let b = extractor.config().bandwidth;
    if let Some(c) = candidates.iter().find(|c| c.response.bandwidth() != b || c.response.channels() != 1) {
        return Err(Error::Shape(format!(
            "candidate response has bandwidth {} and {} channels, extractor expects {b} and 1",
            c.response.bandwidth(),
            c.response.channels()
        )));
    }
    let grid = make_grid(b)?;
    let mut inputs = vec![shape_response(atlas, &grid, radius)?.values().to_vec()];
    inputs.extend(candidates.iter().map(|c| c.response.values().to_vec()));
    let feats = extractor.infer(&inputs, Mode::Eval)?;
    let (atlas_u, _) = normalized(&feats[0]);
    Ok(feats[1..].iter().map(|f| dot(&normalized(f).0, &atlas_u)).collect())
}

/// Softmax over scores with its entropy in nats and the most probable index.
pub fn select(scores: &[f64]) -> Result<DetectionResult> {
    if scores.is_empty() {
        return Err(Error::Empty("no candidate scores to select from".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite candidate score".into()));
    }
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probabilities: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let entropy = -probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    let mut selected = 0;
    for (j, p) in probabilities.iter().enumerate() {
        if *p > probabilities[selected] {
            selected = j;
        }
    }
    Ok(DetectionResult {
        scores: scores.to_vec(),
        probabilities,
        entropy: entropy.max(0.0),
        selected,
        members: vec![],
        entropy_trace: vec![],
    })
}

/// Gradient of the softmax entropy with respect to the scores.
pub fn entropy_grad(probabilities: &[f64], entropy: f64) -> Vec<f64> {
    probabilities
        .iter()
        .map(|&p| if p > 0.0 { -p * (p.ln() + entropy) } else { 0.0 })
        .collect()
}

/// Feature extraction over the atlas and the distinct candidate sets, differentiable
/// with respect to the extractor weights.
struct Pool {
    /// Atlas response first, then one response per distinct member set.
    inputs: Vec<Vec<f64>>,
    /// Distinct-set index of every candidate.
    ids: Vec<usize>,
}

struct Evaluation {
    result: DetectionResult,
    tape: Tape,
    feats: Vec<Vec<f64>>,
}

impl Pool {
    fn evaluate(&self, stack: &mut EquivariantStack) -> Result<Evaluation> {
        let (feats, tape) = stack.forward(&self.inputs, Mode::Train)?;
        let (atlas_u, _) = normalized(&feats[0]);
        let unique: Vec<f64> = feats[1..].iter().map(|f| dot(&normalized(f).0, &atlas_u)).collect();
        let scores: Vec<f64> = self.ids.iter().map(|&id| unique[id]).collect();
        Ok(Evaluation {
            result: select(&scores)?,
            tape,
            feats,
        })
    }

    fn gradient(&self, stack: &EquivariantStack, eval: &Evaluation) -> Result<Vec<f64>> {
        let gs = entropy_grad(&eval.result.probabilities, eval.result.entropy);
        let mut g_unique = vec![0.0; eval.feats.len() - 1];
        for (&id, g) in self.ids.iter().zip(&gs) {
            g_unique[id] += g;
        }
        let (v, vn) = normalized(&eval.feats[0]);
        let mut grads = vec![vec![0.0; v.len()]; eval.feats.len()];
        let mut g_v = vec![0.0; v.len()];
        for (u_id, &g) in g_unique.iter().enumerate() {
            let (u, un) = normalized(&eval.feats[u_id + 1]);
            if un == 0.0 {
                continue;
            }
            // s = u·v with u = f/|f|: ds/df = (v - u (u·v)) / |f|.
            let uv = dot(&u, &v);
            for k in 0..v.len() {
                grads[u_id + 1][k] = g * (v[k] - u[k] * uv) / un;
                g_v[k] += g * u[k];
            }
        }
        if vn > 0.0 {
            let vg = dot(&v, &g_v);
            for k in 0..v.len() {
                grads[0][k] = (g_v[k] - v[k] * vg) / vn;
            }
        }
        Ok(stack.backward(&eval.tape, &grads)?.1)
    }
}

/// Full pipeline: candidates of atlas size on the scene's geodesic graph, entropy
/// minimization of a freshly seeded extractor, then selection.
pub fn detect(cloud: &PointCloud, atlas: &PointCloud, config: &DetectionConfig) -> Result<DetectionResult> {
    config.validate()?;
    let m = atlas.len();
    if m < 2 || m > cloud.len() {
        return Err(Error::Size(format!("atlas of {m} points for a scene of {}", cloud.len())));
    }
    let epsilon = config.epsilon_factor * median_nn_spacing(cloud)?;
    let affinity = geodesic_affinity(cloud, epsilon)?;
    let lists = candidate_members(&affinity, m)?;
    if lists.is_empty() {
        return Err(Error::Empty(format!("no anchor has {} reachable neighbors at epsilon {epsilon:.4}", m - 1)));
    }
    let (keys, ids) = dedupe(&lists);
    info!("{} candidates, {} distinct member sets, epsilon {epsilon:.4}", lists.len(), keys.len());

    let radius = config.radius * atlas.diameter();
    let grid = make_grid(config.bandwidth)?;
    let mut inputs = vec![shape_response(atlas, &grid, radius)?.values().to_vec()];
    let responses: Vec<Vec<f64>> = keys
        .par_iter()
        .map(|set| shape_response(&cloud.subset(set), &grid, radius).map(|s| s.values().to_vec()))
        .collect::<Result<_>>()?;
    inputs.extend(responses);
    let pool = Pool { inputs, ids };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut stack = EquivariantStack::new(config.stack_config(), &mut rng)?;
    let mut current = pool.evaluate(&mut stack)?;
    let mut trace = vec![current.result.entropy];
    let mut lr = config.lr;
    let mut velocity = vec![0.0; stack.param_count()];
    for step in 0..config.steps {
        let grad = pool.gradient(&stack, &current)?;
        for (v, g) in velocity.iter_mut().zip(&grad) {
            *v = config.momentum * *v + g;
        }
        let theta = stack.params();
        let trial: Vec<f64> = theta.iter().zip(&velocity).map(|(t, v)| t - lr * v).collect();
        stack.set_params(&trial)?;
        let next = pool.evaluate(&mut stack)?;
        if next.result.entropy <= current.result.entropy {
            current = next;
            trace.push(current.result.entropy);
        } else {
            stack.set_params(&theta)?;
            lr *= 0.5;
            velocity.iter_mut().for_each(|v| *v = 0.0);
            debug!("step {step}: entropy rose, lr halved to {lr:e}");
        }
    }

    let mut result = current.result;
    result.members = lists[result.selected].1.clone();
    result.entropy_trace = trace;
    Ok(result)
}
