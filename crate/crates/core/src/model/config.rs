use std::collections::BTreeMap;

use crate::equivariant::NormKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Classification,
    Segmentation,
}

impl Task {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classification" | "classify" => Ok(Self::Classification),
            "segmentation" | "segment" => Ok(Self::Segmentation),
            _ => Err(Error::Config(format!("unknown task '{s}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Classification => "classification",
            Self::Segmentation => "segmentation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Conv1,
}

impl PoolKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "conv1" => Ok(Self::Conv1),
            _ => Err(Error::Config(format!("unknown pooling '{s}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::Conv1 => "conv1",
        }
    }
}

/// Architecture and preprocessing settings of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub task: Task,
    pub bandwidth: usize,
    /// Exclusion radius as a fraction of the cloud diameter.
    pub radius: f64,
    /// Number of downsampled points `|S|`.
    pub samples: usize,
    pub widths: Vec<usize>,
    pub norm: NormKind,
    /// Tensor-ring core size; `None` keeps dense kernels.
    pub ring_rank: Option<usize>,
    /// Classes for classification, parts for segmentation.
    pub classes: usize,
    pub partitions: usize,
    pub use_normals: bool,
    /// Downsample with sphere-wide maxima instead of grid maxima.
    pub refine: bool,
    pub interp_k: usize,
    pub attn_k: usize,
    pub attn_hidden: usize,
    pub pool: PoolKind,
    pub pool_width: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            task: Task::Classification,
            bandwidth: 8,
            radius: 0.2,
            samples: 32,
            widths: vec![8, 16, 16],
            norm: NormKind::Act,
            ring_rank: Some(4),
            classes: 2,
            partitions: 1,
            use_normals: false,
            refine: true,
            interp_k: 3,
            attn_k: 8,
            attn_hidden: 8,
            pool: PoolKind::Max,
            pool_width: 16,
            seed: 0,
        }
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped. Returns `(line, key, value)`.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = vec![];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected 'key = value', found '{line}'"),
            })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for '{key}'")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl ModelConfig {
    pub const KEYS: [&'static str; 17] = [
        "attn_hidden",
        "attn_k",
        "bandwidth",
        "classes",
        "interp_k",
        "norm",
        "partitions",
        "pool",
        "pool_width",
        "radius",
        "refine",
        "ring_rank",
        "samples",
        "seed",
        "task",
        "use_normals",
        "widths",
    ];

    /// Sets one key; unknown keys are a configuration error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = Task::parse(value)?,
            "bandwidth" => self.bandwidth = num(key, value)?,
            "radius" => self.radius = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "widths" => {
                self.widths = value
                    .split(',')
                    .map(|w| num(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            "norm" => self.norm = NormKind::parse(value)?,
            "ring_rank" => {
                let p: usize = num(key, value)?;
                self.ring_rank = (p > 0).then_some(p);
            }
            "classes" => self.classes = num(key, value)?,
            "partitions" => self.partitions = num(key, value)?,
            "use_normals" => self.use_normals = boolean(key, value)?,
            "refine" => self.refine = boolean(key, value)?,
            "interp_k" => self.interp_k = num(key, value)?,
            "attn_k" => self.attn_k = num(key, value)?,
            "attn_hidden" => self.attn_hidden = num(key, value)?,
            "pool" => self.pool = PoolKind::parse(value)?,
            "pool_width" => self.pool_width = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown model key '{key}'"))),
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<&'static str, String> {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        BTreeMap::from([
            ("attn_hidden", self.attn_hidden.to_string()),
            ("attn_k", self.attn_k.to_string()),
            ("bandwidth", self.bandwidth.to_string()),
            ("classes", self.classes.to_string()),
            ("interp_k", self.interp_k.to_string()),
            ("norm", self.norm.name().to_string()),
            ("partitions", self.partitions.to_string()),
            ("pool", self.pool.name().to_string()),
            ("pool_width", self.pool_width.to_string()),
            ("radius", self.radius.to_string()),
            ("refine", self.refine.to_string()),
            ("ring_rank", self.ring_rank.unwrap_or(0).to_string()),
            ("samples", self.samples.to_string()),
            ("seed", self.seed.to_string()),
            ("task", self.task.name().to_string()),
            ("use_normals", self.use_normals.to_string()),
            ("widths", widths.join(",")),
        ])
    }

    /// Canonical key-sorted text form.
    pub fn to_text(&self) -> String {
        self.to_map().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Defaults overridden by the given text; unknown keys are rejected.
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

    pub fn response_channels(&self) -> usize {
        if self.use_normals {
            self.partitions
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidth < 2 {
            return Err(Error::Config("bandwidth must be at least 2".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config("radius must be positive".into()));
        }
        if self.samples == 0 || self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("samples and widths must be positive".into()));
        }
        if self.classes < 1 || self.partitions < 1 {
            return Err(Error::Config("classes and partitions must be positive".into()));
        }
        if self.task == Task::Segmentation && self.samples < 4 {
            return Err(Error::Config("segmentation needs at least 4 samples for affine coordinates".into()));
        }
        if self.interp_k == 0 || self.attn_k == 0 || self.attn_hidden == 0 || self.pool_width == 0 {
            return Err(Error::Config("neighborhood and hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ModelConfig::default();
        cfg.task = Task::Segmentation;
        cfg.radius = 0.123456789;
        cfg.widths = vec![3, 5];
        cfg.ring_rank = None;
        let back = ModelConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.to_map().len(), ModelConfig::KEYS.len());
        assert!(cfg.to_map().keys().copied().eq(ModelConfig::KEYS));
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let err = ModelConfig::from_text("bandwidth = 4\n\nfoo = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        assert!(ModelConfig::from_text("bandwidth 4").is_err());
    }
}
