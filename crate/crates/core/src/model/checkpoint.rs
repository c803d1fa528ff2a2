//! Checkpoint layout: a text preamble (magic, version, step, config length), the
//! key-sorted config text, then parameters and buffers in the binary envelope.

use super::config::ModelConfig;
use super::net::Model;
use crate::envelope;
use crate::error::{Error, Result};

pub const MAGIC: &str = "POIROT-CHECKPOINT";
pub const VERSION: u32 = 1;

pub fn save(model: &Model, step: usize) -> Vec<u8> {
    let config = model.config().to_text();
    let params = model.params();
    let buffers = model.buffers();
    let mut out = format!("{MAGIC}\nversion = {VERSION}\nstep = {step}\nconfig_bytes = {}\n", config.len()).into_bytes();
    out.extend_from_slice(config.as_bytes());
    out.extend(envelope::encode(params.len(), buffers.len(), &[params, buffers].concat()));
    out
}

fn header_line<'a>(bytes: &'a [u8], at: &mut usize) -> Result<&'a str> {
    let end = bytes[*at..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
    let line = std::str::from_utf8(&bytes[*at..*at + end]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    *at += end + 1;
    Ok(line)
}

fn header_value(line: &str, key: &str) -> Result<usize> {
    line.strip_prefix(key)
        .and_then(|r| r.trim_start().strip_prefix('='))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("expected '{key} = <n>', found '{line}'")))
}

/// Rebuilds the model and returns it with the saved training step.
pub fn load(bytes: &[u8]) -> Result<(Model, usize)> {
    let mut at = 0;
    if header_line(bytes, &mut at)? != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = header_value(header_line(bytes, &mut at)?, "version")?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let step = header_value(header_line(bytes, &mut at)?, "step")?;
    let len = header_value(header_line(bytes, &mut at)?, "config_bytes")?;
    let text = bytes
        .get(at..at + len)
        .and_then(|b| std::str::from_utf8(b).ok())
        .ok_or_else(|| Error::Format("truncated config block".into()))?;
    let config = ModelConfig::from_text(text)?;
    let (n_params, n_buffers, values) = envelope::decode(&bytes[at + len..])?;
    if values.len() != n_params + n_buffers {
        return Err(Error::Format("parameter block length disagrees with its header".into()));
    }
    let mut model = Model::new(config)?;
    model.set_params(&values[..n_params])?;
    model.set_buffers(&values[n_params..])?;
    Ok((model, step))
}
