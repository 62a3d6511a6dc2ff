use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MarfError;

pub const WAVE_MAGIC: &[u8; 4] = b"MRF1";
/// Rate recorded for formats that carry none.
pub const DEFAULT_RATE: u32 = 8_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    Csv,
    WaveStub,
}

impl SampleFormat {
    /// Format implied by a file extension.
    pub fn from_extension(ext: &str) -> Option<SampleFormat> {
        match ext {
            "csv" => Some(SampleFormat::Csv),
            "mrf" => Some(SampleFormat::WaveStub),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub channel: Vec<f64>,
    pub rate: u32,
}

/// Short content digest used as a sample id.
pub fn content_id(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn check_channel(channel: &[f64]) -> Result<(), MarfError> {
    if channel.is_empty() {
        return Err(MarfError::Empty);
    }
    for (i, v) in channel.iter().enumerate() {
        if !v.is_finite() {
            return Err(MarfError::Malformed(format!("amplitude {i} is not finite")));
        }
        if v.abs() > 1.0 {
            return Err(MarfError::Malformed(format!("amplitude {i} ({v}) outside [-1, 1]")));
        }
    }
    Ok(())
}

/// Parses a sample. The id is a digest of `bytes`.
pub fn load_sample(bytes: &[u8], format: SampleFormat) -> Result<Sample, MarfError> {
    let (channel, rate) = match format {
        SampleFormat::Csv => (parse_csv(bytes)?, DEFAULT_RATE),
        SampleFormat::WaveStub => parse_wave_stub(bytes)?,
    };
    check_channel(&channel)?;
    Ok(Sample {
        id: content_id(bytes),
        channel,
        rate,
    })
}

fn parse_csv(bytes: &[u8]) -> Result<Vec<f64>, MarfError> {
    let text = std::str::from_utf8(bytes).map_err(|_| MarfError::Malformed("csv is not UTF-8".into()))?;
    let line = text.strip_suffix('\n').unwrap_or(text);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.contains('\n') {
        return Err(MarfError::Malformed("csv sample must be a single line".into()));
    }
    if line.trim().is_empty() {
        return Err(MarfError::Empty);
    }
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| MarfError::Malformed(format!("bad amplitude {f:?}")))
        })
        .collect()
}

fn parse_wave_stub(bytes: &[u8]) -> Result<(Vec<f64>, u32), MarfError> {
    if bytes.len() < 12 {
        return Err(MarfError::Malformed("wave_stub header truncated".into()));
    }
    if &bytes[..4] != WAVE_MAGIC {
        return Err(MarfError::Malformed("bad wave_stub magic".into()));
    }
    let n = u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let rate = u32::from_be_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let body = &bytes[12..];
    if n == 0 {
        return Err(MarfError::Empty);
    }
    if body.len() != n * 8 {
        return Err(MarfError::Malformed(format!(
            "wave_stub declares {n} samples but carries {} bytes",
            body.len()
        )));
    }
    let channel = body
        .chunks_exact(8)
        .map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((channel, rate))
}

pub fn write_wave_stub(channel: &[f64], rate: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + channel.len() * 8);
    out.extend_from_slice(WAVE_MAGIC);
    out.extend_from_slice(&(channel.len() as u32).to_be_bytes());
    out.extend_from_slice(&rate.to_be_bytes());
    for v in channel {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn write_csv(channel: &[f64]) -> String {
    let fields: Vec<String> = channel.iter().map(|v| v.to_string()).collect();
    fields.join(",") + "\n"
}

/// Peak normalization: divides by the largest absolute amplitude. An
/// all-zero channel is returned unchanged.
pub fn preprocess(sample: &Sample) -> Sample {
    let peak = sample.channel.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let channel = if peak == 0.0 {
        sample.channel.clone()
    } else {
        sample.channel.iter().map(|v| v / peak).collect()
    };
    Sample {
        id: sample.id.clone(),
        channel,
        rate: sample.rate,
    }
}
