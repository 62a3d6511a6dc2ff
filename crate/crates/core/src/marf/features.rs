use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::sample::Sample;

pub const DEFAULT_BINS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    MinMax,
    Spectral { bins: usize },
}

impl Default for Method {
    fn default() -> Self {
        Method::Spectral { bins: DEFAULT_BINS }
    }
}

impl Method {
    /// Length of the vectors this method produces.
    pub fn len(self) -> usize {
        match self {
            Method::MinMax => 2,
            Method::Spectral { bins } => bins,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sample_id: String,
    pub method: Method,
    pub values: Vec<f64>,
}

pub fn extract_features(sample: &Sample, method: Method) -> FeatureVector {
    let values = match method {
        Method::MinMax => {
            let min = sample.channel.iter().copied().fold(f64::INFINITY, f64::min);
            let max = sample.channel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![min, max]
        }
        Method::Spectral { bins } => spectrum(&sample.channel, bins),
    };
    FeatureVector {
        sample_id: sample.id.clone(),
        method,
        values,
    }
}

/// Magnitudes of the first `bins` DFT bins over the first `2 * bins`
/// samples (zero-padded), each divided by the window length.
pub fn spectrum(channel: &[f64], bins: usize) -> Vec<f64> {
    let n = 2 * bins;
    let window: Vec<f64> = (0..n).map(|i| channel.get(i).copied().unwrap_or(0.0)).collect();
    (0..bins)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, x) in window.iter().enumerate() {
                // reduce k*j mod n first so the angle stays exact-ish
                let angle = 2.0 * PI * ((k * j) % n) as f64 / n as f64;
                re += x * angle.cos();
                im -= x * angle.sin();
            }
            re.hypot(im) / n as f64
        })
        .collect()
}
