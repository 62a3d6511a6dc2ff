use serde::{Deserialize, Serialize};

use crate::fabric::b64;
use crate::tier::Stage;

use super::features::{extract_features, FeatureVector, Method};
use super::sample::{load_sample, preprocess, Sample, SampleFormat};
use super::training::{classify, ClassificationResult, Source, TrainingSet};
use super::MarfError;

/// Input of the load stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadInput {
    pub format: SampleFormat,
    #[serde(with = "b64")]
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractInput {
    #[serde(flatten)]
    pub method: Method,
    pub sample: Sample,
}

/// Classification output as stored in a demand store. The source is kept out
/// so replicated and computed answers are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub speaker_id: String,
    pub distance: f64,
}

impl Answer {
    pub fn into_result(self, sample_id: &str, source: Source) -> ClassificationResult {
        ClassificationResult {
            sample_id: sample_id.to_string(),
            speaker_id: self.speaker_id,
            distance: self.distance,
            source,
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("stage values serialize")
}

fn from_json<'a, T: Deserialize<'a>>(bytes: &'a [u8]) -> Result<T, String> {
    serde_json::from_slice(bytes).map_err(|e| format!("bad stage payload: {e}"))
}

pub fn load_input(format: SampleFormat, data: &[u8]) -> Vec<u8> {
    to_json(&LoadInput {
        format,
        data: data.to_vec(),
    })
}

pub fn run_load(input: &[u8]) -> Result<Vec<u8>, String> {
    let inp: LoadInput = from_json(input)?;
    let s = load_sample(&inp.data, inp.format).map_err(|e| e.to_string())?;
    Ok(to_json(&s))
}

pub fn run_preprocess(input: &[u8]) -> Result<Vec<u8>, String> {
    let s: Sample = from_json(input)?;
    if s.channel.is_empty() {
        return Err(MarfError::Empty.to_string());
    }
    Ok(to_json(&preprocess(&s)))
}

pub fn run_extract(input: &[u8]) -> Result<Vec<u8>, String> {
    let inp: ExtractInput = from_json(input)?;
    Ok(to_json(&extract_features(&inp.sample, inp.method)))
}

pub fn run_classify(set: &TrainingSet, input: &[u8]) -> Result<Vec<u8>, String> {
    let fv: FeatureVector = from_json(input)?;
    let r = classify(set, &fv).map_err(|e| e.to_string())?;
    Ok(to_json(&Answer {
        speaker_id: r.speaker_id,
        distance: r.distance,
    }))
}

pub fn decode_answer(bytes: &[u8]) -> Result<Answer, String> {
    from_json(bytes)
}

/// Runs one of the pure stages.
pub fn run_stage(stage: Stage, input: &[u8]) -> Result<Vec<u8>, String> {
    match stage {
        Stage::Load => run_load(input),
        Stage::Preprocess => run_preprocess(input),
        Stage::Extract => run_extract(input),
        Stage::Classify => Err("classification needs a training set".into()),
    }
}

/// Builds the input of the stage after `stage` from its output.
pub fn next_input(stage: Stage, output: &[u8], method: Method) -> Result<Vec<u8>, String> {
    match stage {
        Stage::Load | Stage::Extract => Ok(output.to_vec()),
        Stage::Preprocess => Ok(to_json(&ExtractInput {
            method,
            sample: from_json(output)?,
        })),
        Stage::Classify => Err("classification is the last stage".into()),
    }
}

/// The four stages applied directly, without demands.
pub fn compose(
    data: &[u8],
    format: SampleFormat,
    method: Method,
    set: &TrainingSet,
) -> Result<ClassificationResult, MarfError> {
    let s = preprocess(&load_sample(data, format)?);
    classify(set, &extract_features(&s, method))
}

/// Feature vector of a training recording.
pub fn training_vector(data: &[u8], format: SampleFormat, method: Method) -> Result<FeatureVector, MarfError> {
    Ok(extract_features(&preprocess(&load_sample(data, format)?), method))
}
