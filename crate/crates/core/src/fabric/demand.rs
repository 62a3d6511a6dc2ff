use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Unique identity of a unit of work.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature(String);

impl Signature {
    pub fn new(s: impl Into<String>) -> Self {
        Signature(s.into())
    }

    /// `stage:<sha256 of input, hex>`, the identity of a procedural demand.
    pub fn for_stage(stage: &str, input: &[u8]) -> Self {
        let digest = Sha256::digest(input);
        let mut hex = String::with_capacity(64);
        for b in digest.iter() {
            hex.push_str(&format!("{b:02x}"));
        }
        Signature(format!("{stage}:{hex}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The part before the first `:`, if any.
    pub fn stage(&self) -> Option<&str> {
        self.0.split_once(':').map(|(s, _)| s)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Signature {
    fn from(s: &str) -> Self {
        Signature::new(s)
    }
}

impl From<String> for Signature {
    fn from(s: String) -> Self {
        Signature(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkerId(pub String);

impl WorkerId {
    pub fn new(s: impl Into<String>) -> Self {
        WorkerId(s.into())
    }
}

impl fmt::Display for WorkerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandKind {
    Intensional,
    Procedural,
    Resource,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandState {
    Pending,
    InProcess,
    Computed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demand {
    pub signature: Signature,
    pub kind: DemandKind,
    pub payload: Vec<u8>,
    pub state: DemandState,
    pub result: Option<Vec<u8>>,
    pub issuer: String,
    pub attempt: u32,
}

impl Demand {
    pub fn new(
        signature: impl Into<Signature>,
        kind: DemandKind,
        payload: Vec<u8>,
        issuer: impl Into<String>,
    ) -> Self {
        Demand {
            signature: signature.into(),
            kind,
            payload,
            state: DemandState::Pending,
            result: None,
            issuer: issuer.into(),
            attempt: 1,
        }
    }
}

const OK: u8 = 0;
const FAILED: u8 = 1;

/// Result bytes of a successfully computed demand.
pub fn success(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 1);
    out.push(OK);
    out.extend_from_slice(body);
    out
}

/// Result bytes of a demand that failed permanently.
pub fn failure(reason: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(reason.len() + 1);
    out.push(FAILED);
    out.extend_from_slice(reason.as_bytes());
    out
}

/// Splits stored result bytes into the computed body or the failure reason.
pub fn decode_result(bytes: &[u8]) -> Result<&[u8], String> {
    match bytes.split_first() {
        Some((&OK, body)) => Ok(body),
        Some((&FAILED, reason)) => Err(String::from_utf8_lossy(reason).into_owned()),
        _ => Err("malformed result".to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_signatures_are_content_addressed() {
        let a = Signature::for_stage("load", b"0.1,0.2");
        let b = Signature::for_stage("load", b"0.1,0.2");
        let c = Signature::for_stage("load", b"0.1,0.3");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.stage(), Some("load"));
        assert_eq!(a.as_str().len(), "load:".len() + 64);
    }

    #[test]
    fn result_framing() {
        assert_eq!(decode_result(&success(b"abc")), Ok(&b"abc"[..]));
        assert_eq!(decode_result(&failure("boom")), Err("boom".to_string()));
        assert!(decode_result(&[]).is_err());
    }
}
