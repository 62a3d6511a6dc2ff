//! Wire format shared by every transport: a 4-byte big-endian length
//! followed by a UTF-8 JSON body. Each received frame is acknowledged with
//! the single byte [`ACK`] before the reply frame.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::demand::{Demand, DemandKind, DemandState, Signature};

pub const ACK: u8 = 0x06;
pub const MAX_FRAME: usize = 64 << 20;

pub fn encode_frame(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
    out
}

pub fn write_frame<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    w.write_all(&encode_frame(body))?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(body)
}

/// Splits a complete `length + body` buffer.
pub fn decode_frame(bytes: &[u8]) -> io::Result<&[u8]> {
    if bytes.len() < 4 {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    bytes
        .get(4..4 + len)
        .ok_or_else(|| io::ErrorKind::UnexpectedEof.into())
}

pub(crate) mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
            match bytes {
                Some(b) => s.serialize_some(&STANDARD.encode(b)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| STANDARD.decode(s).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

/// A demand (or a result) as carried on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireDemand {
    pub signature: Signature,
    pub kind: DemandKind,
    pub attempt: u32,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
}

impl WireDemand {
    pub fn from_demand(d: &Demand) -> Self {
        WireDemand {
            signature: d.signature.clone(),
            kind: d.kind,
            attempt: d.attempt,
            payload: d.payload.clone(),
        }
    }

    pub fn into_demand(self, issuer: &str, state: DemandState) -> Demand {
        Demand {
            signature: self.signature,
            kind: self.kind,
            payload: self.payload,
            state,
            result: None,
            issuer: issuer.to_string(),
            attempt: self.attempt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    /// Issue a demand.
    Demand(WireDemand),
    /// Complete a demand; `payload` holds the result bytes.
    Result(WireDemand),
    Fail { signature: Signature, reason: String },
    Take { worker: String },
    Lookup { signature: Signature },
    State { signature: Signature },
    RequeueLost { worker: String },
    Retry { signature: Signature },
    Defer { signature: Signature, waiting_on: Signature },
    ComputedSince { cursor: usize },
    Ping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    /// Per-client-instance nonce; a restarted client reuses its name but
    /// not its session, so cached replies never leak across incarnations.
    #[serde(default)]
    pub session: u64,
    pub rid: u64,
    pub from: String,
    #[serde(flatten)]
    pub request: Request,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Shutdown,
    Protocol,
    Full,
    BadRequest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputedItem {
    pub signature: Signature,
    #[serde(with = "b64")]
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reply", rename_all = "snake_case")]
pub enum Reply {
    Enqueued,
    Deduplicated,
    AlreadyComputed {
        #[serde(with = "b64")]
        payload: Vec<u8>,
    },
    Demand {
        demand: Option<WireDemand>,
        issuer: Option<String>,
    },
    Done,
    Count {
        n: usize,
    },
    Attempt {
        attempt: u32,
    },
    Deferred,
    Cycle,
    Found {
        #[serde(with = "b64::opt")]
        payload: Option<Vec<u8>>,
    },
    State {
        state: Option<DemandState>,
    },
    Computed {
        items: Vec<ComputedItem>,
        cursor: usize,
    },
    Pong,
    Error {
        kind: ErrorKind,
        message: String,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_layout_is_length_prefixed_json() {
        let env = Envelope {
            session: 7,
            rid: 1,
            from: "n1".into(),
            request: Request::Demand(WireDemand {
                signature: "0,3".into(),
                kind: DemandKind::Intensional,
                attempt: 1,
                payload: b"hi".to_vec(),
            }),
        };
        let body = serde_json::to_vec(&env).unwrap();
        let frame = encode_frame(&body);
        assert_eq!(&frame[..4], &(body.len() as u32).to_be_bytes());
        let json: serde_json::Value = serde_json::from_slice(&frame[4..]).unwrap();
        assert_eq!(json["op"], "demand");
        assert_eq!(json["signature"], "0,3");
        assert_eq!(json["kind"], "intensional");
        assert_eq!(json["attempt"], 1);
        assert_eq!(json["payload"], "aGk=");
        let back: Envelope = serde_json::from_slice(decode_frame(&frame).unwrap()).unwrap();
        assert_eq!(back, env);
    }

    #[test]
    fn oversized_frames_are_rejected() {
        let mut bytes = ((MAX_FRAME + 1) as u32).to_be_bytes().to_vec();
        bytes.extend_from_slice(&[0; 8]);
        assert!(read_frame(&mut &bytes[..]).is_err());
    }

    #[test]
    fn truncated_frame() {
        let frame = encode_frame(b"abcdef");
        assert!(read_frame(&mut &frame[..7]).is_err());
        assert!(decode_frame(&frame[..7]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn frames_round_trip(body in proptest::collection::vec(proptest::num::u8::ANY, 0..512)) {
            let frame = encode_frame(&body);
            proptest::prop_assert_eq!(read_frame(&mut &frame[..]).unwrap(), body);
        }
    }
}
