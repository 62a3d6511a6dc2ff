use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::features::Method;
use super::training::TrainingSet;
use super::MarfError;

const OP_BEGIN: u8 = 0;
const OP_PUT: u8 = 1;
const OP_COMMIT: u8 = 2;
/// txn id, opcode and checksum.
const MIN_RECORD: usize = 8 + 1 + 4;

#[derive(Debug, Clone, PartialEq)]
pub enum WalRecord {
    Begin { txn: u64 },
    Put { txn: u64, speaker: String, values: Vec<f64> },
    Commit { txn: u64 },
}

impl WalRecord {
    pub fn txn(&self) -> u64 {
        match self {
            WalRecord::Begin { txn } | WalRecord::Put { txn, .. } | WalRecord::Commit { txn } => *txn,
        }
    }

    /// Length field, txn id, opcode, body, then a CRC-32 of everything before it.
    pub fn encode(&self) -> Vec<u8> {
        let (op, body) = match self {
            WalRecord::Begin { .. } => (OP_BEGIN, Vec::new()),
            WalRecord::Commit { .. } => (OP_COMMIT, Vec::new()),
            WalRecord::Put { speaker, values, .. } => {
                let mut b = Vec::with_capacity(4 + speaker.len() + values.len() * 8);
                b.extend_from_slice(&(speaker.len() as u16).to_be_bytes());
                b.extend_from_slice(speaker.as_bytes());
                b.extend_from_slice(&(values.len() as u16).to_be_bytes());
                for v in values {
                    b.extend_from_slice(&v.to_be_bytes());
                }
                (OP_PUT, b)
            }
        };
        let len = (MIN_RECORD + body.len()) as u32;
        let mut out = Vec::with_capacity(4 + len as usize);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&self.txn().to_be_bytes());
        out.push(op);
        out.extend_from_slice(&body);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        out
    }
}

fn decode_put(txn: u64, body: &[u8]) -> Option<WalRecord> {
    let id_len = u16::from_be_bytes(body.get(..2)?.try_into().ok()?) as usize;
    let speaker = std::str::from_utf8(body.get(2..2 + id_len)?).ok()?.to_string();
    let rest = &body[2 + id_len..];
    let n = u16::from_be_bytes(rest.get(..2)?.try_into().ok()?) as usize;
    let floats = &rest[2..];
    if floats.len() != n * 8 {
        return None;
    }
    let values = floats
        .chunks_exact(8)
        .map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Some(WalRecord::Put { txn, speaker, values })
}

/// Decodes the record at the start of `bytes`, returning it with its encoded
/// length, or `None` when the bytes are torn or corrupt.
pub fn decode_record(bytes: &[u8]) -> Option<(WalRecord, usize)> {
    let len = u32::from_be_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    if len < MIN_RECORD {
        return None;
    }
    let total = 4 + len;
    let rec = bytes.get(..total)?;
    let (payload, crc) = rec.split_at(total - 4);
    if crc32fast::hash(payload) != u32::from_be_bytes(crc.try_into().ok()?) {
        return None;
    }
    let txn = u64::from_be_bytes(payload[4..12].try_into().ok()?);
    let body = &payload[13..];
    let record = match payload[12] {
        OP_BEGIN if body.is_empty() => WalRecord::Begin { txn },
        OP_COMMIT if body.is_empty() => WalRecord::Commit { txn },
        OP_PUT => decode_put(txn, body)?,
        _ => return None,
    };
    Some((record, total))
}

pub type TxnPuts = Vec<(String, Vec<f64>)>;

/// Result of scanning a log image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogScan {
    /// Committed transactions in log order.
    pub committed: Vec<(u64, TxnPuts)>,
    /// Open transaction at the end of the log, if any.
    pub uncommitted: Option<(u64, TxnPuts)>,
    /// Bytes up to the end of the last commit record.
    pub committed_len: usize,
    /// Bytes of well-formed records.
    pub valid_len: usize,
    pub last_txn: u64,
}

pub fn scan(bytes: &[u8]) -> LogScan {
    let mut out = LogScan::default();
    let mut open: Option<(u64, TxnPuts)> = None;
    let mut off = 0;
    while let Some((rec, n)) = decode_record(&bytes[off..]) {
        off += n;
        out.last_txn = out.last_txn.max(rec.txn());
        match rec {
            WalRecord::Begin { txn } => {
                // a begin inside an open txn means the earlier one never committed
                open = Some((txn, Vec::new()));
            }
            WalRecord::Put { txn, speaker, values } => match &mut open {
                Some((t, puts)) if *t == txn => puts.push((speaker, values)),
                _ => {}
            },
            WalRecord::Commit { txn } => {
                if let Some((t, puts)) = open.take() {
                    if t == txn {
                        out.committed.push((t, puts));
                        out.committed_len = off;
                    } else {
                        open = Some((t, puts));
                    }
                }
            }
        }
    }
    out.valid_len = off;
    out.uncommitted = open;
    out
}

/// Source of committed transactions held by another host.
pub trait Replica {
    fn fetch_txn(&self, txn: u64) -> Option<TxnPuts>;
}

/// Replica backed by another host's log file.
pub struct WalReplica {
    path: PathBuf,
}

impl WalReplica {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        WalReplica { path: path.into() }
    }
}

impl Replica for WalReplica {
    fn fetch_txn(&self, txn: u64) -> Option<TxnPuts> {
        let bytes = std::fs::read(&self.path).ok()?;
        scan(&bytes)
            .committed
            .into_iter()
            .find(|(t, _)| *t == txn)
            .map(|(_, puts)| puts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecoveryReport {
    pub replayed: usize,
    /// Bytes of torn or corrupt records cut from the tail.
    pub truncated_bytes: usize,
    pub discarded_txn: Option<u64>,
    pub replicated_txn: Option<u64>,
}

#[derive(Debug)]
pub struct Recovery {
    pub set: TrainingSet,
    pub report: RecoveryReport,
}

/// Rebuilds a training set from its log. Committed transactions are
/// replayed in order; the torn tail is truncated; an uncommitted final
/// transaction is fetched from `replica` when given, otherwise discarded.
pub fn recover(path: &Path, method: Method, replica: Option<&dyn Replica>) -> Result<Recovery, MarfError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let log = scan(&bytes);
    let mut set = TrainingSet::new(method);
    let mut report = RecoveryReport {
        replayed: log.committed.len(),
        truncated_bytes: bytes.len() - log.valid_len,
        ..Default::default()
    };
    for (_, puts) in &log.committed {
        set.apply(puts)?;
    }
    if log.committed_len < bytes.len() {
        OpenOptions::new()
            .write(true)
            .open(path)?
            .set_len(log.committed_len as u64)?;
    }
    if let Some((txn, _)) = log.uncommitted {
        match replica.and_then(|r| r.fetch_txn(txn)) {
            Some(puts) => {
                let mut wal = Wal::open(path)?;
                wal.append_as(txn, &puts)?;
                set.apply(&puts)?;
                report.replicated_txn = Some(txn);
            }
            None => report.discarded_txn = Some(txn),
        }
    }
    Ok(Recovery { set, report })
}

/// Append-only write-ahead log of training transactions.
#[derive(Debug)]
pub struct Wal {
    file: File,
    path: PathBuf,
    next_txn: u64,
    flushes: u64,
    crash_after: Option<u64>,
    durable: bool,
}

impl Wal {
    /// Creates an empty log, replacing any existing file.
    pub fn create(path: &Path) -> Result<Wal, MarfError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        Ok(Wal::with_file(file, path, 1))
    }

    /// Opens an existing log for appending after its last transaction.
    pub fn open(path: &Path) -> Result<Wal, MarfError> {
        let bytes = std::fs::read(path)?;
        let next = scan(&bytes).last_txn + 1;
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Wal::with_file(file, path, next))
    }

    fn with_file(file: File, path: &Path, next_txn: u64) -> Wal {
        Wal {
            file,
            path: path.to_path_buf(),
            next_txn,
            flushes: 0,
            crash_after: None,
            durable: true,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_txn(&self) -> u64 {
        self.next_txn
    }

    pub fn flushes(&self) -> u64 {
        self.flushes
    }

    /// Skips fsync after each record; flushes still reach the OS.
    pub fn set_durable(&mut self, durable: bool) {
        self.durable = durable;
    }

    /// Simulates a crash: once `n` records have been flushed, further
    /// writes fail with [`MarfError::Crashed`] and leave the file untouched.
    pub fn crash_after(&mut self, n: u64) {
        self.crash_after = Some(n);
    }

    fn write_record(&mut self, rec: &WalRecord) -> Result<(), MarfError> {
        if self.crash_after.is_some_and(|n| self.flushes >= n) {
            return Err(MarfError::Crashed);
        }
        self.file.write_all(&rec.encode())?;
        self.file.flush()?;
        if self.durable {
            self.file.sync_data()?;
        }
        self.flushes += 1;
        Ok(())
    }

    /// Writes begin, the puts and commit as one transaction.
    pub fn append(&mut self, puts: &[(String, Vec<f64>)]) -> Result<u64, MarfError> {
        let txn = self.next_txn;
        self.append_as(txn, puts)
    }

    fn append_as(&mut self, txn: u64, puts: &[(String, Vec<f64>)]) -> Result<u64, MarfError> {
        self.write_record(&WalRecord::Begin { txn })?;
        for (speaker, values) in puts {
            self.write_record(&WalRecord::Put {
                txn,
                speaker: speaker.clone(),
                values: values.clone(),
            })?;
        }
        self.write_record(&WalRecord::Commit { txn })?;
        self.next_txn = self.next_txn.max(txn + 1);
        Ok(txn)
    }
}
