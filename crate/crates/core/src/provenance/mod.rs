//! Hash-chained provenance ledger.
//!
//! Each record commits to its predecessor through `prev_hash`, and to its own
//! content through `record_hash`, which is the SHA-256 of the canonical JSON of
//! every other field. The exported `.provlog` format is one canonical JSON
//! record per line.

mod canonical;

pub use canonical::{
    canonical_hash, canonical_serialize, micros, sha256_hex, EMPTY_OBJECT_HASH, MAX_DEPTH,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProvenanceError {
    #[error("floating point value {0} is not allowed in canonical JSON")]
    FloatRejected(String),
    #[error("value nesting exceeds {0} levels")]
    DepthExceeded(usize),
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("ledger verification failed: {0}")]
    VerificationFailed(Violation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Agent {
    Planner,
    Generator,
    Reviewer,
    Integrator,
    Protector,
    Human,
    System,
}

impl Agent {
    pub fn as_str(self) -> &'static str {
        match self {
            Agent::Planner => "planner",
            Agent::Generator => "generator",
            Agent::Reviewer => "reviewer",
            Agent::Integrator => "integrator",
            Agent::Protector => "protector",
            Agent::Human => "human",
            Agent::System => "system",
        }
    }
}

/// Scalar parameter stored in a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Int(i64),
    Str(String),
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}
impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Int(v)
    }
}
impl From<u32> for Scalar {
    fn from(v: u32) -> Self {
        Scalar::Int(i64::from(v))
    }
}
impl From<usize> for Scalar {
    fn from(v: usize) -> Self {
        Scalar::Int(v as i64)
    }
}
impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Str(v.to_owned())
    }
}
impl From<String> for Scalar {
    fn from(v: String) -> Self {
        Scalar::Str(v)
    }
}

/// The caller-supplied part of a record; the ledger fills in the chain fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub timestamp_ms: i64,
    pub agent: Agent,
    pub action: String,
    pub input: Option<Value>,
    pub output: Option<Value>,
    pub params: BTreeMap<String, Scalar>,
}

impl Entry {
    pub fn new(agent: Agent, action: impl Into<String>, timestamp_ms: i64) -> Self {
        Entry {
            timestamp_ms,
            agent,
            action: action.into(),
            input: None,
            output: None,
            params: BTreeMap::new(),
        }
    }

    pub fn input(mut self, v: Value) -> Self {
        self.input = Some(v);
        self
    }

    pub fn output(mut self, v: Value) -> Self {
        self.output = Some(v);
        self
    }

    pub fn param(mut self, key: &str, v: impl Into<Scalar>) -> Self {
        self.params.insert(key.to_owned(), v.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerRecord {
    pub index: u64,
    pub timestamp: i64,
    pub session_id: String,
    pub agent: Agent,
    pub action: String,
    pub input_hash: String,
    pub output_hash: String,
    pub params: BTreeMap<String, Scalar>,
    pub prev_hash: String,
    pub record_hash: String,
}

impl LedgerRecord {
    /// Canonical JSON of every field except `record_hash`.
    fn hashed_body(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("record serializes");
        v.as_object_mut().expect("record is an object").remove("record_hash");
        v
    }

    pub fn compute_hash(&self) -> String {
        canonical_hash(&self.hashed_body()).expect("record bodies are float-free")
    }

    pub fn to_canonical_line(&self) -> Vec<u8> {
        let v = serde_json::to_value(self).expect("record serializes");
        canonical_serialize(&v).expect("record bodies are float-free")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    HashMismatch,
    ChainBreak,
    IndexGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ViolationKind::HashMismatch => "hash_mismatch",
            ViolationKind::ChainBreak => "chain_break",
            ViolationKind::IndexGap => "index_gap",
        };
        write!(f, "{kind} at record {}", self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ledger {
    pub session_id: String,
    records: Vec<LedgerRecord>,
}

impl Ledger {
    pub fn new(session_id: impl Into<String>) -> Self {
        Ledger {
            session_id: session_id.into(),
            records: Vec::new(),
        }
    }

    /// Wraps records without checking them; see [`verify`].
    pub fn from_records(session_id: impl Into<String>, records: Vec<LedgerRecord>) -> Self {
        Ledger {
            session_id: session_id.into(),
            records,
        }
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last_hash(&self) -> &str {
        self.records.last().map_or(GENESIS_HASH, |r| &r.record_hash)
    }

    /// Appends in place and returns the new record.
    pub fn push(&mut self, entry: Entry) -> Result<&LedgerRecord, ProvenanceError> {
        let hash_of = |v: &Option<Value>| match v {
            Some(v) => canonical_hash(v),
            None => Ok(EMPTY_OBJECT_HASH.to_owned()),
        };
        let mut record = LedgerRecord {
            index: self.records.len() as u64,
            timestamp: entry.timestamp_ms,
            session_id: self.session_id.clone(),
            agent: entry.agent,
            action: entry.action,
            input_hash: hash_of(&entry.input)?,
            output_hash: hash_of(&entry.output)?,
            params: entry.params,
            prev_hash: self.last_hash().to_owned(),
            record_hash: String::new(),
        };
        record.record_hash = record.compute_hash();
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }
}

/// Returns a new ledger extended by `entry`; `ledger` is left untouched.
pub fn append(ledger: &Ledger, entry: Entry) -> Result<Ledger, ProvenanceError> {
    let mut next = ledger.clone();
    next.push(entry)?;
    Ok(next)
}

/// Full re-hash scan. Reports the first violation found.
pub fn verify(ledger: &Ledger) -> Result<(), Violation> {
    let mut expected_prev = GENESIS_HASH;
    for (i, r) in ledger.records.iter().enumerate() {
        if r.index != i as u64 {
            return Err(Violation {
                index: i,
                kind: ViolationKind::IndexGap,
            });
        }
        if r.prev_hash != expected_prev {
            return Err(Violation {
                index: i,
                kind: ViolationKind::ChainBreak,
            });
        }
        if r.record_hash != r.compute_hash() {
            return Err(Violation {
                index: i,
                kind: ViolationKind::HashMismatch,
            });
        }
        expected_prev = &r.record_hash;
    }
    Ok(())
}

/// Newline-delimited canonical JSON, one record per line.
pub fn export(ledger: &Ledger) -> Vec<u8> {
    let mut out = Vec::new();
    for r in &ledger.records {
        out.extend_from_slice(&r.to_canonical_line());
        out.push(b'\n');
    }
    out
}

/// Parses and verifies a `.provlog`. Lines must be byte-exact canonical JSON.
pub fn import(bytes: &[u8]) -> Result<Ledger, ProvenanceError> {
    if bytes.is_empty() {
        return Ok(Ledger::default());
    }
    let Some(body) = bytes.strip_suffix(b"\n") else {
        return Err(ProvenanceError::ParseError {
            line: bytes.split(|&b| b == b'\n').count(),
            message: "file does not end with a newline (truncated?)".into(),
        });
    };
    let mut records = Vec::new();
    for (n, line) in body.split(|&b| b == b'\n').enumerate() {
        let parse_err = |message: String| ProvenanceError::ParseError {
            line: n + 1,
            message,
        };
        let value: Value = serde_json::from_slice(line).map_err(|e| parse_err(e.to_string()))?;
        let record: LedgerRecord =
            serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        if record.to_canonical_line() != line {
            return Err(parse_err("record is not in canonical form".into()));
        }
        records.push(record);
    }
    let session_id = records.first().map(|r| r.session_id.clone()).unwrap_or_default();
    if let Some((i, _)) = records.iter().enumerate().find(|(_, r)| r.session_id != session_id) {
        return Err(ProvenanceError::ParseError {
            line: i + 1,
            message: "records belong to different sessions".into(),
        });
    }
    let ledger = Ledger::from_records(session_id, records);
    verify(&ledger).map_err(ProvenanceError::VerificationFailed)?;
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample(n: usize) -> Ledger {
        let mut l = Ledger::new("s-test");
        for i in 0..n {
            l.push(
                Entry::new(Agent::System, "test.event", 1_000 + i as i64)
                    .input(json!({"i": i}))
                    .param("n", i)
                    .param("tag", "x"),
            )
            .unwrap();
        }
        l
    }

    #[test]
    fn append_fills_chain_fields() {
        let empty = Ledger::new("s");
        let one = append(&empty, Entry::new(Agent::Planner, "plan.created", 0)).unwrap();
        assert!(empty.is_empty());
        let r0 = &one.records()[0];
        assert_eq!(r0.index, 0);
        assert_eq!(r0.prev_hash, GENESIS_HASH);
        assert_eq!(r0.input_hash, EMPTY_OBJECT_HASH);
        let two = append(&one, Entry::new(Agent::Planner, "plan.edited", 0)).unwrap();
        assert_eq!(two.records()[1].prev_hash, two.records()[0].record_hash);
        assert_eq!(verify(&two), Ok(()));
    }

    #[test]
    fn tampering_is_located() {
        let l = sample(10);
        assert_eq!(verify(&l), Ok(()));

        let mut records = l.records().to_vec();
        records[4].params.insert("n".into(), Scalar::Int(99));
        assert_eq!(
            verify(&Ledger::from_records("s-test", records)),
            Err(Violation {
                index: 4,
                kind: ViolationKind::HashMismatch
            })
        );

        let mut records = l.records().to_vec();
        records.remove(4);
        let err = verify(&Ledger::from_records("s-test", records)).unwrap_err();
        assert_eq!(err.index, 4);
        assert!(matches!(err.kind, ViolationKind::IndexGap | ViolationKind::ChainBreak));
    }

    #[test]
    fn export_import_round_trip() {
        let l = sample(5);
        let bytes = export(&l);
        assert_eq!(import(&bytes).unwrap(), l);
        assert_eq!(import(b"").unwrap().len(), 0);
    }

    #[test]
    fn import_rejects_truncation_and_edits() {
        let bytes = export(&sample(3));
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(import(cut), Err(ProvenanceError::ParseError { .. })));

        let text = String::from_utf8(bytes).unwrap();
        let edited = text.replacen("\"tag\":\"x\"", "\"tag\":\"y\"", 2);
        match import(edited.as_bytes()) {
            Err(ProvenanceError::VerificationFailed(v)) => {
                assert_eq!(v.index, 0);
                assert_eq!(v.kind, ViolationKind::HashMismatch);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
