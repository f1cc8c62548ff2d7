//! The 64-bit mark: a 48-bit identity hash followed by its CRC-16.

use crc::{Crc, CRC_16_IBM_3740};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::WatermarkError;
use crate::provenance::canonical_serialize;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub const PAYLOAD_BITS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WatermarkPayload {
    pub id48: u64,
    pub crc16: u16,
}

pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

fn id_bytes(id48: u64) -> [u8; 6] {
    let b = id48.to_be_bytes();
    [b[2], b[3], b[4], b[5], b[6], b[7]]
}

impl WatermarkPayload {
    pub fn from_id(id48: u64) -> WatermarkPayload {
        let id48 = id48 & 0xFFFF_FFFF_FFFF;
        WatermarkPayload {
            id48,
            crc16: crc16(&id_bytes(id48)),
        }
    }

    /// Splits 64 bits into id and crc without checking them.
    pub fn from_bits(bits: u64) -> WatermarkPayload {
        WatermarkPayload {
            id48: bits >> 16,
            crc16: bits as u16,
        }
    }

    pub fn bits(&self) -> u64 {
        (self.id48 << 16) | u64::from(self.crc16)
    }

    /// Bit `k`, most significant first.
    pub fn bit(&self, k: usize) -> bool {
        (self.bits() >> (63 - k)) & 1 == 1
    }

    pub fn bit_vec(&self) -> Vec<bool> {
        (0..PAYLOAD_BITS).map(|k| self.bit(k)).collect()
    }

    pub fn crc_ok(&self) -> bool {
        self.id48 <= 0xFFFF_FFFF_FFFF && crc16(&id_bytes(self.id48)) == self.crc16
    }

    pub fn hex(&self) -> String {
        format!("{:016x}", self.bits())
    }
}

/// Identity mark for a piece of content. The id is the first 6 bytes of the
/// SHA-256 of the canonical JSON of the four fields.
pub fn build_payload(
    account_id: &str,
    project_id: &str,
    session_id: &str,
    created_at: i64,
) -> Result<WatermarkPayload, WatermarkError> {
    for (name, v) in [("account_id", account_id), ("project_id", project_id), ("session_id", session_id)] {
        if v.is_empty() {
            return Err(WatermarkError::EmptyIdentifier(name));
        }
    }
    let doc = json!({
        "account_id": account_id,
        "created_at": created_at,
        "project_id": project_id,
        "session_id": session_id,
    });
    let bytes = canonical_serialize(&doc).expect("strings and an integer serialize");
    let digest = Sha256::digest(&bytes);
    let id48 = digest[..6].iter().fold(0u64, |acc, &b| (acc << 8) | u64::from(b));
    Ok(WatermarkPayload::from_id(id48))
}

/// Fraction of the 64 bits of `bits` that match `truth`.
pub fn recovery_rate(truth: &WatermarkPayload, bits: &[bool]) -> Result<f64, WatermarkError> {
    if bits.len() != PAYLOAD_BITS {
        return Err(WatermarkError::LengthMismatch(bits.len()));
    }
    let hits = bits.iter().enumerate().filter(|&(k, &b)| truth.bit(k) == b).count();
    Ok(hits as f64 / PAYLOAD_BITS as f64)
}
