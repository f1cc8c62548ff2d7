use aegis_core::provenance::{export, import, verify, Agent, Entry, Ledger, GENESIS_HASH};
use serde_json::json;

/// Plain FIPS 180-4 SHA-256, kept here so record hashes are checked against
/// something other than the crate that produced them.
fn sha256(msg: &[u8]) -> [u8; 32] {
    const K: [u32; 64] = [
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
        0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
        0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
        0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
        0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
        0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2,
    ];
    let mut h: [u32; 8] = [
        0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a, 0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19,
    ];
    let mut data = msg.to_vec();
    data.push(0x80);
    while data.len() % 64 != 56 {
        data.push(0);
    }
    data.extend_from_slice(&((msg.len() as u64) * 8).to_be_bytes());
    for chunk in data.chunks(64) {
        let mut w = [0u32; 64];
        for i in 0..16 {
            w[i] = u32::from_be_bytes(chunk[4 * i..4 * i + 4].try_into().unwrap());
        }
        for i in 16..64 {
            let s0 = w[i - 15].rotate_right(7) ^ w[i - 15].rotate_right(18) ^ (w[i - 15] >> 3);
            let s1 = w[i - 2].rotate_right(17) ^ w[i - 2].rotate_right(19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16].wrapping_add(s0).wrapping_add(w[i - 7]).wrapping_add(s1);
        }
        let mut s = h;
        for i in 0..64 {
            let s1 = s[4].rotate_right(6) ^ s[4].rotate_right(11) ^ s[4].rotate_right(25);
            let ch = (s[4] & s[5]) ^ (!s[4] & s[6]);
            let t1 = s[7].wrapping_add(s1).wrapping_add(ch).wrapping_add(K[i]).wrapping_add(w[i]);
            let s0 = s[0].rotate_right(2) ^ s[0].rotate_right(13) ^ s[0].rotate_right(22);
            let maj = (s[0] & s[1]) ^ (s[0] & s[2]) ^ (s[1] & s[2]);
            let t2 = s0.wrapping_add(maj);
            s = [t1.wrapping_add(t2), s[0], s[1], s[2], s[3].wrapping_add(t1), s[4], s[5], s[6]];
        }
        for (a, b) in h.iter_mut().zip(s) {
            *a = a.wrapping_add(b);
        }
    }
    let mut out = [0u8; 32];
    for (i, v) in h.iter().enumerate() {
        out[4 * i..4 * i + 4].copy_from_slice(&v.to_be_bytes());
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn oracle_known_answers() {
    assert_eq!(hex(&sha256(b"")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    assert_eq!(hex(&sha256(b"abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    assert_eq!(
        hex(&sha256(b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")),
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"
    );
}

fn twenty() -> Ledger {
    let mut l = Ledger::new("s-0001");
    let agents = [Agent::Planner, Agent::Generator, Agent::Reviewer, Agent::Human, Agent::Protector];
    for i in 0..20usize {
        l.push(
            Entry::new(agents[i % agents.len()], format!("step.{i}"), 1_700_000_000_000 + i as i64)
                .input(json!({"i": i, "note": "quote \" and é"}))
                .output(json!([i, i * i]))
                .param("attempt", i % 3)
                .param("ok", i % 2 == 0)
                .param("who", "tester"),
        )
        .unwrap();
    }
    l
}

#[test]
fn record_hashes_match_hand_built_bodies() {
    let l = twenty();
    let mut prev = GENESIS_HASH.to_owned();
    for r in l.records() {
        let params: Vec<String> = r
            .params
            .iter()
            .map(|(k, v)| format!("\"{k}\":{}", serde_json::to_string(v).unwrap()))
            .collect();
        // keys in byte order, no whitespace
        let body = format!(
            "{{\"action\":\"{}\",\"agent\":\"{}\",\"index\":{},\"input_hash\":\"{}\",\"output_hash\":\"{}\",\"params\":{{{}}},\"prev_hash\":\"{}\",\"session_id\":\"{}\",\"timestamp\":{}}}",
            r.action,
            r.agent.as_str(),
            r.index,
            r.input_hash,
            r.output_hash,
            params.join(","),
            prev,
            r.session_id,
            r.timestamp
        );
        assert_eq!(r.prev_hash, prev);
        assert_eq!(r.record_hash, hex(&sha256(body.as_bytes())), "record {}", r.index);
        prev = r.record_hash.clone();
    }
    let i = r#"{"i":3,"note":"quote \" and é"}"#;
    assert_eq!(l.records()[3].input_hash, hex(&sha256(i.as_bytes())));
}

#[test]
fn every_single_byte_flip_is_caught() {
    let bytes = export(&twenty());
    assert_eq!(import(&bytes).unwrap(), twenty());
    let mut missed = Vec::new();
    for pos in 0..bytes.len() {
        for mask in [0x01u8, 0x20, 0xFF] {
            let mut t = bytes.clone();
            t[pos] ^= mask;
            if import(&t).is_ok() {
                missed.push((pos, mask));
            }
        }
    }
    assert!(missed.is_empty(), "{} flips accepted, first {:?}", missed.len(), &missed[..missed.len().min(5)]);
}

#[test]
fn verify_detects_reordering() {
    let l = twenty();
    let mut records = l.records().to_vec();
    records.swap(7, 8);
    assert!(verify(&Ledger::from_records("s-0001", records)).is_err());
}
