//! SHA3-256 (FIPS 202) over a hand-rolled Keccak-f[1600] permutation.
//!
//! Used for EHR payload digests and for the ledger's block and payload hashes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const RATE: usize = 136;
const OUT_LEN: usize = 32;
const ROUNDS: usize = 24;

const ROUND_CONSTANTS: [u64; ROUNDS] = [
    0x0000_0000_0000_0001,
    0x0000_0000_0000_8082,
    0x8000_0000_0000_808a,
    0x8000_0000_8000_8000,
    0x0000_0000_0000_808b,
    0x0000_0000_8000_0001,
    0x8000_0000_8000_8081,
    0x8000_0000_0000_8009,
    0x0000_0000_0000_008a,
    0x0000_0000_0000_0088,
    0x0000_0000_8000_8009,
    0x0000_0000_8000_000a,
    0x0000_0000_8000_808b,
    0x8000_0000_0000_008b,
    0x8000_0000_0000_8089,
    0x8000_0000_0000_8003,
    0x8000_0000_0000_8002,
    0x8000_0000_0000_0080,
    0x0000_0000_0000_800a,
    0x8000_0000_8000_000a,
    0x8000_0000_8000_8081,
    0x8000_0000_0000_8080,
    0x0000_0000_8000_0001,
    0x8000_0000_8000_8008,
];

// Rotation offsets and lane permutation for the combined rho/pi step,
// walking the pi cycle starting from lane 1.
const RHO: [u32; 24] = [
    1, 3, 6, 10, 15, 21, 28, 36, 45, 55, 2, 14, 27, 41, 56, 8, 25, 43, 62, 18, 39, 61, 20, 44,
];
const PI: [usize; 24] = [
    10, 7, 11, 17, 18, 3, 5, 16, 8, 21, 24, 4, 15, 23, 19, 13, 12, 2, 20, 14, 22, 9, 6, 1,
];

fn keccak_f(state: &mut [u64; 25]) {
    for rc in ROUND_CONSTANTS {
        // theta
        let mut c = [0u64; 5];
        for (x, col) in c.iter_mut().enumerate() {
            *col = state[x] ^ state[x + 5] ^ state[x + 10] ^ state[x + 15] ^ state[x + 20];
        }
        for x in 0..5 {
            let d = c[(x + 4) % 5] ^ c[(x + 1) % 5].rotate_left(1);
            for y in 0..5 {
                state[x + 5 * y] ^= d;
            }
        }

        // rho + pi
        let mut carry = state[1];
        for (&rot, &dst) in RHO.iter().zip(PI.iter()) {
            let next = state[dst];
            state[dst] = carry.rotate_left(rot);
            carry = next;
        }

        // chi
        for y in 0..5 {
            let row = [
                state[5 * y],
                state[5 * y + 1],
                state[5 * y + 2],
                state[5 * y + 3],
                state[5 * y + 4],
            ];
            for x in 0..5 {
                state[5 * y + x] = row[x] ^ (!row[(x + 1) % 5] & row[(x + 2) % 5]);
            }
        }

        // iota
        state[0] ^= rc;
    }
}

/// Incremental SHA3-256 hasher.
#[derive(Clone)]
pub struct Sha3_256 {
    state: [u64; 25],
    buf: [u8; RATE],
    filled: usize,
}

impl Default for Sha3_256 {
    fn default() -> Self {
        Self::new()
    }
}

impl Sha3_256 {
    pub fn new() -> Self {
        Self {
            state: [0; 25],
            buf: [0; RATE],
            filled: 0,
        }
    }

    pub fn update(&mut self, mut data: &[u8]) {
        while !data.is_empty() {
            let take = (RATE - self.filled).min(data.len());
            self.buf[self.filled..self.filled + take].copy_from_slice(&data[..take]);
            self.filled += take;
            data = &data[take..];
            if self.filled == RATE {
                self.absorb_block();
            }
        }
    }

    fn absorb_block(&mut self) {
        for (lane, chunk) in self.state.iter_mut().zip(self.buf.chunks_exact(8)) {
            *lane ^= u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        keccak_f(&mut self.state);
        self.filled = 0;
    }

    pub fn finalize(mut self) -> Digest {
        // SHA-3 domain separation bits 01 followed by pad10*1.
        self.buf[self.filled..].fill(0);
        self.buf[self.filled] ^= 0x06;
        self.buf[RATE - 1] ^= 0x80;
        self.filled = RATE;
        self.absorb_block();

        let mut out = [0u8; OUT_LEN];
        for (chunk, lane) in out.chunks_exact_mut(8).zip(self.state.iter()) {
            chunk.copy_from_slice(&lane.to_le_bytes());
        }
        Digest(out)
    }
}

/// A 32-byte SHA3-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub [u8; OUT_LEN]);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DigestParseError {
    #[error("digest must be 64 hex characters, got {0}")]
    Length(usize),
    #[error("digest must be lowercase hex")]
    Charset,
}

impl Digest {
    pub const ZERO: Digest = Digest([0; OUT_LEN]);

    pub fn of(data: &[u8]) -> Self {
        let mut h = Sha3_256::new();
        h.update(data);
        h.finalize()
    }

    pub fn of_parts(parts: &[&[u8]]) -> Self {
        let mut h = Sha3_256::new();
        for p in parts {
            h.update(p);
        }
        h.finalize()
    }

    pub fn as_bytes(&self) -> &[u8; OUT_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Parses exactly 64 lowercase hex characters.
    pub fn from_hex(s: &str) -> Result<Self, DigestParseError> {
        if s.len() != 2 * OUT_LEN {
            return Err(DigestParseError::Length(s.len()));
        }
        if !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(DigestParseError::Charset);
        }
        let mut out = [0u8; OUT_LEN];
        hex::decode_to_slice(s, &mut out).map_err(|_| DigestParseError::Charset)?;
        Ok(Digest(out))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// SHA3-256 of `payload` as 64 lowercase hex characters.
pub fn compute_digest(payload: &[u8]) -> String {
    Digest::of(payload).to_hex()
}
