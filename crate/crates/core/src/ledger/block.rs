use serde::{Deserialize, Serialize};

use crate::digest::{Digest, Sha3_256};

use super::codec::{CodecError, Decoder, Encoder};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub payload_hash: Digest,
    /// Canonical encoding of the block's records.
    #[serde(with = "payload_hex")]
    pub payload: Vec<u8>,
    pub block_hash: Digest,
}

mod payload_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// SHA3-256 over the raw previous hash, the raw payload hash and the
/// big-endian height.
pub fn block_hash(prev_hash: &Digest, payload_hash: &Digest, height: u64) -> Digest {
    let mut h = Sha3_256::new();
    h.update(&prev_hash.0);
    h.update(&payload_hash.0);
    h.update(&height.to_be_bytes());
    h.finalize()
}

impl Block {
    /// Builds the block that follows `prev` (or the genesis block).
    pub fn next(prev: Option<&Block>, payload: Vec<u8>) -> Block {
        let (height, prev_hash) = match prev {
            Some(b) => (b.height + 1, b.block_hash),
            None => (0, Digest::ZERO),
        };
        let payload_hash = Digest::of(&payload);
        Block {
            height,
            prev_hash,
            payload_hash,
            block_hash: block_hash(&prev_hash, &payload_hash, height),
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        e.u64(self.height)
            .raw(&self.prev_hash.0)
            .raw(&self.payload_hash.0)
            .raw(&self.block_hash.0)
            .bytes(&self.payload);
        e.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Block, CodecError> {
        let mut d = Decoder::new(bytes);
        let height = d.u64()?;
        let digest = |d: &mut Decoder| -> Result<Digest, CodecError> {
            Ok(Digest(d.take(32)?.try_into().expect("32 bytes")))
        };
        let prev_hash = digest(&mut d)?;
        let payload_hash = digest(&mut d)?;
        let block_hash = digest(&mut d)?;
        let payload = d.bytes()?.to_vec();
        d.finish()?;
        Ok(Block {
            height,
            prev_hash,
            payload_hash,
            payload,
            block_hash,
        })
    }
}

/// Revalidates every link and payload hash. Returns the first bad height.
pub fn verify_chain(blocks: &[Block]) -> Result<(), u64> {
    let mut prev = Digest::ZERO;
    for (i, b) in blocks.iter().enumerate() {
        let i = i as u64;
        let ok = b.height == i
            && b.prev_hash == prev
            && Digest::of(&b.payload) == b.payload_hash
            && block_hash(&b.prev_hash, &b.payload_hash, b.height) == b.block_hash;
        if !ok {
            return Err(i);
        }
        prev = b.block_hash;
    }
    Ok(())
}
