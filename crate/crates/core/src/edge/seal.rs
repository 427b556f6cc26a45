//! Authenticated sealing and the one-time URL format.

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};

use crate::digest::Digest;

pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TOKEN_ID_LEN: usize = 16;

/// Token key from the half kept by the node and the half carried in the URL.
pub fn derive_token_key(server_half: &[u8; KEY_LEN], url_half: &[u8; KEY_LEN]) -> [u8; KEY_LEN] {
    Digest::of_parts(&[b"otu-v1", server_half, url_half]).0
}

/// `nonce || ciphertext`
pub fn seal(key: &[u8; KEY_LEN], nonce: &[u8; NONCE_LEN], plaintext: &[u8], aad: &[u8]) -> Vec<u8> {
    let cipher = ChaCha20Poly1305::new(Key::from_slice(key));
    let ct = cipher
        .encrypt(Nonce::from_slice(nonce), Payload { msg: plaintext, aad })
        .expect("in-memory encryption does not fail");
    let mut out = nonce.to_vec();
    out.extend_from_slice(&ct);
    out
}

pub fn open(key: &[u8; KEY_LEN], sealed: &[u8], aad: &[u8]) -> Option<Vec<u8>> {
    if sealed.len() < NONCE_LEN {
        return None;
    }
    let (nonce, ct) = sealed.split_at(NONCE_LEN);
    ChaCha20Poly1305::new(Key::from_slice(key))
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .ok()
}

/// `otu://<node-id>/<tokenId>#<keyPartBase64url>`
#[derive(Clone, PartialEq, Eq)]
pub struct OneTimeUrl {
    pub node_id: String,
    pub token_id: String,
    pub key_part: [u8; KEY_LEN],
}

// The key part stays out of debug output.
impl fmt::Debug for OneTimeUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OneTimeUrl")
            .field("node_id", &self.node_id)
            .field("token_id", &self.token_id)
            .finish_non_exhaustive()
    }
}

impl fmt::Display for OneTimeUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "otu://{}/{}#{}",
            self.node_id,
            self.token_id,
            URL_SAFE_NO_PAD.encode(self.key_part)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed one-time URL")]
pub struct UrlError;

impl FromStr for OneTimeUrl {
    type Err = UrlError;

    fn from_str(s: &str) -> Result<Self, UrlError> {
        let rest = s.strip_prefix("otu://").ok_or(UrlError)?;
        let (path, fragment) = rest.split_once('#').ok_or(UrlError)?;
        let (node_id, token_id) = path.split_once('/').ok_or(UrlError)?;
        let url_safe = |t: &str| {
            !t.is_empty()
                && t
                    .bytes()
                    .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
        };
        if !url_safe(token_id) || node_id.is_empty() || node_id.contains(['/', '#']) {
            return Err(UrlError);
        }
        let key = URL_SAFE_NO_PAD.decode(fragment).map_err(|_| UrlError)?;
        Ok(OneTimeUrl {
            node_id: node_id.to_string(),
            token_id: token_id.to_string(),
            key_part: key.try_into().map_err(|_| UrlError)?,
        })
    }
}

pub fn encode_token_id(raw: &[u8; TOKEN_ID_LEN]) -> String {
    URL_SAFE_NO_PAD.encode(raw)
}
