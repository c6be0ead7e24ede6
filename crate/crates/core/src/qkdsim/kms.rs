//! Line-delimited JSON key delivery, shaped after ETSI GS QKD 014.
//!
//! Requests:
//!
//! ```text
//! {"verb":"STATUS"}
//! {"verb":"ENC_KEYS","number":1,"size":256}
//! {"verb":"DEC_KEYS","key_ids":["1b4e28ba-2fa1-11d2-883f-0016d3cca427"]}
//! ```
//!
//! Any request may carry `"peer":"<node>"` to pick the store shared with a
//! given peer when a node has several. Key responses are
//! `{"keys":[{"key_ID":"<uuid>","key":"<base64>"}]}`; failures are
//! `{"error":"<code>","message":"..."}`.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::store::{DeliveredKey, KeyStoreStatus, PairedKeyStore, Side};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verb", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KmsRequest {
    Status {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        peer: Option<String>,
    },
    EncKeys {
        #[serde(default = "one")]
        number: usize,
        #[serde(default = "block")]
        size: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        peer: Option<String>,
    },
    DecKeys {
        key_ids: Vec<Uuid>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        peer: Option<String>,
    },
}

fn one() -> usize {
    1
}

fn block() -> usize {
    crate::keycore::KEY_BLOCK_BITS
}

impl KmsRequest {
    pub fn peer(&self) -> Option<&str> {
        match self {
            KmsRequest::Status { peer } | KmsRequest::EncKeys { peer, .. } | KmsRequest::DecKeys { peer, .. } => {
                peer.as_deref()
            }
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntryJson {
    pub key_ID: Uuid,
    pub key: String,
}

impl From<&DeliveredKey> for KeyEntryJson {
    fn from(k: &DeliveredKey) -> Self {
        Self {
            key_ID: k.key_id,
            key: B64.encode(k.key.as_bytes()),
        }
    }
}

impl KeyEntryJson {
    pub fn key_bytes(&self) -> Result<Vec<u8>, base64::DecodeError> {
        B64.decode(&self.key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KmsResponse {
    Keys { keys: Vec<KeyEntryJson> },
    Status(KeyStoreStatus),
    Error { error: String, message: String },
}

impl KmsResponse {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        KmsResponse::Error {
            error: code.into(),
            message: message.into(),
        }
    }
}

impl<'de> Deserialize<'de> for KeyStoreStatus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            stored_key_count: usize,
            key_size_bits: usize,
            capacity: Option<usize>,
        }
        let r = Raw::deserialize(d)?;
        Ok(KeyStoreStatus {
            stored_key_count: r.stored_key_count,
            key_size_bits: r.key_size_bits,
            capacity: r.capacity,
        })
    }
}

/// Executes one request against the `side` view of `store`.
pub fn handle_request(store: &mut PairedKeyStore, side: Side, request: &KmsRequest) -> KmsResponse {
    let keys = |r: Result<Vec<DeliveredKey>, super::SimError>| match r {
        Ok(keys) => KmsResponse::Keys {
            keys: keys.iter().map(KeyEntryJson::from).collect(),
        },
        Err(e) => KmsResponse::error(e.code(), e.to_string()),
    };
    match request {
        KmsRequest::Status { .. } => KmsResponse::Status(store.status(side)),
        KmsRequest::EncKeys { number, size, .. } => keys(store.get_enc_keys(side, *number, *size)),
        KmsRequest::DecKeys { key_ids, .. } => keys(store.get_dec_keys(side, key_ids)),
    }
}
