use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::Variant;
use crate::audit::HonestyLevel;
use crate::keycore::KeyRegister;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    LengthAnnounce,
    LengthDecision,
    KemPublicKey,
    KemCiphertext,
    NonceAnnounce,
    /// OTP-protected payload on hop `n - 1`; `m_1` leaves Alice.
    Payload(u32),
    Abort,
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MessageKind::LengthAnnounce => f.write_str("LengthAnnounce"),
            MessageKind::LengthDecision => f.write_str("LengthDecision"),
            MessageKind::KemPublicKey => f.write_str("KemPublicKey"),
            MessageKind::KemCiphertext => f.write_str("KemCiphertext"),
            MessageKind::NonceAnnounce => f.write_str("NonceAnnounce"),
            MessageKind::Payload(n) => write!(f, "Payload_m{n}"),
            MessageKind::Abort => f.write_str("Abort"),
        }
    }
}

impl FromStr for MessageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "LengthAnnounce" => MessageKind::LengthAnnounce,
            "LengthDecision" => MessageKind::LengthDecision,
            "KemPublicKey" => MessageKind::KemPublicKey,
            "KemCiphertext" => MessageKind::KemCiphertext,
            "NonceAnnounce" => MessageKind::NonceAnnounce,
            "Abort" => MessageKind::Abort,
            other => match other.strip_prefix("Payload_m").and_then(|n| n.parse().ok()) {
                Some(n) if n > 0 => MessageKind::Payload(n),
                _ => return Err(format!("unknown message kind {other:?}")),
            },
        })
    }
}

impl Serialize for MessageKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MessageKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod b64_bytes {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(v))
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        B64.decode(s).map_err(serde::de::Error::custom)
    }
}

mod b64_register {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &KeyRegister, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(v.to_canonical_bytes()))
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<KeyRegister, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = B64.decode(s).map_err(serde::de::Error::custom)?;
        KeyRegister::from_canonical_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

mod b64_register_map {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &BTreeMap<String, KeyRegister>, s: S) -> Result<S::Ok, S::Error> {
        let encoded: BTreeMap<&str, String> = v
            .iter()
            .map(|(k, r)| (k.as_str(), B64.encode(r.to_canonical_bytes())))
            .collect();
        encoded.serialize(s)
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BTreeMap<String, KeyRegister>, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let bytes = B64.decode(v).map_err(serde::de::Error::custom)?;
                let reg = KeyRegister::from_canonical_bytes(&bytes).map_err(serde::de::Error::custom)?;
                Ok((k, reg))
            })
            .collect()
    }
}

/// One message on an authenticated classical channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMessage {
    pub seq: u64,
    pub from: String,
    pub to: String,
    pub kind: MessageKind,
    #[serde(with = "b64_bytes")]
    pub body: Vec<u8>,
}

impl ChannelMessage {
    /// Whether this message travels on the channel between `x` and `y`.
    pub fn on_channel(&self, x: &str, y: &str) -> bool {
        (self.from == x && self.to == y) || (self.from == y && self.to == x)
    }

    pub fn touches(&self, node: &str) -> bool {
        self.from == node || self.to == node
    }

    pub fn body_register(&self) -> Option<KeyRegister> {
        KeyRegister::from_canonical_bytes(&self.body).ok()
    }

    pub fn body_u64(&self) -> Option<u64> {
        self.body.as_slice().try_into().ok().map(u64::from_be_bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Alice,
    Intermediary,
    Bob,
}

/// QKD key material a node holds for one of its links.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldQkdKey {
    pub link_id: String,
    pub peer: String,
    #[serde(with = "b64_register")]
    pub key: KeyRegister,
}

/// Private state of one node at the end of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub node: String,
    pub role: Role,
    pub honesty: HonestyLevel,
    pub qkd_keys: Vec<HeldQkdKey>,
    #[serde(with = "b64_register_map")]
    pub secrets: BTreeMap<String, KeyRegister>,
}

impl NodeSnapshot {
    pub fn qkd_key_with(&self, peer: &str) -> Option<&KeyRegister> {
        self.qkd_keys.iter().find(|k| k.peer == peer).map(|k| &k.key)
    }
}

/// Public session metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub session_id: u64,
    pub variant: Variant,
    pub chain: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kem_params: Option<String>,
    pub provider: String,
}

/// Append-only record of a session: every channel message plus end-of-session
/// node snapshots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTranscript {
    pub header: TranscriptHeader,
    messages: Vec<ChannelMessage>,
    node_states: Vec<NodeSnapshot>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TranscriptRecord {
    Session(TranscriptHeader),
    Message(ChannelMessage),
    NodeState(NodeSnapshot),
}

impl SessionTranscript {
    pub fn new(header: TranscriptHeader) -> Self {
        Self {
            header,
            messages: Vec::new(),
            node_states: Vec::new(),
        }
    }

    pub fn send(&mut self, from: &str, to: &str, kind: MessageKind, body: Vec<u8>) -> &ChannelMessage {
        let seq = self.messages.len() as u64;
        self.messages.push(ChannelMessage {
            seq,
            from: from.into(),
            to: to.into(),
            kind,
            body,
        });
        self.messages.last().expect("just pushed")
    }

    pub fn record_state(&mut self, snapshot: NodeSnapshot) {
        self.node_states.push(snapshot);
    }

    pub fn messages(&self) -> &[ChannelMessage] {
        &self.messages
    }

    pub fn node_states(&self) -> &[NodeSnapshot] {
        &self.node_states
    }

    pub fn node_state(&self, node: &str) -> Option<&NodeSnapshot> {
        self.node_states.iter().find(|s| s.node == node)
    }

    pub fn find(&self, kind: MessageKind) -> Option<&ChannelMessage> {
        self.messages.iter().find(|m| m.kind == kind)
    }

    pub fn payloads(&self) -> impl Iterator<Item = &ChannelMessage> {
        self.messages
            .iter()
            .filter(|m| matches!(m.kind, MessageKind::Payload(_)))
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut line = |rec: &TranscriptRecord| -> io::Result<()> {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")
        };
        line(&TranscriptRecord::Session(self.header.clone()))?;
        for m in &self.messages {
            line(&TranscriptRecord::Message(m.clone()))?;
        }
        for s in &self.node_states {
            line(&TranscriptRecord::NodeState(s.clone()))?;
        }
        Ok(())
    }

    /// Reads every session of a JSON-lines transcript file.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<SessionTranscript>, TranscriptError> {
        let mut out: Vec<SessionTranscript> = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| TranscriptError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TranscriptRecord = serde_json::from_str(&line).map_err(|e| TranscriptError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            match rec {
                TranscriptRecord::Session(h) => out.push(SessionTranscript::new(h)),
                TranscriptRecord::Message(m) => {
                    let t = out.last_mut().ok_or(TranscriptError::MissingHeader { line: n + 1 })?;
                    if m.seq != t.messages.len() as u64 {
                        return Err(TranscriptError::Parse {
                            line: n + 1,
                            message: format!("sequence gap: expected {}, got {}", t.messages.len(), m.seq),
                        });
                    }
                    t.messages.push(m);
                }
                TranscriptRecord::NodeState(s) => out
                    .last_mut()
                    .ok_or(TranscriptError::MissingHeader { line: n + 1 })?
                    .node_states
                    .push(s),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: record before any session header")]
    MissingHeader { line: usize },
    #[error("io: {0}")]
    Io(String),
}
