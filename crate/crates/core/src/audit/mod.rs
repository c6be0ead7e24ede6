//! Adversary views of relay transcripts and efficiency accounting.
//!
//! "Cannot recover" is operationalised as information accounting: a view
//! either lets its holder rebuild the final key by XOR alone, or it yields a
//! register that differs from the final key and only becomes the final key
//! with an extra secret (the AES key, or the KEM secret key).

mod efficiency;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use efficiency::{
    eta_direct_kem, eta_kem_then_aes, final_rate, measured_eta, percent_2dp, table_one, EfficiencyReport, EtaRow,
};

use crate::cryptoseal::{CryptoError, CryptoProvider, Nonce};
use crate::keycore::{KeyRegister, CIPHER_BLOCK_BITS};
use crate::relay::{ChannelMessage, MessageKind, NodeSnapshot, SessionTranscript, TranscriptHeader, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HonestyLevel {
    Honest,
    HonestButCurious,
    Malicious,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("view of {0} holds no inbound payload")]
    NoPayload(String),
    #[error("view of {observer} lacks the QKD key shared with {peer}")]
    IncompleteView { observer: String, peer: String },
    #[error("rates must be non-negative and eta in (0, 1], got r_ac={r_ac} r_bc={r_bc} eta={eta}")]
    InvalidRate { r_ac: f64, r_bc: f64, eta: f64 },
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Everything one observer gets to see of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryView {
    pub observer: String,
    pub header: Option<TranscriptHeader>,
    pub messages: Vec<ChannelMessage>,
    pub private_state: Vec<NodeSnapshot>,
}

impl AdversaryView {
    pub fn is_empty(&self) -> bool {
        self.messages.is_empty() && self.private_state.is_empty()
    }
}

/// Messages on channels incident to `node` plus that node's own state.
pub fn node_view(transcript: &SessionTranscript, node: &str) -> AdversaryView {
    AdversaryView {
        observer: node.to_string(),
        header: Some(transcript.header.clone()),
        messages: transcript
            .messages()
            .iter()
            .filter(|m| m.touches(node))
            .cloned()
            .collect(),
        private_state: transcript.node_state(node).into_iter().cloned().collect(),
    }
}

/// View of the (first) intermediary node of the chain.
pub fn charlie_view(transcript: &SessionTranscript) -> AdversaryView {
    match transcript.header.chain.get(1) {
        Some(charlie) if transcript.header.chain.len() >= 3 => node_view(transcript, charlie),
        _ => AdversaryView {
            observer: String::new(),
            header: None,
            messages: Vec::new(),
            private_state: Vec::new(),
        },
    }
}

/// Every classical message and no private state, unless `compromised` names
/// nodes whose locations Eve has broken into.
pub fn eve_view(transcript: &SessionTranscript, compromised: &[&str]) -> AdversaryView {
    AdversaryView {
        observer: "eve".into(),
        header: Some(transcript.header.clone()),
        messages: transcript.messages().to_vec(),
        private_state: transcript
            .node_states()
            .iter()
            .filter(|s| compromised.contains(&s.node.as_str()))
            .cloned()
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconstruction {
    pub node: String,
    pub derived: KeyRegister,
    /// Whether the protocol logic says the derived register is the final key.
    pub is_final_key: bool,
}

fn unpad_inbound(view: &AdversaryView, node: &str) -> Result<Reconstruction, AuditError> {
    let inbound = view
        .messages
        .iter()
        .find(|m| m.to == node && matches!(m.kind, MessageKind::Payload(_)))
        .ok_or_else(|| AuditError::NoPayload(node.to_string()))?;
    let body = inbound
        .body_register()
        .ok_or_else(|| AuditError::NoPayload(node.to_string()))?;
    let incomplete = || AuditError::IncompleteView {
        observer: node.to_string(),
        peer: inbound.from.clone(),
    };
    let key = view
        .private_state
        .iter()
        .find(|s| s.node == node)
        .and_then(|s| s.qkd_key_with(&inbound.from))
        .ok_or_else(incomplete)?;
    let pad = key.truncate(body.len()).map_err(|_| incomplete())?;
    let derived = body.xor(&pad).map_err(|_| incomplete())?;
    let is_final_key = view.header.as_ref().is_some_and(|h| h.variant == Variant::Standard);
    Ok(Reconstruction {
        node: node.to_string(),
        derived,
        is_final_key,
    })
}

/// What an honest-but-curious intermediary rebuilds from its view: the
/// inbound payload with its pad removed.
pub fn reconstruct_as_charlie(view: &AdversaryView) -> Result<Reconstruction, AuditError> {
    unpad_inbound(view, &view.observer)
}

/// Reconstruction at a compromised node inside Eve's view.
pub fn reconstruct_at(view: &AdversaryView, node: &str) -> Result<Reconstruction, AuditError> {
    unpad_inbound(view, node)
}

/// Decrypts a reconstructed AES ciphertext with the auxiliary secret.
pub fn decrypt_with_aux(
    provider: &dyn CryptoProvider,
    derived: &KeyRegister,
    k_aes: &KeyRegister,
    nonce: &Nonce,
    l: usize,
) -> Result<KeyRegister, AuditError> {
    let padded = provider.sym_decrypt(k_aes, nonce, derived)?;
    Ok(padded.unpad(l, CIPHER_BLOCK_BITS).map_err(CryptoError::from)?)
}

/// Searches a view for a path to `final_key` that needs no cryptanalysis:
/// a message body equal to it, the XOR of two payloads equal to it, or a
/// payload unpadded with key material held in the view.
pub fn exposes_final_key(view: &AdversaryView, final_key: &KeyRegister) -> bool {
    let bodies: Vec<KeyRegister> = view.messages.iter().filter_map(ChannelMessage::body_register).collect();
    if bodies.iter().any(|b| b == final_key) {
        return true;
    }
    let payloads: Vec<KeyRegister> = view
        .messages
        .iter()
        .filter(|m| matches!(m.kind, MessageKind::Payload(_)))
        .filter_map(ChannelMessage::body_register)
        .collect();
    for (i, a) in payloads.iter().enumerate() {
        for b in &payloads[i + 1..] {
            if a.xor(b).is_ok_and(|x| &x == final_key) {
                return true;
            }
        }
    }
    for p in &payloads {
        for s in &view.private_state {
            for held in &s.qkd_keys {
                let hit = held
                    .key
                    .truncate(p.len())
                    .ok()
                    .and_then(|pad| p.xor(&pad).ok())
                    .is_some_and(|x| x.truncate(final_key.len().min(x.len())).ok().as_ref() == Some(final_key));
                if hit {
                    return true;
                }
            }
        }
    }
    false
}

/// A primitive an attacker may have to break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Primitive {
    OtpQkd,
    PqcKem,
    Aes,
}

/// Boolean formula over primitives an attacker must break.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Requirement {
    Nothing,
    Break(Primitive),
    All(Vec<Requirement>),
    Any(Vec<Requirement>),
}

impl Requirement {
    /// Whether breaking exactly `broken` satisfies the requirement.
    pub fn satisfied_by(&self, broken: &[Primitive]) -> bool {
        match self {
            Requirement::Nothing => true,
            Requirement::Break(p) => broken.contains(p),
            Requirement::All(rs) => rs.iter().all(|r| r.satisfied_by(broken)),
            Requirement::Any(rs) => rs.iter().any(|r| r.satisfied_by(broken)),
        }
    }

    fn render(&self, nested: bool) -> String {
        match self {
            Requirement::Nothing => "Nothing".into(),
            Requirement::Break(Primitive::OtpQkd) => "OTP+QKD".into(),
            Requirement::Break(Primitive::PqcKem) => "PQC-KEM".into(),
            Requirement::Break(Primitive::Aes) => "AES".into(),
            Requirement::All(rs) => rs.iter().map(|r| r.render(true)).collect::<Vec<_>>().join(" and "),
            Requirement::Any(rs) => {
                let s = rs.iter().map(|r| r.render(true)).collect::<Vec<_>>().join(" or ");
                if nested {
                    format!("({s})")
                } else {
                    s
                }
            }
        }
    }
}

impl std::fmt::Display for Requirement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.render(false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attacker {
    /// Honest-but-curious intermediary.
    Charlie,
    /// External adversary on the channels, all locations secure.
    Eve,
}

impl std::str::FromStr for Attacker {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "charlie" => Ok(Attacker::Charlie),
            "eve" => Ok(Attacker::Eve),
            other => Err(format!("unknown adversary {other:?} (expected charlie or eve)")),
        }
    }
}

/// What `attacker` must break to learn the final key of `variant`.
pub fn required_breaks(variant: Variant, attacker: Attacker) -> Requirement {
    use Primitive::*;
    use Requirement::*;
    let inner = match variant {
        Variant::Standard => Nothing,
        Variant::DirectKem => Break(PqcKem),
        Variant::PqcSecured => Any(vec![Break(PqcKem), Break(Aes)]),
    };
    match (attacker, inner) {
        (Attacker::Charlie, r) => r,
        (Attacker::Eve, Nothing) => Break(OtpQkd),
        (Attacker::Eve, r) => All(vec![Break(OtpQkd), r]),
    }
}

/// Outcome of auditing one transcript from one adversary's position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub session_id: u64,
    pub variant: Variant,
    pub observer: String,
    pub messages_seen: usize,
    /// Length of the register the observer rebuilds, if it can rebuild one.
    pub derived_bits: Option<usize>,
    /// Whether the protocol logic says the rebuilt register is the final key.
    pub claims_final_key: bool,
    /// Ground truth from Alice's recorded state; `None` for aborted sessions.
    pub derived_equals_final_key: Option<bool>,
    pub exposes_final_key: Option<bool>,
    pub must_break: String,
}

/// Audits `transcript` as Charlie, or as Eve having broken into the
/// `compromised` locations.
pub fn audit_transcript(transcript: &SessionTranscript, attacker: Attacker, compromised: &[&str]) -> AuditReport {
    let view = match attacker {
        Attacker::Charlie => charlie_view(transcript),
        Attacker::Eve => eve_view(transcript, compromised),
    };
    let rebuilt = match attacker {
        Attacker::Charlie => reconstruct_as_charlie(&view).ok(),
        Attacker::Eve => compromised.iter().find_map(|n| reconstruct_at(&view, n).ok()),
    };
    let chain = &transcript.header.chain;
    let truth = chain
        .first()
        .and_then(|a| transcript.node_state(a))
        .and_then(|s| s.secrets.get("k_AB"));
    AuditReport {
        session_id: transcript.header.session_id,
        variant: transcript.header.variant,
        observer: view.observer.clone(),
        messages_seen: view.messages.len(),
        derived_bits: rebuilt.as_ref().map(|r| r.derived.len()),
        claims_final_key: rebuilt.as_ref().is_some_and(|r| r.is_final_key),
        derived_equals_final_key: truth.map(|k| rebuilt.as_ref().is_some_and(|r| &r.derived == k)),
        exposes_final_key: truth.map(|k| exposes_final_key(&view, k)),
        must_break: required_breaks(transcript.header.variant, attacker).to_string(),
    }
}
