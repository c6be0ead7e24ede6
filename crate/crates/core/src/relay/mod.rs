//! Trusted-node relay protocols.
//!
//! Every protocol runs over a chain `Alice, R_1, .., R_k, Bob` where each
//! adjacent pair shares a QKD link. The three-node entry points
//! ([`run_standard`], [`run_pqc_secured`], [`run_direct_kem`]) are chains with a
//! single intermediary.

mod engine;
mod transcript;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use engine::{run_direct_kem, run_multi_hop, run_pqc_secured, run_relay, run_standard, RelayOutcome};
pub use transcript::{
    ChannelMessage, HeldQkdKey, MessageKind, NodeSnapshot, Role, SessionTranscript, TranscriptError, TranscriptHeader,
};

use crate::audit::HonestyLevel;
use crate::cryptoseal::{KemParamSet, Nonce};
use crate::keycore::{layout, KeyRegister, CIPHER_BLOCK_BITS, KEY_BLOCK_BITS};
use crate::qkdsim::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Plain one-time-pad relay; the intermediary sees the final key.
    Standard,
    /// Final key encrypted under a KEM-established AES key before relaying.
    PqcSecured,
    /// KEM ciphertexts relayed under one-time pad.
    DirectKem,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Standard, Variant::PqcSecured, Variant::DirectKem];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::PqcSecured => "pqc-secured",
            Variant::DirectKem => "direct-kem",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "standard" | "otp" => Ok(Variant::Standard),
            "pqc-secured" | "pqcsecured" | "pqc" => Ok(Variant::PqcSecured),
            "direct-kem" | "directkem" => Ok(Variant::DirectKem),
            other => Err(format!(
                "unknown variant {other:?} (expected standard, pqc-secured or direct-kem)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbortReason {
    /// Alice's own link offered no key.
    ZeroKeyAC,
    /// Bob's link offered no key.
    ZeroKeyBC,
    /// An interior hop of a longer chain offered no key.
    ZeroKeyHop(usize),
    /// Every hop has key, but not enough to carry one unit of payload
    /// (one KEM ciphertext, or one cipher block).
    InsufficientKey,
    ProviderFailure(String),
}

impl AbortReason {
    pub fn code(&self) -> &'static str {
        match self {
            AbortReason::ZeroKeyAC => "ZeroKeyAC",
            AbortReason::ZeroKeyBC => "ZeroKeyBC",
            AbortReason::ZeroKeyHop(_) => "ZeroKeyHop",
            AbortReason::InsufficientKey => "InsufficientKey",
            AbortReason::ProviderFailure(_) => "ProviderFailure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "snake_case")]
pub enum SessionStatus {
    Running,
    Completed,
    Aborted(AbortReason),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelayError {
    #[error("a relay chain needs at least 3 nodes, got {0}")]
    ChainTooShort(usize),
    #[error("node {0} appears twice in the chain")]
    RepeatedNode(String),
    #[error("honesty list has {got} entries for a chain of {chain}")]
    HonestyLength { got: usize, chain: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Key(#[from] crate::keycore::KeyError),
}

/// 256-bit AES key established by one KEM round, as held by each endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AesSessionKey {
    pub alice: KeyRegister,
    pub bob: KeyRegister,
    pub kem_ciphertext: KeyRegister,
}

/// Parameters of one relay session.
#[derive(Debug, Clone)]
pub struct RelayRequest {
    pub session_id: u64,
    pub variant: Variant,
    pub chain: Vec<String>,
    /// Per-node honesty, parallel to `chain`. Empty means endpoints honest
    /// and intermediaries honest-but-curious.
    pub honesty: Vec<HonestyLevel>,
    pub kem_params: KemParamSet,
    /// Requested final key length; `None` takes everything the hops offer.
    pub target_bits: Option<usize>,
    /// Reuse an AES key from an earlier KEM round instead of running one.
    pub reuse_aes_key: Option<AesSessionKey>,
}

impl RelayRequest {
    pub fn new(variant: Variant, chain: &[&str]) -> Self {
        Self {
            session_id: 0,
            variant,
            chain: chain.iter().map(|s| s.to_string()).collect(),
            honesty: Vec::new(),
            kem_params: KemParamSet::kem512(),
            target_bits: None,
            reuse_aes_key: None,
        }
    }

    pub fn with_target(mut self, bits: usize) -> Self {
        self.target_bits = Some(bits);
        self
    }

    pub fn with_params(mut self, params: KemParamSet) -> Self {
        self.kem_params = params;
        self
    }

    pub fn with_session_id(mut self, id: u64) -> Self {
        self.session_id = id;
        self
    }

    pub fn honesty_of(&self, idx: usize) -> HonestyLevel {
        if let Some(h) = self.honesty.get(idx) {
            return *h;
        }
        if idx == 0 || idx + 1 == self.chain.len() {
            HonestyLevel::Honest
        } else {
            HonestyLevel::HonestButCurious
        }
    }
}

/// Alice's length decision: abort if either offer is zero, else the minimum.
pub fn negotiate_length(l_ac: usize, l_bc: usize) -> Result<usize, AbortReason> {
    negotiate_hops(&[l_ac, l_bc])
}

/// Chain form of [`negotiate_length`]: minimum over all hop offers.
pub fn negotiate_hops(offers: &[usize]) -> Result<usize, AbortReason> {
    let last = offers.len().saturating_sub(1);
    if let Some(hop) = offers.iter().position(|&l| l == 0) {
        return Err(match hop {
            0 => AbortReason::ZeroKeyAC,
            h if h == last => AbortReason::ZeroKeyBC,
            h => AbortReason::ZeroKeyHop(h),
        });
    }
    offers.iter().copied().min().ok_or(AbortReason::InsufficientKey)
}

/// OTP bits each hop spends to relay a final key of `l` bits.
pub fn otp_bits_for(variant: Variant, l: usize, params: &KemParamSet) -> usize {
    match variant {
        Variant::Standard => l,
        Variant::PqcSecured => layout(l, CIPHER_BLOCK_BITS).expect("non-zero block").padded_bits(),
        Variant::DirectKem => l.div_ceil(KEY_BLOCK_BITS) * params.ciphertext_bits(),
    }
}

/// Largest final key length whose OTP cost fits in `otp_budget`, capped at `target`.
pub fn final_length_for(variant: Variant, otp_budget: usize, target: Option<usize>, params: &KemParamSet) -> usize {
    if let Some(t) = target {
        if otp_bits_for(variant, t, params) <= otp_budget {
            return t;
        }
    }
    let fit = match variant {
        Variant::Standard => otp_budget,
        Variant::PqcSecured => otp_budget / CIPHER_BLOCK_BITS * CIPHER_BLOCK_BITS,
        Variant::DirectKem => otp_budget / params.ciphertext_bits() * KEY_BLOCK_BITS,
    };
    target.map_or(fit, |t| fit.min(t))
}

/// Per-session record of every protocol quantity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelaySession {
    pub session_id: u64,
    pub variant: Variant,
    pub chain: Vec<String>,
    pub link_ids: Vec<String>,
    /// Key length each hop offered (`l_AC`, `l_BC`, ...).
    pub hop_offers: Vec<usize>,
    /// Final key length `l`.
    pub l: usize,
    /// OTP bits spent per hop.
    pub otp_bits: usize,
    /// OTP material per hop (`⌊k_AC⌋`, `⌊k_BC⌋`, ...) with block ids.
    pub hop_keys: Vec<crate::qkdsim::Reservation>,
    pub alice_key: Option<KeyRegister>,
    pub bob_key: Option<KeyRegister>,
    pub k_aes: Option<KeyRegister>,
    pub k_enc_ab: Option<KeyRegister>,
    pub kem_ct: Option<KeyRegister>,
    pub nonce: Option<Nonce>,
    /// OTP-protected payloads `m_1, m_2, ...` as sent.
    pub messages: Vec<KeyRegister>,
    pub kem_rounds: usize,
    pub status: SessionStatus,
}

impl RelaySession {
    pub fn completed(&self) -> bool {
        self.status == SessionStatus::Completed
    }

    pub fn hops(&self) -> usize {
        self.chain.len() - 1
    }

    /// Bits drained from each store, including discarded block residue.
    pub fn blocks_drained_bits(&self) -> usize {
        self.hop_keys.first().map_or(0, |r| r.key_ids.len() * KEY_BLOCK_BITS)
    }

    pub fn report(&self, duration_ticks: u64) -> SessionReport {
        let per_link = |bits: usize| -> BTreeMap<String, usize> {
            self.link_ids
                .iter()
                .map(|id| (id.clone(), if self.completed() { bits } else { 0 }))
                .collect()
        };
        SessionReport {
            session_id: self.session_id,
            variant: self.variant,
            l: if self.completed() { self.l } else { 0 },
            bits_consumed_per_link: per_link(self.otp_bits),
            blocks_drained_bits_per_link: per_link(self.blocks_drained_bits()),
            status: match &self.status {
                SessionStatus::Completed => "completed".into(),
                SessionStatus::Running => "running".into(),
                SessionStatus::Aborted(r) => format!("aborted:{}", r.code()),
            },
            duration_ticks,
        }
    }
}

/// JSON export of a session outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: u64,
    pub variant: Variant,
    pub l: usize,
    pub bits_consumed_per_link: BTreeMap<String, usize>,
    pub blocks_drained_bits_per_link: BTreeMap<String, usize>,
    pub status: String,
    pub duration_ticks: u64,
}
