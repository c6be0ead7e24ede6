//! Simulated QKD links and their key stores.

mod kms;
mod link;
mod store;

use std::io::{self, Write};

use thiserror::Error;
use uuid::Uuid;

pub use kms::{handle_request, KeyEntryJson, KmsRequest, KmsResponse};
pub use link::{AdvanceOutcome, LinkTelemetrySample, QkdLinkConfig, QkdLinkState};
pub use store::{
    BlockState, DeliveredKey, KeyStoreEntry, KeyStoreStatus, PairedKeyStore, Reservation, Side, StoreLedger,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("insufficient key: requested {requested_bits} bits, {available_bits} available")]
    InsufficientKey {
        requested_bits: usize,
        available_bits: usize,
    },
    #[error("unknown key id {0}")]
    UnknownKeyId(Uuid),
    #[error("key {0} already consumed")]
    AlreadyConsumed(Uuid),
    #[error("tick must be positive and finite, got {0}")]
    InvalidTick(f64),
    #[error("invalid key size {0}")]
    InvalidSize(usize),
    #[error("invalid link configuration: {0}")]
    InvalidConfig(String),
    #[error("no QKD link between {0} and {1}")]
    NoLink(String, String),
}

impl SimError {
    /// Stable error code used on the key-delivery wire.
    pub fn code(&self) -> &'static str {
        match self {
            SimError::InsufficientKey { .. } => "InsufficientKey",
            SimError::UnknownKeyId(_) => "UnknownKeyId",
            SimError::AlreadyConsumed(_) => "AlreadyConsumed",
            SimError::InvalidTick(_) => "InvalidTick",
            SimError::InvalidSize(_) => "InvalidSize",
            SimError::InvalidConfig(_) => "InvalidConfig",
            SimError::NoLink(..) => "NoLink",
        }
    }
}

/// All links of a network, addressed by endpoint pair.
#[derive(Debug, Clone, Default)]
pub struct QkdNetwork {
    links: Vec<QkdLinkState>,
}

impl QkdNetwork {
    pub fn new(configs: impl IntoIterator<Item = QkdLinkConfig>) -> Result<Self, SimError> {
        let links = configs
            .into_iter()
            .map(QkdLinkState::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { links })
    }

    pub fn links(&self) -> &[QkdLinkState] {
        &self.links
    }

    pub fn links_mut(&mut self) -> &mut [QkdLinkState] {
        &mut self.links
    }

    pub fn link_index(&self, x: &str, y: &str) -> Option<usize> {
        self.links.iter().position(|l| l.config.connects(x, y))
    }

    pub fn link_between(&self, x: &str, y: &str) -> Result<&QkdLinkState, SimError> {
        self.link_index(x, y)
            .map(|i| &self.links[i])
            .ok_or_else(|| SimError::NoLink(x.into(), y.into()))
    }

    pub fn link_between_mut(&mut self, x: &str, y: &str) -> Result<&mut QkdLinkState, SimError> {
        match self.link_index(x, y) {
            Some(i) => Ok(&mut self.links[i]),
            None => Err(SimError::NoLink(x.into(), y.into())),
        }
    }

    /// Advances every link by one tick, in declaration order.
    pub fn advance_all(&mut self, dt_s: f64) -> Result<Vec<LinkTelemetrySample>, SimError> {
        self.links
            .iter_mut()
            .map(|l| l.advance(dt_s).map(|o| o.telemetry))
            .collect()
    }
}

pub const TELEMETRY_CSV_HEADER: &str = "timestamp_s,link_id,skr_bps,qber,visibility";

pub fn write_telemetry_csv<W: Write>(samples: &[LinkTelemetrySample], mut out: W) -> io::Result<()> {
    writeln!(out, "{TELEMETRY_CSV_HEADER}")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{:.3},{:.6},{:.6}",
            s.timestamp_s, s.link_id, s.secret_key_rate_bps, s.qber, s.visibility
        )?;
    }
    Ok(())
}
