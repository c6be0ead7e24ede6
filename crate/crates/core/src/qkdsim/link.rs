use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use super::store::{PairedKeyStore, Side};
use super::SimError;
use crate::keycore::KEY_BLOCK_BITS;
use crate::SimRng;

fn default_visibility() -> f64 {
    1.0
}

/// Static description of one QKD link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QkdLinkConfig {
    pub link_id: String,
    pub endpoint_a: String,
    pub endpoint_b: String,
    #[serde(default)]
    pub fiber_length_km: f64,
    #[serde(default)]
    pub loss_db: f64,
    pub mean_rate_bps: f64,
    #[serde(default)]
    pub rate_std_bps: f64,
    #[serde(default)]
    pub mean_qber: f64,
    #[serde(default)]
    pub qber_std: f64,
    #[serde(default = "default_visibility")]
    pub mean_visibility: f64,
    #[serde(default)]
    pub visibility_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// Maximum number of fresh blocks held; unbounded when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_blocks: Option<usize>,
}

impl QkdLinkConfig {
    pub fn new(link_id: &str, endpoint_a: &str, endpoint_b: &str, mean_rate_bps: f64) -> Self {
        Self {
            link_id: link_id.into(),
            endpoint_a: endpoint_a.into(),
            endpoint_b: endpoint_b.into(),
            fiber_length_km: 0.0,
            loss_db: 0.0,
            mean_rate_bps,
            rate_std_bps: 0.0,
            mean_qber: 0.0,
            qber_std: 0.0,
            mean_visibility: 1.0,
            visibility_std: 0.0,
            seed: 0,
            capacity_blocks: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidConfig(format!("link {}: {what}", self.link_id)));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if self.link_id.is_empty() || self.link_id.contains([',', '\n', '"']) {
            return bad("link id must be non-empty and free of commas, quotes and newlines");
        }
        if self.endpoint_a == self.endpoint_b {
            return bad("self-loop");
        }
        if !finite_nonneg(self.mean_rate_bps) || !finite_nonneg(self.rate_std_bps) {
            return bad("rates must be finite and non-negative");
        }
        if !prob(self.mean_qber) || !prob(self.mean_visibility) {
            return bad("QBER and visibility must lie in [0, 1]");
        }
        if !finite_nonneg(self.qber_std) || !finite_nonneg(self.visibility_std) {
            return bad("deviations must be finite and non-negative");
        }
        if !finite_nonneg(self.fiber_length_km) || !finite_nonneg(self.loss_db) {
            return bad("fiber length and loss must be non-negative");
        }
        Ok(())
    }

    /// Which side of this link `node` sits on.
    pub fn side_of(&self, node: &str) -> Option<Side> {
        if node == self.endpoint_a {
            Some(Side::A)
        } else if node == self.endpoint_b {
            Some(Side::B)
        } else {
            None
        }
    }

    pub fn connects(&self, x: &str, y: &str) -> bool {
        (self.endpoint_a == x && self.endpoint_b == y) || (self.endpoint_a == y && self.endpoint_b == x)
    }
}

/// One telemetry row per link per tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkTelemetrySample {
    pub timestamp_s: f64,
    pub link_id: String,
    pub secret_key_rate_bps: f64,
    pub qber: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone)]
pub struct AdvanceOutcome {
    pub new_blocks: Vec<Uuid>,
    pub telemetry: LinkTelemetrySample,
}

/// A running link: rate model, fractional-bit accumulator and its key store.
#[derive(Debug, Clone)]
pub struct QkdLinkState {
    pub config: QkdLinkConfig,
    pub store: PairedKeyStore,
    rng: SimRng,
    accumulated_bits: f64,
    clock_s: f64,
}

fn clipped_normal(mean: f64, std: f64, lo: f64, hi: f64, rng: &mut SimRng) -> f64 {
    let v = if std > 0.0 {
        Normal::new(mean, std).expect("validated deviation").sample(rng)
    } else {
        mean
    };
    v.clamp(lo, hi)
}

// Links that share a seed must still draw independent key material.
fn link_rng(config: &QkdLinkConfig) -> SimRng {
    let digest = Sha256::new()
        .chain_update(b"qkdrelay/link-rng")
        .chain_update(config.link_id.as_bytes())
        .chain_update(config.seed.to_be_bytes())
        .finalize();
    SimRng::from_seed(digest.into())
}

impl QkdLinkState {
    pub fn new(config: QkdLinkConfig) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Self {
            rng: link_rng(&config),
            store: PairedKeyStore::new(config.capacity_blocks),
            config,
            accumulated_bits: 0.0,
            clock_s: 0.0,
        })
    }

    pub fn clock_s(&self) -> f64 {
        self.clock_s
    }

    /// Runs the link for `dt_s` seconds.
    ///
    /// The instantaneous rate is drawn from a normal law clipped at zero and
    /// the produced bits are accumulated; every whole 256-bit block is
    /// deposited into the shared store. QBER and visibility are sampled the
    /// same way, clipped to `[0, 1]`, and do not affect the rate.
    pub fn advance(&mut self, dt_s: f64) -> Result<AdvanceOutcome, SimError> {
        if !(dt_s.is_finite() && dt_s > 0.0) {
            return Err(SimError::InvalidTick(dt_s));
        }
        let c = &self.config;
        let rate = clipped_normal(c.mean_rate_bps, c.rate_std_bps, 0.0, f64::INFINITY, &mut self.rng);
        let qber = clipped_normal(c.mean_qber, c.qber_std, 0.0, 1.0, &mut self.rng);
        let visibility = clipped_normal(c.mean_visibility, c.visibility_std, 0.0, 1.0, &mut self.rng);
        self.clock_s += dt_s;
        self.accumulated_bits += rate * dt_s;
        let blocks = (self.accumulated_bits / KEY_BLOCK_BITS as f64).floor();
        self.accumulated_bits -= blocks * KEY_BLOCK_BITS as f64;
        let mut new_blocks = Vec::with_capacity(blocks as usize);
        for _ in 0..blocks as usize {
            let mut block = [0u8; KEY_BLOCK_BITS / 8];
            self.rng.fill_bytes(&mut block);
            if let Some(id) = self.store.deposit(block, &mut self.rng) {
                new_blocks.push(id);
            }
        }
        Ok(AdvanceOutcome {
            new_blocks,
            telemetry: LinkTelemetrySample {
                timestamp_s: self.clock_s,
                link_id: self.config.link_id.clone(),
                secret_key_rate_bps: rate,
                qber,
                visibility,
            },
        })
    }
}
