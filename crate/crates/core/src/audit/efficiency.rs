use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AuditError;
use crate::cryptoseal::KemParamSet;
use crate::keycore::{CIPHER_BLOCK_BITS, KEY_BLOCK_BITS};
use crate::relay::{otp_bits_for, SessionReport, Variant};

/// Efficiency of relaying KEM ciphertexts directly: `256 / l_ct`.
pub fn eta_direct_kem(params: &KemParamSet) -> f64 {
    KEY_BLOCK_BITS as f64 / params.ciphertext_bits() as f64
}

/// Efficiency of relaying an AES-encrypted key, counting block padding.
pub fn eta_kem_then_aes(l: usize) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let padded = l.div_ceil(CIPHER_BLOCK_BITS) * CIPHER_BLOCK_BITS;
    l as f64 / padded as f64
}

/// `eta * min(r_ac, r_bc)`.
pub fn final_rate(r_ac: f64, r_bc: f64, eta: f64) -> Result<f64, AuditError> {
    let rate_ok = |r: f64| r.is_finite() && r >= 0.0;
    if !rate_ok(r_ac) || !rate_ok(r_bc) || !(eta > 0.0 && eta <= 1.0) {
        return Err(AuditError::InvalidRate { r_ac, r_bc, eta });
    }
    Ok(eta * r_ac.min(r_bc))
}

/// `num / den` as a percentage rounded half-up to two decimals ("4.17%"),
/// with integral values printed bare ("100%").
pub fn percent_2dp(num: u64, den: u64) -> String {
    assert!(den > 0, "percent of a zero denominator");
    let (num, den) = (num as u128, den as u128);
    // hundredths of a percent, rounded half up
    let h = (num * 20_000 + den) / (2 * den);
    if h % 100 == 0 {
        format!("{}%", h / 100)
    } else {
        format!("{}.{:02}%", h / 100, h % 100)
    }
}

/// One row of the efficiency table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaRow {
    pub params: String,
    pub l_ct: usize,
    pub direct_kem: f64,
    pub direct_kem_percent: String,
    pub kem_then_aes: f64,
    pub kem_then_aes_percent: String,
}

pub fn table_one(params: &[KemParamSet]) -> Vec<EtaRow> {
    params
        .iter()
        .map(|p| EtaRow {
            params: p.name().to_string(),
            l_ct: p.ciphertext_bits(),
            direct_kem: eta_direct_kem(p),
            direct_kem_percent: percent_2dp(KEY_BLOCK_BITS as u64, p.ciphertext_bits() as u64),
            kem_then_aes: 1.0,
            kem_then_aes_percent: percent_2dp(1, 1),
        })
        .collect()
}

/// Aggregate efficiency of a batch of sessions of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub variant: Variant,
    pub sessions: usize,
    /// Total final key bits delivered.
    pub l: usize,
    /// Total 256-bit units (KEM encapsulations for the direct-KEM relay).
    pub p: usize,
    pub l_ct: Option<usize>,
    /// Measured: delivered bits over OTP bits spent on a link.
    pub eta: f64,
    /// Closed-form efficiency for block-aligned lengths.
    pub eta_analytic: f64,
    /// Closed-form efficiency for the lengths actually relayed.
    pub padding_bound: f64,
    pub bits_consumed_per_link: BTreeMap<String, usize>,
    pub r_ac: f64,
    pub r_bc: f64,
    pub r_final: f64,
}

impl EfficiencyReport {
    /// Fills in the link rates and derives `r_final`.
    pub fn with_rates(mut self, r_ac: f64, r_bc: f64) -> Result<Self, AuditError> {
        self.r_final = final_rate(r_ac, r_bc, self.eta)?;
        self.r_ac = r_ac;
        self.r_bc = r_bc;
        Ok(self)
    }
}

/// Empirical efficiency over the completed sessions in `reports`.
pub fn measured_eta(variant: Variant, params: &KemParamSet, reports: &[SessionReport]) -> EfficiencyReport {
    let done: Vec<&SessionReport> = reports
        .iter()
        .filter(|r| r.variant == variant && r.status == "completed" && r.l > 0)
        .collect();
    let l: usize = done.iter().map(|r| r.l).sum();
    let mut per_link: BTreeMap<String, usize> = BTreeMap::new();
    for r in &done {
        for (id, bits) in &r.bits_consumed_per_link {
            *per_link.entry(id.clone()).or_default() += bits;
        }
    }
    let expected: usize = done.iter().map(|r| otp_bits_for(variant, r.l, params)).sum();
    let eta_analytic = match variant {
        Variant::DirectKem => eta_direct_kem(params),
        Variant::Standard | Variant::PqcSecured => 1.0,
    };
    let padding_bound = if expected == 0 {
        eta_analytic
    } else {
        l as f64 / expected as f64
    };
    // every hop spends the same amount, so any link is representative
    let spent = per_link.values().copied().max().unwrap_or(0);
    let eta = if spent == 0 {
        eta_analytic
    } else {
        l as f64 / spent as f64
    };
    EfficiencyReport {
        variant,
        sessions: done.len(),
        l,
        p: done.iter().map(|r| r.l.div_ceil(KEY_BLOCK_BITS)).sum(),
        l_ct: (variant == Variant::DirectKem).then(|| params.ciphertext_bits()),
        eta,
        eta_analytic,
        padding_bound,
        bits_consumed_per_link: per_link,
        r_ac: 0.0,
        r_bc: 0.0,
        r_final: 0.0,
    }
}
