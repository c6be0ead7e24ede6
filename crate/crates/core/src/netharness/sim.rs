use std::collections::BTreeMap;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::topology::Topology;
use super::vault::KeyVault;
use super::HarnessError;
use crate::audit::{measured_eta, EfficiencyReport};
use crate::cryptoseal::{CryptoProvider, KemParamSet, ProviderKind};
use crate::qkdsim::{LinkTelemetrySample, QkdNetwork, StoreLedger};
use crate::relay::{
    otp_bits_for, run_relay, AesSessionKey, RelayError, RelayOutcome, RelayRequest, SessionReport, SessionTranscript,
    Variant,
};
use crate::SimRng;

pub const DEFAULT_L_TARGET: usize = 2560;

/// When the scheduler starts a relay session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionTrigger {
    /// As soon as every hop holds enough key for `l_target` bits.
    OnKeyAvailable { l_target: usize },
    /// Every `interval_s` seconds whether or not the hops hold enough key.
    Periodic { interval_s: f64, l_target: usize },
}

impl SessionTrigger {
    pub fn l_target(&self) -> usize {
        match *self {
            SessionTrigger::OnKeyAvailable { l_target } | SessionTrigger::Periodic { l_target, .. } => l_target,
        }
    }
}

impl Default for SessionTrigger {
    fn default() -> Self {
        SessionTrigger::OnKeyAvailable {
            l_target: DEFAULT_L_TARGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    pub variant: Variant,
    pub path: Vec<String>,
    pub duration_s: f64,
    #[serde(default)]
    pub trigger: SessionTrigger,
    #[serde(default = "KemParamSet::kem512")]
    pub kem_params: KemParamSet,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_second")]
    pub tick_s: f64,
    /// Keep one AES key per endpoint pair instead of a KEM round per session.
    #[serde(default)]
    pub aes_key_reuse: bool,
    #[serde(default)]
    pub provider: ProviderKind,
    #[serde(default)]
    pub capture_transcripts: bool,
}

fn one_second() -> f64 {
    1.0
}

impl RunPlan {
    pub fn new(variant: Variant, path: &[&str], duration_s: f64) -> Self {
        Self {
            variant,
            path: path.iter().map(|s| s.to_string()).collect(),
            duration_s,
            trigger: SessionTrigger::default(),
            kem_params: KemParamSet::kem512(),
            seed: 0,
            tick_s: 1.0,
            aes_key_reuse: false,
            provider: ProviderKind::default(),
            capture_transcripts: false,
        }
    }

    pub fn validate(&self, topology: &Topology) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidPlan(m));
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration_s));
        }
        if !(self.tick_s.is_finite() && self.tick_s > 0.0) {
            return bad(format!("tick must be positive, got {}", self.tick_s));
        }
        if self.trigger.l_target() == 0 {
            return bad("l_target must be positive".into());
        }
        if let SessionTrigger::Periodic { interval_s, .. } = self.trigger {
            if !(interval_s.is_finite() && interval_s > 0.0) {
                return bad(format!("interval must be positive, got {interval_s}"));
            }
        }
        if self.path.len() < 3 {
            return bad(format!("path needs at least three nodes, got {}", self.path.len()));
        }
        for node in &self.path {
            if topology.node(node).is_none() {
                return Err(HarnessError::UnknownNode(node.clone()));
            }
        }
        for w in self.path.windows(2) {
            if topology.link_between(&w[0], &w[1]).is_none() {
                return bad(format!("no QKD link between {} and {}", w[0], w[1]));
            }
        }
        Ok(())
    }

    fn request(&self) -> RelayRequest {
        let mut req = RelayRequest::new(self.variant, &[]).with_params(self.kem_params.clone());
        req.chain = self.path.clone();
        req.target_bits = Some(self.trigger.l_target());
        req
    }
}

/// Discrete-time simulation state: the links, their stores and the final
/// keys delivered to endpoint pairs.
pub struct Simulator {
    topology: Topology,
    net: QkdNetwork,
    provider: Box<dyn CryptoProvider>,
    rng: SimRng,
    ticks: u64,
    next_session_id: u64,
    vault: KeyVault,
    aes_keys: BTreeMap<(String, String), AesSessionKey>,
}

impl Simulator {
    /// Link noise streams are derived from the link seeds mixed with `seed`.
    pub fn new(topology: &Topology, seed: u64, provider: ProviderKind) -> Result<Self, HarnessError> {
        topology.validate()?;
        let configs = topology.links.iter().cloned().map(|mut cfg| {
            cfg.seed ^= seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
            cfg
        });
        Ok(Self {
            topology: topology.clone(),
            net: QkdNetwork::new(configs)?,
            provider: provider.build(),
            rng: SimRng::seed_from_u64(seed),
            ticks: 0,
            next_session_id: 0,
            vault: KeyVault::new(topology.nodes.iter().map(|n| n.node_id.clone())),
            aes_keys: BTreeMap::new(),
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn network(&self) -> &QkdNetwork {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut QkdNetwork {
        &mut self.net
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Handle to the final keys, shared with key-delivery endpoints.
    pub fn vault(&self) -> KeyVault {
        self.vault.clone()
    }

    pub fn tick(&mut self, dt_s: f64) -> Result<Vec<LinkTelemetrySample>, HarnessError> {
        let samples = self.net.advance_all(dt_s)?;
        self.ticks += 1;
        Ok(samples)
    }

    /// Whether every hop of `path` holds `otp_bits`.
    pub fn path_can_serve(&self, path: &[String], otp_bits: usize) -> bool {
        path.windows(2).all(|w| {
            self.net
                .link_between(&w[0], &w[1])
                .is_ok_and(|l| l.store.available_bits() >= otp_bits)
        })
    }

    /// Runs one session and hands a completed key to the endpoints' vault.
    /// The session id and per-node honesty are filled in from the simulator.
    pub fn run_session(&mut self, mut req: RelayRequest, reuse_aes_key: bool) -> Result<RelayOutcome, HarnessError> {
        if req.chain.len() < 3 {
            return Err(RelayError::ChainTooShort(req.chain.len()).into());
        }
        for node in &req.chain {
            if self.topology.node(node).is_none() {
                return Err(HarnessError::UnknownNode(node.clone()));
            }
        }
        req.session_id = self.next_session_id;
        self.next_session_id += 1;
        req.honesty = req
            .chain
            .iter()
            .map(|n| self.topology.node(n).expect("checked above").honesty)
            .collect();
        let pair = (req.chain[0].clone(), req.chain[req.chain.len() - 1].clone());
        if reuse_aes_key && req.reuse_aes_key.is_none() {
            req.reuse_aes_key = self.aes_keys.get(&pair).cloned();
        }
        let out = run_relay(&mut self.net, self.provider.as_ref(), &mut self.rng, &req)?;
        if let (true, Some(key)) = (reuse_aes_key, &out.aes_key) {
            self.aes_keys.entry(pair.clone()).or_insert_with(|| key.clone());
        }
        if let Some(k) = out.session.alice_key.as_ref().filter(|_| out.completed()) {
            self.vault.deposit(&pair.0, &pair.1, k, &mut self.rng);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkStats {
    pub link_id: String,
    pub mean_rate_bps: f64,
    pub std_rate_bps: f64,
    pub mean_qber: f64,
    pub std_qber: f64,
    pub mean_visibility: f64,
    pub std_visibility: f64,
    pub ledger: StoreLedger,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates of a continuous run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub plan: RunPlan,
    pub ticks: u64,
    pub simulated_s: f64,
    pub links: Vec<LinkStats>,
    pub completed_sessions: usize,
    pub aborted_sessions: usize,
    pub final_bits: usize,
    pub end_to_end_rate_bps: f64,
    pub efficiency: EfficiencyReport,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub stats: RunStats,
    pub telemetry: Vec<LinkTelemetrySample>,
    pub sessions: Vec<SessionReport>,
    /// Empty unless the plan asks for transcripts.
    pub transcripts: Vec<SessionTranscript>,
    /// Ids of the QKD blocks each link spent, in order.
    pub spent_block_ids: BTreeMap<String, Vec<Uuid>>,
}

/// Runs `plan` for its full duration. Links advance first in every tick,
/// then the trigger decides whether sessions run. Aborted sessions are
/// recorded, not raised.
pub fn run_continuous(topology: &Topology, plan: &RunPlan) -> Result<RunSummary, HarnessError> {
    let mut sim = Simulator::new(topology, plan.seed, plan.provider)?;
    run_on(&mut sim, plan)
}

/// [`run_continuous`] on an existing simulator.
pub fn run_on(sim: &mut Simulator, plan: &RunPlan) -> Result<RunSummary, HarnessError> {
    plan.validate(sim.topology())?;
    let ticks = ((plan.duration_s / plan.tick_s).round() as u64).max(1);
    let otp_needed = otp_bits_for(plan.variant, plan.trigger.l_target(), &plan.kem_params);
    let mut telemetry = Vec::new();
    let mut sessions = Vec::new();
    let mut transcripts = Vec::new();
    let mut spent: BTreeMap<String, Vec<Uuid>> = BTreeMap::new();
    let mut last_session = 0u64;
    for t in 1..=ticks {
        telemetry.extend(sim.tick(plan.tick_s)?);
        let due = match plan.trigger {
            SessionTrigger::OnKeyAvailable { .. } => usize::MAX,
            SessionTrigger::Periodic { interval_s, .. } => {
                let k = |t: u64| (t as f64 * plan.tick_s / interval_s).floor();
                usize::from(k(t) > k(t - 1))
            }
        };
        let mut fired = 0;
        while fired < due {
            if matches!(plan.trigger, SessionTrigger::OnKeyAvailable { .. })
                && !sim.path_can_serve(&plan.path, otp_needed)
            {
                break;
            }
            fired += 1;
            let out = sim.run_session(plan.request(), plan.aes_key_reuse)?;
            for (link, r) in out.session.link_ids.iter().zip(&out.session.hop_keys) {
                spent.entry(link.clone()).or_default().extend(&r.key_ids);
            }
            sessions.push(out.session.report(t - last_session));
            last_session = t;
            let completed = out.completed();
            if plan.capture_transcripts {
                transcripts.push(out.transcript);
            }
            if !completed {
                break;
            }
        }
    }

    let simulated_s = ticks as f64 * plan.tick_s;
    let links: Vec<LinkStats> = plan
        .path
        .windows(2)
        .map(|w| {
            let link = sim.network().link_between(&w[0], &w[1]).expect("validated path");
            let id = &link.config.link_id;
            let of = |f: fn(&LinkTelemetrySample) -> f64| -> Vec<f64> {
                telemetry.iter().filter(|s| &s.link_id == id).map(f).collect()
            };
            let (mean_rate_bps, std_rate_bps) = mean_std(&of(|s| s.secret_key_rate_bps));
            let (mean_qber, std_qber) = mean_std(&of(|s| s.qber));
            let (mean_visibility, std_visibility) = mean_std(&of(|s| s.visibility));
            LinkStats {
                link_id: id.clone(),
                mean_rate_bps,
                std_rate_bps,
                mean_qber,
                std_qber,
                mean_visibility,
                std_visibility,
                ledger: link.store.ledger(),
            }
        })
        .collect();
    let completed_sessions = sessions.iter().filter(|s| s.status == "completed").count();
    let final_bits: usize = sessions.iter().map(|s| s.l).sum();
    // first hop against the slowest of the rest
    let r_ac = links[0].mean_rate_bps;
    let r_bc = links[1..].iter().map(|l| l.mean_rate_bps).fold(f64::INFINITY, f64::min);
    let efficiency = measured_eta(plan.variant, &plan.kem_params, &sessions).with_rates(r_ac, r_bc)?;
    Ok(RunSummary {
        stats: RunStats {
            plan: plan.clone(),
            ticks,
            simulated_s,
            links,
            completed_sessions,
            aborted_sessions: sessions.len() - completed_sessions,
            final_bits,
            end_to_end_rate_bps: final_bits as f64 / simulated_s,
            efficiency,
        },
        telemetry,
        sessions,
        transcripts,
        spent_block_ids: spent,
    })
}

/// Result of a single-shot session.
#[derive(Debug, Clone)]
pub struct SingleShot {
    pub outcome: RelayOutcome,
    pub report: SessionReport,
    /// Ticks simulated before the session started.
    pub waited_ticks: u64,
}

/// Lets the links run until the path can serve one session of the plan's
/// target length (or the plan's duration runs out), then runs that session.
pub fn run_session(topology: &Topology, plan: &RunPlan) -> Result<SingleShot, HarnessError> {
    plan.validate(topology)?;
    let mut sim = Simulator::new(topology, plan.seed, plan.provider)?;
    let otp_needed = otp_bits_for(plan.variant, plan.trigger.l_target(), &plan.kem_params);
    let max_ticks = ((plan.duration_s / plan.tick_s).round() as u64).max(1);
    while sim.ticks() < max_ticks && !sim.path_can_serve(&plan.path, otp_needed) {
        sim.tick(plan.tick_s)?;
    }
    let outcome = sim.run_session(plan.request(), false)?;
    let report = outcome.session.report(sim.ticks());
    Ok(SingleShot {
        outcome,
        report,
        waited_ticks: sim.ticks(),
    })
}
