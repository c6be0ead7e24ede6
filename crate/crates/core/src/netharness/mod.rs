//! Topologies, scheduling of relay sessions over simulated time, and the
//! local key-delivery endpoint.

mod output;
mod serve;
mod sim;
mod topology;
mod vault;

use thiserror::Error;

pub use output::{write_run_outputs, RunFiles};
pub use serve::{serve_keys, KeyServer};
pub use sim::{
    run_continuous, run_on, run_session, LinkStats, RunPlan, RunStats, RunSummary, SessionTrigger, Simulator,
    SingleShot, DEFAULT_L_TARGET,
};
pub use topology::{load_topology, paris, Topology, TopologyError, TopologyNode, PARIS_TOPOLOGY};
pub use vault::KeyVault;

use crate::audit::AuditError;
use crate::qkdsim::SimError;
use crate::relay::RelayError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("invalid run plan: {0}")]
    InvalidPlan(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("address {0} already in use")]
    AddressInUse(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Whether the error comes from configuration rather than the run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Topology(_) | HarnessError::InvalidPlan(_) | HarnessError::UnknownNode(_)
        ) || matches!(self, HarnessError::Sim(SimError::InvalidConfig(_)))
    }
}
