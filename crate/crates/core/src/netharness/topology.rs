use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::HonestyLevel;
use crate::qkdsim::QkdLinkConfig;

/// The Paris three-node topology shipped with the crate.
pub const PARIS_TOPOLOGY: &str = include_str!("../../configs/paris.toposim");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("parse error at line {line}{}: {message}", field.as_ref().map(|f| format!(", field `{f}`")).unwrap_or_default())]
    Parse {
        line: usize,
        field: Option<String>,
        message: String,
    },
    #[error("invalid topology: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyNode {
    pub node_id: String,
    #[serde(default)]
    pub display_name: String,
    #[serde(default = "default_honesty")]
    pub honesty: HonestyLevel,
}

fn default_honesty() -> HonestyLevel {
    HonestyLevel::Honest
}

/// Nodes and QKD links. Every pair of nodes is assumed to share an
/// authenticated classical channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    #[serde(default)]
    pub name: String,
    pub nodes: Vec<TopologyNode>,
    #[serde(default)]
    pub links: Vec<QkdLinkConfig>,
}

impl Topology {
    pub fn node(&self, id: &str) -> Option<&TopologyNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn link_between(&self, x: &str, y: &str) -> Option<&QkdLinkConfig> {
        self.links.iter().find(|l| l.connects(x, y))
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let invalid = |m: String| Err(TopologyError::Validation(m));
        if self.nodes.is_empty() {
            return invalid("no nodes declared".into());
        }
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if n.node_id.is_empty() || n.node_id.contains([',', '\n', '"']) {
                return invalid(format!("bad node id {:?}", n.node_id));
            }
            if !ids.insert(n.node_id.as_str()) {
                return invalid(format!("node {} declared twice", n.node_id));
            }
        }
        let mut link_ids = HashSet::new();
        for (i, l) in self.links.iter().enumerate() {
            l.validate().map_err(|e| TopologyError::Validation(e.to_string()))?;
            for end in [&l.endpoint_a, &l.endpoint_b] {
                if !ids.contains(end.as_str()) {
                    return invalid(format!("link {} references unknown node {end}", l.link_id));
                }
            }
            if !link_ids.insert(l.link_id.as_str()) {
                return invalid(format!("link id {} used twice", l.link_id));
            }
            if self.links[..i].iter().any(|o| o.connects(&l.endpoint_a, &l.endpoint_b)) {
                return invalid(format!("second link between {} and {}", l.endpoint_a, l.endpoint_b));
            }
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(text: &str, e: toml::de::Error) -> TopologyError {
    let message = e.message().to_string();
    let field = message.split('`').nth(1).map(str::to_string);
    TopologyError::Parse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        field,
        message,
    }
}

/// Parses and validates a topology document.
pub fn load_topology(text: &str) -> Result<Topology, TopologyError> {
    let topology: Topology = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    topology.validate()?;
    Ok(topology)
}

pub fn paris() -> Topology {
    load_topology(PARIS_TOPOLOGY).expect("bundled topology is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_paris() {
        let t = paris();
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.links.len(), 2);
        let rates: Vec<f64> = t.links.iter().map(|l| l.mean_rate_bps).collect();
        assert_eq!(rates, [2493.0, 612.0]);
        let og_tp = t.link_between("TP", "OG").unwrap();
        assert_eq!(
            (og_tp.fiber_length_km, og_tp.loss_db, og_tp.rate_std_bps),
            (43.0, 10.4, 139.0)
        );
        assert_eq!(t.node("OG").unwrap().honesty, HonestyLevel::HonestButCurious);
    }

    #[test]
    fn empty_nodes_rejected() {
        assert!(matches!(load_topology("nodes = []"), Err(TopologyError::Validation(_))));
    }

    #[test]
    fn dangling_endpoint_named() {
        let text = r#"
[[nodes]]
node_id = "A"
[[links]]
link_id = "A-X"
endpoint_a = "A"
endpoint_b = "X"
mean_rate_bps = 10.0
"#;
        match load_topology(text) {
            Err(TopologyError::Validation(m)) => assert!(m.contains("unknown node X"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_reports_line_and_field() {
        let text = "[[nodes]]\nnode_id = \"A\"\ncolour = \"red\"\n";
        match load_topology(text) {
            Err(TopologyError::Parse { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field.as_deref(), Some("colour"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_nodes_and_links() {
        let text = "[[nodes]]\nnode_id = \"A\"\n[[nodes]]\nnode_id = \"A\"\n";
        assert!(matches!(load_topology(text), Err(TopologyError::Validation(_))));
        let mut t = paris();
        t.links.push(t.links[0].clone());
        t.links[2].link_id = "again".into();
        assert!(t.validate().is_err());
    }
}
