use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use rand::RngCore;

use crate::keycore::{KeyRegister, KEY_BLOCK_BITS};
use crate::qkdsim::{handle_request, KmsRequest, KmsResponse, PairedKeyStore, Side};

#[derive(Debug, Default)]
struct PairStore {
    store: PairedKeyStore,
    // final key bits not yet filling a whole block
    pending: KeyRegister,
}

type PairMap = BTreeMap<(String, String), Arc<Mutex<PairStore>>>;

/// Final keys of every endpoint pair, in 256-bit blocks, shared between
/// the simulator and key-delivery endpoints.
///
/// Each pair has its own lock, so requests against different pairs do not
/// wait on each other.
#[derive(Debug, Clone, Default)]
pub struct KeyVault {
    nodes: Arc<BTreeSet<String>>,
    pairs: Arc<Mutex<PairMap>>,
}

impl KeyVault {
    pub fn new(nodes: impl IntoIterator<Item = String>) -> Self {
        Self {
            nodes: Arc::new(nodes.into_iter().collect()),
            pairs: Arc::default(),
        }
    }

    pub fn knows(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    /// Appends `key` to the pair's stream; whole blocks become fetchable.
    pub fn deposit<R: RngCore + ?Sized>(&self, alice: &str, bob: &str, key: &KeyRegister, rng: &mut R) {
        let entry = self
            .pairs
            .lock()
            .expect("vault lock")
            .entry((alice.to_string(), bob.to_string()))
            .or_default()
            .clone();
        let mut pair = entry.lock().expect("pair lock");
        pair.pending.extend(key);
        let whole = pair.pending.len() / KEY_BLOCK_BITS;
        for i in 0..whole {
            let block = pair
                .pending
                .slice(i * KEY_BLOCK_BITS, (i + 1) * KEY_BLOCK_BITS)
                .expect("in range");
            let bytes: [u8; KEY_BLOCK_BITS / 8] = block.as_bytes().try_into().expect("one block");
            pair.store.deposit(bytes, rng);
        }
        let len = pair.pending.len();
        pair.pending = pair.pending.slice(whole * KEY_BLOCK_BITS, len).expect("in range");
    }

    /// Peers `node` shares final keys with.
    pub fn peers_of(&self, node: &str) -> Vec<String> {
        let pairs = self.pairs.lock().expect("vault lock");
        pairs
            .keys()
            .filter_map(|(a, b)| {
                if a == node {
                    Some(b.clone())
                } else if b == node {
                    Some(a.clone())
                } else {
                    None
                }
            })
            .collect()
    }

    fn lookup(&self, node: &str, peer: &str) -> Option<(Arc<Mutex<PairStore>>, Side)> {
        let pairs = self.pairs.lock().expect("vault lock");
        if let Some(p) = pairs.get(&(node.to_string(), peer.to_string())) {
            return Some((p.clone(), Side::A));
        }
        pairs
            .get(&(peer.to_string(), node.to_string()))
            .map(|p| (p.clone(), Side::B))
    }

    /// Runs `f` on the store `node` shares with `peer`.
    pub fn with_store<T>(&self, node: &str, peer: &str, f: impl FnOnce(&mut PairedKeyStore, Side) -> T) -> Option<T> {
        let (pair, side) = self.lookup(node, peer)?;
        let mut guard = pair.lock().expect("pair lock");
        Some(f(&mut guard.store, side))
    }

    /// Answers a key-delivery request on behalf of `node`. Without an
    /// explicit peer, the node must have exactly one.
    pub fn handle(&self, node: &str, request: &KmsRequest) -> KmsResponse {
        if !self.knows(node) {
            return KmsResponse::error("unknown_node", format!("node {node} is not in the topology"));
        }
        let peer = match request.peer() {
            Some(p) => p.to_string(),
            None => match self.peers_of(node).as_slice() {
                [only] => only.clone(),
                [] => return KmsResponse::error("no_keys", format!("node {node} holds no final keys yet")),
                _ => return KmsResponse::error("peer_required", "several peers, name one with \"peer\""),
            },
        };
        self.with_store(node, &peer, |store, side| handle_request(store, side, request))
            .unwrap_or_else(|| KmsResponse::error("no_keys", format!("no final keys between {node} and {peer}")))
    }
}
