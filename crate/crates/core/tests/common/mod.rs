#![allow(dead_code)]

use qkdrelay::qkdsim::{QkdLinkConfig, QkdNetwork};
use qkdrelay::SimRng;
use rand::{RngCore, SeedableRng};

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// A chain of links `nodes[i] - nodes[i+1]`, link `i` pre-filled with
/// `blocks[i]` random 256-bit blocks.
pub fn chain_net(nodes: &[&str], blocks: &[usize], seed: u64) -> QkdNetwork {
    assert_eq!(nodes.len(), blocks.len() + 1);
    let configs = nodes.windows(2).enumerate().map(|(i, w)| {
        let mut cfg = QkdLinkConfig::new(&format!("{}-{}", w[0], w[1]), w[0], w[1], 1000.0);
        cfg.seed = seed + i as u64;
        cfg
    });
    let mut net = QkdNetwork::new(configs).expect("valid chain");
    let mut r = rng(seed ^ 0x5eed);
    for (link, &n) in net.links_mut().iter_mut().zip(blocks) {
        for _ in 0..n {
            let mut block = [0u8; 32];
            r.fill_bytes(&mut block);
            link.store.deposit(block, &mut r);
        }
    }
    net
}

/// Same shape as [`chain_net`] but every QKD block is all zeros.
pub fn zero_chain_net(nodes: &[&str], blocks: &[usize]) -> QkdNetwork {
    let mut net = chain_net(nodes, &vec![0; blocks.len()], 0);
    let mut r = rng(1);
    for (link, &n) in net.links_mut().iter_mut().zip(blocks) {
        for _ in 0..n {
            link.store.deposit([0u8; 32], &mut r);
        }
    }
    net
}

pub const ACB: [&str; 3] = ["alice", "charlie", "bob"];

pub fn acb_net(blocks_ac: usize, blocks_cb: usize, seed: u64) -> QkdNetwork {
    chain_net(&ACB, &[blocks_ac, blocks_cb], seed)
}
