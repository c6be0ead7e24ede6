use std::collections::HashMap;

use rand::RngCore;
use serde::Serialize;
use uuid::Uuid;

use super::SimError;
use crate::keycore::{KeyRegister, KEY_BLOCK_BITS};

const BLOCK_BYTES: usize = KEY_BLOCK_BITS / 8;

/// One endpoint of a link store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn peer(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    fn idx(self) -> usize {
        match self {
            Side::A => 0,
            Side::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockState {
    Available,
    /// Issued to the peer's application; waiting for a by-id fetch here.
    Reserved,
    Consumed,
}

/// A 256-bit block held identically by both endpoints.
#[derive(Debug, Clone)]
pub struct KeyStoreEntry {
    pub key_id: Uuid,
    block: [u8; BLOCK_BYTES],
    state: [BlockState; 2],
}

impl KeyStoreEntry {
    pub fn block(&self) -> KeyRegister {
        KeyRegister::from_byte_vec(self.block.to_vec())
    }

    pub fn state(&self, side: Side) -> BlockState {
        self.state[side.idx()]
    }

    pub fn consumed(&self) -> bool {
        self.state.iter().all(|s| *s == BlockState::Consumed)
    }

    fn fresh(&self) -> bool {
        self.state == [BlockState::Available; 2]
    }
}

/// Key material plus the ids of the blocks it was cut from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reservation {
    pub key_ids: Vec<Uuid>,
    pub material: KeyRegister,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveredKey {
    pub key_id: Uuid,
    pub key: KeyRegister,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KeyStoreStatus {
    pub stored_key_count: usize,
    pub key_size_bits: usize,
    pub capacity: Option<usize>,
}

/// Bit accounting of a store. `produced == served + in_store + residue + dropped`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StoreLedger {
    pub produced_bits: u64,
    pub served_bits: u64,
    pub residue_bits: u64,
    pub dropped_bits: u64,
}

#[derive(Debug, Clone)]
struct IssuedKey {
    blocks: Vec<usize>,
    size_bits: usize,
}

/// Block store shared by the two endpoints of a link.
///
/// Every block is single use. A block leaves the fresh pool exactly once,
/// either through a paired reservation (consumed at both ends at once) or
/// through an application fetch (consumed at the fetching end and reserved
/// for a by-id fetch at the other). Bits of a touched block beyond the
/// requested length are discarded.
#[derive(Debug, Clone, Default)]
pub struct PairedKeyStore {
    entries: Vec<KeyStoreEntry>,
    index: HashMap<Uuid, usize>,
    issued: HashMap<Uuid, IssuedKey>,
    // entries before this index are all non-fresh
    cursor: usize,
    fresh: usize,
    capacity_blocks: Option<usize>,
    ledger: StoreLedger,
}

impl PairedKeyStore {
    pub fn new(capacity_blocks: Option<usize>) -> Self {
        Self {
            capacity_blocks,
            ..Self::default()
        }
    }

    /// Adds a block with a random id. Returns `None` when the store is full
    /// and the block is dropped.
    pub fn deposit<R: RngCore + ?Sized>(&mut self, block: [u8; BLOCK_BYTES], rng: &mut R) -> Option<Uuid> {
        let mut id_bytes = [0u8; 16];
        rng.fill_bytes(&mut id_bytes);
        let key_id = uuid::Builder::from_random_bytes(id_bytes).into_uuid();
        self.deposit_with_id(key_id, block)
    }

    pub fn deposit_with_id(&mut self, key_id: Uuid, block: [u8; BLOCK_BYTES]) -> Option<Uuid> {
        self.ledger.produced_bits += KEY_BLOCK_BITS as u64;
        if self.capacity_blocks.is_some_and(|cap| self.fresh >= cap) || self.index.contains_key(&key_id) {
            self.ledger.dropped_bits += KEY_BLOCK_BITS as u64;
            return None;
        }
        self.index.insert(key_id, self.entries.len());
        self.entries.push(KeyStoreEntry {
            key_id,
            block,
            state: [BlockState::Available; 2],
        });
        self.fresh += 1;
        Some(key_id)
    }

    /// Bits available to a paired reservation.
    pub fn available_bits(&self) -> usize {
        self.fresh * KEY_BLOCK_BITS
    }

    pub fn ledger(&self) -> StoreLedger {
        self.ledger
    }

    pub fn bits_in_store(&self) -> u64 {
        self.available_bits() as u64
    }

    pub fn entries(&self) -> &[KeyStoreEntry] {
        &self.entries
    }

    pub fn entry(&self, key_id: &Uuid) -> Option<&KeyStoreEntry> {
        self.index.get(key_id).map(|&i| &self.entries[i])
    }

    pub fn status(&self, _side: Side) -> KeyStoreStatus {
        KeyStoreStatus {
            stored_key_count: self.fresh,
            key_size_bits: KEY_BLOCK_BITS,
            capacity: self.capacity_blocks,
        }
    }

    fn take_fresh(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        let mut i = self.cursor;
        while out.len() < count {
            if self.entries[i].fresh() {
                out.push(i);
            }
            i += 1;
        }
        self.fresh -= count;
        out
    }

    fn advance_cursor(&mut self) {
        while self.cursor < self.entries.len() && !self.entries[self.cursor].fresh() {
            self.cursor += 1;
        }
    }

    fn material(&self, blocks: &[usize], size_bits: usize) -> KeyRegister {
        let mut bytes = Vec::with_capacity(blocks.len() * BLOCK_BYTES);
        for &i in blocks {
            bytes.extend_from_slice(&self.entries[i].block);
        }
        KeyRegister::from_bytes(&bytes, size_bits).expect("blocks cover the requested size")
    }

    fn check_fresh(&self, blocks_needed: usize, requested_bits: usize) -> Result<(), SimError> {
        if blocks_needed > self.fresh {
            return Err(SimError::InsufficientKey {
                requested_bits,
                available_bits: self.available_bits(),
            });
        }
        Ok(())
    }

    /// Takes the oldest fresh blocks covering `l_bits`, consumes them at both
    /// endpoints and returns their first `l_bits` bits.
    pub fn reserve(&mut self, l_bits: usize) -> Result<Reservation, SimError> {
        let blocks_needed = l_bits.div_ceil(KEY_BLOCK_BITS);
        self.check_fresh(blocks_needed, l_bits)?;
        let blocks = self.take_fresh(blocks_needed);
        for &i in &blocks {
            self.entries[i].state = [BlockState::Consumed; 2];
        }
        self.advance_cursor();
        self.ledger.served_bits += l_bits as u64;
        self.ledger.residue_bits += (blocks_needed * KEY_BLOCK_BITS - l_bits) as u64;
        Ok(Reservation {
            key_ids: blocks.iter().map(|&i| self.entries[i].key_id).collect(),
            material: self.material(&blocks, l_bits),
        })
    }

    /// Serves `number` fresh keys of `size_bits` to the application at `side`.
    /// The peer can fetch the same keys by id with [`get_dec_keys`](Self::get_dec_keys).
    pub fn get_enc_keys(&mut self, side: Side, number: usize, size_bits: usize) -> Result<Vec<DeliveredKey>, SimError> {
        if size_bits == 0 {
            return Err(SimError::InvalidSize(size_bits));
        }
        let per_key = size_bits.div_ceil(KEY_BLOCK_BITS);
        self.check_fresh(per_key * number, size_bits * number)?;
        let mut out = Vec::with_capacity(number);
        for _ in 0..number {
            let blocks = self.take_fresh(per_key);
            for &i in &blocks {
                self.entries[i].state[side.idx()] = BlockState::Consumed;
                self.entries[i].state[side.peer().idx()] = BlockState::Reserved;
            }
            let key_id = self.entries[blocks[0]].key_id;
            let key = self.material(&blocks, size_bits);
            self.ledger.served_bits += size_bits as u64;
            self.ledger.residue_bits += (per_key * KEY_BLOCK_BITS - size_bits) as u64;
            self.issued.insert(key_id, IssuedKey { blocks, size_bits });
            out.push(DeliveredKey { key_id, key });
        }
        self.advance_cursor();
        Ok(out)
    }

    /// Serves keys by id at `side`. All ids are validated before any is consumed.
    pub fn get_dec_keys(&mut self, side: Side, key_ids: &[Uuid]) -> Result<Vec<DeliveredKey>, SimError> {
        let s = side.idx();
        let mut plan = Vec::with_capacity(key_ids.len());
        for (n, id) in key_ids.iter().enumerate() {
            if key_ids[..n].contains(id) {
                return Err(SimError::AlreadyConsumed(*id));
            }
            if let Some(issued) = self.issued.get(id) {
                if self.entries[issued.blocks[0]].state[s] != BlockState::Reserved {
                    return Err(SimError::AlreadyConsumed(*id));
                }
                plan.push((*id, issued.blocks.clone(), issued.size_bits, false));
            } else if let Some(&i) = self.index.get(id) {
                if !self.entries[i].fresh() {
                    return Err(SimError::AlreadyConsumed(*id));
                }
                plan.push((*id, vec![i], KEY_BLOCK_BITS, true));
            } else {
                return Err(SimError::UnknownKeyId(*id));
            }
        }
        let mut out = Vec::with_capacity(plan.len());
        for (key_id, blocks, size_bits, was_fresh) in plan {
            for &i in &blocks {
                if was_fresh {
                    self.entries[i].state = [BlockState::Consumed; 2];
                } else {
                    self.entries[i].state[s] = BlockState::Consumed;
                }
            }
            if was_fresh {
                self.fresh -= 1;
                self.ledger.served_bits += KEY_BLOCK_BITS as u64;
            }
            out.push(DeliveredKey {
                key_id,
                key: self.material(&blocks, size_bits),
            });
        }
        self.advance_cursor();
        Ok(out)
    }
}
