//! Keying protocol: `Key_MSG`, the commitment generator, chain extension,
//! per-interval key/index derivation and session keys.
//!
//! Every group member holding the same [`SecretTable`] and [`KeyMsg`]
//! derives a byte-identical [`KeyChain`] without further communication.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::algebra::{
    encode_num, Digest, Key, KeyKind, OpCounts, Term, DIGEST_LEN, NONCE_LEN,
};

/// Domain tag prefixed to the input of the chain step function.
pub const CHAIN_STEP_TAG: u8 = 0x46;

const BLOB_MAGIC: &[u8; 6] = b"TAPKC\x01";

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum KeychainError {
    #[error("secret table is empty")]
    EmptyTable,
    #[error("chain length must be at least 1")]
    ZeroLength,
    #[error("index vector collision between positions {first} and {second}")]
    IndexCollision { first: usize, second: usize },
    #[error("time {now} is before chain start {start}")]
    BeforeStart { now: u64, start: u64 },
    #[error("invalid key message: {0}")]
    InvalidKeyMsg(&'static str),
    #[error("malformed keychain blob: {0}")]
    Blob(&'static str),
}

/// Which retrieval information a ticket carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RetrievalMode {
    /// Index value lookup.
    Mode1,
    /// Issue time plus drift window.
    Mode2,
    /// Index value plus hash-tree sibling path.
    Mode3,
}

impl RetrievalMode {
    pub fn as_u8(self) -> u8 {
        match self {
            RetrievalMode::Mode1 => 1,
            RetrievalMode::Mode2 => 2,
            RetrievalMode::Mode3 => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(RetrievalMode::Mode1),
            2 => Some(RetrievalMode::Mode2),
            3 => Some(RetrievalMode::Mode3),
            _ => None,
        }
    }
}

/// Predefined values shared verbatim by all legitimate group members.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretTable {
    pub entries: Vec<[u8; DIGEST_LEN]>,
}

impl SecretTable {
    pub fn new(entries: Vec<[u8; DIGEST_LEN]>) -> Self {
        SecretTable { entries }
    }

    /// `entries[(index + offset) mod len]`.
    pub fn lookup(&self, index: u32, offset: u32) -> Result<[u8; DIGEST_LEN], KeychainError> {
        if self.entries.is_empty() {
            return Err(KeychainError::EmptyTable);
        }
        let pos = (u64::from(index) + u64::from(offset)) % self.entries.len() as u64;
        Ok(self.entries[pos as usize])
    }
}

/// Key generation arguments broadcast by the group leader.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KeyMsg {
    pub index: u32,
    pub offset: u32,
    /// Validity of the commitment key, seconds.
    pub duration: u64,
    /// Sender clock at broadcast, seconds.
    pub sender_clock: u64,
    pub nonce: [u8; NONCE_LEN],
    /// Number of intervals.
    pub length: u32,
    pub mode: RetrievalMode,
}

impl KeyMsg {
    pub fn validate(&self) -> Result<(), KeychainError> {
        if self.length == 0 {
            return Err(KeychainError::ZeroLength);
        }
        if self.duration == 0 {
            return Err(KeychainError::InvalidKeyMsg("duration must be positive"));
        }
        if self.duration % u64::from(self.length) != 0 {
            return Err(KeychainError::InvalidKeyMsg("duration must split into equal intervals"));
        }
        Ok(())
    }

    pub fn interval_len(&self) -> u64 {
        self.duration / u64::from(self.length.max(1))
    }

    pub fn to_term(&self) -> Term {
        Term::cat([
            Term::Num(self.index.into()),
            Term::Num(self.offset.into()),
            Term::Num(self.duration),
            Term::Num(self.sender_clock),
            Term::nonce("N0", self.nonce),
            Term::Num(self.length.into()),
            Term::Num(self.mode.as_u8().into()),
        ])
    }
}

/// `G_0 = H(lookup(I, O) ⊕ T_d ⊕ N_0)`.
pub fn commitment_generator(
    table: &SecretTable,
    msg: &KeyMsg,
    ops: &mut OpCounts,
) -> Result<Digest, KeychainError> {
    let seed = table.lookup(msg.index, msg.offset)?;
    let mixed = ops.xor32(&seed, &encode_num(msg.duration));
    let mixed = ops.xor32(&mixed, &msg.nonce);
    Ok(ops.hash(&mixed))
}

/// One step of the generator chain: `F(d) = H(0x46 || d)`.
pub fn chain_step(d: &Digest, ops: &mut OpCounts) -> Digest {
    ops.hash_concat(&[&[CHAIN_STEP_TAG], &d.0])
}

/// `[g0, F(g0), …, F^L(g0)]`.
pub fn extend_chain(g0: Digest, length: u32, ops: &mut OpCounts) -> Result<Vec<Digest>, KeychainError> {
    if length == 0 {
        return Err(KeychainError::ZeroLength);
    }
    let mut out = Vec::with_capacity(length as usize + 1);
    out.push(g0);
    for i in 0..length as usize {
        let next = chain_step(&out[i], ops);
        out.push(next);
    }
    Ok(out)
}

/// Time-based keys, index values and the generators they come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyChain {
    generators: Vec<Digest>,
    keys: Vec<Key>,
    index_vector: Vec<[u8; DIGEST_LEN]>,
    n0: [u8; NONCE_LEN],
    interval_len: u64,
    positions: BTreeMap<[u8; DIGEST_LEN], usize>,
}

/// `(K_i, V_i) = (H(G_i) ⊕ N_0, H(i) ⊕ N_0)`.
pub fn derive_entry(
    generator: &Digest,
    position: u64,
    n0: &[u8; NONCE_LEN],
    ops: &mut OpCounts,
) -> (Key, [u8; DIGEST_LEN]) {
    let k = ops.hash(&generator.0);
    let key = Key::new(ops.xor32(&k.0, n0), KeyKind::TimeBased);
    let v = ops.hash(&encode_num(position));
    (key, ops.xor32(&v.0, n0))
}

impl KeyChain {
    pub fn derive(
        generators: Vec<Digest>,
        n0: [u8; NONCE_LEN],
        interval_len: u64,
        ops: &mut OpCounts,
    ) -> Result<KeyChain, KeychainError> {
        if generators.len() < 2 {
            return Err(KeychainError::ZeroLength);
        }
        let mut keys = Vec::with_capacity(generators.len());
        let mut index_vector = Vec::with_capacity(generators.len());
        let mut positions = BTreeMap::new();
        for (i, g) in generators.iter().enumerate() {
            let (k, v) = derive_entry(g, i as u64, &n0, ops);
            if let Some(&first) = positions.get(&v) {
                return Err(KeychainError::IndexCollision { first, second: i });
            }
            positions.insert(v, i);
            keys.push(k);
            index_vector.push(v);
        }
        Ok(KeyChain { generators, keys, index_vector, n0, interval_len, positions })
    }

    /// Full member-side derivation from the shared table and a key message.
    pub fn build(table: &SecretTable, msg: &KeyMsg, ops: &mut OpCounts) -> Result<KeyChain, KeychainError> {
        msg.validate()?;
        let g0 = commitment_generator(table, msg, ops)?;
        let generators = extend_chain(g0, msg.length, ops)?;
        KeyChain::derive(generators, msg.nonce, msg.interval_len(), ops)
    }

    /// Number of intervals `L`; the chain holds `L + 1` entries.
    pub fn length(&self) -> u32 {
        (self.generators.len() - 1) as u32
    }

    pub fn generators(&self) -> &[Digest] {
        &self.generators
    }

    pub fn keys(&self) -> &[Key] {
        &self.keys
    }

    pub fn key(&self, i: usize) -> Option<&Key> {
        self.keys.get(i)
    }

    pub fn index_vector(&self) -> &[[u8; DIGEST_LEN]] {
        &self.index_vector
    }

    pub fn n0(&self) -> &[u8; NONCE_LEN] {
        &self.n0
    }

    pub fn interval_len(&self) -> u64 {
        self.interval_len
    }

    /// Position of an index value, through the precomputed value→position map.
    pub fn position_of(&self, v: &[u8; DIGEST_LEN]) -> Option<usize> {
        self.positions.get(v).copied()
    }

    /// `H(G_i)`, recovered from `K_i ⊕ N_0` without hashing.
    pub fn generator_digest(&self, i: usize, ops: &mut OpCounts) -> Option<[u8; DIGEST_LEN]> {
        self.keys.get(i).map(|k| ops.xor32(&k.bytes, &self.n0))
    }

    /// Binary export: magic `TAPKC\x01`, `L` (u32), interval length (u64),
    /// `N_0` (16 bytes), then `L + 1` records of `G_i || K_i || V_i`.
    pub fn export(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34 + self.generators.len() * 96);
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&self.length().to_be_bytes());
        out.extend_from_slice(&self.interval_len.to_be_bytes());
        out.extend_from_slice(&self.n0);
        for i in 0..self.generators.len() {
            out.extend_from_slice(&self.generators[i].0);
            out.extend_from_slice(&self.keys[i].bytes);
            out.extend_from_slice(&self.index_vector[i]);
        }
        out
    }

    /// Inverse of [`KeyChain::export`]. The chain is re-derived from `G_0`
    /// and must match every stored record.
    pub fn import(blob: &[u8]) -> Result<KeyChain, KeychainError> {
        let rest = blob.strip_prefix(BLOB_MAGIC.as_slice()).ok_or(KeychainError::Blob("bad magic"))?;
        if rest.len() < 28 {
            return Err(KeychainError::Blob("truncated header"));
        }
        let length = u32::from_be_bytes(rest[0..4].try_into().unwrap());
        let interval_len = u64::from_be_bytes(rest[4..12].try_into().unwrap());
        let n0: [u8; NONCE_LEN] = rest[12..28].try_into().unwrap();
        let records = &rest[28..];
        let count = length as usize + 1;
        if length == 0 || records.len() != count * 96 {
            return Err(KeychainError::Blob("record count does not match length"));
        }
        let g0 = Digest(records[0..32].try_into().unwrap());
        let mut ops = OpCounts::default();
        let chain = KeyChain::derive(extend_chain(g0, length, &mut ops)?, n0, interval_len, &mut ops)?;
        for (i, rec) in records.chunks_exact(96).enumerate() {
            if rec[0..32] != chain.generators[i].0
                || rec[32..64] != chain.keys[i].bytes
                || rec[64..96] != chain.index_vector[i]
            {
                return Err(KeychainError::Blob("record disagrees with re-derived chain"));
            }
        }
        Ok(chain)
    }
}

/// `min(floor((now - start) / interval_len), L)`; `L` means expired.
pub fn interval_index(now: u64, start: u64, interval_len: u64, length: u32) -> Result<u64, KeychainError> {
    if now < start {
        return Err(KeychainError::BeforeStart { now, start });
    }
    if interval_len == 0 {
        return Err(KeychainError::InvalidKeyMsg("interval length is zero"));
    }
    Ok(((now - start) / interval_len).min(u64::from(length)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionKey {
    pub key: Key,
    pub valid_intervals: u64,
    pub issued_interval: u64,
}

impl SessionKey {
    pub fn to_term(&self) -> Term {
        Term::cat([
            Term::bytes(&self.key.bytes),
            Term::Num(self.valid_intervals),
            Term::Num(self.issued_interval),
        ])
    }

    pub fn from_term(t: &Term) -> Option<SessionKey> {
        match t.as_cat()? {
            [k, valid, issued] => Some(SessionKey {
                key: Key::new(k.as_bytes32()?, KeyKind::Session),
                valid_intervals: valid.as_num()?,
                issued_interval: issued.as_num()?,
            }),
            _ => None,
        }
    }
}

/// Remaining intervals in the chain, never less than one.
fn remaining(issued_interval: u64, length: u32) -> u64 {
    u64::from(length).saturating_sub(issued_interval).max(1)
}

/// `K_S = H(K_i || H(K_C))`.
pub fn derive_session_key(
    time_key: &Key,
    customer_key: &Key,
    issued_interval: u64,
    length: u32,
    ops: &mut OpCounts,
) -> SessionKey {
    let kc_digest = ops.hash(&customer_key.bytes);
    derive_session_key_from_digest(time_key, &kc_digest, issued_interval, length, ops)
}

/// As [`derive_session_key`] with `H(K_C)` already known (registration-time value).
pub fn derive_session_key_from_digest(
    time_key: &Key,
    customer_key_digest: &Digest,
    issued_interval: u64,
    length: u32,
    ops: &mut OpCounts,
) -> SessionKey {
    let k = ops.hash_concat(&[&time_key.bytes, &customer_key_digest.0]);
    SessionKey {
        key: Key::new(k.0, KeyKind::Session),
        valid_intervals: remaining(issued_interval, length),
        issued_interval,
    }
}

/// Re-authentication session key `h(K_C || V_i)`.
pub fn reauth_session_key(customer_key: &Key, index_value: &[u8; DIGEST_LEN], ops: &mut OpCounts) -> Key {
    Key::new(ops.hash_concat(&[&customer_key.bytes, index_value]).0, KeyKind::Session)
}

/// Re-authentication session key with its validity bookkeeping.
pub fn reauth_session(
    customer_key: &Key,
    index_value: &[u8; DIGEST_LEN],
    issued_interval: u64,
    length: u32,
    ops: &mut OpCounts,
) -> SessionKey {
    SessionKey {
        key: reauth_session_key(customer_key, index_value, ops),
        valid_intervals: remaining(issued_interval, length),
        issued_interval,
    }
}
