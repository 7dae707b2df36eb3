//! Two-segment re-authentication tickets and the three retrieval modes for
//! the time-based key that seals the customer-information segment.
//!
//! A ticket is `E_i(C || K_S || V_i || Profile || H_head) || E_G(retrieval info)`.
//! The verifier opens the retrieval segment with the group key, locates the
//! interval `i`, and then opens the first segment with `K_i`.
//!
//! # Byte layout (version 1)
//!
//! A ticket travels as the term
//! `Cat[Atom("TK/1"), Num(mode), info_segment, retrieval_segment]`, so its
//! bytes are that term's [`Term::encode`] output. Segment payloads:
//!
//! * info: `Cat[Id(C), Cat[Bytes(K_S), Num(valid), Num(issued)], Bytes(V_i), profile, Bytes(H_head)]`
//! * mode 1: `Cat[Id(C), Bytes(V_i), Bytes(H(G_i)), Bytes(H(K_C))]`
//! * mode 2: `Cat[Id(C), Num(T_t), Bytes(H(G_i)), Bytes(H(K_C))]`
//! * mode 3: `Cat[Id(C), Bytes(V_i), Bytes(head), Cat[Bytes(sibling)…], Bytes(H(K_C))]`
//!
//! For modes 1 and 2, `H_head` is the hash of the encoded
//! `Cat[Id(C), session, Bytes(V_i), profile]`; for mode 3 it is the
//! index-tree head.

use alloc::string::String;
use alloc::vec::Vec;

use crate::algebra::{hash_concat, Digest, Key, OpCounts, Term, DIGEST_LEN};
use crate::keychain::{KeyChain, RetrievalMode, SessionKey};

pub const TICKET_LABEL: &str = "TK/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalError {
    #[error("index value not present in the local vector")]
    UnknownIndexValue,
    #[error("no matching interval inside the drift window")]
    NotInWindow,
    #[error("sibling path does not reproduce the local tree head")]
    HeadMismatch,
    #[error("located time-based key does not open the information segment")]
    WrongTimeKey,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TicketError {
    #[error("mode-specific issuing data missing")]
    MissingExtras,
    #[error("retrieval segment not sealed under this group key")]
    WrongGroupKey,
    #[error("key retrieval failed: {0}")]
    RetrievalFailed(#[from] RetrievalError),
    #[error("ticket segments disagree")]
    SegmentMismatch,
    #[error("malformed ticket")]
    Malformed,
    #[error("leaf position out of range")]
    OutOfRange,
}

/// Binary hash tree over the index vector, padded with zero leaves to a
/// power of two (at least two leaves).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexTree {
    /// `levels[0]` are the leaves, the last level holds only the head.
    levels: Vec<Vec<Digest>>,
    real_leaves: usize,
}

fn combine(left: &Digest, right: &Digest, ops: &mut OpCounts) -> Digest {
    ops.hash_concat(&[&left.0, &right.0])
}

impl IndexTree {
    pub fn build(index_vector: &[[u8; DIGEST_LEN]], ops: &mut OpCounts) -> IndexTree {
        assert!(!index_vector.is_empty(), "index vector must be nonempty");
        let width = index_vector.len().next_power_of_two().max(2);
        let mut leaves: Vec<Digest> = index_vector.iter().map(|v| Digest(*v)).collect();
        leaves.resize(width, Digest::ZERO);
        let mut levels = Vec::new();
        levels.push(leaves);
        while levels.last().map_or(0, Vec::len) > 1 {
            let prev = levels.last().unwrap();
            let next = prev.chunks_exact(2).map(|p| combine(&p[0], &p[1], ops)).collect();
            levels.push(next);
        }
        IndexTree { levels, real_leaves: index_vector.len() }
    }

    pub fn head(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    /// Number of sibling digests in every path.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaf_count(&self) -> usize {
        self.levels[0].len()
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    /// Bottom-up sibling digests for leaf `i`.
    pub fn sibling_path(&self, i: usize) -> Result<Vec<Digest>, TicketError> {
        if i >= self.leaf_count() {
            return Err(TicketError::OutOfRange);
        }
        let mut pos = i;
        let mut path = Vec::with_capacity(self.depth());
        for level in &self.levels[..self.depth()] {
            path.push(level[pos ^ 1]);
            pos /= 2;
        }
        Ok(path)
    }
}

/// Folds a leaf with its bottom-up siblings; bit `k` of `position` says
/// whether the running node is a right child at level `k`.
pub fn fold_path(leaf: &Digest, position: usize, path: &[Digest], ops: &mut OpCounts) -> Digest {
    path.iter().enumerate().fold(*leaf, |node, (level, sib)| {
        if (position >> level) & 1 == 0 {
            combine(&node, sib, ops)
        } else {
            combine(sib, &node, ops)
        }
    })
}

/// Mode 1: exact match in the precomputed value→position index.
pub fn retrieve_mode1(claimed: &[u8; DIGEST_LEN], chain: &KeyChain) -> Result<usize, RetrievalError> {
    chain.position_of(claimed).ok_or(RetrievalError::UnknownIndexValue)
}

/// Mode 3: walk down from the local head, stepping away from the appended
/// sibling at every level, then confirm the path by folding it back up.
/// The confirmation costs exactly `depth` hash invocations.
pub fn retrieve_mode3(
    claimed: &[u8; DIGEST_LEN],
    path: &[Digest],
    head: &Digest,
    tree: &IndexTree,
    ops: &mut OpCounts,
) -> Result<usize, RetrievalError> {
    let depth = tree.depth();
    if path.len() != depth || *head != tree.head() {
        return Err(RetrievalError::HeadMismatch);
    }
    let mut pos = 0usize;
    for level in (0..depth).rev() {
        let (left, right) = (tree.levels[level][2 * pos], tree.levels[level][2 * pos + 1]);
        let sib = path[level];
        pos = if sib == left {
            2 * pos + 1
        } else if sib == right {
            2 * pos
        } else {
            return Err(RetrievalError::HeadMismatch);
        };
    }
    if fold_path(&Digest(*claimed), pos, path, ops) != tree.head() {
        return Err(RetrievalError::HeadMismatch);
    }
    if pos >= tree.real_leaves {
        return Err(RetrievalError::UnknownIndexValue);
    }
    Ok(pos)
}

/// Verifier-side clock drift bound used to window the mode-2 search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DriftEstimator {
    /// Current drift bound, seconds.
    pub epsilon: u64,
    /// Chain validity `T_d`, seconds.
    pub duration: u64,
    /// Chain start on the verifier's own clock.
    pub chain_start: u64,
    pub last_update: Option<u64>,
}

impl DriftEstimator {
    /// `ε_0 = |T_c(verifier) - T_c(sender)|`, anchored at the verifier's clock.
    pub fn from_key_msg(local_clock: u64, sender_clock: u64, duration: u64) -> Self {
        DriftEstimator {
            epsilon: local_clock.abs_diff(sender_clock),
            duration,
            chain_start: local_clock,
            last_update: None,
        }
    }

    /// Folds in an observed drift. Times in the weights are measured from
    /// the local chain start; both weights are clamped to `[0, 1]`.
    fn update(&mut self, observed: u64, verifier_now: u64, issue_time: u64) {
        let d = i128::from(self.duration.max(1));
        let elapsed = (i128::from(verifier_now) - i128::from(self.chain_start))
            + (i128::from(issue_time) - i128::from(self.chain_start));
        let w1 = elapsed.clamp(0, d);
        let mixed = ((d - w1) * i128::from(self.epsilon) + w1 * i128::from(observed)) / d;
        self.epsilon = mixed as u64;
        self.last_update = Some(verifier_now);
    }
}

fn floor_div(a: i128, b: i128) -> i128 {
    a.div_euclid(b)
}

fn ceil_div(a: i128, b: i128) -> i128 {
    -(-a).div_euclid(b)
}

/// Mode 2: scan the intervals around the issue time (translated to the
/// local chain) for the one whose `H(G_i)` equals `claimed_generator_digest`.
///
/// The window is `[(c - ε) / len, (c + ε) / len]` rounded outward, with
/// `c = T_t - chain_start`. On success the estimator absorbs
/// `ε_cur = |c - i·len|`; on failure it is left untouched.
pub fn retrieve_mode2(
    issue_time: u64,
    verifier_now: u64,
    est: &DriftEstimator,
    chain: &KeyChain,
    claimed_generator_digest: &[u8; DIGEST_LEN],
    ops: &mut OpCounts,
) -> Result<(usize, DriftEstimator), RetrievalError> {
    let len = i128::from(chain.interval_len().max(1));
    let c = i128::from(issue_time) - i128::from(est.chain_start);
    let eps = i128::from(est.epsilon);
    let last = i128::from(chain.length());
    let lo = floor_div(c - eps, len).clamp(0, last);
    let hi = ceil_div(c + eps, len).clamp(0, last);
    for i in lo..=hi {
        let i = i as usize;
        if chain.generator_digest(i, ops).as_ref() == Some(claimed_generator_digest) {
            let observed = (c - i as i128 * len).unsigned_abs() as u64;
            let mut next = *est;
            next.update(observed, verifier_now, issue_time);
            return Ok((i, next));
        }
    }
    Err(RetrievalError::NotInWindow)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ticket {
    pub mode: RetrievalMode,
    pub info_segment: Term,
    pub retrieval_segment: Term,
}

/// Everything the issuer binds into a ticket.
#[derive(Clone, Debug)]
pub struct TicketContent<'a> {
    pub customer: &'a str,
    pub session: SessionKey,
    pub index: usize,
    pub index_value: [u8; DIGEST_LEN],
    pub profile: Term,
    pub generator_digest: [u8; DIGEST_LEN],
    pub customer_key_digest: Digest,
}

/// Mode-specific issuing inputs.
#[derive(Clone, Copy, Debug, Default)]
pub struct TicketExtras<'a> {
    pub issue_time: Option<u64>,
    pub tree: Option<&'a IndexTree>,
}

fn info_core(c: &TicketContent<'_>) -> Term {
    Term::cat([
        Term::id(c.customer),
        c.session.to_term(),
        Term::bytes(&c.index_value),
        c.profile.clone(),
    ])
}

pub fn issue_ticket(
    mode: RetrievalMode,
    content: &TicketContent<'_>,
    time_key: &Key,
    group_key: &Key,
    extras: TicketExtras<'_>,
    ops: &mut OpCounts,
) -> Result<Ticket, TicketError> {
    let customer = Term::id(content.customer);
    let kc = Term::digest(&content.customer_key_digest);
    let (head, retrieval) = match mode {
        RetrievalMode::Mode1 => (
            ops.hash(&info_core(content).encode()),
            Term::cat([
                customer,
                Term::bytes(&content.index_value),
                Term::bytes(&content.generator_digest),
                kc,
            ]),
        ),
        RetrievalMode::Mode2 => {
            let t = extras.issue_time.ok_or(TicketError::MissingExtras)?;
            (
                ops.hash(&info_core(content).encode()),
                Term::cat([customer, Term::Num(t), Term::bytes(&content.generator_digest), kc]),
            )
        }
        RetrievalMode::Mode3 => {
            let tree = extras.tree.ok_or(TicketError::MissingExtras)?;
            let path = tree.sibling_path(content.index)?;
            (
                tree.head(),
                Term::cat([
                    customer,
                    Term::bytes(&content.index_value),
                    Term::digest(&tree.head()),
                    Term::Cat(path.iter().map(Term::digest).collect()),
                    kc,
                ]),
            )
        }
    };
    let mut info = info_core(content);
    if let Term::Cat(parts) = &mut info {
        parts.push(Term::digest(&head));
    }
    Ok(Ticket {
        mode,
        info_segment: ops.seal(time_key, info),
        retrieval_segment: ops.seal(group_key, retrieval),
    })
}

impl Ticket {
    pub fn to_term(&self) -> Term {
        Term::cat([
            Term::atom(TICKET_LABEL),
            Term::Num(self.mode.as_u8().into()),
            self.info_segment.clone(),
            self.retrieval_segment.clone(),
        ])
    }

    pub fn from_term(t: &Term) -> Result<Ticket, TicketError> {
        match t.as_cat() {
            Some([label, mode, info, retrieval]) if label.as_atom() == Some(TICKET_LABEL) => {
                let mode = mode
                    .as_num()
                    .and_then(|m| u8::try_from(m).ok())
                    .and_then(RetrievalMode::from_u8)
                    .ok_or(TicketError::Malformed)?;
                Ok(Ticket { mode, info_segment: info.clone(), retrieval_segment: retrieval.clone() })
            }
            _ => Err(TicketError::Malformed),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_term().encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Ticket, TicketError> {
        Term::decode(bytes).map_err(|_| TicketError::Malformed).and_then(|t| Ticket::from_term(&t))
    }

    pub fn fingerprint(&self) -> Digest {
        self.to_term().fingerprint()
    }
}

/// Opened retrieval segment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RetrievalInfo {
    Mode1 { index_value: [u8; DIGEST_LEN], generator_digest: [u8; DIGEST_LEN] },
    Mode2 { issue_time: u64, generator_digest: [u8; DIGEST_LEN] },
    Mode3 { index_value: [u8; DIGEST_LEN], head: Digest, path: Vec<Digest> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RetrievalSegment {
    pub customer: String,
    pub customer_key_digest: [u8; DIGEST_LEN],
    pub info: RetrievalInfo,
}

/// Opens and parses the group-key segment only. Providers outside the
/// issuing group use this to check who a forwarded ticket belongs to.
pub fn open_retrieval_segment(
    ticket: &Ticket,
    group_key: &Key,
    ops: &mut OpCounts,
) -> Result<RetrievalSegment, TicketError> {
    let payload = ops.open(group_key, &ticket.retrieval_segment).map_err(|_| TicketError::WrongGroupKey)?;
    let parts = payload.as_cat().ok_or(TicketError::Malformed)?;
    let b32 = |t: &Term| t.as_bytes32().ok_or(TicketError::Malformed);
    let customer = |t: &Term| t.as_id().map(String::from).ok_or(TicketError::Malformed);
    match (ticket.mode, parts) {
        (RetrievalMode::Mode1, [c, v, g, kc]) => Ok(RetrievalSegment {
            customer: customer(c)?,
            customer_key_digest: b32(kc)?,
            info: RetrievalInfo::Mode1 { index_value: b32(v)?, generator_digest: b32(g)? },
        }),
        (RetrievalMode::Mode2, [c, t, g, kc]) => Ok(RetrievalSegment {
            customer: customer(c)?,
            customer_key_digest: b32(kc)?,
            info: RetrievalInfo::Mode2 {
                issue_time: t.as_num().ok_or(TicketError::Malformed)?,
                generator_digest: b32(g)?,
            },
        }),
        (RetrievalMode::Mode3, [c, v, head, path, kc]) => Ok(RetrievalSegment {
            customer: customer(c)?,
            customer_key_digest: b32(kc)?,
            info: RetrievalInfo::Mode3 {
                index_value: b32(v)?,
                head: Digest(b32(head)?),
                path: path
                    .as_cat()
                    .ok_or(TicketError::Malformed)?
                    .iter()
                    .map(|d| b32(d).map(Digest))
                    .collect::<Result<_, _>>()?,
            },
        }),
        _ => Err(TicketError::Malformed),
    }
}

/// What a verifier holds for one issuing group.
#[derive(Clone, Copy, Debug)]
pub struct VerifierKeys<'a> {
    pub chain: &'a KeyChain,
    pub tree: &'a IndexTree,
    pub group_key: &'a Key,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifiedTicket {
    pub customer: String,
    pub session: SessionKey,
    pub profile: Term,
    pub index: usize,
    pub index_value: [u8; DIGEST_LEN],
    pub customer_key_digest: [u8; DIGEST_LEN],
}

/// Opens the retrieval segment, locates the interval, opens the information
/// segment with `K_i` and cross-checks both halves. The drift estimator is
/// updated only for a successful mode-2 retrieval.
pub fn verify_ticket(
    ticket: &Ticket,
    keys: VerifierKeys<'_>,
    est: &mut DriftEstimator,
    verifier_now: u64,
    ops: &mut OpCounts,
) -> Result<VerifiedTicket, TicketError> {
    let seg = open_retrieval_segment(ticket, keys.group_key, ops)?;
    let chain = keys.chain;
    let (index, next_est) = match &seg.info {
        RetrievalInfo::Mode1 { index_value, generator_digest } => {
            let i = retrieve_mode1(index_value, chain)?;
            if chain.generator_digest(i, ops).as_ref() != Some(generator_digest) {
                return Err(TicketError::SegmentMismatch);
            }
            (i, None)
        }
        RetrievalInfo::Mode2 { issue_time, generator_digest } => {
            let (i, e) = retrieve_mode2(*issue_time, verifier_now, est, chain, generator_digest, ops)?;
            (i, Some(e))
        }
        RetrievalInfo::Mode3 { index_value, head, path } => {
            (retrieve_mode3(index_value, path, head, keys.tree, ops)?, None)
        }
    };
    let time_key = chain.key(index).ok_or(TicketError::Malformed)?;
    let info = ops
        .open(time_key, &ticket.info_segment)
        .map_err(|_| TicketError::RetrievalFailed(RetrievalError::WrongTimeKey))?;
    let (customer, session, v, p, head) = match info.as_cat() {
        Some([c, s, v, p, h]) => (
            c.as_id().ok_or(TicketError::Malformed)?,
            SessionKey::from_term(s).ok_or(TicketError::Malformed)?,
            v.as_bytes32().ok_or(TicketError::Malformed)?,
            p,
            h.as_bytes32().ok_or(TicketError::Malformed)?,
        ),
        _ => return Err(TicketError::Malformed),
    };
    if customer != seg.customer || v != chain.index_vector()[index] {
        return Err(TicketError::SegmentMismatch);
    }
    let head_ok = match ticket.mode {
        RetrievalMode::Mode3 => head == keys.tree.head().0,
        _ => {
            let core = Term::cat([Term::id(customer), session.to_term(), Term::bytes(&v), p.clone()]);
            ops.hash(&core.encode()).0 == head
        }
    };
    if !head_ok {
        return Err(TicketError::SegmentMismatch);
    }
    if let Some(e) = next_est {
        *est = e;
    }
    Ok(VerifiedTicket {
        customer: customer.into(),
        session,
        profile: p.clone(),
        index,
        index_value: v,
        customer_key_digest: seg.customer_key_digest,
    })
}

/// Digest helper shared by issuers: `H(K_C)`.
pub fn customer_key_digest(customer_key: &Key) -> Digest {
    hash_concat(&[&customer_key.bytes])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{hash, seal, KeyKind};
    use crate::keychain::{derive_session_key, extend_chain};

    fn chain(seed: &[u8], length: u32) -> KeyChain {
        let mut ops = OpCounts::default();
        let g = extend_chain(hash(seed), length, &mut ops).unwrap();
        let mut n0 = [0u8; 16];
        n0.copy_from_slice(&g[0].0[..16]);
        KeyChain::derive(g, n0, 100, &mut ops).unwrap()
    }

    #[test]
    fn single_leaf_tree() {
        let mut ops = OpCounts::default();
        let t = IndexTree::build(&[[3; 32]], &mut ops);
        assert_eq!(t.head(), hash_concat(&[&[3u8; 32], &[0u8; 32]]));
        assert_eq!(t.depth(), 1);
        assert_eq!(t.leaf_count(), 2);
    }

    #[test]
    fn tree_head_sensitive_to_every_leaf() {
        let mut ops = OpCounts::default();
        let c = chain(b"a", 15);
        let base = IndexTree::build(c.index_vector(), &mut ops);
        assert_eq!(base, IndexTree::build(c.index_vector(), &mut ops));
        for i in 0..16 {
            let mut v = c.index_vector().to_vec();
            v[i][0] ^= 1;
            assert_ne!(IndexTree::build(&v, &mut ops).head(), base.head());
        }
    }

    #[test]
    fn sibling_paths_fold_to_head() {
        let mut ops = OpCounts::default();
        let c = chain(b"b", 15);
        let t = IndexTree::build(c.index_vector(), &mut ops);
        assert_eq!(t.depth(), 4);
        for i in 0..16 {
            let p = t.sibling_path(i).unwrap();
            assert_eq!(p.len(), 4);
            assert_eq!(fold_path(&t.leaves()[i], i, &p, &mut ops), t.head());
            for lvl in 0..4 {
                let mut bad = p.clone();
                bad[lvl].0[5] ^= 0x80;
                assert_ne!(fold_path(&t.leaves()[i], i, &bad, &mut ops), t.head());
            }
        }
        assert_eq!(t.sibling_path(16), Err(TicketError::OutOfRange));
    }

    #[test]
    fn mode1_lookup() {
        let c = chain(b"c", 8);
        assert_eq!(retrieve_mode1(&c.index_vector()[3], &c), Ok(3));
        for i in 0..=8 {
            assert_eq!(retrieve_mode1(&c.index_vector()[i], &c), Ok(i));
        }
        assert_eq!(retrieve_mode1(&[0x77; 32], &c), Err(RetrievalError::UnknownIndexValue));
    }

    #[test]
    fn mode3_honest_forged_and_crossed() {
        let mut ops = OpCounts::default();
        let a = chain(b"d", 15);
        let b = chain(b"e", 15);
        let ta = IndexTree::build(a.index_vector(), &mut ops);
        let tb = IndexTree::build(b.index_vector(), &mut ops);
        let mut counter = OpCounts::default();
        let p6 = ta.sibling_path(6).unwrap();
        assert_eq!(retrieve_mode3(&a.index_vector()[6], &p6, &ta.head(), &ta, &mut counter), Ok(6));
        assert_eq!(counter.hash, 4);
        let pb = tb.sibling_path(6).unwrap();
        assert_eq!(
            retrieve_mode3(&b.index_vector()[6], &pb, &ta.head(), &ta, &mut ops),
            Err(RetrievalError::HeadMismatch)
        );
        assert_eq!(
            retrieve_mode3(&a.index_vector()[6], &pb, &ta.head(), &ta, &mut ops),
            Err(RetrievalError::HeadMismatch)
        );
        // right siblings, wrong leaf value
        assert_eq!(
            retrieve_mode3(&[1; 32], &p6, &ta.head(), &ta, &mut ops),
            Err(RetrievalError::HeadMismatch)
        );
    }

    #[test]
    fn mode3_padding_leaf_is_unknown() {
        let mut ops = OpCounts::default();
        let a = chain(b"f", 4); // 5 real leaves, 8 total
        let t = IndexTree::build(a.index_vector(), &mut ops);
        let p = t.sibling_path(6).unwrap();
        assert_eq!(
            retrieve_mode3(&[0; 32], &p, &t.head(), &t, &mut ops),
            Err(RetrievalError::UnknownIndexValue)
        );
    }

    #[test]
    fn mode2_zero_drift_and_excess_drift() {
        let mut ops = OpCounts::default();
        let c = chain(b"g", 15);
        let start = 5_000;
        let est = DriftEstimator { epsilon: 20, duration: 1500, chain_start: start, last_update: None };
        let g5 = c.generator_digest(5, &mut ops).unwrap();
        let (i, next) = retrieve_mode2(start + 500, start + 510, &est, &c, &g5, &mut ops).unwrap();
        assert_eq!(i, 5);
        assert!(next.epsilon <= est.epsilon);
        // verifier anchored 10·ε later than the issuer
        let far = DriftEstimator { chain_start: start + 200, ..est };
        assert_eq!(
            retrieve_mode2(start + 500, start + 510, &far, &c, &g5, &mut ops),
            Err(RetrievalError::NotInWindow)
        );
    }

    #[test]
    fn initial_epsilon_is_clock_difference() {
        let e = DriftEstimator::from_key_msg(1_007, 1_000, 1500);
        assert_eq!(e.epsilon, 7);
        assert_eq!(DriftEstimator::from_key_msg(990, 1_000, 1500).epsilon, 10);
    }

    fn content<'a>(c: &KeyChain, who: &'a str, i: usize, ops: &mut OpCounts) -> TicketContent<'a> {
        let kc = Key::new([0x42; 32], KeyKind::PublicPair);
        TicketContent {
            customer: who,
            session: derive_session_key(&c.keys()[i], &kc, i as u64, c.length(), ops),
            index: i,
            index_value: c.index_vector()[i],
            profile: Term::atom("profile:basic"),
            generator_digest: c.generator_digest(i, ops).unwrap(),
            customer_key_digest: hash(&kc.bytes),
        }
    }

    #[test]
    fn issue_verify_every_mode() {
        let mut ops = OpCounts::default();
        let c = chain(b"h", 15);
        let tree = IndexTree::build(c.index_vector(), &mut ops);
        let kg = Key::new([9; 32], KeyKind::Group);
        let start = 1_000;
        for mode in [RetrievalMode::Mode1, RetrievalMode::Mode2, RetrievalMode::Mode3] {
            let body = content(&c, "C1", 7, &mut ops);
            let extras = TicketExtras { issue_time: Some(start + 730), tree: Some(&tree) };
            let tk = issue_ticket(mode, &body, &c.keys()[7], &kg, extras, &mut ops).unwrap();
            assert_eq!(Ticket::from_bytes(&tk.to_bytes()), Ok(tk.clone()));
            let mut est = DriftEstimator { epsilon: 5, duration: 1500, chain_start: start, last_update: None };
            let keys = VerifierKeys { chain: &c, tree: &tree, group_key: &kg };
            let v = verify_ticket(&tk, keys, &mut est, start + 740, &mut ops).unwrap();
            assert_eq!(v.customer, "C1");
            assert_eq!(v.session, body.session);
            assert_eq!(v.profile, body.profile);
            assert_eq!(v.index, 7);

            let foreign = Key::new([8; 32], KeyKind::Group);
            let keys = VerifierKeys { group_key: &foreign, ..keys };
            assert_eq!(verify_ticket(&tk, keys, &mut est, start, &mut ops), Err(TicketError::WrongGroupKey));
        }
    }

    #[test]
    fn mode1_retrieval_segment_round_trip() {
        let mut ops = OpCounts::default();
        let c = chain(b"i", 8);
        let tree = IndexTree::build(c.index_vector(), &mut ops);
        let kg = Key::new([9; 32], KeyKind::Group);
        let body = content(&c, "C1", 2, &mut ops);
        // any kind of key works for sealing
        let wrong_kind = Key::new(c.keys()[2].bytes, KeyKind::Partial);
        let tk = issue_ticket(RetrievalMode::Mode1, &body, &wrong_kind, &kg, TicketExtras::default(), &mut ops)
            .unwrap();
        let seg = open_retrieval_segment(&tk, &kg, &mut ops).unwrap();
        assert_eq!(seg.customer_key_digest, body.customer_key_digest.0);
        assert!(matches!(seg.info, RetrievalInfo::Mode1 { index_value, .. } if index_value == c.index_vector()[2]));
        assert!(issue_ticket(RetrievalMode::Mode2, &body, &c.keys()[2], &kg, TicketExtras::default(), &mut ops)
            .is_err());
        let mut est = DriftEstimator::from_key_msg(0, 0, 800);
        let keys = VerifierKeys { chain: &c, tree: &tree, group_key: &kg };
        assert!(verify_ticket(&tk, keys, &mut est, 0, &mut ops).is_ok());
    }

    #[test]
    fn spliced_info_segment_is_rejected() {
        let mut ops = OpCounts::default();
        let c = chain(b"j", 8);
        let tree = IndexTree::build(c.index_vector(), &mut ops);
        let kg = Key::new([9; 32], KeyKind::Group);
        let a = issue_ticket(
            RetrievalMode::Mode1,
            &content(&c, "Alice", 3, &mut ops),
            &c.keys()[3],
            &kg,
            TicketExtras::default(),
            &mut ops,
        )
        .unwrap();
        let b = issue_ticket(
            RetrievalMode::Mode1,
            &content(&c, "Bob", 3, &mut ops),
            &c.keys()[3],
            &kg,
            TicketExtras::default(),
            &mut ops,
        )
        .unwrap();
        let spliced = Ticket { info_segment: b.info_segment.clone(), ..a.clone() };
        let mut est = DriftEstimator::from_key_msg(0, 0, 800);
        let keys = VerifierKeys { chain: &c, tree: &tree, group_key: &kg };
        assert_eq!(verify_ticket(&spliced, keys, &mut est, 0, &mut ops), Err(TicketError::SegmentMismatch));

        // info segment sealed under a different interval key
        let shifted = Ticket { info_segment: seal(&c.keys()[4], Term::atom("x")), ..a };
        assert_eq!(
            verify_ticket(&shifted, keys, &mut est, 0, &mut ops),
            Err(TicketError::RetrievalFailed(RetrievalError::WrongTimeKey))
        );
    }
}
