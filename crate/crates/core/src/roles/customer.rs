//! Customer: joins through the first broadcasting provider, accepts tickets,
//! switches providers, recovers from lost responses and runs the
//! customer-to-customer key agreement.

use alloc::collections::BTreeMap;
use alloc::string::String;

use super::party::{
    leader_digest, CustomerConfig, PartyState, Pending, RoleError, RoleState, TimerTag,
};
use super::{Binding, EventKind, MsgKind, ProtocolMessage, StepOutput};
use crate::algebra::{hash, Key, KeyKind, OpCounts, Term, DIGEST_LEN};
use crate::keychain::SessionKey;
use crate::ticket::Ticket;

/// One side of a customer-to-customer exchange.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CcSession {
    pub initiator: bool,
    pub n0: Option<Term>,
    pub n1: Option<Term>,
    /// Partial key as kept locally.
    pub own_partial: [u8; DIGEST_LEN],
    pub peer_partial: Option<[u8; DIGEST_LEN]>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CustomerState {
    /// Long-term customer key `K_C`, shared with the profile database.
    pub key: Key,
    pub config: CustomerConfig,
    /// Public seal keys learned from broadcasts, by ME.
    pub me_keys: BTreeMap<String, Key>,
    /// Broadcasting provider → its ME.
    pub provider_me: BTreeMap<String, String>,
    pub ticket: Option<Ticket>,
    /// ME whose chain the current ticket belongs to.
    pub ticket_me: Option<String>,
    pub session: Option<SessionKey>,
    joined: bool,
    pub cc: BTreeMap<String, CcSession>,
    /// Established customer-to-customer keys.
    pub cc_keys: BTreeMap<String, Key>,
}

impl CustomerState {
    pub fn new(key: Key, config: CustomerConfig) -> Self {
        CustomerState {
            key,
            config,
            me_keys: BTreeMap::new(),
            provider_me: BTreeMap::new(),
            ticket: None,
            ticket_me: None,
            session: None,
            joined: false,
            cc: BTreeMap::new(),
            cc_keys: BTreeMap::new(),
        }
    }
}

fn cust(st: &PartyState) -> &CustomerState {
    match &st.state {
        RoleState::C(c) => c,
        _ => unreachable!("customer handler on a non-customer party"),
    }
}

fn cust_mut(st: &mut PartyState) -> &mut CustomerState {
    match &mut st.state {
        RoleState::C(c) => c,
        _ => unreachable!("customer handler on a non-customer party"),
    }
}

fn nonce_bytes(t: &Term) -> &[u8] {
    match t {
        Term::Nonce { value, .. } => value,
        Term::Bytes(b) => b,
        _ => &[],
    }
}

/// `K_ij = H((K_i^p ⊕ N1) ‖ (K_j^p ⊕ N0))`.
pub fn derive_cc_key(ki: &[u8], n1: &Term, kj: &[u8], n0: &Term, ops: &mut OpCounts) -> Key {
    let left = ops.xor32(ki, nonce_bytes(n1));
    let right = ops.xor32(kj, nonce_bytes(n0));
    Key::new(ops.hash_concat(&[&left, &right]).0, KeyKind::Session)
}

fn session_binding(n0: &Term, n1: &Term, ticket: &Ticket, ks: &SessionKey) -> Term {
    Binding {
        n0: Some(n0.clone()),
        n1: Some(n1.clone()),
        ticket: Some(ticket.fingerprint()),
        session: Some(hash(&ks.key.bytes)),
    }
    .to_term()
}

pub(super) fn handle(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    match msg.kind {
        MsgKind::BroadcastPk => on_broadcast(st, msg, now, out),
        MsgKind::U0Deliver | MsgKind::Limited => on_u0(st, msg, now, out),
        MsgKind::CCInit | MsgKind::CCReply => on_cc_message(st, msg, now, out),
        MsgKind::PartialKeyResp => on_partial(st, msg, now, out),
        MsgKind::ChallengeResp => on_cc_confirm(st, msg, now, out),
        _ => {}
    }
}

fn on_broadcast(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let Some([me, pk]) = msg.body.as_cat() else { return };
    let (Some(me), Some(pk)) = (me.as_id(), pk.as_bytes32()) else { return };
    let c = cust_mut(st);
    c.me_keys.insert(me.into(), Key::new(pk, KeyKind::PublicPair));
    c.provider_me.insert(msg.from.clone(), me.into());
    if c.config.auto_join && !c.joined && c.ticket.is_none() {
        let _ = start_join(st, &msg.from, now, out);
    }
}

pub(super) fn start_join(st: &mut PartyState, provider: &str, now: u64, out: &mut StepOutput) -> Result<(), RoleError> {
    let c = cust(st);
    let me = c.provider_me.get(provider).cloned().ok_or_else(|| RoleError::NoBroadcastSeen(provider.into()))?;
    let pk = *c.me_keys.get(&me).ok_or_else(|| RoleError::NoBroadcastSeen(provider.into()))?;
    if st.restricted && st.pending.contains_key(provider) {
        return Ok(());
    }
    let password = c.config.password.clone();
    let n0 = match password {
        Some(pw) => Term::digest(&st.ops.hash(&pw)),
        None => st.fresh_nonce("N0"),
    };
    let body = st.ops.seal(&pk, Term::cat([Term::id(&st.id), n0.clone()]));
    cust_mut(st).joined = true;
    st.pending.insert(provider.into(), Pending::Join { n0: n0.clone(), prev: None, me, attempts: 0 });
    st.send(out, now, MsgKind::JoinReq, provider, body);
    st.arm(out, TimerTag::Join { provider: provider.into(), nonce: n0.fingerprint() });
    Ok(())
}

fn ticket_parts(st: &PartyState) -> Result<(Ticket, SessionKey, [u8; DIGEST_LEN]), RoleError> {
    let c = cust(st);
    match (&c.ticket, &c.session, &c.ticket_me) {
        (Some(t), Some(s), Some(me)) => Ok((t.clone(), *s, leader_digest(me).0)),
        _ => Err(RoleError::NoTicket),
    }
}

pub(super) fn start_switch(st: &mut PartyState, provider: &str, now: u64, out: &mut StepOutput) -> Result<(), RoleError> {
    let (ticket, ks, h) = ticket_parts(st)?;
    if st.restricted && st.pending.contains_key(provider) {
        return Ok(());
    }
    let n0 = st.fresh_nonce("N0");
    let sealed = st.ops.seal(&ks.key, Term::cat([Term::id(&st.id), n0.clone()]));
    let body = Term::cat([sealed, ticket.to_term(), Term::bytes(&h)]);
    st.pending.insert(provider.into(), Pending::Switch { n0: n0.clone(), prev: None, attempts: 0 });
    st.send(out, now, MsgKind::SwitchReq, provider, body);
    st.arm(out, TimerTag::Switch { provider: provider.into(), nonce: n0.fingerprint() });
    Ok(())
}

fn accept(
    st: &mut PartyState,
    provider: &str,
    n0: &Term,
    n1: &Term,
    ticket: Ticket,
    ks: SessionKey,
    now: u64,
    out: &mut StepOutput,
) {
    st.pending.remove(provider);
    st.association = Some(provider.into());
    st.emit(out, now, EventKind::Conf, provider, session_binding(n0, n1, &ticket, &ks));
    let c = cust_mut(st);
    c.ticket = Some(ticket);
    c.session = Some(ks);
}

fn challenge_reply(st: &mut PartyState, provider: &str, n1: &Term, ks: &SessionKey, now: u64, out: &mut StepOutput) {
    let Some(next) = n1.succ() else { return };
    let body = st.ops.seal(&ks.key, Term::cat([Term::id(&st.id), next]));
    st.send(out, now, MsgKind::ChallengeResp, provider, body);
}

fn on_u0(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let provider = msg.from.clone();
    let limited = msg.kind == MsgKind::Limited;
    let u0 = match (limited, msg.body.as_cat()) {
        (true, Some([u0, tag])) if tag.as_atom() == Some("Limited") => u0,
        (true, _) => return,
        (false, _) => &msg.body,
    };
    match st.pending.get(&provider).cloned() {
        Some(Pending::Join { n0, me, .. }) => {
            let key = cust(st).key;
            let Ok(t) = st.ops.open(&key, u0) else { return };
            let Some([p, echo, n1, tk, _tr, ks]) = t.as_cat() else { return };
            if p.as_id() != Some(provider.as_str()) || n0.succ().as_ref() != Some(echo) {
                return;
            }
            let (Ok(ticket), Some(ks)) = (Ticket::from_term(tk), SessionKey::from_term(ks)) else { return };
            cust_mut(st).ticket_me = Some(me);
            accept(st, &provider, &n0, n1, ticket, ks, now, out);
            match cust(st).config.reconnect_on_limited.clone() {
                Some(alt) if limited => {
                    let _ = start_switch(st, &alt, now, out);
                }
                _ => challenge_reply(st, &provider, n1, &ks, now, out),
            }
        }
        Some(Pending::Switch { n0, .. }) => {
            let (ticket, ks, _) = match ticket_parts(st) {
                Ok(x) => x,
                Err(_) => return,
            };
            // Same group: sealed under the current session key.
            if let Ok(t) = st.ops.open(&ks.key, u0) {
                let Some([p, n1, echo]) = t.as_cat() else { return };
                if p.as_id() != Some(provider.as_str()) || n0.succ().as_ref() != Some(echo) {
                    return;
                }
                let n1 = n1.clone();
                accept(st, &provider, &n0, &n1, ticket, ks, now, out);
                challenge_reply(st, &provider, &n1, &ks, now, out);
                return;
            }
            // Foreign group: a fresh ticket sealed under K_C.
            let key = cust(st).key;
            let Ok(t) = st.ops.open(&key, u0) else { return };
            let Some([tk, _tr, ks_new, n1, echo, p]) = t.as_cat() else { return };
            if p.as_id() != Some(provider.as_str()) || n0.succ().as_ref() != Some(echo) {
                return;
            }
            let (Ok(ticket), Some(ks_new)) = (Ticket::from_term(tk), SessionKey::from_term(ks_new)) else { return };
            let me = cust(st).provider_me.get(&provider).cloned();
            if let Some(me) = me {
                cust_mut(st).ticket_me = Some(me);
            }
            let n1 = n1.clone();
            accept(st, &provider, &n0, &n1, ticket, ks_new, now, out);
            challenge_reply(st, &provider, &n1, &ks_new, now, out);
        }
        _ => {}
    }
}

pub(super) fn on_timer(st: &mut PartyState, tag: &TimerTag, now: u64, out: &mut StepOutput) {
    let (provider, nonce) = match tag {
        TimerTag::Join { provider, nonce } | TimerTag::Switch { provider, nonce } => (provider.clone(), *nonce),
        _ => return,
    };
    let Some(p) = st.pending.get(&provider).cloned() else { return };
    if p.nonce().fingerprint() != nonce {
        return;
    }
    match p {
        Pending::Join { n0, me, attempts, .. } => {
            if attempts >= st.max_retries {
                st.pending.remove(&provider);
                return;
            }
            let Some(pk) = cust(st).me_keys.get(&me).copied() else { return };
            let fresh = st.fresh_nonce("N0");
            let body = st.ops.seal(&pk, Term::cat([Term::id(&st.id), n0.clone(), fresh.clone()]));
            st.pending.insert(
                provider.clone(),
                Pending::Join { n0: fresh.clone(), prev: Some(n0), me, attempts: attempts + 1 },
            );
            st.send(out, now, MsgKind::ResendJoin, &provider, body);
            st.arm(out, TimerTag::Join { provider, nonce: fresh.fingerprint() });
        }
        Pending::Switch { n0, attempts, .. } => {
            let Ok((ticket, ks, h)) = ticket_parts(st) else { return };
            let fresh = st.fresh_nonce("N0");
            if attempts == 0 {
                let sealed = st.ops.seal(&ks.key, Term::cat([Term::id(&st.id), n0.clone(), fresh.clone()]));
                let body = Term::cat([sealed, ticket.to_term(), Term::bytes(&h), Term::atom("SwitchReq")]);
                st.pending.insert(provider.clone(), Pending::Switch { n0: fresh.clone(), prev: Some(n0), attempts: 1 });
                st.send(out, now, MsgKind::ResendSwitch, &provider, body);
                st.arm(out, TimerTag::Switch { provider, nonce: fresh.fingerprint() });
                return;
            }
            // No answer at all: assume h(ME) was forged and fall back to a
            // join that carries the previous nonce and an alert.
            let c = cust(st);
            let me = c.provider_me.get(&provider).or(c.ticket_me.as_ref()).cloned();
            let Some(me) = me else { return };
            let Some(pk) = c.me_keys.get(&me).copied() else { return };
            let body = st.ops.seal(
                &pk,
                Term::cat([Term::id(&st.id), n0.clone(), fresh.clone(), ticket.to_term(), Term::atom("Alert")]),
            );
            let max = st.max_retries;
            st.pending.insert(provider.clone(), Pending::Join { n0: fresh.clone(), prev: Some(n0), me, attempts: max });
            st.send(out, now, MsgKind::AlertJoin, &provider, body);
            st.arm(out, TimerTag::Join { provider, nonce: fresh.fingerprint() });
        }
        Pending::Challenge { .. } => {}
    }
}

fn transmitted(st: &PartyState, partial: &[u8; DIGEST_LEN]) -> [u8; DIGEST_LEN] {
    let mut tx = *partial;
    if cust(st).config.tamper_partial_key {
        tx[0] ^= 0x01;
    }
    tx
}

pub(super) fn cc_start(st: &mut PartyState, peer: &str, now: u64, out: &mut StepOutput) -> Result<(), RoleError> {
    let (ticket, ks, _) = ticket_parts(st)?;
    if st.association.is_none() {
        return Err(RoleError::ScenarioRoutingFailure(st.id.clone()));
    }
    let n0 = st.fresh_nonce("N0");
    let partial = Key::random(st.rng(), KeyKind::Partial).bytes;
    let tx = transmitted(st, &partial);
    let sealed = st.ops.seal(&ks.key, Term::cat([Term::id(&st.id), n0.clone(), Term::bytes(&tx)]));
    cust_mut(st).cc.insert(
        peer.into(),
        CcSession { initiator: true, n0: Some(n0), n1: None, own_partial: partial, peer_partial: None },
    );
    st.send(out, now, MsgKind::CCInit, peer, Term::cat([sealed, ticket.to_term()]));
    Ok(())
}

/// A peer's sealed message: only the own provider can open it.
fn on_cc_message(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let Some(provider) = st.association.clone() else { return };
    let peer = msg.from.clone();
    match msg.kind {
        MsgKind::CCInit => {
            if cust(st).session.is_none() {
                return;
            }
            let partial = Key::random(st.rng(), KeyKind::Partial).bytes;
            cust_mut(st).cc.insert(
                peer,
                CcSession { initiator: false, n0: None, n1: None, own_partial: partial, peer_partial: None },
            );
        }
        _ => match cust(st).cc.get(&peer) {
            Some(s) if s.initiator => {}
            _ => return,
        },
    }
    st.send(out, now, msg.kind, &provider, msg.body.clone());
}

fn on_partial(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    if st.association.as_deref() != Some(msg.from.as_str()) {
        return;
    }
    let Ok((ticket, ks, _)) = ticket_parts(st) else { return };
    let Ok(t) = st.ops.open(&ks.key, &msg.body) else { return };
    let Some([kind, inner]) = t.as_cat() else { return };
    match (kind.as_atom(), inner.as_cat()) {
        (Some("CCInit"), Some([peer, n0, kp])) => {
            let (Some(peer), Some(kp)) = (peer.as_id().map(String::from), kp.as_bytes32()) else { return };
            let Some(s) = cust(st).cc.get(&peer).cloned() else { return };
            if s.initiator {
                return;
            }
            let Some(echo) = n0.succ() else { return };
            let n1 = st.fresh_nonce("N1");
            let tx = transmitted(st, &s.own_partial);
            let sealed =
                st.ops.seal(&ks.key, Term::cat([Term::id(&st.id), echo, n1.clone(), Term::bytes(&tx)]));
            cust_mut(st).cc.insert(
                peer.clone(),
                CcSession { n0: Some(n0.clone()), n1: Some(n1), peer_partial: Some(kp), ..s },
            );
            st.send(out, now, MsgKind::CCReply, &peer, Term::cat([sealed, ticket.to_term()]));
        }
        (Some("CCReply"), Some([peer, echo, n1, kp])) => {
            let (Some(peer), Some(kp)) = (peer.as_id().map(String::from), kp.as_bytes32()) else { return };
            let Some(s) = cust(st).cc.get(&peer).cloned() else { return };
            let Some(n0) = s.n0.clone() else { return };
            if !s.initiator || n0.succ().as_ref() != Some(echo) {
                return;
            }
            let kij = derive_cc_key(&s.own_partial, n1, &kp, &n0, &mut st.ops);
            let binding =
                Binding { n0: Some(n0), n1: Some(n1.clone()), ticket: None, session: Some(hash(&kij.bytes)) };
            st.emit(out, now, EventKind::Conf, &peer, binding.to_term());
            let Some(next) = n1.succ() else { return };
            let body = st.ops.seal(&kij, Term::cat([Term::id(&st.id), next]));
            let c = cust_mut(st);
            c.cc.insert(peer.clone(), CcSession { n1: Some(n1.clone()), peer_partial: Some(kp), ..s });
            c.cc_keys.insert(peer.clone(), kij);
            st.send(out, now, MsgKind::ChallengeResp, &peer, body);
        }
        _ => {}
    }
}

/// Responder side: the initiator's first message under `K_ij`.
fn on_cc_confirm(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let peer = msg.from.clone();
    let Some(s) = cust(st).cc.get(&peer).cloned() else { return };
    let (false, Some(n0), Some(n1), Some(kp)) = (s.initiator, s.n0.clone(), s.n1.clone(), s.peer_partial) else {
        return;
    };
    let kij = derive_cc_key(&kp, &n1, &s.own_partial, &n0, &mut st.ops);
    let ok = match st.ops.open(&kij, &msg.body) {
        Ok(t) => matches!(t.as_cat(), Some([c, r]) if c.as_id() == Some(peer.as_str()) && n1.succ().as_ref() == Some(r)),
        Err(_) => false,
    };
    if !ok {
        st.alert(out, now, &peer, "CC", "key confirmation failed");
        return;
    }
    let binding = Binding { n0: Some(n0), n1: Some(n1), ticket: None, session: Some(hash(&kij.bytes)) };
    st.emit(out, now, EventKind::Auth, &peer, binding.to_term());
    cust_mut(st).cc_keys.insert(peer, kij);
}
