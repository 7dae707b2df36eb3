//! Service provider: relays joins, verifies tickets, routes switch requests
//! by `h(ME)`, runs the final challenge and relays partial keys.

use alloc::collections::BTreeMap;
use alloc::string::String;

use super::party::{Family, PartyState, Pending, ProviderConfig, RoleState, TimerTag};
use super::{Binding, EventKind, MsgKind, ProtocolMessage, StepOutput, BROADCAST};
use crate::algebra::{hash, Digest, Key, Term};
use crate::keychain::SessionKey;
use crate::ticket::{open_retrieval_segment, verify_ticket, Ticket, VerifiedTicket};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProviderState {
    /// Own group leader.
    pub me: String,
    /// The leader's public seal key, broadcast to customers.
    pub me_public: Key,
    pub config: ProviderConfig,
    /// Customers currently served, with their session keys.
    pub sessions: BTreeMap<String, SessionKey>,
}

impl ProviderState {
    pub fn new(me: &str, me_public: Key, config: ProviderConfig) -> Self {
        ProviderState { me: me.into(), me_public, config, sessions: BTreeMap::new() }
    }
}

fn prov(st: &PartyState) -> &ProviderState {
    match &st.state {
        RoleState::P(p) => p,
        _ => unreachable!("provider handler on a non-provider party"),
    }
}

fn prov_mut(st: &mut PartyState) -> &mut ProviderState {
    match &mut st.state {
        RoleState::P(p) => p,
        _ => unreachable!("provider handler on a non-provider party"),
    }
}

pub(super) fn broadcast(st: &mut PartyState, now: u64, out: &mut StepOutput) {
    let p = prov(st);
    let body = Term::cat([Term::id(&p.me), Term::bytes(&p.me_public.bytes)]);
    st.send(out, now, MsgKind::BroadcastPk, BROADCAST, body);
}

pub(super) fn handle(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let from_me = msg.from == prov(st).me;
    match msg.kind {
        MsgKind::JoinReq | MsgKind::ResendJoin | MsgKind::AlertJoin => {
            let me = prov(st).me.clone();
            st.send(out, now, MsgKind::JoinFwd, &me, msg.body.clone());
        }
        MsgKind::TicketGrant if from_me => on_grant(st, msg, Family::Ia, now, out),
        MsgKind::ReGrant if from_me => on_grant(st, msg, Family::Ra2, now, out),
        MsgKind::SwitchReq | MsgKind::ResendSwitch => on_switch(st, msg, now, out),
        MsgKind::ChallengeResp => on_challenge(st, msg, now, out),
        MsgKind::CCInit | MsgKind::CCReply if !from_me => on_cc(st, msg, now, out),
        MsgKind::PartialKeyResp if from_me => on_cc_answer(st, msg, now, out),
        _ => {}
    }
}

fn own_group(st: &PartyState) -> String {
    prov(st).me.clone()
}

fn verify_own(st: &mut PartyState, ticket: &Ticket, now: u64) -> Option<VerifiedTicket> {
    let local = st.local_time(now);
    let g = st.groups.get_mut(&prov(st).me.clone())?;
    let mut est = g.estimator;
    let v = verify_ticket(ticket, g.verifier()?, &mut est, local, &mut st.ops).ok()?;
    g.estimator = est;
    Some(v)
}

fn on_grant(st: &mut PartyState, msg: &ProtocolMessage, family: Family, now: u64, out: &mut StepOutput) {
    let Some(parts) = msg.body.as_cat() else { return };
    let (u0, for_p, flagged) = match parts {
        [u0, p] => (u0, p, false),
        [u0, p, a] if a.as_atom() == Some("Alert") => (u0, p, true),
        _ => return,
    };
    let Some(gk) = st.groups.get(&own_group(st)).map(|g| g.group_key) else { return };
    let Ok(inner) = st.ops.open(&gk, for_p) else { return };
    let Some([v, n1, tk]) = inner.as_cat() else { return };
    let Ok(ticket) = Ticket::from_term(tk) else { return };
    let Some(verified) = verify_own(st, &ticket, now) else { return };
    if v.as_bytes() != Some(verified.index_value.as_slice()) {
        return;
    }
    let customer = verified.customer.clone();
    if flagged {
        st.alert(out, now, &customer, "M4", "ME flagged a duplicate request");
    }
    if st.restricted && st.pending.contains_key(&customer) {
        return;
    }
    let binding = Binding {
        n0: None,
        n1: Some(n1.clone()),
        ticket: Some(ticket.fingerprint()),
        session: Some(hash(&verified.session.key.bytes)),
    };
    st.emit(out, now, EventKind::Conf, &msg.from, binding.to_term());
    let limited = prov(st).config.limited;
    st.pending.insert(
        customer.clone(),
        Pending::Challenge {
            n1: n1.clone(),
            n0: None,
            session: verified.session,
            ticket: ticket.fingerprint(),
            family,
            limited,
        },
    );
    if limited {
        st.send(out, now, MsgKind::Limited, &customer, Term::cat([u0.clone(), Term::atom("Limited")]));
    } else {
        st.send(out, now, MsgKind::U0Deliver, &customer, u0.clone());
    }
    st.arm(out, TimerTag::Challenge { customer, nonce: n1.fingerprint() });
}

fn on_switch(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    if st.note_request(&msg.from, &msg.body) {
        st.alert(out, now, &msg.from, "M1", "identical switch request received again");
        return;
    }
    let Some(parts) = msg.body.as_cat() else { return };
    let (sealed, tk, h) = match parts {
        [s, tk, h] => (s, tk, h),
        [s, tk, h, tag] if tag.as_atom() == Some("SwitchReq") => (s, tk, h),
        _ => return,
    };
    let (Some(h), Ok(ticket)) = (h.as_bytes32().map(Digest), Ticket::from_term(tk)) else { return };
    let own = own_group(st);
    let route = st.groups.values().find(|g| g.leader_digest == h).map(|g| (g.leader.clone(), g.group_key));
    match route {
        Some((leader, _)) if leader == own => local_switch(st, msg, sealed, &ticket, now, out),
        Some((_, gk)) => {
            // Outer member: only the retrieval half is readable here.
            let Ok(seg) = open_retrieval_segment(&ticket, &gk, &mut st.ops) else { return };
            if seg.customer != msg.from {
                return;
            }
            st.send(out, now, MsgKind::SwitchFwd, &own, msg.body.clone());
        }
        None => {}
    }
}

fn local_switch(
    st: &mut PartyState,
    msg: &ProtocolMessage,
    sealed: &Term,
    ticket: &Ticket,
    now: u64,
    out: &mut StepOutput,
) {
    let Some(v) = verify_own(st, ticket, now) else { return };
    let local = st.local_time(now);
    let current = st.groups.get(&own_group(st)).and_then(|g| g.local_interval(local)).unwrap_or(u64::MAX);
    if current >= v.session.issued_interval + v.session.valid_intervals {
        return;
    }
    let Ok(inner) = st.ops.open(&v.session.key, sealed) else { return };
    let n0 = match inner.as_cat() {
        Some([c, n0]) | Some([c, _, n0]) if c.as_id() == Some(v.customer.as_str()) => n0.clone(),
        _ => return,
    };
    if st.restricted && st.pending.contains_key(&v.customer) {
        return;
    }
    let Some(n0_next) = n0.succ() else { return };
    let n1 = st.fresh_nonce("N1");
    let body = st.ops.seal(&v.session.key, Term::cat([Term::id(&st.id), n1.clone(), n0_next]));
    st.pending.insert(
        v.customer.clone(),
        Pending::Challenge {
            n1: n1.clone(),
            n0: Some(n0),
            session: v.session,
            ticket: ticket.fingerprint(),
            family: Family::Ra1,
            limited: false,
        },
    );
    st.send(out, now, MsgKind::U0Deliver, &msg.from, body);
    st.arm(out, TimerTag::Challenge { customer: v.customer, nonce: n1.fingerprint() });
}

fn on_challenge(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let customer = msg.from.clone();
    let Some(Pending::Challenge { .. }) = st.pending.get(&customer) else { return };
    let Some(Pending::Challenge { n1, n0, session, ticket, family, .. }) = st.pending.remove(&customer) else {
        return;
    };
    let ok = match st.ops.open(&session.key, &msg.body) {
        Ok(t) => match t.as_cat() {
            Some([c, r]) => c.as_id() == Some(customer.as_str()) && n1.succ().as_ref() == Some(r),
            _ => false,
        },
        Err(_) => false,
    };
    if !ok {
        halt(st, &customer, family, ticket, "challenge reply does not match", now, out);
        return;
    }
    let binding = Binding { n0, n1: Some(n1), ticket: Some(ticket), session: Some(hash(&session.key.bytes)) };
    st.emit(out, now, EventKind::Auth, &customer, binding.to_term());
    st.emit(out, now, EventKind::ServiceStart, &customer, Term::atom(family.final_step()));
    prov_mut(st).sessions.insert(customer, session);
}

/// Invalid-ticket announcement: halt service, record the alert, tell the ME.
fn halt(st: &mut PartyState, customer: &str, family: Family, ticket: Digest, reason: &str, now: u64, out: &mut StepOutput) {
    let step = family.final_step();
    st.alert(out, now, customer, step, reason);
    st.emit(out, now, EventKind::ServiceHalt, customer, Term::atom(step));
    let me = prov(st).me.clone();
    let body = Term::cat([Term::atom(step), Term::id(customer), Term::digest(&ticket)]);
    st.send(out, now, MsgKind::Alert, &me, body);
}

pub(super) fn on_timer(st: &mut PartyState, tag: &TimerTag, now: u64, out: &mut StepOutput) {
    let TimerTag::Challenge { customer, nonce } = tag else { return };
    match st.pending.get(customer) {
        Some(Pending::Challenge { n1, .. }) if n1.fingerprint() == *nonce => {}
        _ => return,
    }
    let Some(Pending::Challenge { family, ticket, limited, .. }) = st.pending.remove(customer) else { return };
    if !limited {
        halt(st, customer, family, ticket, "no challenge reply before timeout", now, out);
    }
}

/// A served customer asks for the peer's message to be opened.
fn on_cc(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let requester = msg.from.clone();
    if !prov(st).sessions.contains_key(&requester) {
        return;
    }
    let Some([sealed, tk]) = msg.body.as_cat() else { return };
    let Ok(ticket) = Ticket::from_term(tk) else { return };
    let Some(v) = verify_own(st, &ticket, now) else {
        let me = prov(st).me.clone();
        st.send(out, now, msg.kind, &me, Term::cat([msg.body.clone(), Term::id(&requester)]));
        return;
    };
    let Ok(inner) = st.ops.open(&v.session.key, sealed) else { return };
    if inner.as_cat().and_then(|p| p.first()).and_then(Term::as_id) != Some(v.customer.as_str()) {
        return;
    }
    deliver_partial(st, &requester, msg.kind.name(), inner, now, out);
}

fn on_cc_answer(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let Some(gk) = st.groups.get(&own_group(st)).map(|g| g.group_key) else { return };
    let Ok(t) = st.ops.open(&gk, &msg.body) else { return };
    let Some([requester, kind, inner]) = t.as_cat() else { return };
    let (Some(requester), Some(kind)) = (requester.as_id(), kind.as_atom()) else { return };
    deliver_partial(st, &String::from(requester), &String::from(kind), inner.clone(), now, out);
}

fn deliver_partial(st: &mut PartyState, requester: &str, kind: &str, inner: Term, now: u64, out: &mut StepOutput) {
    let Some(ks) = prov(st).sessions.get(requester).copied() else { return };
    let body = st.ops.seal(&ks.key, Term::cat([Term::atom(kind), inner]));
    st.send(out, now, MsgKind::PartialKeyResp, requester, body);
}
