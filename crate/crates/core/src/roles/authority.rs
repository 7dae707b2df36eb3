//! Main authentication entity: profile database, ticket issuing, duplicate
//! request detection and re-authentication grants for foreign tickets.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use super::party::{PartyState, RoleState, TimerTag};
use super::{Binding, EventKind, MsgKind, ProtocolMessage, StepOutput, Timer};
use crate::algebra::{hash, Digest, Key, KeyPair, Term};
use crate::keychain::{derive_session_key_from_digest, reauth_session, SessionKey};
use crate::ticket::{issue_ticket, verify_ticket, Ticket, TicketContent, TicketExtras};

/// Profile database entry. `key_digest` is `H(K_C)`, computed once at
/// registration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CustomerRecord {
    pub key: Key,
    pub key_digest: Digest,
    pub profile: Term,
    pub password_digest: Option<Digest>,
}

impl CustomerRecord {
    pub fn new(key: Key, profile: Term) -> Self {
        CustomerRecord { key_digest: hash(&key.bytes), key, profile, password_digest: None }
    }

    pub fn with_password(mut self, password: &[u8]) -> Self {
        self.password_digest = Some(hash(password));
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum GrantJob {
    Join { provider: String, customer: String, n0: Term, request: Digest },
    Switch { provider: String, customer: String, n0: Term, request: Digest },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeState {
    pub keypair: KeyPair,
    pub profiles: BTreeMap<String, CustomerRecord>,
    jobs: BTreeMap<u64, GrantJob>,
    next_job: u64,
}

impl MeState {
    pub fn new(keypair: KeyPair, profiles: BTreeMap<String, CustomerRecord>) -> Self {
        MeState { keypair, profiles, jobs: BTreeMap::new(), next_job: 0 }
    }
}

fn me(st: &PartyState) -> &MeState {
    match &st.state {
        RoleState::Me(m) => m,
        _ => unreachable!("authority handler on a non-ME party"),
    }
}

fn me_mut(st: &mut PartyState) -> &mut MeState {
    match &mut st.state {
        RoleState::Me(m) => m,
        _ => unreachable!("authority handler on a non-ME party"),
    }
}

pub(super) fn handle(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    match msg.kind {
        MsgKind::JoinFwd => on_join(st, msg, now, out),
        MsgKind::SwitchFwd => on_switch(st, msg, now, out),
        MsgKind::CCInit | MsgKind::CCReply => on_cc(st, msg, now, out),
        _ => {}
    }
}

/// Grants are issued by a zero-delay timer so that identical requests
/// arriving at the same instant are all flagged.
fn queue(st: &mut PartyState, job: GrantJob, out: &mut StepOutput) {
    let m = me_mut(st);
    let id = m.next_job;
    m.next_job += 1;
    m.jobs.insert(id, job);
    out.timers.push(Timer { delay: 0, tag: TimerTag::Grant { job: id } });
}

pub(super) fn on_timer(st: &mut PartyState, tag: &TimerTag, now: u64, out: &mut StepOutput) {
    let TimerTag::Grant { job } = tag else { return };
    let Some(job) = me_mut(st).jobs.remove(job) else { return };
    match job {
        GrantJob::Join { provider, customer, n0, request } => {
            let dup = st.seen_requests.get(&(customer.clone(), request)).copied().unwrap_or(0) > 1;
            if let Some(o) = me_grant(st, &provider, &customer, &n0, dup, now) {
                merge(out, o);
            }
        }
        GrantJob::Switch { provider, customer, n0, request } => {
            let dup = st.seen_requests.get(&(customer.clone(), request)).copied().unwrap_or(0) > 1;
            regrant(st, &provider, &customer, &n0, dup, now, out);
        }
    }
}

fn merge(out: &mut StepOutput, o: StepOutput) {
    out.messages.extend(o.messages);
    out.events.extend(o.events);
    out.timers.extend(o.timers);
}

fn on_join(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let private = me(st).keypair.private;
    let Ok(inner) = st.ops.open_with(&st.registry, &private, &msg.body) else { return };
    let Some(parts) = inner.as_cat() else { return };
    let (customer, first, reply_nonce, alert) = match parts {
        [c, n0] => (c, n0, n0, false),
        [c, n0, n0b] => (c, n0, n0b, false),
        [c, n0, n0b, _tk, flag] if flag.as_atom() == Some("Alert") => (c, n0, n0b, true),
        _ => return,
    };
    let Some(customer) = customer.as_id().map(String::from) else { return };
    let Some(record) = me(st).profiles.get(&customer).cloned() else { return };
    if let Term::Bytes(pw) = first {
        if record.password_digest.map(|d| d.0.as_slice() == pw.as_slice()) != Some(true) {
            return;
        }
    }
    if alert {
        st.alert(out, now, &customer, "RA2-M1", "switch request unanswered; h(ME) may be forged");
    }
    if st.note_request(&customer, &inner) {
        st.alert(out, now, &customer, "M3", "duplicate join request");
    }
    let job = GrantJob::Join {
        provider: msg.from.clone(),
        customer,
        n0: reply_nonce.clone(),
        request: inner.fingerprint(),
    };
    queue(st, job, out);
}

fn session_digest(ks: &SessionKey) -> Digest {
    hash(&ks.key.bytes)
}

/// Builds `u0 ‖ E_G(V_i ‖ N1 ‖ T_k) [‖ Alert]` for the current interval of
/// the ME's own chain. Returns `None` for unknown customers or an expired
/// chain.
pub fn me_grant(
    st: &mut PartyState,
    provider: &str,
    customer: &str,
    n0: &Term,
    alert: bool,
    now: u64,
) -> Option<StepOutput> {
    let record = me(st).profiles.get(customer)?.clone();
    let local = st.local_time(now);
    let g = st.groups.get(&st.id)?;
    let chain = g.chain.as_ref()?;
    let i = g.local_interval(local)?;
    if i >= u64::from(chain.length()) {
        return None;
    }
    let idx = i as usize;
    let time_key = *chain.key(idx)?;
    let session = derive_session_key_from_digest(&time_key, &record.key_digest, i, chain.length(), &mut st.ops);
    let content = TicketContent {
        customer,
        session,
        index: idx,
        index_value: chain.index_vector()[idx],
        profile: record.profile.clone(),
        generator_digest: chain.generator_digest(idx, &mut st.ops)?,
        customer_key_digest: record.key_digest,
    };
    let extras = TicketExtras { issue_time: Some(local), tree: g.tree.as_ref() };
    let ticket = issue_ticket(g.mode, &content, &time_key, &g.group_key, extras, &mut st.ops).ok()?;
    let group_key = g.group_key;
    let v = content.index_value;
    let n1 = st.fresh_nonce("N1");
    let u0 = st.ops.seal(
        &record.key,
        Term::cat([
            Term::id(provider),
            n0.succ()?,
            n1.clone(),
            ticket.to_term(),
            Term::Num(session.valid_intervals),
            session.to_term(),
        ]),
    );
    let for_p = st.ops.seal(&group_key, Term::cat([Term::bytes(&v), n1.clone(), ticket.to_term()]));
    let mut body = alloc::vec![u0, for_p];
    if alert {
        body.push(Term::atom("Alert"));
    }
    let mut out = StepOutput::default();
    let binding = Binding {
        n0: Some(n0.clone()),
        n1: Some(n1),
        ticket: Some(ticket.fingerprint()),
        session: Some(session_digest(&session)),
    };
    st.emit(&mut out, now, EventKind::Conf, provider, binding.to_term());
    st.send(&mut out, now, MsgKind::TicketGrant, provider, Term::Cat(body));
    Some(out)
}

/// Finds a group whose chain this ME holds and that accepts the ticket.
fn verify_foreign(st: &mut PartyState, ticket: &Ticket, h: Option<&Digest>, now: u64) -> Option<crate::ticket::VerifiedTicket> {
    let local = st.local_time(now);
    let leaders: alloc::vec::Vec<String> = st
        .groups
        .values()
        .filter(|g| g.chain.is_some() && h.map_or(true, |h| g.leader_digest == *h))
        .map(|g| g.leader.clone())
        .collect();
    for leader in leaders {
        let g = st.groups.get_mut(&leader)?;
        let mut est = g.estimator;
        let keys = g.verifier()?;
        if let Ok(v) = verify_ticket(ticket, keys, &mut est, local, &mut st.ops) {
            g.estimator = est;
            return Some(v);
        }
    }
    None
}

fn on_switch(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let Some(parts) = msg.body.as_cat() else { return };
    let (sealed, tk, h) = match parts {
        [s, tk, h] | [s, tk, h, _] => (s, tk, h),
        _ => return,
    };
    let Some(h) = h.as_bytes32().map(Digest) else { return };
    let Ok(ticket) = Ticket::from_term(tk) else { return };
    let Some(v) = verify_foreign(st, &ticket, Some(&h), now) else { return };
    let Some(record) = me(st).profiles.get(&v.customer).cloned() else { return };
    if record.key_digest.0 != v.customer_key_digest {
        return;
    }
    let Ok(inner) = st.ops.open(&v.session.key, sealed) else { return };
    let n0 = match inner.as_cat() {
        Some([c, n0]) | Some([c, _, n0]) if c.as_id() == Some(v.customer.as_str()) => n0.clone(),
        _ => return,
    };
    if st.note_request(&v.customer, &inner) {
        st.alert(out, now, &v.customer, "M2", "duplicate switch request");
    }
    let job = GrantJob::Switch {
        provider: msg.from.clone(),
        customer: v.customer.clone(),
        n0,
        request: inner.fingerprint(),
    };
    queue(st, job, out);
}

fn regrant(st: &mut PartyState, provider: &str, customer: &str, n0: &Term, alert: bool, now: u64, out: &mut StepOutput) {
    let Some(record) = me(st).profiles.get(customer).cloned() else { return };
    let local = st.local_time(now);
    let Some(g) = st.groups.get(&st.id) else { return };
    let Some(chain) = g.chain.as_ref() else { return };
    let Some(i) = g.local_interval(local) else { return };
    if i >= u64::from(chain.length()) {
        return;
    }
    let idx = i as usize;
    let time_key = chain.keys()[idx];
    let v = chain.index_vector()[idx];
    let session = reauth_session(&record.key, &v, i, chain.length(), &mut st.ops);
    let Some(generator_digest) = chain.generator_digest(idx, &mut st.ops) else { return };
    let content = TicketContent {
        customer,
        session,
        index: idx,
        index_value: v,
        profile: record.profile.clone(),
        generator_digest,
        customer_key_digest: record.key_digest,
    };
    let extras = TicketExtras { issue_time: Some(local), tree: g.tree.as_ref() };
    let Ok(ticket) = issue_ticket(g.mode, &content, &time_key, &g.group_key, extras, &mut st.ops) else { return };
    let group_key = g.group_key;
    let n1 = st.fresh_nonce("N1");
    let Some(n0_next) = n0.succ() else { return };
    let u0 = st.ops.seal(
        &record.key,
        Term::cat([
            ticket.to_term(),
            Term::Num(session.valid_intervals),
            session.to_term(),
            n1.clone(),
            n0_next,
            Term::id(provider),
        ]),
    );
    let for_p = st.ops.seal(&group_key, Term::cat([Term::bytes(&v), n1.clone(), ticket.to_term()]));
    let mut body = alloc::vec![u0, for_p];
    if alert {
        body.push(Term::atom("Alert"));
    }
    let binding = Binding {
        n0: Some(n0.clone()),
        n1: Some(n1),
        ticket: Some(ticket.fingerprint()),
        session: Some(session_digest(&session)),
    };
    st.emit(out, now, EventKind::Conf, provider, binding.to_term());
    st.send(out, now, MsgKind::ReGrant, provider, Term::Cat(body));
}

/// Cross-group customer-to-customer step: open the peer's message with its
/// ticket and hand the contents back to the asking provider under `K_G`.
fn on_cc(st: &mut PartyState, msg: &ProtocolMessage, now: u64, out: &mut StepOutput) {
    let Some([original, requester]) = msg.body.as_cat() else { return };
    let Some(requester) = requester.as_id().map(String::from) else { return };
    let Some([sealed, tk]) = original.as_cat() else { return };
    let Ok(ticket) = Ticket::from_term(tk) else { return };
    let Some(v) = verify_foreign(st, &ticket, None, now) else { return };
    let Ok(inner) = st.ops.open(&v.session.key, sealed) else { return };
    if inner.as_cat().and_then(|p| p.first()).and_then(Term::as_id) != Some(v.customer.as_str()) {
        return;
    }
    let Some(own) = st.groups.get(&st.id) else { return };
    let gk = own.group_key;
    let body = st.ops.seal(&gk, Term::cat([Term::id(&requester), Term::atom(msg.kind.name()), inner]));
    st.send(out, now, MsgKind::PartialKeyResp, &msg.from.to_string(), body);
}
