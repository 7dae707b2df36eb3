//! Authentication properties over recorded traces.
//!
//! Two layers. [`check_precedes`] is the conf-before-auth property: every
//! matching `Auth` must be preceded by a `Conf` from the authenticated party
//! that binds the same data, with both parties' latest received message
//! coming directly from each other. [`check_claim`] evaluates aliveness,
//! weak agreement, non-injective agreement and non-injective
//! synchronization over protocol run windows.
//!
//! Everything here reads only the trace.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use crate::algebra::Term;
use crate::roles::{Binding, EventKind, Family, MsgKind, Role, TraceEvent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ClaimKind {
    Precedes,
    Aliveness,
    WeakAgreement,
    NonInjAgreement,
    NonInjSynchronization,
}

impl ClaimKind {
    pub const SUITE: [ClaimKind; 4] = [
        ClaimKind::Aliveness,
        ClaimKind::WeakAgreement,
        ClaimKind::NonInjAgreement,
        ClaimKind::NonInjSynchronization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClaimKind::Precedes => "precedes",
            ClaimKind::Aliveness => "aliveness",
            ClaimKind::WeakAgreement => "weak-agreement",
            ClaimKind::NonInjAgreement => "ni-agreement",
            ClaimKind::NonInjSynchronization => "ni-synch",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Claim {
    pub kind: ClaimKind,
    /// The party making the claim.
    pub initiator: String,
    /// The party the claim is about.
    pub responder: String,
    pub data: Option<Term>,
}

impl Claim {
    pub fn new(kind: ClaimKind, initiator: &str, responder: &str) -> Self {
        Claim { kind, initiator: initiator.into(), responder: responder.into(), data: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Verdict {
    pub claim: Claim,
    pub holds: bool,
    /// Offending event index when the claim fails.
    pub witness: Option<usize>,
}

impl Verdict {
    fn of(claim: Claim, witness: Option<usize>) -> Self {
        Verdict { claim, holds: witness.is_none(), witness }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AttackVerdict {
    AttackFailed,
    AttackSucceeded,
    NoAttack,
}

impl AttackVerdict {
    pub fn name(self) -> &'static str {
        match self {
            AttackVerdict::AttackFailed => "AttackFailed",
            AttackVerdict::AttackSucceeded => "AttackSucceeded",
            AttackVerdict::NoAttack => "NoAttack",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [AttackVerdict::AttackFailed, AttackVerdict::AttackSucceeded, AttackVerdict::NoAttack]
            .into_iter()
            .find(|v| v.name() == s)
    }
}

/// Event selector. `None` sets match anything.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventPattern {
    pub kind: EventKind,
    pub actors: Option<BTreeSet<String>>,
    pub peers: Option<BTreeSet<String>>,
}

impl EventPattern {
    pub fn any(kind: EventKind) -> Self {
        EventPattern { kind, actors: None, peers: None }
    }

    fn matches(&self, e: &TraceEvent) -> bool {
        e.kind == self.kind
            && self.actors.as_ref().is_none_or(|a| a.contains(&e.actor))
            && self.peers.as_ref().is_none_or(|p| p.contains(&e.peer))
    }
}

/// Role assignment read off the message kinds each actor sent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoleMap {
    pub authorities: BTreeSet<String>,
    pub providers: BTreeSet<String>,
    pub customers: BTreeSet<String>,
}

pub fn infer_roles(trace: &[TraceEvent]) -> RoleMap {
    let mut r = RoleMap::default();
    for e in trace.iter().filter(|e| e.kind == EventKind::Send) {
        let set = match e.message {
            Some(MsgKind::TicketGrant | MsgKind::ReGrant) => &mut r.authorities,
            Some(MsgKind::BroadcastPk | MsgKind::JoinFwd | MsgKind::SwitchFwd | MsgKind::U0Deliver | MsgKind::Limited) => {
                &mut r.providers
            }
            Some(MsgKind::JoinReq | MsgKind::SwitchReq | MsgKind::ResendJoin | MsgKind::ResendSwitch | MsgKind::AlertJoin) => {
                &mut r.customers
            }
            _ => continue,
        };
        set.insert(e.actor.clone());
    }
    r
}

/// Peer of the actor's latest `Receive` strictly before `i`: who the
/// actor was last physically talking to.
pub fn channel_partner(trace: &[TraceEvent], i: usize) -> Option<&str> {
    let actor = &trace[i].actor;
    trace[..i]
        .iter()
        .rev()
        .find(|e| e.kind == EventKind::Receive && e.actor == *actor)
        .map(|e| e.peer.as_str())
}

fn binding(e: &TraceEvent) -> Option<Binding> {
    Binding::from_term(&e.payload)
}

/// Every `Auth` matching `auth` needs an earlier `Conf` matching `conf`,
/// issued by the authenticated party about the authenticator, binding
/// agreeing data, and both events must sit on a direct channel between the
/// two.
pub fn check_precedes(trace: &[TraceEvent], conf: &EventPattern, auth: &EventPattern) -> Verdict {
    let claim = Claim::new(ClaimKind::Precedes, "*", "*");
    for (i, a) in trace.iter().enumerate().filter(|(_, e)| auth.matches(e)) {
        let Some(ba) = binding(a) else { return Verdict::of(claim, Some(i)) };
        let direct_a = channel_partner(trace, i) == Some(a.peer.as_str());
        let found = direct_a
            && trace[..i].iter().enumerate().any(|(j, c)| {
                conf.matches(c)
                    && c.actor == a.peer
                    && c.peer == a.actor
                    && binding(c).is_some_and(|bc| bc.agrees_with(&ba))
                    && channel_partner(trace, j) == Some(c.peer.as_str())
            });
        if !found {
            return Verdict::of(claim, Some(i));
        }
    }
    Verdict::of(claim, None)
}

/// The provider-side instance: customers' `Conf` before providers' `Auth`.
pub fn check_customer_precedes(trace: &[TraceEvent]) -> Verdict {
    let roles = infer_roles(trace);
    let conf = EventPattern { kind: EventKind::Conf, actors: Some(roles.customers), peers: None };
    let auth = EventPattern { kind: EventKind::Auth, actors: Some(roles.providers), peers: None };
    check_precedes(trace, &conf, &auth)
}

pub fn verdict(trace: &[TraceEvent], intruder_present: bool) -> AttackVerdict {
    if !intruder_present {
        AttackVerdict::NoAttack
    } else if check_customer_precedes(trace).holds {
        AttackVerdict::AttackFailed
    } else {
        AttackVerdict::AttackSucceeded
    }
}

/// One protocol run: from the customer's request to the provider's
/// service decision about that customer.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunWindow {
    pub family: Family,
    pub customer: String,
    pub provider: String,
    /// Absent for re-authentication inside the issuing group.
    pub authority: Option<String>,
    pub start: usize,
    pub end: usize,
    /// Ended in `ServiceStart`.
    pub completed: bool,
}

impl RunWindow {
    pub fn events<'a>(&self, trace: &'a [TraceEvent]) -> &'a [TraceEvent] {
        &trace[self.start..=self.end]
    }

    fn party(&self, role: Role) -> Option<&str> {
        match role {
            Role::C => Some(&self.customer),
            Role::P => Some(&self.provider),
            Role::Me => self.authority.as_deref(),
        }
    }

    fn role_of(&self, id: &str) -> Option<Role> {
        [Role::C, Role::P, Role::Me].into_iter().find(|r| self.party(*r) == Some(id))
    }
}

/// `Some(is_switch)` for the sends that open a run.
fn run_start(e: &TraceEvent) -> Option<bool> {
    match (e.kind, e.message) {
        (EventKind::Send, Some(MsgKind::JoinReq | MsgKind::AlertJoin)) => Some(false),
        (EventKind::Send, Some(MsgKind::SwitchReq)) => Some(true),
        _ => None,
    }
}

pub fn run_windows(trace: &[TraceEvent]) -> Vec<RunWindow> {
    let mut out: Vec<RunWindow> = Vec::new();
    for (i, e) in trace.iter().enumerate() {
        let Some(switch) = run_start(e) else { continue };
        let (c, p) = (e.actor.clone(), e.peer.clone());
        if out.iter().any(|w| w.customer == c && w.provider == p && w.start <= i && i <= w.end) {
            continue;
        }
        // A fresh request from the same customer abandons this run.
        let next = trace[i + 1..].iter().position(|x| x.actor == c && run_start(x).is_some()).map(|k| i + 1 + k);
        let close = trace[i..].iter().position(|x| {
            matches!(x.kind, EventKind::ServiceStart | EventKind::ServiceHalt) && x.actor == p && x.peer == c
        });
        let (end, completed) = match (close.map(|k| i + k), next) {
            (Some(k), n) if n.is_none_or(|n| k < n) => (k, trace[k].kind == EventKind::ServiceStart),
            (_, Some(n)) => (n - 1, false),
            (_, None) => (trace.len() - 1, false),
        };
        let fwd = if switch { MsgKind::SwitchFwd } else { MsgKind::JoinFwd };
        let authority = trace[i..=end]
            .iter()
            .find(|x| x.kind == EventKind::Send && x.actor == p && x.message == Some(fwd))
            .map(|x| x.peer.clone());
        let family = match (switch, authority.is_some()) {
            (false, _) => Family::Ia,
            (true, false) => Family::Ra1,
            (true, true) => Family::Ra2,
        };
        out.push(RunWindow { family, customer: c, provider: p, authority, start: i, end, completed });
    }
    out
}

/// Receive sequence the protocol intends between two roles.
pub fn intended_sequence(family: Family, a: Role, b: Role) -> Vec<(Role, MsgKind)> {
    let pair = if a <= b { (a, b) } else { (b, a) };
    match (family, pair) {
        (Family::Ia, (Role::P, Role::C)) => {
            alloc::vec![(Role::P, MsgKind::JoinReq), (Role::C, MsgKind::U0Deliver), (Role::P, MsgKind::ChallengeResp)]
        }
        (Family::Ra1 | Family::Ra2, (Role::P, Role::C)) => {
            alloc::vec![(Role::P, MsgKind::SwitchReq), (Role::C, MsgKind::U0Deliver), (Role::P, MsgKind::ChallengeResp)]
        }
        (Family::Ia, (Role::Me, Role::P)) => alloc::vec![(Role::Me, MsgKind::JoinFwd), (Role::P, MsgKind::TicketGrant)],
        (Family::Ra2, (Role::Me, Role::P)) => alloc::vec![(Role::Me, MsgKind::SwitchFwd), (Role::P, MsgKind::ReGrant)],
        _ => Vec::new(),
    }
}

fn partners(role: Role) -> &'static [Role] {
    match role {
        Role::C => &[Role::P],
        Role::P => &[Role::C, Role::Me],
        Role::Me => &[Role::P],
    }
}

/// Evaluates one claim for one run. `None` when the pair does not take
/// part in the run (vacuous).
fn eval(trace: &[TraceEvent], w: &RunWindow, kind: ClaimKind, init: &str, resp: &str) -> Option<bool> {
    let (ri, rr) = (w.role_of(init)?, w.role_of(resp)?);
    if !partners(ri).contains(&rr) {
        return None;
    }
    let ev = w.events(trace);
    let alive = ev.iter().any(|e| e.actor == resp);
    if kind == ClaimKind::Aliveness || !alive {
        return Some(alive);
    }
    let weak = ev.iter().any(|e| e.actor == resp && e.peer == init);
    if kind == ClaimKind::WeakAgreement || !weak {
        return Some(weak);
    }
    let certs = |who: &str, about: &str| -> Vec<Binding> {
        ev.iter()
            .filter(|e| matches!(e.kind, EventKind::Conf | EventKind::Auth) && e.actor == who && e.peer == about)
            .filter_map(binding)
            .collect()
    };
    let (mine, theirs) = (certs(init, resp), certs(resp, init));
    let agree = !mine.is_empty()
        && !theirs.is_empty()
        && mine.iter().all(|a| theirs.iter().all(|b| a.agrees_with(b)));
    if kind == ClaimKind::NonInjAgreement || !agree {
        return Some(agree);
    }
    let seen: Vec<(Role, MsgKind)> = ev
        .iter()
        .filter(|e| e.kind == EventKind::Receive)
        .filter(|e| (e.actor == init && e.peer == resp) || (e.actor == resp && e.peer == init))
        .filter_map(|e| Some((w.role_of(&e.actor)?, e.message?)))
        .collect();
    Some(seen == intended_sequence(w.family, ri, rr))
}

/// Holds iff the claim holds in every completed run in which both parties
/// take part in partnered roles. The witness is the failing run's first
/// event.
pub fn check_claim(trace: &[TraceEvent], claim: &Claim) -> Verdict {
    if claim.kind == ClaimKind::Precedes {
        let mut v = check_customer_precedes(trace);
        v.claim = claim.clone();
        return v;
    }
    let witness = run_windows(trace)
        .iter()
        .filter(|w| w.completed)
        .find(|w| eval(trace, w, claim.kind, &claim.initiator, &claim.responder) == Some(false))
        .map(|w| w.start);
    Verdict::of(claim.clone(), witness)
}

/// One row of the claim table: a claim kind for a role in a family.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SuiteRow {
    pub family: Family,
    pub role: Role,
    pub kind: ClaimKind,
    pub holds: bool,
    pub witness: Option<usize>,
}

/// All four claims for C, P and ME in every family with a completed run.
/// A role's claim holds when it holds towards each of its partners; ME
/// claims are vacuous in runs without an ME.
pub fn claim_suite(trace: &[TraceEvent]) -> Vec<SuiteRow> {
    let windows: Vec<RunWindow> = run_windows(trace).into_iter().filter(|w| w.completed).collect();
    let mut rows = Vec::new();
    for family in [Family::Ia, Family::Ra1, Family::Ra2] {
        let runs: Vec<&RunWindow> = windows.iter().filter(|w| w.family == family).collect();
        if runs.is_empty() {
            continue;
        }
        for role in [Role::C, Role::P, Role::Me] {
            for kind in ClaimKind::SUITE {
                let witness = runs
                    .iter()
                    .find(|w| {
                        let Some(me) = w.party(role) else { return false };
                        partners(role).iter().any(|r| {
                            w.party(*r).is_some_and(|other| eval(trace, w, kind, me, other) == Some(false))
                        })
                    })
                    .map(|w| w.start);
                rows.push(SuiteRow { family, role, kind, holds: witness.is_none(), witness });
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keychain::RetrievalMode;
    use crate::scenarios;
    use crate::sim::run_scenario;

    fn honest(f: fn(RetrievalMode, bool) -> crate::sim::ScenarioConfig) -> Vec<TraceEvent> {
        run_scenario(&f(RetrievalMode::Mode1, true)).unwrap().trace
    }

    fn find(t: &[TraceEvent], kind: EventKind, actor: &str) -> usize {
        t.iter().position(|e| e.kind == kind && e.actor == actor).unwrap()
    }

    fn find_recv(t: &[TraceEvent], actor: &str, m: MsgKind) -> usize {
        t.iter().position(|e| e.kind == EventKind::Receive && e.actor == actor && e.message == Some(m)).unwrap()
    }

    fn row(rows: &[SuiteRow], f: Family, r: Role, k: ClaimKind) -> bool {
        rows.iter().find(|x| x.family == f && x.role == r && x.kind == k).unwrap().holds
    }

    #[test]
    fn honest_join_satisfies_precedes() {
        let t = honest(scenarios::honest_ia);
        let v = check_customer_precedes(&t);
        assert!(v.holds);
        assert_eq!(verdict(&t, false), AttackVerdict::NoAttack);
        assert_eq!(verdict(&t, true), AttackVerdict::AttackFailed);
    }

    #[test]
    fn auth_without_conf_fails_at_the_auth() {
        let mut t = honest(scenarios::honest_ia);
        let conf = find(&t, EventKind::Conf, "C1");
        t.remove(conf);
        let auth = find(&t, EventKind::Auth, "P1");
        let v = check_customer_precedes(&t);
        assert!(!v.holds);
        assert_eq!(v.witness, Some(auth));
        assert_eq!(verdict(&t, true), AttackVerdict::AttackSucceeded);
    }

    #[test]
    fn conf_after_auth_does_not_count() {
        let mut t = honest(scenarios::honest_ia);
        let conf = find(&t, EventKind::Conf, "C1");
        let ev = t.remove(conf);
        t.push(ev);
        assert!(!check_customer_precedes(&t).holds);
    }

    #[test]
    fn disagreeing_binding_fails() {
        let mut t = honest(scenarios::honest_ia);
        let conf = find(&t, EventKind::Conf, "C1");
        let mut b = Binding::from_term(&t[conf].payload).unwrap();
        b.n1 = b.n1.and_then(|n| n.succ());
        t[conf].payload = b.to_term();
        assert!(!check_customer_precedes(&t).holds);
        let rows = claim_suite(&t);
        assert!(!row(&rows, Family::Ia, Role::C, ClaimKind::NonInjAgreement));
        assert!(row(&rows, Family::Ia, Role::C, ClaimKind::WeakAgreement));
    }

    #[test]
    fn relayed_channel_breaks_precedes() {
        let mut t = honest(scenarios::honest_ia);
        let r = find_recv(&t, "C1", MsgKind::U0Deliver);
        t[r].peer = "Z".into();
        assert!(!check_customer_precedes(&t).holds);
    }

    #[test]
    fn swapped_receives_fail_synchronization_only() {
        let mut t = honest(scenarios::honest_ia);
        let a = find_recv(&t, "C1", MsgKind::U0Deliver);
        let b = find_recv(&t, "P1", MsgKind::ChallengeResp);
        let (ea, eb) = (t[a].clone(), t[b].clone());
        t[a] = TraceEvent { time: ea.time, ..eb };
        t[b] = TraceEvent { time: t[b].time, ..ea };
        let rows = claim_suite(&t);
        assert!(!row(&rows, Family::Ia, Role::C, ClaimKind::NonInjSynchronization));
        assert!(row(&rows, Family::Ia, Role::C, ClaimKind::NonInjAgreement));
        let v = check_claim(&t, &Claim::new(ClaimKind::NonInjSynchronization, "C1", "P1"));
        assert!(!v.holds);
        assert!(check_claim(&t, &Claim::new(ClaimKind::NonInjAgreement, "C1", "P1")).holds);
    }

    #[test]
    fn run_windows_classify_families() {
        let t = honest(scenarios::honest_ra2);
        let ws = run_windows(&t);
        assert_eq!(ws.iter().map(|w| w.family).collect::<Vec<_>>(), [Family::Ia, Family::Ra2]);
        assert!(ws.iter().all(|w| w.completed));
        assert_eq!(ws[0].authority.as_deref(), Some("ME1"));
        assert_eq!(ws[1].authority.as_deref(), Some("ME2"));
        let t = honest(scenarios::honest_ra1);
        let ws = run_windows(&t);
        assert_eq!(ws[1].family, Family::Ra1);
        assert_eq!(ws[1].authority, None);
    }

    #[test]
    fn authority_claims_are_vacuous_without_an_authority() {
        let rows = claim_suite(&honest(scenarios::honest_ra1));
        assert_eq!(rows.len(), 24);
        assert!(rows.iter().all(|r| r.holds));
    }

    #[test]
    fn claim_hierarchy_on_every_trace() {
        let mut traces: Vec<Vec<TraceEvent>> = scenarios::suite(RetrievalMode::Mode1)
            .into_iter()
            .map(|b| run_scenario(&b.config).unwrap().trace)
            .collect();
        // damaged variants: every single event dropped from an honest run
        let base = honest(scenarios::honest_ra2);
        for i in 0..base.len() {
            let mut t = base.clone();
            t.remove(i);
            traces.push(t);
        }
        for t in &traces {
            let rows = claim_suite(t);
            for f in [Family::Ia, Family::Ra1, Family::Ra2] {
                for r in [Role::C, Role::P, Role::Me] {
                    let get = |k| rows.iter().find(|x| x.family == f && x.role == r && x.kind == k).map(|x| x.holds);
                    let chain = ClaimKind::SUITE.map(get);
                    if chain[0].is_none() {
                        continue;
                    }
                    for k in 1..4 {
                        assert!(!chain[k].unwrap() || chain[k - 1].unwrap(), "{:?} {:?}", f, r);
                    }
                }
            }
        }
    }

    #[test]
    fn verdict_names_round_trip() {
        for v in [AttackVerdict::AttackFailed, AttackVerdict::AttackSucceeded, AttackVerdict::NoAttack] {
            assert_eq!(AttackVerdict::from_name(v.name()), Some(v));
        }
        assert_eq!(AttackVerdict::from_name("attack"), None);
    }

    #[test]
    fn empty_trace() {
        assert!(check_customer_precedes(&[]).holds);
        assert!(run_windows(&[]).is_empty());
        assert!(claim_suite(&[]).is_empty());
    }
}
