//! Built-in scenarios: honest runs of every protocol family, the three
//! customer-to-customer cases, the replay attacks, the man-in-the-middle
//! condition matrix and the recovery paths.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::checker::AttackVerdict;
use crate::keychain::RetrievalMode;
use crate::roles::{Command, CustomerConfig, MsgKind};
use crate::sim::{
    intruder_junk, Conditions, GroupSpec, IntruderSpec, Rule, RuleAction, ScenarioConfig, Trigger,
};

/// A scenario together with the verdict it must produce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Builtin {
    pub config: ScenarioConfig,
    pub expected: AttackVerdict,
}

/// When the customer-side switch or pairing starts, well after the join.
pub const LATER: u64 = 30;

fn auto() -> CustomerConfig {
    CustomerConfig { auto_join: true, ..CustomerConfig::default() }
}

fn manual() -> CustomerConfig {
    CustomerConfig::default()
}

fn replay(kind: MsgKind, from: &str, to: &str, target: &str) -> Rule {
    Rule {
        trigger: Trigger { kind, from: Some(from.into()), to: Some(to.into()), nth: 1 },
        action: RuleAction::Replay { to: target.into() },
    }
}

fn intruder(rules: Vec<Rule>) -> IntruderSpec {
    IntruderSpec { rules, ..IntruderSpec::default() }
}

fn with(cfg: ScenarioConfig, mode: RetrievalMode, restricted: bool) -> ScenarioConfig {
    ScenarioConfig { mode, restricted, ..cfg }
}

pub fn honest_ia(mode: RetrievalMode, restricted: bool) -> ScenarioConfig {
    let cfg = ScenarioConfig::new("honest-ia").group("ME1", &["P1"]).customer("C1", auto()).at(0, "P1", Command::Broadcast);
    with(cfg, mode, restricted)
}

pub fn honest_ra1(mode: RetrievalMode, restricted: bool) -> ScenarioConfig {
    let cfg = ScenarioConfig::new("honest-ra1")
        .group("ME1", &["P1", "P2"])
        .customer("C1", auto())
        .at(0, "P1", Command::Broadcast)
        .at(20, "P2", Command::Broadcast)
        .at(LATER, "C1", Command::Switch { provider: "P2".into() });
    with(cfg, mode, restricted)
}

fn federated(name: &str) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(name).group("ME1", &["P1"]);
    cfg.groups.push(GroupSpec {
        me: "ME2".into(),
        providers: alloc::vec!["P2".into()],
        holds: alloc::vec!["ME1".into()],
        outer: alloc::vec!["ME1".into()],
        ..GroupSpec::default()
    });
    cfg
}

pub fn honest_ra2(mode: RetrievalMode, restricted: bool) -> ScenarioConfig {
    let cfg = federated("honest-ra2")
        .customer("C1", auto())
        .at(0, "P1", Command::Broadcast)
        .at(20, "P2", Command::Broadcast)
        .at(LATER, "C1", Command::Switch { provider: "P2".into() });
    with(cfg, mode, restricted)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CcCase {
    SameP,
    SameGroup,
    CrossGroup,
}

impl CcCase {
    pub const ALL: [CcCase; 3] = [CcCase::SameP, CcCase::SameGroup, CcCase::CrossGroup];

    pub fn name(self) -> &'static str {
        match self {
            CcCase::SameP => "same-p",
            CcCase::SameGroup => "same-group",
            CcCase::CrossGroup => "cross-group",
        }
    }
}

/// Which side transmits a corrupted partial key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tamper {
    None,
    Initiator,
    Responder,
}

pub fn customer_pair(case: CcCase, tamper: Tamper) -> ScenarioConfig {
    let mut ci = manual();
    let mut cj = manual();
    ci.tamper_partial_key = tamper == Tamper::Initiator;
    cj.tamper_partial_key = tamper == Tamper::Responder;
    let (base, pi, pj) = match case {
        CcCase::SameP => (ScenarioConfig::new("cc").group("ME1", &["P1"]), "P1", "P1"),
        CcCase::SameGroup => (ScenarioConfig::new("cc").group("ME1", &["P1", "P2"]), "P1", "P2"),
        CcCase::CrossGroup => {
            let mut cfg = ScenarioConfig::new("cc").group("ME1", &["P1"]).group("ME2", &["P2"]);
            cfg.groups[0].holds.push("ME2".into());
            cfg.groups[1].holds.push("ME1".into());
            (cfg, "P1", "P2")
        }
    };
    let mut cfg = base
        .customer("Ci", ci)
        .customer("Cj", cj)
        .at(0, "P1", Command::Broadcast)
        .at(2, "Ci", Command::Join { provider: pi.into() })
        .at(LATER, "Ci", Command::CcStart { peer: "Cj".into() });
    if pj != "P1" {
        cfg = cfg.at(0, pj, Command::Broadcast);
    }
    cfg = cfg.at(12, "Cj", Command::Join { provider: pj.into() });
    let suffix = match tamper {
        Tamper::None => "",
        Tamper::Initiator => "-tamper-i",
        Tamper::Responder => "-tamper-j",
    };
    cfg.name = format!("cc-{}{}", case.name(), suffix);
    cfg
}

/// Replay of the join request towards a second provider, then of the
/// challenge reply.
pub fn replay_ia(mode: RetrievalMode) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new("replay-ia")
        .group("ME1", &["P1", "P1b"])
        .customer("C1", auto())
        .at(0, "P1", Command::Broadcast);
    cfg.intruder = Some(intruder(alloc::vec![
        replay(MsgKind::JoinReq, "C1", "P1", "P1b"),
        replay(MsgKind::ChallengeResp, "C1", "P1", "P1b"),
    ]));
    with(cfg, mode, false)
}

pub fn replay_ra1(mode: RetrievalMode) -> ScenarioConfig {
    let mut cfg = honest_ra1(mode, false);
    cfg.name = "replay-ra1".into();
    cfg.groups[0].providers.push("P2b".into());
    cfg.intruder = Some(intruder(alloc::vec![
        replay(MsgKind::SwitchReq, "C1", "P2", "P2b"),
        replay(MsgKind::ChallengeResp, "C1", "P2", "P2b"),
    ]));
    cfg
}

/// Two authorities both hold the issuing chain; each regrants on its own
/// chain without hearing of the other.
pub fn replay_ra2(mode: RetrievalMode) -> ScenarioConfig {
    let mut cfg = honest_ra2(mode, false);
    cfg.name = "replay-ra2".into();
    cfg.groups.push(GroupSpec {
        me: "ME3".into(),
        providers: alloc::vec!["P3".into()],
        holds: alloc::vec!["ME1".into()],
        outer: alloc::vec!["ME1".into()],
        ..GroupSpec::default()
    });
    cfg.intruder = Some(intruder(alloc::vec![
        replay(MsgKind::SwitchReq, "C1", "P2", "P3"),
        replay(MsgKind::ChallengeResp, "C1", "P2", "P3"),
    ]));
    cfg
}

pub fn mitm(cond: [bool; 4], restricted: bool) -> ScenarioConfig {
    let [c1, c2, c3, c4] = cond;
    let mut cfg = honest_ia(RetrievalMode::Mode1, restricted);
    cfg.name = format!("mitm-{}{}{}{}", c1 as u8, c2 as u8, c3 as u8, c4 as u8);
    cfg.conditions = Some(Conditions { customer: "C1".into(), provider: "P1".into(), c1, c2, c3, c4 });
    cfg
}

/// The five condition variants: all true, then each of the first four
/// flipped.
pub fn mitm_matrix() -> Vec<([bool; 4], AttackVerdict)> {
    let mut v = alloc::vec![([true; 4], AttackVerdict::AttackSucceeded)];
    for k in 0..4 {
        let mut c = [true; 4];
        c[k] = false;
        v.push((c, AttackVerdict::AttackFailed));
    }
    v
}

/// A resource-limited provider; the customer either stays or moves on.
pub fn limited(reconnect: bool) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(if reconnect { "limited-reconnect" } else { "limited-stay" })
        .group("ME1", &["P1", "P2"])
        .customer(
            "C1",
            CustomerConfig { reconnect_on_limited: reconnect.then(|| String::from("P2")), ..auto() },
        )
        .at(0, "P1", Command::Broadcast)
        .at(LATER, "P2", Command::Broadcast);
    cfg.groups[0].limited.push("P1".into());
    cfg
}

/// The first join request is lost; the customer resends with both nonces.
pub fn lost_join() -> ScenarioConfig {
    let mut cfg = honest_ia(RetrievalMode::Mode1, false);
    cfg.name = "lost-join".into();
    cfg.intruder = Some(intruder(alloc::vec![Rule {
        trigger: Trigger { kind: MsgKind::JoinReq, from: Some("C1".into()), to: Some("P1".into()), nth: 1 },
        action: RuleAction::Block,
    }]));
    cfg
}

/// The same join request delivered twice through the same provider.
pub fn duplicate_join() -> ScenarioConfig {
    let mut cfg = honest_ia(RetrievalMode::Mode1, false);
    cfg.name = "duplicate-join".into();
    cfg.intruder = Some(intruder(alloc::vec![replay(MsgKind::JoinReq, "C1", "P1", "P1")]));
    cfg
}

/// The intruder overwrites `h(ME)` in every switch request, so nobody
/// answers and the customer falls back to an alerting join.
pub fn forged_authority_digest() -> ScenarioConfig {
    let mut cfg = honest_ra2(RetrievalMode::Mode1, false);
    cfg.name = "forged-h-me".into();
    let junk = intruder_junk(&cfg, "Z");
    let rewrite = |kind| Rule {
        trigger: Trigger { kind, from: Some("C1".into()), to: Some("P2".into()), nth: 0 },
        action: RuleAction::Rewrite { part: 2, with: junk.clone() },
    };
    cfg.intruder = Some(intruder(alloc::vec![rewrite(MsgKind::SwitchReq), rewrite(MsgKind::ResendSwitch)]));
    cfg
}

/// A switch to a provider that is neither a member nor an outer member of
/// the issuing group.
pub fn outside_group() -> ScenarioConfig {
    let mut cfg = honest_ra2(RetrievalMode::Mode1, false);
    cfg.name = "outside-group".into();
    cfg.groups[1].outer.clear();
    cfg
}

/// Full regression set.
pub fn suite(mode: RetrievalMode) -> Vec<Builtin> {
    let ok = |config| Builtin { config, expected: AttackVerdict::NoAttack };
    let failed = |config| Builtin { config, expected: AttackVerdict::AttackFailed };
    let mut v = alloc::vec![
        ok(honest_ia(mode, true)),
        ok(honest_ra1(mode, true)),
        ok(honest_ra2(mode, true)),
    ];
    for case in CcCase::ALL {
        v.push(ok(customer_pair(case, Tamper::None)));
    }
    v.push(failed(replay_ia(mode)));
    v.push(failed(replay_ra1(mode)));
    v.push(failed(replay_ra2(mode)));
    for (cond, expected) in mitm_matrix() {
        v.push(Builtin { config: mitm(cond, false), expected });
    }
    v.push(ok(limited(false)));
    v.push(ok(limited(true)));
    v.push(failed(lost_join()));
    v.push(failed(duplicate_join()));
    v.push(failed(forged_authority_digest()));
    v.push(ok(outside_group()));
    v
}
