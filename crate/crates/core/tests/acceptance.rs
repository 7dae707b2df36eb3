//! Acceptance run: one PASS/FAIL line per criterion.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tap_core::algebra::{hash, KeyKind, OpCounts, Term, DIGEST_LEN, NONCE_LEN};
use tap_core::checker::{check_customer_precedes, claim_suite, run_windows, AttackVerdict, SuiteRow};
use tap_core::keychain::{derive_session_key, KeyChain, KeyMsg, RetrievalMode, SecretTable};
use tap_core::metrics::{compare, count_run, RunMetrics};
use tap_core::roles::{EventKind, Family, RoleState, TraceEvent};
use tap_core::scenarios::{self, CcCase, Tamper};
use tap_core::sim::{customer_key, group_secrets, run_scenario, ScenarioConfig, ScenarioOutcome, DEPTH_BOUND};
use tap_core::ticket::{
    issue_ticket, retrieve_mode2, retrieve_mode3, verify_ticket, DriftEstimator, IndexTree, TicketContent,
    TicketExtras, VerifierKeys,
};
use tap_core::{Key, KeyRegistry};

const MODES: [RetrievalMode; 3] = [RetrievalMode::Mode1, RetrievalMode::Mode2, RetrievalMode::Mode3];

type Outcome = Result<String, String>;

fn run(cfg: &ScenarioConfig) -> Result<(ScenarioOutcome, Duration), String> {
    let t = Instant::now();
    let o = run_scenario(cfg).map_err(|e| format!("{}: {e}", cfg.name))?;
    Ok((o, t.elapsed()))
}

fn runs_of(o: &ScenarioOutcome, family: Family) -> Vec<RunMetrics> {
    run_windows(&o.trace)
        .into_iter()
        .filter(|w| w.completed && w.family == family)
        .map(|w| compare(&w, count_run(&o.trace, &o.op_log, &w)))
        .collect()
}

fn alert_step(e: &TraceEvent) -> Option<&str> {
    (e.kind == EventKind::Alert).then(|| e.payload.as_cat()?.first()?.as_atom()).flatten()
}

fn criterion1() -> Outcome {
    let mut seen = Vec::new();
    for mode in MODES {
        let cases = [
            (scenarios::honest_ia(mode, true), Family::Ia, 5),
            (scenarios::honest_ra1(mode, true), Family::Ra1, 3),
            (scenarios::honest_ra2(mode, true), Family::Ra2, 5),
        ];
        for (cfg, family, want) in cases {
            let (o, took) = run(&cfg)?;
            if took >= Duration::from_secs(1) {
                return Err(format!("{} took {:?}", cfg.name, took));
            }
            let rs = runs_of(&o, family);
            let [r] = rs.as_slice() else {
                return Err(format!("{} {:?}: {} completed runs", cfg.name, mode, rs.len()));
            };
            let got = r.metrics.total.unicast_msgs;
            if got != want {
                return Err(format!("{} {:?}: {} unicasts, want {}", cfg.name, mode, got, want));
            }
            if family == Family::Ra2 && (r.unicast_match || !r.notes.iter().any(|n| n.contains("4 expected"))) {
                return Err("RA-2 discrepancy note missing".into());
            }
            seen.push(got);
        }
    }
    Ok(format!("IA/RA-1/RA-2 unicasts {:?} per mode; RA-2 note recorded", &seen[..3]))
}

fn criterion2() -> Outcome {
    let mut parts = Vec::new();
    for mode in MODES {
        let cases = [
            (scenarios::replay_ia(mode), "P1b", "M6"),
            (scenarios::replay_ra1(mode), "P2b", "M3"),
            (scenarios::replay_ra2(mode), "P3", "M5"),
        ];
        for (cfg, at, step) in cases {
            let (o, _) = run(&cfg)?;
            if o.verdict != AttackVerdict::AttackFailed {
                return Err(format!("{} {:?}: {}", cfg.name, mode, o.verdict.name()));
            }
            if !o.trace.iter().any(|e| e.actor == at && alert_step(e) == Some(step)) {
                return Err(format!("{} {:?}: no {} alert at {}", cfg.name, mode, step, at));
            }
            if o.trace.iter().any(|e| e.kind == EventKind::ServiceStart && e.actor == at) {
                return Err(format!("{}: {} started service", cfg.name, at));
            }
            if mode == RetrievalMode::Mode1 {
                parts.push(format!("{}@{}", step, at));
            }
        }
    }
    Ok(format!("AttackFailed with alerts {}", parts.join(", ")))
}

fn criterion3() -> Outcome {
    let mut line = Vec::new();
    for (cond, want) in scenarios::mitm_matrix() {
        let cfg = scenarios::mitm(cond, false);
        let (o, _) = run(&cfg)?;
        if o.verdict != want {
            return Err(format!("{}: {} want {}", cfg.name, o.verdict.name(), want.name()));
        }
        let precedes = check_customer_precedes(&o.trace).holds;
        if precedes != (want != AttackVerdict::AttackSucceeded) {
            return Err(format!("{}: precedes holds = {}", cfg.name, precedes));
        }
        line.push(format!("{}={}", &cfg.name[5..], o.verdict.name()));
    }
    Ok(line.join(" "))
}

fn rows_for(rows: &[SuiteRow], f: Family) -> Vec<&SuiteRow> {
    rows.iter().filter(|r| r.family == f).collect()
}

fn criterion4() -> Outcome {
    for mode in MODES {
        let cases = [
            (scenarios::honest_ia(mode, true), Family::Ia),
            (scenarios::honest_ra1(mode, true), Family::Ra1),
            (scenarios::honest_ra2(mode, true), Family::Ra2),
        ];
        for (cfg, f) in cases {
            let (o, _) = run(&cfg)?;
            let rows = claim_suite(&o.trace);
            let fam = rows_for(&rows, f);
            if fam.len() != 12 {
                return Err(format!("{} {:?}: {} rows", cfg.name, mode, fam.len()));
            }
            if let Some(r) = fam.iter().find(|r| !r.holds) {
                return Err(format!("{} {:?}: {:?} {} fails", cfg.name, mode, r.role, r.kind.name()));
            }
        }
    }
    let (o, _) = run(&scenarios::mitm([true; 4], false))?;
    let failing: Vec<String> =
        claim_suite(&o.trace).iter().filter(|r| !r.holds).map(|r| format!("{:?}/{}", r.role, r.kind.name())).collect();
    if failing.is_empty() {
        return Err("every claim holds under the unrestricted attack".into());
    }
    Ok(format!("36/36 restricted rows hold per mode; attack breaks {}", failing.join(",")))
}

fn random_fixture(rng: &mut ChaCha8Rng, length: u32) -> (SecretTable, KeyMsg) {
    let n = 1 + (rng.next_u32() % 8) as usize;
    let entries = (0..n)
        .map(|_| {
            let mut e = [0u8; DIGEST_LEN];
            rng.fill_bytes(&mut e);
            e
        })
        .collect();
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let interval = 10 + u64::from(rng.next_u32() % 500);
    let msg = KeyMsg {
        index: rng.next_u32(),
        offset: rng.next_u32(),
        duration: interval * u64::from(length),
        sender_clock: 1_000_000 + u64::from(rng.next_u32() % 100_000),
        nonce,
        length,
        mode: MODES[(rng.next_u32() % 3) as usize],
    };
    (SecretTable::new(entries), msg)
}

fn criterion5() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tickets = 0usize;
    for k in 0..100 {
        let length = [4u32, 16, 64][k % 3];
        let (table, msg) = random_fixture(&mut rng, length);
        let mut ops = OpCounts::default();
        let chains: Vec<KeyChain> = (0..3).map(|_| KeyChain::build(&table, &msg, &mut ops)).collect::<Result<_, _>>()
            .map_err(|e| format!("fixture {k}: {e}"))?;
        let blob = chains[0].export();
        if chains.iter().any(|c| c.export() != blob) {
            return Err(format!("fixture {k}: chains differ"));
        }
        let (issuer, verifier) = (&chains[0], &chains[2]);
        let tree = IndexTree::build(issuer.index_vector(), &mut ops);
        let vtree = IndexTree::build(verifier.index_vector(), &mut ops);
        let mut kg = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut kg);
        let kg = Key::new(kg, KeyKind::Group);
        let kc = Key::new(hash(&kg.bytes).0, KeyKind::PublicPair);
        let len = msg.interval_len();
        for i in 0..length as usize {
            let content = TicketContent {
                customer: "C",
                session: derive_session_key(&issuer.keys()[i], &kc, i as u64, length, &mut ops),
                index: i,
                index_value: issuer.index_vector()[i],
                profile: Term::atom("profile"),
                generator_digest: issuer.generator_digest(i, &mut ops).unwrap(),
                customer_key_digest: hash(&kc.bytes),
            };
            let issue_time = msg.sender_clock + i as u64 * len + u64::from(rng.next_u32()) % len;
            for mode in MODES {
                let extras = TicketExtras { issue_time: Some(issue_time), tree: Some(&tree) };
                let tk = issue_ticket(mode, &content, &issuer.keys()[i], &kg, extras, &mut ops)
                    .map_err(|e| format!("fixture {k} issue: {e}"))?;
                let mut est = DriftEstimator::from_key_msg(msg.sender_clock, msg.sender_clock, msg.duration);
                let keys = VerifierKeys { chain: verifier, tree: &vtree, group_key: &kg };
                let v = verify_ticket(&tk, keys, &mut est, issue_time + 1, &mut ops)
                    .map_err(|e| format!("fixture {k} interval {i} {mode:?}: {e}"))?;
                if v.index != i {
                    return Err(format!("fixture {k} {mode:?}: interval {} for {i}", v.index));
                }
                tickets += 1;
            }
        }
    }
    let took = t.elapsed();
    if took >= Duration::from_secs(30) {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("100 fixtures x 3 parties identical; {tickets} tickets retrieved in all modes ({took:.2?})"))
}

fn criterion6() -> Outcome {
    let mut counts = Vec::new();
    for leaves in [8u32, 16, 64] {
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from(leaves));
        let (table, msg) = random_fixture(&mut rng, leaves - 1);
        let mut pre = OpCounts::default();
        let chain = KeyChain::build(&table, &msg, &mut pre).map_err(|e| e.to_string())?;
        let tree = IndexTree::build(chain.index_vector(), &mut pre);
        let want = u64::from(leaves.ilog2());
        for i in 0..leaves as usize {
            let path = tree.sibling_path(i).map_err(|e| e.to_string())?;
            let mut ops = OpCounts::default();
            let got = retrieve_mode3(&chain.index_vector()[i], &path, &tree.head(), &tree, &mut ops);
            if got != Ok(i) || ops.hash != want {
                return Err(format!("|V|={leaves} leaf {i}: {got:?}, {} hashes (want {want})", ops.hash));
            }
        }
        counts.push(format!("|V|={leaves}:{want}H"));
    }
    Ok(counts.join(" "))
}

fn criterion7() -> Outcome {
    const LEN: u64 = 600;
    let mut runner = TestRunner::new(Config { cases: 256, failure_persistence: None, ..Config::default() });
    let strategy = (0u64..=LEN / 3, 0u64..=LEN / 3, any::<bool>(), any::<u64>());
    let result = runner.run(&strategy, |(delta, slack, ahead, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (table, mut msg) = random_fixture(&mut rng, 32);
        msg.duration = LEN * 32;
        let chain = KeyChain::build(&table, &msg, &mut OpCounts::default()).unwrap();
        let local = if ahead { msg.sender_clock + delta } else { msg.sender_clock - delta };
        let mut est = DriftEstimator::from_key_msg(local, msg.sender_clock, msg.duration);
        prop_assert_eq!(est.epsilon, delta);
        est.epsilon = delta + slack;
        let mut gap = est.epsilon.abs_diff(delta);
        for i in 0..20usize {
            let issue = msg.sender_clock + i as u64 * LEN;
            let mut ops = OpCounts::default();
            let g = chain.generator_digest(i, &mut ops).unwrap();
            let (got, next) = retrieve_mode2(issue, issue + delta + 1, &est, &chain, &g, &mut ops)
                .map_err(|e| TestCaseError::fail(format!("retrieval {i}: {e}")))?;
            prop_assert_eq!(got, i);
            let next_gap = next.epsilon.abs_diff(delta);
            prop_assert!(next_gap <= gap, "gap grew {} -> {} at {}", gap, next_gap, i);
            gap = next_gap;
            est = next;
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    Ok("256 cases x 20 retrievals, |eps - delta| non-increasing".into())
}

/// Every secret the protocol must keep from an eavesdropper.
fn secrets(cfg: &ScenarioConfig, o: &ScenarioOutcome) -> Vec<[u8; DIGEST_LEN]> {
    let mut out = Vec::new();
    for g in &cfg.groups {
        let s = group_secrets(cfg, &g.me);
        out.push(s.group_key.bytes);
        out.push(s.keypair.private.bytes);
        let chain = KeyChain::build(&s.table, &s.key_msg, &mut OpCounts::default()).unwrap();
        out.extend(chain.generators().iter().map(|d| d.0));
        out.extend(chain.keys().iter().map(|k| k.bytes));
    }
    for c in &cfg.customers {
        out.push(customer_key(cfg, &c.id).bytes);
    }
    for p in o.sim.parties.values() {
        if let RoleState::C(c) = &p.state {
            out.extend(c.session.iter().map(|s| s.key.bytes));
            out.extend(c.cc_keys.values().map(|k| k.bytes));
        }
    }
    out
}

fn criterion8() -> Outcome {
    let mut max_depth = 0;
    let mut checked = 0usize;
    for seed in 0..50u64 {
        let mode = MODES[(seed % 3) as usize];
        let mut cfg = match seed % 5 {
            0 => scenarios::honest_ia(mode, true),
            1 => scenarios::honest_ra1(mode, true),
            2 => scenarios::honest_ra2(mode, true),
            3 => scenarios::customer_pair(CcCase::ALL[(seed / 5 % 3) as usize], Tamper::None),
            _ => scenarios::limited(true),
        };
        cfg.seed = seed;
        cfg.mode = mode;
        let (o, _) = run(&cfg)?;
        let mut registry = KeyRegistry::new();
        for g in &cfg.groups {
            registry.register(&group_secrets(&cfg, &g.me).keypair);
        }
        let traffic: BTreeSet<Term> =
            o.trace.iter().filter(|e| e.kind == EventKind::Send).map(|e| e.payload.clone()).collect();
        let k = tap_core::sim::deduce_closure(&traffic, &registry, DEPTH_BOUND);
        max_depth = max_depth.max(k.max_depth());
        if k.max_depth() > DEPTH_BOUND {
            return Err(format!("seed {seed}: depth {} over bound", k.max_depth()));
        }
        let secret = secrets(&cfg, &o);
        for t in k.terms() {
            let leaked = match t {
                Term::Bytes(b) => secret.iter().any(|s| s.as_slice() == b.as_slice()),
                _ => false,
            };
            if leaked {
                return Err(format!("seed {seed} {}: secret in closure", cfg.name));
            }
        }
        checked += secret.len();
    }
    Ok(format!("50 runs, {checked} secrets checked, 0 leaks, max depth {max_depth} <= {DEPTH_BOUND}"))
}

fn cc_key(o: &ScenarioOutcome, who: &str, peer: &str) -> Option<Key> {
    match &o.sim.parties.get(who)?.state {
        RoleState::C(c) => c.cc_keys.get(peer).copied(),
        _ => None,
    }
}

fn criterion9() -> Outcome {
    for case in CcCase::ALL {
        let (o, _) = run(&scenarios::customer_pair(case, Tamper::None))?;
        match (cc_key(&o, "Ci", "Cj"), cc_key(&o, "Cj", "Ci")) {
            (Some(a), Some(b)) if a == b => {}
            other => return Err(format!("{}: keys {:?}", case.name(), other)),
        }
        if o.trace.iter().any(|e| alert_step(e) == Some("CC")) {
            return Err(format!("{}: honest pairing alerted", case.name()));
        }
        for side in [Tamper::Initiator, Tamper::Responder] {
            let (o, _) = run(&scenarios::customer_pair(case, side))?;
            let confirmed = o.trace.iter().any(|e| e.kind == EventKind::Auth && e.actor == "Cj" && e.peer == "Ci");
            let alerted = o.trace.iter().any(|e| alert_step(e) == Some("CC"));
            if confirmed || !alerted || cc_key(&o, "Cj", "Ci").is_some() {
                return Err(format!("{} {:?}: tampering not caught", case.name(), side));
            }
        }
    }
    Ok("identical K_ij in same-P, same-group, cross-group; both tamper sides rejected".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("message complexity", criterion1),
        ("replay regression", criterion2),
        ("conditional man-in-the-middle", criterion3),
        ("claim suite", criterion4),
        ("keychain agreement", criterion5),
        ("mode-3 cost", criterion6),
        ("mode-2 drift", criterion7),
        ("intruder opacity", criterion8),
        ("customer-customer auth", criterion9),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", n + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
