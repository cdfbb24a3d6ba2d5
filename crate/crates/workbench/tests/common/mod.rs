//! Randomized properties shared by the property and acceptance targets. Each check runs
//! its own case count and returns the first counterexample.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

use workbench::bspl::{parse_bspl, print_bspl, Adornment, InfoProtocol, MessageSchema, ParamDecl};
use workbench::cfp::{
    eliminate_shuffle, enumerate_traces, parse_scribble_unchecked, parse_trace, print_scribble, print_trace, unroll,
    Arg, CfpExpr, Label, RoleDecl, ScribbleProtocol,
};
use workbench::commitments::{lifecycle, parse_cupid, print_cupid, Clause, CommitmentSpec, CommitmentState, EventDays, TimeRef, Window};
use workbench::enactment::{check_emission, History, MessageInstance, ObsKind, Observation};
use workbench::hapn::{parse_hapn, print_hapn, GuardAtom, HapnAction, HapnLabel, HapnMachine, Term, Transition};
use workbench::netsim::{explore, histories_of, run_one, Delivery, Limits, RunEnd, ScriptedSender, SimPolicy};

pub const CASES: u32 = 1000;

fn runner() -> TestRunner {
    TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() })
}

fn run<S: Strategy>(s: S, f: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner().run(&s, f).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------- network

const AGENTS: [&str; 3] = ["A", "B", "C"];

fn scripts() -> impl Strategy<Value = Vec<Vec<usize>>> {
    // For each agent, the receivers of its sends.
    prop::collection::vec(prop::collection::vec(0usize..2, 0..4), 3)
}

fn senders(scripts: &[Vec<usize>]) -> Vec<ScriptedSender> {
    let mut n = 0;
    scripts
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let msgs = s
                .iter()
                .map(|&r| {
                    let to = AGENTS[(i + 1 + r) % 3];
                    n += 1;
                    MessageInstance::new("M", AGENTS[i], to, &[("n", &n.to_string())])
                })
                .collect();
            ScriptedSender::new(AGENTS[i], msgs)
        })
        .collect()
}

/// Every reception follows an emission of the same instance by its sender, no instance
/// arrives twice, and with FIFO delivery each pair's arrivals keep their sending order.
fn network_ok(hs: &[History], fifo: bool) -> Result<(), TestCaseError> {
    let mut sent: BTreeMap<&MessageInstance, u64> = BTreeMap::new();
    for h in hs {
        for o in h.observations.iter().filter(|o| o.kind == ObsKind::Emission) {
            prop_assert_eq!(&o.instance.sender, &h.owner);
            sent.insert(&o.instance, o.tick);
        }
    }
    let mut seen = BTreeSet::new();
    for h in hs {
        for o in h.observations.iter().filter(|o| o.kind == ObsKind::Reception) {
            let at = sent.get(&o.instance);
            prop_assert!(at.is_some_and(|t| *t < o.tick), "{} received but never sent", o.instance);
            prop_assert_eq!(&o.instance.receiver, &h.owner);
            prop_assert!(seen.insert(&o.instance), "{} received twice", o.instance);
        }
    }
    if fifo {
        for s in hs {
            for r in hs {
                let order = |h: &History, kind: ObsKind, peer: &str| -> Vec<MessageInstance> {
                    h.observations
                        .iter()
                        .filter(|o| o.kind == kind && (o.instance.sender == peer || o.instance.receiver == peer))
                        .filter(|o| o.instance.sender == s.owner && o.instance.receiver == r.owner)
                        .map(|o| o.instance.clone())
                        .collect()
                };
                let out = order(s, ObsKind::Emission, &r.owner);
                let inn = order(r, ObsKind::Reception, &s.owner);
                prop_assert!(out.starts_with(&inn), "{} -> {}: sent {:?}, received {:?}", s.owner, r.owner, out, inn);
            }
        }
    }
    Ok(())
}

pub fn netsim_noncreative_and_fifo() -> Result<(), String> {
    let delivery = prop_oneof![Just(Delivery::FifoPairwise), Just(Delivery::Unordered), Just(Delivery::Synchronous)];
    run((scripts(), delivery, any::<u64>()), |(sc, d, seed)| {
        let agents = senders(&sc);
        let total: usize = sc.iter().map(|s| s.len()).sum();
        let fifo = d != Delivery::Unordered;
        let r = run_one(agents.clone(), &SimPolicy { seed, ..SimPolicy::new(d) }, 1000);
        prop_assert_eq!(r.end, RunEnd::Completed);
        network_ok(&r.histories, fifo)?;
        let received = r.histories.iter().flat_map(|h| &h.observations).filter(|o| o.kind == ObsKind::Reception).count();
        prop_assert_eq!(received, total);
        if total <= 4 {
            let ex = explore(agents, &SimPolicy::new(d), &Limits::default());
            prop_assert!(!ex.completed.is_empty());
            for a in &ex.completed {
                network_ok(&histories_of(a), fifo)?;
            }
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- shuffles

fn label() -> impl Strategy<Value = CfpExpr> {
    prop_oneof![
        Just(CfpExpr::atom("A", "B", "p")),
        Just(CfpExpr::atom("B", "A", "q")),
        Just(CfpExpr::atom("A", "C", "r")),
        Just(CfpExpr::atom("C", "B", "s")),
    ]
}

/// Expressions over four events with every operator; stars only over single events so
/// that bound 6 stays small.
pub fn cfp_expr() -> impl Strategy<Value = CfpExpr> {
    let leaf = prop_oneof![4 => label(), 1 => Just(CfpExpr::Epsilon), 1 => label().prop_map(CfpExpr::star)];
    leaf.prop_recursive(3, 10, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| CfpExpr::seq(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| CfpExpr::shuffle(a, b)),
            prop::collection::vec(inner, 2..4).prop_map(CfpExpr::choice),
        ]
    })
}

/// At most three shuffle operands, and few enough bounded traces to enumerate.
fn tractable(e: &CfpExpr) -> bool {
    // Upper bounds on (trace count, longest trace) of a recursion-free expression.
    fn size(e: &CfpExpr) -> (u64, u64) {
        match e {
            CfpExpr::Atom { .. } => (1, 1),
            CfpExpr::Epsilon | CfpExpr::Var(_) => (1, 0),
            CfpExpr::Seq(a, b) => {
                let ((na, la), (nb, lb)) = (size(a), size(b));
                (na.saturating_mul(nb), la + lb)
            }
            CfpExpr::Choice { branches, .. } => branches.iter().map(size).fold((0, 0), |(n, l), (m, k)| (n.saturating_add(m), l.max(k))),
            CfpExpr::Shuffle(a, b) => {
                let ((na, la), (nb, lb)) = (size(a), size(b));
                let ways = (1..=lb).fold(1u64, |acc, i| acc.saturating_mul(la + i) / i);
                (na.saturating_mul(nb).saturating_mul(ways), la + lb)
            }
            CfpExpr::Rec { body, .. } => size(body),
        }
    }
    fn shuffles(e: &CfpExpr) -> usize {
        match e {
            CfpExpr::Shuffle(a, b) => 1 + shuffles(a) + shuffles(b),
            CfpExpr::Seq(a, b) => shuffles(a) + shuffles(b),
            CfpExpr::Choice { branches, .. } => branches.iter().map(shuffles).sum(),
            CfpExpr::Rec { body, .. } => shuffles(body),
            _ => 0,
        }
    }
    shuffles(e) <= 2 && size(&unroll(e, 6)).0 <= 20_000
}

/// Trace semantics written out directly, shuffles included, for recursion-free input.
fn traces(e: &CfpExpr) -> BTreeSet<Vec<Label>> {
    fn interleavings(a: &[Label], b: &[Label]) -> Vec<Vec<Label>> {
        if a.is_empty() || b.is_empty() {
            return vec![[a, b].concat()];
        }
        let mut out = Vec::new();
        for mut t in interleavings(&a[1..], b) {
            t.insert(0, a[0].clone());
            out.push(t);
        }
        for mut t in interleavings(a, &b[1..]) {
            t.insert(0, b[0].clone());
            out.push(t);
        }
        out
    }
    match e {
        CfpExpr::Atom { label, .. } => BTreeSet::from([vec![label.clone()]]),
        CfpExpr::Epsilon | CfpExpr::Var(_) => BTreeSet::from([vec![]]),
        CfpExpr::Seq(a, b) => {
            let tb = traces(b);
            traces(a).iter().flat_map(|x| tb.iter().map(move |y| [x.clone(), y.clone()].concat())).collect()
        }
        CfpExpr::Shuffle(a, b) => {
            let tb = traces(b);
            traces(a).iter().flat_map(|x| tb.iter().flat_map(move |y| interleavings(x, y))).collect()
        }
        CfpExpr::Choice { branches, .. } => branches.iter().flat_map(traces).collect(),
        CfpExpr::Rec { .. } => panic!("unroll first"),
    }
}

pub fn shuffle_elimination_preserves_traces() -> Result<(), String> {
    run(cfp_expr().prop_filter("too many shuffle operands or bounded traces", tractable), |e| {
        let flat = eliminate_shuffle(&e);
        prop_assert!(!flat.has_shuffle() || flat.has_recursion());
        let oracle = traces(&unroll(&e, 6));
        let got: BTreeSet<Vec<Label>> = enumerate_traces(&flat, 6).into_iter().map(|t| t.events).collect();
        prop_assert_eq!(&got, &oracle);
        let direct: BTreeSet<Vec<Label>> = enumerate_traces(&e, 6).into_iter().map(|t| t.events).collect();
        prop_assert_eq!(&direct, &oracle);
        Ok(())
    })
}

// ---------------------------------------------------------------- emission

fn pricing() -> InfoProtocol {
    parse_bspl(workbench::fixtures::text("pricing.bspl")).unwrap()
}

/// Every Request or Offer instance over the values 1 and 2.
fn pricing_instances() -> Vec<MessageInstance> {
    let mut out = Vec::new();
    for id in ["1", "2"] {
        for item in ["1", "2"] {
            out.push(MessageInstance::new("Request", "Buyer", "Seller", &[("ID", id), ("item", item)]));
        }
        for price in ["1", "2"] {
            out.push(MessageInstance::new("Offer", "Seller", "Buyer", &[("ID", id), ("price", price)]));
        }
    }
    out
}

/// The emission clauses applied literally: with K the union of bindings from observed
/// messages that agree with `m` on its key, every `in` parameter is in K with m's value,
/// no `out` parameter is in K, and `m`'s schema was not yet sent under that key. K must
/// be a function.
fn may_emit(h: &History, m: &MessageInstance, p: &InfoProtocol) -> bool {
    let schema = p.message(&m.schema).unwrap();
    if schema.sender != h.owner {
        return false;
    }
    let key: Vec<&str> = schema.params.iter().filter(|q| p.public_params.iter().any(|k| k.is_key && k.name == q.name)).map(|q| q.name.as_str()).collect();
    let same_key = |i: &MessageInstance| key.iter().all(|k| i.bindings.get(*k) == m.bindings.get(*k));
    let mut known: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for o in &h.observations {
        if same_key(&o.instance) {
            for (k, v) in &o.instance.bindings {
                known.entry(k).or_default().insert(v);
            }
        }
    }
    if known.values().any(|vs| vs.len() > 1) {
        return false;
    }
    let ins = schema.params.iter().filter(|q| q.adornment == Adornment::In).all(|q| {
        known.get(q.name.as_str()).is_some_and(|vs| vs.contains(m.bindings[&q.name].as_str()))
    });
    let outs = schema.params.iter().filter(|q| q.adornment == Adornment::Out).all(|q| !known.contains_key(q.name.as_str()));
    let fresh = !h
        .observations
        .iter()
        .any(|o| o.kind == ObsKind::Emission && o.instance.schema == m.schema && same_key(&o.instance));
    ins && outs && fresh
}

pub fn emission_matches_clause_oracle() -> Result<(), String> {
    let p = pricing();
    let all = pricing_instances();
    let n = all.len();
    let obs = (0..n, any::<bool>());
    let owner = prop_oneof![Just("Buyer"), Just("Seller")];
    run((owner, prop::collection::vec(obs, 0..4), 0..n), move |(owner, obs, cand)| {
        let mut h = History::new(owner);
        for (tick, (i, emitted)) in obs.into_iter().enumerate() {
            let m = all[i].clone();
            // An agent only emits its own messages and receives the others.
            let o = if m.sender == owner && emitted {
                Observation::emit(m, tick as u64)
            } else if m.sender == owner {
                continue;
            } else {
                Observation::recv(m, tick as u64)
            };
            h.observations.push(o);
        }
        let m = &all[cand];
        if m.sender != owner {
            return Ok(());
        }
        let want = may_emit(&h, m, &p);
        let got = check_emission(&h, m, &p);
        prop_assert_eq!(got.is_ok(), want, "history {:?}, candidate {}, got {:?}", h.observations, m, got);
        Ok(())
    })
}

/// The exhaustive version: every owner, every history of up to two observations, every
/// candidate.
pub fn emission_matches_clause_oracle_exhaustively() -> Result<(), String> {
    let p = pricing();
    let all = pricing_instances();
    for owner in ["Buyer", "Seller"] {
        let obs: Vec<Observation> = all
            .iter()
            .map(|m| if m.sender == owner { Observation::emit(m.clone(), 0) } else { Observation::recv(m.clone(), 0) })
            .collect();
        let mut histories = vec![vec![]];
        for a in &obs {
            histories.push(vec![a.clone()]);
            for b in &obs {
                histories.push(vec![a.clone(), b.clone()]);
            }
        }
        for os in histories {
            let h = History { owner: owner.into(), observations: os };
            for m in all.iter().filter(|m| m.sender == owner) {
                if check_emission(&h, m, &p).is_ok() != may_emit(&h, m, &p) {
                    return Err(format!("{owner} after {:?}: {m}", h.observations));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- commitments

const EVENTS: [&str; 3] = ["Accept", "Deliver", "Payment"];

fn time_ref(events: &'static [&'static str]) -> impl Strategy<Value = Option<TimeRef>> {
    prop::option::of((prop::sample::select(events), 0u64..4).prop_map(|(e, offset)| TimeRef { event: e.into(), offset }))
}

fn window(events: &'static [&'static str]) -> impl Strategy<Value = Window> {
    (time_ref(events), time_ref(events)).prop_map(|(lo, hi)| Window { lo, hi })
}

fn spec() -> impl Strategy<Value = CommitmentSpec> {
    (prop::option::of(window(&EVENTS[..1])), window(&EVENTS[..2])).prop_map(|(detach, discharge)| CommitmentSpec {
        name: "C".into(),
        debtor: "Buyer".into(),
        creditor: "Seller".into(),
        create: "Accept".into(),
        detach: detach.map(|window| Clause { event: "Deliver".into(), window }),
        discharge: Clause { event: "Payment".into(), window: discharge },
    })
}

/// Walks the days one at a time. An event counts on its day when it lies in its window,
/// with window bounds resolved from the events seen so far; a window whose upper bound
/// has passed is closed at the end of the day.
fn lifecycle_by_day(s: &CommitmentSpec, days: &EventDays, now: u64) -> (CommitmentState, BTreeMap<CommitmentState, u64>) {
    use CommitmentState::*;
    let mut since = BTreeMap::new();
    let mut state = Null;
    let mut created = 0;
    for d in 0..=now {
        let seen: EventDays = days.iter().filter(|(_, t)| **t <= d).map(|(e, t)| (e.clone(), *t)).collect();
        let at = |r: &TimeRef| seen.get(&r.event).map(|t| t + r.offset);
        let inside = |t: u64, w: &Window| {
            let lo = match &w.lo {
                None => true,
                Some(r) => at(r).is_some_and(|lo| t >= lo),
            };
            let hi = w.hi.as_ref().and_then(at).is_none_or(|hi| t <= hi);
            lo && hi
        };
        if state == Null && seen.get(&s.create) == Some(&d) {
            state = Active;
            created = d;
            since.insert(Active, d);
        }
        if state == Active {
            let go = match &s.detach {
                None => true,
                Some(c) => seen.get(&c.event).is_some_and(|&t| t == d && t >= created && inside(t, &c.window)),
            };
            if go {
                state = Detached;
                since.insert(Detached, d);
            }
        }
        if state == Detached {
            let paid = seen.get(&s.discharge.event).is_some_and(|&t| t >= created && inside(t, &s.discharge.window));
            if paid {
                state = Discharged;
                since.insert(Discharged, d);
            }
        }
        let passed = |w: &Window| w.hi.as_ref().and_then(at).is_some_and(|hi| d > hi);
        if state == Active && s.detach.as_ref().is_some_and(|c| passed(&c.window)) {
            state = Expired;
            since.insert(Expired, d);
        }
        if state == Detached && passed(&s.discharge.window) {
            state = Violated;
            since.insert(Violated, d);
        }
    }
    (state, since)
}

pub fn lifecycle_matches_day_by_day() -> Result<(), String> {
    let day = prop::option::of(0u64..10);
    run((spec(), day.clone(), day.clone(), day, 0u64..14), |(s, a, dl, pay, now)| {
        let mut days = EventDays::new();
        for (e, d) in EVENTS.iter().zip([a, dl, pay]) {
            if let Some(d) = d {
                days.insert(e.to_string(), d);
            }
        }
        let got = lifecycle(&s, &days, now);
        let want = lifecycle_by_day(&s, &days, now);
        prop_assert_eq!(&got, &want, "spec {:?}, days {:?}, now {}", s, days, now);
        // Monotone in time: a settled state stays settled.
        if matches!(got.0, CommitmentState::Discharged | CommitmentState::Violated | CommitmentState::Expired) {
            prop_assert_eq!(lifecycle(&s, &days, now + 1).0, got.0);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- round trips

fn ident(pool: &'static [&'static str]) -> impl Strategy<Value = String> {
    prop::sample::select(pool).prop_map(String::from)
}

fn distinct(pool: &'static [&'static str], min: usize) -> impl Strategy<Value = Vec<String>> {
    prop::sample::subsequence(pool, min..=pool.len()).prop_shuffle().prop_map(|v| v.into_iter().map(String::from).collect())
}

fn bspl_protocol() -> impl Strategy<Value = InfoProtocol> {
    let params = |min| {
        distinct(&["ID", "item", "price", "qty", "OK"], min).prop_flat_map(|names| {
            let n = names.len();
            (Just(names), prop::collection::vec((any::<bool>(), any::<bool>()), n)).prop_map(|(names, flags)| {
                names
                    .into_iter()
                    .zip(flags)
                    .map(|(name, (out, key))| ParamDecl {
                        name,
                        adornment: if out { Adornment::Out } else { Adornment::In },
                        is_key: key,
                    })
                    .collect::<Vec<_>>()
            })
        })
    };
    let message = (ident(&["Buyer", "Seller", "Bank"]), ident(&["Buyer", "Seller", "Bank"]), ident(&["Request", "Offer", "Pay"]), params(0))
        .prop_map(|(sender, receiver, name, params)| MessageSchema { sender, receiver, name, params });
    (ident(&["Pricing", "Purchase"]), distinct(&["Buyer", "Seller", "Bank"], 1), params(1), prop::collection::vec(message, 0..4))
        .prop_map(|(name, roles, public_params, messages)| InfoProtocol { name, roles, public_params, messages })
}

pub fn trace_expr() -> impl Strategy<Value = CfpExpr> {
    let atom = (ident(&["Buyer", "Seller"]), ident(&["Buyer", "Seller"]), ident(&["Request", "Offer"]), prop::option::of(prop::collection::vec((prop::option::of(ident(&["ID", "item"])), prop::option::of(ident(&["int", "str"]))), 1..3)))
        .prop_map(|(s, r, m, args)| {
            let payload = args.map(|a| {
                a.into_iter()
                    .map(|(name, ty)| match (name, ty) {
                        (None, None) => Arg::named("x"),
                        (name, ty) => Arg { name, ty },
                    })
                    .collect()
            });
            CfpExpr::Atom { label: Label::new(&s, &r, &m), payload }
        });
    let leaf = prop_oneof![5 => atom, 1 => Just(CfpExpr::Epsilon), 1 => Just(CfpExpr::Var("P".into()))];
    let body = leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| CfpExpr::seq(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| CfpExpr::shuffle(a, b)),
            prop::collection::vec(inner.clone(), 2..4).prop_map(CfpExpr::choice),
            inner.clone().prop_map(CfpExpr::star),
            inner.prop_map(|b| CfpExpr::Rec { var: "Q".into(), body: Box::new(b) }),
        ]
    });
    // `P` is bound at the top; a free `Q` cannot occur since it is only introduced as a binder.
    body.prop_map(|b| CfpExpr::Rec { var: "P".into(), body: Box::new(b) })
}

fn scribble_protocol() -> impl Strategy<Value = ScribbleProtocol> {
    const ROLES: [&str; 3] = ["Buyer", "Seller", "Bank"];
    let arg = prop_oneof![
        (ident(&["id", "amount"]), ident(&["Int", "Str"])).prop_map(|(n, t)| Arg { name: Some(n), ty: Some(t) }),
        ident(&["Int", "Str"]).prop_map(|t| Arg { name: None, ty: Some(t) }),
    ];
    let atom = (ident(&ROLES), ident(&ROLES), ident(&["Request", "Offer", "Accept"]), prop::collection::vec(arg, 0..3))
        .prop_map(|(s, r, m, args)| CfpExpr::Atom {
            label: Label::new(&s, &r, &m),
            // A name given a type is declared from then on; keep each name's first use typed.
            payload: if args.is_empty() { None } else { Some(args) },
        });
    let stmt = prop_oneof![4 => atom, 1 => Just(CfpExpr::Var("Proto".into()))];
    let block = stmt.prop_recursive(2, 12, 3, |inner| {
        let block = prop::collection::vec(inner.clone(), 0..3).prop_map(CfpExpr::seq_all);
        prop_oneof![
            3 => inner,
            1 => (ident(&ROLES), prop::collection::vec(block, 2..4))
                .prop_map(|(d, branches)| CfpExpr::Choice { branches, decider: Some(d) }),
        ]
    });
    let roles = prop::collection::vec(prop::option::of(ident(&["B", "S"])), 3);
    (prop::collection::vec(block, 0..4), roles).prop_map(|(parts, aliases)| {
        let body = CfpExpr::seq_all(parts);
        let roles: Vec<RoleDecl> = ROLES
            .iter()
            .zip(aliases)
            .map(|(r, _)| RoleDecl { name: r.to_string(), alias: None })
            .collect();
        let body = if contains_var(&body) { CfpExpr::Rec { var: "Proto".into(), body: Box::new(body) } } else { body };
        ScribbleProtocol { name: "Proto".into(), roles, body }
    })
}

fn contains_var(e: &CfpExpr) -> bool {
    match e {
        CfpExpr::Var(_) => true,
        CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => contains_var(a) || contains_var(b),
        CfpExpr::Choice { branches, .. } => branches.iter().any(contains_var),
        CfpExpr::Rec { body, .. } => contains_var(body),
        _ => false,
    }
}

/// Scribble payload names are declared by their first typed use, so a bare name that was
/// declared earlier reads back as a name rather than a type. Normalize both sides that way.
fn declare(e: &CfpExpr, declared: &mut BTreeSet<String>) -> CfpExpr {
    match e {
        CfpExpr::Atom { label, payload } => CfpExpr::Atom {
            label: label.clone(),
            payload: payload.as_ref().map(|args| {
                args.iter()
                    .map(|a| match (&a.name, &a.ty) {
                        (Some(n), Some(_)) => {
                            declared.insert(n.clone());
                            a.clone()
                        }
                        (None, Some(t)) if declared.contains(t) => Arg { name: Some(t.clone()), ty: None },
                        _ => a.clone(),
                    })
                    .collect()
            }),
        },
        CfpExpr::Seq(a, b) => {
            let a = declare(a, declared);
            CfpExpr::seq(a, declare(b, declared))
        }
        CfpExpr::Choice { branches, decider } => CfpExpr::Choice {
            branches: branches.iter().map(|b| declare(b, declared)).collect(),
            decider: decider.clone(),
        },
        CfpExpr::Rec { var, body } => CfpExpr::Rec { var: var.clone(), body: Box::new(declare(body, declared)) },
        other => other.clone(),
    }
}

fn hapn_machine() -> impl Strategy<Value = HapnMachine> {
    const STATES: [&str; 4] = ["s0", "s1", "s2", "s3"];
    const VARS: [&str; 3] = ["ID", "item", "paid"];
    let guard = prop_oneof![ident(&VARS).prop_map(GuardAtom::Bound), ident(&VARS).prop_map(GuardAtom::Unbound)];
    let term = prop_oneof![ident(&["T", "yes"]).prop_map(Term::Lit), ident(&["ID", "item"]).prop_map(Term::Arg)];
    let action = prop_oneof![
        (ident(&VARS), term).prop_map(|(v, t)| HapnAction::Bind(v, t)),
        ident(&VARS).prop_map(HapnAction::Unbind),
    ];
    let label = (ident(&["Buyer", "Seller"]), ident(&["Buyer", "Seller"]), ident(&["Request", "Offer"]), prop::collection::vec(ident(&["ID", "item"]), 0..3))
        .prop_map(|(sender, receiver, msg, args)| HapnLabel { sender, receiver, msg, args });
    let trans = (ident(&STATES), ident(&STATES), prop::option::of(label), prop::collection::vec(guard, 0..3), prop::collection::vec(action, 0..3))
        .prop_map(|(from, to, label, guard, actions)| Transition { from, to, label, guard, actions });
    (
        prop::option::of(ident(&["Pricing", "Purchase"])),
        prop::sample::subsequence(&STATES[..], 1..=4),
        prop::collection::vec(trans, 0..5),
        any::<prop::sample::Index>(),
        prop::collection::vec(any::<bool>(), 4),
    )
        .prop_map(|(name, states, transitions, init, fin)| {
            let states: Vec<String> = states.into_iter().map(String::from).collect();
            let initial = init.get(&states).clone();
            let finals = states.iter().zip(&fin).filter(|(_, f)| **f).map(|(s, _)| s.clone()).collect();
            // Transitions may only mention declared states.
            let transitions = transitions
                .into_iter()
                .map(|mut t: Transition| {
                    if !states.contains(&t.from) {
                        t.from = initial.clone();
                    }
                    if !states.contains(&t.to) {
                        t.to = initial.clone();
                    }
                    t
                })
                .collect();
            HapnMachine {
                name: name.unwrap_or_default(),
                states,
                initial,
                finals,
                variables: VARS.iter().map(|v| v.to_string()).collect(),
                transitions,
            }
        })
}

fn cupid_specs() -> impl Strategy<Value = Vec<CommitmentSpec>> {
    const EV: [&str; 4] = ["Accept", "Deliver", "Payment", "Refund"];
    let clause = || (ident(&EV), window(&EV)).prop_map(|(event, window)| Clause { event, window });
    let spec = (ident(&["Deliver-Payment", "Refund-Window", "C1"]), ident(&["Buyer", "Seller"]), ident(&["Buyer", "Seller"]), ident(&EV), prop::option::of(clause()), clause())
        .prop_map(|(name, debtor, creditor, create, detach, discharge)| CommitmentSpec { name, debtor, creditor, create, detach, discharge });
    prop::collection::vec(spec, 0..3)
}

pub fn round_trip_bspl() -> Result<(), String> {
    run(bspl_protocol(), |p| {
        let text = print_bspl(&p);
        prop_assert_eq!(parse_bspl(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?, p);
        Ok(())
    })
}

pub fn round_trip_trace() -> Result<(), String> {
    run(trace_expr(), |e| {
        let text = print_trace(&e);
        prop_assert_eq!(parse_trace(&text).map_err(|err| TestCaseError::fail(format!("{err}\n{text}")))?, e);
        Ok(())
    })
}

pub fn round_trip_scribble() -> Result<(), String> {
    run(scribble_protocol(), |p| {
        let text = print_scribble(&p);
        let back = parse_scribble_unchecked(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        let want = ScribbleProtocol { body: declare(&p.body, &mut BTreeSet::new()), ..p };
        prop_assert_eq!(back, want, "{}", text);
        Ok(())
    })
}

pub fn round_trip_hapn() -> Result<(), String> {
    run(hapn_machine(), |m| {
        let text = print_hapn(&m);
        prop_assert_eq!(parse_hapn(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?, m);
        Ok(())
    })
}

pub fn round_trip_cupid() -> Result<(), String> {
    run(cupid_specs(), |s| {
        let text = print_cupid(&s);
        prop_assert_eq!(parse_cupid(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?, s);
        Ok(())
    })
}

/// Every property suite, by name.
pub fn all() -> Vec<(&'static str, fn() -> Result<(), String>)> {
    vec![
        ("network noncreativity and FIFO order", netsim_noncreative_and_fifo),
        ("shuffle elimination preserves traces at bound 6", shuffle_elimination_preserves_traces),
        ("emission check agrees with clause oracle (random)", emission_matches_clause_oracle),
        ("emission check agrees with clause oracle (exhaustive)", emission_matches_clause_oracle_exhaustively),
        ("commitment lifecycle agrees with day-by-day oracle", lifecycle_matches_day_by_day),
        ("bspl round trip", round_trip_bspl),
        ("trace round trip", round_trip_trace),
        ("scribble round trip", round_trip_scribble),
        ("hapn round trip", round_trip_hapn),
        ("cupid round trip", round_trip_cupid),
    ]
}
