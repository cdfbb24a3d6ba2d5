//! Realizability: do the roles' local behaviors, composed over a network, produce exactly
//! the global protocol's runs?

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bspl::Direction;
use crate::cfp::{eliminate_shuffle, enumerate_traces, simplify, unroll, CfpExpr, GlobalTrace, Label};
use crate::enactment::{log_from_histories, print_log, History, MessageInstance, ObsKind, Observation};
use crate::netsim::{explore, histories_of, Agent, Delivery, Event, ExploreStats, Fault, FaultCode, Limits, SimPolicy};
use crate::projection::{project, Action, Doctrine, LocalExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reception {
    /// Arrivals are handed to the agent at once.
    Anytime,
    /// Arrivals wait until the agent expects that message from that peer next.
    BlockingSelector,
}

/// Which events `a ; b` orders: the send or receipt of `a` before the send or receipt of `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Interpretation {
    SS,
    SR,
    RS,
    RR,
}

impl Interpretation {
    pub const ALL: [Interpretation; 4] = [Interpretation::SS, Interpretation::SR, Interpretation::RS, Interpretation::RR];

    fn sides(self) -> (Side, Side) {
        match self {
            Interpretation::SS => (Side::Send, Side::Send),
            Interpretation::SR => (Side::Send, Side::Recv),
            Interpretation::RS => (Side::Recv, Side::Send),
            Interpretation::RR => (Side::Recv, Side::Recv),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    TraceC,
    TraceF,
    Scribble,
    Hapn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommConfig {
    pub delivery: Delivery,
    pub reception: Reception,
    pub interpretation: Interpretation,
    /// How global choices become local ones.
    pub projection: Doctrine,
}

impl CommConfig {
    pub fn trace_f(delivery: Delivery, interpretation: Interpretation) -> Self {
        CommConfig { delivery, reception: Reception::Anytime, interpretation, projection: Doctrine::TraceF }
    }
}

pub fn language_preset(l: Language) -> CommConfig {
    match l {
        Language::TraceC => CommConfig {
            delivery: Delivery::FifoPairwise,
            reception: Reception::Anytime,
            interpretation: Interpretation::RR,
            projection: Doctrine::TraceC,
        },
        Language::TraceF => CommConfig::trace_f(Delivery::FifoPairwise, Interpretation::SS),
        Language::Scribble => CommConfig {
            delivery: Delivery::FifoPairwise,
            reception: Reception::BlockingSelector,
            interpretation: Interpretation::SS,
            projection: Doctrine::Scribble,
        },
        Language::Hapn => CommConfig {
            delivery: Delivery::Synchronous,
            reception: Reception::Anytime,
            interpretation: Interpretation::SS,
            projection: Doctrine::TraceF,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Send,
    Recv,
}

/// `before` must happen before `after`. Atoms are numbered in preorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderConstraint {
    pub before: (usize, Side),
    pub after: (usize, Side),
}

/// The atoms of `e` in preorder; indices are the atom ids used by `sequence_constraints`.
pub fn atom_labels(e: &CfpExpr) -> Vec<Label> {
    e.labels().into_iter().cloned().collect()
}

// Atom ids that can come first and last in a run of `e`, numbered from `next`.
fn ends(e: &CfpExpr, next: &mut usize, out: &mut BTreeSet<OrderConstraint>, sides: (Side, Side)) -> (BTreeSet<usize>, BTreeSet<usize>) {
    match e {
        CfpExpr::Atom { .. } => {
            let id = *next;
            *next += 1;
            (BTreeSet::from([id]), BTreeSet::from([id]))
        }
        CfpExpr::Seq(a, b) => {
            let (fa, la) = ends(a, next, out, sides);
            let (fb, lb) = ends(b, next, out, sides);
            for &x in &la {
                for &y in &fb {
                    out.insert(OrderConstraint { before: (x, sides.0), after: (y, sides.1) });
                }
            }
            let first = if a.nullable() { &fa | &fb } else { fa };
            let last = if b.nullable() { &la | &lb } else { lb };
            (first, last)
        }
        CfpExpr::Choice { branches, .. } => {
            let (mut f, mut l) = (BTreeSet::new(), BTreeSet::new());
            for b in branches {
                let (x, y) = ends(b, next, out, sides);
                f.extend(x);
                l.extend(y);
            }
            (f, l)
        }
        CfpExpr::Shuffle(a, b) => {
            let (fa, la) = ends(a, next, out, sides);
            let (fb, lb) = ends(b, next, out, sides);
            (&fa | &fb, &la | &lb)
        }
        CfpExpr::Rec { body, .. } => ends(body, next, out, sides),
        CfpExpr::Var(_) | CfpExpr::Epsilon => (BTreeSet::new(), BTreeSet::new()),
    }
}

/// Ordering constraints imposed by every `;` in `e` under interpretation `i`: each atom
/// that can end the left operand against each atom that can start the right one.
pub fn sequence_constraints(e: &CfpExpr, i: Interpretation) -> BTreeSet<OrderConstraint> {
    let mut out = BTreeSet::new();
    ends(e, &mut 0, &mut out, i.sides());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Realizable,
    Unrealizable,
    /// A limit was hit before a verdict could be reached.
    BoundExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Reason {
    Deadlock,
    NonlocalChoice,
    TraceMismatch,
    OrderViolation,
    MergeFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Witness {
    /// An execution in the enactment log format.
    Execution(String),
    /// A global trace no execution produces.
    Trace(String),
    Projection(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub config: CommConfig,
    pub outcome: Outcome,
    pub reasons: BTreeSet<Reason>,
    pub witness: Option<Witness>,
    pub stats: Option<ExploreStats>,
}

impl Verdict {
    pub fn is_realizable(&self) -> bool {
        self.outcome == Outcome::Realizable
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.outcome)?;
        if !self.reasons.is_empty() {
            let r: Vec<String> = self.reasons.iter().map(|r| format!("{r:?}")).collect();
            write!(f, " [{}]", r.join(", "))?;
        }
        Ok(())
    }
}

/// A role playing its local behavior.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CfpAgent {
    pub history: History,
    pub expr: LocalExpr,
    /// Global choice id to the branches this agent's steps are still consistent with.
    pub commits: BTreeMap<usize, BTreeSet<usize>>,
    /// Arrivals held back by the channel selector.
    pub pending: Vec<MessageInstance>,
    sent: BTreeMap<(String, String), u32>,
    reception: Reception,
}

impl CfpAgent {
    pub fn new(role: &str, expr: LocalExpr, reception: Reception) -> Self {
        CfpAgent {
            history: History::new(role),
            expr,
            commits: BTreeMap::new(),
            pending: Vec::new(),
            sent: BTreeMap::new(),
            reception,
        }
    }

    fn commit(&mut self, commits: &[(usize, BTreeSet<usize>)]) {
        for (id, set) in commits {
            self.commits
                .entry(*id)
                .and_modify(|s| *s = s.intersection(set).copied().collect())
                .or_insert_with(|| set.clone());
        }
    }

    /// Commitments including those implied by stopping here.
    pub fn final_commits(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut a = self.clone();
        if let Some(c) = self.expr.skip() {
            a.commit(&c);
        }
        a.commits
    }

    fn receive(&self, m: &MessageInstance, tick: u64) -> Vec<Self> {
        let mut out = Vec::new();
        for s in self.expr.steps(true) {
            if let Action::Recv { peer, msg } = &s.action {
                if *peer == m.sender && *msg == m.schema {
                    let mut next = self.clone();
                    next.expr = s.next;
                    next.commit(&s.commits);
                    next.history.observations.push(Observation::recv(m.clone(), tick));
                    if !out.contains(&next) {
                        out.push(next);
                    }
                }
            }
        }
        out
    }
}

impl Agent for CfpAgent {
    fn name(&self) -> &str {
        &self.history.owner
    }

    fn history(&self) -> &History {
        &self.history
    }

    fn moves(&self, tick: u64) -> Vec<(Event, Self)> {
        let mut out = Vec::new();
        for s in self.expr.steps(true) {
            match &s.action {
                Action::Send { peer, msg } => {
                    let key = (peer.clone(), msg.clone());
                    let copy = self.sent.get(&key).copied().unwrap_or(0);
                    let m = MessageInstance::new(msg, self.name(), peer, &[("copy", &copy.to_string())]);
                    let mut next = self.clone();
                    next.expr = s.next;
                    next.commit(&s.commits);
                    next.sent.insert(key, copy + 1);
                    next.history.observations.push(Observation::emit(m.clone(), tick));
                    out.push((Event::Emit(m), next));
                }
                Action::Tau => {
                    let mut next = self.clone();
                    next.expr = s.next;
                    next.commit(&s.commits);
                    let label = s.commits.first().map(|(id, b)| format!("choose #{id} {b:?}")).unwrap_or_default();
                    out.push((Event::Silent(label), next));
                }
                Action::Recv { peer, msg } if self.reception == Reception::BlockingSelector => {
                    let Some(i) = self.pending.iter().position(|m| m.sender == *peer) else { continue };
                    if self.pending[i].schema != *msg {
                        continue;
                    }
                    let mut held = self.clone();
                    let m = held.pending.remove(i);
                    for next in held.receive(&m, tick) {
                        out.push((Event::Consume(m.clone()), next));
                    }
                }
                Action::Recv { .. } => {}
            }
        }
        out.dedup();
        out
    }

    fn deliver(&self, m: &MessageInstance, tick: u64) -> Vec<Result<Self, Fault>> {
        if self.reception == Reception::BlockingSelector {
            let mut next = self.clone();
            next.pending.push(m.clone());
            return vec![Ok(next)];
        }
        let next = self.receive(m, tick);
        if !next.is_empty() {
            return next.into_iter().map(Ok).collect();
        }
        let expected_later =
            self.expr.atoms().iter().any(|(p, msg, d)| *d == Direction::Recv && *p == m.sender && *msg == m.schema);
        let code = if expected_later { FaultCode::OrderViolation } else { FaultCode::TraceMismatch };
        vec![Err(Fault { agent: self.name().to_string(), code, detail: format!("unexpected {m} from {}", m.sender) })]
    }

    fn is_done(&self) -> bool {
        self.expr.nullable() && self.pending.is_empty()
    }
}

/// A choice point where more than one role may act first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceDiagnostic {
    /// Preorder index of the choice or shuffle among the expression's operator nodes.
    pub node: usize,
    pub senders: BTreeSet<String>,
    pub message: String,
}

/// Choices, and shuffles (which choose an interleaving), whose alternatives can be
/// started by different roles.
pub fn detect_nonlocal_choice(e: &CfpExpr) -> Vec<ChoiceDiagnostic> {
    fn walk(e: &CfpExpr, counter: &mut usize, out: &mut Vec<ChoiceDiagnostic>) {
        let node = *counter;
        *counter += 1;
        let starters: Option<Vec<BTreeSet<Label>>> = match e {
            CfpExpr::Choice { branches, .. } => Some(branches.iter().map(|b| b.first_labels()).collect()),
            CfpExpr::Shuffle(a, b) => Some(vec![a.first_labels(), b.first_labels()]),
            _ => None,
        };
        if let Some(firsts) = starters {
            let senders: BTreeSet<String> = firsts.iter().flatten().map(|l| l.sender.clone()).collect();
            if senders.len() > 1 {
                let desc: Vec<String> = firsts
                    .iter()
                    .flatten()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .map(|l| format!("{} sends {}", l.sender, l.msg))
                    .collect();
                out.push(ChoiceDiagnostic {
                    node,
                    senders,
                    message: format!("nonlocal choice: {}", desc.join(" vs ")),
                });
            }
        }
        match e {
            CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => {
                walk(a, counter, out);
                walk(b, counter, out);
            }
            CfpExpr::Choice { branches, .. } => branches.iter().for_each(|b| walk(b, counter, out)),
            CfpExpr::Rec { body, .. } => walk(body, counter, out),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(e, &mut 0, &mut out);
    out
}

type MsgId = (Label, u32);

// Happens-before over the observations of one execution.
struct Causality {
    nodes: BTreeMap<(MsgId, Side), usize>,
    reach: Vec<BTreeSet<usize>>,
}

impl Causality {
    fn new(histories: &[History], synchronous: bool) -> Self {
        let mut nodes: BTreeMap<(MsgId, Side), usize> = BTreeMap::new();
        let mut edges: Vec<Vec<usize>> = Vec::new();
        for h in histories {
            let mut prev: Option<usize> = None;
            for o in &h.observations {
                let id = edges.len();
                edges.push(Vec::new());
                if let Some(p) = prev {
                    edges[p].push(id);
                }
                prev = Some(id);
                let side = if o.kind == ObsKind::Emission { Side::Send } else { Side::Recv };
                nodes.insert((msg_id(o), side), id);
            }
        }
        for ((m, side), &s) in &nodes {
            if *side == Side::Send {
                if let Some(&r) = nodes.get(&(m.clone(), Side::Recv)) {
                    edges[s].push(r);
                    if synchronous {
                        edges[r].push(s);
                    }
                }
            }
        }
        let reach = (0..edges.len())
            .map(|start| {
                let mut seen = BTreeSet::new();
                let mut stack = vec![start];
                while let Some(n) = stack.pop() {
                    for &m in &edges[n] {
                        if seen.insert(m) {
                            stack.push(m);
                        }
                    }
                }
                seen
            })
            .collect();
        Causality { nodes, reach }
    }

    fn before(&self, a: &(MsgId, Side), b: &(MsgId, Side)) -> bool {
        match (self.nodes.get(a), self.nodes.get(b)) {
            (Some(&x), Some(&y)) => self.reach[x].contains(&y),
            _ => false,
        }
    }
}

fn msg_id(o: &Observation) -> MsgId {
    let m = &o.instance;
    let copy = m.bindings.get("copy").and_then(|c| c.parse().ok()).unwrap_or(0);
    (Label::new(&m.sender, &m.receiver, &m.schema), copy)
}

fn sent_messages(histories: &[History]) -> Vec<Label> {
    let mut out: Vec<Label> = histories
        .iter()
        .flat_map(|h| h.observations.iter())
        .filter(|o| o.kind == ObsKind::Emission)
        .map(|o| msg_id(o).0)
        .collect();
    out.sort();
    out
}

/// Whether the execution is one of the runs the trace permits under `i`.
fn matches(t: &GlobalTrace, sorted: &[Label], hb: &Causality, i: Interpretation) -> bool {
    let mut labels = t.events.clone();
    labels.sort();
    if labels != sorted {
        return false;
    }
    let mut seen: BTreeMap<&Label, u32> = BTreeMap::new();
    let ids: Vec<MsgId> = t
        .events
        .iter()
        .map(|l| {
            let k = seen.entry(l).or_insert(0);
            *k += 1;
            (l.clone(), *k - 1)
        })
        .collect();
    let (x, y) = i.sides();
    ids.windows(2).all(|w| hb.before(&(w[0].clone(), x), &(w[1].clone(), y)))
}

fn note(r: Reason, w: Witness, v: &mut Verdict) {
    v.reasons.insert(r);
    v.witness.get_or_insert(w);
}

fn witness_log(histories: &[History]) -> Witness {
    Witness::Execution(print_log(&log_from_histories(histories)))
}

/// Unrolls recursion, removes shuffles, projects every role, composes the projections
/// over the configured network and compares what they do with the protocol's traces.
pub fn check_realizability(e: &CfpExpr, cfg: &CommConfig, bound: usize) -> Verdict {
    check_realizability_with(e, cfg, bound, &Limits::default())
}

pub fn check_realizability_with(e: &CfpExpr, cfg: &CommConfig, bound: usize, limits: &Limits) -> Verdict {
    let flat = simplify(&eliminate_shuffle(&unroll(e, bound)));
    let nonlocal = !detect_nonlocal_choice(e).is_empty();
    let mut verdict = Verdict { config: *cfg, outcome: Outcome::Unrealizable, reasons: BTreeSet::new(), witness: None, stats: None };
    let mut agents = Vec::new();
    for role in flat.roles() {
        match project(&flat, &role, cfg.projection) {
            Ok(l) => agents.push(CfpAgent::new(&role, l, cfg.reception)),
            Err(f) => {
                verdict.reasons.insert(Reason::MergeFailure);
                if nonlocal {
                    verdict.reasons.insert(Reason::NonlocalChoice);
                }
                verdict.witness = Some(Witness::Projection(f.to_string()));
                return verdict;
            }
        }
    }
    let ex = explore(agents, &SimPolicy::new(cfg.delivery), limits);
    verdict.stats = Some(ex.stats.clone());
    for (f, hs) in &ex.faults {
        let r = if f.code == FaultCode::OrderViolation { Reason::OrderViolation } else { Reason::TraceMismatch };
        note(r, witness_log(hs), &mut verdict);
    }
    for (agents, _) in &ex.stuck {
        note(Reason::Deadlock, witness_log(&histories_of(agents)), &mut verdict);
    }
    let traces: Vec<GlobalTrace> = enumerate_traces(&flat, bound).into_iter().collect();
    let mut covered = vec![false; traces.len()];
    let synchronous = cfg.delivery == Delivery::Synchronous;
    for agents in &ex.completed {
        let hs = histories_of(agents);
        let mut agreed: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut split = false;
        for a in agents {
            for (id, set) in a.final_commits() {
                let e = agreed.entry(id).or_insert_with(|| set.clone());
                *e = e.intersection(&set).copied().collect();
                split |= e.is_empty();
            }
        }
        if split {
            note(Reason::NonlocalChoice, witness_log(&hs), &mut verdict);
        }
        let sorted = sent_messages(&hs);
        let hb = Causality::new(&hs, synchronous);
        let mut any = false;
        for (t, c) in traces.iter().zip(covered.iter_mut()) {
            if matches(t, &sorted, &hb, cfg.interpretation) {
                *c = true;
                any = true;
            }
        }
        if !any {
            let same_messages = traces.iter().any(|t| {
                let mut l = t.events.clone();
                l.sort();
                l == sorted
            });
            let r = if same_messages { Reason::OrderViolation } else { Reason::TraceMismatch };
            note(r, witness_log(&hs), &mut verdict);
        }
    }
    if !ex.bound_exceeded {
        if let Some(t) = traces.iter().zip(&covered).find(|(_, c)| !**c).map(|(t, _)| t) {
            note(Reason::TraceMismatch, Witness::Trace(t.to_string()), &mut verdict);
        }
    }
    verdict.outcome = if !verdict.reasons.is_empty() {
        if nonlocal {
            verdict.reasons.insert(Reason::NonlocalChoice);
        }
        Outcome::Unrealizable
    } else if ex.bound_exceeded {
        Outcome::BoundExceeded
    } else {
        Outcome::Realizable
    };
    verdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfp::{parse_trace, DEFAULT_BOUND};

    fn check(src: &str, cfg: CommConfig) -> Verdict {
        check_realizability(&parse_trace(src).unwrap(), &cfg, DEFAULT_BOUND)
    }

    #[test]
    fn single_atom_has_no_constraints() {
        assert!(sequence_constraints(&parse_trace("A -> B : m").unwrap(), Interpretation::RR).is_empty());
    }

    #[test]
    fn send_before_send() {
        let e = parse_trace("W -> X : p ; W -> Y : q").unwrap();
        let c = sequence_constraints(&e, Interpretation::SS);
        assert_eq!(c, BTreeSet::from([OrderConstraint { before: (0, Side::Send), after: (1, Side::Send) }]));
    }

    #[test]
    fn two_receivers_by_interpretation() {
        for d in [Delivery::Unordered, Delivery::FifoPairwise] {
            for (i, ok) in [
                (Interpretation::SS, true),
                (Interpretation::SR, true),
                (Interpretation::RS, false),
                (Interpretation::RR, false),
            ] {
                let v = check("W -> X : p ; W -> Y : q", CommConfig::trace_f(d, i));
                assert_eq!(v.is_realizable(), ok, "{d:?} {i:?}: {v}");
            }
        }
    }

    #[test]
    fn one_receiver_needs_fifo_under_rr() {
        let src = "W -> X : p ; W -> X : q";
        assert!(check(src, CommConfig::trace_f(Delivery::FifoPairwise, Interpretation::RR)).is_realizable());
        let v = check(src, CommConfig::trace_f(Delivery::Unordered, Interpretation::RR));
        assert_eq!(v.outcome, Outcome::Unrealizable);
        assert!(matches!(v.witness, Some(Witness::Execution(_))));
    }

    #[test]
    fn purchase_is_realizable_everywhere() {
        let src = "Buyer -> Seller : Request ; Seller -> Buyer : Offer ;
            ((Buyer -> Seller : Accept ; Seller -> Buyer : Deliver ; Buyer -> Seller : Payment) \\/ Buyer -> Seller : Reject)";
        for l in [Language::TraceC, Language::Scribble, Language::Hapn] {
            let v = check(src, language_preset(l));
            assert!(v.is_realizable(), "{l:?} {v} {:?}", v.witness);
        }
        assert!(detect_nonlocal_choice(&parse_trace(src).unwrap()).is_empty());
    }

    #[test]
    fn duplicated_branch_is_not_nonlocal() {
        let e = parse_trace("A -> B : m \\/ A -> B : m").unwrap();
        assert!(detect_nonlocal_choice(&e).is_empty());
    }

    #[test]
    fn synchronous_sends_coincide_with_receipts() {
        let v = check("W -> X : p ; W -> Y : q", CommConfig { interpretation: Interpretation::RR, ..language_preset(Language::Hapn) });
        assert!(v.is_realizable(), "{v}");
    }
}
