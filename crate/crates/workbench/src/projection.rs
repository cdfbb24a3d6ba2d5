//! Per-role local behaviors and type-level state machines.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspl::Direction;
use crate::cfp::{Arg, CfpExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChoiceKind {
    Internal,
    External,
    Plain,
}

/// One alternative of a local choice. `origins` are the indices of the global branches
/// that project to this body; identical projections are merged.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalBranch {
    pub origins: BTreeSet<usize>,
    pub body: LocalExpr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LocalExpr {
    Atom { peer: String, msg: String, dir: Direction, payload: Option<Vec<Arg>> },
    Seq(Box<LocalExpr>, Box<LocalExpr>),
    /// `id` numbers the global choice this came from (preorder). `mixed` marks a
    /// choice whose branches the role starts with both sends and receptions.
    Choice { kind: ChoiceKind, id: usize, mixed: bool, branches: Vec<LocalBranch> },
    Shuffle(Box<LocalExpr>, Box<LocalExpr>),
    Rec { var: String, body: Box<LocalExpr> },
    Var(String),
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Doctrine {
    TraceC,
    TraceF,
    Scribble,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{role} cannot follow choice #{choice}: {reason}")]
pub struct MergeFailure {
    pub role: String,
    pub choice: usize,
    pub reason: String,
}

fn seq_smart(a: LocalExpr, b: LocalExpr) -> LocalExpr {
    match (a, b) {
        (LocalExpr::Epsilon, b) => b,
        (a, LocalExpr::Epsilon) => a,
        (LocalExpr::Seq(x, y), b) => LocalExpr::Seq(x, Box::new(seq_smart(*y, b))),
        (a, b) => LocalExpr::Seq(Box::new(a), Box::new(b)),
    }
}

fn shuffle_smart(a: LocalExpr, b: LocalExpr) -> LocalExpr {
    match (a, b) {
        (LocalExpr::Epsilon, b) => b,
        (a, LocalExpr::Epsilon) => a,
        (a, b) => LocalExpr::Shuffle(Box::new(a), Box::new(b)),
    }
}

pub fn project_trace_c(e: &CfpExpr, role: &str) -> LocalExpr {
    project(e, role, Doctrine::TraceC).expect("trace projection never fails")
}

pub fn project_trace_f(e: &CfpExpr, role: &str) -> LocalExpr {
    project(e, role, Doctrine::TraceF).expect("trace projection never fails")
}

pub fn project_scribble(e: &CfpExpr, role: &str) -> Result<LocalExpr, MergeFailure> {
    project(e, role, Doctrine::Scribble)
}

pub fn project(e: &CfpExpr, role: &str, doctrine: Doctrine) -> Result<LocalExpr, MergeFailure> {
    proj(e, role, doctrine, &mut 0)
}

fn proj(e: &CfpExpr, role: &str, doc: Doctrine, ctr: &mut usize) -> Result<LocalExpr, MergeFailure> {
    Ok(match e {
        CfpExpr::Atom { label, payload } => {
            if label.sender == role {
                LocalExpr::Atom { peer: label.receiver.clone(), msg: label.msg.clone(), dir: Direction::Send, payload: payload.clone() }
            } else if label.receiver == role {
                LocalExpr::Atom { peer: label.sender.clone(), msg: label.msg.clone(), dir: Direction::Recv, payload: payload.clone() }
            } else {
                LocalExpr::Epsilon
            }
        }
        CfpExpr::Seq(a, b) => seq_smart(proj(a, role, doc, ctr)?, proj(b, role, doc, ctr)?),
        CfpExpr::Shuffle(a, b) => shuffle_smart(proj(a, role, doc, ctr)?, proj(b, role, doc, ctr)?),
        CfpExpr::Rec { var, body } => {
            let body = proj(body, role, doc, ctr)?;
            if body.has_atoms() {
                LocalExpr::Rec { var: var.clone(), body: Box::new(body) }
            } else {
                LocalExpr::Epsilon
            }
        }
        CfpExpr::Var(v) => LocalExpr::Var(v.clone()),
        CfpExpr::Epsilon => LocalExpr::Epsilon,
        CfpExpr::Choice { branches, decider } => {
            let id = *ctr;
            *ctr += 1;
            let mut groups: Vec<LocalBranch> = Vec::new();
            for (i, b) in branches.iter().enumerate() {
                let body = proj(b, role, doc, ctr)?;
                match groups.iter_mut().find(|g| g.body == body) {
                    Some(g) => {
                        g.origins.insert(i);
                    }
                    None => groups.push(LocalBranch { origins: BTreeSet::from([i]), body }),
                }
            }
            if groups.len() == 1 {
                return Ok(groups.pop().unwrap().body);
            }
            let dirs: BTreeSet<Direction> =
                groups.iter().flat_map(|g| g.body.first_actions()).map(|(_, _, d)| d).collect();
            let mixed = dirs.len() > 1;
            let kind = match doc {
                Doctrine::TraceF => ChoiceKind::Plain,
                Doctrine::TraceC => {
                    if !mixed {
                        if dirs.contains(&Direction::Send) {
                            ChoiceKind::Internal
                        } else {
                            ChoiceKind::External
                        }
                    } else {
                        // The sender of the first branch's first event takes the lead.
                        let lead = branches[0].first_labels().into_iter().next().map(|l| l.sender);
                        if lead.as_deref() == Some(role) {
                            ChoiceKind::Internal
                        } else {
                            ChoiceKind::External
                        }
                    }
                }
                Doctrine::Scribble => {
                    // Without an explicit decider, a sole first sender decides.
                    let senders: BTreeSet<String> =
                        branches.iter().flat_map(|b| b.first_labels()).map(|l| l.sender).collect();
                    let inferred = if senders.len() == 1 { senders.into_iter().next() } else { None };
                    scribble_kind(role, id, decider.clone().or(inferred).as_deref(), &groups)?
                }
            };
            LocalExpr::Choice { kind, id, mixed, branches: groups }
        }
    })
}

fn scribble_kind(role: &str, id: usize, decider: Option<&str>, groups: &[LocalBranch]) -> Result<ChoiceKind, MergeFailure> {
    let fail = |reason: String| MergeFailure { role: role.into(), choice: id, reason };
    if decider == Some(role) {
        for g in groups {
            if g.body.first_actions().iter().any(|a| a.2 == Direction::Recv) {
                return Err(fail(format!("{role} decides but a branch starts by receiving")));
            }
        }
        return Ok(ChoiceKind::Internal);
    }
    let mut seen = BTreeSet::new();
    for g in groups {
        let firsts = g.body.first_actions();
        if firsts.is_empty() || g.body.nullable() {
            return Err(fail("a branch gives no first message to tell it apart".into()));
        }
        for (peer, msg, dir) in firsts {
            if dir == Direction::Send {
                return Err(fail(format!("a branch starts with {role} sending {msg} before learning the decision")));
            }
            if !seen.insert((peer, msg.clone())) {
                return Err(fail(format!("branches share the first reception {msg}")));
            }
        }
    }
    Ok(ChoiceKind::External)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Send { peer: String, msg: String },
    Recv { peer: String, msg: String },
    Tau,
}

pub type Commit = (usize, BTreeSet<usize>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalStep {
    pub action: Action,
    /// Choices resolved by taking this step, with the global branches still possible.
    pub commits: Vec<Commit>,
    pub next: LocalExpr,
    /// Whether a recursion was entered to produce the step.
    pub unfolds: bool,
    pub payload: Option<Vec<Arg>>,
}

impl LocalExpr {
    pub fn send(peer: &str, msg: &str) -> Self {
        LocalExpr::Atom { peer: peer.into(), msg: msg.into(), dir: Direction::Send, payload: None }
    }

    pub fn recv(peer: &str, msg: &str) -> Self {
        LocalExpr::Atom { peer: peer.into(), msg: msg.into(), dir: Direction::Recv, payload: None }
    }

    pub fn has_atoms(&self) -> bool {
        match self {
            LocalExpr::Atom { .. } => true,
            LocalExpr::Seq(a, b) | LocalExpr::Shuffle(a, b) => a.has_atoms() || b.has_atoms(),
            LocalExpr::Choice { branches, .. } => branches.iter().any(|b| b.body.has_atoms()),
            LocalExpr::Rec { body, .. } => body.has_atoms(),
            LocalExpr::Var(_) | LocalExpr::Epsilon => false,
        }
    }

    /// All atoms, as (peer, msg, direction), in left-to-right order.
    pub fn atoms(&self) -> Vec<(String, String, Direction)> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<(String, String, Direction)>) {
        match self {
            LocalExpr::Atom { peer, msg, dir, .. } => out.push((peer.clone(), msg.clone(), *dir)),
            LocalExpr::Seq(a, b) | LocalExpr::Shuffle(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            LocalExpr::Choice { branches, .. } => branches.iter().for_each(|b| b.body.collect_atoms(out)),
            LocalExpr::Rec { body, .. } => body.collect_atoms(out),
            _ => {}
        }
    }

    /// Commitments made by finishing `self` without acting, or None if it cannot finish.
    pub fn skip(&self) -> Option<Vec<Commit>> {
        match self {
            LocalExpr::Epsilon => Some(Vec::new()),
            LocalExpr::Atom { .. } | LocalExpr::Var(_) => None,
            LocalExpr::Seq(a, b) | LocalExpr::Shuffle(a, b) => {
                let mut c = a.skip()?;
                c.extend(b.skip()?);
                Some(c)
            }
            LocalExpr::Rec { body, .. } => body.skip(),
            LocalExpr::Choice { id, branches, .. } => {
                let mut origins = BTreeSet::new();
                let mut inner = None;
                for b in branches {
                    if let Some(c) = b.body.skip() {
                        origins.extend(b.origins.iter().copied());
                        inner.get_or_insert(c);
                    }
                }
                let mut out = vec![(*id, origins)];
                out.extend(inner?);
                Some(out)
            }
        }
    }

    pub fn nullable(&self) -> bool {
        self.skip().is_some()
    }

    /// Distinct first communication actions, ignoring polarity.
    pub fn first_actions(&self) -> BTreeSet<(String, String, Direction)> {
        self.steps(false)
            .into_iter()
            .filter_map(|s| match s.action {
                Action::Send { peer, msg } => Some((peer, msg, Direction::Send)),
                Action::Recv { peer, msg } => Some((peer, msg, Direction::Recv)),
                Action::Tau => None,
            })
            .collect()
    }

    /// One-step successors. With `polarity`, internal choices are resolved by a silent
    /// step, external choices only by receptions and plain choices by either kind of
    /// communication. Without it every branch's first action is offered.
    pub fn steps(&self, polarity: bool) -> Vec<LocalStep> {
        match self {
            LocalExpr::Epsilon | LocalExpr::Var(_) => Vec::new(),
            LocalExpr::Atom { peer, msg, dir, payload } => {
                let action = match dir {
                    Direction::Send => Action::Send { peer: peer.clone(), msg: msg.clone() },
                    Direction::Recv => Action::Recv { peer: peer.clone(), msg: msg.clone() },
                };
                vec![LocalStep { action, commits: Vec::new(), next: LocalExpr::Epsilon, unfolds: false, payload: payload.clone() }]
            }
            LocalExpr::Seq(a, b) => {
                let mut out: Vec<LocalStep> = a
                    .steps(polarity)
                    .into_iter()
                    .map(|mut s| {
                        s.next = seq_smart(s.next, (**b).clone());
                        s
                    })
                    .collect();
                if let Some(c) = a.skip() {
                    for mut s in b.steps(polarity) {
                        let mut commits = c.clone();
                        commits.append(&mut s.commits);
                        s.commits = commits;
                        out.push(s);
                    }
                }
                out
            }
            LocalExpr::Shuffle(a, b) => {
                let mut out = Vec::new();
                for mut s in a.steps(polarity) {
                    s.next = shuffle_smart(s.next, (**b).clone());
                    out.push(s);
                }
                for mut s in b.steps(polarity) {
                    s.next = shuffle_smart((**a).clone(), s.next);
                    out.push(s);
                }
                out
            }
            LocalExpr::Rec { var, body } => {
                let unfolded = body.substitute(var, self);
                unfolded
                    .steps(polarity)
                    .into_iter()
                    .map(|mut s| {
                        s.unfolds = true;
                        s
                    })
                    .collect()
            }
            LocalExpr::Choice { kind, id, branches, .. } => {
                let mut out = Vec::new();
                for b in branches {
                    let commit = (*id, b.origins.clone());
                    if polarity && *kind == ChoiceKind::Internal {
                        out.push(LocalStep {
                            action: Action::Tau,
                            commits: vec![commit],
                            next: b.body.clone(),
                            unfolds: false,
                            payload: None,
                        });
                        continue;
                    }
                    for mut s in b.body.steps(polarity) {
                        let allowed = match (&s.action, polarity, kind) {
                            (Action::Tau, _, _) => false,
                            (_, false, _) => true,
                            (Action::Send { .. }, true, ChoiceKind::External) => false,
                            _ => true,
                        };
                        if allowed {
                            s.commits.insert(0, commit.clone());
                            out.push(s);
                        }
                    }
                }
                out
            }
        }
    }

    fn substitute(&self, var: &str, with: &LocalExpr) -> LocalExpr {
        match self {
            LocalExpr::Var(v) if v == var => with.clone(),
            LocalExpr::Seq(a, b) => LocalExpr::Seq(Box::new(a.substitute(var, with)), Box::new(b.substitute(var, with))),
            LocalExpr::Shuffle(a, b) => {
                LocalExpr::Shuffle(Box::new(a.substitute(var, with)), Box::new(b.substitute(var, with)))
            }
            LocalExpr::Choice { kind, id, mixed, branches } => LocalExpr::Choice {
                kind: *kind,
                id: *id,
                mixed: *mixed,
                branches: branches
                    .iter()
                    .map(|b| LocalBranch { origins: b.origins.clone(), body: b.body.substitute(var, with) })
                    .collect(),
            },
            LocalExpr::Rec { var: v, .. } if v == var => self.clone(),
            LocalExpr::Rec { var: v, body } => LocalExpr::Rec { var: v.clone(), body: Box::new(body.substitute(var, with)) },
            other => other.clone(),
        }
    }

    /// True when every recursion variable occurs in tail position of its binder.
    pub fn tail_recursive(&self) -> bool {
        fn check(e: &LocalExpr, bound: &BTreeSet<&str>, tail: bool) -> bool {
            match e {
                LocalExpr::Var(v) => tail || !bound.contains(v.as_str()),
                LocalExpr::Seq(a, b) => check(a, bound, false) && check(b, bound, tail),
                LocalExpr::Shuffle(a, b) => check(a, bound, false) && check(b, bound, false),
                LocalExpr::Choice { branches, .. } => branches.iter().all(|b| check(&b.body, bound, tail)),
                LocalExpr::Rec { var, body } => {
                    let mut inner = bound.clone();
                    inner.insert(var);
                    check(body, &inner, true)
                }
                _ => true,
            }
        }
        check(self, &BTreeSet::new(), true)
    }

    /// Replaces each recursion by `bound` copies of its body; deeper calls end.
    pub fn unroll(&self, bound: usize) -> LocalExpr {
        match self {
            LocalExpr::Rec { var, body } => {
                let mut out = LocalExpr::Epsilon;
                for _ in 0..bound {
                    out = body.substitute(var, &out);
                }
                out.unroll(bound)
            }
            LocalExpr::Var(_) => LocalExpr::Epsilon,
            LocalExpr::Seq(a, b) => seq_smart(a.unroll(bound), b.unroll(bound)),
            LocalExpr::Shuffle(a, b) => shuffle_smart(a.unroll(bound), b.unroll(bound)),
            LocalExpr::Choice { kind, id, mixed, branches } => LocalExpr::Choice {
                kind: *kind,
                id: *id,
                mixed: *mixed,
                branches: branches
                    .iter()
                    .map(|b| LocalBranch { origins: b.origins.clone(), body: b.body.unroll(bound) })
                    .collect(),
            },
            other => other.clone(),
        }
    }
}

// Precedence: shuffle 0, choice 1, sequence 2, primary 4.
fn show(e: &LocalExpr, ctx: u8) -> String {
    let (own, text) = match e {
        LocalExpr::Atom { peer, msg, dir, payload } => {
            let mark = if *dir == Direction::Send { '!' } else { '?' };
            let args = match payload {
                Some(a) if !a.is_empty() => {
                    let names: Vec<String> =
                        a.iter().map(|x| x.name.clone().or_else(|| x.ty.clone()).unwrap_or_default()).collect();
                    format!("({})", names.join(", "))
                }
                _ => String::new(),
            };
            (4, format!("{peer}{mark}{msg}{args}"))
        }
        LocalExpr::Epsilon => (4, "eps".into()),
        LocalExpr::Var(v) => (4, v.clone()),
        LocalExpr::Seq(a, b) => (2, format!("{} ; {}", show(a, 3), show(b, 2))),
        LocalExpr::Shuffle(a, b) => (0, format!("{} /\\ {}", show(a, 1), show(b, 0))),
        LocalExpr::Choice { kind, branches, .. } => {
            let op = match kind {
                ChoiceKind::Internal => " (+) ",
                ChoiceKind::External => " + ",
                ChoiceKind::Plain => " \\/ ",
            };
            let parts: Vec<String> = branches.iter().map(|b| show(&b.body, 2)).collect();
            (1, parts.join(op))
        }
        LocalExpr::Rec { var, body } => (4, format!("({var} = {})", show(body, 0))),
    };
    if own < ctx {
        format!("({text})")
    } else {
        text
    }
}

impl fmt::Display for LocalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LocalExpr::Rec { var, body } => write!(f, "{var} = {}", show(body, 0)),
            other => f.write_str(&show(other, 0)),
        }
    }
}

/// Message name to argument types, resolving names through their first typed use.
pub fn payload_signatures(e: &CfpExpr) -> BTreeMap<String, Vec<String>> {
    let pays = e.payloads();
    let mut types: BTreeMap<String, String> = BTreeMap::new();
    for args in pays.values() {
        for a in args {
            if let (Some(n), Some(t)) = (&a.name, &a.ty) {
                types.entry(n.clone()).or_insert_with(|| t.clone());
            }
        }
    }
    pays.into_iter()
        .map(|(m, args)| {
            let sig = args
                .iter()
                .map(|a| a.ty.clone().or_else(|| a.name.as_ref().and_then(|n| types.get(n).cloned())).unwrap_or_else(|| "_".into()))
                .collect();
            (m, sig)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FsmLabel {
    pub peer: String,
    pub dir: Direction,
    pub msg: String,
    pub sig: Vec<String>,
}

impl fmt::Display for FsmLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.dir == Direction::Send { '!' } else { '?' };
        write!(f, "{}{}{}({})", self.peer, mark, self.msg, self.sig.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeLevelFsm {
    pub states: usize,
    pub initial: usize,
    pub finals: BTreeSet<usize>,
    pub transitions: Vec<(usize, FsmLabel, usize)>,
}

const FSM_STATE_LIMIT: usize = 10_000;

/// Deterministic machine over (peer, direction, message, argument types). Parameter
/// names and values play no part in the labels.
pub fn extract_fsm(l: &LocalExpr, payload_sigs: &BTreeMap<String, Vec<String>>) -> TypeLevelFsm {
    let l = if l.tail_recursive() { l.clone() } else { l.unroll(crate::cfp::DEFAULT_BOUND) };
    let start: BTreeSet<LocalExpr> = BTreeSet::from([l]);
    let mut ids: BTreeMap<BTreeSet<LocalExpr>, usize> = BTreeMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([start]);
    let mut finals = BTreeSet::new();
    let mut transitions = Vec::new();
    while let Some(set) = queue.pop_front() {
        let here = ids[&set];
        if set.iter().any(|e| e.nullable()) {
            finals.insert(here);
        }
        let mut by_label: BTreeMap<FsmLabel, BTreeSet<LocalExpr>> = BTreeMap::new();
        for e in &set {
            for s in e.steps(false) {
                let (peer, msg, dir) = match s.action {
                    Action::Send { peer, msg } => (peer, msg, Direction::Send),
                    Action::Recv { peer, msg } => (peer, msg, Direction::Recv),
                    Action::Tau => continue,
                };
                let sig = payload_sigs.get(&msg).cloned().unwrap_or_default();
                by_label.entry(FsmLabel { peer, dir, msg, sig }).or_default().insert(s.next);
            }
        }
        for (label, next) in by_label {
            let n = ids.len();
            let to = match ids.get(&next) {
                Some(&i) => i,
                None if n < FSM_STATE_LIMIT => {
                    ids.insert(next.clone(), n);
                    queue.push_back(next);
                    n
                }
                None => continue,
            };
            transitions.push((here, label, to));
        }
    }
    TypeLevelFsm { states: ids.len(), initial: 0, finals, transitions }
}

impl TypeLevelFsm {
    /// Follows the transition matching peer, direction and message name.
    pub fn step(&self, from: usize, peer: &str, dir: Direction, msg: &str) -> Option<usize> {
        self.transitions
            .iter()
            .find(|(s, l, _)| *s == from && l.peer == peer && l.dir == dir && l.msg == msg)
            .map(|t| t.2)
    }

    /// The state reached after `events`, or None if some event has no transition.
    pub fn run<'a>(&self, events: impl IntoIterator<Item = (&'a str, Direction, &'a str)>) -> Option<usize> {
        let mut s = self.initial;
        for (peer, dir, msg) in events {
            s = self.step(s, peer, dir, msg)?;
        }
        Some(s)
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph \"{name}\" {{\n  rankdir=LR;\n");
        for s in 0..self.states {
            let shape = if self.finals.contains(&s) { "doublecircle" } else { "circle" };
            out.push_str(&format!("  s{s} [shape={shape}];\n"));
        }
        out.push_str(&format!("  init [shape=point];\n  init -> s{};\n", self.initial));
        for (a, l, b) in &self.transitions {
            out.push_str(&format!("  s{a} -> s{b} [label=\"{l}\"];\n"));
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfp::{eliminate_shuffle, parse_scribble, parse_scribble_unchecked, parse_trace};

    fn purchase() -> CfpExpr {
        parse_trace(include_str!("../fixtures/purchase.trace")).unwrap()
    }

    #[test]
    fn purchase_trace_c_polarity() {
        let e = purchase();
        assert_eq!(
            project_trace_c(&e, "Buyer").to_string(),
            "Seller!Request ; Seller?Offer ; (Seller!Accept ; Seller?Deliver ; Seller!Payment (+) Seller!Reject)"
        );
        assert_eq!(
            project_trace_c(&e, "Seller").to_string(),
            "Buyer?Request ; Buyer!Offer ; (Buyer?Accept ; Buyer!Deliver ; Buyer?Payment + Buyer?Reject)"
        );
    }

    #[test]
    fn purchase_trace_f_keeps_plain_choice() {
        let s = project_trace_f(&purchase(), "Seller").to_string();
        assert_eq!(s, "Buyer?Request ; Buyer!Offer ; (Buyer?Accept ; Buyer!Deliver ; Buyer?Payment \\/ Buyer?Reject)");
    }

    #[test]
    fn scribble_matches_trace_c_on_purchase() {
        let p = parse_scribble(include_str!("../fixtures/purchase.scr")).unwrap();
        for r in ["Buyer", "Seller"] {
            assert_eq!(project_scribble(&p.body, r).unwrap(), project_trace_c(&purchase(), r));
        }
    }

    #[test]
    fn uninvolved_role_projects_to_nothing() {
        assert_eq!(project_trace_c(&purchase(), "Bank"), LocalExpr::Epsilon);
    }

    #[test]
    fn flexible_purchase_choice_polarity() {
        let e = eliminate_shuffle(&parse_trace(include_str!("../fixtures/flexible_purchase.trace")).unwrap());
        let buyer = project_trace_c(&e, "Buyer");
        let seller = project_trace_c(&e, "Seller");
        assert!(buyer.to_string().contains("(+)"), "{buyer}");
        assert!(seller.to_string().contains(" + "), "{seller}");
        assert!(matches!(&seller, LocalExpr::Seq(_, b) if matches!(**b, LocalExpr::Choice { mixed: true, .. })));
    }

    #[test]
    fn scribble_projection_rejects_unlearnable_choice() {
        let p = parse_scribble_unchecked(include_str!("../fixtures/flexible_purchase.scr")).unwrap();
        assert!(project_scribble(&p.body, "Seller").is_err());
        assert!(project_scribble(&p.body, "Buyer").is_err());
    }

    #[test]
    fn indirect_payment_seller() {
        let p = parse_scribble(include_str!("../fixtures/indirect_payment.scr")).unwrap();
        let s = project_scribble(&p.body, "Seller").unwrap();
        assert_eq!(s.to_string(), "Buyer!Offer ; Buyer?Accept ; Bank?Transfer");
    }

    #[test]
    fn tail_recursion_becomes_a_loop() {
        let p = parse_scribble(include_str!("../fixtures/book_journey.scr")).unwrap();
        let c = project_scribble(&p.body, "C").unwrap();
        let fsm = extract_fsm(&c, &payload_signatures(&p.body));
        assert_eq!(fsm.states, 2);
        let labels: Vec<String> = fsm.transitions.iter().map(|t| t.1.to_string()).collect();
        assert_eq!(labels, ["A!query(String)", "A?price(Int)"]);
        assert!(fsm.to_dot("C").contains("s1 -> s0"));
    }

    #[test]
    fn type_level_machine_ignores_values() {
        let p = parse_scribble(include_str!("../fixtures/alt_pricing.scr")).unwrap();
        let s = project_scribble(&p.body, "Seller").unwrap();
        let fsm = extract_fsm(&s, &payload_signatures(&p.body));
        let run = [("Buyer", Direction::Recv, "Request"), ("Buyer", Direction::Send, "Offer")];
        assert_eq!(fsm.run(run), Some(fsm.initial));
        let sig = &fsm.transitions.iter().find(|t| t.1.msg == "Offer").unwrap().1.sig;
        assert_eq!(sig, &["String", "String", "String"]);
    }

    #[test]
    fn epsilon_machine_has_one_accepting_state() {
        let fsm = extract_fsm(&LocalExpr::Epsilon, &BTreeMap::new());
        assert_eq!((fsm.states, fsm.finals.len(), fsm.transitions.len()), (1, 1, 0));
    }
}
