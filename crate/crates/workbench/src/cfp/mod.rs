//! Control-flow protocols: the expression tree shared by the trace languages and the
//! Scribble subset, plus unrolling, shuffle elimination and bounded trace enumeration.

/// Default recursion unroll bound.
pub const DEFAULT_BOUND: usize = 2;

mod scribble;
mod trace_syntax;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use scribble::{parse_scribble, parse_scribble_unchecked, print_scribble, validate_scribble, RoleDecl, ScribbleError, ScribbleProtocol};
pub use trace_syntax::{parse_trace, print_trace, trace_diagnostics, TraceError};

/// A communication event `sender -> receiver : msg`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    pub sender: String,
    pub receiver: String,
    pub msg: String,
}

impl Label {
    pub fn new(sender: &str, receiver: &str, msg: &str) -> Self {
        Label { sender: sender.into(), receiver: receiver.into(), msg: msg.into() }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}:{}", self.sender, self.receiver, self.msg)
    }
}

/// One payload slot. Trace syntax gives names, Scribble may give a type, a name, or both.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Arg {
    pub name: Option<String>,
    pub ty: Option<String>,
}

impl Arg {
    pub fn named(name: &str) -> Self {
        Arg { name: Some(name.into()), ty: None }
    }
    pub fn typed(name: &str, ty: &str) -> Self {
        Arg { name: Some(name.into()), ty: Some(ty.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CfpExpr {
    Atom { label: Label, payload: Option<Vec<Arg>> },
    Seq(Box<CfpExpr>, Box<CfpExpr>),
    Choice { branches: Vec<CfpExpr>, decider: Option<String> },
    Shuffle(Box<CfpExpr>, Box<CfpExpr>),
    Rec { var: String, body: Box<CfpExpr> },
    Var(String),
    Epsilon,
}

/// A finite run of a protocol, as the list of its communication events.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GlobalTrace {
    pub events: Vec<Label>,
}

impl fmt::Display for GlobalTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.events.is_empty() {
            return f.write_str("eps");
        }
        let parts: Vec<String> = self.events.iter().map(|l| l.to_string()).collect();
        f.write_str(&parts.join(" . "))
    }
}

impl CfpExpr {
    pub fn atom(sender: &str, receiver: &str, msg: &str) -> Self {
        CfpExpr::Atom { label: Label::new(sender, receiver, msg), payload: None }
    }

    pub fn seq(a: CfpExpr, b: CfpExpr) -> Self {
        CfpExpr::Seq(Box::new(a), Box::new(b))
    }

    /// Right-nested sequence of the given parts; `Epsilon` when empty.
    pub fn seq_all(parts: Vec<CfpExpr>) -> Self {
        let mut it = parts.into_iter().rev();
        match it.next() {
            None => CfpExpr::Epsilon,
            Some(last) => it.fold(last, |acc, e| CfpExpr::seq(e, acc)),
        }
    }

    pub fn choice(branches: Vec<CfpExpr>) -> Self {
        CfpExpr::Choice { branches, decider: None }
    }

    pub fn shuffle(a: CfpExpr, b: CfpExpr) -> Self {
        CfpExpr::Shuffle(Box::new(a), Box::new(b))
    }

    /// Kleene star, encoded as `rec v. (eps \/ body ; v)`. The variable name records the
    /// star nesting height so that equal stars get equal names.
    pub fn star(body: CfpExpr) -> Self {
        let var = format!("*{}", body.star_height() + 1);
        CfpExpr::Rec {
            var: var.clone(),
            body: Box::new(CfpExpr::choice(vec![CfpExpr::Epsilon, CfpExpr::seq(body, CfpExpr::Var(var))])),
        }
    }

    /// The operand of a star-shaped recursion, if `self` is one.
    pub fn star_operand(&self) -> Option<&CfpExpr> {
        if let CfpExpr::Rec { var, body } = self {
            if !var.starts_with('*') {
                return None;
            }
            if let CfpExpr::Choice { branches, decider: None } = body.as_ref() {
                if let [CfpExpr::Epsilon, CfpExpr::Seq(x, v)] = branches.as_slice() {
                    if matches!(v.as_ref(), CfpExpr::Var(w) if w == var) {
                        return Some(x);
                    }
                }
            }
        }
        None
    }

    fn star_height(&self) -> usize {
        match self {
            CfpExpr::Atom { .. } | CfpExpr::Var(_) | CfpExpr::Epsilon => 0,
            CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => a.star_height().max(b.star_height()),
            CfpExpr::Choice { branches, .. } => branches.iter().map(|b| b.star_height()).max().unwrap_or(0),
            CfpExpr::Rec { body, .. } => match self.star_operand() {
                Some(x) => x.star_height() + 1,
                None => body.star_height(),
            },
        }
    }

    /// Every label in the expression, in left-to-right order.
    pub fn labels(&self) -> Vec<&Label> {
        let mut out = Vec::new();
        self.walk_labels(&mut out);
        out
    }

    fn walk_labels<'a>(&'a self, out: &mut Vec<&'a Label>) {
        match self {
            CfpExpr::Atom { label, .. } => out.push(label),
            CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => {
                a.walk_labels(out);
                b.walk_labels(out);
            }
            CfpExpr::Choice { branches, .. } => branches.iter().for_each(|b| b.walk_labels(out)),
            CfpExpr::Rec { body, .. } => body.walk_labels(out),
            CfpExpr::Var(_) | CfpExpr::Epsilon => {}
        }
    }

    /// Roles mentioned by any event, sorted.
    pub fn roles(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for l in self.labels() {
            out.insert(l.sender.clone());
            out.insert(l.receiver.clone());
        }
        out
    }

    /// Declared payload per message name (first occurrence wins).
    pub fn payloads(&self) -> BTreeMap<String, Vec<Arg>> {
        let mut out = BTreeMap::new();
        self.walk_payloads(&mut out);
        out
    }

    fn walk_payloads(&self, out: &mut BTreeMap<String, Vec<Arg>>) {
        match self {
            CfpExpr::Atom { label, payload } => {
                if let Some(args) = payload {
                    out.entry(label.msg.clone()).or_insert_with(|| args.clone());
                }
            }
            CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => {
                a.walk_payloads(out);
                b.walk_payloads(out);
            }
            CfpExpr::Choice { branches, .. } => branches.iter().for_each(|b| b.walk_payloads(out)),
            CfpExpr::Rec { body, .. } => body.walk_payloads(out),
            CfpExpr::Var(_) | CfpExpr::Epsilon => {}
        }
    }

    pub fn has_recursion(&self) -> bool {
        match self {
            CfpExpr::Rec { .. } | CfpExpr::Var(_) => true,
            CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => a.has_recursion() || b.has_recursion(),
            CfpExpr::Choice { branches, .. } => branches.iter().any(|b| b.has_recursion()),
            CfpExpr::Atom { .. } | CfpExpr::Epsilon => false,
        }
    }

    pub fn has_shuffle(&self) -> bool {
        match self {
            CfpExpr::Shuffle(..) => true,
            CfpExpr::Seq(a, b) => a.has_shuffle() || b.has_shuffle(),
            CfpExpr::Choice { branches, .. } => branches.iter().any(|b| b.has_shuffle()),
            CfpExpr::Rec { body, .. } => body.has_shuffle(),
            CfpExpr::Atom { .. } | CfpExpr::Var(_) | CfpExpr::Epsilon => false,
        }
    }

    /// Whether the empty trace belongs to the expression (variables count as empty).
    pub fn nullable(&self) -> bool {
        match self {
            CfpExpr::Atom { .. } => false,
            CfpExpr::Epsilon | CfpExpr::Var(_) => true,
            CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => a.nullable() && b.nullable(),
            CfpExpr::Choice { branches, .. } => branches.iter().any(|b| b.nullable()),
            CfpExpr::Rec { body, .. } => body.nullable(),
        }
    }

    /// Labels that can occur first.
    pub fn first_labels(&self) -> BTreeSet<Label> {
        match self {
            CfpExpr::Atom { label, .. } => BTreeSet::from([label.clone()]),
            CfpExpr::Epsilon | CfpExpr::Var(_) => BTreeSet::new(),
            CfpExpr::Seq(a, b) => {
                let mut s = a.first_labels();
                if a.nullable() {
                    s.extend(b.first_labels());
                }
                s
            }
            CfpExpr::Shuffle(a, b) => {
                let mut s = a.first_labels();
                s.extend(b.first_labels());
                s
            }
            CfpExpr::Choice { branches, .. } => branches.iter().flat_map(|b| b.first_labels()).collect(),
            CfpExpr::Rec { body, .. } => body.first_labels(),
        }
    }

    /// Removes choice deciders and payloads, leaving only the control structure.
    pub fn strip_annotations(&self) -> CfpExpr {
        match self {
            CfpExpr::Atom { label, .. } => CfpExpr::Atom { label: label.clone(), payload: None },
            CfpExpr::Seq(a, b) => CfpExpr::seq(a.strip_annotations(), b.strip_annotations()),
            CfpExpr::Shuffle(a, b) => CfpExpr::shuffle(a.strip_annotations(), b.strip_annotations()),
            CfpExpr::Choice { branches, .. } => {
                CfpExpr::choice(branches.iter().map(|b| b.strip_annotations()).collect())
            }
            CfpExpr::Rec { var, body } => CfpExpr::Rec { var: var.clone(), body: Box::new(body.strip_annotations()) },
            other => other.clone(),
        }
    }

    fn substitute(&self, var: &str, with: &CfpExpr) -> CfpExpr {
        match self {
            CfpExpr::Var(v) if v == var => with.clone(),
            CfpExpr::Rec { var: v, .. } if v == var => self.clone(),
            CfpExpr::Rec { var: v, body } => CfpExpr::Rec { var: v.clone(), body: Box::new(body.substitute(var, with)) },
            CfpExpr::Seq(a, b) => CfpExpr::seq(a.substitute(var, with), b.substitute(var, with)),
            CfpExpr::Shuffle(a, b) => CfpExpr::shuffle(a.substitute(var, with), b.substitute(var, with)),
            CfpExpr::Choice { branches, decider } => CfpExpr::Choice {
                branches: branches.iter().map(|b| b.substitute(var, with)).collect(),
                decider: decider.clone(),
            },
            other => other.clone(),
        }
    }
}

/// Replaces every recursion by at most `bound` copies of its body; the variable left
/// after the last copy becomes `Epsilon`.
pub fn unroll(e: &CfpExpr, bound: usize) -> CfpExpr {
    match e {
        CfpExpr::Rec { var, body } => {
            let mut acc = CfpExpr::Epsilon;
            for _ in 0..bound {
                acc = unroll(&body.substitute(var, &acc), bound);
            }
            simplify(&acc)
        }
        CfpExpr::Seq(a, b) => CfpExpr::seq(unroll(a, bound), unroll(b, bound)),
        CfpExpr::Shuffle(a, b) => CfpExpr::shuffle(unroll(a, bound), unroll(b, bound)),
        CfpExpr::Choice { branches, decider } => CfpExpr::Choice {
            branches: branches.iter().map(|b| unroll(b, bound)).collect(),
            decider: decider.clone(),
        },
        CfpExpr::Var(_) => CfpExpr::Epsilon,
        other => other.clone(),
    }
}

/// Drops `Epsilon` units from sequences and shuffles.
pub fn simplify(e: &CfpExpr) -> CfpExpr {
    match e {
        CfpExpr::Seq(a, b) => seq_smart(simplify(a), simplify(b)),
        CfpExpr::Shuffle(a, b) => match (simplify(a), simplify(b)) {
            (CfpExpr::Epsilon, y) => y,
            (x, CfpExpr::Epsilon) => x,
            (x, y) => CfpExpr::shuffle(x, y),
        },
        CfpExpr::Choice { branches, decider } => CfpExpr::Choice {
            branches: branches.iter().map(simplify).collect(),
            decider: decider.clone(),
        },
        CfpExpr::Rec { var, body } => CfpExpr::Rec { var: var.clone(), body: Box::new(simplify(body)) },
        other => other.clone(),
    }
}

fn seq_smart(a: CfpExpr, b: CfpExpr) -> CfpExpr {
    match (a, b) {
        (CfpExpr::Epsilon, y) => y,
        (x, CfpExpr::Epsilon) => x,
        (CfpExpr::Seq(x1, x2), y) => CfpExpr::seq(*x1, seq_smart(*x2, y)),
        (x, y) => CfpExpr::seq(x, y),
    }
}

/// First-step decomposition of a shuffle-free, recursion-free expression:
/// whether it is nullable, and each (first atom, continuation) pair.
fn heads(e: &CfpExpr) -> (bool, Vec<(CfpExpr, CfpExpr)>) {
    match e {
        CfpExpr::Atom { .. } => (false, vec![(e.clone(), CfpExpr::Epsilon)]),
        CfpExpr::Epsilon | CfpExpr::Var(_) => (true, vec![]),
        CfpExpr::Seq(a, b) => {
            let (na, ha) = heads(a);
            let mut out: Vec<(CfpExpr, CfpExpr)> =
                ha.into_iter().map(|(x, rest)| (x, seq_smart(rest, (**b).clone()))).collect();
            let mut nullable = false;
            if na {
                let (nb, hb) = heads(b);
                out.extend(hb);
                nullable = nb;
            }
            (nullable, out)
        }
        CfpExpr::Choice { branches, .. } => {
            let mut nullable = false;
            let mut out = Vec::new();
            for b in branches {
                let (n, h) = heads(b);
                nullable |= n;
                out.extend(h);
            }
            (nullable, out)
        }
        CfpExpr::Shuffle(..) | CfpExpr::Rec { .. } => {
            unreachable!("heads is only taken of shuffle-free, recursion-free expressions")
        }
    }
}

fn choice_smart(mut branches: Vec<CfpExpr>) -> CfpExpr {
    let mut seen = BTreeSet::new();
    branches.retain(|b| seen.insert(b.clone()));
    if branches.len() == 1 {
        branches.pop().unwrap()
    } else {
        CfpExpr::choice(branches)
    }
}

/// Rewrites every shuffle into a choice over its interleavings. Shuffles whose operands
/// still contain recursion are left in place; unroll first to remove them all.
pub fn eliminate_shuffle(e: &CfpExpr) -> CfpExpr {
    match e {
        CfpExpr::Shuffle(a, b) => {
            let (x, y) = (eliminate_shuffle(a), eliminate_shuffle(b));
            if x.has_recursion() || y.has_recursion() {
                return CfpExpr::shuffle(x, y);
            }
            interleave(&x, &y)
        }
        CfpExpr::Seq(a, b) => CfpExpr::seq(eliminate_shuffle(a), eliminate_shuffle(b)),
        CfpExpr::Choice { branches, decider } => CfpExpr::Choice {
            branches: branches.iter().map(eliminate_shuffle).collect(),
            decider: decider.clone(),
        },
        CfpExpr::Rec { var, body } => CfpExpr::Rec { var: var.clone(), body: Box::new(eliminate_shuffle(body)) },
        other => other.clone(),
    }
}

fn interleave(x: &CfpExpr, y: &CfpExpr) -> CfpExpr {
    if *x == CfpExpr::Epsilon {
        return y.clone();
    }
    if *y == CfpExpr::Epsilon {
        return x.clone();
    }
    let (nx, hx) = heads(x);
    let (ny, hy) = heads(y);
    let mut branches = Vec::new();
    for (a, rest) in hx {
        branches.push(seq_smart(a, interleave(&rest, y)));
    }
    for (b, rest) in hy {
        branches.push(seq_smart(b, interleave(x, &rest)));
    }
    if nx && ny {
        branches.insert(0, CfpExpr::Epsilon);
    }
    if branches.is_empty() {
        return CfpExpr::Epsilon;
    }
    choice_smart(branches)
}

/// The traces of `e` with every recursion unrolled at most `bound` times, sorted.
pub fn enumerate_traces(e: &CfpExpr, bound: usize) -> BTreeSet<GlobalTrace> {
    let flat = unroll(e, bound);
    traces_of(&flat)
        .into_iter()
        .map(|events| GlobalTrace { events: events.into_iter().cloned().collect() })
        .collect()
}

fn traces_of(e: &CfpExpr) -> BTreeSet<Vec<&Label>> {
    match e {
        CfpExpr::Atom { label, .. } => BTreeSet::from([vec![label]]),
        CfpExpr::Epsilon | CfpExpr::Var(_) => BTreeSet::from([vec![]]),
        CfpExpr::Seq(a, b) => {
            let (ta, tb) = (traces_of(a), traces_of(b));
            let mut out = BTreeSet::new();
            for x in &ta {
                for y in &tb {
                    let mut t = x.clone();
                    t.extend(y.iter().copied());
                    out.insert(t);
                }
            }
            out
        }
        CfpExpr::Choice { branches, .. } => branches.iter().flat_map(traces_of).collect(),
        CfpExpr::Shuffle(a, b) => {
            let (ta, tb) = (traces_of(a), traces_of(b));
            let mut out = BTreeSet::new();
            for x in &ta {
                for y in &tb {
                    shuffles(x, y, &mut Vec::new(), &mut out);
                }
            }
            out
        }
        CfpExpr::Rec { body, .. } => traces_of(body),
    }
}

fn shuffles<'a>(x: &[&'a Label], y: &[&'a Label], prefix: &mut Vec<&'a Label>, out: &mut BTreeSet<Vec<&'a Label>>) {
    if x.is_empty() || y.is_empty() {
        let mut t = prefix.clone();
        t.extend_from_slice(x);
        t.extend_from_slice(y);
        out.insert(t);
        return;
    }
    prefix.push(x[0]);
    shuffles(&x[1..], y, prefix, out);
    prefix.pop();
    prefix.push(y[0]);
    shuffles(x, &y[1..], prefix, out);
    prefix.pop();
}
