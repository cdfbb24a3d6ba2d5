//! Flat HAPN machines: guarded transitions over a shared variable store.
//!
//! ```text
//! machine FlexiblePurchase;
//! var paid;
//! state s1;
//! state s2 final;
//! trans s1 -> s1 on Buyer->Seller:Payment() when unbound(paid) do bind(paid, T);
//! trans s1 -> s2 when bound(paid);
//! ```

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enactment::MessageInstance;
use crate::lex::{tokenize, Cursor, SyntaxError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Lit(String),
    /// `arg.name`: the value the triggering message carries for `name`.
    Arg(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HapnAction {
    Bind(String, Term),
    Unbind(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GuardAtom {
    Bound(String),
    Unbound(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HapnLabel {
    pub sender: String,
    pub receiver: String,
    pub msg: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub label: Option<HapnLabel>,
    /// Conjunction; empty means `true`.
    pub guard: Vec<GuardAtom>,
    pub actions: Vec<HapnAction>,
}

impl Transition {
    pub fn new(from: &str, to: &str) -> Self {
        Transition { from: from.into(), to: to.into(), label: None, guard: Vec::new(), actions: Vec::new() }
    }

    pub fn on(mut self, sender: &str, receiver: &str, msg: &str, args: &[&str]) -> Self {
        self.label = Some(HapnLabel {
            sender: sender.into(),
            receiver: receiver.into(),
            msg: msg.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
        });
        self
    }

    pub fn when_bound(mut self, var: &str) -> Self {
        self.guard.push(GuardAtom::Bound(var.into()));
        self
    }

    pub fn when_unbound(mut self, var: &str) -> Self {
        self.guard.push(GuardAtom::Unbound(var.into()));
        self
    }

    pub fn bind(mut self, var: &str, term: Term) -> Self {
        self.actions.push(HapnAction::Bind(var.into(), term));
        self
    }

    pub fn unbind(mut self, var: &str) -> Self {
        self.actions.push(HapnAction::Unbind(var.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HapnMachine {
    pub name: String,
    pub states: Vec<String>,
    pub initial: String,
    pub finals: BTreeSet<String>,
    pub variables: Vec<String>,
    pub transitions: Vec<Transition>,
}

impl HapnMachine {
    pub fn new(name: &str, initial: &str) -> Self {
        HapnMachine {
            name: name.into(),
            states: vec![initial.into()],
            initial: initial.into(),
            finals: BTreeSet::new(),
            variables: Vec::new(),
            transitions: Vec::new(),
        }
    }

    pub fn state(mut self, s: &str) -> Self {
        if !self.states.iter().any(|x| x == s) {
            self.states.push(s.into());
        }
        self
    }

    pub fn final_state(mut self, s: &str) -> Self {
        self = self.state(s);
        self.finals.insert(s.into());
        self
    }

    pub fn var(mut self, v: &str) -> Self {
        self.variables.push(v.into());
        self
    }

    pub fn trans(mut self, t: Transition) -> Self {
        self.transitions.push(t);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HapnConfigState {
    pub state: String,
    pub store: BTreeMap<String, String>,
}

impl HapnConfigState {
    pub fn initial(m: &HapnMachine) -> Self {
        HapnConfigState { state: m.initial.clone(), store: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no transition from `{state}` on {event}")]
pub struct NoTransition {
    pub state: String,
    pub event: String,
}

fn label_matches(label: &Option<HapnLabel>, ev: Option<&MessageInstance>) -> bool {
    match (label, ev) {
        (None, None) => true,
        (Some(l), Some(m)) => l.sender == m.sender && l.receiver == m.receiver && l.msg == m.schema,
        _ => false,
    }
}

fn guard_holds(guard: &[GuardAtom], store: &BTreeMap<String, String>) -> bool {
    guard.iter().all(|g| match g {
        GuardAtom::Bound(x) => store.contains_key(x),
        GuardAtom::Unbound(x) => !store.contains_key(x),
    })
}

/// A store update that overwrote a bound variable with a different value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rebinding {
    pub var: String,
    pub old: String,
    pub new: String,
}

fn fire(
    t: &Transition,
    c: &HapnConfigState,
    ev: Option<&MessageInstance>,
) -> Option<(HapnConfigState, Option<Rebinding>)> {
    let mut store = c.store.clone();
    let mut clash = None;
    for a in &t.actions {
        match a {
            HapnAction::Bind(x, term) => {
                let v = match term {
                    Term::Lit(s) => s.clone(),
                    Term::Arg(n) => ev?.bindings.get(n)?.clone(),
                };
                if let Some(old) = store.get(x) {
                    if *old != v && clash.is_none() {
                        clash = Some(Rebinding { var: x.clone(), old: old.clone(), new: v.clone() });
                    }
                }
                store.insert(x.clone(), v);
            }
            HapnAction::Unbind(x) => {
                store.remove(x);
            }
        }
    }
    Some((HapnConfigState { state: t.to.clone(), store }, clash))
}

fn successors(
    c: &HapnConfigState,
    m: &HapnMachine,
    ev: Option<&MessageInstance>,
) -> Vec<(HapnConfigState, Option<Rebinding>)> {
    m.transitions
        .iter()
        .filter(|t| t.from == c.state && label_matches(&t.label, ev) && guard_holds(&t.guard, &c.store))
        .filter_map(|t| fire(t, c, ev))
        .collect()
}

/// Successor configurations on `ev`, or on a silent step when `ev` is None.
pub fn step_hapn(
    c: &HapnConfigState,
    m: &HapnMachine,
    ev: Option<&MessageInstance>,
) -> Result<BTreeSet<HapnConfigState>, NoTransition> {
    let out: BTreeSet<HapnConfigState> = successors(c, m, ev).into_iter().map(|p| p.0).collect();
    if out.is_empty() {
        let event = ev.map(|e| e.to_string()).unwrap_or_else(|| "a silent step".into());
        return Err(NoTransition { state: c.state.clone(), event });
    }
    Ok(out)
}

// Each run carries the first rebinding it made, if any.
type Run = (HapnConfigState, Option<Rebinding>);

fn closure(m: &HapnMachine, runs: BTreeSet<Run>) -> BTreeSet<Run> {
    let mut seen = runs.clone();
    let mut queue: VecDeque<Run> = runs.into_iter().collect();
    while let Some((c, clash)) = queue.pop_front() {
        for (n, r) in successors(&c, m, None) {
            let run = (n, clash.clone().or(r));
            if seen.insert(run.clone()) {
                queue.push_back(run);
            }
        }
    }
    seen
}

fn runs(m: &HapnMachine, events: &[MessageInstance]) -> BTreeSet<Run> {
    let mut current = closure(m, BTreeSet::from([(HapnConfigState::initial(m), None)]));
    for ev in events {
        let mut next = BTreeSet::new();
        for (c, clash) in &current {
            for (n, r) in successors(c, m, Some(ev)) {
                next.insert((n, clash.clone().or(r)));
            }
        }
        current = closure(m, next);
        if current.is_empty() {
            break;
        }
    }
    current
}

/// Whether some run over `events`, with silent steps in between, ends in a final state.
pub fn accepts(m: &HapnMachine, events: &[MessageInstance]) -> bool {
    runs(m, events).iter().any(|(c, _)| m.finals.contains(&c.state))
}

/// Whether `events` can be followed at all, final state or not.
pub fn accepts_prefix(m: &HapnMachine, events: &[MessageInstance]) -> bool {
    !runs(m, events).is_empty()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HapnIntegrityError {
    #[error("`{}` rebound from `{}` to `{}`", .0.var, .0.old, .0.new)]
    Conflict(Rebinding),
    #[error("the machine cannot follow the enactment")]
    NoRun,
}

/// Ok when some run over `events` never rebinds a bound variable to a new value.
pub fn hapn_integrity_check(m: &HapnMachine, events: &[MessageInstance]) -> Result<(), HapnIntegrityError> {
    let all = runs(m, events);
    if all.is_empty() {
        return Err(HapnIntegrityError::NoRun);
    }
    if all.iter().any(|(_, r)| r.is_none()) {
        return Ok(());
    }
    Err(HapnIntegrityError::Conflict(all.into_iter().find_map(|(_, r)| r).unwrap()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HapnError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("state `{0}` is not declared")]
    UnknownState(String),
    #[error("variable `{0}` is not declared")]
    UnknownVariable(String),
    #[error("state `{0}` declared twice")]
    DuplicateState(String),
    #[error("exactly one initial state is required")]
    Initial,
}

const PUNCTS: &[&str] = &["->", ";", ":", "(", ")", ","];

pub fn parse_hapn(text: &str) -> Result<HapnMachine, HapnError> {
    let mut cur = Cursor::new(tokenize(text, PUNCTS)?);
    let mut name = String::new();
    let mut states: Vec<String> = Vec::new();
    let mut initial: Vec<String> = Vec::new();
    let mut finals = BTreeSet::new();
    let mut variables = Vec::new();
    let mut transitions = Vec::new();
    while !cur.at_eof() {
        if cur.eat_word("machine") {
            name = cur.ident("machine name")?;
        } else if cur.eat_word("var") {
            variables.push(cur.ident("variable")?);
        } else if cur.eat_word("state") {
            let s = cur.ident("state name")?;
            if states.contains(&s) {
                return Err(HapnError::DuplicateState(s));
            }
            loop {
                if cur.eat_word("initial") {
                    initial.push(s.clone());
                } else if cur.eat_word("final") {
                    finals.insert(s.clone());
                } else {
                    break;
                }
            }
            states.push(s);
        } else if cur.eat_word("trans") {
            transitions.push(transition(&mut cur)?);
        } else {
            return Err(cur.error(format!("expected `machine`, `var`, `state` or `trans`, found {}", cur.peek())).into());
        }
        cur.expect_punct(";")?;
    }
    if initial.len() != 1 {
        return Err(HapnError::Initial);
    }
    let m = HapnMachine { name, states, initial: initial.remove(0), finals, variables, transitions };
    check_names(&m)?;
    Ok(m)
}

fn transition(cur: &mut Cursor) -> Result<Transition, SyntaxError> {
    let from = cur.ident("source state")?;
    cur.expect_punct("->")?;
    let to = cur.ident("target state")?;
    let mut t = Transition::new(&from, &to);
    if cur.eat_word("on") {
        let sender = cur.ident("sender")?;
        cur.expect_punct("->")?;
        let receiver = cur.ident("receiver")?;
        cur.expect_punct(":")?;
        let msg = cur.ident("message name")?;
        cur.expect_punct("(")?;
        let mut args = Vec::new();
        while !cur.eat_punct(")") {
            args.push(cur.ident("argument")?);
            if !cur.is_punct(")") {
                cur.expect_punct(",")?;
            }
        }
        t.label = Some(HapnLabel { sender, receiver, msg, args });
    }
    if cur.eat_word("when")
        && !cur.eat_word("true") {
            loop {
                let kind = cur.ident("`bound` or `unbound`")?;
                cur.expect_punct("(")?;
                let v = cur.ident("variable")?;
                cur.expect_punct(")")?;
                t.guard.push(match kind.as_str() {
                    "bound" => GuardAtom::Bound(v),
                    "unbound" => GuardAtom::Unbound(v),
                    _ => return Err(cur.error(format!("unknown guard `{kind}`"))),
                });
                if !cur.eat_word("and") {
                    break;
                }
            }
        }
    if cur.eat_word("do") {
        loop {
            let kind = cur.ident("`bind` or `unbind`")?;
            cur.expect_punct("(")?;
            let v = cur.ident("variable")?;
            let action = match kind.as_str() {
                "bind" => {
                    cur.expect_punct(",")?;
                    let term = cur.ident("value or `arg.<name>`")?;
                    let term = match term.strip_prefix("arg.") {
                        Some(n) => Term::Arg(n.into()),
                        None => Term::Lit(term),
                    };
                    HapnAction::Bind(v, term)
                }
                "unbind" => HapnAction::Unbind(v),
                _ => return Err(cur.error(format!("unknown action `{kind}`"))),
            };
            cur.expect_punct(")")?;
            t.actions.push(action);
            if !cur.eat_punct(",") {
                break;
            }
        }
    }
    Ok(t)
}

fn check_names(m: &HapnMachine) -> Result<(), HapnError> {
    let has_state = |s: &String| m.states.contains(s);
    for s in std::iter::once(&m.initial).chain(&m.finals) {
        if !has_state(s) {
            return Err(HapnError::UnknownState(s.clone()));
        }
    }
    for t in &m.transitions {
        for s in [&t.from, &t.to] {
            if !has_state(s) {
                return Err(HapnError::UnknownState(s.clone()));
            }
        }
        let vars = t.guard.iter().map(|g| match g {
            GuardAtom::Bound(x) | GuardAtom::Unbound(x) => x,
        });
        let acted = t.actions.iter().map(|a| match a {
            HapnAction::Bind(x, _) | HapnAction::Unbind(x) => x,
        });
        for v in vars.chain(acted) {
            if !m.variables.contains(v) {
                return Err(HapnError::UnknownVariable(v.clone()));
            }
        }
    }
    Ok(())
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trans {} -> {}", self.from, self.to)?;
        if let Some(l) = &self.label {
            write!(f, " on {}->{}:{}({})", l.sender, l.receiver, l.msg, l.args.join(", "))?;
        }
        if !self.guard.is_empty() {
            let g: Vec<String> = self
                .guard
                .iter()
                .map(|g| match g {
                    GuardAtom::Bound(x) => format!("bound({x})"),
                    GuardAtom::Unbound(x) => format!("unbound({x})"),
                })
                .collect();
            write!(f, " when {}", g.join(" and "))?;
        }
        if !self.actions.is_empty() {
            let a: Vec<String> = self
                .actions
                .iter()
                .map(|a| match a {
                    HapnAction::Bind(x, Term::Lit(v)) => format!("bind({x}, {v})"),
                    HapnAction::Bind(x, Term::Arg(n)) => format!("bind({x}, arg.{n})"),
                    HapnAction::Unbind(x) => format!("unbind({x})"),
                })
                .collect();
            write!(f, " do {}", a.join(", "))?;
        }
        Ok(())
    }
}

pub fn print_hapn(m: &HapnMachine) -> String {
    let mut out = String::new();
    if !m.name.is_empty() {
        out.push_str(&format!("machine {};\n", m.name));
    }
    for v in &m.variables {
        out.push_str(&format!("var {v};\n"));
    }
    for s in &m.states {
        out.push_str(&format!("state {s}"));
        if *s == m.initial {
            out.push_str(" initial");
        }
        if m.finals.contains(s) {
            out.push_str(" final");
        }
        out.push_str(";\n");
    }
    for t in &m.transitions {
        out.push_str(&format!("{t};\n"));
    }
    out
}
