//! The protocol filter that sits between an agent's reasoner and the network. It admits
//! an emission only if the protocol allows it and records every observation.

use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspl::{Direction, InfoProtocol};
use crate::cfp::CfpExpr;
use crate::enactment::{
    apply_observation, check_emission, log_from_histories, EmissionError, EntryKind, History, IntegrityConflict,
    LogEntry, MessageInstance, ObsKind, Observation,
};
use crate::hapn::{accepts_prefix, HapnMachine};
use crate::netsim::{Agent, Event, Fault};
use crate::projection::{project, Action, Doctrine, LocalExpr, TypeLevelFsm};
use crate::realizability::Reception;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    /// Every protocol the agent plays a role in.
    Bspl(Vec<InfoProtocol>),
    Cfp { fsm: TypeLevelFsm, state: usize },
    /// The machine sees the agent's own observations as one synchronous event stream.
    Hapn { machine: HapnMachine, seen: Vec<MessageInstance> },
}

impl Backend {
    pub fn cfp(fsm: TypeLevelFsm) -> Self {
        let state = fsm.initial;
        Backend::Cfp { fsm, state }
    }

    pub fn hapn(machine: HapnMachine) -> Self {
        Backend::Hapn { machine, seen: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Rejection {
    #[error("`{agent}` is not the sender of {msg}")]
    NotOwner { agent: String, msg: String },
    #[error("no protocol has a message `{0}` sent by this role")]
    NotInProtocol(String),
    #[error(transparent)]
    Emission(#[from] EmissionError),
    #[error("{0} is not expected here")]
    Unexpected(String),
}

/// Something odd about a reception. Receptions are recorded regardless.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Notice {
    Conflict(IntegrityConflict),
    Unexpected(MessageInstance),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterState {
    pub history: History,
    pub backend: Backend,
    pub reception: Reception,
    /// Arrivals the channel selector has not yet shown to the agent.
    pub pending: Vec<MessageInstance>,
    pub rejections: Vec<LogEntry>,
    pub notices: Vec<Notice>,
}

fn owned(p: &InfoProtocol, h: &History) -> History {
    let mut out = History::new(&h.owner);
    out.observations =
        h.observations.iter().filter(|o| p.message(&o.instance.schema).is_some()).cloned().collect();
    out
}

impl FilterState {
    pub fn new(owner: &str, backend: Backend, reception: Reception) -> Self {
        FilterState {
            history: History::new(owner),
            backend,
            reception,
            pending: Vec::new(),
            rejections: Vec::new(),
            notices: Vec::new(),
        }
    }

    pub fn owner(&self) -> &str {
        &self.history.owner
    }

    fn admit(&self, m: &MessageInstance) -> Result<(), Rejection> {
        if m.sender != self.owner() {
            return Err(Rejection::NotOwner { agent: self.owner().into(), msg: m.to_string() });
        }
        match &self.backend {
            Backend::Bspl(ps) => {
                let p = ps
                    .iter()
                    .find(|p| p.message(&m.schema).is_some_and(|s| s.sender == m.sender))
                    .ok_or_else(|| Rejection::NotInProtocol(m.schema.clone()))?;
                Ok(check_emission(&owned(p, &self.history), m, p)?)
            }
            Backend::Cfp { fsm, state } => match fsm.step(*state, &m.receiver, Direction::Send, &m.schema) {
                Some(_) => Ok(()),
                None => Err(Rejection::Unexpected(m.to_string())),
            },
            Backend::Hapn { machine, seen } => {
                let mut evs = seen.clone();
                evs.push(m.clone());
                if accepts_prefix(machine, &evs) {
                    Ok(())
                } else {
                    Err(Rejection::Unexpected(m.to_string()))
                }
            }
        }
    }

    fn advance(&mut self, m: &MessageInstance, dir: Direction) -> bool {
        match &mut self.backend {
            Backend::Bspl(_) => true,
            Backend::Cfp { fsm, state } => {
                let peer = if dir == Direction::Send { &m.receiver } else { &m.sender };
                match fsm.step(*state, peer, dir, &m.schema) {
                    Some(n) => {
                        *state = n;
                        true
                    }
                    None => false,
                }
            }
            Backend::Hapn { machine, seen } => {
                seen.push(m.clone());
                accepts_prefix(machine, seen)
            }
        }
    }

    /// Checks `m` against the protocol. On success the emission is recorded; on failure
    /// the history is untouched and the refusal is kept for the log.
    pub fn request_emission(&mut self, m: &MessageInstance) -> Result<(), Rejection> {
        let tick = self.history.next_tick();
        if let Err(r) = self.admit(m) {
            self.rejections.push(LogEntry {
                tick,
                agent: self.owner().into(),
                kind: EntryKind::X,
                instance: m.clone(),
                day: None,
                note: Some(r.to_string()),
            });
            return Err(r);
        }
        self.advance(m, Direction::Send);
        self.history.observations.push(Observation::emit(m.clone(), tick));
        self.release();
        Ok(())
    }

    fn record(&mut self, m: MessageInstance) {
        let tick = self.history.next_tick();
        let protocol = match &self.backend {
            Backend::Bspl(ps) => ps.iter().find(|p| p.message(&m.schema).is_some()),
            _ => None,
        };
        let scoped = protocol.map(|p| owned(p, &self.history));
        let conflict = match (protocol, &scoped) {
            (Some(p), Some(h)) => apply_observation(h, Observation::recv(m.clone(), tick), Some(p)).ok().and_then(|r| r.1),
            _ => None,
        };
        if let Some(c) = conflict {
            self.notices.push(Notice::Conflict(c));
        }
        if !self.advance(&m, Direction::Recv) {
            self.notices.push(Notice::Unexpected(m.clone()));
        }
        self.history.observations.push(Observation::recv(m, tick));
    }

    fn expects(&self, m: &MessageInstance) -> bool {
        match &self.backend {
            Backend::Cfp { fsm, state } => fsm.step(*state, &m.sender, Direction::Recv, &m.schema).is_some(),
            _ => true,
        }
    }

    // Shows held messages whose channel the machine now reads, oldest first per peer.
    fn release(&mut self) {
        loop {
            let mut peers: Vec<&str> = Vec::new();
            let mut pick = None;
            for (i, m) in self.pending.iter().enumerate() {
                if peers.contains(&m.sender.as_str()) {
                    continue;
                }
                peers.push(&m.sender);
                if self.expects(m) {
                    pick = Some(i);
                    break;
                }
            }
            let Some(i) = pick else { return };
            let m = self.pending.remove(i);
            self.record(m);
        }
    }

    /// Hands an arrival to the filter. Under the channel selector it waits until the local
    /// machine reads from that peer and expects that message.
    pub fn on_delivery(&mut self, m: &MessageInstance) {
        match (self.reception, &self.backend) {
            (Reception::BlockingSelector, Backend::Cfp { .. }) => {
                self.pending.push(m.clone());
                self.release();
            }
            _ => self.record(m.clone()),
        }
    }

    /// The agent's log: its observations plus refused emissions.
    pub fn log(&self) -> Vec<LogEntry> {
        let mut out = log_from_histories(std::slice::from_ref(&self.history));
        out.extend(self.rejections.iter().cloned());
        out.sort_by_key(|a| (a.tick, a.kind != EntryKind::X));
        out
    }
}

/// Replays `h` through a fresh filter. Every emission must be admitted; receptions must
/// be expected and consistent. Returns the first problem.
pub fn check_compliance(h: &History, backend: &Backend) -> Result<(), String> {
    let mut f = FilterState::new(&h.owner, backend.clone(), Reception::Anytime);
    for o in &h.observations {
        match o.kind {
            ObsKind::Emission => f.request_emission(&o.instance).map_err(|r| r.to_string())?,
            ObsKind::Reception => {
                f.on_delivery(&o.instance);
                if let Some(n) = f.notices.first() {
                    return Err(match n {
                        Notice::Conflict(c) => c.to_string(),
                        Notice::Unexpected(m) => format!("{m} is not expected here"),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Tracks named payload parameters per recursion iteration of a trace expression: a
/// value bound in one iteration must not change until the expression recurses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopedParams {
    expr: LocalExpr,
    scope: crate::enactment::Bindings,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScopeError {
    #[error("{0} does not fit the protocol here")]
    Unexpected(String),
    #[error(transparent)]
    Conflict(IntegrityConflict),
}

impl ScopedParams {
    /// Monitors `role`'s view of `e`.
    pub fn new(e: &CfpExpr, role: &str) -> Self {
        let expr = project(e, role, Doctrine::TraceF).expect("trace projection does not fail");
        ScopedParams { expr, scope: Default::default() }
    }

    pub fn observe(&mut self, o: &Observation) -> Result<(), ScopeError> {
        let m = &o.instance;
        let want = match o.kind {
            ObsKind::Emission => Action::Send { peer: m.receiver.clone(), msg: m.schema.clone() },
            ObsKind::Reception => Action::Recv { peer: m.sender.clone(), msg: m.schema.clone() },
        };
        let step = self
            .expr
            .steps(false)
            .into_iter()
            .find(|s| s.action == want)
            .ok_or_else(|| ScopeError::Unexpected(m.to_string()))?;
        if step.unfolds {
            self.scope.clear();
        }
        for arg in step.payload.iter().flatten() {
            let Some(name) = &arg.name else { continue };
            let Some(v) = m.bindings.get(name) else { continue };
            match self.scope.get(name) {
                Some(old) if old != v => {
                    return Err(ScopeError::Conflict(IntegrityConflict {
                        param: name.clone(),
                        first: old.clone(),
                        second: v.clone(),
                    }))
                }
                _ => {
                    self.scope.insert(name.clone(), v.clone());
                }
            }
        }
        self.expr = step.next;
        Ok(())
    }
}

/// A scripted BSPL agent: it emits each of its candidate messages once, as soon as its
/// filter admits it, and records every arrival.
#[derive(Debug, Clone)]
pub struct BsplAgent {
    pub history: History,
    pub candidates: Vec<MessageInstance>,
    protocols: Arc<Vec<InfoProtocol>>,
}

impl BsplAgent {
    pub fn new(role: &str, protocols: Arc<Vec<InfoProtocol>>, candidates: Vec<MessageInstance>) -> Self {
        BsplAgent { history: History::new(role), candidates, protocols }
    }

    fn filter(&self) -> FilterState {
        let mut f = FilterState::new(&self.history.owner, Backend::Bspl(self.protocols.to_vec()), Reception::Anytime);
        f.history = self.history.clone();
        f
    }
}

impl PartialEq for BsplAgent {
    fn eq(&self, other: &Self) -> bool {
        self.history == other.history && self.candidates == other.candidates
    }
}

impl Eq for BsplAgent {}

impl Hash for BsplAgent {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.history.hash(state);
        self.candidates.hash(state);
    }
}

impl Agent for BsplAgent {
    fn name(&self) -> &str {
        &self.history.owner
    }

    fn history(&self) -> &History {
        &self.history
    }

    fn moves(&self, tick: u64) -> Vec<(Event, Self)> {
        let f = self.filter();
        let mut out = Vec::new();
        for (i, m) in self.candidates.iter().enumerate() {
            if f.admit(m).is_ok() {
                let mut next = self.clone();
                next.candidates.remove(i);
                next.history.observations.push(Observation::emit(m.clone(), tick));
                out.push((Event::Emit(m.clone()), next));
            }
        }
        out
    }

    fn deliver(&self, m: &MessageInstance, tick: u64) -> Vec<Result<Self, Fault>> {
        let mut next = self.clone();
        next.history.observations.push(Observation::recv(m.clone(), tick));
        vec![Ok(next)]
    }

    fn is_done(&self) -> bool {
        true
    }
}
