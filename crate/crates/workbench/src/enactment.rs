//! Local histories of message emissions and receptions, and what they tell an agent.
//!
//! Log format, one observation per line:
//!
//! ```text
//! <tick> <agent> <E|R|X> <Msg> <key=val,...|-> [peer=<role>] [@<day>] [# note]
//! ```
//!
//! `X` lines record emissions the filter refused; the note holds the reason.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspl::{Adornment, InfoProtocol};

pub type Bindings = BTreeMap<String, String>;
pub type KeyTuple = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MessageInstance {
    pub schema: String,
    pub sender: String,
    pub receiver: String,
    pub bindings: Bindings,
}

impl MessageInstance {
    pub fn new(schema: &str, sender: &str, receiver: &str, bindings: &[(&str, &str)]) -> Self {
        MessageInstance {
            schema: schema.into(),
            sender: sender.into(),
            receiver: receiver.into(),
            bindings: bindings.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// The bindings of `keys`, or None if one is missing.
    pub fn key_tuple(&self, keys: &[&str]) -> Option<KeyTuple> {
        keys.iter().map(|k| self.bindings.get(*k).map(|v| (k.to_string(), v.clone()))).collect()
    }
}

impl fmt::Display for MessageInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b: Vec<String> = self.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}({})", self.schema, b.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObsKind {
    Emission,
    Reception,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Observation {
    pub kind: ObsKind,
    pub instance: MessageInstance,
    pub tick: u64,
    /// Logical day, used by commitment windows. Defaults to the tick when absent.
    pub day: Option<u64>,
}

impl Observation {
    pub fn emit(instance: MessageInstance, tick: u64) -> Self {
        Observation { kind: ObsKind::Emission, instance, tick, day: None }
    }

    pub fn recv(instance: MessageInstance, tick: u64) -> Self {
        Observation { kind: ObsKind::Reception, instance, tick, day: None }
    }

    pub fn on_day(mut self, day: u64) -> Self {
        self.day = Some(day);
        self
    }

    pub fn day(&self) -> u64 {
        self.day.unwrap_or(self.tick)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct History {
    pub owner: String,
    pub observations: Vec<Observation>,
}

impl History {
    pub fn new(owner: &str) -> Self {
        History { owner: owner.into(), observations: Vec::new() }
    }

    pub fn next_tick(&self) -> u64 {
        self.observations.last().map(|o| o.tick + 1).unwrap_or(0)
    }

    /// Shorthand for building fixtures: appends with the next tick.
    pub fn emit(mut self, m: MessageInstance) -> Self {
        let t = self.next_tick();
        self.observations.push(Observation::emit(m, t));
        self
    }

    pub fn recv(mut self, m: MessageInstance) -> Self {
        let t = self.next_tick();
        self.observations.push(Observation::recv(m, t));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("integrity conflict on `{param}`: `{first}` vs `{second}`")]
pub struct IntegrityConflict {
    pub param: String,
    pub first: String,
    pub second: String,
}

fn merge_into(acc: &mut Bindings, b: &Bindings) -> Result<(), IntegrityConflict> {
    for (k, v) in b {
        match acc.get(k) {
            Some(old) if old != v => {
                return Err(IntegrityConflict { param: k.clone(), first: old.clone(), second: v.clone() })
            }
            Some(_) => {}
            None => {
                acc.insert(k.clone(), v.clone());
            }
        }
    }
    Ok(())
}

fn matches_key(m: &MessageInstance, key: &[(String, String)]) -> bool {
    key.iter().all(|(k, v)| m.bindings.get(k) == Some(v))
}

/// Everything `h` knows about the instance identified by `key`.
pub fn known_bindings(h: &History, key: &[(String, String)]) -> Result<Bindings, IntegrityConflict> {
    let mut acc = Bindings::new();
    for o in &h.observations {
        if matches_key(&o.instance, key) {
            merge_into(&mut acc, &o.instance.bindings)?;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EmissionError {
    #[error("no message named `{0}` in the protocol")]
    UnknownSchema(String),
    #[error("`{agent}` cannot send `{schema}`; its sender is `{sender}`")]
    WrongSender { agent: String, schema: String, sender: String },
    #[error("bindings do not match the parameters of `{0}`")]
    BindingsMismatch(String),
    #[error("`in {0}` is not known yet")]
    UnknownIn(String),
    #[error("`out {0}` is already bound")]
    AlreadyBound(String),
    #[error("`{schema}` was already sent for this key")]
    DuplicateMessage { schema: String },
    #[error(transparent)]
    IntegrityConflict(#[from] IntegrityConflict),
}

/// Whether the owner of `h` may emit `m`, judged only from `h`.
pub fn check_emission(h: &History, m: &MessageInstance, p: &InfoProtocol) -> Result<(), EmissionError> {
    let schema = p.message(&m.schema).ok_or_else(|| EmissionError::UnknownSchema(m.schema.clone()))?;
    if schema.sender != h.owner {
        return Err(EmissionError::WrongSender {
            agent: h.owner.clone(),
            schema: schema.name.clone(),
            sender: schema.sender.clone(),
        });
    }
    let names: BTreeSet<&str> = schema.params.iter().map(|q| q.name.as_str()).collect();
    if names != m.bindings.keys().map(|k| k.as_str()).collect() {
        return Err(EmissionError::BindingsMismatch(schema.name.clone()));
    }
    let keys = p.message_keys(schema);
    let key = m.key_tuple(&keys).ok_or_else(|| EmissionError::BindingsMismatch(schema.name.clone()))?;
    let known = known_bindings(h, &key)?;
    for q in &schema.params {
        let given = &m.bindings[&q.name];
        match (q.adornment, known.get(&q.name)) {
            (Adornment::In, None) => return Err(EmissionError::UnknownIn(q.name.clone())),
            (Adornment::In, Some(v)) if v != given => {
                return Err(IntegrityConflict { param: q.name.clone(), first: v.clone(), second: given.clone() }.into())
            }
            (Adornment::Out, Some(_)) => return Err(EmissionError::AlreadyBound(q.name.clone())),
            _ => {}
        }
    }
    let dup = h.observations.iter().any(|o| {
        o.kind == ObsKind::Emission && o.instance.schema == m.schema && matches_key(&o.instance, &key)
    });
    if dup {
        return Err(EmissionError::DuplicateMessage { schema: m.schema.clone() });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("tick {given} does not follow {last}")]
pub struct TickRegression {
    pub last: u64,
    pub given: u64,
}

/// Appends `o`. Receptions are never refused; a reception that contradicts what the
/// agent already knows comes back as a conflict alongside the new history.
pub fn apply_observation(
    h: &History,
    o: Observation,
    p: Option<&InfoProtocol>,
) -> Result<(History, Option<IntegrityConflict>), TickRegression> {
    if let Some(last) = h.observations.last() {
        if o.tick <= last.tick {
            return Err(TickRegression { last: last.tick, given: o.tick });
        }
    }
    let conflict = p.and_then(|p| {
        let schema = p.message(&o.instance.schema)?;
        let key = o.instance.key_tuple(&p.message_keys(schema))?;
        let mut known = known_bindings(h, &key).ok()?;
        merge_into(&mut known, &o.instance.bindings).err()
    });
    let mut next = h.clone();
    next.observations.push(o);
    Ok((next, conflict))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstanceView {
    pub key: KeyTuple,
    pub bindings: Bindings,
    pub contributing: BTreeSet<MessageInstance>,
}

/// Correlates every observed instance by its key bindings, across all agents.
pub fn instance_views(histories: &[History], p: &InfoProtocol) -> Result<Vec<InstanceView>, IntegrityConflict> {
    let mut views: BTreeMap<KeyTuple, InstanceView> = BTreeMap::new();
    for h in histories {
        for o in &h.observations {
            let Some(schema) = p.message(&o.instance.schema) else { continue };
            let Some(key) = o.instance.key_tuple(&p.message_keys(schema)) else { continue };
            let v = views.entry(key.clone()).or_insert_with(|| InstanceView {
                key,
                bindings: Bindings::new(),
                contributing: BTreeSet::new(),
            });
            merge_into(&mut v.bindings, &o.instance.bindings)?;
            v.contributing.insert(o.instance.clone());
        }
    }
    Ok(views.into_values().collect())
}

pub fn is_complete(v: &InstanceView, p: &InfoProtocol) -> bool {
    p.public_params.iter().all(|q| v.bindings.contains_key(&q.name))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntryKind {
    E,
    R,
    X,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LogEntry {
    pub tick: u64,
    pub agent: String,
    pub kind: EntryKind,
    pub instance: MessageInstance,
    pub day: Option<u64>,
    pub note: Option<String>,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.instance;
        let b: Vec<String> = m.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let b = if b.is_empty() { "-".to_string() } else { b.join(",") };
        write!(f, "{} {} {:?} {} {}", self.tick, self.agent, self.kind, m.schema, b)?;
        let peer = if m.sender == self.agent { &m.receiver } else { &m.sender };
        if !peer.is_empty() {
            write!(f, " peer={peer}")?;
        }
        if let Some(d) = self.day {
            write!(f, " @{d}")?;
        }
        if let Some(n) = &self.note {
            write!(f, " # {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("log line {line}: {message}")]
pub struct LogError {
    pub line: usize,
    pub message: String,
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LogError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |message: &str| LogError { line: i + 1, message: message.into() };
        let (body, note) = match raw.split_once('#') {
            Some((b, n)) => (b, Some(n.trim().to_string())),
            None => (raw, None),
        };
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 5 {
            return Err(err("expected `<tick> <agent> <E|R|X> <Msg> <bindings>`"));
        }
        let tick = fields[0].parse().map_err(|_| err("tick is not a number"))?;
        let agent = fields[1].to_string();
        let kind = match fields[2] {
            "E" => EntryKind::E,
            "R" => EntryKind::R,
            "X" => EntryKind::X,
            _ => return Err(err("kind must be E, R or X")),
        };
        let mut bindings = Bindings::new();
        if fields[4] != "-" {
            for pair in fields[4].split(',') {
                let (k, v) = pair.split_once('=').ok_or_else(|| err("binding without `=`"))?;
                bindings.insert(k.to_string(), v.to_string());
            }
        }
        let (mut peer, mut day) = (String::new(), None);
        for extra in &fields[5..] {
            if let Some(p) = extra.strip_prefix("peer=") {
                peer = p.to_string();
            } else if let Some(d) = extra.strip_prefix('@') {
                day = Some(d.parse().map_err(|_| err("day is not a number"))?);
            } else {
                return Err(err("unexpected trailing field"));
            }
        }
        let (sender, receiver) = match kind {
            EntryKind::R => (peer, agent.clone()),
            _ => (agent.clone(), peer),
        };
        let instance = MessageInstance { schema: fields[3].to_string(), sender, receiver, bindings };
        out.push(LogEntry { tick, agent, kind, instance, day, note });
    }
    Ok(out)
}

pub fn print_log(entries: &[LogEntry]) -> String {
    entries.iter().map(|e| format!("{e}\n")).collect()
}

/// Merges histories into one log, ordered by tick and then agent.
pub fn log_from_histories(histories: &[History]) -> Vec<LogEntry> {
    let mut out: Vec<LogEntry> = histories
        .iter()
        .flat_map(|h| {
            h.observations.iter().map(move |o| LogEntry {
                tick: o.tick,
                agent: h.owner.clone(),
                kind: match o.kind {
                    ObsKind::Emission => EntryKind::E,
                    ObsKind::Reception => EntryKind::R,
                },
                instance: o.instance.clone(),
                day: o.day,
                note: None,
            })
        })
        .collect();
    out.sort_by(|a, b| (a.tick, &a.agent).cmp(&(b.tick, &b.agent)));
    out
}

/// Splits a log back into per-agent histories, in order of first appearance.
/// Rejection lines are dropped.
pub fn histories_from_log(entries: &[LogEntry]) -> Vec<History> {
    let mut out: Vec<History> = Vec::new();
    for e in entries {
        let kind = match e.kind {
            EntryKind::E => ObsKind::Emission,
            EntryKind::R => ObsKind::Reception,
            EntryKind::X => continue,
        };
        let idx = match out.iter().position(|h| h.owner == e.agent) {
            Some(i) => i,
            None => {
                out.push(History::new(&e.agent));
                out.len() - 1
            }
        };
        out[idx].observations.push(Observation { kind, instance: e.instance.clone(), tick: e.tick, day: e.day });
    }
    out
}

/// Fills in missing peers of logged instances from the protocol's schemas.
pub fn resolve_roles(histories: &mut [History], p: &InfoProtocol) {
    for h in histories {
        for o in &mut h.observations {
            if let Some(s) = p.message(&o.instance.schema) {
                o.instance.sender = s.sender.clone();
                o.instance.receiver = s.receiver.clone();
            }
        }
    }
}
