//! Commitments as views over message histories.
//!
//! ```text
//! commitment Deliver-Payment Buyer to Seller
//!   create Accept
//!   detach Deliver [, Accept + 3]
//!   discharge Payment [, Deliver + 3]
//! ```
//!
//! Windows are inclusive and measured in days. An empty bound is open.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspl::InfoProtocol;
use crate::enactment::{instance_views, History, IntegrityConflict, KeyTuple};
use crate::lex::{tokenize, Cursor, SyntaxError, Tok};

/// `event + offset`, in days.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeRef {
    pub event: String,
    pub offset: u64,
}

impl fmt::Display for TimeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.offset == 0 {
            write!(f, "{}", self.event)
        } else {
            write!(f, "{} + {}", self.event, self.offset)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub lo: Option<TimeRef>,
    pub hi: Option<TimeRef>,
}

impl Window {
    pub fn is_open(&self) -> bool {
        self.lo.is_none() && self.hi.is_none()
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |b: &Option<TimeRef>| b.as_ref().map(|t| t.to_string()).unwrap_or_default();
        match (&self.lo, &self.hi) {
            (Some(_), _) => write!(f, "[{}, {}]", side(&self.lo), side(&self.hi)),
            (None, _) => write!(f, "[, {}]", side(&self.hi)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clause {
    pub event: String,
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitmentSpec {
    pub name: String,
    pub debtor: String,
    pub creditor: String,
    pub create: String,
    /// None for an unconditional commitment, which is detached on creation.
    pub detach: Option<Clause>,
    pub discharge: Clause,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CupidError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("`{event}` in commitment `{commitment}` is not a message of the protocol")]
    UnknownEvent { commitment: String, event: String },
}

const PUNCTS: &[&str] = &["[", "]", ",", "+"];

fn time_ref(cur: &mut Cursor) -> Result<Option<TimeRef>, SyntaxError> {
    if !matches!(cur.peek(), Tok::Ident(_)) {
        return Ok(None);
    }
    let event = cur.ident("event name")?;
    let mut offset = 0;
    if cur.eat_punct("+") {
        let n = cur.ident("number of days")?;
        offset = n.parse().map_err(|_| cur.error(format!("`{n}` is not a number of days")))?;
    }
    Ok(Some(TimeRef { event, offset }))
}

fn clause(cur: &mut Cursor) -> Result<Clause, SyntaxError> {
    let event = cur.ident("event name")?;
    let mut window = Window::default();
    if cur.eat_punct("[") {
        window.lo = time_ref(cur)?;
        cur.expect_punct(",")?;
        window.hi = time_ref(cur)?;
        cur.expect_punct("]")?;
    }
    Ok(Clause { event, window })
}

pub fn parse_cupid(text: &str) -> Result<Vec<CommitmentSpec>, CupidError> {
    let mut cur = Cursor::new(tokenize(text, PUNCTS)?);
    let mut out = Vec::new();
    while !cur.at_eof() {
        cur.expect_word("commitment")?;
        let name = cur.ident("commitment name")?;
        let debtor = cur.ident("debtor")?;
        cur.expect_word("to")?;
        let creditor = cur.ident("creditor")?;
        cur.expect_word("create")?;
        let create = cur.ident("event name")?;
        let detach = if cur.eat_word("detach") { Some(clause(&mut cur)?) } else { None };
        cur.expect_word("discharge")?;
        let discharge = clause(&mut cur)?;
        out.push(CommitmentSpec { name, debtor, creditor, create, detach, discharge });
    }
    Ok(out)
}

pub fn print_cupid(specs: &[CommitmentSpec]) -> String {
    let mut out = String::new();
    let clause = |kw: &str, c: &Clause| {
        if c.window.is_open() {
            format!("  {kw} {}\n", c.event)
        } else {
            format!("  {kw} {} {}\n", c.event, c.window)
        }
    };
    for s in specs {
        out.push_str(&format!("commitment {} {} to {}\n", s.name, s.debtor, s.creditor));
        out.push_str(&format!("  create {}\n", s.create));
        if let Some(d) = &s.detach {
            out.push_str(&clause("detach", d));
        }
        out.push_str(&clause("discharge", &s.discharge));
    }
    out
}

/// Checks that every event the spec mentions is a message of `p`.
pub fn bind_spec(s: &CommitmentSpec, p: &InfoProtocol) -> Result<(), CupidError> {
    let mut events = vec![&s.create, &s.discharge.event];
    let windows = s.detach.iter().map(|d| &d.window).chain([&s.discharge.window]);
    for w in windows {
        events.extend(w.lo.iter().chain(w.hi.iter()).map(|t| &t.event));
    }
    if let Some(d) = &s.detach {
        events.push(&d.event);
    }
    for e in events {
        if p.message(e).is_none() {
            return Err(CupidError::UnknownEvent { commitment: s.name.clone(), event: e.clone() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommitmentState {
    Null,
    Active,
    Detached,
    Discharged,
    /// The detach window closed first; the debtor is released.
    Expired,
    /// Detached, and the discharge window closed first.
    Violated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentInstance {
    pub name: String,
    pub key: KeyTuple,
    pub state: CommitmentState,
    /// Day on which each state was entered.
    pub since: BTreeMap<CommitmentState, u64>,
}

/// First day each event happened within one protocol instance.
pub type EventDays = BTreeMap<String, u64>;

fn resolve(t: &Option<TimeRef>, days: &EventDays) -> Option<Option<u64>> {
    match t {
        None => Some(None),
        Some(t) => days.get(&t.event).map(|d| Some(d + t.offset)),
    }
}

// Lower bound must be known and met; an open upper bound never closes.
fn within(day: u64, w: &Window, days: &EventDays) -> bool {
    let lo_ok = match resolve(&w.lo, days) {
        None => false,
        Some(lo) => lo.is_none_or(|lo| day >= lo),
    };
    let hi_ok = match resolve(&w.hi, days) {
        None | Some(None) => true,
        Some(Some(hi)) => day <= hi,
    };
    lo_ok && hi_ok
}

// The day a window counts as closed, no earlier than `from`.
fn closed(now: u64, w: &Window, days: &EventDays, from: u64) -> Option<u64> {
    match resolve(&w.hi, days) {
        Some(Some(hi)) if now > hi => Some((hi + 1).max(from)),
        _ => None,
    }
}

/// The lifecycle of one commitment instance given when its events happened, as seen on
/// day `now`. Events after `now` are ignored.
pub fn lifecycle(s: &CommitmentSpec, days: &EventDays, now: u64) -> (CommitmentState, BTreeMap<CommitmentState, u64>) {
    let days: EventDays = days.iter().filter(|(_, d)| **d <= now).map(|(e, d)| (e.clone(), *d)).collect();
    let mut since = BTreeMap::new();
    let Some(&created) = days.get(&s.create) else { return (CommitmentState::Null, since) };
    since.insert(CommitmentState::Active, created);
    let detached = match &s.detach {
        None => Some(created),
        Some(d) => days.get(&d.event).copied().filter(|&t| t >= created && within(t, &d.window, &days)),
    };
    let Some(detached) = detached else {
        if let Some(t) = s.detach.as_ref().and_then(|d| closed(now, &d.window, &days, created)) {
            since.insert(CommitmentState::Expired, t);
            return (CommitmentState::Expired, since);
        }
        return (CommitmentState::Active, since);
    };
    since.insert(CommitmentState::Detached, detached);
    let discharged = days.get(&s.discharge.event).copied().filter(|&t| t >= created && within(t, &s.discharge.window, &days));
    if let Some(t) = discharged {
        since.insert(CommitmentState::Discharged, t.max(detached));
        return (CommitmentState::Discharged, since);
    }
    if let Some(t) = closed(now, &s.discharge.window, &days, detached) {
        since.insert(CommitmentState::Violated, t);
        return (CommitmentState::Violated, since);
    }
    (CommitmentState::Detached, since)
}

/// One instance per protocol instance whose create event has happened by `now`. Events
/// are correlated by the protocol's keys and dated by their earliest observation; a day
/// defaults to the observation's tick.
pub fn commitment_states(
    s: &CommitmentSpec,
    histories: &[History],
    now: u64,
    p: &InfoProtocol,
) -> Result<Vec<CommitmentInstance>, IntegrityConflict> {
    let mut out = Vec::new();
    for v in instance_views(histories, p)? {
        let mut days = EventDays::new();
        for h in histories {
            for o in &h.observations {
                if !v.contributing.contains(&o.instance) {
                    continue;
                }
                let e = days.entry(o.instance.schema.clone()).or_insert(o.day());
                *e = (*e).min(o.day());
            }
        }
        let (state, since) = lifecycle(s, &days, now);
        if state != CommitmentState::Null {
            out.push(CommitmentInstance { name: s.name.clone(), key: v.key.clone(), state, since });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspl::parse_bspl;
    use crate::enactment::{MessageInstance, Observation};

    const DELIVER_PAYMENT: &str = include_str!("../fixtures/deliver_payment.cupid");

    fn spec() -> CommitmentSpec {
        parse_cupid(DELIVER_PAYMENT).unwrap().remove(0)
    }

    #[test]
    fn windows_parse() {
        let s = spec();
        assert_eq!((s.debtor.as_str(), s.creditor.as_str()), ("Buyer", "Seller"));
        let d = s.detach.unwrap();
        assert_eq!(d.window.lo, None);
        assert_eq!(d.window.hi, Some(TimeRef { event: "Accept".into(), offset: 3 }));
        assert_eq!(s.discharge.window.hi, Some(TimeRef { event: "Deliver".into(), offset: 3 }));
    }

    #[test]
    fn no_windows_means_unbounded() {
        let s = parse_cupid("commitment C A to B create m discharge n").unwrap().remove(0);
        assert!(s.detach.is_none() && s.discharge.window.is_open());
    }

    #[test]
    fn round_trip() {
        let s = parse_cupid(DELIVER_PAYMENT).unwrap();
        assert_eq!(parse_cupid(&print_cupid(&s)).unwrap(), s);
    }

    fn purchase_run(days: &[(&str, u64)]) -> Vec<History> {
        let mut b = History::new("Buyer");
        let base = [("ID", "1"), ("item", "fig")];
        let all = [
            ("Request", "Buyer", vec![]),
            ("Offer", "Seller", vec![("price", "5")]),
            ("Accept", "Buyer", vec![("price", "5"), ("decision", "yes"), ("address", "home")]),
            ("Deliver", "Seller", vec![("address", "home"), ("dropOff", "porch")]),
            ("Payment", "Buyer", vec![("price", "5"), ("dropOff", "porch"), ("OK", "y")]),
        ];
        for (i, (name, day)) in days.iter().enumerate() {
            let (_, sender, extra) = all.iter().find(|a| a.0 == *name).unwrap();
            let recv = if *sender == "Buyer" { "Seller" } else { "Buyer" };
            let mut bind: Vec<(&str, &str)> = base.to_vec();
            bind.extend(extra.iter().copied());
            let m = MessageInstance::new(name, sender, recv, &bind);
            let o = if *sender == "Buyer" { Observation::emit(m, i as u64) } else { Observation::recv(m, i as u64) };
            b.observations.push(o.on_day(*day));
        }
        vec![b]
    }

    fn state_on(days: &[(&str, u64)], now: u64) -> Vec<CommitmentState> {
        let p = parse_bspl(include_str!("../fixtures/purchase.bspl")).unwrap();
        commitment_states(&spec(), &purchase_run(days), now, &p).unwrap().into_iter().map(|c| c.state).collect()
    }

    #[test]
    fn payment_in_time_discharges() {
        let run = [("Request", 0), ("Offer", 0), ("Accept", 10), ("Deliver", 12), ("Payment", 14)];
        assert_eq!(state_on(&run, 20), [CommitmentState::Discharged]);
    }

    #[test]
    fn late_payment_violates() {
        let run = [("Request", 0), ("Offer", 0), ("Accept", 10), ("Deliver", 12), ("Payment", 16)];
        assert_eq!(state_on(&run, 20), [CommitmentState::Violated]);
        assert_eq!(state_on(&run, 16), [CommitmentState::Violated]);
        assert_eq!(state_on(&run, 15), [CommitmentState::Detached]);
    }

    #[test]
    fn late_delivery_expires() {
        let run = [("Request", 0), ("Offer", 0), ("Accept", 10), ("Deliver", 14)];
        assert_eq!(state_on(&run, 13), [CommitmentState::Active]);
        assert_eq!(state_on(&run, 20), [CommitmentState::Expired]);
    }

    #[test]
    fn empty_histories() {
        let p = parse_bspl(include_str!("../fixtures/purchase.bspl")).unwrap();
        assert!(commitment_states(&spec(), &[], 5, &p).unwrap().is_empty());
    }

    #[test]
    fn unknown_event_is_reported() {
        let p = parse_bspl(include_str!("../fixtures/pricing.bspl")).unwrap();
        assert!(matches!(bind_spec(&spec(), &p), Err(CupidError::UnknownEvent { .. })));
    }
}
