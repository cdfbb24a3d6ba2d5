//! A deterministic simulated network. Agents are state values; the explorer runs every
//! interleaving of emissions, deliveries and local steps.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::enactment::{History, MessageInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Delivery {
    Synchronous,
    FifoPairwise,
    Unordered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimPolicy {
    pub delivery: Delivery,
    pub loss_enabled: bool,
    pub seed: u64,
}

impl SimPolicy {
    pub fn new(delivery: Delivery) -> Self {
        SimPolicy { delivery, loss_enabled: false, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_states: usize,
    /// Messages in flight per ordered pair.
    pub queue_capacity: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_states: 1_000_000, queue_capacity: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultCode {
    /// A message arrived that the agent expects, but only later.
    OrderViolation,
    /// A message arrived that the agent does not expect at all.
    TraceMismatch,
    /// The agent's filter refused something it was asked to do.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fault {
    pub agent: String,
    pub code: FaultCode,
    pub detail: String,
}

/// What an agent does on its own initiative.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    Emit(MessageInstance),
    /// Takes a message the agent had been holding back.
    Consume(MessageInstance),
    Silent(String),
}

impl Event {
    fn sort_key(&self) -> (u8, &str) {
        match self {
            Event::Emit(m) => (0, &m.schema),
            Event::Consume(m) => (1, &m.schema),
            Event::Silent(s) => (2, s),
        }
    }
}

pub trait Agent: Clone + Eq + Hash {
    fn name(&self) -> &str;
    fn history(&self) -> &History;
    /// Successor agents for each local move; `tick` stamps any new observation.
    fn moves(&self, tick: u64) -> Vec<(Event, Self)>;
    /// Successors after `m` is handed to the agent by the network.
    fn deliver(&self, m: &MessageInstance, tick: u64) -> Vec<Result<Self, Fault>>;
    /// Whether the agent may stop here.
    fn is_done(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Envelope {
    pub instance: MessageInstance,
    pub send_tick: u64,
}

/// Everything in flight, in send order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InTransit {
    pub messages: Vec<Envelope>,
}

impl InTransit {
    /// Indices of the messages the network may deliver next.
    pub fn deliverable(&self, delivery: Delivery) -> Vec<usize> {
        let mut out = Vec::new();
        let mut heads: Vec<(&str, &str)> = Vec::new();
        let mut seen: Vec<&MessageInstance> = Vec::new();
        for (i, e) in self.messages.iter().enumerate() {
            let m = &e.instance;
            match delivery {
                Delivery::FifoPairwise | Delivery::Synchronous => {
                    let pair = (m.sender.as_str(), m.receiver.as_str());
                    if !heads.contains(&pair) {
                        heads.push(pair);
                        out.push(i);
                    }
                }
                Delivery::Unordered => {
                    if !seen.contains(&m) {
                        seen.push(m);
                        out.push(i);
                    }
                }
            }
        }
        out
    }

    fn pair_depth(&self, sender: &str, receiver: &str) -> usize {
        self.messages.iter().filter(|e| e.instance.sender == sender && e.instance.receiver == receiver).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Composite<A> {
    pub agents: Vec<A>,
    pub network: InTransit,
}

pub fn histories_of<A: Agent>(agents: &[A]) -> Vec<History> {
    agents.iter().map(|a| a.history().clone()).collect()
}

impl<A: Agent> Composite<A> {
    pub fn histories(&self) -> Vec<History> {
        histories_of(&self.agents)
    }

    fn tick(&self) -> u64 {
        self.agents.iter().map(|a| a.history().observations.len() as u64).sum::<u64>()
    }

    fn is_final(&self) -> bool {
        self.network.messages.is_empty() && self.agents.iter().all(|a| a.is_done())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreStats {
    pub states: usize,
    pub enactments: usize,
    pub max_queue_depth: usize,
}

#[derive(Debug, Clone)]
pub struct Exploration<A> {
    /// Final states: all agents done, nothing in flight.
    pub completed: Vec<Vec<A>>,
    /// Stuck states that are not final, with what was still in flight.
    pub stuck: Vec<(Vec<A>, Vec<Envelope>)>,
    pub faults: Vec<(Fault, Vec<History>)>,
    pub stats: ExploreStats,
    pub bound_exceeded: bool,
}

type Step<A> = ((String, u8, String), Result<Composite<A>, (Fault, Vec<History>)>);

fn successors<A: Agent>(c: &Composite<A>, policy: &SimPolicy, limits: &Limits, truncated: &mut bool) -> Vec<Step<A>> {
    let mut out: Vec<Step<A>> = Vec::new();
    let tick = c.tick();
    let index: BTreeMap<&str, usize> = c.agents.iter().enumerate().map(|(i, a)| (a.name(), i)).collect();
    for (i, a) in c.agents.iter().enumerate() {
        for (ev, next) in a.moves(tick) {
            let (kind, msg) = ev.sort_key();
            let key = (a.name().to_string(), kind, msg.to_string());
            let mut agents = c.agents.clone();
            agents[i] = next;
            match &ev {
                Event::Emit(m) if policy.delivery == Delivery::Synchronous => {
                    let Some(&r) = index.get(m.receiver.as_str()) else { continue };
                    for res in c.agents[r].deliver(m, tick + 1) {
                        match res {
                            Ok(recv) => {
                                let mut agents = agents.clone();
                                agents[r] = recv;
                                out.push((key.clone(), Ok(Composite { agents, network: c.network.clone() })));
                            }
                            // A rendezvous the receiver cannot take simply does not happen.
                            Err(_) => {}
                        }
                    }
                }
                Event::Emit(m) => {
                    if c.network.pair_depth(&m.sender, &m.receiver) >= limits.queue_capacity {
                        *truncated = true;
                        continue;
                    }
                    let mut network = c.network.clone();
                    network.messages.push(Envelope { instance: m.clone(), send_tick: tick });
                    out.push((key, Ok(Composite { agents, network })));
                }
                _ => out.push((key, Ok(Composite { agents, network: c.network.clone() }))),
            }
        }
    }
    for i in c.network.deliverable(policy.delivery) {
        let env = &c.network.messages[i];
        let Some(&r) = index.get(env.instance.receiver.as_str()) else { continue };
        let key = (env.instance.receiver.clone(), 1, env.instance.schema.clone());
        let mut network = c.network.clone();
        network.messages.remove(i);
        if policy.loss_enabled {
            out.push(((env.instance.receiver.clone(), 3, env.instance.schema.clone()), Ok(Composite { agents: c.agents.clone(), network: network.clone() })));
        }
        for res in c.agents[r].deliver(&env.instance, tick) {
            match res {
                Ok(recv) => {
                    let mut agents = c.agents.clone();
                    agents[r] = recv;
                    out.push((key.clone(), Ok(Composite { agents, network: network.clone() })));
                }
                Err(f) => {
                    let mut hs = c.histories();
                    hs[r] = delivered_history(c.agents[r].history(), &env.instance, tick);
                    out.push((key.clone(), Err((f, hs))));
                }
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

// The faulting agent's history with the offending reception appended, for witnesses.
fn delivered_history(h: &History, m: &MessageInstance, tick: u64) -> History {
    let mut h = h.clone();
    h.observations.push(crate::enactment::Observation::recv(m.clone(), tick));
    h
}

/// Breadth-first exploration of every reachable composite state.
pub fn explore<A: Agent>(agents: Vec<A>, policy: &SimPolicy, limits: &Limits) -> Exploration<A> {
    let start = Composite { agents, network: InTransit::default() };
    let mut seen: HashSet<Composite<A>> = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    let mut ex = Exploration {
        completed: Vec::new(),
        stuck: Vec::new(),
        faults: Vec::new(),
        stats: ExploreStats { states: 0, enactments: 0, max_queue_depth: 0 },
        bound_exceeded: false,
    };
    let mut fault_seen = HashSet::new();
    while let Some(c) = queue.pop_front() {
        ex.stats.states += 1;
        ex.stats.max_queue_depth = ex.stats.max_queue_depth.max(c.network.messages.len());
        let succ = successors(&c, policy, limits, &mut ex.bound_exceeded);
        if succ.is_empty() {
            if c.is_final() {
                ex.completed.push(c.agents);
            } else {
                ex.stuck.push((c.agents, c.network.messages));
            }
            continue;
        }
        for (_, s) in succ {
            match s {
                Ok(n) => {
                    if seen.contains(&n) {
                        continue;
                    }
                    if seen.len() >= limits.max_states {
                        ex.bound_exceeded = true;
                        continue;
                    }
                    seen.insert(n.clone());
                    queue.push_back(n);
                }
                Err(f) => {
                    if fault_seen.insert(f.clone()) {
                        ex.faults.push(f);
                    }
                }
            }
        }
    }
    ex.stats.enactments = ex.completed.len();
    ex
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunEnd {
    Completed,
    Stuck,
    Fault(Fault),
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub histories: Vec<History>,
    pub end: RunEnd,
    pub steps: usize,
}

/// One run, choosing uniformly among enabled steps with a generator seeded from the policy.
pub fn run_one<A: Agent>(agents: Vec<A>, policy: &SimPolicy, max_steps: usize) -> RunOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let limits = Limits { max_states: usize::MAX, queue_capacity: usize::MAX };
    let mut c = Composite { agents, network: InTransit::default() };
    for steps in 0..max_steps {
        let succ = successors(&c, policy, &limits, &mut false);
        let Some((_, pick)) = succ.choose(&mut rng) else {
            let end = if c.is_final() { RunEnd::Completed } else { RunEnd::Stuck };
            return RunOutcome { histories: c.histories(), end, steps };
        };
        match pick {
            Ok(n) => c = n.clone(),
            Err((f, hs)) => return RunOutcome { histories: hs.clone(), end: RunEnd::Fault(f.clone()), steps },
        }
    }
    RunOutcome { histories: c.histories(), end: RunEnd::StepLimit, steps: max_steps }
}

/// An agent that sends a fixed list of messages in order and accepts anything.
/// Used to exercise the network on its own.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScriptedSender {
    pub history: History,
    pub script: Vec<MessageInstance>,
}

impl ScriptedSender {
    pub fn new(name: &str, script: Vec<MessageInstance>) -> Self {
        ScriptedSender { history: History::new(name), script }
    }
}

impl Agent for ScriptedSender {
    fn name(&self) -> &str {
        &self.history.owner
    }

    fn history(&self) -> &History {
        &self.history
    }

    fn moves(&self, tick: u64) -> Vec<(Event, Self)> {
        let Some(m) = self.script.first() else { return Vec::new() };
        let mut next = self.clone();
        next.script.remove(0);
        next.history.observations.push(crate::enactment::Observation::emit(m.clone(), tick));
        vec![(Event::Emit(m.clone()), next)]
    }

    fn deliver(&self, m: &MessageInstance, tick: u64) -> Vec<Result<Self, Fault>> {
        let mut next = self.clone();
        next.history.observations.push(crate::enactment::Observation::recv(m.clone(), tick));
        vec![Ok(next)]
    }

    fn is_done(&self) -> bool {
        self.script.is_empty()
    }
}
