//! Grades each language on each representational criterion by running scenarios.
//!
//! | criterion | Yes | Partial | No |
//! |---|---|---|---|
//! | Instances | all four two-instance pricing runs comply | some do | none do |
//! | Integrity | a changed item and a reused key are both refused | only the changed item is | neither |
//! | SocialMeaning | Instances and Integrity are Yes | either is Partial | otherwise |
//! | Concurrency | flexible purchase is realizable and the crossing run can happen | | otherwise |
//! | Extensibility | the Seller's pricing-with-catalog history complies | | otherwise |
//! | Asynchrony | the language's network is not synchronous | | otherwise |
//! | Unordering | unordered delivery gives the same verdicts as FIFO on two protocols | | otherwise |

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bspl::InfoProtocol;
use crate::cfp::{CfpExpr, DEFAULT_BOUND};
use crate::enactment::{log_from_histories, print_log, History, MessageInstance, ObsKind};
use crate::filter::{check_compliance, Backend, BsplAgent, ScopedParams};
use crate::fixtures::{self, Enactment};
use crate::hapn::{accepts, hapn_integrity_check};
use crate::netsim::{explore, histories_of, Delivery, Limits, SimPolicy};
use crate::projection::{extract_fsm, payload_signatures, project, Doctrine};
use crate::realizability::{check_realizability, language_preset, Language};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lang {
    Scribble,
    TraceC,
    TraceF,
    Hapn,
    Bspl,
}

impl Lang {
    pub const ALL: [Lang; 5] = [Lang::Scribble, Lang::TraceC, Lang::TraceF, Lang::Hapn, Lang::Bspl];

    pub fn label(self) -> &'static str {
        match self {
            Lang::Scribble => "Scribble",
            Lang::TraceC => "Trace-C",
            Lang::TraceF => "Trace-F",
            Lang::Hapn => "HAPN",
            Lang::Bspl => "BSPL",
        }
    }

    fn preset(self) -> Option<Language> {
        match self {
            Lang::Scribble => Some(Language::Scribble),
            Lang::TraceC => Some(Language::TraceC),
            Lang::TraceF => Some(Language::TraceF),
            Lang::Hapn => Some(Language::Hapn),
            Lang::Bspl => None,
        }
    }

    /// The network the language assumes. Information protocols assume nothing about order.
    pub fn delivery(self) -> Delivery {
        self.preset().map(|l| language_preset(l).delivery).unwrap_or(Delivery::Unordered)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    Instances,
    Integrity,
    SocialMeaning,
    Concurrency,
    Extensibility,
    Asynchrony,
    Unordering,
}

impl Criterion {
    pub const ALL: [Criterion; 7] = [
        Criterion::Instances,
        Criterion::Integrity,
        Criterion::SocialMeaning,
        Criterion::Concurrency,
        Criterion::Extensibility,
        Criterion::Asynchrony,
        Criterion::Unordering,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grade {
    Yes,
    Partial,
    No,
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub scenario: String,
    /// Whether the outcome counts in the language's favor.
    pub supports: bool,
    pub outcome: String,
    /// The enactment the scenario judged, in log format.
    pub log: Option<String>,
}

impl Evidence {
    fn new(scenario: impl Into<String>, supports: bool, outcome: impl Into<String>) -> Self {
        Evidence { scenario: scenario.into(), supports, outcome: outcome.into(), log: None }
    }

    fn with_log(mut self, hs: &[History]) -> Self {
        self.log = Some(print_log(&log_from_histories(hs)));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub language: Lang,
    pub criterion: Criterion,
    pub verdict: Grade,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix {
    pub schema_version: u32,
    /// Seconds since the epoch when the report was produced.
    pub generated_at: u64,
    pub reports: Vec<CriterionReport>,
}

impl Matrix {
    pub fn grade(&self, l: Lang, c: Criterion) -> Option<Grade> {
        self.reports.iter().find(|r| r.language == l && r.criterion == c).map(|r| r.verdict)
    }

    /// A criteria-by-languages grid.
    pub fn render_text(&self) -> String {
        let mut out = format!("{:<14}", "");
        for l in Lang::ALL {
            out.push_str(&format!("{:<10}", l.label()));
        }
        out = out.trim_end().to_string();
        out.push('\n');
        for c in Criterion::ALL {
            let mut row = format!("{:<14}", format!("{c:?}"));
            for l in Lang::ALL {
                let g = self.grade(l, c).map(|g| g.to_string()).unwrap_or_else(|| "?".into());
                row.push_str(&format!("{g:<10}"));
            }
            out.push_str(row.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

// Per-agent compliance checkers for one protocol, by language.
fn cfp_backend(e: &CfpExpr, role: &str, doctrine: Doctrine) -> Backend {
    // Local views only feed a type-level machine; a failed Scribble projection falls back
    // to the plain one so the machine still exists.
    let l = project(e, role, doctrine).unwrap_or_else(|_| project(e, role, Doctrine::TraceF).unwrap());
    Backend::cfp(extract_fsm(&l, &payload_signatures(e)))
}

struct Protocols {
    scribble: &'static str,
    trace_c: &'static str,
    trace_f: &'static str,
    hapn: &'static str,
    bspl: &'static [&'static str],
}

fn backend(l: Lang, p: &Protocols, role: &str) -> Backend {
    match l {
        Lang::Scribble => cfp_backend(&fixtures::scribble(p.scribble).body, role, Doctrine::Scribble),
        Lang::TraceC => cfp_backend(&fixtures::trace(p.trace_c), role, Doctrine::TraceC),
        Lang::TraceF => cfp_backend(&fixtures::trace(p.trace_f), role, Doctrine::TraceF),
        Lang::Hapn => Backend::hapn(fixtures::hapn(p.hapn)),
        Lang::Bspl => Backend::Bspl(p.bspl.iter().map(|n| fixtures::bspl(n)).collect()),
    }
}

fn complies(l: Lang, p: &Protocols, hs: &[History]) -> Result<(), String> {
    for h in hs {
        check_compliance(h, &backend(l, p, &h.owner)).map_err(|e| format!("{}: {e}", h.owner))?;
    }
    Ok(())
}

const ALT_PRICING: Protocols = Protocols {
    scribble: "alt_pricing",
    trace_c: "alt_pricing_star",
    trace_f: "alt_pricing",
    hapn: "alt_pricing",
    bspl: &["alt_pricing"],
};

const PRICING: Protocols = Protocols {
    scribble: "concurrent_pricing",
    trace_c: "pricing",
    trace_f: "pricing",
    hapn: "concurrent_pricing",
    bspl: &["pricing", "catalog"],
};

/// Orders an enactment as one event stream in which every reception directly follows its
/// emission, if there is such an order.
pub fn synchronous_order(hs: &[History]) -> Option<Vec<MessageInstance>> {
    let mut pos = vec![0usize; hs.len()];
    let mut out = Vec::new();
    loop {
        let mut progressed = false;
        for s in 0..hs.len() {
            let Some(o) = hs[s].observations.get(pos[s]) else { continue };
            if o.kind != ObsKind::Emission {
                continue;
            }
            let r = (0..hs.len()).find(|&r| {
                r != s
                    && hs[r].observations.get(pos[r]).is_some_and(|x| x.kind == ObsKind::Reception && x.instance == o.instance)
            });
            if let Some(r) = r {
                pos[s] += 1;
                pos[r] += 1;
                out.push(o.instance.clone());
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    let done = pos.iter().zip(hs).all(|(p, h)| *p == h.observations.len());
    done.then_some(out)
}

fn instances(l: Lang) -> Vec<Evidence> {
    fixtures::two_pricing_instances()
        .into_iter()
        .map(|Enactment { name, histories }| {
            let r = complies(l, &ALT_PRICING, &histories);
            let outcome = r.clone().err().unwrap_or_else(|| "every agent complies".into());
            Evidence::new(format!("two pricing instances, {name}"), r.is_ok(), outcome).with_log(&histories)
        })
        .collect()
}

fn refuses(l: Lang, hs: &[History]) -> Result<(), String> {
    match l {
        Lang::TraceF => {
            let e = fixtures::trace(ALT_PRICING.trace_f);
            for h in hs {
                let mut mon = ScopedParams::new(&e, &h.owner);
                for o in &h.observations {
                    mon.observe(o).map_err(|e| format!("{}: {e}", h.owner))?;
                }
            }
            Ok(())
        }
        Lang::Hapn => {
            let order = synchronous_order(hs).ok_or("no synchronous order")?;
            hapn_integrity_check(&fixtures::hapn(ALT_PRICING.hapn), &order).map_err(|e| e.to_string())
        }
        _ => complies(l, &ALT_PRICING, hs),
    }
}

fn integrity(l: Lang) -> Vec<Evidence> {
    [("item changed within an instance", fixtures::conflicting_offer()), ("key reused for a new item", fixtures::reused_key())]
        .into_iter()
        .map(|(name, hs)| {
            let r = refuses(l, &hs);
            let outcome = match &r {
                Ok(()) => "accepted".to_string(),
                Err(e) => format!("refused: {e}"),
            };
            Evidence::new(name, r.is_err(), outcome).with_log(&hs)
        })
        .collect()
}

/// Normal form of an enactment for comparison: histories by owner, without ticks.
fn shape(hs: &[History]) -> Vec<(String, Vec<(ObsKind, MessageInstance)>)> {
    let mut out: Vec<_> = hs
        .iter()
        .map(|h| (h.owner.clone(), h.observations.iter().map(|o| (o.kind, o.instance.clone())).collect()))
        .collect();
    out.sort();
    out
}

/// Scripted information-protocol agents for every role, each holding the candidates it sends.
pub fn bspl_agents(protocols: Vec<InfoProtocol>, candidates: &[MessageInstance]) -> Vec<BsplAgent> {
    let mut roles: Vec<String> = protocols.iter().flat_map(|p| p.roles.clone()).collect();
    roles.sort();
    roles.dedup();
    let shared = Arc::new(protocols);
    roles
        .iter()
        .map(|r| {
            let mine = candidates.iter().filter(|m| m.sender == *r).cloned().collect();
            BsplAgent::new(r, shared.clone(), mine)
        })
        .collect()
}

/// Every maximal enactment of the scripted agents under `delivery`.
pub fn bspl_enactments(protocols: Vec<InfoProtocol>, candidates: &[MessageInstance], delivery: Delivery) -> Vec<Vec<History>> {
    let ex = explore(bspl_agents(protocols, candidates), &SimPolicy::new(delivery), &Limits::default());
    ex.completed.iter().map(|a| histories_of(a)).collect()
}

pub fn reachable(enactments: &[Vec<History>], target: &[History]) -> bool {
    let t = shape(target);
    enactments.iter().any(|e| shape(e) == t)
}

fn concurrency(l: Lang) -> Vec<Evidence> {
    let runs = fixtures::flexible_purchase_runs();
    let crossing = &runs.iter().find(|e| e.name == "crossing").unwrap().histories;
    match l {
        Lang::Bspl => {
            let candidates: Vec<MessageInstance> = crossing
                .iter()
                .flat_map(|h| h.observations.iter().filter(|o| o.kind == ObsKind::Emission).map(|o| o.instance.clone()))
                .collect();
            let all = bspl_enactments(vec![fixtures::bspl("flexible_purchase")], &candidates, l.delivery());
            let ok = reachable(&all, crossing);
            let outcome = format!("{} enactments explored, crossing run reachable: {ok}", all.len());
            vec![Evidence::new("flexible purchase, crossing run", ok, outcome).with_log(crossing)]
        }
        Lang::Hapn => {
            let m = fixtures::hapn("flexible_purchase");
            let ok = synchronous_order(crossing).is_some_and(|o| accepts(&m, &o));
            let outcome = if ok { "accepted" } else { "no synchronous order produces it" };
            vec![Evidence::new("flexible purchase, crossing run", ok, outcome).with_log(crossing)]
        }
        _ => {
            let e = match l {
                Lang::Scribble => fixtures::scribble("flexible_purchase").body,
                _ => fixtures::trace("flexible_purchase"),
            };
            let v = check_realizability(&e, &language_preset(l.preset().unwrap()), DEFAULT_BOUND);
            vec![Evidence::new("flexible purchase realizability", v.is_realizable(), v.to_string())]
        }
    }
}

fn extensibility(l: Lang) -> Vec<Evidence> {
    let hs = fixtures::pricing_with_catalog();
    let seller = hs.iter().find(|h| h.owner == "Seller").unwrap();
    let r = check_compliance(seller, &backend(l, &PRICING, "Seller"));
    let outcome = r.clone().err().unwrap_or_else(|| "complies".into());
    vec![Evidence::new("Seller plays pricing and catalog", r.is_ok(), outcome).with_log(std::slice::from_ref(seller))]
}

struct Scenario {
    name: &'static str,
    scribble: &'static str,
    trace: &'static str,
    hapn: &'static str,
    bspl: &'static str,
    candidates: fn() -> Vec<MessageInstance>,
}

const ENVIRONMENT: [Scenario; 2] = [
    Scenario {
        name: "want and will-pay",
        scribble: "want_willpay",
        trace: "want_willpay",
        hapn: "want_willpay",
        bspl: "want_willpay",
        candidates: || vec![fixtures::want(), fixtures::will_pay()],
    },
    Scenario {
        name: "indirect payment",
        scribble: "indirect_payment",
        trace: "indirect_payment",
        hapn: "indirect_payment",
        bspl: "indirect_payment",
        candidates: || fixtures::indirect_payment_messages().to_vec(),
    },
];

// Whether the language copes with every enactment the network allows.
fn verdict_under(l: Lang, s: &Scenario, d: Delivery) -> (bool, String) {
    match l {
        Lang::Hapn | Lang::Bspl => {
            let p = fixtures::bspl(s.bspl);
            let all = bspl_enactments(vec![p], &(s.candidates)(), d);
            let protos = Protocols { scribble: s.scribble, trace_c: s.trace, trace_f: s.trace, hapn: s.hapn, bspl: &[] };
            let bad = all.iter().find_map(|hs| match l {
                Lang::Bspl => hs
                    .iter()
                    .find_map(|h| check_compliance(h, &Backend::Bspl(vec![fixtures::bspl(s.bspl)])).err()),
                _ => complies(l, &protos, hs).err(),
            });
            match bad {
                None => (true, format!("all {} enactments comply", all.len())),
                Some(e) => (false, e),
            }
        }
        _ => {
            let e = match l {
                Lang::Scribble => fixtures::scribble(s.scribble).body,
                _ => fixtures::trace(s.trace),
            };
            let cfg = language_preset(l.preset().unwrap());
            let v = check_realizability(&e, &crate::realizability::CommConfig { delivery: d, ..cfg }, DEFAULT_BOUND);
            (v.is_realizable(), v.to_string())
        }
    }
}

fn unordering(l: Lang) -> Vec<Evidence> {
    ENVIRONMENT
        .iter()
        .map(|s| {
            let (fifo, a) = verdict_under(l, s, Delivery::FifoPairwise);
            let (unordered, b) = verdict_under(l, s, Delivery::Unordered);
            Evidence::new(s.name, fifo == unordered, format!("FIFO: {a}; unordered: {b}"))
        })
        .collect()
}

fn all_support(ev: &[Evidence]) -> bool {
    ev.iter().all(|e| e.supports)
}

fn column(l: Lang) -> Vec<CriterionReport> {
    let mut out = Vec::new();
    let mut push = |criterion, verdict, evidence| out.push(CriterionReport { language: l, criterion, verdict, evidence });

    let inst = instances(l);
    let inst_grade = match inst.iter().filter(|e| e.supports).count() {
        n if n == inst.len() => Grade::Yes,
        0 => Grade::No,
        _ => Grade::Partial,
    };
    let integ = integrity(l);
    let integ_grade = match (integ[0].supports, integ[1].supports) {
        (true, true) => Grade::Yes,
        (true, false) => Grade::Partial,
        _ => Grade::No,
    };
    let social = match (inst_grade, integ_grade) {
        (Grade::Yes, Grade::Yes) => Grade::Yes,
        (Grade::Partial, _) | (_, Grade::Partial) => Grade::Partial,
        _ => Grade::No,
    };
    let social_ev = vec![Evidence::new(
        "derived from instances and integrity",
        social == Grade::Yes,
        format!("instances {inst_grade}, integrity {integ_grade}"),
    )];
    push(Criterion::Instances, inst_grade, inst);
    push(Criterion::Integrity, integ_grade, integ);
    push(Criterion::SocialMeaning, social, social_ev);
    for (c, ev) in [(Criterion::Concurrency, concurrency(l)), (Criterion::Extensibility, extensibility(l))] {
        push(c, if all_support(&ev) { Grade::Yes } else { Grade::No }, ev);
    }
    let asynchronous = l.delivery() != Delivery::Synchronous;
    let ev = vec![Evidence::new("assumed delivery", asynchronous, format!("{:?}", l.delivery()))];
    push(Criterion::Asynchrony, if asynchronous { Grade::Yes } else { Grade::No }, ev);
    let ev = unordering(l);
    push(Criterion::Unordering, if all_support(&ev) { Grade::Yes } else { Grade::No }, ev);
    out
}

/// Runs every scenario. With `jobs > 1` the languages are graded on separate threads;
/// the report is the same either way.
pub fn run_matrix(jobs: usize) -> Matrix {
    let mut columns: BTreeMap<Lang, Vec<CriterionReport>> = BTreeMap::new();
    if jobs > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = Lang::ALL.iter().map(|&l| (l, s.spawn(move || column(l)))).collect();
            for (l, h) in handles {
                columns.insert(l, h.join().expect("scenario thread panicked"));
            }
        });
    } else {
        for l in Lang::ALL {
            columns.insert(l, column(l));
        }
    }
    let mut reports: Vec<CriterionReport> = columns.into_values().flatten().collect();
    reports.sort_by_key(|r| (r.criterion, r.language));
    let generated_at =
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    Matrix { schema_version: SCHEMA_VERSION, generated_at, reports }
}
