use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use workbench::bspl::{parse_bspl, project_bspl, validate_bspl, InfoProtocol, Severity};
use workbench::cfp::{
    eliminate_shuffle, parse_scribble, parse_scribble_unchecked, parse_trace, simplify, trace_diagnostics, unroll,
    validate_scribble, CfpExpr,
};
use workbench::commitments::{bind_spec, commitment_states, parse_cupid, CommitmentState};
use workbench::enactment::{histories_from_log, log_from_histories, parse_log, print_log, resolve_roles, EntryKind, History};
use workbench::filter::{check_compliance, Backend, BsplAgent};
use workbench::hapn::parse_hapn;
use workbench::matrix::run_matrix;
use workbench::netsim::{explore, histories_of, run_one, Agent, Delivery, Limits, RunEnd, SimPolicy};
use workbench::projection::{extract_fsm, payload_signatures, project, Doctrine};
use workbench::realizability::{
    check_realizability, language_preset, CfpAgent, CommConfig, Interpretation, Language, Reception,
};

/// Parse, project, check and simulate multiagent protocols.
///
/// Formats are chosen by extension: .bspl information protocols, .trace trace expressions,
/// .scr global Scribble protocols, .hapn state machines, .cupid commitments, .log enactments.
///
/// Exit status is 0 on success, Realizable or compliant; 1 on Unrealizable, violations or
/// error diagnostics; 2 on usage and parse errors.
#[derive(Parser)]
#[command(name = "workbench", version)]
struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a file and report well-formedness diagnostics. With --log, also check
    /// every agent of the enactment against the protocol.
    Check {
        path: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DoctrineArg::TraceF)]
        doctrine: DoctrineArg,
    },
    /// Print a role's local view.
    Project {
        path: PathBuf,
        role: String,
        #[arg(long, value_enum, default_value_t = DoctrineArg::TraceF)]
        doctrine: DoctrineArg,
        /// Print the type-level state machine in Graphviz form instead.
        #[arg(long)]
        dot: bool,
    },
    /// Decide whether a trace or Scribble protocol can be enacted by its projections.
    Realizability {
        path: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        bound: u64,
    },
    /// Run agents over a simulated network and print the enactment logs.
    ///
    /// Trace and Scribble protocols run their projections. Information protocols run
    /// agents that try to send the emissions listed in --messages.
    Simulate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        messages: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print every maximal enactment instead of one seeded run.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        bound: u64,
    },
    /// Print the state of each commitment instance in an enactment.
    Commitments {
        protocol: PathBuf,
        specs: PathBuf,
        log: PathBuf,
        /// The current day. Defaults to the last day in the log.
        #[arg(long)]
        now: Option<u64>,
    },
    /// Grade every language on every criterion.
    Matrix {
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(clap::Args)]
struct ConfigArgs {
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    policy: Option<Policy>,
    #[arg(long, value_enum)]
    interpretation: Option<InterpretationArg>,
    #[arg(long, value_enum)]
    reception: Option<ReceptionArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    TraceC,
    TraceF,
    Scribble,
    Hapn,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Sync,
    Fifo,
    Unordered,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpretationArg {
    Ss,
    Sr,
    Rs,
    Rr,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReceptionArg {
    Anytime,
    Blocking,
}

#[derive(Clone, Copy, ValueEnum)]
enum DoctrineArg {
    TraceC,
    TraceF,
    Scribble,
}

impl From<DoctrineArg> for Doctrine {
    fn from(d: DoctrineArg) -> Self {
        match d {
            DoctrineArg::TraceC => Doctrine::TraceC,
            DoctrineArg::TraceF => Doctrine::TraceF,
            DoctrineArg::Scribble => Doctrine::Scribble,
        }
    }
}

impl From<Policy> for Delivery {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Sync => Delivery::Synchronous,
            Policy::Fifo => Delivery::FifoPairwise,
            Policy::Unordered => Delivery::Unordered,
        }
    }
}

impl ConfigArgs {
    /// The preset, defaulting by file kind, with explicit flags on top.
    fn resolve(&self, is_scribble: bool) -> CommConfig {
        let preset = self.preset.unwrap_or(if is_scribble { Preset::Scribble } else { Preset::TraceF });
        let mut cfg = language_preset(match preset {
            Preset::TraceC => Language::TraceC,
            Preset::TraceF => Language::TraceF,
            Preset::Scribble => Language::Scribble,
            Preset::Hapn => Language::Hapn,
        });
        if let Some(p) = self.policy {
            cfg.delivery = p.into();
        }
        if let Some(i) = self.interpretation {
            cfg.interpretation = match i {
                InterpretationArg::Ss => Interpretation::SS,
                InterpretationArg::Sr => Interpretation::SR,
                InterpretationArg::Rs => Interpretation::RS,
                InterpretationArg::Rr => Interpretation::RR,
            };
        }
        if let Some(r) = self.reception {
            cfg.reception = match r {
                ReceptionArg::Anytime => Reception::Anytime,
                ReceptionArg::Blocking => Reception::BlockingSelector,
            };
        }
        cfg
    }
}

/// Failure of a command: 1 for a negative result, 2 for bad input.
struct Failure(u8, String);

fn usage(msg: impl Into<String>) -> Failure {
    Failure(2, msg.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn ext(path: &Path) -> &str {
    path.extension().and_then(|e| e.to_str()).unwrap_or("")
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

fn load_bspl(path: &Path) -> Result<InfoProtocol, Failure> {
    parse_bspl(&read(path)?).map_err(|e| parse_err(path, e))
}

/// A trace or Scribble file as a global expression. The flag says which it was.
fn load_global(path: &Path) -> Result<(CfpExpr, bool), Failure> {
    let text = read(path)?;
    match ext(path) {
        "trace" => parse_trace(&text).map(|e| (e, false)).map_err(|e| parse_err(path, e)),
        "scr" => parse_scribble(&text).map(|p| (p.body, true)).map_err(|e| parse_err(path, e)),
        other => Err(usage(format!("{}: expected .trace or .scr, got `.{other}`", path.display()))),
    }
}

fn load_log(path: &Path) -> Result<Vec<History>, Failure> {
    let entries = parse_log(&read(path)?).map_err(|e| parse_err(path, e))?;
    Ok(histories_from_log(&entries))
}

fn json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable output")
}

fn check(cli_format: Format, path: &Path, log: Option<&Path>, doctrine: Doctrine) -> Result<String, Failure> {
    let text = read(path)?;
    let (mut lines, mut failed, backend): (Vec<String>, bool, Box<dyn Fn(&str) -> Backend>) = match ext(path) {
        "bspl" => {
            let p = parse_bspl(&text).map_err(|e| parse_err(path, e))?;
            let diags = validate_bspl(&p);
            let failed = diags.iter().any(|d| d.severity == Severity::Error);
            let lines = diags.iter().map(|d| d.to_string()).collect();
            (lines, failed, Box::new(move |_: &str| Backend::Bspl(vec![p.clone()])))
        }
        "trace" | "scr" => {
            let (e, lines) = if ext(path) == "trace" {
                let e = parse_trace(&text).map_err(|e| parse_err(path, e))?;
                let d = trace_diagnostics(&e);
                (e, d)
            } else {
                let p = parse_scribble_unchecked(&text).map_err(|e| parse_err(path, e))?;
                let d = validate_scribble(&p).iter().map(|e| e.to_string()).collect();
                (p.body, d)
            };
            let failed = !lines.is_empty();
            let sigs = payload_signatures(&e);
            let backend = move |role: &str| match project(&e, role, doctrine) {
                Ok(l) => Backend::cfp(extract_fsm(&l, &sigs)),
                Err(_) => Backend::cfp(extract_fsm(&project(&e, role, Doctrine::TraceF).unwrap(), &sigs)),
            };
            (lines, failed, Box::new(backend))
        }
        "hapn" => {
            let m = parse_hapn(&text).map_err(|e| parse_err(path, e))?;
            (vec![], false, Box::new(move |_: &str| Backend::hapn(m.clone())))
        }
        "cupid" => {
            parse_cupid(&text).map_err(|e| parse_err(path, e))?;
            (vec![], false, Box::new(|_: &str| unreachable!()))
        }
        other => return Err(usage(format!("{}: unknown extension `.{other}`", path.display()))),
    };
    if let Some(log) = log {
        if ext(path) == "cupid" {
            return Err(usage("--log needs a protocol, not commitments"));
        }
        let mut hs = load_log(log)?;
        if ext(path) == "bspl" {
            resolve_roles(&mut hs, &load_bspl(path)?);
        }
        for h in &hs {
            match check_compliance(h, &backend(&h.owner)) {
                Ok(()) => lines.push(format!("{}: compliant", h.owner)),
                Err(e) => {
                    failed = true;
                    lines.push(format!("{}: {e}", h.owner));
                }
            }
        }
    }
    let out = match cli_format {
        Format::Json => json(&serde_json::json!({ "ok": !failed, "messages": lines })),
        Format::Text if lines.is_empty() => "ok".to_string(),
        Format::Text => lines.join("\n"),
    };
    if failed {
        Err(Failure(1, out))
    } else {
        Ok(out)
    }
}

fn cmd_project(format: Format, path: &Path, role: &str, doctrine: Doctrine, dot: bool) -> Result<String, Failure> {
    if ext(path) == "bspl" {
        let p = load_bspl(path)?;
        let view = project_bspl(&p, role).map_err(|e| usage(e.to_string()))?;
        return Ok(match format {
            Format::Json => json(&view),
            Format::Text => view.iter().map(|(d, m)| format!("{d:?} {m}")).collect::<Vec<_>>().join("\n"),
        });
    }
    let (e, _) = load_global(path)?;
    if !e.roles().contains(role) {
        return Err(usage(format!("no role `{role}` in {}", path.display())));
    }
    let l = project(&e, role, doctrine).map_err(|f| Failure(1, f.to_string()))?;
    Ok(match (format, dot) {
        (_, true) => extract_fsm(&l, &payload_signatures(&e)).to_dot(role),
        (Format::Json, false) => json(&l),
        (Format::Text, false) => l.to_string(),
    })
}

fn cmd_realizability(format: Format, path: &Path, config: &ConfigArgs, bound: usize) -> Result<String, Failure> {
    let (e, is_scribble) = load_global(path)?;
    let v = check_realizability(&e, &config.resolve(is_scribble), bound);
    let out = match format {
        Format::Json => json(&v),
        Format::Text => v.to_string(),
    };
    if v.is_realizable() {
        Ok(out)
    } else {
        Err(Failure(1, out))
    }
}

fn report_runs<A: Agent>(
    format: Format,
    agents: Vec<A>,
    delivery: Delivery,
    seed: u64,
    exhaustive: bool,
) -> Result<String, Failure> {
    let policy = SimPolicy { seed, ..SimPolicy::new(delivery) };
    if exhaustive {
        let ex = explore(agents, &policy, &Limits::default());
        let logs: Vec<String> =
            ex.completed.iter().map(|a| print_log(&log_from_histories(&histories_of(a)))).collect();
        let out = match format {
            Format::Json => json(&serde_json::json!({
                "enactments": logs, "stuck": ex.stuck.len(), "faults": ex.faults.len(),
                "states": ex.stats.states, "bound_exceeded": ex.bound_exceeded,
            })),
            Format::Text => {
                let mut s: String = logs.iter().enumerate().map(|(i, l)| format!("# enactment {}\n{l}", i + 1)).collect();
                s.push_str(&format!(
                    "# {} complete, {} stuck, {} faulty, {} states",
                    logs.len(),
                    ex.stuck.len(),
                    ex.faults.len(),
                    ex.stats.states
                ));
                s
            }
        };
        return if ex.stuck.is_empty() && ex.faults.is_empty() { Ok(out) } else { Err(Failure(1, out)) };
    }
    let run = run_one(agents, &policy, 10_000);
    let log = print_log(&log_from_histories(&run.histories));
    let end = match &run.end {
        RunEnd::Fault(f) => format!("fault at {}: {:?} {}", f.agent, f.code, f.detail),
        other => format!("{other:?}"),
    };
    let out = match format {
        Format::Json => json(&serde_json::json!({ "log": log, "end": end, "steps": run.steps })),
        Format::Text => format!("{log}# {end}"),
    };
    match run.end {
        RunEnd::Completed => Ok(out),
        _ => Err(Failure(1, out)),
    }
}

fn cmd_simulate(
    format: Format,
    paths: &[PathBuf],
    config: &ConfigArgs,
    messages: Option<&Path>,
    seed: u64,
    exhaustive: bool,
    bound: usize,
) -> Result<String, Failure> {
    if paths.iter().all(|p| ext(p) == "bspl") {
        let protocols: Vec<InfoProtocol> = paths.iter().map(|p| load_bspl(p)).collect::<Result<_, _>>()?;
        let messages = messages.ok_or_else(|| usage("--messages is required for information protocols"))?;
        let entries = parse_log(&read(messages)?).map_err(|e| parse_err(messages, e))?;
        let mut candidates: Vec<_> = entries.into_iter().filter(|e| e.kind == EntryKind::E).map(|e| e.instance).collect();
        for m in &mut candidates {
            if m.receiver.is_empty() {
                if let Some(s) = protocols.iter().find_map(|p| p.message(&m.schema)) {
                    m.receiver = s.receiver.clone();
                }
            }
        }
        let mut roles: Vec<String> = protocols.iter().flat_map(|p| p.roles.clone()).collect();
        roles.sort();
        roles.dedup();
        let shared = Arc::new(protocols);
        let agents: Vec<BsplAgent> = roles
            .iter()
            .map(|r| BsplAgent::new(r, shared.clone(), candidates.iter().filter(|m| m.sender == *r).cloned().collect()))
            .collect();
        let delivery = config.policy.map(Delivery::from).unwrap_or(Delivery::Unordered);
        return report_runs(format, agents, delivery, seed, exhaustive);
    }
    let [path] = paths else {
        return Err(usage("simulate takes one trace or Scribble file, or any number of .bspl files"));
    };
    let (e, is_scribble) = load_global(path)?;
    let cfg = config.resolve(is_scribble);
    let flat = simplify(&eliminate_shuffle(&unroll(&e, bound)));
    let agents = flat
        .roles()
        .iter()
        .map(|r| project(&flat, r, cfg.projection).map(|l| CfpAgent::new(r, l, cfg.reception)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|f| Failure(1, f.to_string()))?;
    report_runs(format, agents, cfg.delivery, seed, exhaustive)
}

fn cmd_commitments(format: Format, protocol: &Path, specs: &Path, log: &Path, now: Option<u64>) -> Result<String, Failure> {
    let p = load_bspl(protocol)?;
    let specs = parse_cupid(&read(specs)?).map_err(|e| parse_err(specs, e))?;
    let mut hs = load_log(log)?;
    resolve_roles(&mut hs, &p);
    let now = now.unwrap_or_else(|| hs.iter().flat_map(|h| h.observations.iter().map(|o| o.day())).max().unwrap_or(0));
    let mut all = Vec::new();
    for s in &specs {
        bind_spec(s, &p).map_err(|e| usage(e.to_string()))?;
        all.extend(commitment_states(s, &hs, now, &p).map_err(|e| Failure(1, e.to_string()))?);
    }
    let violated = all.iter().any(|c| c.state == CommitmentState::Violated);
    let out = match format {
        Format::Json => json(&all),
        Format::Text => {
            let lines: Vec<String> = all
                .iter()
                .map(|c| {
                    let key: Vec<String> = c.key.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    let since: Vec<String> = c.since.iter().map(|(s, d)| format!("{s:?}@{d}")).collect();
                    format!("{} [{}] {:?} ({})", c.name, key.join(","), c.state, since.join(" "))
                })
                .collect();
            format!("day {now}\n{}", lines.join("\n"))
        }
    };
    if violated {
        Err(Failure(1, out))
    } else {
        Ok(out)
    }
}

// A closed pipe is not an error worth a panic.
fn emit(s: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{}", s.trim_end());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let f = cli.format;
    let result = match &cli.command {
        Command::Check { path, log, doctrine } => check(f, path, log.as_deref(), (*doctrine).into()),
        Command::Project { path, role, doctrine, dot } => cmd_project(f, path, role, (*doctrine).into(), *dot),
        Command::Realizability { path, config, bound } => cmd_realizability(f, path, config, *bound as usize),
        Command::Simulate { paths, config, messages, seed, exhaustive, bound } => {
            cmd_simulate(f, paths, config, messages.as_deref(), *seed, *exhaustive, *bound as usize)
        }
        Command::Commitments { protocol, specs, log, now } => cmd_commitments(f, protocol, specs, log, *now),
        Command::Matrix { jobs } => {
            let m = run_matrix(*jobs);
            Ok(match f {
                Format::Json => m.to_json(),
                Format::Text => m.render_text(),
            })
        }
    };
    match result {
        Ok(out) => {
            emit(&out);
            ExitCode::SUCCESS
        }
        Err(Failure(code, msg)) => {
            if code == 2 {
                eprintln!("error: {}", msg.trim_end());
            } else {
                emit(&msg);
            }
            ExitCode::from(code)
        }
    }
}
