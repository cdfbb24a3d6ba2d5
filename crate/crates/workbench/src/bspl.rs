//! Information protocols: roles, adorned parameters and message schemas.
//!
//! ```text
//! protocol Pricing {
//!   roles Buyer Seller
//!   parameters out ID key, out item, out price
//!   Buyer -> Seller: Request[out ID, out item]
//!   Seller -> Buyer: Offer[in ID, out price]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lex::{tokenize, Cursor, SyntaxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Adornment {
    In,
    Out,
}

impl fmt::Display for Adornment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Adornment::In => "in",
            Adornment::Out => "out",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamDecl {
    pub name: String,
    pub adornment: Adornment,
    pub is_key: bool,
}

impl ParamDecl {
    pub fn new(adornment: Adornment, name: &str, is_key: bool) -> Self {
        ParamDecl { name: name.into(), adornment, is_key }
    }
}

impl fmt::Display for ParamDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.adornment, self.name)?;
        if self.is_key {
            f.write_str(" key")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MessageSchema {
    pub sender: String,
    pub receiver: String,
    pub name: String,
    pub params: Vec<ParamDecl>,
}

impl fmt::Display for MessageSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.params.iter().map(|q| q.to_string()).collect();
        write!(f, "{} -> {}: {}[{}]", self.sender, self.receiver, self.name, params.join(", "))
    }
}

impl MessageSchema {
    pub fn param(&self, name: &str) -> Option<&ParamDecl> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn ins(&self) -> impl Iterator<Item = &ParamDecl> {
        self.params.iter().filter(|p| p.adornment == Adornment::In)
    }

    pub fn outs(&self) -> impl Iterator<Item = &ParamDecl> {
        self.params.iter().filter(|p| p.adornment == Adornment::Out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoProtocol {
    pub name: String,
    pub roles: Vec<String>,
    pub public_params: Vec<ParamDecl>,
    pub messages: Vec<MessageSchema>,
}

impl InfoProtocol {
    pub fn message(&self, name: &str) -> Option<&MessageSchema> {
        self.messages.iter().find(|m| m.name == name)
    }

    /// Names of the protocol's key parameters, in declaration order.
    pub fn keys(&self) -> Vec<&str> {
        self.public_params.iter().filter(|p| p.is_key).map(|p| p.name.as_str()).collect()
    }

    /// Key parameters of `m`: its parameters that are protocol keys, plus any it flags
    /// `key` itself. Declaration order of the message.
    pub fn message_keys<'a>(&self, m: &'a MessageSchema) -> Vec<&'a str> {
        let keys = self.keys();
        m.params
            .iter()
            .filter(|q| q.is_key || keys.contains(&q.name.as_str()))
            .map(|q| q.name.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BsplError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("{line}:{col}: role `{role}` declared twice")]
    DuplicateRole { role: String, line: usize, col: usize },
    #[error("{line}:{col}: parameter `{param}` declared twice in {scope}")]
    DuplicateParam { scope: String, param: String, line: usize, col: usize },
}

const PUNCTS: &[&str] = &["->", "{", "}", "[", "]", ",", ":"];

pub fn parse_bspl(text: &str) -> Result<InfoProtocol, BsplError> {
    let mut cur = Cursor::new(tokenize(text, PUNCTS)?);
    cur.expect_word("protocol")?;
    let name = cur.ident("protocol name")?;
    cur.expect_punct("{")?;
    cur.expect_word("roles")?;
    let mut roles: Vec<String> = Vec::new();
    while !cur.is_word("parameters") {
        let t = cur.here().clone();
        let role = cur.ident("role name or `parameters`")?;
        if roles.contains(&role) {
            return Err(BsplError::DuplicateRole { role, line: t.line, col: t.col });
        }
        roles.push(role);
        cur.eat_punct(",");
    }
    cur.bump();
    let public_params = param_list(&mut cur, &format!("protocol {name}"))?;
    let mut messages = Vec::new();
    while !cur.eat_punct("}") {
        let sender = cur.ident("sender role or `}`")?;
        cur.expect_punct("->")?;
        let receiver = cur.ident("receiver role")?;
        cur.expect_punct(":")?;
        let msg = cur.ident("message name")?;
        cur.expect_punct("[")?;
        let params = if cur.eat_punct("]") {
            Vec::new()
        } else {
            let ps = param_list(&mut cur, &format!("message {msg}"))?;
            cur.expect_punct("]")?;
            ps
        };
        messages.push(MessageSchema { sender, receiver, name: msg, params });
    }
    cur.expect_eof()?;
    Ok(InfoProtocol { name, roles, public_params, messages })
}

fn param_list(cur: &mut Cursor, scope: &str) -> Result<Vec<ParamDecl>, BsplError> {
    let mut out: Vec<ParamDecl> = Vec::new();
    loop {
        let adornment = if cur.eat_word("in") {
            Adornment::In
        } else if cur.eat_word("out") {
            Adornment::Out
        } else {
            return Err(cur.error(format!("expected `in` or `out`, found {}", cur.peek())).into());
        };
        let t = cur.here().clone();
        let name = cur.ident("parameter name")?;
        let is_key = cur.eat_word("key");
        if out.iter().any(|p| p.name == name) {
            return Err(BsplError::DuplicateParam { scope: scope.into(), param: name, line: t.line, col: t.col });
        }
        out.push(ParamDecl { name, adornment, is_key });
        if !cur.eat_punct(",") {
            return Ok(out);
        }
    }
}

pub fn print_bspl(p: &InfoProtocol) -> String {
    let params = |ps: &[ParamDecl]| ps.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(", ");
    let mut out = format!("protocol {} {{\n", p.name);
    out.push_str(&format!("  roles {}\n", p.roles.join(" ")));
    out.push_str(&format!("  parameters {}\n", params(&p.public_params)));
    for m in &p.messages {
        out.push_str(&format!("  {m}\n"));
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagCode {
    NoMessages,
    NoKey,
    UnknownRole,
    SelfMessage,
    MessageWithoutKey,
    KeyNotPublicKey,
    PublicParamUnused,
    NeverProduced,
    CausalityUnsatisfiable,
    PrivateParam,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}[{:?}]: {}", self.code, self.message)
    }
}

fn diag(severity: Severity, code: DiagCode, message: String) -> Diagnostic {
    Diagnostic { severity, code, message }
}

/// Well-formedness diagnostics, sorted so the result does not depend on message order.
pub fn validate_bspl(p: &InfoProtocol) -> Vec<Diagnostic> {
    use DiagCode::*;
    use Severity::*;
    let mut out = Vec::new();
    if p.messages.is_empty() {
        out.push(diag(Error, NoMessages, format!("protocol {} has no messages", p.name)));
    }
    let keys = p.keys();
    if keys.is_empty() {
        out.push(diag(Error, NoKey, format!("protocol {} declares no key parameter", p.name)));
    }
    let public: BTreeMap<&str, &ParamDecl> = p.public_params.iter().map(|q| (q.name.as_str(), q)).collect();
    let mut produced: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for m in &p.messages {
        for q in m.outs() {
            produced.entry(q.name.as_str()).or_default().push(m.name.as_str());
        }
    }
    let mut private = BTreeSet::new();
    for m in &p.messages {
        for r in [&m.sender, &m.receiver] {
            if !p.roles.contains(r) {
                out.push(diag(Error, UnknownRole, format!("message {} names undeclared role {r}", m.name)));
            }
        }
        if m.sender == m.receiver {
            out.push(diag(Error, SelfMessage, format!("message {} is sent by {} to itself", m.name, m.sender)));
        }
        if p.message_keys(m).is_empty() {
            out.push(diag(Error, MessageWithoutKey, format!("message {} has no key parameter", m.name)));
        }
        for q in &m.params {
            match public.get(q.name.as_str()) {
                Some(decl) if q.is_key && !decl.is_key => out.push(diag(
                    Error,
                    KeyNotPublicKey,
                    format!("message {} marks {} as key but the protocol does not", m.name, q.name),
                )),
                Some(_) => {}
                None => {
                    private.insert(q.name.as_str());
                }
            }
            if q.adornment == Adornment::In {
                let elsewhere = produced
                    .get(q.name.as_str())
                    .map(|ms| ms.iter().any(|n| *n != m.name))
                    .unwrap_or(false);
                if !elsewhere {
                    out.push(diag(
                        Error,
                        CausalityUnsatisfiable,
                        format!("message {} needs `in {}` but no other message produces it", m.name, q.name),
                    ));
                }
            }
        }
    }
    for q in &p.public_params {
        let used = p.messages.iter().any(|m| m.param(&q.name).is_some());
        if !used {
            out.push(diag(Error, PublicParamUnused, format!("parameter {} appears in no message", q.name)));
        } else if !produced.contains_key(q.name.as_str()) {
            out.push(diag(Error, NeverProduced, format!("no message adorns {} with out", q.name)));
        }
    }
    for q in private {
        out.push(diag(Warning, PrivateParam, format!("{q} is used by messages but not declared public")));
    }
    out.sort();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Send,
    Recv,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("role `{0}` is not part of the protocol")]
pub struct UnknownRole(pub String);

/// The schemas a role takes part in, tagged with its direction.
pub fn project_bspl(p: &InfoProtocol, role: &str) -> Result<Vec<(Direction, MessageSchema)>, UnknownRole> {
    if !p.roles.iter().any(|r| r == role) {
        return Err(UnknownRole(role.into()));
    }
    let mut out = Vec::new();
    for m in &p.messages {
        if m.sender == role {
            out.push((Direction::Send, m.clone()));
        }
        if m.receiver == role {
            out.push((Direction::Recv, m.clone()));
        }
    }
    Ok(out)
}
