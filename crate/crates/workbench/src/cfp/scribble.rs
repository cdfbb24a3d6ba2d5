//! The Scribble subset: global protocols with messages, located choice and `do` recursion.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Arg, CfpExpr, Label};
use crate::lex::{tokenize, Cursor, SyntaxError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScribbleError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("choice at {decider}: branch {branch} starts with {label}, which {decider} does not send")]
    DeciderNotFirstSender { decider: String, branch: usize, label: Label },
    #[error("choice at {decider}: branches share the first event {label}")]
    AmbiguousBranches { decider: String, label: Label },
    #[error("role `{0}` is not declared")]
    UnknownRole(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleDecl {
    pub name: String,
    pub alias: Option<String>,
}

impl RoleDecl {
    /// The name used for the role inside the protocol body.
    pub fn local_name(&self) -> &str {
        self.alias.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScribbleProtocol {
    pub name: String,
    pub roles: Vec<RoleDecl>,
    pub body: CfpExpr,
}

const PUNCTS: &[&str] = &["(", ")", "{", "}", ";", ",", ":"];

/// Parses and then rejects ill-formed choices.
pub fn parse_scribble(text: &str) -> Result<ScribbleProtocol, ScribbleError> {
    let p = parse_scribble_unchecked(text)?;
    if let Some(err) = validate_scribble(&p).into_iter().next() {
        return Err(err);
    }
    Ok(p)
}

/// Parses without checking choice well-formedness, so ill-formed protocols can still be
/// analysed.
pub fn parse_scribble_unchecked(text: &str) -> Result<ScribbleProtocol, ScribbleError> {
    let mut cur = Cursor::new(tokenize(text, PUNCTS)?);
    cur.expect_word("global")?;
    cur.expect_word("protocol")?;
    let name = cur.ident("protocol name")?;
    cur.expect_punct("(")?;
    let mut roles = Vec::new();
    loop {
        cur.expect_word("role")?;
        let role = cur.ident("role name")?;
        let alias = if cur.eat_word("as") { Some(cur.ident("role alias")?) } else { None };
        roles.push(RoleDecl { name: role, alias });
        if cur.eat_punct(")") {
            break;
        }
        cur.expect_punct(",")?;
    }
    let mut st = State { name: name.clone(), declared: BTreeSet::new(), recursive: false };
    cur.expect_punct("{")?;
    let body = block(&mut cur, &mut st)?;
    cur.expect_eof()?;
    let body = if st.recursive { CfpExpr::Rec { var: name.clone(), body: Box::new(body) } } else { body };
    let known: BTreeSet<&str> = roles.iter().map(|r| r.local_name()).collect();
    for l in body.labels() {
        for r in [&l.sender, &l.receiver] {
            if !known.contains(r.as_str()) {
                return Err(ScribbleError::UnknownRole(r.clone()));
            }
        }
    }
    Ok(ScribbleProtocol { name, roles, body })
}

struct State {
    name: String,
    declared: BTreeSet<String>,
    recursive: bool,
}

fn block(cur: &mut Cursor, st: &mut State) -> Result<CfpExpr, SyntaxError> {
    let mut parts = Vec::new();
    while !cur.eat_punct("}") {
        parts.push(statement(cur, st)?);
    }
    Ok(CfpExpr::seq_all(parts))
}

fn statement(cur: &mut Cursor, st: &mut State) -> Result<CfpExpr, SyntaxError> {
    if cur.eat_word("choice") {
        cur.expect_word("at")?;
        let decider = cur.ident("deciding role")?;
        let mut branches = Vec::new();
        loop {
            cur.expect_punct("{")?;
            branches.push(block(cur, st)?);
            if !cur.eat_word("or") {
                break;
            }
        }
        if branches.len() < 2 {
            return Err(cur.error("a choice needs at least two branches"));
        }
        return Ok(CfpExpr::Choice { branches, decider: Some(decider) });
    }
    if cur.eat_word("do") {
        cur.ident("protocol name")?;
        cur.expect_punct("(")?;
        while !cur.eat_punct(")") {
            cur.ident("role")?;
            cur.eat_punct(",");
        }
        cur.expect_punct(";")?;
        st.recursive = true;
        return Ok(CfpExpr::Var(st.name.clone()));
    }
    let msg = cur.ident("message name")?;
    cur.expect_punct("(")?;
    let mut args = Vec::new();
    while !cur.eat_punct(")") {
        let first = cur.ident("argument")?;
        let arg = if cur.eat_punct(":") {
            let ty = cur.ident("type")?;
            st.declared.insert(first.clone());
            Arg { name: Some(first), ty: Some(ty) }
        } else if st.declared.contains(&first) {
            Arg { name: Some(first), ty: None }
        } else {
            Arg { name: None, ty: Some(first) }
        };
        args.push(arg);
        if !cur.is_punct(")") {
            cur.expect_punct(",")?;
        }
    }
    cur.expect_word("from")?;
    let sender = cur.ident("sender role")?;
    cur.expect_word("to")?;
    let receiver = cur.ident("receiver role")?;
    cur.expect_punct(";")?;
    let payload = if args.is_empty() { None } else { Some(args) };
    Ok(CfpExpr::Atom { label: Label { sender, receiver, msg }, payload })
}

/// Every choice must be decided by the sender of each branch's first event, and the
/// branches must start with distinct events.
pub fn validate_scribble(p: &ScribbleProtocol) -> Vec<ScribbleError> {
    let mut out = Vec::new();
    check_choices(&p.body, &mut out);
    out
}

fn check_choices(e: &CfpExpr, out: &mut Vec<ScribbleError>) {
    match e {
        CfpExpr::Choice { branches, decider } => {
            if let Some(d) = decider {
                let mut seen = BTreeSet::new();
                for (i, b) in branches.iter().enumerate() {
                    for label in b.first_labels() {
                        if &label.sender != d {
                            out.push(ScribbleError::DeciderNotFirstSender {
                                decider: d.clone(),
                                branch: i + 1,
                                label: label.clone(),
                            });
                        }
                        if !seen.insert(label.clone()) {
                            out.push(ScribbleError::AmbiguousBranches { decider: d.clone(), label });
                        }
                    }
                }
            }
            branches.iter().for_each(|b| check_choices(b, out));
        }
        CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => {
            check_choices(a, out);
            check_choices(b, out);
        }
        CfpExpr::Rec { body, .. } => check_choices(body, out),
        _ => {}
    }
}

pub fn print_scribble(p: &ScribbleProtocol) -> String {
    let roles: Vec<String> = p
        .roles
        .iter()
        .map(|r| match &r.alias {
            Some(a) => format!("role {} as {a}", r.name),
            None => format!("role {}", r.name),
        })
        .collect();
    let mut out = format!("global protocol {}({}) {{\n", p.name, roles.join(", "));
    let body = match &p.body {
        CfpExpr::Rec { var, body } if var == &p.name => body.as_ref(),
        other => other,
    };
    let call: Vec<&str> = p.roles.iter().map(|r| r.local_name()).collect();
    let call = format!("do {}({});", p.name, call.join(", "));
    write_block(body, 1, &call, &mut out);
    out.push_str("}\n");
    out
}

fn write_block(e: &CfpExpr, depth: usize, call: &str, out: &mut String) {
    let pad = "  ".repeat(depth);
    match e {
        CfpExpr::Epsilon => {}
        CfpExpr::Seq(a, b) => {
            write_block(a, depth, call, out);
            write_block(b, depth, call, out);
        }
        CfpExpr::Var(_) => {
            out.push_str(&pad);
            out.push_str(call);
            out.push('\n');
        }
        CfpExpr::Atom { label, payload } => {
            let args = payload.as_deref().map(render_args).unwrap_or_default();
            out.push_str(&format!("{pad}{}({args}) from {} to {};\n", label.msg, label.sender, label.receiver));
        }
        CfpExpr::Choice { branches, decider } => {
            let d = decider.as_deref().unwrap_or("?");
            out.push_str(&format!("{pad}choice at {d} {{\n"));
            for (i, b) in branches.iter().enumerate() {
                if i > 0 {
                    out.push_str(&format!("{pad}}} or {{\n"));
                }
                write_block(b, depth + 1, call, out);
            }
            out.push_str(&format!("{pad}}}\n"));
        }
        CfpExpr::Shuffle(..) | CfpExpr::Rec { .. } => {
            out.push_str(&format!("{pad}// not expressible in Scribble\n"));
        }
    }
}

fn render_args(args: &[Arg]) -> String {
    let parts: Vec<String> = args
        .iter()
        .map(|a| match (&a.name, &a.ty) {
            (Some(n), Some(t)) => format!("{n} : {t}"),
            (Some(n), None) => n.clone(),
            (None, Some(t)) => t.clone(),
            (None, None) => String::new(),
        })
        .collect();
    parts.join(", ")
}
