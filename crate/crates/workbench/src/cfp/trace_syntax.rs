//! ASCII syntax for trace expressions.
//!
//! ```text
//! protocol := IDENT "=" expr | expr
//! expr     := choice (("/\" | "|") expr)?
//! choice   := seq ("\/" seq)*
//! seq      := postfix (";" seq)?
//! postfix  := primary "*"*
//! primary  := IDENT "->" IDENT ":" IDENT ("(" args ")")? | "eps" | IDENT
//!           | "(" IDENT "=" expr ")" | "(" expr ")"
//! ```

use std::collections::BTreeSet;

use thiserror::Error;

use super::{Arg, CfpExpr, Label};
use crate::lex::{tokenize, Cursor, SyntaxError, Tok};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("unbound recursion variable `{0}`")]
    UnboundVariable(String),
}

const PUNCTS: &[&str] = &["->", "\\/", "/\\", "|", ";", ":", "*", "(", ")", ",", "="];

pub fn parse_trace(text: &str) -> Result<CfpExpr, TraceError> {
    let mut cur = Cursor::new(tokenize(text, PUNCTS)?);
    let e = if matches!(cur.peek(), Tok::Ident(_)) && matches!(cur.peek_at(1), Tok::Punct("=")) {
        let var = cur.ident("recursion variable")?;
        cur.bump();
        let body = expr(&mut cur)?;
        CfpExpr::Rec { var, body: Box::new(body) }
    } else {
        expr(&mut cur)?
    };
    cur.expect_eof()?;
    check_bound(&e, &mut Vec::new())?;
    Ok(e)
}

fn check_bound(e: &CfpExpr, scope: &mut Vec<String>) -> Result<(), TraceError> {
    match e {
        CfpExpr::Var(v) if !scope.contains(v) => Err(TraceError::UnboundVariable(v.clone())),
        CfpExpr::Rec { var, body } => {
            scope.push(var.clone());
            let r = check_bound(body, scope);
            scope.pop();
            r
        }
        CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => {
            check_bound(a, scope)?;
            check_bound(b, scope)
        }
        CfpExpr::Choice { branches, .. } => branches.iter().try_for_each(|b| check_bound(b, scope)),
        _ => Ok(()),
    }
}

fn expr(cur: &mut Cursor) -> Result<CfpExpr, SyntaxError> {
    let left = choice(cur)?;
    if cur.eat_punct("/\\") || cur.eat_punct("|") {
        let right = expr(cur)?;
        return Ok(CfpExpr::shuffle(left, right));
    }
    Ok(left)
}

fn choice(cur: &mut Cursor) -> Result<CfpExpr, SyntaxError> {
    let mut branches = vec![seq(cur)?];
    while cur.eat_punct("\\/") {
        branches.push(seq(cur)?);
    }
    Ok(if branches.len() == 1 { branches.pop().unwrap() } else { CfpExpr::choice(branches) })
}

fn seq(cur: &mut Cursor) -> Result<CfpExpr, SyntaxError> {
    let left = postfix(cur)?;
    if cur.eat_punct(";") {
        let right = seq(cur)?;
        return Ok(CfpExpr::seq(left, right));
    }
    Ok(left)
}

fn postfix(cur: &mut Cursor) -> Result<CfpExpr, SyntaxError> {
    let mut e = primary(cur)?;
    while cur.eat_punct("*") {
        e = CfpExpr::star(e);
    }
    Ok(e)
}

fn primary(cur: &mut Cursor) -> Result<CfpExpr, SyntaxError> {
    if cur.eat_punct("(") {
        if matches!(cur.peek(), Tok::Ident(_)) && matches!(cur.peek_at(1), Tok::Punct("=")) {
            let var = cur.ident("recursion variable")?;
            cur.bump();
            let body = expr(cur)?;
            cur.expect_punct(")")?;
            return Ok(CfpExpr::Rec { var, body: Box::new(body) });
        }
        let e = expr(cur)?;
        cur.expect_punct(")")?;
        return Ok(e);
    }
    let first = cur.ident("an event, `eps`, `(` or a recursion variable")?;
    if !cur.eat_punct("->") {
        if first == "eps" {
            return Ok(CfpExpr::Epsilon);
        }
        return Ok(CfpExpr::Var(first));
    }
    let receiver = cur.ident("receiver role")?;
    cur.expect_punct(":")?;
    let msg = cur.ident("message name")?;
    let payload = if cur.eat_punct("(") { args(cur)? } else { None };
    Ok(CfpExpr::Atom { label: Label { sender: first, receiver, msg }, payload })
}

fn args(cur: &mut Cursor) -> Result<Option<Vec<Arg>>, SyntaxError> {
    let mut out = Vec::new();
    if cur.eat_punct(")") {
        return Ok(None);
    }
    loop {
        let arg = if cur.eat_punct(":") {
            Arg { name: None, ty: Some(cur.ident("type")?) }
        } else {
            let name = cur.ident("argument")?;
            let ty = if cur.eat_punct(":") { Some(cur.ident("type")?) } else { None };
            Arg { name: Some(name), ty }
        };
        out.push(arg);
        if cur.eat_punct(")") {
            break;
        }
        cur.expect_punct(",")?;
    }
    Ok(Some(out))
}

/// Canonical text; `parse_trace(&print_trace(e)) == Ok(e)` for expressions whose
/// recursion variables are bound.
pub fn print_trace(e: &CfpExpr) -> String {
    match e {
        CfpExpr::Rec { var, body } if e.star_operand().is_none() => format!("{var} = {}", show(body, 0)),
        _ => show(e, 0),
    }
}

pub(crate) fn show_args(args: &[Arg]) -> String {
    let parts: Vec<String> = args
        .iter()
        .map(|a| match (&a.name, &a.ty) {
            (Some(n), Some(t)) => format!("{n}:{t}"),
            (Some(n), None) => n.clone(),
            (None, Some(t)) => format!(":{t}"),
            (None, None) => String::new(),
        })
        .collect();
    parts.join(", ")
}

// Precedence levels: shuffle 0, choice 1, sequence 2, postfix 3, primary 4.
fn show(e: &CfpExpr, ctx: u8) -> String {
    let (own, text) = match e {
        CfpExpr::Atom { label, payload } => {
            let p = match payload {
                Some(args) if !args.is_empty() => format!("({})", show_args(args)),
                _ => String::new(),
            };
            (4, format!("{} -> {} : {}{}", label.sender, label.receiver, label.msg, p))
        }
        CfpExpr::Epsilon => (4, "eps".to_string()),
        CfpExpr::Var(v) => (4, v.clone()),
        CfpExpr::Shuffle(a, b) => (0, format!("{} /\\ {}", show(a, 1), show(b, 0))),
        CfpExpr::Choice { branches, .. } => {
            let parts: Vec<String> = branches.iter().map(|b| show(b, 2)).collect();
            (1, parts.join(" \\/ "))
        }
        CfpExpr::Seq(a, b) => (2, format!("{} ; {}", show(a, 3), show(b, 2))),
        CfpExpr::Rec { var, body } => match e.star_operand() {
            Some(x) => (3, format!("{}*", show(x, 4))),
            None => (4, format!("({var} = {})", show(body, 0))),
        },
    };
    if own < ctx {
        format!("({text})")
    } else {
        text
    }
}

/// Non-fatal remarks about a parsed expression. A recursion variable that is not in
/// tail position (for example under a shuffle) is accepted but flagged as nonstandard.
pub fn trace_diagnostics(e: &CfpExpr) -> Vec<String> {
    let mut out = Vec::new();
    nonstandard(e, &BTreeSet::new(), &mut out);
    out
}

fn nonstandard(e: &CfpExpr, tail_ok: &BTreeSet<String>, out: &mut Vec<String>) {
    match e {
        CfpExpr::Rec { var, body } => {
            if e.star_operand().is_some() {
                nonstandard(body, tail_ok, out);
                return;
            }
            let mut scope = tail_ok.clone();
            scope.insert(var.clone());
            check_tail(body, var, true, out);
            nonstandard(body, &scope, out);
        }
        CfpExpr::Seq(a, b) | CfpExpr::Shuffle(a, b) => {
            nonstandard(a, tail_ok, out);
            nonstandard(b, tail_ok, out);
        }
        CfpExpr::Choice { branches, .. } => branches.iter().for_each(|b| nonstandard(b, tail_ok, out)),
        _ => {}
    }
}

fn check_tail(e: &CfpExpr, var: &str, tail: bool, out: &mut Vec<String>) {
    match e {
        CfpExpr::Var(v) if v == var && !tail => {
            out.push(format!("nonstandard recursion: `{var}` occurs outside tail position"))
        }
        CfpExpr::Seq(a, b) => {
            check_tail(a, var, false, out);
            check_tail(b, var, tail, out);
        }
        CfpExpr::Shuffle(a, b) => {
            check_tail(a, var, false, out);
            check_tail(b, var, false, out);
        }
        CfpExpr::Choice { branches, .. } => branches.iter().for_each(|b| check_tail(b, var, tail, out)),
        CfpExpr::Rec { var: v, body } if v != var => check_tail(body, var, tail, out),
        _ => {}
    }
}
