//! Executable semantics for multiagent protocol languages: information protocols,
//! trace expressions, a Scribble subset and flat HAPN machines, with projection,
//! realizability checking, simulation and commitment tracking.

pub mod bspl;
pub mod cfp;
pub mod commitments;
pub mod enactment;
pub mod filter;
pub mod fixtures;
pub mod hapn;
pub mod lex;
pub mod matrix;
pub mod netsim;
pub mod projection;
pub mod realizability;
