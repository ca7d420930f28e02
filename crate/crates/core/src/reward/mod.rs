//! The sandboxed reward language.
//!
//! A program is a list of named components followed by `total = expr`.
//! Programs have no loops, assignments inside expressions, user functions or
//! host escapes; every identifier is bound at parse time. The grammar is
//! documented in `docs/reward_grammar.md` (also embedded as [`GRAMMAR_EBNF`]).

pub mod ast;
mod interp;
pub mod lint;
mod parser;
pub mod vars;

use std::fmt;

use indexmap::IndexMap;
use sha2::{Digest, Sha256};

pub use ast::{BinOp, Canonical, CmpOp, Component, Expr, Func};
pub use lint::{lint, Interval, LintBounds, LintWarning};
pub use parser::{MAX_DEPTH, MAX_NODES};
pub use vars::{AccessibleVars, VarSpec, N_VARS, VAR_SPECS};

pub const GRAMMAR_EBNF: &str = include_str!("../../../../docs/reward_grammar.md");

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("missing `total = ...` statement")]
    MissingTotal,
    #[error("duplicate component name `{name}`")]
    DuplicateComponent { name: String },
    #[error("unknown identifier `{name}` at line {line}, column {col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("`{name}` is reserved (variable or function name) and cannot name a component")]
    ReservedName { name: String },
    #[error("`{function}` takes {expected} argument(s), found {found} at line {line}, column {col}")]
    Arity {
        function: String,
        expected: usize,
        found: usize,
        line: usize,
        col: usize,
    },
    #[error("expression in `{statement}` nests deeper than {limit}")]
    DepthExceeded { statement: String, limit: usize },
    #[error("program has {nodes} nodes, more than the limit {limit}")]
    SizeExceeded { nodes: usize, limit: usize },
}

impl ParseError {
    /// Stable machine-readable kind, quoted back to the generating agent.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "syntax",
            ParseError::MissingTotal => "missing_total",
            ParseError::DuplicateComponent { .. } => "duplicate_component",
            ParseError::UnknownIdentifier { .. } => "unknown_identifier",
            ParseError::ReservedName { .. } => "reserved_name",
            ParseError::Arity { .. } => "arity",
            ParseError::DepthExceeded { .. } => "depth_exceeded",
            ParseError::SizeExceeded { .. } => "size_exceeded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("reward component `{component}` evaluated to a non-finite value")]
pub struct EvalError {
    pub component: String,
}

/// Total reward plus every named component for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub total: f64,
    pub components: IndexMap<String, f64>,
    /// Components (or `total`) in which a division by zero was replaced by 0.
    pub div_by_zero: Vec<String>,
}

/// A parsed and bound reward program. Immutable; safe to share across threads.
#[derive(Debug, Clone)]
pub struct RewardProgram {
    pub components: Vec<Component>,
    pub total: Expr,
    pub source: String,
    fingerprint: u64,
    compiled: interp::Compiled,
}

impl PartialEq for RewardProgram {
    fn eq(&self, other: &Self) -> bool {
        self.components == other.components && self.total == other.total && self.source == other.source
    }
}

impl RewardProgram {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let parsed = parser::parse_source(source)?;
        let mut program = Self {
            compiled: interp::Compiled::new(&parsed.components, &parsed.total),
            components: parsed.components,
            total: parsed.total,
            source: source.to_string(),
            fingerprint: 0,
        };
        program.fingerprint = fingerprint_of(&program.canonical());
        Ok(program)
    }

    pub fn component_names(&self) -> Vec<String> {
        self.components.iter().map(|c| c.name.clone()).collect()
    }

    pub fn node_count(&self) -> usize {
        self.components.iter().map(|c| c.expr.node_count()).sum::<usize>() + self.total.node_count()
    }

    /// 64-bit content hash of the canonical form; layout and comments do not matter.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        format!("{:016x}", self.fingerprint)
    }

    /// One statement per line, fully parenthesized, numbers in shortest round-trip form.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for c in &self.components {
            out.push_str(&format!("{} = {}\n", c.name, Canonical { expr: &c.expr, names: &self.components }));
        }
        out.push_str(&format!("total = {}\n", Canonical { expr: &self.total, names: &self.components }));
        out
    }

    pub fn evaluate(&self, vars: &AccessibleVars) -> Result<RewardBreakdown, EvalError> {
        self.evaluate_array(&vars.to_array())
    }

    pub fn evaluate_array(&self, vars: &[f64; N_VARS]) -> Result<RewardBreakdown, EvalError> {
        let mut slots = Vec::with_capacity(self.components.len() + 1);
        let mut dbz = Vec::new();
        let name = |i: usize| {
            self.components
                .get(i)
                .map(|c| c.name.clone())
                .unwrap_or_else(|| "total".to_string())
        };
        self.compiled
            .run(vars, &mut slots, &mut dbz)
            .map_err(|i| EvalError { component: name(i) })?;
        let total = slots.pop().expect("total slot");
        Ok(RewardBreakdown {
            total,
            components: self.components.iter().map(|c| c.name.clone()).zip(slots).collect(),
            div_by_zero: dbz.into_iter().map(name).collect(),
        })
    }

    pub fn lint(&self, bounds: &LintBounds) -> Vec<LintWarning> {
        lint::lint(self, bounds)
    }
}

impl fmt::Display for RewardProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn fingerprint_of(canonical: &str) -> u64 {
    let digest = Sha256::digest(canonical.as_bytes());
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}
