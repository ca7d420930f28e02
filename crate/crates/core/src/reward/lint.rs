//! Interval-arithmetic bounds over the documented variable ranges, used to
//! flag reward designs whose per-step terms can outweigh task completion or
//! that charge a cumulative counter on every step.

use std::f64::consts::PI;
use std::fmt;

use super::ast::{BinOp, CmpOp, Expr, Func};
use super::vars::{var_index, N_VARS};
use super::RewardProgram;
use crate::sim::{ScenarioConfig, N_SV_MAX, PAD_DISTANCE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };
    pub const EVERYTHING: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn magnitude(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn is_zero(&self) -> bool {
        self.lo == 0.0 && self.hi == 0.0
    }

    fn contains_zero(&self) -> bool {
        self.lo <= 0.0 && self.hi >= 0.0
    }

    fn hull(self, o: Interval) -> Interval {
        Interval::new(self.lo.min(o.lo), self.hi.max(o.hi))
    }

    fn monotone(self, f: impl Fn(f64) -> f64) -> Interval {
        Interval::new(f(self.lo), f(self.hi))
    }
}

// 0 * inf is taken as 0: a zero factor dominates.
fn mul_bound(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b
    }
}

fn mul(a: Interval, b: Interval) -> Interval {
    let p = [
        mul_bound(a.lo, b.lo),
        mul_bound(a.lo, b.hi),
        mul_bound(a.hi, b.lo),
        mul_bound(a.hi, b.hi),
    ];
    Interval::new(
        p.iter().copied().fold(f64::INFINITY, f64::min),
        p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn div(a: Interval, b: Interval) -> Interval {
    if a.is_zero() || b.is_zero() {
        // Division by exactly zero evaluates to 0.
        return Interval::ZERO;
    }
    if b.contains_zero() {
        return Interval::EVERYTHING;
    }
    mul(a, Interval::new(1.0 / b.hi, 1.0 / b.lo))
}

fn compare(op: CmpOp, a: Interval, b: Interval) -> Interval {
    let (always, never) = match op {
        CmpOp::Lt => (a.hi < b.lo, a.lo >= b.hi),
        CmpOp::Le => (a.hi <= b.lo, a.lo > b.hi),
        CmpOp::Gt => (a.lo > b.hi, a.hi <= b.lo),
        CmpOp::Ge => (a.lo >= b.hi, a.hi < b.lo),
        CmpOp::Eq => (
            a.lo == a.hi && b.lo == b.hi && a.lo == b.lo,
            a.hi < b.lo || b.hi < a.lo,
        ),
    };
    if always {
        Interval::point(1.0)
    } else if never {
        Interval::ZERO
    } else {
        Interval::UNIT
    }
}

pub fn bound(expr: &Expr, vars: &[Interval; N_VARS], slots: &[Interval]) -> Interval {
    let rec = |e: &Expr| bound(e, vars, slots);
    match expr {
        Expr::Num(v) => Interval::point(*v),
        Expr::Var(i) => vars[*i],
        Expr::Component(i) => slots[*i],
        Expr::Neg(e) => {
            let a = rec(e);
            Interval::new(-a.hi, -a.lo)
        }
        Expr::Binary(op, a, b) => {
            let (a, b) = (rec(a), rec(b));
            match op {
                BinOp::Add => Interval::new(a.lo + b.lo, a.hi + b.hi),
                BinOp::Sub => Interval::new(a.lo - b.hi, a.hi - b.lo),
                BinOp::Mul => mul(a, b),
                BinOp::Div => div(a, b),
            }
        }
        Expr::Compare(op, a, b) => compare(*op, rec(a), rec(b)),
        Expr::If(c, a, b) => {
            let c = rec(c);
            if c.is_zero() {
                rec(b)
            } else if !c.contains_zero() {
                rec(a)
            } else {
                rec(a).hull(rec(b))
            }
        }
        Expr::Call(f, args) => {
            let a: Vec<Interval> = args.iter().map(rec).collect();
            match f {
                Func::Abs => {
                    let x = a[0];
                    if x.lo >= 0.0 {
                        x
                    } else if x.hi <= 0.0 {
                        Interval::new(-x.hi, -x.lo)
                    } else {
                        Interval::new(0.0, x.magnitude())
                    }
                }
                Func::Min => Interval::new(a[0].lo.min(a[1].lo), a[0].hi.min(a[1].hi)),
                Func::Max => Interval::new(a[0].lo.max(a[1].lo), a[0].hi.max(a[1].hi)),
                Func::Clip => {
                    let lo = Interval::new(a[0].lo.max(a[1].lo), a[0].hi.max(a[1].hi));
                    Interval::new(lo.lo.min(a[2].lo), lo.hi.min(a[2].hi))
                }
                Func::Exp => a[0].monotone(f64::exp),
                Func::Tanh => a[0].monotone(f64::tanh),
                Func::Sqrt => a[0].monotone(|v| v.max(0.0).sqrt()),
            }
        }
    }
}

/// Variable ranges derived from a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LintBounds {
    pub vars: [Interval; N_VARS],
    pub max_steps: u32,
}

impl LintBounds {
    pub fn from_scenario(s: &ScenarioConfig) -> Self {
        let width = s.lane_width * s.lane_count as f64;
        let steps = s.max_steps as f64;
        let vars = [
            Interval::new(0.0, s.v_limit),
            Interval::point(s.v_limit),
            Interval::new(0.0, s.road_length + width),
            Interval::new(-0.5 * s.lane_width, 0.5 * s.lane_width),
            Interval::new(-PI, PI),
            Interval::new(1e-3, PAD_DISTANCE),
            Interval::UNIT,
            Interval::UNIT,
            Interval::UNIT,
            Interval::UNIT,
            Interval::new(0.0, steps),
            Interval::new(0.0, N_SV_MAX as f64),
            Interval::new(1.0, steps),
            Interval::point(steps),
        ];
        Self {
            vars,
            max_steps: s.max_steps,
        }
    }

    fn with(&self, assignments: &[(&str, Interval)]) -> [Interval; N_VARS] {
        let mut v = self.vars;
        for (name, iv) in assignments {
            v[var_index(name).expect("known variable")] = *iv;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LintWarning {
    /// A per-step term whose accumulated magnitude can exceed the success reward.
    DominatesSuccess {
        component: String,
        per_step_bound: f64,
        max_steps: u32,
        success_reward: f64,
    },
    /// A cumulative counter charged on steps without a lane-change event.
    CumulativeCounter { component: String, variable: String },
}

impl LintWarning {
    pub fn kind(&self) -> &'static str {
        match self {
            LintWarning::DominatesSuccess { .. } => "dominates_success",
            LintWarning::CumulativeCounter { .. } => "cumulative_counter",
        }
    }
}

impl fmt::Display for LintWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LintWarning::DominatesSuccess {
                component,
                per_step_bound,
                max_steps,
                success_reward,
            } => write!(
                f,
                "warning[dominates_success]: per-step component `{component}` is bounded by {per_step_bound} per step; over {max_steps} steps it can accumulate {} which exceeds the success reward {success_reward}",
                per_step_bound * *max_steps as f64
            ),
            LintWarning::CumulativeCounter { component, variable } => write!(
                f,
                "warning[cumulative_counter]: component `{component}` charges the cumulative counter `{variable}` on every step; gate it on `lane_change_event` so it fires only when a lane change happens"
            ),
        }
    }
}

pub fn lint(program: &RewardProgram, bounds: &LintBounds) -> Vec<LintWarning> {
    let running = bounds.with(&[
        ("collision", Interval::ZERO),
        ("success", Interval::ZERO),
        ("timeout", Interval::ZERO),
    ]);
    let succeeded = bounds.with(&[
        ("collision", Interval::ZERO),
        ("success", Interval::point(1.0)),
        ("timeout", Interval::ZERO),
    ]);
    let no_event = bounds.with(&[
        ("collision", Interval::ZERO),
        ("success", Interval::ZERO),
        ("timeout", Interval::ZERO),
        ("lane_change_event", Interval::ZERO),
    ]);

    let eval_all = |vars: &[Interval; N_VARS]| {
        let mut slots = Vec::with_capacity(program.components.len());
        for c in &program.components {
            let b = bound(&c.expr, vars, &slots);
            slots.push(b);
        }
        let total = bound(&program.total, vars, &slots);
        (slots, total)
    };
    let (run_b, _) = eval_all(&running);
    let (succ_b, _) = eval_all(&succeeded);
    let (quiet_b, quiet_total) = eval_all(&no_event);

    let success_reward: f64 = run_b
        .iter()
        .zip(&succ_b)
        .filter(|(r, _)| r.is_zero())
        .map(|(_, s)| s.hi.max(0.0))
        .sum();

    let mut warnings = Vec::new();
    for (c, b) in program.components.iter().zip(&run_b) {
        if b.is_zero() {
            continue;
        }
        let per_step = b.magnitude();
        if per_step * bounds.max_steps as f64 > success_reward {
            warnings.push(LintWarning::DominatesSuccess {
                component: c.name.clone(),
                per_step_bound: per_step,
                max_steps: bounds.max_steps,
                success_reward,
            });
        }
    }

    let counter = var_index("lane_change_times").expect("known variable");
    let named = program
        .components
        .iter()
        .map(|c| (c.name.as_str(), &c.expr))
        .zip(quiet_b.iter().copied())
        .chain(std::iter::once((("total", &program.total), quiet_total)));
    for ((name, expr), quiet) in named {
        if expr.mentions_var(counter) && !quiet.is_zero() {
            warnings.push(LintWarning::CumulativeCounter {
                component: name.to_string(),
                variable: "lane_change_times".into(),
            });
        }
    }
    warnings
}
