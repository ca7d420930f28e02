//! Flat stack-machine evaluator. Each component compiles to a postfix code
//! segment; `if` lowers to conditional jumps so untaken branches never run.

use super::ast::{BinOp, CmpOp, Component, Expr, Func};
use super::vars::N_VARS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Op {
    Const(f64),
    Var(u16),
    Slot(u16),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Abs,
    Min,
    Max,
    Clip,
    Exp,
    Tanh,
    Sqrt,
    /// Pops the condition; jumps when it equals zero.
    JumpIfZero(u32),
    Jump(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Compiled {
    /// One code segment per component, then one for `total`.
    segments: Vec<Vec<Op>>,
    max_stack: usize,
}

pub(crate) fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if b < a {
        b
    } else {
        a
    }
}

pub(crate) fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if b > a {
        b
    } else {
        a
    }
}

fn truth(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn emit(expr: &Expr, code: &mut Vec<Op>) {
    match expr {
        Expr::Num(v) => code.push(Op::Const(*v)),
        Expr::Var(i) => code.push(Op::Var(*i as u16)),
        Expr::Component(i) => code.push(Op::Slot(*i as u16)),
        Expr::Neg(e) => {
            emit(e, code);
            code.push(Op::Neg);
        }
        Expr::Binary(op, a, b) => {
            emit(a, code);
            emit(b, code);
            code.push(match op {
                BinOp::Add => Op::Add,
                BinOp::Sub => Op::Sub,
                BinOp::Mul => Op::Mul,
                BinOp::Div => Op::Div,
            });
        }
        Expr::Compare(op, a, b) => {
            emit(a, code);
            emit(b, code);
            code.push(match op {
                CmpOp::Lt => Op::Lt,
                CmpOp::Le => Op::Le,
                CmpOp::Gt => Op::Gt,
                CmpOp::Ge => Op::Ge,
                CmpOp::Eq => Op::Eq,
            });
        }
        Expr::If(c, a, b) => {
            emit(c, code);
            let jz = code.len();
            code.push(Op::JumpIfZero(0));
            emit(a, code);
            let jmp = code.len();
            code.push(Op::Jump(0));
            let else_at = code.len() as u32;
            emit(b, code);
            let end = code.len() as u32;
            code[jz] = Op::JumpIfZero(else_at);
            code[jmp] = Op::Jump(end);
        }
        Expr::Call(f, args) => {
            for a in args {
                emit(a, code);
            }
            code.push(match f {
                Func::Abs => Op::Abs,
                Func::Min => Op::Min,
                Func::Max => Op::Max,
                Func::Clip => Op::Clip,
                Func::Exp => Op::Exp,
                Func::Tanh => Op::Tanh,
                Func::Sqrt => Op::Sqrt,
            });
        }
    }
}

fn stack_need(code: &[Op]) -> usize {
    // Linear scan over-approximates: both branches of an `if` are counted.
    let (mut cur, mut max) = (0isize, 0isize);
    for op in code {
        cur += match op {
            Op::Const(_) | Op::Var(_) | Op::Slot(_) => 1,
            Op::Neg | Op::Abs | Op::Exp | Op::Tanh | Op::Sqrt | Op::Jump(_) => 0,
            Op::Clip => -2,
            _ => -1,
        };
        max = max.max(cur);
    }
    max.max(1) as usize
}

impl Compiled {
    pub fn new(components: &[Component], total: &Expr) -> Self {
        let segments: Vec<Vec<Op>> = components
            .iter()
            .map(|c| &c.expr)
            .chain(std::iter::once(total))
            .map(|e| {
                let mut code = Vec::new();
                emit(e, &mut code);
                code
            })
            .collect();
        let max_stack = segments.iter().map(|s| stack_need(s)).max().unwrap_or(1) + 1;
        Self { segments, max_stack }
    }

    /// Evaluates every segment into `slots` (components then total).
    /// Returns the index of the first non-finite segment, if any.
    pub fn run(
        &self,
        vars: &[f64; N_VARS],
        slots: &mut Vec<f64>,
        div_by_zero: &mut Vec<usize>,
    ) -> Result<(), usize> {
        slots.clear();
        let mut stack: Vec<f64> = Vec::with_capacity(self.max_stack);
        for (seg_idx, code) in self.segments.iter().enumerate() {
            stack.clear();
            let mut pc = 0usize;
            let mut flagged = false;
            while pc < code.len() {
                let op = code[pc];
                pc += 1;
                match op {
                    Op::Const(v) => stack.push(v),
                    Op::Var(i) => stack.push(vars[i as usize]),
                    Op::Slot(i) => stack.push(slots[i as usize]),
                    Op::Neg => {
                        let a = stack.pop().unwrap();
                        stack.push(-a);
                    }
                    Op::Abs => {
                        let a = stack.pop().unwrap();
                        stack.push(a.abs());
                    }
                    Op::Exp => {
                        let a = stack.pop().unwrap();
                        stack.push(a.exp());
                    }
                    Op::Tanh => {
                        let a = stack.pop().unwrap();
                        stack.push(a.tanh());
                    }
                    Op::Sqrt => {
                        let a = stack.pop().unwrap();
                        stack.push(a.sqrt());
                    }
                    Op::Clip => {
                        let hi = stack.pop().unwrap();
                        let lo = stack.pop().unwrap();
                        let x = stack.pop().unwrap();
                        stack.push(nan_min(nan_max(x, lo), hi));
                    }
                    Op::JumpIfZero(target) => {
                        if stack.pop().unwrap() == 0.0 {
                            pc = target as usize;
                        }
                    }
                    Op::Jump(target) => pc = target as usize,
                    binary => {
                        let b = stack.pop().unwrap();
                        let a = stack.pop().unwrap();
                        stack.push(match binary {
                            Op::Add => a + b,
                            Op::Sub => a - b,
                            Op::Mul => a * b,
                            Op::Div => {
                                if b == 0.0 {
                                    flagged = true;
                                    0.0
                                } else {
                                    a / b
                                }
                            }
                            Op::Lt => truth(a < b),
                            Op::Le => truth(a <= b),
                            Op::Gt => truth(a > b),
                            Op::Ge => truth(a >= b),
                            Op::Eq => truth(a == b),
                            Op::Min => nan_min(a, b),
                            Op::Max => nan_max(a, b),
                            _ => unreachable!("unary op handled above"),
                        });
                    }
                }
            }
            let value = stack.pop().unwrap();
            if flagged {
                div_by_zero.push(seg_idx);
            }
            if !value.is_finite() {
                return Err(seg_idx);
            }
            slots.push(value);
        }
        Ok(())
    }
}
