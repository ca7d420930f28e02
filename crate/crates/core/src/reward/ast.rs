use std::fmt;

use super::vars::VAR_SPECS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Abs,
    Min,
    Max,
    Clip,
    Exp,
    Tanh,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 7] = [Func::Abs, Func::Min, Func::Max, Func::Clip, Func::Exp, Func::Tanh, Func::Sqrt];

    pub fn name(&self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Clip => "clip",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn arity(&self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Clip => 3,
            _ => 1,
        }
    }
}

/// Bound expression tree. Identifiers are already resolved to a variable
/// slot or an earlier component.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Component(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn node_count(&self) -> usize {
        1 + match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Component(_) => 0,
            Expr::Neg(e) => e.node_count(),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => a.node_count() + b.node_count(),
            Expr::If(c, a, b) => c.node_count() + a.node_count() + b.node_count(),
            Expr::Call(_, args) => args.iter().map(Expr::node_count).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        1 + match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Component(_) => 0,
            Expr::Neg(e) => e.depth(),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => a.depth().max(b.depth()),
            Expr::If(c, a, b) => c.depth().max(a.depth()).max(b.depth()),
            Expr::Call(_, args) => args.iter().map(Expr::depth).max().unwrap_or(0),
        }
    }

    /// Visits every node, parents before children.
    pub fn walk(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Component(_) => {}
            Expr::Neg(e) => e.walk(f),
            Expr::Binary(_, a, b) | Expr::Compare(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Expr::If(c, a, b) => {
                c.walk(f);
                a.walk(f);
                b.walk(f);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(f)),
        }
    }

    pub fn mentions_var(&self, var: usize) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::Var(v) if *v == var));
        found
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub name: String,
    pub expr: Expr,
}

/// Fully parenthesized canonical rendering; `names` resolves component indices.
pub struct Canonical<'a> {
    pub expr: &'a Expr,
    pub names: &'a [Component],
}

impl fmt::Display for Canonical<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e| Canonical { expr: e, names: self.names };
        match self.expr {
            // Debug formatting of f64 is the shortest exact round-trip form.
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => write!(f, "{}", VAR_SPECS[*i].name),
            Expr::Component(i) => write!(f, "{}", self.names[*i].name),
            Expr::Neg(e) => write!(f, "(-{})", sub(e)),
            Expr::Binary(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({} {s} {})", sub(a), sub(b))
            }
            Expr::Compare(op, a, b) => {
                let s = match op {
                    CmpOp::Lt => "<",
                    CmpOp::Le => "<=",
                    CmpOp::Gt => ">",
                    CmpOp::Ge => ">=",
                    CmpOp::Eq => "==",
                };
                write!(f, "({} {s} {})", sub(a), sub(b))
            }
            Expr::If(c, a, b) => write!(f, "(if {} then {} else {})", sub(c), sub(a), sub(b)),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", sub(a))?;
                }
                write!(f, ")")
            }
        }
    }
}
