//! Independent reference for the reward language: its own tokenizer,
//! recursive-descent parser producing a plain tree, and a direct tree walk.
//! Shares nothing with the library besides the variable order.

use std::collections::HashMap;

use curriflow::reward::VAR_SPECS;

#[derive(Debug, Clone)]
pub enum Node {
    Num(f64),
    Var(usize),
    Comp(usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Cmp(&'static str, Box<Node>, Box<Node>),
    If(Box<Node>, Box<Node>, Box<Node>),
    Call(String, Vec<Node>),
}

#[derive(Debug, Clone, PartialEq)]
enum T {
    Num(f64),
    Id(String),
    Sym(&'static str),
    Nl,
}

fn tokenize(src: &str) -> Vec<T> {
    let c: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut i = 0;
    while i < c.len() {
        let ch = c[i];
        if ch == '#' {
            while i < c.len() && c[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if ch == '\n' {
            if depth == 0 {
                out.push(T::Nl);
            }
            i += 1;
            continue;
        }
        if ch.is_whitespace() {
            i += 1;
            continue;
        }
        if ch.is_ascii_digit() || ch == '.' {
            let s = i;
            while i < c.len() && (c[i].is_ascii_digit() || c[i] == '.') {
                i += 1;
            }
            if i < c.len() && (c[i] == 'e' || c[i] == 'E') {
                let mut k = i + 1;
                if k < c.len() && (c[k] == '+' || c[k] == '-') {
                    k += 1;
                }
                if k < c.len() && c[k].is_ascii_digit() {
                    while k < c.len() && c[k].is_ascii_digit() {
                        k += 1;
                    }
                    i = k;
                }
            }
            let text: String = c[s..i].iter().collect();
            out.push(T::Num(text.parse().expect("number")));
            continue;
        }
        if ch.is_ascii_alphabetic() || ch == '_' {
            let s = i;
            while i < c.len() && (c[i].is_ascii_alphanumeric() || c[i] == '_') {
                i += 1;
            }
            out.push(T::Id(c[s..i].iter().collect()));
            continue;
        }
        let two: String = c[i..(i + 2).min(c.len())].iter().collect();
        let sym: &'static str = match two.as_str() {
            "<=" => "<=",
            ">=" => ">=",
            "==" => "==",
            _ => match ch {
                '+' => "+",
                '-' | '\u{2212}' => "-",
                '*' => "*",
                '/' => "/",
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '<' => "<",
                '>' => ">",
                '=' => "=",
                '\u{2264}' => "<=",
                '\u{2265}' => ">=",
                other => panic!("oracle: unexpected {other}"),
            },
        };
        if sym == "(" {
            depth += 1;
        }
        if sym == ")" {
            depth -= 1;
        }
        i += if sym.len() == 2 && two == sym { 2 } else { 1 };
        out.push(T::Sym(sym));
    }
    out
}

pub struct OracleProgram {
    pub names: Vec<String>,
    pub exprs: Vec<Node>,
    pub total: Node,
}

struct P<'a> {
    t: &'a [T],
    i: usize,
    comps: &'a HashMap<String, usize>,
}

impl P<'_> {
    fn peek(&self) -> Option<&T> {
        self.t.get(self.i)
    }
    fn sym(&mut self, s: &str) -> bool {
        if self.peek() == Some(&T::Sym(match s {
            "(" => "(",
            ")" => ")",
            "," => ",",
            _ => return false,
        })) {
            self.i += 1;
            true
        } else {
            false
        }
    }
    fn expr(&mut self) -> Node {
        if self.peek() == Some(&T::Id("if".into())) {
            self.i += 1;
            let c = self.expr();
            assert_eq!(self.t[self.i], T::Id("then".into()));
            self.i += 1;
            let a = self.expr();
            assert_eq!(self.t[self.i], T::Id("else".into()));
            self.i += 1;
            let b = self.expr();
            return Node::If(Box::new(c), Box::new(a), Box::new(b));
        }
        let a = self.add();
        let op = match self.peek() {
            Some(T::Sym(s)) if ["<", "<=", ">", ">=", "=="].contains(s) => *s,
            _ => return a,
        };
        self.i += 1;
        let b = self.add();
        Node::Cmp(op, Box::new(a), Box::new(b))
    }
    fn add(&mut self) -> Node {
        let mut a = self.mul();
        while let Some(T::Sym(s @ ("+" | "-"))) = self.peek() {
            let op = s.chars().next().unwrap();
            self.i += 1;
            let b = self.mul();
            a = Node::Bin(op, Box::new(a), Box::new(b));
        }
        a
    }
    fn mul(&mut self) -> Node {
        let mut a = self.unary();
        while let Some(T::Sym(s @ ("*" | "/"))) = self.peek() {
            let op = s.chars().next().unwrap();
            self.i += 1;
            let b = self.unary();
            a = Node::Bin(op, Box::new(a), Box::new(b));
        }
        a
    }
    fn unary(&mut self) -> Node {
        if self.peek() == Some(&T::Sym("-")) {
            self.i += 1;
            return Node::Neg(Box::new(self.unary()));
        }
        self.atom()
    }
    fn atom(&mut self) -> Node {
        let t = self.t[self.i].clone();
        self.i += 1;
        match t {
            T::Num(v) => Node::Num(v),
            T::Sym("(") => {
                let e = self.expr();
                assert!(self.sym(")"));
                e
            }
            T::Id(name) => {
                if self.sym("(") {
                    let mut args = vec![self.expr()];
                    while self.sym(",") {
                        args.push(self.expr());
                    }
                    assert!(self.sym(")"));
                    Node::Call(name, args)
                } else if let Some(v) = VAR_SPECS.iter().position(|s| s.name == name) {
                    Node::Var(v)
                } else {
                    Node::Comp(*self.comps.get(&name).expect("oracle: unknown name"))
                }
            }
            other => panic!("oracle: unexpected token {other:?}"),
        }
    }
}

/// Parses a program already known to be valid.
pub fn parse(src: &str) -> OracleProgram {
    let toks = tokenize(src);
    let mut comps = HashMap::new();
    let mut prog = OracleProgram { names: vec![], exprs: vec![], total: Node::Num(0.0) };
    for line in toks.split(|t| *t == T::Nl).filter(|l| !l.is_empty()) {
        let T::Id(name) = &line[0] else { panic!("oracle: bad statement") };
        assert_eq!(line[1], T::Sym("="));
        let mut p = P { t: &line[2..], i: 0, comps: &comps };
        let e = p.expr();
        assert_eq!(p.i, line.len() - 2, "oracle: trailing tokens");
        if name == "total" {
            prog.total = e;
        } else {
            comps.insert(name.clone(), prog.names.len());
            prog.names.push(name.clone());
            prog.exprs.push(e);
        }
    }
    prog
}

fn fmin(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if b < a {
        b
    } else {
        a
    }
}

fn fmax(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else if b > a {
        b
    } else {
        a
    }
}

fn eval(n: &Node, vars: &[f64], slots: &[f64], dbz: &mut bool) -> f64 {
    let mut ev = |n: &Node| eval(n, vars, slots, dbz);
    match n {
        Node::Num(v) => *v,
        Node::Var(i) => vars[*i],
        Node::Comp(i) => slots[*i],
        Node::Neg(e) => -ev(e),
        Node::Bin(op, a, b) => {
            let x = ev(a);
            let y = ev(b);
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                _ => {
                    if y == 0.0 {
                        *dbz = true;
                        0.0
                    } else {
                        x / y
                    }
                }
            }
        }
        Node::Cmp(op, a, b) => {
            let x = ev(a);
            let y = ev(b);
            let r = match *op {
                "<" => x < y,
                "<=" => x <= y,
                ">" => x > y,
                ">=" => x >= y,
                _ => x == y,
            };
            if r { 1.0 } else { 0.0 }
        }
        Node::If(c, a, b) => {
            if ev(c) != 0.0 {
                ev(a)
            } else {
                ev(b)
            }
        }
        Node::Call(f, args) => {
            let v: Vec<f64> = args.iter().map(ev).collect();
            match f.as_str() {
                "abs" => v[0].abs(),
                "min" => fmin(v[0], v[1]),
                "max" => fmax(v[0], v[1]),
                "clip" => fmin(fmax(v[0], v[1]), v[2]),
                "exp" => v[0].exp(),
                "tanh" => v[0].tanh(),
                "sqrt" => v[0].sqrt(),
                other => panic!("oracle: unknown function {other}"),
            }
        }
    }
}

/// Outcome in a form directly comparable with the library result.
#[derive(Debug, PartialEq)]
pub enum OracleOutcome {
    Value { total: u64, components: Vec<u64>, div_by_zero: Vec<String> },
    NonFinite(String),
}

pub fn run(p: &OracleProgram, vars: &[f64]) -> OracleOutcome {
    let mut slots = Vec::new();
    let mut flagged = Vec::new();
    for (i, e) in p.exprs.iter().chain(std::iter::once(&p.total)).enumerate() {
        let name = p.names.get(i).cloned().unwrap_or_else(|| "total".into());
        let mut dbz = false;
        let v = eval(e, vars, &slots, &mut dbz);
        if dbz {
            flagged.push(name.clone());
        }
        if !v.is_finite() {
            return OracleOutcome::NonFinite(name);
        }
        slots.push(v);
    }
    let total = slots.pop().unwrap();
    OracleOutcome::Value {
        total: total.to_bits(),
        components: slots.iter().map(|v| v.to_bits()).collect(),
        div_by_zero: flagged,
    }
}
