//! Grammar-directed random program generator for the reward language.

use curriflow::reward::VAR_SPECS;
use rand::Rng;

// Precedence levels of generated text: larger binds tighter.
const IF: u8 = 0;
const CMP: u8 = 1;
const ADD: u8 = 2;
const MUL: u8 = 3;
const UNARY: u8 = 4;
const ATOM: u8 = 5;

pub struct Fuzzer<'a, R: Rng> {
    rng: &'a mut R,
    components: Vec<String>,
}

impl<'a, R: Rng> Fuzzer<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        Self { rng, components: Vec::new() }
    }

    fn space(&mut self) -> &'static str {
        ["", " ", " ", "  "][self.rng.random_range(0..4)]
    }

    fn wrap(&mut self, (text, level): (String, u8), min: u8) -> String {
        if level < min || self.rng.random_bool(0.05) {
            let nl = if self.rng.random_bool(0.1) { "\n  " } else { "" };
            format!("({nl}{text})")
        } else {
            text
        }
    }

    fn number(&mut self) -> String {
        match self.rng.random_range(0..6) {
            0 => "0".into(),
            1 => format!("{}", self.rng.random_range(0..20)),
            2 => format!("{:.3}", self.rng.random_range(0.0..10.0)),
            3 => format!("{}e{}", self.rng.random_range(1..9), self.rng.random_range(-3..4)),
            4 => format!(".{}", self.rng.random_range(1..999)),
            _ => format!("{}", self.rng.random::<f64>()),
        }
    }

    fn leaf(&mut self) -> (String, u8) {
        let roll = self.rng.random_range(0..10);
        let text = if roll < 3 {
            self.number()
        } else if roll < 8 || self.components.is_empty() {
            VAR_SPECS[self.rng.random_range(0..VAR_SPECS.len())].name.to_string()
        } else {
            self.components[self.rng.random_range(0..self.components.len())].clone()
        };
        (text, ATOM)
    }

    fn expr(&mut self, depth: u32) -> (String, u8) {
        if depth == 0 || self.rng.random_bool(0.2) {
            return self.leaf();
        }
        let d = depth - 1;
        match self.rng.random_range(0..12) {
            0..=3 => {
                let (op, lvl) = [("+", ADD), ("-", ADD), ("\u{2212}", ADD), ("*", MUL), ("/", MUL), ("/", MUL)]
                    [self.rng.random_range(0..6)];
                let a = self.expr(d);
                let a = self.wrap(a, lvl);
                let b = self.expr(d);
                let b = self.wrap(b, lvl + 1);
                let (s1, s2) = (self.space(), self.space());
                (format!("{a}{s1}{op}{s2}{b}"), lvl)
            }
            4 => {
                let op = ["<", "<=", ">", ">=", "==", "\u{2264}", "\u{2265}"][self.rng.random_range(0..7)];
                let a = self.expr(d);
                let a = self.wrap(a, ADD);
                let b = self.expr(d);
                let b = self.wrap(b, ADD);
                (format!("{a} {op} {b}"), CMP)
            }
            5 => {
                let c = self.expr(d);
                let c = self.wrap(c, CMP);
                let a = self.expr(d).0;
                let b = self.expr(d).0;
                (format!("if {c} then {a} else {b}"), IF)
            }
            6 => {
                let a = self.expr(d);
                let a = self.wrap(a, UNARY);
                let m = if self.rng.random_bool(0.5) { "-" } else { "\u{2212}" };
                (format!("{m}{a}"), UNARY)
            }
            _ => {
                let (name, arity) = [("abs", 1), ("min", 2), ("max", 2), ("clip", 3), ("exp", 1), ("tanh", 1), ("sqrt", 1)]
                    [self.rng.random_range(0..7)];
                let args: Vec<String> = (0..arity).map(|_| self.expr(d).0).collect();
                let sep = if self.rng.random_bool(0.5) { ", " } else { "," };
                (format!("{name}({})", args.join(sep)), ATOM)
            }
        }
    }

    /// A syntactically valid program with 0..=6 components.
    pub fn program(&mut self) -> String {
        self.components.clear();
        let mut src = String::new();
        if self.rng.random_bool(0.3) {
            src.push_str("# generated\n");
        }
        let n = self.rng.random_range(0..=6);
        for i in 0..n {
            let depth = self.rng.random_range(1..=6);
            let e = self.expr(depth).0;
            let name = format!("c{i}_{}", self.rng.random_range(0..100));
            let comment = if self.rng.random_bool(0.2) { "  # note" } else { "" };
            src.push_str(&format!("{name} = {e}{comment}\n"));
            if self.rng.random_bool(0.1) {
                src.push('\n');
            }
            self.components.push(name);
        }
        let depth = self.rng.random_range(1..=5);
        let e = self.expr(depth).0;
        src.push_str(&format!("total = {e}\n"));
        src
    }
}

/// Variable assignment mixing in-range values with zeros, signs and extremes.
pub fn assignment<R: Rng>(rng: &mut R) -> Vec<f64> {
    VAR_SPECS
        .iter()
        .map(|spec| match rng.random_range(0..8) {
            0 => 0.0,
            1 => 1.0,
            2 => -1.0,
            3 => rng.random_range(-1e3..1e3),
            4 => rng.random_range(-1e-3..1e-3),
            5 if spec.unit == "flag" => rng.random_range(0..2) as f64,
            _ => rng.random_range(0.0..30.0),
        })
        .collect()
}
