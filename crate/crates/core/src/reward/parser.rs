//! Lexer and recursive-descent parser for reward programs. Identifiers are
//! bound while parsing, so a successfully parsed program is also validated.

use super::ast::{BinOp, CmpOp, Component, Expr, Func};
use super::vars::var_index;
use super::ParseError;

pub const MAX_DEPTH: usize = 64;
pub const MAX_NODES: usize = 2048;
// Guards the recursive descent before the AST-depth check can run.
const MAX_RECURSION: usize = 4 * MAX_DEPTH;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    If,
    Then,
    Else,
    Plus,
    Minus,
    Star,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Assign,
    LParen,
    RParen,
    Comma,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", match other {
                Tok::If => "if",
                Tok::Then => "then",
                Tok::Else => "else",
                Tok::Plus => "+",
                Tok::Minus => "-",
                Tok::Star => "*",
                Tok::Slash => "/",
                Tok::Lt => "<",
                Tok::Le => "<=",
                Tok::Gt => ">",
                Tok::Ge => ">=",
                Tok::EqEq => "==",
                Tok::Assign => "=",
                Tok::LParen => "(",
                Tok::RParen => ")",
                _ => ",",
            }),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut paren_depth = 0usize;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |tok: Tok, width: usize, out: &mut Vec<Token>| {
            out.push(Token { tok, line: tl, col: tc });
            width
        };
        let width = match c {
            '\n' => {
                if paren_depth == 0 {
                    push(Tok::Newline, 1, &mut out);
                }
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => 1,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '+' => push(Tok::Plus, 1, &mut out),
            '-' | '\u{2212}' => push(Tok::Minus, 1, &mut out),
            '*' => push(Tok::Star, 1, &mut out),
            '/' => push(Tok::Slash, 1, &mut out),
            ',' => push(Tok::Comma, 1, &mut out),
            '(' => {
                paren_depth += 1;
                push(Tok::LParen, 1, &mut out)
            }
            ')' => {
                paren_depth = paren_depth.saturating_sub(1);
                push(Tok::RParen, 1, &mut out)
            }
            '\u{2264}' => push(Tok::Le, 1, &mut out),
            '\u{2265}' => push(Tok::Ge, 1, &mut out),
            '<' if chars.get(i + 1) == Some(&'=') => push(Tok::Le, 2, &mut out),
            '<' => push(Tok::Lt, 1, &mut out),
            '>' if chars.get(i + 1) == Some(&'=') => push(Tok::Ge, 2, &mut out),
            '>' => push(Tok::Gt, 1, &mut out),
            '=' if chars.get(i + 1) == Some(&'=') => push(Tok::EqEq, 2, &mut out),
            '=' => push(Tok::Assign, 1, &mut out),
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text: String = chars[start..j].iter().collect();
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    line: tl,
                    col: tc,
                    message: format!("malformed number `{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError::Syntax {
                        line: tl,
                        col: tc,
                        message: format!("number `{text}` is out of range"),
                    });
                }
                push(Tok::Num(value), j - start, &mut out)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[start..j].iter().collect();
                let tok = match word.as_str() {
                    "if" => Tok::If,
                    "then" => Tok::Then,
                    "else" => Tok::Else,
                    _ => Tok::Ident(word),
                };
                push(tok, j - start, &mut out)
            }
            other => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        i += width;
        col += width;
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

pub(crate) struct Parsed {
    pub components: Vec<Component>,
    pub total: Expr,
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    components: Vec<Component>,
    recursion: usize,
}

pub(crate) fn parse_source(src: &str) -> Result<Parsed, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        components: Vec::new(),
        recursion: 0,
    };
    let mut total: Option<Expr> = None;
    let mut nodes = 0usize;
    loop {
        while p.peek() == &Tok::Newline {
            p.pos += 1;
        }
        if p.peek() == &Tok::Eof {
            break;
        }
        let tok = p.next().clone();
        if total.is_some() {
            return Err(p.syntax_at(&tok, "no statements may follow `total`".into()));
        }
        let name = match &tok.tok {
            Tok::Ident(name) => name.clone(),
            other => {
                return Err(p.syntax_at(
                    &tok,
                    format!("expected a statement `name = expr`, found {}", other.describe()),
                ))
            }
        };
        p.expect(Tok::Assign, "`=`")?;
        let expr = p.expr()?;
        match p.peek() {
            Tok::Newline | Tok::Eof => {}
            other => {
                let msg = format!("expected end of line, found {}", other.describe());
                return Err(p.syntax_here(msg));
            }
        }
        if expr.depth() > MAX_DEPTH {
            return Err(ParseError::DepthExceeded {
                statement: name,
                limit: MAX_DEPTH,
            });
        }
        nodes += expr.node_count();
        if nodes > MAX_NODES {
            return Err(ParseError::SizeExceeded {
                nodes,
                limit: MAX_NODES,
            });
        }
        if name == "total" {
            total = Some(expr);
            continue;
        }
        if var_index(&name).is_some() || Func::from_name(&name).is_some() {
            return Err(ParseError::ReservedName { name });
        }
        if p.components.iter().any(|c| c.name == name) {
            return Err(ParseError::DuplicateComponent { name });
        }
        p.components.push(Component { name, expr });
    }
    let total = total.ok_or(ParseError::MissingTotal)?;
    Ok(Parsed {
        components: p.components,
        total,
    })
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn next(&mut self) -> &Token {
        let t = &self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax_at(&self, t: &Token, message: String) -> ParseError {
        ParseError::Syntax {
            line: t.line,
            col: t.col,
            message,
        }
    }

    fn syntax_here(&self, message: String) -> ParseError {
        self.syntax_at(&self.toks[self.pos], message)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            let msg = format!("expected {what}, found {}", self.peek().describe());
            Err(self.syntax_here(msg))
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.recursion += 1;
        if self.recursion > MAX_RECURSION {
            return Err(ParseError::DepthExceeded {
                statement: "<nested expression>".into(),
                limit: MAX_DEPTH,
            });
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let e = if *self.peek() == Tok::If {
            self.next();
            let cond = self.expr()?;
            self.expect(Tok::Then, "`then`")?;
            let a = self.expr()?;
            self.expect(Tok::Else, "`else`")?;
            let b = self.expr()?;
            Expr::If(Box::new(cond), Box::new(a), Box::new(b))
        } else {
            self.comparison()?
        };
        self.recursion -= 1;
        Ok(e)
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            Tok::EqEq => CmpOp::Eq,
            _ => return Ok(lhs),
        };
        self.next();
        let rhs = self.additive()?;
        if matches!(self.peek(), Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge | Tok::EqEq) {
            return Err(self.syntax_here("comparisons do not chain; use parentheses".into()));
        }
        Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.next();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.enter()?;
            self.next();
            let e = self.unary()?;
            self.recursion -= 1;
            return Ok(Expr::Neg(Box::new(e)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let tok = self.next().clone();
        match tok.tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::If => {
                // `if` nested inside an operand, e.g. `2 * if c then a else b`.
                self.pos -= 1;
                self.expr()
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(ParseError::UnknownIdentifier {
                            name,
                            line: tok.line,
                            col: tok.col,
                        });
                    };
                    self.next();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.expr()?);
                            if *self.peek() == Tok::Comma {
                                self.next();
                                continue;
                            }
                            break;
                        }
                    }
                    self.expect(Tok::RParen, "`)` or `,`")?;
                    if args.len() != func.arity() {
                        return Err(ParseError::Arity {
                            function: func.name().into(),
                            expected: func.arity(),
                            found: args.len(),
                            line: tok.line,
                            col: tok.col,
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                if let Some(v) = var_index(&name) {
                    return Ok(Expr::Var(v));
                }
                if let Some(c) = self.components.iter().position(|c| c.name == name) {
                    return Ok(Expr::Component(c));
                }
                Err(ParseError::UnknownIdentifier {
                    name,
                    line: tok.line,
                    col: tok.col,
                })
            }
            ref other => Err(self.syntax_at(&tok, format!("expected an expression, found {}", other.describe()))),
        }
    }
}
