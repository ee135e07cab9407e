//! Tiny arithmetic grammar for initial-condition profiles: numbers, the
//! coordinates `x`/`y`, the constant `pi`, the operators `+ - * / ^` with
//! parentheses, and the functions `sin cos exp abs step` (`step(t)` is 1 for
//! `t > 0`, else 0). No general scripting, so configs stay reproducible.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "expression error at byte {}: {}",
            self.position, self.message
        )
    }
}

impl std::error::Error for ParseError {}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                tokens.push((i, Token::Plus));
                i += 1;
            }
            '-' => {
                tokens.push((i, Token::Minus));
                i += 1;
            }
            '*' => {
                tokens.push((i, Token::Star));
                i += 1;
            }
            '/' => {
                tokens.push((i, Token::Slash));
                i += 1;
            }
            '^' => {
                tokens.push((i, Token::Caret));
                i += 1;
            }
            '(' => {
                tokens.push((i, Token::LParen));
                i += 1;
            }
            ')' => {
                tokens.push((i, Token::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let value = text.parse::<f64>().map_err(|_| ParseError {
                    position: start,
                    message: format!("malformed number `{text}`"),
                })?;
                tokens.push((start, Token::Num(value)));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && matches!(bytes[i] as char, 'a'..='z' | 'A'..='Z' | '_' | '0'..='9')
                {
                    i += 1;
                }
                tokens.push((start, Token::Ident(src[start..i].to_string())));
            }
            other => {
                return Err(ParseError {
                    position: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, Copy)]
enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Step,
}

#[derive(Debug, Clone)]
enum Node {
    Num(f64),
    X,
    Y,
    Call(Func, Box<Node>),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    src_len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.src_len)
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            position: self.here(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut node = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.next();
                    node = Node::Add(Box::new(node), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.next();
                    node = Node::Sub(Box::new(node), Box::new(self.term()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut node = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.next();
                    node = Node::Mul(Box::new(node), Box::new(self.factor()?));
                }
                Some(Token::Slash) => {
                    self.next();
                    node = Node::Div(Box::new(node), Box::new(self.factor()?));
                }
                _ => return Ok(node),
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ParseError> {
        let base = self.unary()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.next();
            let exponent = self.factor()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.next();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        match self.next() {
            Some((_, Token::Num(v))) => Ok(Node::Num(v)),
            Some((_, Token::LParen)) => {
                let inner = self.expr()?;
                match self.next() {
                    Some((_, Token::RParen)) => Ok(inner),
                    _ => Err(self.err("expected `)`")),
                }
            }
            Some((p, Token::Ident(name))) => match name.as_str() {
                "x" => Ok(Node::X),
                "y" => Ok(Node::Y),
                "pi" => Ok(Node::Num(std::f64::consts::PI)),
                "sin" | "cos" | "exp" | "abs" | "step" => {
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        "abs" => Func::Abs,
                        _ => Func::Step,
                    };
                    match self.next() {
                        Some((_, Token::LParen)) => {}
                        _ => return Err(self.err(format!("`{name}` needs an argument list"))),
                    }
                    let arg = self.expr()?;
                    match self.next() {
                        Some((_, Token::RParen)) => Ok(Node::Call(func, Box::new(arg))),
                        _ => Err(self.err("expected `)`")),
                    }
                }
                other => Err(ParseError {
                    position: p,
                    message: format!(
                        "unknown identifier `{other}` (allowed: x, y, pi, sin, cos, exp, abs, step)"
                    ),
                }),
            },
            Some((p, tok)) => Err(ParseError {
                position: p,
                message: format!("unexpected token {tok:?}"),
            }),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

/// Parsed initial-condition expression over `x` (and `y` in 2D).
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(src)?;
        if tokens.is_empty() {
            return Err(ParseError {
                position: 0,
                message: "empty expression".into(),
            });
        }
        let mut parser = Parser {
            tokens,
            pos: 0,
            src_len: src.len(),
        };
        let root = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(parser.err("trailing input after expression"));
        }
        Ok(Expr { root })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        fn walk(node: &Node, x: f64, y: f64) -> f64 {
            match node {
                Node::Num(v) => *v,
                Node::X => x,
                Node::Y => y,
                Node::Neg(a) => -walk(a, x, y),
                Node::Add(a, b) => walk(a, x, y) + walk(b, x, y),
                Node::Sub(a, b) => walk(a, x, y) - walk(b, x, y),
                Node::Mul(a, b) => walk(a, x, y) * walk(b, x, y),
                Node::Div(a, b) => walk(a, x, y) / walk(b, x, y),
                Node::Pow(a, b) => walk(a, x, y).powf(walk(b, x, y)),
                Node::Call(func, a) => {
                    let v = walk(a, x, y);
                    match func {
                        Func::Sin => v.sin(),
                        Func::Cos => v.cos(),
                        Func::Exp => v.exp(),
                        Func::Abs => v.abs(),
                        Func::Step => {
                            if v > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    }
                }
            }
        }
        walk(&self.root, x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: f64) -> f64 {
        Expr::parse(src).unwrap().eval(x, 0.0)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(eval("(1 + 2) * 3", 0.0), 9.0);
        assert_eq!(eval("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(eval("-x + 1", 0.25), 0.75);
        assert_eq!(eval("6 / 3 / 2", 0.0), 1.0);
    }

    #[test]
    fn functions_and_constants() {
        assert!((eval("cos(pi*x)", 0.5)).abs() < 1e-15);
        assert_eq!(eval("step(0.5 - x)", 0.25), 1.0);
        assert_eq!(eval("step(0.5 - x)", 0.75), 0.0);
        assert_eq!(eval("abs(-2)", 0.0), 2.0);
        assert!((eval("exp(0)", 0.0) - 1.0).abs() < 1e-15);
        assert!((eval("2e-1 + 1.5e1", 0.0) - 15.2).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("x $ 2").is_err());
    }
}
