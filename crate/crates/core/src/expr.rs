//! Scalar expression language used to define coefficient fields.
//!
//! Grammar (precedence from loosest to tightest):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | name | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` and `2^3^2` is `2^9`. Variables are `x`, `t` and `W1`, `W2`,
//! ... (the current value of common driver `i`). `pi` is a named constant.
//! Functions: `sin cos exp sqrt abs tanh`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

const FUNCTION_NAMES: [&str; 6] = ["sin", "cos", "exp", "sqrt", "abs", "tanh"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {expected}, found {found}")]
    Syntax {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}; allowed: {allowed}")]
    UnknownIdentifier {
        name: String,
        offset: usize,
        allowed: String,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("non-finite result ({0})")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("cannot differentiate {0}")]
pub struct DiffError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    T,
    /// Common driver `W_i`, 1-based.
    W(usize),
}

impl Var {
    pub fn name(&self) -> String {
        match self {
            Var::X => "x".into(),
            Var::T => "t".into(),
            Var::W(i) => format!("W{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }

    fn apply(self, l: f64, r: f64) -> f64 {
        match self {
            BinOp::Add => l + r,
            BinOp::Sub => l - r,
            BinOp::Mul => l * r,
            BinOp::Div => l / r,
            BinOp::Pow => l.powf(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
            Func::Tanh => v.tanh(),
        }
    }
}

/// Syntax tree node.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed, immutable scalar expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    root: Node,
}

/// Point at which an expression is evaluated.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub x: f64,
    pub t: f64,
    /// Current values of the common drivers, `w[0]` is `W1`.
    pub w: &'a [f64],
}

impl<'a> Point<'a> {
    pub fn new(x: f64, t: f64, w: &'a [f64]) -> Self {
        Self { x, t, w }
    }
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        parse_expr(source)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            root: Node::Num(value),
        }
    }

    pub fn var(v: Var) -> Self {
        Self { root: Node::Var(v) }
    }

    pub fn from_node(root: Node) -> Self {
        Self { root }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Value if the expression contains no variables.
    pub fn as_constant(&self) -> Option<f64> {
        match self.root {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    pub fn mentions(&self, v: Var) -> bool {
        fn walk(n: &Node, v: Var) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(u) => *u == v,
                Node::Neg(a) | Node::Call(_, a) => walk(a, v),
                Node::Bin(_, a, b) => walk(a, v) || walk(b, v),
            }
        }
        walk(&self.root, v)
    }

    /// Largest driver index `i` such that `Wi` appears, 0 if none.
    pub fn max_driver(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Num(_) => 0,
                Node::Var(Var::W(i)) => *i,
                Node::Var(_) => 0,
                Node::Neg(a) | Node::Call(_, a) => walk(a),
                Node::Bin(_, a, b) => walk(a).max(walk(b)),
            }
        }
        walk(&self.root)
    }

    pub fn depends_on_noise(&self) -> bool {
        self.max_driver() > 0
    }

    pub fn depends_on_time(&self) -> bool {
        self.mentions(Var::T)
    }

    /// Evaluate at a point. Non-finite results are errors.
    pub fn eval(&self, p: Point<'_>) -> Result<f64, EvalError> {
        let v = eval_node(&self.root, &p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite(format!(
                "{self} at x={}, t={}",
                p.x, p.t
            )))
        }
    }

    pub fn eval_xt(&self, x: f64, t: f64) -> Result<f64, EvalError> {
        self.eval(Point::new(x, t, &[]))
    }

    /// Symbolic derivative with respect to `x`, simplified.
    pub fn derivative_x(&self) -> Result<Expression, DiffError> {
        Ok(Expression::from_node(simplify(diff(&self.root)?)))
    }

    pub fn simplified(&self) -> Expression {
        Expression::from_node(simplify(self.root.clone()))
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(&self.root, f)
    }
}

impl std::str::FromStr for Expression {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

fn write_node(n: &Node, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match n {
        Node::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
            write!(f, "(-{:?})", -v)
        }
        Node::Num(v) => write!(f, "{v:?}"),
        Node::Var(v) => write!(f, "{}", v.name()),
        Node::Neg(a) => {
            write!(f, "(-")?;
            write_node(a, f)?;
            write!(f, ")")
        }
        Node::Bin(op, a, b) => {
            write!(f, "(")?;
            write_node(a, f)?;
            write!(f, " {} ", op.symbol())?;
            write_node(b, f)?;
            write!(f, ")")
        }
        Node::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(a, f)?;
            write!(f, ")")
        }
    }
}

fn eval_node(n: &Node, p: &Point<'_>) -> Result<f64, EvalError> {
    Ok(match n {
        Node::Num(v) => *v,
        Node::Var(Var::X) => p.x,
        Node::Var(Var::T) => p.t,
        Node::Var(Var::W(i)) => *p
            .w
            .get(i - 1)
            .ok_or_else(|| EvalError::Unbound(format!("W{i}")))?,
        Node::Neg(a) => -eval_node(a, p)?,
        Node::Bin(op, a, b) => op.apply(eval_node(a, p)?, eval_node(b, p)?),
        Node::Call(func, a) => func.apply(eval_node(a, p)?),
    })
}

/// Parse `source` into an expression tree.
pub fn parse_expr(source: &str) -> Result<Expression, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        len: source.len(),
    };
    let root = parser.expr()?;
    match parser.peek() {
        None => Ok(Expression { root }),
        Some(tok) => Err(ParseError::Syntax {
            offset: tok.offset,
            expected: "operator or end of input".into(),
            found: tok.kind.describe(),
        }),
    }
}

/// Evaluate with named bindings (`x`, `t`, `W1`..). Every variable that
/// occurs in `e` must be bound.
pub fn eval_expr(e: &Expression, bindings: &HashMap<String, f64>) -> Result<f64, EvalError> {
    let lookup = |name: &str| {
        bindings
            .get(name)
            .copied()
            .ok_or_else(|| EvalError::Unbound(name.to_string()))
    };
    let x = if e.mentions(Var::X) { lookup("x")? } else { 0.0 };
    let t = if e.mentions(Var::T) { lookup("t")? } else { 0.0 };
    let w = (1..=e.max_driver())
        .map(|i| {
            if e.mentions(Var::W(i)) {
                lookup(&format!("W{i}"))
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    e.eval(Point::new(x, t, &w))
}

#[derive(Debug, Clone, PartialEq)]
enum TokKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

impl TokKind {
    fn describe(&self) -> String {
        match self {
            TokKind::Num(v) => format!("number {v}"),
            TokKind::Ident(s) => format!("identifier `{s}`"),
            TokKind::Op(c) => format!("`{c}`"),
            TokKind::LParen => "`(`".into(),
            TokKind::RParen => "`)`".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                expected: "numeric literal".into(),
                found: format!("`{text}`"),
            })?;
            out.push(Token {
                kind: TokKind::Num(v),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokKind::Ident(src[start..i].to_string()),
                offset: start,
            });
        } else {
            let kind = match c {
                '+' | '-' | '*' | '/' | '^' => TokKind::Op(c),
                '(' => TokKind::LParen,
                ')' => TokKind::RParen,
                _ => {
                    let ch = src[start..].chars().next().unwrap_or(c);
                    return Err(ParseError::Syntax {
                        offset: start,
                        expected: "number, name, operator or parenthesis".into(),
                        found: format!("`{ch}`"),
                    });
                }
            };
            i += 1;
            out.push(Token {
                kind,
                offset: start,
            });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokKind::Op(c),
                ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(tok) => ParseError::Syntax {
                offset: tok.offset,
                expected: expected.into(),
                found: tok.kind.describe(),
            },
            None => ParseError::Syntax {
                offset: self.len,
                expected: expected.into(),
                found: "end of input".into(),
            },
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(c @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.primary()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.unexpected("number, name or `(`"));
        };
        match tok.kind {
            TokKind::Num(v) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            TokKind::LParen => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokKind::Ident(name) => {
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    if self.peek().map(|t| &t.kind) != Some(&TokKind::LParen) {
                        return Err(self.unexpected(&format!("`(` after `{name}`")));
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                match name.as_str() {
                    "x" => Ok(Node::Var(Var::X)),
                    "t" => Ok(Node::Var(Var::T)),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    _ => match driver_index(&name) {
                        Some(i) => Ok(Node::Var(Var::W(i))),
                        None => Err(ParseError::UnknownIdentifier {
                            name,
                            offset: tok.offset,
                            allowed: format!("x, t, pi, W1..WN, {}", FUNCTION_NAMES.join(", ")),
                        }),
                    },
                }
            }
            _ => Err(self.unexpected("number, name or `(`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Token {
                kind: TokKind::RParen,
                ..
            }) => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.unexpected("`)`")),
        }
    }
}

fn driver_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('W')?;
    if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

// Construction helpers for derived coefficient expressions. All of them
// simplify eagerly so that constant coefficients fold to a single literal.

impl std::ops::Add for Expression {
    type Output = Expression;
    fn add(self, rhs: Expression) -> Expression {
        bin(BinOp::Add, self, rhs)
    }
}

impl std::ops::Sub for Expression {
    type Output = Expression;
    fn sub(self, rhs: Expression) -> Expression {
        bin(BinOp::Sub, self, rhs)
    }
}

impl std::ops::Mul for Expression {
    type Output = Expression;
    fn mul(self, rhs: Expression) -> Expression {
        bin(BinOp::Mul, self, rhs)
    }
}

impl std::ops::Mul<Expression> for f64 {
    type Output = Expression;
    fn mul(self, rhs: Expression) -> Expression {
        bin(BinOp::Mul, Expression::constant(self), rhs)
    }
}

impl std::ops::Neg for Expression {
    type Output = Expression;
    fn neg(self) -> Expression {
        Expression::from_node(simplify(Node::Neg(Box::new(self.root))))
    }
}

impl Expression {
    pub fn powi(self, k: i32) -> Expression {
        bin(BinOp::Pow, self, Expression::constant(k as f64))
    }

    pub fn sqrt(self) -> Expression {
        Expression::from_node(simplify(Node::Call(Func::Sqrt, Box::new(self.root))))
    }
}

fn bin(op: BinOp, a: Expression, b: Expression) -> Expression {
    Expression::from_node(simplify(Node::Bin(op, Box::new(a.root), Box::new(b.root))))
}

fn num(n: &Node) -> Option<f64> {
    match n {
        Node::Num(v) => Some(*v),
        _ => None,
    }
}

/// Constant folding plus the neutral-element identities.
fn simplify(n: Node) -> Node {
    match n {
        Node::Num(_) | Node::Var(_) => n,
        Node::Neg(a) => {
            let a = simplify(*a);
            match a {
                Node::Num(v) => Node::Num(-v),
                Node::Neg(inner) => *inner,
                a => Node::Neg(Box::new(a)),
            }
        }
        Node::Call(func, a) => {
            let a = simplify(*a);
            match num(&a) {
                Some(v) if func.apply(v).is_finite() => Node::Num(func.apply(v)),
                _ => Node::Call(func, Box::new(a)),
            }
        }
        Node::Bin(op, a, b) => {
            let a = simplify(*a);
            let b = simplify(*b);
            if let (Some(x), Some(y)) = (num(&a), num(&b)) {
                let v = op.apply(x, y);
                if v.is_finite() {
                    return Node::Num(v);
                }
            }
            match (op, num(&a), num(&b)) {
                (BinOp::Add, Some(z), _) if z == 0.0 => b,
                (BinOp::Add, _, Some(z)) if z == 0.0 => a,
                (BinOp::Sub, _, Some(z)) if z == 0.0 => a,
                (BinOp::Sub, Some(z), _) if z == 0.0 => simplify(Node::Neg(Box::new(b))),
                (BinOp::Mul, Some(z), _) | (BinOp::Mul, _, Some(z)) if z == 0.0 => Node::Num(0.0),
                (BinOp::Mul, Some(o), _) if o == 1.0 => b,
                (BinOp::Mul, _, Some(o)) if o == 1.0 => a,
                (BinOp::Div, _, Some(o)) if o == 1.0 => a,
                (BinOp::Div, Some(z), _) if z == 0.0 => Node::Num(0.0),
                (BinOp::Pow, _, Some(o)) if o == 1.0 => a,
                (BinOp::Pow, _, Some(z)) if z == 0.0 => Node::Num(1.0),
                _ => Node::Bin(op, Box::new(a), Box::new(b)),
            }
        }
    }
}

fn diff(n: &Node) -> Result<Node, DiffError> {
    use BinOp::*;
    let b = |x: Node| Box::new(x);
    Ok(match n {
        Node::Num(_) => Node::Num(0.0),
        Node::Var(Var::X) => Node::Num(1.0),
        Node::Var(_) => Node::Num(0.0),
        Node::Neg(a) => Node::Neg(b(diff(a)?)),
        Node::Bin(op, u, v) => {
            let (du, dv) = (diff(u)?, diff(v)?);
            match op {
                Add => Node::Bin(Add, b(du), b(dv)),
                Sub => Node::Bin(Sub, b(du), b(dv)),
                Mul => Node::Bin(
                    Add,
                    b(Node::Bin(Mul, b(du), v.clone())),
                    b(Node::Bin(Mul, u.clone(), b(dv))),
                ),
                Div => Node::Bin(
                    Div,
                    b(Node::Bin(
                        Sub,
                        b(Node::Bin(Mul, b(du), v.clone())),
                        b(Node::Bin(Mul, u.clone(), b(dv))),
                    )),
                    b(Node::Bin(Pow, v.clone(), b(Node::Num(2.0)))),
                ),
                Pow => {
                    if Expression::from_node((**v).clone()).mentions(Var::X) {
                        return Err(DiffError(
                            "a power whose exponent depends on x; supply the derivative explicitly"
                                .into(),
                        ));
                    }
                    // v * u^(v-1) * u'
                    Node::Bin(
                        Mul,
                        b(Node::Bin(
                            Mul,
                            v.clone(),
                            b(Node::Bin(
                                Pow,
                                u.clone(),
                                b(Node::Bin(Sub, v.clone(), b(Node::Num(1.0)))),
                            )),
                        )),
                        b(du),
                    )
                }
            }
        }
        Node::Call(func, a) => {
            let da = diff(a)?;
            let outer = match func {
                Func::Sin => Node::Call(Func::Cos, a.clone()),
                Func::Cos => Node::Neg(b(Node::Call(Func::Sin, a.clone()))),
                Func::Exp => Node::Call(Func::Exp, a.clone()),
                Func::Sqrt => Node::Bin(
                    Div,
                    b(Node::Num(0.5)),
                    b(Node::Call(Func::Sqrt, a.clone())),
                ),
                Func::Abs => Node::Bin(Div, a.clone(), b(Node::Call(Func::Abs, a.clone()))),
                Func::Tanh => Node::Bin(
                    Sub,
                    b(Node::Num(1.0)),
                    b(Node::Bin(
                        Pow,
                        b(Node::Call(Func::Tanh, a.clone())),
                        b(Node::Num(2.0)),
                    )),
                ),
            };
            Node::Bin(Mul, b(outer), b(da))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, x: f64, t: f64) -> f64 {
        parse_expr(src).unwrap().eval_xt(x, t).unwrap()
    }

    #[test]
    fn literal() {
        assert_eq!(parse_expr("0.5").unwrap().root, Node::Num(0.5));
    }

    #[test]
    fn coefficient_at_origin() {
        assert_eq!(ev("0.5*(1+0.1*sin(x))", 0.0, 0.0), 0.5);
    }

    #[test]
    fn power_is_right_associative() {
        let parsed = parse_expr("2^3^2").unwrap();
        let hand = Node::Bin(
            BinOp::Pow,
            Box::new(Node::Num(2.0)),
            Box::new(Node::Bin(
                BinOp::Pow,
                Box::new(Node::Num(3.0)),
                Box::new(Node::Num(2.0)),
            )),
        );
        assert_eq!(parsed.root, hand);
        assert_eq!(parsed.eval_xt(0.0, 0.0).unwrap(), 512.0);
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("-2^2", 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0), 0.5);
        assert_eq!(ev("1-2-3", 0.0, 0.0), -4.0);
        assert_eq!(ev("8/4/2", 0.0, 0.0), 1.0);
        assert_eq!(ev("1+2*3", 0.0, 0.0), 7.0);
        assert_eq!(ev("2*-3", 0.0, 0.0), -6.0);
        assert_eq!(ev("1e-3*1E3", 0.0, 0.0), 1.0);
    }

    #[test]
    fn bindings() {
        let mut m = HashMap::new();
        m.insert("x".to_string(), 1.0);
        m.insert("t".to_string(), 2.0);
        assert_eq!(eval_expr(&parse_expr("x+t").unwrap(), &m).unwrap(), 3.0);
        let e = parse_expr("x+W2").unwrap();
        assert_eq!(
            eval_expr(&e, &m),
            Err(EvalError::Unbound("W2".to_string()))
        );
        m.insert("W2".to_string(), 0.5);
        assert_eq!(eval_expr(&e, &m).unwrap(), 1.5);
    }

    #[test]
    fn domain_errors() {
        let e = parse_expr("sqrt(x)").unwrap();
        assert!(matches!(e.eval_xt(-1.0, 0.0), Err(EvalError::NonFinite(_))));
        let e = parse_expr("1/x").unwrap();
        assert!(matches!(e.eval_xt(0.0, 0.0), Err(EvalError::NonFinite(_))));
    }

    #[test]
    fn gaussian_matches_library() {
        let v = ev("exp(-x^2)", 2.0, 0.0);
        assert_eq!(v, (-4.0f64).exp());
    }

    #[test]
    fn unbound_driver_in_point_eval() {
        let e = parse_expr("W1*x").unwrap();
        assert!(matches!(e.eval_xt(1.0, 0.0), Err(EvalError::Unbound(_))));
        assert_eq!(e.eval(Point::new(2.0, 0.0, &[3.0])).unwrap(), 6.0);
        assert!(e.depends_on_noise());
        assert_eq!(e.max_driver(), 1);
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse_expr("1 + * 2") {
            Err(ParseError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match parse_expr("(1+2") {
            Err(ParseError::Syntax {
                offset, expected, ..
            }) => {
                assert_eq!(offset, 4);
                assert!(expected.contains(')'));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_expr(""), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_expr("2 3"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse_expr("x # 2"), Err(ParseError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn unknown_identifier_lists_allowed_names() {
        match parse_expr("y+1") {
            Err(ParseError::UnknownIdentifier { name, allowed, .. }) => {
                assert_eq!(name, "y");
                assert!(allowed.contains("tanh"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_expr("W0").is_err());
        assert!(parse_expr("log(x)").is_err());
    }

    #[test]
    fn derivative_of_coefficient() {
        let b = parse_expr("0.5+0.1*sin(x)").unwrap();
        let bx = b.derivative_x().unwrap();
        let bxx = bx.derivative_x().unwrap();
        for &x in &[0.0, 0.3, 1.1] {
            assert!((bx.eval_xt(x, 0.0).unwrap() - 0.1 * x.cos()).abs() < 1e-15);
            assert!((bxx.eval_xt(x, 0.0).unwrap() + 0.1 * x.sin()).abs() < 1e-15);
        }
        let c = parse_expr("3*t + W1").unwrap().derivative_x().unwrap();
        assert_eq!(c.as_constant(), Some(0.0));
        assert!(parse_expr("2^x").unwrap().derivative_x().is_err());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let srcs = [
            "x^3 - 2*x",
            "sqrt(1+x^2)",
            "tanh(2*x)*cos(x)",
            "exp(-x)/(2+x)",
            "abs(x-5)",
            "x^-2",
        ];
        for src in srcs {
            let e = parse_expr(src).unwrap();
            let d = e.derivative_x().unwrap();
            for &x in &[0.3, 0.7, 1.9] {
                let h = 1e-5;
                let fd = (e.eval_xt(x + h, 0.0).unwrap() - e.eval_xt(x - h, 0.0).unwrap()) / (2.0 * h);
                let an = d.eval_xt(x, 0.0).unwrap();
                assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{src} at {x}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn simplification_folds_constants() {
        let e = Expression::constant(2.0) * Expression::constant(0.5) - Expression::constant(0.25);
        assert_eq!(e.as_constant(), Some(0.75));
        let x = Expression::var(Var::X);
        let e = Expression::constant(0.0) * x.clone() + x.clone();
        assert_eq!(e, x);
        assert_eq!(Expression::constant(-2.0).to_string(), "(-2.0)");
        assert_eq!(parse_expr(&(-x.clone()).to_string()).unwrap(), -x);
    }

    fn arb_node() -> impl Strategy<Value = Node> {
        let leaf = prop_oneof![
            (0u32..1000, 0u32..4).prop_map(|(m, e)| Node::Num(m as f64 / 10f64.powi(e as i32))),
            (1e-9f64..1e9).prop_map(Node::Num),
            Just(Node::Var(Var::X)),
            Just(Node::Var(Var::T)),
            (1usize..4).prop_map(|i| Node::Var(Var::W(i))),
        ];
        leaf.prop_recursive(6, 64, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Node::Bin(op, Box::new(a), Box::new(b))),
                (
                    prop_oneof![
                        Just(Func::Sin),
                        Just(Func::Cos),
                        Just(Func::Exp),
                        Just(Func::Sqrt),
                        Just(Func::Abs),
                        Just(Func::Tanh)
                    ],
                    inner
                )
                    .prop_map(|(f, a)| Node::Call(f, Box::new(a))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn print_parse_round_trip(node in arb_node()) {
            let e = Expression::from_node(node);
            let printed = e.to_string();
            let reparsed = parse_expr(&printed).unwrap();
            prop_assert_eq!(&reparsed, &e);
            let again = parse_expr(&reparsed.to_string()).unwrap();
            prop_assert_eq!(again, reparsed);
        }

        #[test]
        fn evaluation_is_deterministic(node in arb_node(), x in -2.0f64..2.0, t in 0.0f64..1.0) {
            let e = Expression::from_node(node);
            let w = [0.3, -0.2, 1.5];
            let a = e.eval(Point::new(x, t, &w));
            let b = e.eval(Point::new(x, t, &w));
            match (a, b) {
                (Ok(u), Ok(v)) => prop_assert_eq!(u.to_bits(), v.to_bits()),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "inconsistent outcome"),
            }
        }
    }
}
