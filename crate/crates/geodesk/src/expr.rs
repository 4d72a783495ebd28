//! Scalar expression language for metric components, structure tensors and
//! potential functions.
//!
//! Grammar (whitespace insensitive, no implicit multiplication):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' ['-'] number)*
//! atom   := number | ident | func '(' expr ')' | '(' expr ')'
//! func   := exp | log | sqrt | sin | cos | tan
//! ```
//!
//! Exponents are numeric literals so `z^0.5` and `z^-1` parse, while
//! symbolic exponents do not. Identifiers are resolved against a chart's
//! coordinate list when an [`Expr`] is bound; evaluation then produces a
//! [`Jet`] at a point.

use std::fmt;

use thiserror::Error;

use crate::jet::{Jet, JetError, JetFunc};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function \"{name}\" at offset {offset}")]
    UnknownFunction { offset: usize, name: String },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BindError {
    #[error("identifier \"{0}\" is not a declared coordinate")]
    UnknownCoordinate(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("{source} while evaluating \"{expr}\"")]
    Jet {
        expr: String,
        #[source]
        source: JetError,
    },
    #[error("point has {got} coordinates, expression expects {expect}")]
    PointLength { got: usize, expect: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Tan,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            _ => return None,
        })
    }

    fn jet_func(self) -> JetFunc {
        match self {
            Func::Exp => JetFunc::Exp,
            Func::Log => JetFunc::Log,
            Func::Sqrt => JetFunc::Sqrt,
            Func::Sin => JetFunc::Sin,
            Func::Cos => JetFunc::Cos,
            Func::Tan => JetFunc::Tan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Parsed abstract syntax tree. Coordinates are kept by name until bound.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Coord(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s) => write!(f, "identifier \"{s}\""),
            Tok::Plus => write!(f, "'+'"),
            Tok::Minus => write!(f, "'-'"),
            Tok::Star => write!(f, "'*'"),
            Tok::Slash => write!(f, "'/'"),
            Tok::Caret => write!(f, "'^'"),
            Tok::LParen => write!(f, "'('"),
            Tok::RParen => write!(f, "')'"),
            Tok::End => write!(f, "end of input"),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token plus its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos];
        let simple = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = simple {
            self.pos += 1;
            return Ok((tok, start));
        }
        if c.is_ascii_digit() || c == b'.' {
            let mut end = self.pos;
            while end < self.src.len() && (self.src[end].is_ascii_digit() || self.src[end] == b'.')
            {
                end += 1;
            }
            // Optional exponent: e/E [+-] digits.
            if end < self.src.len() && (self.src[end] == b'e' || self.src[end] == b'E') {
                let mut probe = end + 1;
                if probe < self.src.len() && (self.src[probe] == b'+' || self.src[probe] == b'-') {
                    probe += 1;
                }
                if probe < self.src.len() && self.src[probe].is_ascii_digit() {
                    while probe < self.src.len() && self.src[probe].is_ascii_digit() {
                        probe += 1;
                    }
                    end = probe;
                }
            }
            let text = std::str::from_utf8(&self.src[start..end]).expect("ascii number");
            let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number \"{text}\""),
            })?;
            self.pos = end;
            return Ok((Tok::Num(value), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = self.pos;
            while end < self.src.len()
                && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
            {
                end += 1;
            }
            let text = std::str::from_utf8(&self.src[start..end])
                .expect("ascii identifier")
                .to_string();
            self.pos = end;
            return Ok((Tok::Ident(text), start));
        }
        Err(ParseError::Syntax {
            offset: start,
            message: format!("unexpected character '{}'", c as char),
        })
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lexer = Lexer::new(src);
        let (tok, offset) = lexer.next()?;
        Ok(Parser { lexer, tok, offset })
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let (tok, offset) = self.lexer.next()?;
        self.tok = tok;
        self.offset = offset;
        Ok(())
    }

    fn error(&self, expected: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.offset,
            message: format!("expected {expected}, found {}", self.tok),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Minus {
            self.advance()?;
            let inner = self.unary()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.atom()?;
        while self.tok == Tok::Caret {
            self.advance()?;
            let negate = if self.tok == Tok::Minus {
                self.advance()?;
                true
            } else {
                false
            };
            let exp = match self.tok {
                Tok::Num(v) => v,
                _ => return Err(self.error("a numeric exponent")),
            };
            self.advance()?;
            base = Expr::Pow(Box::new(base), if negate { -exp } else { exp });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::Num(v))
            }
            Tok::Ident(name) => {
                let ident_offset = self.offset;
                self.advance()?;
                if self.tok == Tok::LParen {
                    let func = Func::from_name(&name).ok_or(ParseError::UnknownFunction {
                        offset: ident_offset,
                        name: name.clone(),
                    })?;
                    self.advance()?;
                    let arg = self.expr()?;
                    if self.tok != Tok::RParen {
                        return Err(self.error("')'"));
                    }
                    self.advance()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else {
                    Ok(Expr::Coord(name))
                }
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.expr()?;
                if self.tok != Tok::RParen {
                    return Err(self.error("')'"));
                }
                self.advance()?;
                Ok(inner)
            }
            _ => Err(self.error("a number, coordinate, function call or '('")),
        }
    }
}

/// Parses an expression string into an AST.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser::new(text)?;
    let expr = parser.expr()?;
    if parser.tok != Tok::End {
        return Err(parser.error("end of input"));
    }
    Ok(expr)
}

// ---------------------------------------------------------------------------
// Pretty printing
// ---------------------------------------------------------------------------

impl Expr {
    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        let prec = self.precedence();
        let parens = prec < parent;
        if parens {
            write!(f, "(")?;
        }
        match self {
            Expr::Num(v) => write!(f, "{v}")?,
            Expr::Coord(name) => write!(f, "{name}")?,
            Expr::Neg(inner) => {
                write!(f, "-")?;
                inner.fmt_prec(f, prec + 1)?;
            }
            Expr::Bin(op, lhs, rhs) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                lhs.fmt_prec(f, prec)?;
                write!(f, "{sym}")?;
                // Left-associative: the right child needs strictly higher binding.
                rhs.fmt_prec(f, prec + 1)?;
            }
            Expr::Pow(base, exp) => {
                base.fmt_prec(f, prec + 1)?;
                if *exp < 0.0 {
                    write!(f, "^-{}", -exp)?;
                } else {
                    write!(f, "^{exp}")?;
                }
            }
            Expr::Call(func, arg) => {
                write!(f, "{}(", func.name())?;
                arg.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

// ---------------------------------------------------------------------------
// Binding and evaluation
// ---------------------------------------------------------------------------

/// AST with coordinate names resolved to indices; ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum Compiled {
    Num(f64),
    Coord(usize),
    Neg(Box<Compiled>),
    Bin(BinOp, Box<Compiled>, Box<Compiled>),
    Pow(Box<Compiled>, f64),
    Call(Func, Box<Compiled>),
}

/// A bound expression: compiled tree plus source text for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    tree: Compiled,
    text: String,
    nvars: usize,
}

impl Expr {
    /// Resolves coordinate names against the chart's coordinate list.
    pub fn bind(&self, coords: &[String]) -> Result<CompiledExpr, BindError> {
        let tree = self.bind_tree(coords)?;
        Ok(CompiledExpr {
            tree,
            text: self.to_string(),
            nvars: coords.len(),
        })
    }

    fn bind_tree(&self, coords: &[String]) -> Result<Compiled, BindError> {
        Ok(match self {
            Expr::Num(v) => Compiled::Num(*v),
            Expr::Coord(name) => {
                let idx = coords
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| BindError::UnknownCoordinate(name.clone()))?;
                Compiled::Coord(idx)
            }
            Expr::Neg(inner) => Compiled::Neg(Box::new(inner.bind_tree(coords)?)),
            Expr::Bin(op, lhs, rhs) => Compiled::Bin(
                *op,
                Box::new(lhs.bind_tree(coords)?),
                Box::new(rhs.bind_tree(coords)?),
            ),
            Expr::Pow(base, exp) => Compiled::Pow(Box::new(base.bind_tree(coords)?), *exp),
            Expr::Call(func, arg) => Compiled::Call(*func, Box::new(arg.bind_tree(coords)?)),
        })
    }
}

impl CompiledExpr {
    /// Constant expression helper, bound to an `nvars`-coordinate chart.
    pub fn constant(value: f64, nvars: usize) -> CompiledExpr {
        CompiledExpr {
            tree: Compiled::Num(value),
            text: format!("{value}"),
            nvars,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Evaluates to a jet of the requested order at the point.
    pub fn eval_jet(&self, point: &[f64], order: usize) -> Result<Jet, EvalError> {
        if point.len() != self.nvars {
            return Err(EvalError::PointLength {
                got: point.len(),
                expect: self.nvars,
            });
        }
        eval_tree(&self.tree, point, self.nvars, order).map_err(|source| EvalError::Jet {
            expr: self.text.clone(),
            source,
        })
    }

    /// Plain value evaluation; order-0 jet under the hood.
    pub fn eval_value(&self, point: &[f64]) -> Result<f64, EvalError> {
        Ok(self.eval_jet(point, 0)?.value())
    }
}

fn eval_tree(tree: &Compiled, point: &[f64], nvars: usize, order: usize) -> Result<Jet, JetError> {
    Ok(match tree {
        Compiled::Num(v) => Jet::constant(*v, nvars, order),
        Compiled::Coord(idx) => Jet::variable(*idx, point[*idx], nvars, order)?,
        Compiled::Neg(inner) => -eval_tree(inner, point, nvars, order)?,
        Compiled::Bin(op, lhs, rhs) => {
            let a = eval_tree(lhs, point, nvars, order)?;
            let b = eval_tree(rhs, point, nvars, order)?;
            match op {
                BinOp::Add => a.try_add(&b)?,
                BinOp::Sub => a.try_sub(&b)?,
                BinOp::Mul => a.try_mul(&b)?,
                BinOp::Div => a.try_div(&b)?,
            }
        }
        Compiled::Pow(base, exp) => eval_tree(base, point, nvars, order)?.apply(JetFunc::Pow(*exp))?,
        Compiled::Call(func, arg) => eval_tree(arg, point, nvars, order)?.apply(func.jet_func())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn coords(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_function_call() {
        let e = parse("exp(2*z)").unwrap();
        assert_eq!(
            e,
            Expr::Call(
                Func::Exp,
                Box::new(Expr::Bin(
                    BinOp::Mul,
                    Box::new(Expr::Num(2.0)),
                    Box::new(Expr::Coord("z".into()))
                ))
            )
        );
    }

    #[test]
    fn metric_component_evaluates() {
        let e = parse("(x^2+y^2+exp(-2*z))/(4*z)").unwrap();
        let bound = e.bind(&coords(&["x", "y", "z"])).unwrap();
        let v = bound.eval_value(&[1.0, 0.0, 1.0]).unwrap();
        assert_relative_eq!(v, (1.0 + (-2.0f64).exp()) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn syntax_error_carries_offset() {
        match parse("1+*2").unwrap_err() {
            ParseError::Syntax { offset, .. } => assert_eq!(offset, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_function_is_rejected() {
        match parse("foo(x)").unwrap_err() {
            ParseError::UnknownFunction { offset, name } => {
                assert_eq!(offset, 0);
                assert_eq!(name, "foo");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        assert!(matches!(parse("x+1 2"), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse(""), Err(ParseError::Syntax { .. })));
        assert!(matches!(parse("(x"), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn unknown_coordinate_fails_at_bind() {
        let e = parse("x+w").unwrap();
        assert_eq!(
            e.bind(&coords(&["x", "y"])).unwrap_err(),
            BindError::UnknownCoordinate("w".into())
        );
    }

    #[test]
    fn sqrt_jet_through_expression() {
        let e = parse("sqrt(z)").unwrap().bind(&coords(&["z"])).unwrap();
        let j = e.eval_jet(&[4.0], 2).unwrap();
        assert_relative_eq!(j.value(), 2.0);
        assert_relative_eq!(j.partial(&[1]).unwrap(), 0.25);
    }

    #[test]
    fn product_rule_through_expression() {
        let e = parse("y*exp(z)").unwrap().bind(&coords(&["y", "z"])).unwrap();
        let j = e.eval_jet(&[1.0, 0.0], 2).unwrap();
        assert_relative_eq!(j.value(), 1.0);
        assert_relative_eq!(j.partial(&[1, 0]).unwrap(), 1.0);
        assert_relative_eq!(j.partial(&[0, 1]).unwrap(), 1.0);
        assert_relative_eq!(j.partial(&[1, 1]).unwrap(), 1.0);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let e = parse("x^2+y^2").unwrap().bind(&coords(&["x", "y"])).unwrap();
        let j = e.eval_jet(&[3.0, 4.0], 2).unwrap();
        assert_relative_eq!(j.value(), 25.0);
        assert_relative_eq!(j.partial(&[1, 0]).unwrap(), 6.0);
        assert_relative_eq!(j.partial(&[0, 1]).unwrap(), 8.0);
    }

    #[test]
    fn domain_error_names_subexpression() {
        let e = parse("1/(x-1)+log(x)")
            .unwrap()
            .bind(&coords(&["x"]))
            .unwrap();
        let err = e.eval_jet(&[1.0], 1).unwrap_err();
        match err {
            EvalError::Jet { expr, source } => {
                assert_eq!(source, JetError::DivisionByZero);
                assert!(expr.contains("x-1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn print_parse_roundtrip_samples() {
        for src in [
            "exp(2*z)",
            "(x^2+y^2+exp(-2*z))/(4*z)",
            "-x^2",
            "x- -y",
            "1/(2*sqrt(z))",
            "x*(y+z)*2",
            "z^-1+z^0.5",
            "sin(x)*cos(y)-tan(0.2)",
            "-(x+y)/(x-y)",
            "2e-2*x",
        ] {
            let ast = parse(src).unwrap();
            let printed = ast.to_string();
            let reparsed = parse(&printed)
                .unwrap_or_else(|e| panic!("reparse of \"{printed}\" failed: {e}"));
            assert_eq!(ast, reparsed, "roundtrip mismatch for \"{src}\" -> \"{printed}\"");
        }
    }

    #[test]
    fn unary_minus_binds_tighter_than_binary_minus() {
        // "-x^2" is -(x^2), and "x--y" is x-(-y).
        let e = parse("-x^2").unwrap().bind(&coords(&["x"])).unwrap();
        assert_relative_eq!(e.eval_value(&[2.0]).unwrap(), -4.0);
        let e = parse("x- -y").unwrap().bind(&coords(&["x", "y"])).unwrap();
        assert_relative_eq!(e.eval_value(&[1.0, 2.0]).unwrap(), 3.0);
    }
}
