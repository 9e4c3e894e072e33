//! A tiny arithmetic expression language over one variable.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := base ("^" factor)?
//! base   := NUMBER | VAR | FUNC "(" expr ")" | "(" expr ")" | "-" base
//! FUNC   := sin | cos | exp | log | sqrt
//! ```
//!
//! Note that unary minus lives at the `base` level, so `-u^2` parses as
//! `(-u)^2`, and `^` is right-associative. Evaluation is total on its
//! domain: division by zero, log of a nonpositive value, even roots of
//! negative values, and overflow to non-finite are all reported as errors
//! rather than silently producing NaN or infinity.

use crate::error::{Error, Result};
use std::fmt;

/// Named unary functions available in the language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// Binary operators.
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
}

/// Abstract syntax tree of a parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Var,
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Evaluates at `x` (the value of the variable).
    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = match self {
            Expr::Number(c) => *c,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Call(f, e) => {
                let arg = e.eval(x)?;
                match f {
                    Func::Sin => arg.sin(),
                    Func::Cos => arg.cos(),
                    Func::Exp => arg.exp(),
                    Func::Log => {
                        if arg <= 0.0 {
                            return Err(Error::Eval(format!("log of nonpositive value {arg}")));
                        }
                        arg.ln()
                    }
                    Func::Sqrt => {
                        if arg < 0.0 {
                            return Err(Error::Eval(format!("sqrt of negative value {arg}")));
                        }
                        arg.sqrt()
                    }
                }
            }
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(x)?, r.eval(x)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::Eval("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let p = a.powf(b);
                        if p.is_nan() && !a.is_nan() && !b.is_nan() {
                            return Err(Error::Eval(format!(
                                "{a} raised to non-integer power {b} is undefined"
                            )));
                        }
                        p
                    }
                }
            }
        };
        if v.is_nan() {
            return Err(Error::Eval("expression evaluated to NaN".into()));
        }
        if v.is_infinite() {
            return Err(Error::Eval("expression overflowed".into()));
        }
        Ok(v)
    }
}

/// Fully parenthesized printer; `parse(print(e), var)` reproduces `e`'s
/// value exactly.
impl fmt::Display for Expr {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{}` on f64 is the shortest digit string that round-trips.
            Expr::Number(c) => {
                if *c < 0.0 || c.is_sign_negative() {
                    write!(out, "(-{})", -c)
                } else {
                    write!(out, "{c}")
                }
            }
            Expr::Var => write!(out, "u"),
            Expr::Neg(e) => write!(out, "(-{e})"),
            Expr::Call(f, e) => write!(out, "{}({e})", f.name()),
            Expr::Bin(op, l, r) => write!(out, "({l} {} {r})", op.symbol()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token {
    Number(f64),
    Var,
    Func(Func),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    var: &'a str,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str, var: &'a str) -> Result<Vec<(Token, usize)>> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
            var,
        };
        let mut out = Vec::new();
        while let Some(t) = lx.next_token()? {
            out.push(t);
        }
        Ok(out)
    }

    fn next_token(&mut self) -> Result<Option<(Token, usize)>> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Token::Plus
            }
            b'-' => {
                self.pos += 1;
                Token::Minus
            }
            b'*' => {
                self.pos += 1;
                Token::Star
            }
            b'/' => {
                self.pos += 1;
                Token::Slash
            }
            b'^' => {
                self.pos += 1;
                Token::Caret
            }
            b'(' => {
                self.pos += 1;
                Token::LParen
            }
            b')' => {
                self.pos += 1;
                Token::RParen
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                while end < self.src.len() && self.src[end].is_ascii_digit() {
                    end += 1;
                }
                if end < self.src.len() && self.src[end] == b'.' {
                    end += 1;
                    while end < self.src.len() && self.src[end].is_ascii_digit() {
                        end += 1;
                    }
                }
                if end < self.src.len() && (self.src[end] | 0x20) == b'e' {
                    let mut e = end + 1;
                    if e < self.src.len() && (self.src[e] == b'+' || self.src[e] == b'-') {
                        e += 1;
                    }
                    if e < self.src.len() && self.src[e].is_ascii_digit() {
                        while e < self.src.len() && self.src[e].is_ascii_digit() {
                            e += 1;
                        }
                        end = e;
                    }
                }
                let text = std::str::from_utf8(&self.src[start..end]).unwrap();
                let value: f64 = text.parse().map_err(|_| Error::Parse {
                    pos: start,
                    msg: format!("invalid number literal `{text}`"),
                })?;
                self.pos = end;
                Token::Number(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let word = std::str::from_utf8(&self.src[start..end]).unwrap();
                self.pos = end;
                if word == self.var {
                    Token::Var
                } else if let Some(f) = Func::from_name(word) {
                    Token::Func(f)
                } else {
                    return Err(Error::Parse {
                        pos: start,
                        msg: format!("unknown identifier `{word}` (variable is `{}`)", self.var),
                    });
                }
            }
            other => {
                return Err(Error::Parse {
                    pos: start,
                    msg: format!("unexpected character `{}`", other as char),
                });
            }
        };
        Ok(Some((tok, start)))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    idx: usize,
    end_pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<Token> {
        self.tokens.get(self.idx).map(|&(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.tokens
            .get(self.idx)
            .map(|&(_, p)| p)
            .unwrap_or(self.end_pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.peek();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<()> {
        if self.peek() == Some(want) {
            self.idx += 1;
            Ok(())
        } else {
            Err(Error::Parse {
                pos: self.pos(),
                msg: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Token::Plus) => BinOp::Add,
                Some(Token::Minus) => BinOp::Sub,
                _ => break,
            };
            self.idx += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(Token::Star) => BinOp::Mul,
                Some(Token::Slash) => BinOp::Div,
                _ => break,
            };
            self.idx += 1;
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.base()?;
        if self.peek() == Some(Token::Caret) {
            self.idx += 1;
            // Right-associative exponent.
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.bump() {
            Some(Token::Number(v)) => Ok(Expr::Number(v)),
            Some(Token::Var) => Ok(Expr::Var),
            Some(Token::Minus) => Ok(Expr::Neg(Box::new(self.base()?))),
            Some(Token::Func(f)) => {
                self.expect(Token::LParen, "`(` after function name")?;
                let arg = self.expr()?;
                self.expect(Token::RParen, "closing `)`")?;
                Ok(Expr::Call(f, Box::new(arg)))
            }
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "closing `)`")?;
                Ok(inner)
            }
            Some(_) | None => Err(Error::Parse {
                pos,
                msg: "expected a number, variable, function call, `(`, or `-`".into(),
            }),
        }
    }
}

/// Parses `src` as an expression in the variable named `var`.
pub fn parse(src: &str, var: &str) -> Result<Expr> {
    let tokens = Lexer::tokenize(src, var)?;
    let mut parser = Parser {
        tokens,
        idx: 0,
        end_pos: src.len(),
    };
    let e = parser.expr()?;
    if parser.idx != parser.tokens.len() {
        return Err(Error::Parse {
            pos: parser.pos(),
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eval_str(src: &str, x: f64) -> f64 {
        parse(src, "u").unwrap().eval(x).unwrap()
    }

    #[test]
    fn precedence_of_sum_and_product() {
        assert_eq!(eval_str("2+3*4", 0.0), 14.0);
        assert_eq!(eval_str("2*3+4", 0.0), 10.0);
        assert_eq!(eval_str("2*3^2", 0.0), 18.0);
    }

    #[test]
    fn exponent_is_right_associative() {
        assert_eq!(eval_str("2^3^2", 0.0), 512.0);
    }

    #[test]
    fn unary_minus_binds_below_exponent() {
        // base := "-" base, so -u^2 is (-u)^2.
        assert_eq!(eval_str("-u^2", 3.0), 9.0);
        assert_eq!(eval_str("-(u^2)", 3.0), -9.0);
    }

    #[test]
    fn whitespace_is_insignificant() {
        assert_eq!(eval_str("  2 +  3*4 ", 0.0), eval_str("2+3*4", 0.0));
    }

    #[test]
    fn product_with_trig_factor() {
        let x = std::f64::consts::FRAC_PI_2;
        assert_relative_eq!(
            eval_str("u^2*(1+sin(u))", x),
            x * x * 2.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn scientific_number_literals() {
        assert_eq!(eval_str("1.5e2", 0.0), 150.0);
        assert_eq!(eval_str("2e-1", 0.0), 0.2);
    }

    #[test]
    fn variable_name_is_configurable() {
        let e = parse("t^2", "t").unwrap();
        assert_eq!(e.eval(3.0).unwrap(), 9.0);
        assert!(matches!(parse("t^2", "u"), Err(Error::Parse { .. })));
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse("u + ", "u") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse("2*(u", "u") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse("u @ 2", "u") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse("u + v", "u") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_input_is_rejected() {
        assert!(matches!(parse("1 2", "u"), Err(Error::Parse { .. })));
    }

    #[test]
    fn domain_violations_are_eval_errors() {
        let div = parse("1/(u-u)", "u").unwrap();
        assert!(matches!(div.eval(1.0), Err(Error::Eval(_))));
        let log = parse("log(u-2)", "u").unwrap();
        assert!(matches!(log.eval(1.0), Err(Error::Eval(_))));
        assert!(log.eval(3.0).is_ok());
        let sqrt = parse("sqrt(0-u)", "u").unwrap();
        assert!(matches!(sqrt.eval(4.0), Err(Error::Eval(_))));
        let pow = parse("(0-2)^0.5", "u").unwrap();
        assert!(matches!(pow.eval(0.0), Err(Error::Eval(_))));
        let ovf = parse("exp(exp(u))", "u").unwrap();
        assert!(matches!(ovf.eval(10.0), Err(Error::Eval(_))));
    }

    #[test]
    fn printer_is_fully_parenthesized() {
        let e = parse("1+2*u^3", "u").unwrap();
        assert_eq!(e.to_string(), "(1 + (2 * (u ^ 3)))");
        let n = parse("-sin(u)", "u").unwrap();
        assert_eq!(n.to_string(), "(-sin(u))");
    }

    mod roundtrip {
        use super::*;
        use proptest::prelude::*;

        fn arb_expr(depth: u32) -> BoxedStrategy<Expr> {
            let leaf = prop_oneof![(0.1f64..100.0).prop_map(Expr::Number), Just(Expr::Var),];
            if depth == 0 {
                return leaf.boxed();
            }
            let sub = arb_expr(depth - 1);
            prop_oneof![
                leaf,
                sub.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(Func::Sin),
                        Just(Func::Cos),
                        Just(Func::Exp),
                        Just(Func::Log),
                        Just(Func::Sqrt)
                    ],
                    sub.clone()
                )
                    .prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    sub.clone(),
                    sub
                )
                    .prop_map(|(op, l, r)| Expr::Bin(op, Box::new(l), Box::new(r))),
            ]
            .boxed()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]
            /// Printing and reparsing reproduces the value at random points
            /// (or reproduces the same domain error).
            #[test]
            fn print_then_parse_preserves_evaluation(
                e in arb_expr(4),
                xs in proptest::collection::vec(1.0f64..100.0, 8),
            ) {
                let reparsed = parse(&e.to_string(), "u").unwrap();
                for &x in &xs {
                    match (e.eval(x), reparsed.eval(x)) {
                        (Ok(a), Ok(b)) => {
                            let scale = a.abs().max(1e-300);
                            prop_assert!(
                                ((a - b) / scale).abs() <= 1e-12,
                                "{} vs {} from `{}` at {}", a, b, e, x
                            );
                        }
                        (Err(_), Err(_)) => {}
                        (a, b) => {
                            return Err(TestCaseError::fail(
                                format!("eval mismatch {a:?} vs {b:?} from `{e}` at {x}")
                            ));
                        }
                    }
                }
            }
        }
    }
}
