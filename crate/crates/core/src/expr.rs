//! Text syntax for unit expressions.
//!
//! ```text
//! expr    := ['+' | '-'] product (('+' | '-') product)*
//! product := factor ('*' factor)*
//! factor  := scalar | MATRIX | UNIT | concat | twist
//! scalar  := NUMBER ['i'] | '(' ['-'] NUMBER ['i'] (('+' | '-') NUMBER ['i'])* ')'
//! concat  := 'concat' '(' UNIT '@' NUMBER (',' UNIT '@' NUMBER)* ')'
//! twist   := 'expm' '(' 't' '*' MATRIX ')' | 'expm' '(' MATRIX '*' 't' ')'
//! ```
//!
//! Every product holds exactly one `UNIT` or `concat`. Matrices to its left
//! multiply from the left, matrices to its right from the right, and scalars
//! anywhere scale the term. A twist must be the first or last factor of its
//! product; it may appear once. `UNIT` and `MATRIX` names come from the
//! surrounding scenario, and `t`, `concat`, `expm` are reserved.
//!
//! Examples: `2*xi1 - 1*xi2`, `xi * expm(t*B)`, `concat(u@0.5, v@0.5)`,
//! `xi0 + A1*xi1*B1 + A2*xi2*B2`, `(0.5+0.5i)*u + (0.5-0.5i)*v`.

use std::collections::BTreeMap;

use crate::algebra::{self, Element, C64};
use crate::error::{Error, Result};
use crate::units::{Term, TwistSide, UnitExpression};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Sym(char),
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c.is_alphabetic()
}

fn is_ident_char(c: char) -> bool {
    c == '_' || c.is_alphanumeric() || c == '\''
}

fn lex(src: &str, line: usize, column: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = column + i;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<f64>()
                .map_err(|_| Error::parse(line, col, format!("malformed number `{text}`")))?;
            let imag = chars.get(i) == Some(&'i') && !chars.get(i + 1).is_some_and(|&n| is_ident_char(n));
            if imag {
                i += 1;
            }
            out.push(Token { tok: Tok::Num(value, imag), line, column: col });
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line, column: col });
        } else if "+-*()@,".contains(c) {
            out.push(Token { tok: Tok::Sym(c), line, column: col });
            i += 1;
        } else {
            return Err(Error::parse(line, col, format!("unexpected character `{c}`")));
        }
    }
    out.push(Token { tok: Tok::End, line, column: column + chars.len() });
    Ok(out)
}

/// Names an expression may refer to.
pub struct ExprContext<'a> {
    pub dim: usize,
    pub labels: &'a [String],
    pub matrices: &'a BTreeMap<String, Element>,
}

enum Factor {
    Scalar(C64),
    Matrix(Element),
    Unit(Vec<(String, f64)>),
    Twist(Element),
}

struct Parser<'a, 'c> {
    tokens: Vec<Token>,
    pos: usize,
    ctx: &'a ExprContext<'c>,
}

impl Parser<'_, '_> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, token: &Token, message: impl Into<String>) -> Error {
        Error::parse(token.line, token.column, message)
    }

    fn expect(&mut self, c: char) -> Result<Token> {
        let t = self.next();
        if t.tok == Tok::Sym(c) {
            Ok(t)
        } else {
            Err(self.error(&t, format!("expected `{c}`, found {}", describe(&t.tok))))
        }
    }

    fn expression(&mut self) -> Result<UnitExpression> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        if let Tok::Sym(c @ ('+' | '-')) = self.peek().tok {
            self.next();
            sign = if c == '-' { -1.0 } else { 1.0 };
        }
        loop {
            terms.push(self.product()?.scaled(C64::new(sign, 0.0)));
            match self.peek().tok.clone() {
                Tok::Sym('+') => sign = 1.0,
                Tok::Sym('-') => sign = -1.0,
                Tok::End => break,
                other => {
                    let t = self.peek().clone();
                    return Err(self.error(&t, format!("expected `+`, `-`, `*` or end, found {}", describe(&other))));
                }
            }
            self.next();
        }
        UnitExpression::from_terms(self.ctx.dim, terms)
    }

    fn product(&mut self) -> Result<Term> {
        let start = self.peek().clone();
        let mut factors = vec![(self.peek().clone(), self.factor()?)];
        while self.peek().tok == Tok::Sym('*') {
            self.next();
            factors.push((self.peek().clone(), self.factor()?));
        }
        let d = self.ctx.dim;
        let units: Vec<usize> =
            factors.iter().enumerate().filter(|(_, f)| matches!(f.1, Factor::Unit(_))).map(|(i, _)| i).collect();
        let pos = match units.as_slice() {
            [p] => *p,
            [] => return Err(self.error(&start, "product contains no unit")),
            [_, second, ..] => return Err(self.error(&factors[*second].0, "product contains more than one unit")),
        };
        let last = factors.len() - 1;
        let (mut left, mut right) = (algebra::identity(d), algebra::identity(d));
        let mut scale = C64::new(1.0, 0.0);
        let mut twist: Option<(Element, TwistSide)> = None;
        let mut segments = Vec::new();
        for (i, (token, factor)) in factors.into_iter().enumerate() {
            match factor {
                Factor::Scalar(z) => scale *= z,
                Factor::Matrix(m) if i < pos => left *= m,
                Factor::Matrix(m) => right *= m,
                Factor::Unit(s) => segments = s,
                Factor::Twist(beta) => {
                    if twist.is_some() {
                        return Err(self.error(&token, "a product may carry only one twist"));
                    }
                    if i != 0 && i != last {
                        return Err(self.error(&token, "a twist must be the first or last factor"));
                    }
                    twist = Some((beta, if i < pos { TwistSide::Left } else { TwistSide::Right }));
                }
            }
        }
        let segs: Vec<(&str, f64)> = segments.iter().map(|(l, f)| (l.as_str(), *f)).collect();
        let mut term = Term::concat(d, &segs).with_left(left).with_right(right).scaled(scale);
        if let Some((beta, side)) = twist {
            term = term.with_twist(beta, side);
        }
        Ok(term)
    }

    fn factor(&mut self) -> Result<Factor> {
        let t = self.next();
        match &t.tok {
            Tok::Num(v, imag) => Ok(Factor::Scalar(number(*v, *imag))),
            Tok::Sym('(') => {
                let mut z = C64::new(0.0, 0.0);
                let mut sign = 1.0;
                if self.peek().tok == Tok::Sym('-') {
                    self.next();
                    sign = -1.0;
                }
                loop {
                    let n = self.next();
                    match n.tok {
                        Tok::Num(v, imag) => z += number(v, imag) * sign,
                        ref other => return Err(self.error(&n, format!("expected a number, found {}", describe(other)))),
                    }
                    let s = self.next();
                    match s.tok {
                        Tok::Sym('+') => sign = 1.0,
                        Tok::Sym('-') => sign = -1.0,
                        Tok::Sym(')') => break,
                        ref other => return Err(self.error(&s, format!("expected `+`, `-` or `)`, found {}", describe(other)))),
                    }
                }
                Ok(Factor::Scalar(z))
            }
            Tok::Ident(name) if name == "concat" => {
                self.expect('(')?;
                let mut segments = Vec::new();
                loop {
                    let label = self.unit_label()?;
                    self.expect('@')?;
                    let n = self.next();
                    let fraction = match n.tok {
                        Tok::Num(v, false) => v,
                        ref other => return Err(self.error(&n, format!("expected a fraction, found {}", describe(other)))),
                    };
                    if !(fraction > 0.0) {
                        return Err(self.error(&n, "fractions must be positive"));
                    }
                    segments.push((label, fraction));
                    let s = self.next();
                    match s.tok {
                        Tok::Sym(',') => continue,
                        Tok::Sym(')') => break,
                        ref other => return Err(self.error(&s, format!("expected `,` or `)`, found {}", describe(other)))),
                    }
                }
                let sum: f64 = segments.iter().map(|s| s.1).sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(self.error(&t, format!("concat fractions sum to {sum}, not 1")));
                }
                Ok(Factor::Unit(segments))
            }
            Tok::Ident(name) if name == "expm" => {
                self.expect('(')?;
                let first = self.next();
                let beta = if first.tok == Tok::Ident("t".into()) {
                    self.expect('*')?;
                    let m = self.next();
                    self.matrix(&m)?
                } else {
                    let beta = self.matrix(&first)?;
                    self.expect('*')?;
                    let tt = self.next();
                    if tt.tok != Tok::Ident("t".into()) {
                        return Err(self.error(&tt, "expected `t`"));
                    }
                    beta
                };
                self.expect(')')?;
                Ok(Factor::Twist(beta))
            }
            Tok::Ident(name) => {
                if self.ctx.labels.iter().any(|l| l == name) {
                    Ok(Factor::Unit(vec![(name.clone(), 1.0)]))
                } else if self.ctx.matrices.contains_key(name) {
                    self.matrix(&t).map(Factor::Matrix)
                } else {
                    Err(self.error(&t, format!("unknown name `{name}`")))
                }
            }
            other => Err(self.error(&t, format!("expected a factor, found {}", describe(other)))),
        }
    }

    fn unit_label(&mut self) -> Result<String> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(name) if self.ctx.labels.iter().any(|l| l == name) => Ok(name.clone()),
            Tok::Ident(name) => Err(self.error(&t, format!("`{name}` is not a unit label"))),
            other => Err(self.error(&t, format!("expected a unit label, found {}", describe(other)))),
        }
    }

    fn matrix(&self, t: &Token) -> Result<Element> {
        match &t.tok {
            Tok::Ident(name) => match self.ctx.matrices.get(name) {
                Some(m) if m.nrows() == self.ctx.dim && m.ncols() == self.ctx.dim => Ok(m.clone()),
                Some(m) => Err(self.error(t, format!("matrix `{name}` is {}×{}, expected {d}×{d}", m.nrows(), m.ncols(), d = self.ctx.dim))),
                None => Err(self.error(t, format!("unknown matrix `{name}`"))),
            },
            other => Err(self.error(t, format!("expected a matrix name, found {}", describe(other)))),
        }
    }
}

fn number(v: f64, imag: bool) -> C64 {
    if imag {
        C64::new(0.0, v)
    } else {
        C64::new(v, 0.0)
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v, false) => format!("number `{v}`"),
        Tok::Num(v, true) => format!("number `{v}i`"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Sym(c) => format!("`{c}`"),
        Tok::End => "end of expression".into(),
    }
}

/// Parses `src`, reporting positions relative to `line` and `column`
/// (both 1-based, the position of the first character of `src`).
pub fn parse_expression(src: &str, ctx: &ExprContext, line: usize, column: usize) -> Result<UnitExpression> {
    let tokens = lex(src, line, column)?;
    let mut parser = Parser { tokens, pos: 0, ctx };
    parser.expression()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn setup() -> (Vec<String>, BTreeMap<String, Element>) {
        let labels = vec!["xi1".to_string(), "xi2".to_string(), "ξ".to_string()];
        let mut matrices = BTreeMap::new();
        matrices.insert("A".to_string(), DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]));
        matrices.insert("B".to_string(), DMatrix::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(2.0, 0.0)]));
        (labels, matrices)
    }

    fn parse(src: &str) -> Result<UnitExpression> {
        let (labels, matrices) = setup();
        let ctx = ExprContext { dim: 2, labels: &labels, matrices: &matrices };
        parse_expression(src, &ctx, 1, 1)
    }

    #[test]
    fn affine_combination() {
        let e = parse("2*xi1 - 1*xi2").unwrap();
        let expected = UnitExpression::affine(2, &[(c(2.0, 0.0), "xi1"), (c(-1.0, 0.0), "xi2")]).unwrap();
        assert_eq!(e, expected);
    }

    #[test]
    fn complex_scalars() {
        let e = parse("(0.5+0.5i)*xi1 + (0.5-0.5i)*xi2").unwrap();
        assert_eq!(e.terms()[0].left[(0, 0)], c(0.5, 0.5));
        assert_eq!(e.terms()[1].left[(1, 1)], c(0.5, -0.5));
        let f = parse("-2i*ξ").unwrap();
        assert_eq!(f.terms()[0].left[(0, 0)], c(0.0, -2.0));
    }

    #[test]
    fn twists_on_either_side() {
        let (_, m) = setup();
        let right = parse("xi1 * expm(t*B)").unwrap();
        assert_eq!(right, UnitExpression::twisted(2, "xi1", m["B"].clone(), TwistSide::Right).unwrap());
        let left = parse("expm(B*t)*xi1").unwrap();
        assert_eq!(left, UnitExpression::twisted(2, "xi1", m["B"].clone(), TwistSide::Left).unwrap());
    }

    #[test]
    fn modification_terms() {
        let (_, m) = setup();
        let e = parse("ξ + A*xi1*B + B*xi2*A").unwrap();
        let expected = UnitExpression::modification(
            2,
            "ξ",
            &[(m["A"].clone(), "xi1", m["B"].clone()), (m["B"].clone(), "xi2", m["A"].clone())],
        )
        .unwrap();
        assert_eq!(e, expected);
    }

    #[test]
    fn concatenation() {
        let e = parse("concat(xi1@0.25, xi2@0.75)").unwrap();
        assert_eq!(e, UnitExpression::concat(2, &[("xi1", 0.25), ("xi2", 0.75)]).unwrap());
    }

    #[test]
    fn errors_carry_positions() {
        let cases = [
            ("2*xi1 - 1*xi3", 11, "unknown name"),
            ("2*xi1 xi2", 7, "expected `+`"),
            ("A*B", 1, "no unit"),
            ("xi1*xi2", 5, "more than one unit"),
            ("A*expm(t*B)*xi1", 3, "first or last"),
            ("concat(xi1@0.5, xi2@0.4)", 1, "sum to"),
            ("xi1 # 2", 5, "unexpected character"),
            ("expm(t*xi1)*xi2", 8, "unknown matrix"),
        ];
        for (src, col, msg) in cases {
            match parse(src) {
                Err(Error::Parse { line, column, message }) => {
                    assert_eq!((line, column), (1, col), "{src}: {message}");
                    assert!(message.contains(msg), "{src}: {message}");
                }
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn offsets_shift_positions() {
        let (labels, matrices) = setup();
        let ctx = ExprContext { dim: 2, labels: &labels, matrices: &matrices };
        match parse_expression("xi1 + q", &ctx, 7, 10) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (7, 16)),
            other => panic!("{other:?}"),
        }
    }
}
