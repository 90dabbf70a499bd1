//! Scalar coefficient expressions in the frequency variable `s` and the
//! parameter vector `p`.
//!
//! Every affine coefficient of the model (operator weights, input/output map
//! weights, tensor weights) is a [`ScalarExpr`]. The grammar is small on
//! purpose: constants, `s`, `p_j`, constant powers, `exp(c * f)`, sums,
//! products and negation. It is closed under differentiation and has a text
//! form that parses back to an expression with identical values.
//!
//! Text syntax (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' ['-'] number)?
//! primary := number ['i'] | 'i' | 's' | 'p'<digits> | 'exp(' expr ')' | '(' expr ')'
//! ```
//!
//! `a / b` is read as `a * b^-1`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MorError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ScalarExpr {
    Real(f64),
    Complex(Complex64),
    /// The frequency variable.
    S,
    /// Parameter component `p_j` (0-based).
    Param(usize),
    /// `base ^ exponent`; integer exponents use repeated multiplication,
    /// others the principal branch.
    Pow(Box<ScalarExpr>, f64),
    /// `exp(c * arg)`.
    Exp(f64, Box<ScalarExpr>),
    Sum(Vec<ScalarExpr>),
    Prod(Vec<ScalarExpr>),
    Neg(Box<ScalarExpr>),
}

/// Differentiation variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    S,
    P(usize),
}

impl ScalarExpr {
    pub fn one() -> Self {
        ScalarExpr::Real(1.0)
    }

    pub fn zero() -> Self {
        ScalarExpr::Real(0.0)
    }

    pub fn constant(x: f64) -> Self {
        ScalarExpr::Real(x)
    }

    pub fn s() -> Self {
        ScalarExpr::S
    }

    pub fn param(j: usize) -> Self {
        ScalarExpr::Param(j)
    }

    pub fn pow(self, e: f64) -> Self {
        ScalarExpr::Pow(Box::new(self), e)
    }

    /// `exp(c * self)`.
    pub fn exp_scaled(self, c: f64) -> Self {
        ScalarExpr::Exp(c, Box::new(self))
    }

    /// Sum with zero terms removed.
    pub fn sum(terms: Vec<ScalarExpr>) -> Self {
        let mut kept: Vec<ScalarExpr> = terms.into_iter().filter(|t| !t.is_zero()).collect();
        match kept.len() {
            0 => ScalarExpr::zero(),
            1 => kept.pop().unwrap(),
            _ => ScalarExpr::Sum(kept),
        }
    }

    /// Product with unit factors removed; any zero factor collapses it.
    pub fn product(factors: Vec<ScalarExpr>) -> Self {
        if factors.iter().any(|f| f.is_zero()) {
            return ScalarExpr::zero();
        }
        let mut kept: Vec<ScalarExpr> = factors.into_iter().filter(|f| !f.is_one()).collect();
        match kept.len() {
            0 => ScalarExpr::one(),
            1 => kept.pop().unwrap(),
            _ => ScalarExpr::Prod(kept),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            ScalarExpr::Real(x) => *x == 0.0,
            ScalarExpr::Complex(z) => z.re == 0.0 && z.im == 0.0,
            _ => false,
        }
    }

    fn is_one(&self) -> bool {
        matches!(self, ScalarExpr::Real(x) if *x == 1.0)
    }

    /// Number of parameter components referenced (max index + 1).
    pub fn arity(&self) -> usize {
        match self {
            ScalarExpr::Real(_) | ScalarExpr::Complex(_) | ScalarExpr::S => 0,
            ScalarExpr::Param(j) => j + 1,
            ScalarExpr::Pow(b, _) | ScalarExpr::Exp(_, b) | ScalarExpr::Neg(b) => b.arity(),
            ScalarExpr::Sum(v) | ScalarExpr::Prod(v) => v.iter().map(|e| e.arity()).max().unwrap_or(0),
        }
    }

    pub fn depends_on_s(&self) -> bool {
        match self {
            ScalarExpr::S => true,
            ScalarExpr::Real(_) | ScalarExpr::Complex(_) | ScalarExpr::Param(_) => false,
            ScalarExpr::Pow(b, _) | ScalarExpr::Exp(_, b) | ScalarExpr::Neg(b) => b.depends_on_s(),
            ScalarExpr::Sum(v) | ScalarExpr::Prod(v) => v.iter().any(|e| e.depends_on_s()),
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match var {
            Var::S => self.depends_on_s(),
            Var::P(j) => self.depends_on_param(j),
        }
    }

    fn depends_on_param(&self, j: usize) -> bool {
        match self {
            ScalarExpr::Param(k) => *k == j,
            ScalarExpr::Real(_) | ScalarExpr::Complex(_) | ScalarExpr::S => false,
            ScalarExpr::Pow(b, _) | ScalarExpr::Exp(_, b) | ScalarExpr::Neg(b) => b.depends_on_param(j),
            ScalarExpr::Sum(v) | ScalarExpr::Prod(v) => v.iter().any(|e| e.depends_on_param(j)),
        }
    }

    /// Evaluates the expression. Non-finite intermediate values are reported
    /// rather than propagated.
    pub fn eval(&self, s: Complex64, p: &[f64]) -> Result<Complex64> {
        let v = match self {
            ScalarExpr::Real(x) => Complex64::new(*x, 0.0),
            ScalarExpr::Complex(z) => *z,
            ScalarExpr::S => s,
            ScalarExpr::Param(j) => match p.get(*j) {
                Some(x) => Complex64::new(*x, 0.0),
                None => return Err(MorError::ParamArity { expected: j + 1, got: p.len() }),
            },
            ScalarExpr::Pow(b, e) => {
                let base = b.eval(s, p)?;
                if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
                    if base == Complex64::new(0.0, 0.0) && *e < 0.0 {
                        return Err(self.non_finite(s));
                    }
                    base.powi(*e as i32)
                } else {
                    if base.im == 0.0 && base.re < 0.0 {
                        return Err(MorError::BranchCut(s));
                    }
                    if base.re == 0.0 && base.im == 0.0 {
                        if *e > 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            return Err(self.non_finite(s));
                        }
                    } else {
                        base.powf(*e)
                    }
                }
            }
            ScalarExpr::Exp(c, arg) => (arg.eval(s, p)? * *c).exp(),
            ScalarExpr::Sum(v) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for e in v {
                    acc += e.eval(s, p)?;
                }
                acc
            }
            ScalarExpr::Prod(v) => {
                let mut acc = Complex64::new(1.0, 0.0);
                for e in v {
                    acc *= e.eval(s, p)?;
                }
                acc
            }
            ScalarExpr::Neg(b) => -b.eval(s, p)?,
        };
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(self.non_finite(s))
        }
    }

    fn non_finite(&self, s: Complex64) -> MorError {
        MorError::NonFinite { expr: self.to_string(), s }
    }

    /// Symbolic derivative. Only trivial zero/one folding is applied.
    pub fn diff(&self, var: Var) -> ScalarExpr {
        match self {
            ScalarExpr::Real(_) | ScalarExpr::Complex(_) => ScalarExpr::zero(),
            ScalarExpr::S => {
                if var == Var::S {
                    ScalarExpr::one()
                } else {
                    ScalarExpr::zero()
                }
            }
            ScalarExpr::Param(j) => {
                if var == Var::P(*j) {
                    ScalarExpr::one()
                } else {
                    ScalarExpr::zero()
                }
            }
            ScalarExpr::Pow(b, e) => {
                let db = b.diff(var);
                if db.is_zero() {
                    return ScalarExpr::zero();
                }
                if *e == 1.0 {
                    return db;
                }
                let lowered = if *e - 1.0 == 0.0 {
                    ScalarExpr::one()
                } else {
                    ScalarExpr::Pow(b.clone(), e - 1.0)
                };
                ScalarExpr::product(vec![ScalarExpr::Real(*e), lowered, db])
            }
            ScalarExpr::Exp(c, arg) => {
                let da = arg.diff(var);
                if da.is_zero() {
                    return ScalarExpr::zero();
                }
                ScalarExpr::product(vec![ScalarExpr::Real(*c), self.clone(), da])
            }
            ScalarExpr::Sum(v) => ScalarExpr::sum(v.iter().map(|e| e.diff(var)).collect()),
            ScalarExpr::Prod(v) => {
                let mut terms = Vec::with_capacity(v.len());
                for (i, f) in v.iter().enumerate() {
                    let df = f.diff(var);
                    if df.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<ScalarExpr> = Vec::with_capacity(v.len());
                    for (j, g) in v.iter().enumerate() {
                        factors.push(if i == j { df.clone() } else { g.clone() });
                    }
                    terms.push(ScalarExpr::product(factors));
                }
                ScalarExpr::sum(terms)
            }
            ScalarExpr::Neg(b) => {
                let db = b.diff(var);
                if db.is_zero() {
                    ScalarExpr::zero()
                } else {
                    ScalarExpr::Neg(Box::new(db))
                }
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            ScalarExpr::Sum(_) => 1,
            ScalarExpr::Neg(_) => 2,
            ScalarExpr::Real(x) if x.is_sign_negative() => 2,
            ScalarExpr::Prod(_) => 3,
            ScalarExpr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, x: f64) -> fmt::Result {
    // Debug gives the shortest representation that parses back bit-identically.
    write!(f, "{x:?}")
}

impl fmt::Display for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarExpr::Real(x) => write_number(f, *x),
            ScalarExpr::Complex(z) => {
                write!(f, "(")?;
                write_number(f, z.re)?;
                write!(f, " + ")?;
                write_number(f, z.im)?;
                write!(f, "i)")
            }
            ScalarExpr::S => write!(f, "s"),
            ScalarExpr::Param(j) => write!(f, "p{j}"),
            ScalarExpr::Pow(b, e) => {
                b.write_child(f, 5)?;
                write!(f, "^")?;
                write_number(f, *e)
            }
            ScalarExpr::Exp(c, arg) => {
                write!(f, "exp(")?;
                if *c != 1.0 {
                    ScalarExpr::Real(*c).write_child(f, 3)?;
                    write!(f, " * ")?;
                    arg.write_child(f, 3)?;
                } else {
                    write!(f, "{arg}")?;
                }
                write!(f, ")")
            }
            ScalarExpr::Sum(v) => {
                for (i, t) in v.iter().enumerate() {
                    match t {
                        ScalarExpr::Neg(inner) if i > 0 => {
                            write!(f, " - ")?;
                            inner.write_child(f, 3)?;
                        }
                        _ => {
                            if i > 0 {
                                write!(f, " + ")?;
                            }
                            t.write_child(f, 2)?;
                        }
                    }
                }
                Ok(())
            }
            ScalarExpr::Prod(v) => {
                for (i, t) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, " * ")?;
                    }
                    t.write_child(f, 3)?;
                }
                Ok(())
            }
            ScalarExpr::Neg(b) => {
                write!(f, "-")?;
                b.write_child(f, 3)
            }
        }
    }
}

impl FromStr for ScalarExpr {
    type Err = MorError;

    fn from_str(text: &str) -> Result<Self> {
        let mut parser = Parser { src: text.as_bytes(), pos: 0 };
        let e = parser.expr()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(e)
    }
}

impl Serialize for ScalarExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ScalarExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> MorError {
        MorError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<ScalarExpr> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.term()?);
            } else if self.eat(b'-') {
                terms.push(ScalarExpr::Neg(Box::new(self.term()?)));
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { ScalarExpr::Sum(terms) })
    }

    fn term(&mut self) -> Result<ScalarExpr> {
        let mut factors = vec![self.unary()?];
        loop {
            if self.eat(b'*') {
                factors.push(self.unary()?);
            } else if self.eat(b'/') {
                factors.push(ScalarExpr::Pow(Box::new(self.unary()?), -1.0));
            } else {
                break;
            }
        }
        Ok(if factors.len() == 1 { factors.pop().unwrap() } else { ScalarExpr::Prod(factors) })
    }

    fn unary(&mut self) -> Result<ScalarExpr> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner {
                ScalarExpr::Real(x) => ScalarExpr::Real(-x),
                ScalarExpr::Complex(z) => ScalarExpr::Complex(-z),
                other => ScalarExpr::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<ScalarExpr> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let negative = self.eat(b'-');
            self.skip_ws();
            let (e, imag) = self.number()?;
            if imag {
                return Err(self.error("complex exponents are not supported"));
            }
            return Ok(ScalarExpr::Pow(Box::new(base), if negative { -e } else { e }));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<(f64, bool)> {
        let start = self.pos;
        let src = self.src;
        let mut end = start;
        while end < src.len() && (src[end].is_ascii_digit() || src[end] == b'.') {
            end += 1;
        }
        if end == start {
            return Err(self.error("expected a number"));
        }
        // Exponent part, but not the start of an identifier such as `exp`.
        if end < src.len() && (src[end] == b'e' || src[end] == b'E') {
            let mut k = end + 1;
            if k < src.len() && (src[k] == b'+' || src[k] == b'-') {
                k += 1;
            }
            if k < src.len() && src[k].is_ascii_digit() {
                while k < src.len() && src[k].is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let text = std::str::from_utf8(&src[start..end]).unwrap();
        let value: f64 = text.parse().map_err(|_| self.error("malformed number"))?;
        self.pos = end;
        let imag = self.pos < src.len()
            && src[self.pos] == b'i'
            && !src.get(self.pos + 1).is_some_and(|c| c.is_ascii_alphanumeric());
        if imag {
            self.pos += 1;
        }
        Ok((value, imag))
    }

    fn ident(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn primary(&mut self) -> Result<ScalarExpr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => {
                let (x, imag) = self.number()?;
                Ok(if imag { ScalarExpr::Complex(Complex64::new(0.0, x)) } else { ScalarExpr::Real(x) })
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let at = self.pos;
                let name = self.ident();
                match name.as_str() {
                    "s" => Ok(ScalarExpr::S),
                    "i" => Ok(ScalarExpr::Complex(Complex64::new(0.0, 1.0))),
                    "exp" => {
                        if !self.eat(b'(') {
                            return Err(self.error("expected '(' after exp"));
                        }
                        let arg = self.expr()?;
                        if !self.eat(b')') {
                            return Err(self.error("expected ')'"));
                        }
                        Ok(split_exp_argument(arg))
                    }
                    _ if name.len() > 1 && name.starts_with('p') && name[1..].bytes().all(|b| b.is_ascii_digit()) => {
                        let j: usize = name[1..].parse().map_err(|_| self.error("bad parameter index"))?;
                        Ok(ScalarExpr::Param(j))
                    }
                    _ => {
                        self.pos = at;
                        Err(self.error(&format!("unknown identifier `{name}`")))
                    }
                }
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }
}

/// `exp(c * f)` with a leading real constant stores `c` separately.
fn split_exp_argument(arg: ScalarExpr) -> ScalarExpr {
    if let ScalarExpr::Prod(mut factors) = arg {
        if factors.len() >= 2 {
            if let ScalarExpr::Real(c) = factors[0] {
                factors.remove(0);
                let rest = if factors.len() == 1 { factors.pop().unwrap() } else { ScalarExpr::Prod(factors) };
                return ScalarExpr::Exp(c, Box::new(rest));
            }
        }
        return ScalarExpr::Exp(1.0, Box::new(ScalarExpr::Prod(factors)));
    }
    ScalarExpr::Exp(1.0, Box::new(arg))
}

impl std::ops::Add for ScalarExpr {
    type Output = ScalarExpr;
    fn add(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::sum(vec![self, rhs])
    }
}

impl std::ops::Mul for ScalarExpr {
    type Output = ScalarExpr;
    fn mul(self, rhs: ScalarExpr) -> ScalarExpr {
        ScalarExpr::product(vec![self, rhs])
    }
}

impl std::ops::Neg for ScalarExpr {
    type Output = ScalarExpr;
    fn neg(self) -> ScalarExpr {
        match self {
            ScalarExpr::Real(x) => ScalarExpr::Real(-x),
            other => ScalarExpr::Neg(Box::new(other)),
        }
    }
}
