//! Arithmetic expressions over named scalar slots.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numeric literals,
//! variables, and calls to a fixed set of functions. All arithmetic is `f64`;
//! `^` binds tighter than unary minus on its left and is right-associative,
//! so `-x^2` is `-(x^2)` and `2^3^2` is `2^9`.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub source: String,
    pub position: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at column {} of `{}`", self.message, self.position + 1, self.source)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Ln,
    Log10,
    Sqrt,
    Abs,
    Sign,
    Atan2,
    Pow,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "asin" => (Func::Asin, 1),
            "acos" => (Func::Acos, 1),
            "atan" => (Func::Atan, 1),
            "sinh" => (Func::Sinh, 1),
            "cosh" => (Func::Cosh, 1),
            "tanh" => (Func::Tanh, 1),
            "exp" => (Func::Exp, 1),
            "ln" | "log" => (Func::Ln, 1),
            "log10" => (Func::Log10, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "sign" => (Func::Sign, 1),
            "atan2" => (Func::Atan2, 2),
            "pow" => (Func::Pow, 2),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }

    fn apply(self, a: &[f64]) -> f64 {
        match self {
            Func::Sin => a[0].sin(),
            Func::Cos => a[0].cos(),
            Func::Tan => a[0].tan(),
            Func::Asin => a[0].asin(),
            Func::Acos => a[0].acos(),
            Func::Atan => a[0].atan(),
            Func::Sinh => a[0].sinh(),
            Func::Cosh => a[0].cosh(),
            Func::Tanh => a[0].tanh(),
            Func::Exp => a[0].exp(),
            Func::Ln => a[0].ln(),
            Func::Log10 => a[0].log10(),
            Func::Sqrt => a[0].sqrt(),
            Func::Abs => a[0].abs(),
            Func::Sign => {
                if a[0] == 0.0 {
                    0.0
                } else {
                    a[0].signum()
                }
            }
            Func::Atan2 => a[0].atan2(a[1]),
            Func::Pow => pow(a[0], a[1]),
            Func::Min => a[0].min(a[1]),
            Func::Max => a[0].max(a[1]),
        }
    }
}

// Integer exponents go through powi so that `x^2` matches `x*x` to the bit.
fn pow(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Add(a, b) => a.eval(vars) + b.eval(vars),
            Node::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Node::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Node::Div(a, b) => a.eval(vars) / b.eval(vars),
            Node::Pow(a, b) => pow(a.eval(vars), b.eval(vars)),
            Node::Call(f, args) => {
                let mut buf = [0.0; 2];
                for (slot, a) in buf.iter_mut().zip(args) {
                    *slot = a.eval(vars);
                }
                f.apply(&buf[..args.len()])
            }
        }
    }

    fn fold(self) -> Node {
        let constant = |n: &Node| matches!(n, Node::Const(_));
        let folded = match self {
            Node::Neg(a) => Node::Neg(Box::new(a.fold())),
            Node::Add(a, b) => Node::Add(Box::new(a.fold()), Box::new(b.fold())),
            Node::Sub(a, b) => Node::Sub(Box::new(a.fold()), Box::new(b.fold())),
            Node::Mul(a, b) => Node::Mul(Box::new(a.fold()), Box::new(b.fold())),
            Node::Div(a, b) => Node::Div(Box::new(a.fold()), Box::new(b.fold())),
            Node::Pow(a, b) => Node::Pow(Box::new(a.fold()), Box::new(b.fold())),
            Node::Call(f, args) => Node::Call(f, args.into_iter().map(Node::fold).collect()),
            leaf => return leaf,
        };
        let all_const = match &folded {
            Node::Neg(a) => constant(a),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                constant(a) && constant(b)
            }
            Node::Call(_, args) => args.iter().all(constant),
            _ => false,
        };
        if all_const {
            Node::Const(folded.eval(&[]))
        } else {
            folded
        }
    }
}

/// A parsed expression bound to a fixed variable ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

impl Expr {
    /// Parses `source`; `variables` gives the slot of each name and
    /// `constants` supplies named values folded in at parse time.
    pub fn parse(source: &str, variables: &[&str], constants: &[(String, f64)]) -> Result<Self, ParseError> {
        let mut p = Parser { src: source, bytes: source.as_bytes(), pos: 0, variables, constants };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self { root: root.fold(), source: source.to_string() })
    }

    /// Evaluates with `vars` laid out in the order given to `parse`.
    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.root.eval(vars)
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    variables: &'a [&'a str],
    constants: &'a [(String, f64)],
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { source: self.src.to_string(), position: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            // right operand may carry its own sign: 2^-1
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.bytes.len() && p.bytes[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.bytes.get(self.pos), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                self.pos = mark;
            }
        }
        self.src[start..self.pos].parse::<f64>().map(Node::Const).map_err(|_| ParseError {
            source: self.src.to_string(),
            position: start,
            message: "malformed number".into(),
        })
    }

    fn name(&mut self) -> Result<Node, ParseError> {
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if self.peek() == Some(b'(') {
            let Some((func, arity)) = Func::lookup(name) else {
                self.pos = start;
                return Err(self.error(format!("unknown function `{name}`")));
            };
            self.pos += 1;
            let mut args = Vec::new();
            if !self.eat(b')') {
                loop {
                    args.push(self.expr()?);
                    if self.eat(b')') {
                        break;
                    }
                    if !self.eat(b',') {
                        return Err(self.error("expected `,` or `)`"));
                    }
                }
            }
            if args.len() != arity {
                self.pos = start;
                return Err(self.error(format!("`{name}` takes {arity} argument(s), got {}", args.len())));
            }
            return Ok(Node::Call(func, args));
        }
        if let Some(i) = self.variables.iter().position(|v| *v == name) {
            return Ok(Node::Var(i));
        }
        if let Some((_, v)) = self.constants.iter().find(|(c, _)| c == name) {
            return Ok(Node::Const(*v));
        }
        match name {
            "pi" => Ok(Node::Const(std::f64::consts::PI)),
            "e" => Ok(Node::Const(std::f64::consts::E)),
            _ => {
                self.pos = start;
                Err(self.error(format!("unknown variable `{name}`")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, names: &[&str], vals: &[f64]) -> f64 {
        Expr::parse(src, names, &[]).unwrap().eval(vals)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &[], &[]), 9.0);
        assert_eq!(eval("2^3^2", &[], &[]), 512.0);
        assert_eq!(eval("-x^2", &["x"], &[3.0]), -9.0);
        assert_eq!(eval("2^-1", &[], &[]), 0.5);
        assert_eq!(eval("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(eval("1/2", &[], &[]), 0.5);
        assert_eq!(eval("10 - 3 - 2", &[], &[]), 5.0);
    }

    #[test]
    fn literals() {
        assert_eq!(eval("1.5e-3", &[], &[]), 1.5e-3);
        assert_eq!(eval(".25", &[], &[]), 0.25);
        assert_eq!(eval("2E2", &[], &[]), 200.0);
        // `e` after a number without digits is not an exponent
        assert_eq!(eval("2*e", &[], &[]), 2.0 * std::f64::consts::E);
    }

    #[test]
    fn functions_and_constants() {
        let x = 0.7;
        assert_eq!(eval("sin(x)^2 + cos(x)^2", &["x"], &[x]), x.sin().powi(2) + x.cos().powi(2));
        assert_eq!(eval("atan2(1, 2)", &[], &[]), 1f64.atan2(2.0));
        assert_eq!(eval("max(x, 1) + min(x, 1)", &["x"], &[x]), 1.0 + x);
        assert_eq!(eval("pi", &[], &[]), std::f64::consts::PI);
        let c = vec![("rho".to_string(), 2.5)];
        assert_eq!(Expr::parse("rho * x", &["x"], &c).unwrap().eval(&[2.0]), 5.0);
    }

    #[test]
    fn variables_shadow_constants() {
        let c = vec![("x".to_string(), 100.0)];
        assert_eq!(Expr::parse("x", &["x"], &c).unwrap().eval(&[1.0]), 1.0);
    }

    #[test]
    fn integer_powers_are_exact() {
        let x = 1.234_567_891_f64;
        assert_eq!(eval("x^3", &["x"], &[x]), x.powi(3));
    }

    #[test]
    fn errors_point_at_the_problem() {
        let e = Expr::parse("x + y", &["x"], &[]).unwrap_err();
        assert_eq!(e.position, 4);
        assert!(e.message.contains("`y`"));
        assert!(Expr::parse("foo(1)", &[], &[]).unwrap_err().message.contains("unknown function"));
        assert!(Expr::parse("sin(1, 2)", &[], &[]).unwrap_err().message.contains("takes 1"));
        assert!(Expr::parse("(1 + 2", &[], &[]).is_err());
        assert!(Expr::parse("1 +", &[], &[]).is_err());
        assert!(Expr::parse("1 2", &[], &[]).is_err());
        assert!(Expr::parse("", &[], &[]).is_err());
    }

    #[test]
    fn constant_subtrees_fold() {
        let e = Expr::parse("2 * 3 + x", &["x"], &[]).unwrap();
        assert_eq!(e.root, Node::Add(Box::new(Node::Const(6.0)), Box::new(Node::Var(0))));
    }
}
