//! Closed-form scalar expressions for inline problem definitions.
//!
//! Supports `+ - * / ^`, unary minus, the constants `pi` and `e`, the
//! variables `x` (= `x1`), `y` (= `x2`), `m`, `p` (= `p1`), `p2`, and the
//! functions `sin cos tan exp log sqrt abs sign step min max pow`.
//! `step(z)` is 1 for `z >= 0` and 0 otherwise. Expressions can be
//! differentiated symbolically with respect to any variable.

use std::fmt;

use crate::error::{MfgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X1,
    X2,
    M,
    P1,
    P2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Step,
    Min,
    Max,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "tan" => (Func::Tan, 1),
            "exp" => (Func::Exp, 1),
            "log" | "ln" => (Func::Log, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "sign" => (Func::Sign, 1),
            "step" => (Func::Step, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "pow" => (Func::Pow, 2),
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Step => "step",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }
}

/// Values of the variables an expression may reference.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Env {
    pub x: [f64; 2],
    pub m: f64,
    pub p: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(MfgError::Expression(format!(
                "unexpected `{}` in `{src}`",
                p.tokens[p.pos]
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => match v {
                Var::X1 => env.x[0],
                Var::X2 => env.x[1],
                Var::M => env.m,
                Var::P1 => env.p[0],
                Var::P2 => env.p[1],
            },
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, b) => pow(a.eval(env), b.eval(env)),
            Expr::Call(f, args) => {
                let a = args[0].eval(env);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Sign => {
                        if a > 0.0 {
                            1.0
                        } else if a < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Step => {
                        if a >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Func::Min => a.min(args[1].eval(env)),
                    Func::Max => a.max(args[1].eval(env)),
                    Func::Pow => pow(a, args[1].eval(env)),
                }
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) => a.depends_on(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.depends_on(var) || b.depends_on(var)
            }
            Expr::Call(_, args) => args.iter().any(|a| a.depends_on(var)),
        }
    }

    /// Symbolic partial derivative. Kinks of `abs`, `min`, `max` take the
    /// derivative of the first branch; `step` and `sign` differentiate to zero.
    pub fn derivative(&self, var: Var) -> Expr {
        use Expr::*;
        if !self.depends_on(var) {
            return Const(0.0);
        }
        match self {
            Const(_) => Const(0.0),
            Var(v) => Const(if *v == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.derivative(var)),
            Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                ),
                mul((**b).clone(), (**b).clone()),
            ),
            Pow(a, b) => pow_derivative(a, b, var),
            Call(f, args) => {
                let a = &args[0];
                let da = a.derivative(var);
                match f {
                    Func::Sin => mul(call(Func::Cos, vec![a.clone()]), da),
                    Func::Cos => neg(mul(call(Func::Sin, vec![a.clone()]), da)),
                    Func::Tan => {
                        let c = call(Func::Cos, vec![a.clone()]);
                        div(da, mul(c.clone(), c))
                    }
                    Func::Exp => mul(self.clone(), da),
                    Func::Log => div(da, a.clone()),
                    Func::Sqrt => div(da, mul(Const(2.0), self.clone())),
                    Func::Abs => mul(call(Func::Sign, vec![a.clone()]), da),
                    Func::Sign | Func::Step => Const(0.0),
                    Func::Min | Func::Max => {
                        let b = &args[1];
                        // first branch active when b - a >= 0 (min) or a - b >= 0 (max)
                        let gap = if *f == Func::Min {
                            sub(b.clone(), a.clone())
                        } else {
                            sub(a.clone(), b.clone())
                        };
                        let s = call(Func::Step, vec![gap]);
                        add(
                            mul(s.clone(), da),
                            mul(sub(Const(1.0), s), b.derivative(var)),
                        )
                    }
                    Func::Pow => pow_derivative(a, &args[1], var),
                }
            }
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b == 2.0 {
        a * a
    } else if b.fract() == 0.0 && b.abs() < 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

fn pow_derivative(a: &Expr, b: &Expr, var: Var) -> Expr {
    use Expr::*;
    if !b.depends_on(var) {
        // b a^(b-1) a'
        let exponent = sub(b.clone(), Const(1.0));
        mul(mul(b.clone(), Pow(Box::new(a.clone()), Box::new(exponent))), a.derivative(var))
    } else {
        // a^b (b' ln a + b a' / a)
        let ab = Pow(Box::new(a.clone()), Box::new(b.clone()));
        mul(
            ab,
            add(
                mul(b.derivative(var), call(Func::Log, vec![a.clone()])),
                div(mul(b.clone(), a.derivative(var)), a.clone()),
            ),
        )
    }
}

fn call(f: Func, args: Vec<Expr>) -> Expr {
    Expr::Call(f, args)
}

fn is_const(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Const(c) if *c == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (a, b) if is_const(&a, 0.0) => b,
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (a, b) if is_const(&b, 0.0) => a,
        (a, b) if is_const(&a, 0.0) => neg(b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (a, _) if is_const(&a, 0.0) => Expr::Const(0.0),
        (_, b) if is_const(&b, 0.0) => Expr::Const(0.0),
        (a, b) if is_const(&a, 1.0) => b,
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, _) if is_const(&a, 0.0) => Expr::Const(0.0),
        (a, b) if is_const(&b, 1.0) => a,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(
                f,
                "{}",
                match v {
                    Var::X1 => "x1",
                    Var::X2 => "x2",
                    Var::M => "m",
                    Var::P1 => "p1",
                    Var::P2 => "p2",
                }
            ),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(n) => write!(f, "{n}"),
            Token::Ident(s) => write!(f, "{s}"),
            Token::Op(c) => write!(f, "{c}"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| MfgError::Expression(format!("bad number `{s}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(MfgError::Expression(format!("unexpected character `{c}` in `{src}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(MfgError::Expression(format!(
                "expected `{c}`, found {}",
                self.tokens
                    .get(self.pos)
                    .map(|t| format!("`{t}`"))
                    .unwrap_or_else(|| "end of input".into())
            )))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| MfgError::Expression("unexpected end of input".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Const(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Op(c) => Err(MfgError::Expression(format!("unexpected `{c}`"))),
            Token::Ident(name) => {
                if self.peek_op() == Some('(') {
                    let (func, arity) = Func::lookup(&name)
                        .ok_or_else(|| MfgError::Expression(format!("unknown function `{name}`")))?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek_op() == Some(',') {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    if args.len() != arity {
                        return Err(MfgError::Expression(format!(
                            "`{name}` takes {arity} argument(s), got {}",
                            args.len()
                        )));
                    }
                    return Ok(Expr::Call(func, args));
                }
                Ok(match name.as_str() {
                    "pi" => Expr::Const(std::f64::consts::PI),
                    "e" => Expr::Const(std::f64::consts::E),
                    "x" | "x1" => Expr::Var(Var::X1),
                    "y" | "x2" => Expr::Var(Var::X2),
                    "m" => Expr::Var(Var::M),
                    "p" | "p1" => Expr::Var(Var::P1),
                    "p2" => Expr::Var(Var::P2),
                    _ => return Err(MfgError::Expression(format!("unknown identifier `{name}`"))),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(src: &str, env: Env) -> f64 {
        Expr::parse(src).unwrap().eval(&env)
    }

    #[test]
    fn precedence_and_functions() {
        let env = Env { x: [0.25, 0.5], m: 3.0, p: [1.0, -2.0] };
        assert_eq!(ev("1 + 2 * 3", env), 7.0);
        assert_eq!(ev("-2^2", env), -4.0);
        assert_eq!(ev("2^3^2", env), 512.0);
        assert_eq!(ev("(1 + 2) * 3", env), 9.0);
        assert_eq!(ev("min(4, m) * 4", env), 12.0);
        assert_eq!(ev("max(m, 5) - abs(-1)", env), 4.0);
        assert!((ev("sin(2*pi*x)", env) - 1.0).abs() < 1e-15);
        assert_eq!(ev("x2 + y", env), 1.0);
        assert_eq!(ev("p1^2 + p2^2", env), 5.0);
        assert_eq!(ev("step(x - 0.25) + step(x - 0.3)", env), 1.0);
        assert_eq!(ev("1.5e-1 * 2E1", env), 3.0);
        assert_eq!(ev("pow(m, 2)", env), 9.0);
    }

    #[test]
    fn parse_errors() {
        for bad in ["1 +", "foo(1)", "sin(1, 2)", "z", "(1", "1 $ 2", "min(1)"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn symbolic_derivatives() {
        let env = Env { x: [0.1, 0.2], m: 2.0, p: [0.5, 1.5] };
        let f = Expr::parse("m^2").unwrap();
        assert_eq!(f.derivative(Var::M).eval(&env), 4.0);
        let f = Expr::parse("4*min(4, m) - 3*x").unwrap();
        assert_eq!(f.derivative(Var::M).eval(&env), 4.0);
        assert_eq!(f.derivative(Var::M).eval(&Env { m: 5.0, ..env }), 0.0);
        let h = Expr::parse("(p1^2 + p2^2) / (2 * (1 + 4*m)^1.5)").unwrap();
        let d = h.derivative(Var::P2).eval(&env);
        assert!((d - 1.5 / 27.0).abs() < 1e-14);
        assert_eq!(Expr::parse("sin(x)").unwrap().derivative(Var::M), Expr::Const(0.0));
    }

    proptest! {
        #[test]
        fn derivative_matches_finite_difference(m in 0.1f64..3.0, x in 0.0f64..1.0, p in -2.0f64..2.0) {
            let srcs = [
                "m^2 + sin(2*pi*x) * m",
                "exp(-m) * cos(p) + sqrt(m + 1)",
                "p^2 / (2 * (1 + 4*m)^1.5)",
                "log(1 + m*m) - tan(0.3*m) + m^x",
                "max(m, 1.5) / (1 + p^2)",
            ];
            for src in srcs {
                let f = Expr::parse(src).unwrap();
                let df = f.derivative(Var::M);
                let env = Env { x: [x, 0.0], m, p: [p, 0.0] };
                let eps = 1e-6;
                let fd = (f.eval(&Env { m: m + eps, ..env }) - f.eval(&Env { m: m - eps, ..env })) / (2.0 * eps);
                let exact = df.eval(&env);
                if (m - 1.5).abs() > 1e-3 {
                    prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{src}: {fd} vs {exact}");
                }
            }
        }
    }
}
