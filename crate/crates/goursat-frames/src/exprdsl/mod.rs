//! A small expression language for metrics, vector fields and curves.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := unary (("*" | "/") unary)*
//! unary   := "-" unary | power
//! power   := primary ("^" exponent)?
//! exponent:= "-" exponent | primary ("^" exponent)?     (must fold to a real constant)
//! primary := number | ident | func "(" expr ")" | "(" expr ")"
//! func    := sin | cos | tan | exp | ln | sqrt
//! ```
//!
//! `pi` and `e` are predefined unless the caller declares a variable of the
//! same name. Juxtaposition (`a b`) is rejected.

mod parser;
mod printer;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::jets::{JetError, JetScalar};

pub use parser::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Parsed expression. Variables are resolved to slots of the declared name list.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Predefined constant (`pi`, `e`).
    Const(&'static str, f64),
    Var {
        name: Arc<str>,
        slot: usize,
    },
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("exponent at byte {offset} must be a constant real expression")]
    NonConstantExponent { offset: usize },
    #[error("numeric literal at byte {offset} is not a finite real")]
    BadNumber { offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::NonConstantExponent { offset }
            | ParseError::BadNumber { offset } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("singular evaluation in {0}")]
    Singular(&'static str),
}

impl Expr {
    /// Evaluate on jets; `vars[slot]` supplies each variable.
    pub fn eval_jet(&self, vars: &[JetScalar]) -> Result<JetScalar, EvalError> {
        let proto = vars.first();
        self.eval_jet_inner(vars, proto)
    }

    /// Like [`Expr::eval_jet`] but with an explicit prototype for constant results.
    pub fn eval_jet_like(
        &self,
        vars: &[JetScalar],
        proto: &JetScalar,
    ) -> Result<JetScalar, EvalError> {
        self.eval_jet_inner(vars, Some(proto))
    }

    fn eval_jet_inner(
        &self,
        vars: &[JetScalar],
        proto: Option<&JetScalar>,
    ) -> Result<JetScalar, EvalError> {
        let constant = |v: f64| -> Result<JetScalar, EvalError> {
            match proto {
                Some(p) => Ok(p.constant_like(v)),
                None => Ok(JetScalar::constant(0, 0, v)?),
            }
        };
        Ok(match self {
            Expr::Num(v) | Expr::Const(_, v) => constant(*v)?,
            Expr::Var { name, slot } => vars
                .get(*slot)
                .cloned()
                .ok_or_else(|| EvalError::Unbound(name.to_string()))?,
            Expr::Neg(a) => -a.eval_jet_inner(vars, proto)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval_jet_inner(vars, proto)?;
                let y = b.eval_jet_inner(vars, proto)?;
                match op {
                    BinOp::Add => &x + &y,
                    BinOp::Sub => &x - &y,
                    BinOp::Mul => &x * &y,
                    BinOp::Div => x.div(&y)?,
                }
            }
            Expr::Pow(a, r) => a.eval_jet_inner(vars, proto)?.powf(*r)?,
            Expr::Call(f, a) => {
                let x = a.eval_jet_inner(vars, proto)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => x.tan()?,
                    Func::Exp => x.exp(),
                    Func::Ln => x.ln()?,
                    Func::Sqrt => x.sqrt()?,
                }
            }
        })
    }

    /// Evaluate with jets looked up by variable name.
    pub fn eval_jet_env(&self, env: &HashMap<String, JetScalar>) -> Result<JetScalar, EvalError> {
        let mut slots: Vec<(usize, String)> = Vec::new();
        self.collect_vars(&mut slots);
        let max = slots.iter().map(|(s, _)| *s + 1).max().unwrap_or(0);
        let proto = env.values().next();
        let mut vars: Vec<JetScalar> = Vec::with_capacity(max);
        for s in 0..max {
            let name = slots.iter().find(|(k, _)| *k == s).map(|(_, n)| n.clone());
            match name {
                Some(n) => vars.push(env.get(&n).cloned().ok_or(EvalError::Unbound(n))?),
                None => vars.push(match proto {
                    Some(p) => p.zero_like(),
                    None => JetScalar::constant(0, 0, 0.0)?,
                }),
            }
        }
        self.eval_jet_inner(&vars, proto)
    }

    fn collect_vars(&self, out: &mut Vec<(usize, String)>) {
        match self {
            Expr::Var { name, slot } => {
                if !out.iter().any(|(s, _)| s == slot) {
                    out.push((*slot, name.to_string()));
                }
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Num(_) | Expr::Const(..) => {}
        }
    }

    /// Plain floating-point evaluation.
    pub fn eval_f64(&self, vars: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) | Expr::Const(_, v) => *v,
            Expr::Var { name, slot } => *vars
                .get(*slot)
                .ok_or_else(|| EvalError::Unbound(name.to_string()))?,
            Expr::Neg(a) => -a.eval_f64(vars)?,
            Expr::Bin(op, a, b) => {
                let x = a.eval_f64(vars)?;
                let y = b.eval_f64(vars)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::Singular("division"));
                        }
                        x / y
                    }
                }
            }
            Expr::Pow(a, r) => {
                let x = a.eval_f64(vars)?;
                if r.fract() == 0.0 && r.abs() <= 64.0 {
                    if x == 0.0 && *r < 0.0 {
                        return Err(EvalError::Singular("pow"));
                    }
                    x.powi(*r as i32)
                } else {
                    if !(x > 0.0) {
                        return Err(EvalError::Singular("pow"));
                    }
                    x.powf(*r)
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval_f64(vars)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => {
                        if x.cos() == 0.0 {
                            return Err(EvalError::Singular("tan"));
                        }
                        x.tan()
                    }
                    Func::Exp => x.exp(),
                    Func::Ln => {
                        if !(x > 0.0) {
                            return Err(EvalError::Singular("ln"));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if !(x > 0.0) {
                            return Err(EvalError::Singular("sqrt"));
                        }
                        x.sqrt()
                    }
                }
            }
        };
        Ok(v)
    }

    /// True if the expression mentions no variables.
    pub fn is_constant(&self) -> bool {
        let mut v = Vec::new();
        self.collect_vars(&mut v);
        v.is_empty()
    }

    /// Structural zero test: literal zero only.
    pub fn is_literal_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&printer::pretty(self))
    }
}

/// `a + b`, dropping literal zeros.
pub fn add(a: Expr, b: Expr) -> Expr {
    match (a.is_literal_zero(), b.is_literal_zero()) {
        (true, _) => b,
        (_, true) => a,
        _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

/// `a * b`, folding literal zeros and ones.
pub fn mul(a: Expr, b: Expr) -> Expr {
    if a.is_literal_zero() || b.is_literal_zero() {
        return Expr::Num(0.0);
    }
    match (&a, &b) {
        (Expr::Num(x), _) if *x == 1.0 => b,
        (_, Expr::Num(y)) if *y == 1.0 => a,
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

/// Parse a list of expressions over the same variables.
pub fn parse_all<S: AsRef<str>>(texts: &[S], vars: &[&str]) -> Result<Vec<Expr>, ParseError> {
    texts.iter().map(|t| parse(t.as_ref(), vars)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn paper_style_inputs_parse() {
        let e = parse("(1+b*c)/a", &["a", "b", "c"]).unwrap();
        assert!(matches!(e, Expr::Bin(BinOp::Div, _, _)));
        let e = parse("1/z^2", &["x", "y", "z"]).unwrap();
        match e {
            Expr::Bin(BinOp::Div, l, r) => {
                assert_eq!(*l, Expr::Num(1.0));
                assert!(matches!(*r, Expr::Pow(_, p) if p == 2.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unclosed_call_reports_offset_and_expectation() {
        let err = parse("sin(q", &["q"]).unwrap_err();
        match err {
            ParseError::Syntax {
                offset, expected, ..
            } => {
                assert_eq!(offset, 5);
                assert!(expected.iter().any(|e| e == "\")\""));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn eval_examples() {
        let e = parse("x*y", &["x", "y"]).unwrap();
        let x = JetScalar::constant(0, 2, 2.0).unwrap();
        let y = JetScalar::constant(0, 2, 3.0).unwrap();
        assert_eq!(e.eval_jet(&[x, y]).unwrap().value(), 6.0);

        let e = parse("sqrt(x)", &["x"]).unwrap();
        let x = JetScalar::seed(&[-1.0], 0, 2).unwrap();
        assert!(matches!(
            e.eval_jet(&[x]),
            Err(EvalError::Jet(JetError::SingularEvaluation { op: "sqrt" }))
        ));

        let e = parse("-z*cos(a)*sin(c)", &["z", "a", "c"]).unwrap();
        let p = [1.0, 0.0, std::f64::consts::FRAC_PI_2];
        let jets = JetScalar::seed_all(&p, 1).unwrap();
        assert_relative_eq!(e.eval_jet(&jets).unwrap().value(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn env_lookup_by_name() {
        let e = parse("a - 2*b", &["a", "b"]).unwrap();
        let mut env = HashMap::new();
        env.insert("a".to_string(), JetScalar::constant(0, 1, 5.0).unwrap());
        env.insert("b".to_string(), JetScalar::constant(0, 1, 1.5).unwrap());
        assert_eq!(e.eval_jet_env(&env).unwrap().value(), 2.0);
        env.remove("b");
        assert!(matches!(e.eval_jet_env(&env), Err(EvalError::Unbound(n)) if n == "b"));
    }

    #[test]
    fn constants_and_shadowing() {
        let e = parse("2*pi", &[]).unwrap();
        assert_relative_eq!(e.eval_f64(&[]).unwrap(), std::f64::consts::TAU);
        let e = parse("e", &["e"]).unwrap();
        assert_eq!(e.eval_f64(&[7.0]).unwrap(), 7.0);
    }
}
