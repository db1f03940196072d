//! Expressions for kernels, forcing terms and nonlinearities.
//!
//! The grammar is deliberately small: numeric literals, the variables
//! `x`, `y`, `z`, `eps`, the constant `pi`, the binary operators
//! `+ - * / ^`, unary minus and the smooth functions
//! `sin cos exp log sqrt`. There is no `abs`, so every accepted
//! expression has derivatives of all orders on its domain.

mod deriv;
mod parser;

use std::fmt;

use crate::error::{Error, Result};

pub use deriv::{DerivativeTower, MAX_NODES};
pub use parser::parse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    Z,
    Eps,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::Eps => "eps",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "x" => Some(Var::X),
            "y" => Some(Var::Y),
            "z" => Some(Var::Z),
            "eps" => Some(Var::Eps),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> Result<f64> {
        match self {
            Func::Sin => Ok(v.sin()),
            Func::Cos => Ok(v.cos()),
            Func::Exp => Ok(v.exp()),
            Func::Log if v > 0.0 => Ok(v.ln()),
            Func::Log => Err(Error::Domain(format!("log of non-positive value {v}"))),
            Func::Sqrt if v >= 0.0 => Ok(v.sqrt()),
            Func::Sqrt => Err(Error::Domain(format!("sqrt of negative value {v}"))),
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
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Abstract syntax tree of a parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Values for the four reserved variables. Unset variables are unbound.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub z: Option<f64>,
    pub eps: Option<f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn x(mut self, v: f64) -> Self {
        self.x = Some(v);
        self
    }

    pub fn y(mut self, v: f64) -> Self {
        self.y = Some(v);
        self
    }

    pub fn z(mut self, v: f64) -> Self {
        self.z = Some(v);
        self
    }

    pub fn eps(mut self, v: f64) -> Self {
        self.eps = Some(v);
        self
    }

    pub fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::X => self.x,
            Var::Y => self.y,
            Var::Z => self.z,
            Var::Eps => self.eps,
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 1.0)
    }

    /// Numeric value of the tree under `bindings`.
    ///
    /// Domain violations (log or sqrt of an invalid argument, division by
    /// zero, non-finite results) are errors rather than NaN.
    pub fn evaluate(&self, bindings: &Bindings) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(var) => bindings
                .get(*var)
                .ok_or(Error::UnboundVariable(var.name()))?,
            Expr::Neg(e) => -e.evaluate(bindings)?,
            Expr::Call(f, e) => f.apply(e.evaluate(bindings)?)?,
            Expr::Binary(op, a, b) => {
                let a = a.evaluate(bindings)?;
                let b = b.evaluate(bindings)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(Error::Domain("division by zero".into()));
                        }
                        a / b
                    }
                    BinOp::Pow => power(a, b)?,
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(format!("non-finite value in `{self}`")))
        }
    }

    /// Number of nodes in the tree.
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Pi | Expr::Var(_) => 1,
            Expr::Neg(e) | Expr::Call(_, e) => 1 + e.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    pub fn contains(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) | Expr::Pi => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(e) | Expr::Call(_, e) => e.contains(var),
            Expr::Binary(_, a, b) => a.contains(var) || b.contains(var),
        }
    }

    /// Variables occurring in the tree, in the order x, y, z, eps.
    pub fn variables(&self) -> Vec<Var> {
        [Var::X, Var::Y, Var::Z, Var::Eps]
            .into_iter()
            .filter(|v| self.contains(*v))
            .collect()
    }

    /// Fails unless every variable of the tree is in `allowed`.
    pub fn check_variables(&self, allowed: &[Var], context: &str) -> Result<()> {
        match self.variables().into_iter().find(|v| !allowed.contains(v)) {
            Some(var) => Err(Error::DisallowedVariable {
                var: var.name(),
                context: context.to_string(),
            }),
            None => Ok(()),
        }
    }

    /// One symbolic derivative with constant folding.
    pub fn differentiate(&self, var: Var) -> Result<Expr> {
        deriv::differentiate(self, var)
    }

    /// Replaces every occurrence of `var` by `with`.
    pub fn substitute(&self, var: Var, with: &Expr) -> Expr {
        match self {
            Expr::Var(v) if *v == var => with.clone(),
            Expr::Num(_) | Expr::Pi | Expr::Var(_) => self.clone(),
            Expr::Neg(e) => deriv::neg(e.substitute(var, with)),
            Expr::Call(f, e) => deriv::call(*f, e.substitute(var, with)),
            Expr::Binary(op, a, b) => {
                deriv::binary(*op, a.substitute(var, with), b.substitute(var, with))
            }
        }
    }

    /// Folded `self + other`.
    pub fn plus(self, other: Expr) -> Expr {
        deriv::binary(BinOp::Add, self, other)
    }

    /// Folded `self * other`.
    pub fn times(self, other: Expr) -> Expr {
        deriv::binary(BinOp::Mul, self, other)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
            Expr::Num(_) | Expr::Pi | Expr::Var(_) | Expr::Call(..) => 5,
            Expr::Neg(_) => 3,
            Expr::Binary(op, ..) => op.precedence(),
        }
    }
}

fn power(base: f64, exponent: f64) -> Result<f64> {
    if exponent.fract() == 0.0 && exponent.abs() <= i32::MAX as f64 {
        if base == 0.0 && exponent < 0.0 {
            return Err(Error::Domain("zero raised to a negative power".into()));
        }
        Ok(base.powi(exponent as i32))
    } else if base < 0.0 {
        Err(Error::Domain(format!(
            "negative base {base} with non-integer exponent {exponent}"
        )))
    } else if base == 0.0 && exponent < 0.0 {
        Err(Error::Domain("zero raised to a negative power".into()))
    } else {
        Ok(base.powf(exponent))
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, child: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({child})")
    } else {
        write!(f, "{child}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Pi => write!(f, "pi"),
            Expr::Var(v) => write!(f, "{}", v.name()),
            Expr::Neg(e) => {
                write!(f, "-")?;
                write_child(f, e, e.precedence() < 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_parens, right_parens) = match op {
                    BinOp::Add | BinOp::Mul => (a.precedence() < p, b.precedence() < p),
                    BinOp::Sub | BinOp::Div => (a.precedence() < p, b.precedence() <= p),
                    BinOp::Pow => (a.precedence() <= p, b.precedence() < 3),
                };
                write_child(f, a, left_parens)?;
                write!(f, "{}", op.symbol())?;
                write_child(f, b, right_parens)
            }
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn eval(text: &str, b: Bindings) -> Result<f64> {
        parse(text)?.evaluate(&b)
    }

    #[test]
    fn evaluates_examples() {
        let b = Bindings::new().x(2.0).y(3.0).eps(0.0);
        assert_eq!(eval("x*y + eps*x", b).unwrap(), 6.0);
        assert_abs_diff_eq!(
            eval("cos(pi*x)", Bindings::new().x(1.0)).unwrap(),
            -1.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            eval("log(z)", Bindings::new().z(-1.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            eval("sqrt(z)", Bindings::new().z(-1.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn unbound_variable_is_reported() {
        assert_eq!(
            eval("x + y", Bindings::new().x(1.0)),
            Err(Error::UnboundVariable("y"))
        );
    }

    #[test]
    fn integer_powers_of_negative_bases() {
        assert_eq!(eval("z^3", Bindings::new().z(-2.0)).unwrap(), -8.0);
        assert_eq!(eval("(-2)^2", Bindings::new()).unwrap(), 4.0);
        assert!(eval("z^0.5", Bindings::new().z(-2.0)).is_err());
        assert!(eval("1/x", Bindings::new().x(0.0)).is_err());
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        for (text, printed) in [
            ("x*y + eps*x", "x*y + eps*x"),
            ("x-(y-z)", "x - (y - z)"),
            ("(x-y)-z", "x - y - z"),
            ("-x^2", "-x^2"),
            ("(-x)^2", "(-x)^2"),
            ("x^y^z", "x^y^z"),
            ("(x^y)^z", "(x^y)^z"),
            ("x/(y*z)", "x/(y*z)"),
            ("x^-2", "x^-2"),
            ("sin(pi*z)", "sin(pi*z)"),
        ] {
            assert_eq!(parse(text).unwrap().to_string(), printed, "{text}");
        }
    }

    #[test]
    fn variable_checks() {
        let e = parse("x*y + z").unwrap();
        assert_eq!(e.variables(), vec![Var::X, Var::Y, Var::Z]);
        assert!(e.check_variables(&[Var::X, Var::Y], "kernel").is_err());
        assert!(e.check_variables(&[Var::X, Var::Y, Var::Z], "kernel").is_ok());
    }

    fn catalog() -> Vec<&'static str> {
        vec![
            "x*y + eps*x",
            "sin(pi*z)",
            "exp(-x*y)*cos(3*x)",
            "z^2 + eps*z^3",
            "1/(1 + x^2)",
            "sqrt(1 + y*z^2)",
            "log(2 + sin(x*z))",
            "(x - y)^2/(2 + cos(z))",
            "-z^3 + 2^z",
            "x^y + y^x",
        ]
    }

    proptest! {
        #[test]
        fn print_then_parse_preserves_values(
            idx in 0usize..10,
            x in 0.05f64..1.0, y in 0.05f64..1.0, z in -1.0f64..1.0, e in 0.0f64..1.0,
        ) {
            let original = parse(catalog()[idx]).unwrap();
            let reparsed = parse(&original.to_string()).unwrap();
            let b = Bindings::new().x(x).y(y).z(z).eps(e);
            let a = original.evaluate(&b);
            let r = reparsed.evaluate(&b);
            match (a, r) {
                (Ok(a), Ok(r)) => prop_assert!((a - r).abs() <= 1e-14 * (1.0 + a.abs())),
                (Err(_), Err(_)) => {}
                (a, r) => prop_assert!(false, "{a:?} vs {r:?}"),
            }
        }

        #[test]
        fn derivative_matches_central_difference(
            idx in 0usize..10,
            var_idx in 0usize..4,
            x in 0.1f64..0.9, y in 0.1f64..0.9, z in -0.9f64..0.9, e in 0.1f64..0.9,
        ) {
            let expr = parse(catalog()[idx]).unwrap();
            let var = [Var::X, Var::Y, Var::Z, Var::Eps][var_idx];
            let d = expr.differentiate(var).unwrap();
            let h = 1e-5;
            let at = |shift: f64| {
                let mut b = Bindings::new().x(x).y(y).z(z).eps(e);
                match var {
                    Var::X => b.x = Some(x + shift),
                    Var::Y => b.y = Some(y + shift),
                    Var::Z => b.z = Some(z + shift),
                    Var::Eps => b.eps = Some(e + shift),
                }
                b
            };
            let exact = d.evaluate(&at(0.0)).unwrap();
            let fd = (expr.evaluate(&at(h)).unwrap() - expr.evaluate(&at(-h)).unwrap()) / (2.0 * h);
            prop_assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()), "{exact} vs {fd}");
        }
    }
}
