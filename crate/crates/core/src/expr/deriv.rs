//! Symbolic differentiation with constant folding.

use super::{BinOp, Expr, Func, Var};
use crate::error::{Error, Result};

/// Hard cap on the size of a derivative tree.
pub const MAX_NODES: usize = 1_000_000;

pub(crate) fn neg(e: Expr) -> Expr {
    match e {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub(crate) fn call(f: Func, arg: Expr) -> Expr {
    if let Expr::Num(v) = arg {
        if let Ok(folded) = f.apply(v) {
            if folded.is_finite() {
                return Expr::Num(folded);
            }
        }
    }
    Expr::Call(f, Box::new(arg))
}

pub(crate) fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Num(x), Expr::Num(y)) = (&a, &b) {
        let folded = match op {
            BinOp::Add => Some(x + y),
            BinOp::Sub => Some(x - y),
            BinOp::Mul => Some(x * y),
            BinOp::Div if *y != 0.0 => Some(x / y),
            BinOp::Pow => super::power(*x, *y).ok(),
            BinOp::Div => None,
        };
        if let Some(v) = folded.filter(|v| v.is_finite()) {
            return Expr::Num(v);
        }
    }
    match op {
        BinOp::Add if a.is_zero() => b,
        BinOp::Add if b.is_zero() => a,
        BinOp::Sub if b.is_zero() => a,
        BinOp::Sub if a.is_zero() => neg(b),
        BinOp::Mul if a.is_zero() || b.is_zero() => Expr::Num(0.0),
        BinOp::Mul if a.is_one() => b,
        BinOp::Mul if b.is_one() => a,
        BinOp::Div if a.is_zero() => Expr::Num(0.0),
        BinOp::Div if b.is_one() => a,
        BinOp::Pow if b.is_zero() => Expr::Num(1.0),
        BinOp::Pow if b.is_one() => a,
        _ => Expr::Binary(op, Box::new(a), Box::new(b)),
    }
}

fn d(e: &Expr, var: Var) -> Expr {
    match e {
        Expr::Num(_) | Expr::Pi => Expr::Num(0.0),
        Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
        Expr::Neg(u) => neg(d(u, var)),
        Expr::Call(f, u) => {
            let du = d(u, var);
            if du.is_zero() {
                return Expr::Num(0.0);
            }
            let u = (**u).clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, u),
                Func::Cos => neg(call(Func::Sin, u)),
                Func::Exp => call(Func::Exp, u),
                Func::Log => return binary(BinOp::Div, du, u),
                Func::Sqrt => {
                    let denom = binary(BinOp::Mul, Expr::Num(2.0), call(Func::Sqrt, u));
                    return binary(BinOp::Div, du, denom);
                }
            };
            binary(BinOp::Mul, outer, du)
        }
        Expr::Binary(op, a, b) => {
            let (a, b) = (&**a, &**b);
            match op {
                BinOp::Add => binary(BinOp::Add, d(a, var), d(b, var)),
                BinOp::Sub => binary(BinOp::Sub, d(a, var), d(b, var)),
                BinOp::Mul => binary(
                    BinOp::Add,
                    binary(BinOp::Mul, d(a, var), b.clone()),
                    binary(BinOp::Mul, a.clone(), d(b, var)),
                ),
                BinOp::Div => {
                    let da = d(a, var);
                    if !b.contains(var) {
                        return binary(BinOp::Div, da, b.clone());
                    }
                    let numerator = binary(
                        BinOp::Sub,
                        binary(BinOp::Mul, da, b.clone()),
                        binary(BinOp::Mul, a.clone(), d(b, var)),
                    );
                    binary(
                        BinOp::Div,
                        numerator,
                        binary(BinOp::Pow, b.clone(), Expr::Num(2.0)),
                    )
                }
                BinOp::Pow => {
                    if !b.contains(var) {
                        // b * a^(b-1) * a'
                        let reduced = binary(BinOp::Sub, b.clone(), Expr::Num(1.0));
                        let outer = binary(
                            BinOp::Mul,
                            b.clone(),
                            binary(BinOp::Pow, a.clone(), reduced),
                        );
                        binary(BinOp::Mul, outer, d(a, var))
                    } else if !a.contains(var) {
                        // a^b * log(a) * b'
                        let outer = binary(
                            BinOp::Mul,
                            e.clone(),
                            call(Func::Log, a.clone()),
                        );
                        binary(BinOp::Mul, outer, d(b, var))
                    } else {
                        // a^b * (b' log a + b a'/a)
                        let inner = binary(
                            BinOp::Add,
                            binary(BinOp::Mul, d(b, var), call(Func::Log, a.clone())),
                            binary(
                                BinOp::Div,
                                binary(BinOp::Mul, b.clone(), d(a, var)),
                                a.clone(),
                            ),
                        );
                        binary(BinOp::Mul, e.clone(), inner)
                    }
                }
            }
        }
    }
}

pub(crate) fn differentiate(e: &Expr, var: Var) -> Result<Expr> {
    let out = d(e, var);
    if out.node_count() > MAX_NODES {
        return Err(Error::ExpressionTooLarge { limit: MAX_NODES });
    }
    Ok(out)
}

/// Successive derivatives `∂^m e / ∂v^m`, computed on demand and cached.
///
/// Once a derivative folds to the literal zero every higher one is zero too,
/// so the tower stops growing at that point.
#[derive(Debug, Clone)]
pub struct DerivativeTower {
    var: Var,
    levels: Vec<Expr>,
}

impl DerivativeTower {
    pub fn new(e: Expr, var: Var) -> Self {
        Self {
            var,
            levels: vec![e],
        }
    }

    /// Derivative of order `m`; `m = 0` is the expression itself.
    pub fn get(&mut self, m: usize) -> Result<&Expr> {
        while self.levels.len() <= m {
            let last = self.levels.last().expect("tower is never empty");
            if last.is_zero() {
                return Ok(self.levels.last().expect("tower is never empty"));
            }
            let next = differentiate(last, self.var)?;
            self.levels.push(next);
        }
        Ok(&self.levels[m])
    }

    /// True when every derivative from order `m` upward is identically zero.
    pub fn vanishes_from(&mut self, m: usize) -> Result<bool> {
        Ok(self.get(m)?.is_zero())
    }
}
