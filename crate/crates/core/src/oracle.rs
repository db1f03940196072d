//! Reference solutions that do not go through the series: direct solves at a
//! fixed ε, forward-difference Taylor coefficients, and the closed form of
//! rank-one separable problems.

use crate::error::{Error, Result};
use crate::expr::{parse, Expr};
use crate::linear_solver::solve_fredholm2;
use crate::newton::{HammersteinSystem, Term};
use crate::operators::GridFunction;
use crate::series_engine::{default_start, ProblemSpec};

/// Solves the equation at `ε` (on the same axis as `p.base_epsilon`) without
/// expanding in ε. Linear problems use one Nyström solve with
/// `Γ₀ + (ε - ε*)Γ₁`; otherwise damped Newton runs from `start`, or from the
/// default start (forcing, or the resonant eigenfunction base).
pub fn direct_solve_at(
    p: &ProblemSpec,
    epsilon: f64,
    start: Option<&GridFunction>,
) -> Result<GridFunction> {
    let delta = epsilon - p.base_epsilon;
    let disc = p.discretize(false)?;
    let kernel = disc.kernel0.combine(&disc.kernel1, delta)?;
    if p.is_linear() {
        return solve_fredholm2(&kernel, p.omega, &disc.forcing);
    }
    let mut terms = vec![Term::new(1.0, &p.psi0)?];
    if !p.psi1.is_zero() && delta != 0.0 {
        terms.push(Term::new(delta, &p.psi1)?);
    }
    let system = HammersteinSystem {
        kernel: &kernel,
        omega: p.omega,
        forcing: &disc.forcing,
        terms,
    };
    let start = match start {
        Some(s) => s.clone(),
        None => default_start(p, &disc),
    };
    Ok(system.solve(start)?.solution)
}

/// Default forward-difference step `1e-3 · max(1, 1/ρ)`.
pub fn default_fd_step(rho: Option<f64>) -> f64 {
    match rho {
        Some(r) if r > 0.0 => 1e-3 * (1.0 / r).max(1.0),
        _ => 1e-3,
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Δ_h^k φ(ε*) / (h^k k!)` from solves at `ε* + i·h`, `i = 0..k`.
fn forward_difference(p: &ProblemSpec, k: usize, h: f64) -> Result<GridFunction> {
    let mut samples: Vec<GridFunction> = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let prev = samples.last();
        samples.push(direct_solve_at(p, p.base_epsilon + i as f64 * h, prev)?);
    }
    let mut acc = GridFunction::zeros(samples[0].rule().clone());
    for (i, s) in samples.iter().enumerate() {
        let sign = if (k - i).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc.axpy(sign * binomial(k, i), s)?;
    }
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    Ok(acc.scaled(1.0 / (h.powi(k as i32) * factorial)))
}

/// Estimate of the Taylor coefficient `a_k` at `p.base_epsilon` by one-sided
/// forward differences on `ε* + {0, h, …, kh}`, improved by one Richardson
/// step `2D(h/2) - D(h)`.
pub fn fd_coefficients(p: &ProblemSpec, k: usize, h: f64) -> Result<GridFunction> {
    fd_coefficients_richardson(p, k, h, 1)
}

/// As [`fd_coefficients`] with `levels` Richardson steps on the step
/// sequence `h, h/2, …, h/2^levels`. The forward difference has an error
/// expansion in whole powers of `h`, so level `m` removes the `h^m` term.
pub fn fd_coefficients_richardson(
    p: &ProblemSpec,
    k: usize,
    h: f64,
    levels: usize,
) -> Result<GridFunction> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    if k == 0 {
        return direct_solve_at(p, p.base_epsilon, None);
    }
    let mut table = (0..=levels)
        .map(|i| forward_difference(p, k, h / 2f64.powi(i as i32)))
        .collect::<Result<Vec<_>>>()?;
    for m in 1..=levels {
        let factor = 2f64.powi(m as i32);
        for i in (m..=levels).rev() {
            let mut next = table[i].scaled(factor);
            next.axpy(-1.0, &table[i - 1])?;
            table[i] = next.scaled(1.0 / (factor - 1.0));
        }
    }
    Ok(table.pop().expect("at least one level"))
}

/// Rank-one factors `Γ₀ = g(x)h(y)`, `Γ₁ = u(x)v(y)` of a separable linear
/// problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableFactors {
    pub g: Expr,
    pub h: Expr,
    pub u: Expr,
    pub v: Expr,
}

impl SeparableFactors {
    pub fn parse(g: &str, h: &str, u: &str, v: &str) -> Result<Self> {
        Ok(Self {
            g: parse(g)?,
            h: parse(h)?,
            u: parse(u)?,
            v: parse(v)?,
        })
    }
}

/// Closed form of `φ = f + ω(g⊗h + ε u⊗v)φ`: with moments
/// `α = ∫hφ`, `β = ∫vφ`, `φ = f + ω(α g + ε β u)` and
///
/// ```text
/// (1 - ω∫hg) α -     ωε∫hu  β = ∫hf
///    - ω∫vg  α + (1 - ωε∫vu) β = ∫vf
/// ```
///
/// Moments are integrated on the problem's quadrature rule; the factors are
/// taken as functions of x (the `y` in `h`, `v` is renamed).
#[derive(Debug, Clone)]
pub struct SeparableClosedForm {
    omega: f64,
    f: GridFunction,
    g: GridFunction,
    u: GridFunction,
    m: [[f64; 2]; 2],
    rhs: [f64; 2],
}

impl SeparableClosedForm {
    pub fn new(p: &ProblemSpec, factors: &SeparableFactors) -> Result<Self> {
        if !p.is_linear() {
            return Err(Error::Config("closed form needs a linear problem".into()));
        }
        let rule = p.build_rule()?;
        let as_x = |e: &Expr| e.substitute(crate::Var::Y, &Expr::Var(crate::Var::X));
        let sample = |e: &Expr| GridFunction::from_expr(rule.clone(), &as_x(e));
        let f = GridFunction::from_expr(rule.clone(), &p.forcing)?;
        let (g, h, u, v) = (
            sample(&factors.g)?,
            sample(&factors.h)?,
            sample(&factors.u)?,
            sample(&factors.v)?,
        );
        Ok(Self {
            omega: p.omega,
            m: [[h.inner(&g)?, h.inner(&u)?], [v.inner(&g)?, v.inner(&u)?]],
            rhs: [h.inner(&f)?, v.inner(&f)?],
            f,
            g,
            u,
        })
    }

    /// `φ(ε)` at the quadrature nodes.
    pub fn at(&self, epsilon: f64) -> Result<GridFunction> {
        let w = self.omega;
        let a11 = 1.0 - w * self.m[0][0];
        let a12 = -w * epsilon * self.m[0][1];
        let a21 = -w * self.m[1][0];
        let a22 = 1.0 - w * epsilon * self.m[1][1];
        let det = a11 * a22 - a12 * a21;
        let scale = a11.abs() * a22.abs() + a12.abs() * a21.abs();
        if det.abs() <= 1e-13 * scale.max(1.0) {
            return Err(Error::CharacteristicValue {
                condition: f64::INFINITY,
            });
        }
        let alpha = (self.rhs[0] * a22 - a12 * self.rhs[1]) / det;
        let beta = (a11 * self.rhs[1] - a21 * self.rhs[0]) / det;
        let mut phi = self.f.clone();
        phi.axpy(w * alpha, &self.g)?;
        phi.axpy(w * epsilon * beta, &self.u)?;
        Ok(phi)
    }
}
