//! Perturbation-series coefficients of the unified perturbed equation.
//!
//! Coefficients are plain Taylor coefficients: the solution is
//! `φ(ε) = Σ_j a_j (ε - ε*)^j` with no factorial weighting. Order ν of
//! `ω(Γ₀ + εΓ₁)[ψ₀(φ) + εψ₁(φ)]` is split into the part linear in `a_ν`,
//! `ωΓ₀ diag(∂_zψ₀(a₀)) a_ν`, and known lower-order terms, so every order
//! is one linear second-kind solve with the same operator
//! `J = I - ωΓ₀ diag(∂_zψ₀(a₀))`.

mod problem;

use std::sync::Arc;

use serde::Serialize;

use crate::bounds::{self, BoundsReport};
use crate::error::{Error, Result};
use crate::expr::{DerivativeTower, Expr, Var};
use crate::faa_di_bruno::{compose_with_tower, CoeffSeries};
use crate::linear_solver::{
    eigendecompose, nystrom_interpolate, singular_solve_scaled, Resolvent,
};
use crate::newton::{HammersteinSystem, Term};
use crate::operators::{DiscreteKernel, GridFunction, NormKind};
use crate::quadrature::QuadratureRule;

pub use problem::{Discretized, ProblemSpec, DEFAULT_NODES};

/// Tolerance handed to the minimal-norm solve at resonant orders.
pub const RESONANT_TOL: f64 = 1e-8;

/// Relative size, against `|ω| N₂(Γ₀) ||a₀||`, below which a resonant
/// right-hand side counts as round-off.
const ROUNDOFF_FLOOR: f64 = 1e-6;

/// `|1 - ωμ|` below which an eigenvalue is taken as the resonant base mode.
pub const BASE_RESONANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderNorms {
    pub sup: f64,
    pub l2: f64,
    pub l1: f64,
}

impl OrderNorms {
    fn of(g: &GridFunction) -> Self {
        Self {
            sup: g.sup_norm(),
            l2: g.l2_norm(),
            l1: g.l1_norm(),
        }
    }

    pub fn get(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Sup => self.sup,
            NormKind::L2 => self.l2,
            NormKind::L1 => self.l1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    /// LU solve of the Nyström system.
    Nystrom,
    /// Minimal-norm solve of a singular system.
    MinimalNorm,
    /// Resonant eigenfunction of the unperturbed kernel.
    EigenBase,
    /// Damped Newton on the base equation.
    Newton,
    /// Derivative post-processing, no solve.
    Derivative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderReport {
    pub order: usize,
    pub method: SolveMethod,
    /// Newton residual for a Newton base, null-space residual for a
    /// minimal-norm order.
    pub residual: Option<f64>,
}

/// The order at which a resonant system had no solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResonantAbort {
    pub order: usize,
    pub nullspace_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesDiagnostics {
    pub order_norms: Vec<OrderNorms>,
    pub reports: Vec<OrderReport>,
    pub aborted: Option<ResonantAbort>,
    /// Empirical growth constant `D = max_j ||a_j||^{1/j}`.
    pub growth_constant: f64,
}

/// Coefficients `a_0..a_N` of the expansion about `base_epsilon`.
#[derive(Debug, Clone)]
pub struct SeriesSolution {
    pub base_epsilon: f64,
    pub coefficients: Vec<GridFunction>,
    /// `None` means no finite radius was detected.
    pub radius_estimate: Option<f64>,
    /// Coefficient growth bound, defined for linear problems with `|ω|N(Γ₀) < 1`.
    pub rho: Option<f64>,
    pub norm: NormKind,
    pub diagnostics: SeriesDiagnostics,
}

impl SeriesSolution {
    /// Highest computed order.
    pub fn truncation(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        self.coefficients[0].rule()
    }

    pub fn coefficient_norms(&self, kind: NormKind) -> Vec<f64> {
        self.coefficients.iter().map(|a| a.norm(kind)).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.diagnostics.aborted.is_none()
    }
}

fn build(
    base_epsilon: f64,
    coefficients: Vec<GridFunction>,
    rho: Option<f64>,
    radius: Option<f64>,
    norm: NormKind,
    reports: Vec<OrderReport>,
    aborted: Option<ResonantAbort>,
) -> SeriesSolution {
    let order_norms = coefficients.iter().map(OrderNorms::of).collect();
    let growth_constant = growth_constant(&coefficients, norm);
    SeriesSolution {
        base_epsilon,
        coefficients,
        radius_estimate: radius,
        rho,
        norm,
        diagnostics: SeriesDiagnostics {
            order_norms,
            reports,
            aborted,
            growth_constant,
        },
    }
}

/// `max_{j>=1} ||a_j||^{1/j}`.
pub fn growth_constant(coefficients: &[GridFunction], kind: NormKind) -> f64 {
    coefficients
        .iter()
        .enumerate()
        .skip(1)
        .map(|(j, a)| a.norm(kind).powf(1.0 / j as f64))
        .fold(0.0, f64::max)
}

/// Ratio-test radius: median of the last five ratios `||a_j|| / ||a_{j+1}||`.
///
/// Returns `None` when the tail coefficients vanish (relative to `||a_0||`
/// and the largest coefficient), meaning no finite radius is visible.
pub fn ratio_radius(coefficients: &[GridFunction], kind: NormKind) -> Option<f64> {
    let norms: Vec<f64> = coefficients.iter().map(|a| a.norm(kind)).collect();
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let negligible = |v: f64| v <= 1e-14 * scale || v == 0.0;
    let n = norms.len();
    if n < 3 {
        return None;
    }
    let window = 5.min(n - 1);
    let tail = &norms[n - window - 1..];
    if tail.iter().skip(1).all(|v| negligible(*v)) {
        return None;
    }
    let mut ratios: Vec<f64> = tail
        .windows(2)
        .filter(|w| !negligible(w[1]))
        .map(|w| w[0] / w[1])
        .collect();
    if ratios.is_empty() {
        return None;
    }
    ratios.sort_by(f64::total_cmp);
    Some(ratios[ratios.len() / 2])
}

fn rho_for(p: &ProblemSpec, disc: &Discretized) -> Option<f64> {
    bounds::rho_linear(
        p.omega,
        disc.kernel0.norms().get(p.norm),
        disc.kernel1.norms().get(p.norm),
    )
}

/// Series of the linear problem `φ = f + ω(Γ₀ + εΓ₁)φ`:
/// `a_0 = (I - ωΓ₀)^{-1} f`, `a_j = (I - ωΓ₀)^{-1} ωΓ₁ a_{j-1}`.
pub fn linear_series_terms(p: &ProblemSpec, order: usize) -> Result<SeriesSolution> {
    if !p.is_linear() {
        return Err(Error::Config(
            "linear series requested for a problem with a nonlinearity".into(),
        ));
    }
    let disc = p.discretize(false)?;
    let resolvent = Resolvent::new(&disc.kernel0, p.omega)?;
    let mut coefficients = Vec::with_capacity(order + 1);
    coefficients.push(resolvent.solve(&disc.forcing)?);
    let mut reports = vec![OrderReport {
        order: 0,
        method: SolveMethod::Nystrom,
        residual: None,
    }];
    let perturbed = !disc.kernel1.is_zero();
    for j in 1..=order {
        let next = if perturbed {
            let rhs = disc.kernel1.apply(&coefficients[j - 1])?.scaled(p.omega);
            resolvent.solve(&rhs)?
        } else {
            GridFunction::zeros(disc.rule.clone())
        };
        coefficients.push(next);
        reports.push(OrderReport {
            order: j,
            method: SolveMethod::Nystrom,
            residual: None,
        });
    }
    let rho = rho_for(p, &disc);
    let radius = match rho {
        Some(0.0) => None,
        Some(r) => Some(1.0 / r),
        None => ratio_radius(&coefficients, p.norm),
    };
    Ok(build(
        p.base_epsilon,
        coefficients,
        rho,
        radius,
        p.norm,
        reports,
        None,
    ))
}

/// Unit-sup-norm version of a resonant eigenfunction, measuring the sup over
/// `[0, 1]` through the Nyström interpolant `φ(x) = (1/μ) Σ w_j Γ(x, y_j) φ_j`.
fn continuous_sup_normalized(kernel: &Expr, mu: f64, phi: &GridFunction) -> Result<GridFunction> {
    let zero = Expr::Num(0.0);
    let at = |x: f64| nystrom_interpolate(kernel, 1.0 / mu, &zero, phi, x).map(f64::abs);
    let samples = 1024;
    let mut best = (0.0, 0.0);
    for i in 0..=samples {
        let x = i as f64 / samples as f64;
        let v = at(x)?;
        if v > best.1 {
            best = (x, v);
        }
    }
    // Golden-section refinement around the best sample.
    let h = 1.0 / samples as f64;
    let (mut lo, mut hi) = ((best.0 - h).max(0.0), (best.0 + h).min(1.0));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if at(a)? >= at(b)? {
            hi = b;
        } else {
            lo = a;
        }
    }
    let peak = at(0.5 * (lo + hi))?.max(best.1);
    if peak == 0.0 {
        return Err(Error::Degenerate("resonant eigenfunction vanishes".into()));
    }
    // Sign: the leftmost non-negligible node value is positive.
    let floor = 1e-8 * phi.sup_norm();
    let lead = phi.values().iter().find(|v| v.abs() > floor).copied().unwrap_or(1.0);
    Ok(phi.scaled(lead.signum() / peak))
}

/// Resonant base mode `base_scale · φ̂` for a homogeneous problem with
/// `ψ₀ = z`, or `None` if `ω` is not a characteristic value.
fn eigen_base(p: &ProblemSpec, disc: &Discretized) -> Result<Option<GridFunction>> {
    let es = eigendecompose(&disc.kernel0)?;
    let best = es
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(j, mu)| (j, (1.0 - p.omega * mu).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    match best {
        Some((j, gap)) if gap <= BASE_RESONANCE_TOL => {
            let unit =
                continuous_sup_normalized(&p.kernel0, es.eigenvalues[j], &es.eigenfunctions[j])?;
            Ok(Some(unit.scaled(p.base_scale)))
        }
        _ => Ok(None),
    }
}

/// Starting iterate for Newton on the base equation when none is supplied.
pub(crate) fn default_start(p: &ProblemSpec, disc: &Discretized) -> GridFunction {
    if !p.is_homogeneous() {
        return disc.forcing.clone();
    }
    match eigen_base(p, disc) {
        Ok(Some(base)) => base,
        _ => GridFunction::zeros(disc.rule.clone()),
    }
}

fn solve_base(
    p: &ProblemSpec,
    disc: &Discretized,
    start: Option<&GridFunction>,
) -> Result<(GridFunction, SolveMethod, Option<f64>)> {
    if p.is_homogeneous() && p.psi0 == Expr::Var(Var::Z) && start.is_none() {
        if let Some(base) = eigen_base(p, disc)? {
            return Ok((base, SolveMethod::EigenBase, None));
        }
    }
    let start = match start {
        Some(s) => s.clone(),
        None => default_start(p, disc),
    };
    let system = HammersteinSystem {
        kernel: &disc.kernel0,
        omega: p.omega,
        forcing: &disc.forcing,
        terms: vec![Term::new(1.0, &p.psi0)?],
    };
    let report = system.solve(start)?;
    Ok((report.solution, SolveMethod::Newton, Some(report.residual)))
}

enum OrderSolver {
    Regular(Resolvent),
    Singular(DiscreteKernel),
}

/// Series of the general perturbed Hammerstein equation.
pub fn hammerstein_series_terms(p: &ProblemSpec, order: usize) -> Result<SeriesSolution> {
    hammerstein_series_from(p, order, None)
}

/// As [`hammerstein_series_terms`], starting Newton for `a_0` at `start`.
///
/// If some order meets a singular Jacobian whose right-hand side has a
/// component in the adjoint null space, the series stops there and the
/// partial result carries a [`ResonantAbort`].
pub fn hammerstein_series_from(
    p: &ProblemSpec,
    order: usize,
    start: Option<&GridFunction>,
) -> Result<SeriesSolution> {
    let disc = p.discretize(false)?;
    let nodes = disc.rule.nodes().to_vec();
    let (a0, base_method, base_residual) = solve_base(p, &disc, start)?;
    let mut reports = vec![OrderReport {
        order: 0,
        method: base_method,
        residual: base_residual,
    }];

    let mut tower0 = DerivativeTower::new(p.psi0.clone(), Var::Z);
    let mut tower1 = DerivativeTower::new(p.psi1.clone(), Var::Z);
    let psi1_zero = p.psi1.is_zero();
    let slope: Vec<f64> = {
        let d1 = tower0.get(1)?.clone();
        nodes
            .iter()
            .zip(a0.values())
            .map(|(&y, &z)| d1.evaluate(&crate::expr::Bindings::new().y(y).z(z)))
            .collect::<Result<_>>()?
    };
    let jacobian = disc.kernel0.scale_columns(&slope)?;
    let solver = match Resolvent::new(&jacobian, p.omega) {
        Ok(r) => OrderSolver::Regular(r),
        Err(Error::CharacteristicValue { .. }) => OrderSolver::Singular(jacobian),
        Err(e) => return Err(e),
    };
    let k0_scale = disc.kernel0.norms().n_2;
    let k1_scale = disc.kernel1.norms().n_2;
    let width = nodes.len();

    let mut coefficients = vec![a0];
    let mut aborted = None;
    for nu in 1..=order {
        let mut delta = CoeffSeries::zeros(width, nu);
        let mut raw = delta.coeffs().to_vec();
        for (k, slot) in raw.iter_mut().enumerate().take(nu).skip(1) {
            slot.copy_from_slice(coefficients[k].values());
        }
        delta = CoeffSeries::new(raw)?;
        let base = coefficients[0].values().to_vec();
        let u = compose_with_tower(&mut tower0, &nodes, &base, &delta, nu)?;
        let v = if psi1_zero {
            None
        } else {
            Some(compose_with_tower(&mut tower1, &nodes, &base, &delta, nu)?)
        };
        let vec_of = |c: &[f64]| GridFunction::new(disc.rule.clone(), c.to_vec());
        // g0 multiplies Γ₀, g1 multiplies Γ₁.
        let mut g0 = vec_of(u.coeff(nu))?;
        let mut g1 = vec_of(u.coeff(nu - 1))?;
        if let Some(v) = &v {
            g0.axpy(1.0, &vec_of(v.coeff(nu - 1))?)?;
            if nu >= 2 {
                g1.axpy(1.0, &vec_of(v.coeff(nu - 2))?)?;
            }
        }
        let mut rhs = disc.kernel0.apply(&g0)?.scaled(p.omega);
        rhs.axpy(p.omega, &disc.kernel1.apply(&g1)?)?;
        // Floor at round-off relative to the base solution, so an order whose
        // inputs are themselves round-off is not read as an obstruction.
        let reference = (p.omega.abs() * (k0_scale * g0.l2_norm() + k1_scale * g1.l2_norm()))
            .max(ROUNDOFF_FLOOR * p.omega.abs() * k0_scale * coefficients[0].l2_norm());

        match &solver {
            OrderSolver::Regular(r) => {
                coefficients.push(r.solve(&rhs)?);
                reports.push(OrderReport {
                    order: nu,
                    method: SolveMethod::Nystrom,
                    residual: None,
                });
            }
            OrderSolver::Singular(j) => {
                let out = singular_solve_scaled(j, p.omega, &rhs, RESONANT_TOL, reference)?;
                reports.push(OrderReport {
                    order: nu,
                    method: SolveMethod::MinimalNorm,
                    residual: Some(out.nullspace_residual),
                });
                if !out.solvable {
                    aborted = Some(ResonantAbort {
                        order: nu,
                        nullspace_residual: out.nullspace_residual,
                    });
                    break;
                }
                coefficients.push(out.solution);
            }
        }
    }

    let rho = if p.is_linear() { rho_for(p, &disc) } else { None };
    let radius = match rho {
        Some(r) if r > 0.0 => Some(1.0 / r),
        _ => ratio_radius(&coefficients, p.norm),
    };
    Ok(build(
        p.base_epsilon,
        coefficients,
        rho,
        radius,
        p.norm,
        reports,
        aborted,
    ))
}

/// Linear path for linear problems, Hammerstein path otherwise.
pub fn series_terms(p: &ProblemSpec, order: usize) -> Result<SeriesSolution> {
    if p.is_linear() {
        linear_series_terms(p, order)
    } else {
        hammerstein_series_terms(p, order)
    }
}

/// [`series_terms`] with an explicit Newton start for nonlinear problems.
pub fn series_terms_from(
    p: &ProblemSpec,
    order: usize,
    start: Option<&GridFunction>,
) -> Result<SeriesSolution> {
    if p.is_linear() {
        linear_series_terms(p, order)
    } else {
        hammerstein_series_from(p, order, start)
    }
}

/// A truncated sum together with the radius warning.
#[derive(Debug, Clone)]
pub struct SeriesValue {
    pub values: GridFunction,
    /// Set when `(ε - ε*)` is at or beyond the estimated radius.
    pub outside_radius: bool,
}

/// `Σ_{j=0}^{M} a_j (ε - ε*)^j`, Horner-evaluated at every node.
pub fn evaluate_series(s: &SeriesSolution, epsilon: f64, m: usize) -> Result<SeriesValue> {
    if m > s.truncation() {
        return Err(Error::IndexOutOfRange(format!(
            "requested order {m} exceeds truncation {}",
            s.truncation()
        )));
    }
    let delta = epsilon - s.base_epsilon;
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::OutOfRange(format!(
            "epsilon {epsilon} lies below the expansion point {}",
            s.base_epsilon
        )));
    }
    let mut acc = s.coefficients[m].clone();
    for j in (0..m).rev() {
        acc = acc.scaled(delta);
        acc.axpy(1.0, &s.coefficients[j])?;
    }
    let outside_radius = match (s.rho, s.radius_estimate) {
        (Some(rho), _) => delta * rho >= 1.0,
        (None, Some(r)) => delta >= r,
        (None, None) => false,
    };
    Ok(SeriesValue {
        values: acc,
        outside_radius,
    })
}

/// x-derivative coefficients of a linear series:
/// `d_j = f'·[j = 0] + ω(Γ₀ₓ a_j + Γ₁ₓ a_{j-1})`.
pub fn derivative_series_terms(p: &ProblemSpec, s: &SeriesSolution) -> Result<SeriesSolution> {
    if !p.is_linear() {
        return Err(Error::Config(
            "derivative series is defined for linear problems".into(),
        ));
    }
    let disc = p.discretize(true)?;
    let fprime = GridFunction::from_expr(disc.rule.clone(), &p.forcing.differentiate(Var::X)?)?;
    let mut out = Vec::with_capacity(s.coefficients.len());
    let mut reports = Vec::with_capacity(s.coefficients.len());
    for (j, a) in s.coefficients.iter().enumerate() {
        let mut d = disc.kernel0.apply_dx(a)?.scaled(p.omega);
        if j == 0 {
            d.axpy(1.0, &fprime)?;
        } else {
            d.axpy(p.omega, &disc.kernel1.apply_dx(&s.coefficients[j - 1])?)?;
        }
        out.push(d);
        reports.push(OrderReport {
            order: j,
            method: SolveMethod::Derivative,
            residual: None,
        });
    }
    Ok(build(
        s.base_epsilon,
        out,
        s.rho,
        s.radius_estimate,
        s.norm,
        reports,
        None,
    ))
}

/// Bound on the truncation error after order `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum TailBound {
    Finite(f64),
    /// `ρΔε >= 1` or `ρ` undefined: no geometric bound.
    Divergent,
}

impl TailBound {
    pub fn value(&self) -> f64 {
        match self {
            TailBound::Finite(v) => *v,
            TailBound::Divergent => f64::INFINITY,
        }
    }
}

/// `||a_0|| (ρΔε)^{M+1} / (1 - ρΔε)`.
pub fn geometric_tail(a0_norm: f64, rho: f64, delta: f64, m: usize) -> TailBound {
    let q = rho * delta;
    if delta == 0.0 || rho == 0.0 {
        return TailBound::Finite(0.0);
    }
    if q.is_nan() || q >= 1.0 {
        return TailBound::Divergent;
    }
    TailBound::Finite(a0_norm * q.powi(m as i32 + 1) / (1.0 - q))
}

/// Geometric tail of `s` truncated at order `m`, evaluated at `ε`, with `ρ`
/// taken from the bounds report.
pub fn tail_bound(s: &SeriesSolution, epsilon: f64, m: usize, b: &BoundsReport) -> TailBound {
    match b.rho {
        Some(rho) => geometric_tail(
            s.coefficients[0].norm(s.norm),
            rho,
            epsilon - s.base_epsilon,
            m,
        ),
        None => TailBound::Divergent,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn t1() -> ProblemSpec {
        ProblemSpec::linear("x*y", "x", "x", 0.5).unwrap()
    }

    #[test]
    fn t1_coefficients_are_geometric() {
        let s = linear_series_terms(&t1(), 10).unwrap();
        let nodes = s.rule().nodes().to_vec();
        for (j, c) in [1.2, 0.36, 0.108].iter().enumerate() {
            for (v, x) in s.coefficients[j].values().iter().zip(&nodes) {
                assert_abs_diff_eq!(*v, c * x, epsilon = 1e-12);
            }
        }
        for j in 3..=10 {
            for (v, x) in s.coefficients[j].values().iter().zip(&nodes) {
                assert_abs_diff_eq!(*v, 1.2 * 0.3f64.powi(j as i32) * x, epsilon = 1e-12);
            }
        }
        let rho = s.rho.unwrap();
        assert_abs_diff_eq!(s.radius_estimate.unwrap(), 1.0 / rho, epsilon = 1e-12);
        assert!(rho > 0.66 && rho < 0.67);
    }

    #[test]
    fn unperturbed_and_homogeneous_cases() {
        let s = linear_series_terms(&ProblemSpec::linear("x*y", "0", "x", 0.5).unwrap(), 5)
            .unwrap();
        assert!(s.coefficients[1..].iter().all(|a| a.sup_norm() == 0.0));
        assert_eq!(s.radius_estimate, None);
        let s = linear_series_terms(&ProblemSpec::linear("x*y", "x", "0", 0.5).unwrap(), 5)
            .unwrap();
        assert!(s.coefficients.iter().all(|a| a.sup_norm() == 0.0));
    }

    #[test]
    fn linear_series_rejects_nonlinear_problem() {
        let p = ProblemSpec::new("x*y", "0", "1", "z^2", "0", 0.25).unwrap();
        assert!(linear_series_terms(&p, 3).is_err());
    }

    #[test]
    fn hammerstein_path_reduces_to_linear_path() {
        for p in [
            t1(),
            ProblemSpec::linear("exp(-x*y)", "sin(x + y)", "1 + x^2", 0.4).unwrap(),
        ] {
            let a = linear_series_terms(&p, 8).unwrap();
            let b = hammerstein_series_terms(&p, 8).unwrap();
            for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
                assert!(x.sub(y).unwrap().sup_norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn resonant_cosine_problem() {
        let p = ProblemSpec::new("cos(pi*x)*cos(pi*y)", "0", "0", "z", "z^2", 2.0).unwrap();
        let s = hammerstein_series_terms(&p, 10).unwrap();
        assert!(s.is_complete());
        assert_eq!(s.diagnostics.reports[0].method, SolveMethod::EigenBase);
        for (v, x) in s.coefficients[0].values().iter().zip(s.rule().nodes()) {
            assert_abs_diff_eq!(*v, (PI * x).cos(), epsilon = 1e-10);
        }
        for a in &s.coefficients[1..] {
            assert!(a.sup_norm() <= 1e-10);
        }
        assert_eq!(s.diagnostics.reports[1].method, SolveMethod::MinimalNorm);
    }

    #[test]
    fn base_scale_scales_the_resonant_base() {
        let p = ProblemSpec::new("cos(pi*x)*cos(pi*y)", "0", "0", "z", "z^2", 2.0)
            .unwrap()
            .with_base_scale(0.5);
        let s = hammerstein_series_terms(&p, 2).unwrap();
        for (v, x) in s.coefficients[0].values().iter().zip(s.rule().nodes()) {
            assert_abs_diff_eq!(*v, 0.5 * (PI * x).cos(), epsilon = 1e-10);
        }
    }

    #[test]
    fn unsolvable_resonant_order_aborts() {
        let p = ProblemSpec::new("cos(pi*x)*cos(pi*y)", "0", "0", "z", "z^3", 2.0).unwrap();
        let s = hammerstein_series_terms(&p, 5).unwrap();
        let abort = s.diagnostics.aborted.unwrap();
        assert_eq!(abort.order, 1);
        assert_eq!(s.truncation(), 0);
    }

    #[test]
    fn quadratic_hammerstein_base() {
        let p = ProblemSpec::new("x*y", "0", "1", "z^2", "0", 0.25).unwrap();
        let s = hammerstein_series_terms(&p, 3).unwrap();
        let (a, b, c): (f64, f64, f64) = (1.0 / 16.0, -5.0 / 6.0, 1.0 / 8.0);
        let root = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        assert!((root - 0.1518).abs() < 1e-4);
        for (v, x) in s.coefficients[0].values().iter().zip(s.rule().nodes()) {
            assert_abs_diff_eq!(*v, 1.0 + root * x, epsilon = 1e-12);
        }
        assert!(s.coefficients[1..].iter().all(|a| a.sup_norm() <= 1e-14));
    }

    #[test]
    fn evaluate_examples() {
        let s = linear_series_terms(&t1(), 30).unwrap();
        let v = evaluate_series(&s, 1.0, 30).unwrap();
        for (v, x) in v.values.values().iter().zip(s.rule().nodes()) {
            assert_abs_diff_eq!(*v, 12.0 / 7.0 * x, epsilon = 1e-10);
        }
        assert!(!v.outside_radius);
        assert!(evaluate_series(&s, 1.6, 30).unwrap().outside_radius);
        assert_eq!(evaluate_series(&s, 0.0, 30).unwrap().values, s.coefficients[0]);
        assert_eq!(evaluate_series(&s, 0.7, 0).unwrap().values, s.coefficients[0]);
        assert!(evaluate_series(&s, -0.1, 30).is_err());
        assert!(evaluate_series(&s, 0.1, 31).is_err());
    }

    #[test]
    fn derivative_series_examples() {
        let p = t1();
        let s = linear_series_terms(&p, 5).unwrap();
        let d = derivative_series_terms(&p, &s).unwrap();
        for v in d.coefficients[0].values() {
            assert_abs_diff_eq!(*v, 1.2, epsilon = 1e-12);
        }
        for v in d.coefficients[1].values() {
            assert_abs_diff_eq!(*v, 0.36, epsilon = 1e-12);
        }
        let p = ProblemSpec::linear("exp(y)", "y^2", "sin(x)", 0.3).unwrap();
        let s = linear_series_terms(&p, 4).unwrap();
        let d = derivative_series_terms(&p, &s).unwrap();
        for (v, x) in d.coefficients[0].values().iter().zip(s.rule().nodes()) {
            assert_abs_diff_eq!(*v, x.cos(), epsilon = 1e-14);
        }
        assert!(d.coefficients[1..].iter().all(|a| a.sup_norm() == 0.0));
    }

    #[test]
    fn tail_examples() {
        match geometric_tail(1.2, 2.0 / 3.0, 0.3, 10) {
            TailBound::Finite(v) => {
                assert_abs_diff_eq!(v, 1.2 * 0.2f64.powi(11) / 0.8, epsilon = 1e-20)
            }
            TailBound::Divergent => panic!(),
        }
        assert_eq!(geometric_tail(1.2, 2.0 / 3.0, 0.0, 10), TailBound::Finite(0.0));
        assert_eq!(geometric_tail(1.2, 0.0, 5.0, 10), TailBound::Finite(0.0));
        assert_eq!(geometric_tail(1.2, 1.0, 1.0, 10), TailBound::Divergent);
    }

    #[test]
    fn ratio_radius_of_geometric_sequence() {
        let s = linear_series_terms(&t1(), 20).unwrap();
        let r = ratio_radius(&s.coefficients, NormKind::Sup).unwrap();
        assert_abs_diff_eq!(r, 10.0 / 3.0, epsilon = 1e-9);
    }
}
