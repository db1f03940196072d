//! Second-kind Fredholm solves: Nyström collocation, eigenfunction
//! expansion for symmetric kernels, and a minimal-norm solve with an
//! explicit solvability check when `I - ωK` is singular.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr};
use crate::operators::{same_rule, DiscreteKernel, GridFunction};
use crate::quadrature::QuadratureRule;

/// Condition estimate above which `I - ωK` is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// Relative singular-value cutoff for the numerical null space.
pub const NULLSPACE_CUTOFF: f64 = 1e-10;

/// Modes with `|1 - ωμ| <= RESONANCE_TOL` are skipped by the spectral solve.
const REFINEMENT_STEPS: usize = 2;

pub const RESONANCE_TOL: f64 = 1e-10;

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// LU factorization of the Nyström matrix `I - ω M W`, reusable across
/// right-hand sides.
#[derive(Debug, Clone)]
pub struct Resolvent {
    rule: Arc<QuadratureRule>,
    system: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

impl Resolvent {
    pub fn new(k: &DiscreteKernel, omega: f64) -> Result<Self> {
        let n = k.size();
        let system = DMatrix::identity(n, n) - k.weighted_matrix() * omega;
        let condition = condition_number(&system);
        if condition.is_nan() || condition > SINGULAR_CONDITION {
            return Err(Error::CharacteristicValue { condition });
        }
        let lu = system.clone().lu();
        Ok(Self {
            rule: k.rule().clone(),
            system,
            lu,
            condition,
        })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// Solves `φ - ωKφ = f` with one step of iterative refinement.
    pub fn solve(&self, f: &GridFunction) -> Result<GridFunction> {
        if !same_rule(&self.rule, f.rule()) {
            return Err(Error::RuleMismatch);
        }
        let b = f.to_dvector();
        let mut x = self
            .lu
            .solve(&b)
            .ok_or(Error::CharacteristicValue {
                condition: f64::INFINITY,
            })?;
        let r = &b - &self.system * &x;
        if let Some(dx) = self.lu.solve(&r) {
            x += dx;
        }
        Ok(GridFunction::from_dvector(self.rule.clone(), &x))
    }
}

/// Solves `(I - ωK)φ = f` by Nyström collocation.
pub fn solve_fredholm2(k: &DiscreteKernel, omega: f64, f: &GridFunction) -> Result<GridFunction> {
    Resolvent::new(k, omega)?.solve(f)
}

/// Evaluates a node solution off the grid by the Nyström formula
/// `φ(x) = f(x) + ω Σ_j w_j Γ(x, y_j) φ_j`.
pub fn nystrom_interpolate(
    kernel: &Expr,
    omega: f64,
    forcing: &Expr,
    phi: &GridFunction,
    x: f64,
) -> Result<f64> {
    let rule = phi.rule();
    let mut acc = 0.0;
    for ((&y, &w), &v) in rule.nodes().iter().zip(rule.weights()).zip(phi.values()) {
        acc += w * kernel.evaluate(&Bindings::new().x(x).y(y))? * v;
    }
    Ok(forcing.evaluate(&Bindings::new().x(x))? + omega * acc)
}

/// Eigenpairs of a symmetric kernel, orthonormal in the weighted inner product.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Sorted by descending magnitude.
    pub eigenvalues: Vec<f64>,
    pub eigenfunctions: Vec<GridFunction>,
}

/// Symmetric eigendecomposition computed on `D^{1/2} M D^{1/2}`.
///
/// Eigenfunctions are mapped back with `D^{-1/2}`; each is signed so that its
/// first significant node value is positive.
pub fn eigendecompose(k: &DiscreteKernel) -> Result<EigenSystem> {
    let asym = k.max_asymmetry();
    if asym > 1e-12 {
        return Err(Error::AsymmetricKernel(asym));
    }
    let rule = k.rule().clone();
    let n = k.size();
    let sqrt_w: Vec<f64> = rule.weights().iter().map(|w| w.sqrt()).collect();
    let m = k.matrix();
    let b = DMatrix::from_fn(n, n, |i, j| {
        0.5 * (m[(i, j)] + m[(j, i)]) * sqrt_w[i] * sqrt_w[j]
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });
    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenfunctions = Vec::with_capacity(n);
    for idx in order {
        eigenvalues.push(eig.eigenvalues[idx]);
        let col = eig.eigenvectors.column(idx);
        let mut values: Vec<f64> = (0..n).map(|i| col[i] / sqrt_w[i]).collect();
        let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if let Some(first) = values.iter().find(|v| v.abs() > 1e-8 * max) {
            if *first < 0.0 {
                values.iter_mut().for_each(|v| *v = -*v);
            }
        }
        eigenfunctions.push(GridFunction::new(rule.clone(), values)?);
    }
    Ok(EigenSystem {
        eigenvalues,
        eigenfunctions,
    })
}

/// Result of [`spectral_resolvent_solve`].
#[derive(Debug, Clone)]
pub struct SpectralSolution {
    pub solution: GridFunction,
    /// Indices of modes left out because `ωμ_j = 1`.
    pub skipped_modes: Vec<usize>,
}

/// `φ = f + ω Σ μ_j/(1 - ωμ_j) (f, φ_j) φ_j` over the non-resonant modes.
pub fn spectral_resolvent_solve(
    es: &EigenSystem,
    omega: f64,
    f: &GridFunction,
) -> Result<SpectralSolution> {
    let mut solution = f.clone();
    let mut skipped_modes = Vec::new();
    for (j, (mu, phi)) in es.eigenvalues.iter().zip(&es.eigenfunctions).enumerate() {
        let denom = 1.0 - omega * mu;
        if denom.abs() <= RESONANCE_TOL {
            skipped_modes.push(j);
            continue;
        }
        let coeff = omega * mu / denom * f.inner(phi)?;
        solution.axpy(coeff, phi)?;
    }
    Ok(SpectralSolution {
        solution,
        skipped_modes,
    })
}

/// Result of [`singular_solve`].
#[derive(Debug, Clone)]
pub struct SingularSolution {
    pub solution: GridFunction,
    pub solvable: bool,
    /// Weighted L² norm of the part of `f` lying in the adjoint null space.
    pub nullspace_residual: f64,
    pub nullity: usize,
}

/// Minimal-norm solve of `(I - ωK)φ = f` in the weighted L² geometry.
///
/// The system is transformed to `(I - ω D^{1/2} M D^{1/2}) g = D^{1/2} f` with
/// `g = D^{1/2} φ`, so Euclidean quantities there are weighted L² quantities
/// of the original problem. Singular values below `1e-10 σ_max` span the null
/// space. The data is accepted when its projection onto the adjoint null
/// space is at most `tol · ||f||`; the returned solution has no null-space
/// component.
pub fn singular_solve(
    k: &DiscreteKernel,
    omega: f64,
    f: &GridFunction,
    tol: f64,
) -> Result<SingularSolution> {
    singular_solve_scaled(k, omega, f, tol, 0.0)
}

/// As [`singular_solve`], accepting the data when the obstruction is at most
/// `tol · max(||f||, reference)`. `reference` is the magnitude of the terms
/// that cancelled to form `f`, so round-off in a vanishing right-hand side is
/// not mistaken for an obstruction.
pub fn singular_solve_scaled(
    k: &DiscreteKernel,
    omega: f64,
    f: &GridFunction,
    tol: f64,
    reference: f64,
) -> Result<SingularSolution> {
    if !same_rule(k.rule(), f.rule()) {
        return Err(Error::RuleMismatch);
    }
    let rule = k.rule().clone();
    let n = k.size();
    let sqrt_w: Vec<f64> = rule.weights().iter().map(|w| w.sqrt()).collect();
    let m = k.matrix();
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - omega * sqrt_w[i] * m[(i, j)] * sqrt_w[j]
    });
    let b = DVector::from_fn(n, |i, _| sqrt_w[i] * f.values()[i]);
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = NULLSPACE_CUTOFF * sigma_max;

    let pinv = |rhs: &DVector<f64>| {
        let mut out = DVector::zeros(n);
        for (idx, &sigma) in svd.singular_values.iter().enumerate() {
            if sigma > cutoff {
                out += v_t.row(idx).transpose() * (u.column(idx).dot(rhs) / sigma);
            }
        }
        out
    };
    let mut obstruction_sq = 0.0;
    let mut nullity = 0;
    for (idx, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma <= cutoff {
            let coeff = u.column(idx).dot(&b);
            obstruction_sq += coeff * coeff;
            nullity += 1;
        }
    }
    // The SVD alone leaves ~1e-10 relative error; refinement on the range
    // brings the solution to LU accuracy.
    let mut g = pinv(&b);
    for _ in 0..REFINEMENT_STEPS {
        let r = &b - &a * &g;
        g += pinv(&r);
    }
    let nullspace_residual = obstruction_sq.sqrt();
    let scale = b.norm().max(reference);
    let solvable = nullspace_residual <= tol * scale;
    let values = (0..n).map(|i| g[i] / sqrt_w[i]).collect();
    Ok(SingularSolution {
        solution: GridFunction::new(rule, values)?,
        solvable,
        nullspace_residual,
        nullity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn gauss(n: usize) -> Arc<QuadratureRule> {
        Arc::new(QuadratureRule::gauss(n).unwrap())
    }

    fn kernel(text: &str, rule: &Arc<QuadratureRule>) -> DiscreteKernel {
        DiscreteKernel::discretize(&parse(text).unwrap(), rule.clone(), false, None).unwrap()
    }

    fn residual(k: &DiscreteKernel, omega: f64, phi: &GridFunction, f: &GridFunction) -> f64 {
        phi.sub(&k.apply(phi).unwrap().scaled(omega))
            .unwrap()
            .sub(f)
            .unwrap()
            .sup_norm()
    }

    #[test]
    fn separable_solve_matches_closed_form() {
        let rule = gauss(16);
        let k = kernel("x*y", &rule);
        let f = GridFunction::from_fn(rule.clone(), |x| x);
        let phi = solve_fredholm2(&k, 0.5, &f).unwrap();
        for (v, x) in phi.values().iter().zip(rule.nodes()) {
            assert_abs_diff_eq!(*v, 1.2 * x, epsilon = 1e-14);
        }
        assert!(residual(&k, 0.5, &phi, &f) <= 1e-10 * (1.0 + f.sup_norm()));
    }

    #[test]
    fn zero_omega_returns_forcing() {
        let rule = gauss(8);
        let k = kernel("exp(x*y)", &rule);
        let f = GridFunction::from_fn(rule, |x| (3.0 * x).sin());
        let phi = solve_fredholm2(&k, 0.0, &f).unwrap();
        assert_eq!(phi, f);
    }

    #[test]
    fn characteristic_value_is_reported() {
        let rule = gauss(32);
        let k = kernel("cos(pi*x)*cos(pi*y)", &rule);
        let f = GridFunction::from_fn(rule, |x| (PI * x).cos());
        assert!(matches!(
            solve_fredholm2(&k, 2.0, &f),
            Err(Error::CharacteristicValue { .. })
        ));
    }

    #[test]
    fn nystrom_interpolation_reproduces_nodes_and_closed_form() {
        let rule = gauss(16);
        let kexpr = parse("x*y").unwrap();
        let fexpr = parse("x").unwrap();
        let k = DiscreteKernel::discretize(&kexpr, rule.clone(), false, None).unwrap();
        let f = GridFunction::from_expr(rule.clone(), &fexpr).unwrap();
        let phi = solve_fredholm2(&k, 0.5, &f).unwrap();
        for x in [0.0, 0.3, 1.0] {
            let v = nystrom_interpolate(&kexpr, 0.5, &fexpr, &phi, x).unwrap();
            assert_abs_diff_eq!(v, 1.2 * x, epsilon = 1e-14);
        }
    }

    #[test]
    fn eigen_examples() {
        let rule = gauss(32);
        let es = eigendecompose(&kernel("cos(pi*x)*cos(pi*y)", &rule)).unwrap();
        assert_abs_diff_eq!(es.eigenvalues[0], 0.5, epsilon = 1e-13);
        for (v, x) in es.eigenfunctions[0].values().iter().zip(rule.nodes()) {
            assert_abs_diff_eq!(*v, 2f64.sqrt() * (PI * x).cos(), epsilon = 1e-10);
        }
        assert!(es.eigenvalues[1..].iter().all(|m| m.abs() < 1e-12));

        let es = eigendecompose(&kernel("x*y", &rule)).unwrap();
        assert_abs_diff_eq!(es.eigenvalues[0], 1.0 / 3.0, epsilon = 1e-14);
        for (v, x) in es.eigenfunctions[0].values().iter().zip(rule.nodes()) {
            assert_abs_diff_eq!(*v, 3f64.sqrt() * x, epsilon = 1e-10);
        }

        let es = eigendecompose(&kernel("0", &rule)).unwrap();
        assert!(es.eigenvalues.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn eigen_invariants() {
        let rule = gauss(24);
        let k = kernel("exp(-(x - y)^2)", &rule);
        let es = eigendecompose(&k).unwrap();
        for i in 0..rule.len() {
            for j in 0..rule.len() {
                let ip = es.eigenfunctions[i].inner(&es.eigenfunctions[j]).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expected).abs() <= 1e-10, "({i},{j}) {ip}");
            }
        }
        for (mu, phi) in es.eigenvalues.iter().zip(&es.eigenfunctions).take(3) {
            let kphi = k.apply(phi).unwrap();
            assert!(kphi.sub(&phi.scaled(*mu)).unwrap().sup_norm() <= 1e-8);
        }
        for pair in es.eigenvalues.windows(2) {
            assert!(pair[0].abs() >= pair[1].abs());
        }
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let rule = gauss(8);
        assert!(matches!(
            eigendecompose(&kernel("x*y^2", &rule)),
            Err(Error::AsymmetricKernel(_))
        ));
    }

    #[test]
    fn spectral_examples() {
        let rule = gauss(32);
        let es = eigendecompose(&kernel("cos(pi*x)*cos(pi*y)", &rule)).unwrap();
        let f = GridFunction::from_fn(rule.clone(), |x| (PI * x).cos());
        let out = spectral_resolvent_solve(&es, 1.0, &f).unwrap();
        for (v, x) in out.solution.values().iter().zip(rule.nodes()) {
            assert_abs_diff_eq!(*v, 2.0 * (PI * x).cos(), epsilon = 1e-10);
        }
        assert!(out.skipped_modes.is_empty());

        let g = GridFunction::from_fn(rule.clone(), |x| (2.0 * PI * x).cos());
        let out = spectral_resolvent_solve(&es, 1.0, &g).unwrap();
        assert!(out.solution.sub(&g).unwrap().sup_norm() <= 1e-12);

        let out = spectral_resolvent_solve(&es, 0.0, &f).unwrap();
        assert_eq!(out.solution, f);

        let out = spectral_resolvent_solve(&es, 2.0, &g).unwrap();
        assert_eq!(out.skipped_modes, vec![0]);
    }

    #[test]
    fn spectral_agrees_with_nystrom() {
        let rule = gauss(24);
        for (text, omega) in [
            ("exp(-(x - y)^2)", 0.7),
            ("x*y + cos(x + y)", -0.4),
            ("1/(1 + x + y)", 1.3),
        ] {
            let k = kernel(text, &rule);
            let f = GridFunction::from_fn(rule.clone(), |x| (2.0 * x).sin() + 0.3);
            let es = eigendecompose(&k).unwrap();
            let a = spectral_resolvent_solve(&es, omega, &f).unwrap().solution;
            let b = solve_fredholm2(&k, omega, &f).unwrap();
            assert!(a.sub(&b).unwrap().sup_norm() <= 1e-8, "{text}");
        }
    }

    #[test]
    fn singular_examples() {
        let rule = gauss(32);
        let k = kernel("cos(pi*x)*cos(pi*y)", &rule);
        let f = GridFunction::from_fn(rule.clone(), |x| (2.0 * PI * x).cos());
        let out = singular_solve(&k, 2.0, &f, 1e-8).unwrap();
        assert!(out.solvable);
        assert_eq!(out.nullity, 1);
        assert!(out.solution.sub(&f).unwrap().sup_norm() <= 1e-10);

        let f = GridFunction::from_fn(rule.clone(), |x| (PI * x).cos());
        let out = singular_solve(&k, 2.0, &f, 1e-8).unwrap();
        assert!(!out.solvable);
        assert_abs_diff_eq!(out.nullspace_residual, 0.5f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn singular_agrees_with_regular_solve_when_nonsingular() {
        let rule = gauss(16);
        let k = kernel("exp(x*y)", &rule);
        let f = GridFunction::from_fn(rule, |x| 1.0 + x * x);
        let a = singular_solve(&k, 0.3, &f, 1e-8).unwrap();
        assert!(a.solvable);
        assert_eq!(a.nullity, 0);
        let b = solve_fredholm2(&k, 0.3, &f).unwrap();
        assert!(a.solution.sub(&b).unwrap().sup_norm() <= 1e-10);
    }

    #[test]
    fn neumann_bound_and_residual_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rule = gauss(20);
        for text in ["x*y", "exp(-x*y)", "sin(x + y)", "cos(3*x*y) - 0.5"] {
            let k = kernel(text, &rule);
            let n_inf = k.norms().n_inf;
            let omega = 0.9 / n_inf;
            let res = Resolvent::new(&k, omega).unwrap();
            for _ in 0..20 {
                let f = GridFunction::new(
                    rule.clone(),
                    (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap();
                let phi = res.solve(&f).unwrap();
                assert!(phi.sup_norm() <= f.sup_norm() / (1.0 - omega * n_inf) + 1e-12);
                assert!(residual(&k, omega, &phi, &f) <= 1e-10 * (1.0 + f.sup_norm()));
            }
        }
    }
}
