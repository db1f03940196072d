//! Damped Newton iteration for discretized Hammerstein equations
//! `φ = f + ω K [Σ_t c_t ψ_t(y, φ)]`.

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr, Var};
use crate::linear_solver::Resolvent;
use crate::operators::{DiscreteKernel, GridFunction};

pub(crate) const MAX_ITERATIONS: usize = 100;
pub(crate) const RESIDUAL_TOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;
const POLISH_STEPS: usize = 3;

/// One weighted nonlinearity `c · ψ(y, z)` with its z-derivative.
pub(crate) struct Term {
    pub coeff: f64,
    pub psi: Expr,
    pub dpsi: Expr,
}

impl Term {
    pub fn new(coeff: f64, psi: &Expr) -> Result<Self> {
        Ok(Self {
            coeff,
            psi: psi.clone(),
            dpsi: psi.differentiate(Var::Z)?,
        })
    }
}

pub(crate) struct HammersteinSystem<'a> {
    pub kernel: &'a DiscreteKernel,
    pub omega: f64,
    pub forcing: &'a GridFunction,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonReport {
    pub solution: GridFunction,
    pub residual: f64,
}

impl HammersteinSystem<'_> {
    fn nonlinearity(&self, phi: &GridFunction, derivative: bool) -> Result<GridFunction> {
        let mut out = GridFunction::zeros(phi.rule().clone());
        for term in &self.terms {
            if term.coeff == 0.0 {
                continue;
            }
            let e = if derivative { &term.dpsi } else { &term.psi };
            for ((o, &y), &z) in out
                .values_mut()
                .iter_mut()
                .zip(phi.nodes())
                .zip(phi.values())
            {
                *o += term.coeff * e.evaluate(&Bindings::new().y(y).z(z))?;
            }
        }
        Ok(out)
    }

    /// `F(φ) = φ - f - ωK g(φ)`.
    pub fn residual(&self, phi: &GridFunction) -> Result<GridFunction> {
        let g = self.nonlinearity(phi, false)?;
        let kg = self.kernel.apply(&g)?;
        phi.sub(self.forcing)?.sub(&kg.scaled(self.omega))
    }

    fn tolerance(&self, phi: &GridFunction) -> f64 {
        RESIDUAL_TOL * phi.sup_norm().max(self.forcing.sup_norm()).max(1.0)
    }

    fn newton_step(&self, phi: &GridFunction, r: &GridFunction) -> Result<GridFunction> {
        let slope = self.nonlinearity(phi, true)?;
        let jac = self.kernel.scale_columns(slope.values())?;
        Resolvent::new(&jac, self.omega)
            .map_err(|e| Error::NewtonDivergence(format!("singular Jacobian: {e}")))?
            .solve(r)
    }

    /// A few undamped steps past the tolerance, kept only while they reduce
    /// the residual, so callers differencing nearby solutions see round-off
    /// level noise rather than the stopping tolerance.
    fn polish(
        &self,
        mut phi: GridFunction,
        mut r: GridFunction,
        mut rnorm: f64,
    ) -> Result<NewtonReport> {
        for _ in 0..POLISH_STEPS {
            if rnorm == 0.0 {
                break;
            }
            let Ok(step) = self.newton_step(&phi, &r) else {
                break;
            };
            let mut trial = phi.clone();
            trial.axpy(-1.0, &step)?;
            let Ok(tr) = self.residual(&trial) else {
                break;
            };
            let tn = tr.sup_norm();
            if tn >= rnorm {
                break;
            }
            phi = trial;
            r = tr;
            rnorm = tn;
        }
        Ok(NewtonReport {
            solution: phi,
            residual: rnorm,
        })
    }

    pub fn solve(&self, start: GridFunction) -> Result<NewtonReport> {
        let mut phi = start;
        let mut r = self.residual(&phi)?;
        let mut rnorm = r.sup_norm();
        for _ in 0..MAX_ITERATIONS {
            if rnorm <= self.tolerance(&phi) {
                return self.polish(phi, r, rnorm);
            }
            let step = self.newton_step(&phi, &r)?;
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let mut trial = phi.clone();
                trial.axpy(-lambda, &step)?;
                if let Ok(tr) = self.residual(&trial) {
                    let tn = tr.sup_norm();
                    if tn < rnorm {
                        accepted = Some((trial, tr, tn));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            match accepted {
                Some((trial, tr, tn)) => {
                    phi = trial;
                    r = tr;
                    rnorm = tn;
                }
                // No decrease possible: accept if we are at round-off level.
                None if rnorm <= 1e3 * self.tolerance(&phi) => {
                    return Ok(NewtonReport {
                        solution: phi,
                        residual: rnorm,
                    })
                }
                None => {
                    return Err(Error::NewtonDivergence(format!(
                        "line search stalled at residual {rnorm:e}"
                    )))
                }
            }
        }
        if rnorm <= self.tolerance(&phi) {
            return Ok(NewtonReport {
                solution: phi,
                residual: rnorm,
            });
        }
        Err(Error::NewtonDivergence(format!(
            "no convergence after {MAX_ITERATIONS} iterations (residual {rnorm:e})"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::quadrature::QuadratureRule;
    use std::sync::Arc;

    #[test]
    fn quadratic_separable_problem() {
        // φ = 1 + (1/4) x ∫ y φ(y)² dy has φ = 1 + c x with
        // c²/16 - (5/6)c + 1/8 = 0 (smaller root).
        let rule = Arc::new(QuadratureRule::gauss(16).unwrap());
        let k = DiscreteKernel::discretize(&parse("x*y").unwrap(), rule.clone(), false, None)
            .unwrap();
        let f = GridFunction::from_fn(rule.clone(), |_| 1.0);
        let sys = HammersteinSystem {
            kernel: &k,
            omega: 0.25,
            forcing: &f,
            terms: vec![Term::new(1.0, &parse("z^2").unwrap()).unwrap()],
        };
        let report = sys.solve(f.clone()).unwrap();
        let (a, b, c): (f64, f64, f64) = (1.0 / 16.0, -5.0 / 6.0, 1.0 / 8.0);
        let root = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        for (v, x) in report.solution.values().iter().zip(rule.nodes()) {
            assert!((v - (1.0 + root * x)).abs() < 1e-12);
        }
        assert!(report.residual <= 1e-12);
    }

    #[test]
    fn unsolvable_problem_reports_divergence() {
        // φ = 1 + 10 ∫ φ² has no real solution.
        let rule = Arc::new(QuadratureRule::gauss(4).unwrap());
        let k = DiscreteKernel::discretize(&parse("1").unwrap(), rule.clone(), false, None)
            .unwrap();
        let f = GridFunction::from_fn(rule, |_| 1.0);
        let sys = HammersteinSystem {
            kernel: &k,
            omega: 10.0,
            forcing: &f,
            terms: vec![Term::new(1.0, &parse("z^2").unwrap()).unwrap()],
        };
        assert!(matches!(
            sys.solve(f.clone()),
            Err(Error::NewtonDivergence(_))
        ));
    }
}
