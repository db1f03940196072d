use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{parse, Expr, Var};
use crate::operators::{DiscreteKernel, GridFunction, NormKind};
use crate::quadrature::{QuadratureRule, RuleKind};

/// The perturbed equation
/// `φ = f + ω (Γ₀ + εΓ₁) [ψ₀(φ) + εψ₁(φ)]`, with `ε` measured from
/// `base_epsilon`.
///
/// Special cases: `ψ₀ = z, ψ₁ = 0` is the linear kernel-perturbed
/// equation; `ψ₁ = 0` a Hammerstein equation with perturbed kernel;
/// `Γ₁ = 0, ψ₀ = z, f = 0` the homogeneous eigenfunction-based problem with a
/// nonlinear perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub kernel0: Expr,
    pub kernel1: Expr,
    pub forcing: Expr,
    pub psi0: Expr,
    pub psi1: Expr,
    pub omega: f64,
    pub norm: NormKind,
    pub rule: RuleKind,
    pub nodes: usize,
    /// Sup-norm amplitude of the eigenfunction base for homogeneous problems.
    pub base_scale: f64,
    /// Declared kernel truncation magnitude, if any.
    pub clamp: Option<f64>,
    /// Offset of the expansion point on the ε axis.
    pub base_epsilon: f64,
}

/// A problem sampled on its quadrature rule.
#[derive(Debug, Clone)]
pub struct Discretized {
    pub rule: Arc<QuadratureRule>,
    pub kernel0: DiscreteKernel,
    pub kernel1: DiscreteKernel,
    pub forcing: GridFunction,
}

pub const DEFAULT_NODES: usize = 32;

impl ProblemSpec {
    /// Builds a problem from expression strings with default numerics
    /// (32-node Gauss-Legendre, sup norm).
    pub fn new(
        kernel0: &str,
        kernel1: &str,
        forcing: &str,
        psi0: &str,
        psi1: &str,
        omega: f64,
    ) -> Result<Self> {
        let p = Self {
            kernel0: parse(kernel0)?,
            kernel1: parse(kernel1)?,
            forcing: parse(forcing)?,
            psi0: parse(psi0)?,
            psi1: parse(psi1)?,
            omega,
            norm: NormKind::Sup,
            rule: RuleKind::GaussLegendre,
            nodes: DEFAULT_NODES,
            base_scale: 1.0,
            clamp: None,
            base_epsilon: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Linear problem `φ = f + ω(Γ₀ + εΓ₁)φ`.
    pub fn linear(kernel0: &str, kernel1: &str, forcing: &str, omega: f64) -> Result<Self> {
        Self::new(kernel0, kernel1, forcing, "z", "0", omega)
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn with_norm(mut self, norm: NormKind) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_base_scale(mut self, scale: f64) -> Self {
        self.base_scale = scale;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel0.check_variables(&[Var::X, Var::Y], "kernel0")?;
        self.kernel1.check_variables(&[Var::X, Var::Y], "kernel1")?;
        self.forcing.check_variables(&[Var::X], "forcing")?;
        self.psi0.check_variables(&[Var::Y, Var::Z], "psi0")?;
        self.psi1.check_variables(&[Var::Y, Var::Z], "psi1")?;
        if !self.omega.is_finite() {
            return Err(Error::Config("omega must be finite".into()));
        }
        if !self.base_scale.is_finite() {
            return Err(Error::Config("base_scale must be finite".into()));
        }
        if let Some(c) = self.clamp {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config("clamp must be a positive finite number".into()));
            }
        }
        if self.nodes < 2 {
            return Err(Error::Config("nodes must be at least 2".into()));
        }
        Ok(())
    }

    /// `ψ₀ = z` and `ψ₁ = 0`.
    pub fn is_linear(&self) -> bool {
        self.psi0 == Expr::Var(Var::Z) && self.psi1.is_zero()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.forcing.is_zero()
    }

    pub fn build_rule(&self) -> Result<Arc<QuadratureRule>> {
        Ok(Arc::new(QuadratureRule::new(self.rule, self.nodes)?))
    }

    pub fn discretize(&self, with_x_derivative: bool) -> Result<Discretized> {
        let rule = self.build_rule()?;
        self.discretize_on(rule, with_x_derivative)
    }

    pub fn discretize_on(
        &self,
        rule: Arc<QuadratureRule>,
        with_x_derivative: bool,
    ) -> Result<Discretized> {
        self.validate()?;
        let kernel0 =
            DiscreteKernel::discretize(&self.kernel0, rule.clone(), with_x_derivative, self.clamp)?;
        let kernel1 =
            DiscreteKernel::discretize(&self.kernel1, rule.clone(), with_x_derivative, self.clamp)?;
        let forcing = GridFunction::from_expr(rule.clone(), &self.forcing)?;
        Ok(Discretized {
            rule,
            kernel0,
            kernel1,
            forcing,
        })
    }

    /// The same equation expanded about `base_epsilon + shift`:
    /// `Γ₀ ← Γ₀ + shift·Γ₁` and `ψ₀ ← ψ₀ + shift·ψ₁`.
    pub fn recentered(&self, shift: f64) -> ProblemSpec {
        let mut p = self.clone();
        if shift != 0.0 {
            if !self.kernel1.is_zero() {
                p.kernel0 = self
                    .kernel0
                    .clone()
                    .plus(Expr::Num(shift).times(self.kernel1.clone()));
            }
            if !self.psi1.is_zero() {
                p.psi0 = self
                    .psi0
                    .clone()
                    .plus(Expr::Num(shift).times(self.psi1.clone()));
            }
        }
        p.base_epsilon = self.base_epsilon + shift;
        p
    }
}
