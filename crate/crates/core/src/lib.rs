//! Perturbation series for kernel-perturbed Fredholm integral equations of
//! the second kind and their Hammerstein (nonlinear) counterparts.
//!
//! The unified model solved throughout is
//!
//! ```text
//! φ(ε, x) = f(x) + ω ∫₀¹ (Γ₀(x,y) + ε Γ₁(x,y)) [ψ₀(y, φ(ε,y)) + ε ψ₁(y, φ(ε,y))] dy
//! ```
//!
//! discretized by Nyström collocation on a Gauss-Legendre rule. The solution
//! is expanded as `φ(ε) = Σ a_j (ε - ε*)^j`, each coefficient solving a linear
//! second-kind equation driven by the lower orders.
//!
//! ```
//! use fredholm_perturb::{series_engine, ProblemSpec};
//!
//! let p = ProblemSpec::linear("x*y", "x", "x", 0.5).unwrap();
//! let s = series_engine::series_terms(&p, 30).unwrap();
//! let phi = series_engine::evaluate_series(&s, 1.0, 30).unwrap();
//! let x = phi.values.nodes()[0];
//! assert!((phi.values.values()[0] - 12.0 / 7.0 * x).abs() < 1e-9);
//! ```

pub mod bounds;
pub mod cli;
pub mod continuation;
pub mod error;
pub mod expr;
pub mod faa_di_bruno;
pub mod linear_solver;
mod newton;
pub mod operators;
pub mod oracle;
pub mod quadrature;
pub mod series_engine;

pub use error::{Error, Result};
pub use expr::{parse, Bindings, Expr, Var};
pub use operators::{DiscreteKernel, GridFunction, KernelNorms, NormKind};
pub use quadrature::{QuadratureRule, RuleKind};
pub use series_engine::{ProblemSpec, SeriesSolution};
