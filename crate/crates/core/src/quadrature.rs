//! Quadrature rules on the unit interval.
//!
//! Every integral over `[0, 1]` in the crate is discretized with one of these
//! rules. Gauss-Legendre is the default; the trapezoid rule is kept for
//! debugging and cross-checks.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest node count accepted by [`QuadratureRule::new`].
pub const MAX_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    #[default]
    GaussLegendre,
    Trapezoid,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleKind::GaussLegendre => write!(f, "gauss-legendre"),
            RuleKind::Trapezoid => write!(f, "trapezoid"),
        }
    }
}

impl std::str::FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss" | "gauss-legendre" => Ok(RuleKind::GaussLegendre),
            "trapezoid" => Ok(RuleKind::Trapezoid),
            other => Err(Error::Config(format!("unknown quadrature rule `{other}`"))),
        }
    }
}

/// Nodes and positive weights on `[0, 1]`, weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    kind: RuleKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds an `n`-point rule of the given kind.
    ///
    /// Gauss-Legendre accepts `n >= 1`, the trapezoid rule `n >= 2`.
    pub fn new(kind: RuleKind, n: usize) -> Result<Self> {
        let min = match kind {
            RuleKind::GaussLegendre => 1,
            RuleKind::Trapezoid => 2,
        };
        if n < min || n > MAX_NODES {
            return Err(Error::RuleSize(format!(
                "{kind} rule needs {min} <= n <= {MAX_NODES}, got {n}"
            )));
        }
        let (nodes, weights) = match kind {
            RuleKind::GaussLegendre => gauss_legendre_unit(n),
            RuleKind::Trapezoid => trapezoid_unit(n),
        };
        Ok(Self {
            kind,
            nodes,
            weights,
        })
    }

    pub fn gauss(n: usize) -> Result<Self> {
        Self::new(RuleKind::GaussLegendre, n)
    }

    pub fn kind(&self) -> RuleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ w_i s_i`.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        if samples.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: samples.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(samples)
            .map(|(w, s)| w * s)
            .sum())
    }

    /// Integrates a closure sampled at the nodes.
    pub fn integrate_fn<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, w)| w * f(x))
            .sum()
    }
}

/// Legendre polynomial `P_n(t)` and its derivative by the three-term recurrence.
fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi's initial guess for the i-th largest root.
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() <= 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, t);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // Roots come out descending; store mirrored pairs in ascending order.
        nodes[n - 1 - i] = 0.5 * (1.0 + t);
        nodes[i] = 0.5 * (1.0 - t);
        weights[n - 1 - i] = 0.5 * w;
        weights[i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    (nodes, weights)
}

fn trapezoid_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 1.0 / (n - 1) as f64;
    let nodes = (0..n).map(|i| i as f64 * h).collect::<Vec<_>>();
    let mut weights = vec![h; n];
    weights[0] = 0.5 * h;
    weights[n - 1] = 0.5 * h;
    (nodes, weights)
}
