//! Grid functions, discretized kernels and the operator-norm estimates the
//! convergence bounds consume.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr, Var};
use crate::quadrature::QuadratureRule;

/// Which norm feeds the bound `ρ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Sup,
    L2,
    L1,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::Sup, NormKind::L2, NormKind::L1];
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::Sup => "sup",
            NormKind::L2 => "l2",
            NormKind::L1 => "l1",
        })
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" => Ok(NormKind::Sup),
            "l2" => Ok(NormKind::L2),
            "l1" => Ok(NormKind::L1),
            other => Err(Error::Config(format!("unknown norm kind `{other}`"))),
        }
    }
}

pub(crate) fn same_rule(a: &Arc<QuadratureRule>, b: &Arc<QuadratureRule>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// A function on `[0, 1]` represented by its values at the quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    rule: Arc<QuadratureRule>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(rule: Arc<QuadratureRule>, values: Vec<f64>) -> Result<Self> {
        if values.len() != rule.len() {
            return Err(Error::LengthMismatch {
                expected: rule.len(),
                got: values.len(),
            });
        }
        Ok(Self { rule, values })
    }

    pub fn zeros(rule: Arc<QuadratureRule>) -> Self {
        let values = vec![0.0; rule.len()];
        Self { rule, values }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(rule: Arc<QuadratureRule>, f: F) -> Self {
        let values = rule.nodes().iter().map(|&x| f(x)).collect();
        Self { rule, values }
    }

    /// Samples an expression in `x` at the nodes.
    pub fn from_expr(rule: Arc<QuadratureRule>, e: &Expr) -> Result<Self> {
        let values = rule
            .nodes()
            .iter()
            .map(|&x| e.evaluate(&Bindings::new().x(x)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rule, values })
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        &self.rule
    }

    pub fn nodes(&self) -> &[f64] {
        self.rule.nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.rule
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.rule
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v.abs())
            .sum()
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Sup => self.sup_norm(),
            NormKind::L2 => self.l2_norm(),
            NormKind::L1 => self.l1_norm(),
        }
    }

    /// Weighted inner product `Σ w_i f_i g_i`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.check_rule(other)?;
        Ok(self
            .rule
            .weights()
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    pub fn integral(&self) -> f64 {
        self.rule
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    fn check_rule(&self, other: &GridFunction) -> Result<()> {
        if same_rule(&self.rule, &other.rule) {
            Ok(())
        } else {
            Err(Error::RuleMismatch)
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> GridFunction {
        GridFunction {
            rule: self.rule.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &GridFunction, f: F) -> Result<Self> {
        self.check_rule(other)?;
        Ok(GridFunction {
            rule: self.rule.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &GridFunction) -> Result<()> {
        self.check_rule(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub(crate) fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub(crate) fn from_dvector(rule: Arc<QuadratureRule>, v: &DVector<f64>) -> Self {
        GridFunction {
            rule,
            values: v.iter().copied().collect(),
        }
    }
}

/// Operator-norm estimates of a discretized kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelNorms {
    /// `max |Γ(x_i, y_j)|`.
    pub c_sup: f64,
    /// Sup-norm operator bound `max_i Σ_j w_j |Γ_ij|`.
    pub n_inf: f64,
    /// Hilbert-Schmidt norm.
    pub n_2: f64,
    /// L¹ operator bound `max_j Σ_i w_i |Γ_ij|`.
    pub n_1: f64,
}

impl KernelNorms {
    pub fn get(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Sup => self.n_inf,
            NormKind::L2 => self.n_2,
            NormKind::L1 => self.n_1,
        }
    }
}

/// Nyström discretization `M[i][j] = Γ(x_i, y_j)` of a kernel, optionally
/// with the x-derivative matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteKernel {
    rule: Arc<QuadratureRule>,
    matrix: DMatrix<f64>,
    dx: Option<DMatrix<f64>>,
    /// Norms with the sups taken over the continuous variable, when the
    /// kernel expression was available.
    sampled_norms: Option<KernelNorms>,
    sampled_dx_norms: Option<KernelNorms>,
}

fn fill_matrix(e: &Expr, rule: &QuadratureRule, clamp: Option<f64>) -> Result<DMatrix<f64>> {
    let n = rule.len();
    let nodes = rule.nodes();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            nodes
                .iter()
                .map(|&y| {
                    let v = e.evaluate(&Bindings::new().x(nodes[i]).y(y)).map_err(|err| {
                        Error::Domain(format!("kernel `{e}` at (x={}, y={y}): {err}", nodes[i]))
                    })?;
                    Ok(match clamp {
                        Some(c) => v.clamp(-c, c),
                        None => v,
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl DiscreteKernel {
    /// Samples `e(x, y)` on the node grid. With `with_x_derivative` the
    /// symbolic x-derivative is sampled as well. A declared `clamp` bounds
    /// every entry to `[-clamp, clamp]`.
    pub fn discretize(
        e: &Expr,
        rule: Arc<QuadratureRule>,
        with_x_derivative: bool,
        clamp: Option<f64>,
    ) -> Result<Self> {
        e.check_variables(&[Var::X, Var::Y], "a kernel")?;
        let matrix = fill_matrix(e, &rule, clamp)?;
        let sampled_norms = Some(continuous_norms(e, &rule, clamp, &matrix));
        let (dx, sampled_dx_norms) = if with_x_derivative {
            let de = e.differentiate(Var::X)?;
            let m = fill_matrix(&de, &rule, None)?;
            let norms = continuous_norms(&de, &rule, None, &m);
            (Some(m), Some(norms))
        } else {
            (None, None)
        };
        Ok(Self {
            rule,
            matrix,
            dx,
            sampled_norms,
            sampled_dx_norms,
        })
    }

    pub fn from_matrix(rule: Arc<QuadratureRule>, matrix: DMatrix<f64>) -> Result<Self> {
        let n = rule.len();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite kernel entry".into()));
        }
        Ok(Self {
            rule,
            matrix,
            dx: None,
            sampled_norms: None,
            sampled_dx_norms: None,
        })
    }

    pub fn zeros(rule: Arc<QuadratureRule>) -> Self {
        let n = rule.len();
        Self {
            rule,
            matrix: DMatrix::zeros(n, n),
            dx: Some(DMatrix::zeros(n, n)),
            sampled_norms: None,
            sampled_dx_norms: None,
        }
    }

    pub fn rule(&self) -> &Arc<QuadratureRule> {
        &self.rule
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dx_matrix(&self) -> Option<&DMatrix<f64>> {
        self.dx.as_ref()
    }

    pub fn size(&self) -> usize {
        self.rule.len()
    }

    fn weighted_action(&self, m: &DMatrix<f64>, g: &GridFunction) -> Result<GridFunction> {
        if !same_rule(&self.rule, g.rule()) {
            return Err(Error::RuleMismatch);
        }
        let w = self.rule.weights();
        let values = (0..self.size())
            .map(|i| {
                (0..self.size())
                    .map(|j| w[j] * m[(i, j)] * g.values()[j])
                    .sum()
            })
            .collect();
        Ok(GridFunction {
            rule: self.rule.clone(),
            values,
        })
    }

    /// `(Kg)_i = Σ_j w_j M_ij g_j`.
    pub fn apply(&self, g: &GridFunction) -> Result<GridFunction> {
        self.weighted_action(&self.matrix, g)
    }

    /// Same action with the x-derivative matrix.
    pub fn apply_dx(&self, g: &GridFunction) -> Result<GridFunction> {
        let dx = self.dx.as_ref().ok_or(Error::MissingDerivative)?;
        self.weighted_action(dx, g)
    }

    /// `self + eps * other`, derivative matrices combined when both exist.
    pub fn combine(&self, other: &DiscreteKernel, eps: f64) -> Result<DiscreteKernel> {
        if !same_rule(&self.rule, &other.rule) {
            return Err(Error::RuleMismatch);
        }
        let dx = match (&self.dx, &other.dx) {
            (Some(a), Some(b)) => Some(a + b * eps),
            _ => None,
        };
        Ok(DiscreteKernel {
            rule: self.rule.clone(),
            matrix: &self.matrix + &other.matrix * eps,
            dx,
            sampled_norms: None,
            sampled_dx_norms: None,
        })
    }

    /// Kernel `Γ(x_i, y_j) s_j`: composition with a pointwise multiplier.
    pub fn scale_columns(&self, s: &[f64]) -> Result<DiscreteKernel> {
        if s.len() != self.size() {
            return Err(Error::LengthMismatch {
                expected: self.size(),
                got: s.len(),
            });
        }
        let mut matrix = self.matrix.clone();
        for (j, mut col) in matrix.column_iter_mut().enumerate() {
            col *= s[j];
        }
        Ok(DiscreteKernel {
            rule: self.rule.clone(),
            matrix,
            dx: None,
            sampled_norms: None,
            sampled_dx_norms: None,
        })
    }

    /// The Nyström matrix `M W` (columns scaled by the weights).
    pub(crate) fn weighted_matrix(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= self.rule.weights()[j];
        }
        m
    }

    pub fn max_asymmetry(&self) -> f64 {
        let n = self.size();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..i {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|v| *v == 0.0)
    }

    /// Kernels built from an expression take `C_sup`, `N_inf` and `N_1` as
    /// sups over `[0, 1]` in the free variable (at least the node maxima);
    /// matrix-only kernels use the node maxima.
    pub fn norms(&self) -> KernelNorms {
        self.sampled_norms
            .unwrap_or_else(|| norms_of(&self.matrix, self.rule.weights()))
    }

    /// Norms of the x-derivative matrix.
    pub fn dx_norms(&self) -> Result<KernelNorms> {
        let dx = self.dx.as_ref().ok_or(Error::MissingDerivative)?;
        Ok(self
            .sampled_dx_norms
            .unwrap_or_else(|| norms_of(dx, self.rule.weights())))
    }
}

/// Cap on the uniform sample count used for the continuous sups.
const NORM_SAMPLES: usize = 512;
const GOLDEN_STEPS: usize = 60;

/// Maximizes `h` over `[0, 1]`: uniform samples plus endpoints, then a
/// golden-section search in the bracket around the best sample.
fn sup_over_unit<F: Fn(f64) -> f64 + Sync>(h: F, samples: usize) -> f64 {
    let grid: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
    let values: Vec<f64> = grid.par_iter().map(|&x| h(x)).collect();
    let (best_i, best) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let step = 1.0 / samples as f64;
    let (mut lo, mut hi) = (
        (grid[best_i] - step).max(0.0),
        (grid[best_i] + step).min(1.0),
    );
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut peak = best;
    for _ in 0..GOLDEN_STEPS {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        let (ha, hb) = (h(a), h(b));
        peak = peak.max(ha).max(hb);
        if ha >= hb {
            hi = b;
        } else {
            lo = a;
        }
    }
    peak
}

fn continuous_norms(
    e: &Expr,
    rule: &QuadratureRule,
    clamp: Option<f64>,
    m: &DMatrix<f64>,
) -> KernelNorms {
    let discrete = norms_of(m, rule.weights());
    let nodes = rule.nodes();
    let w = rule.weights();
    // Points where the kernel is undefined contribute nothing; the matrix
    // already proved it finite at the nodes.
    let eval = |x: f64, y: f64| -> f64 {
        match e.evaluate(&Bindings::new().x(x).y(y)) {
            Ok(v) if v.is_finite() => match clamp {
                Some(c) => v.clamp(-c, c).abs(),
                None => v.abs(),
            },
            _ => 0.0,
        }
    };
    let samples = (8 * nodes.len()).min(NORM_SAMPLES);
    let row = |x: f64| nodes.iter().zip(w).map(|(&y, &wj)| wj * eval(x, y)).sum::<f64>();
    let col = |y: f64| nodes.iter().zip(w).map(|(&x, &wi)| wi * eval(x, y)).sum::<f64>();
    let n_inf = sup_over_unit(row, samples).max(discrete.n_inf);
    let n_1 = sup_over_unit(col, samples).max(discrete.n_1);
    let pts: Vec<f64> = (0..=samples)
        .map(|i| i as f64 / samples as f64)
        .chain(nodes.iter().copied())
        .collect();
    let c_sup = pts
        .par_iter()
        .map(|&x| pts.iter().map(|&y| eval(x, y)).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
        .max(discrete.c_sup);
    KernelNorms {
        c_sup,
        n_inf,
        n_2: discrete.n_2,
        n_1,
    }
}

fn norms_of(m: &DMatrix<f64>, w: &[f64]) -> KernelNorms {
    let n = w.len();
    let c_sup = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let n_inf = (0..n)
        .map(|i| (0..n).map(|j| w[j] * m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let n_1 = (0..n)
        .map(|j| (0..n).map(|i| w[i] * m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let n_2 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| w[i] * w[j] * m[(i, j)] * m[(i, j)])
        .sum::<f64>()
        .sqrt();
    KernelNorms {
        c_sup,
        n_inf,
        n_2,
        n_1,
    }
}

/// Free-function form of [`DiscreteKernel::discretize`].
pub fn discretize_kernel(
    e: &Expr,
    rule: Arc<QuadratureRule>,
    with_x_derivative: bool,
) -> Result<DiscreteKernel> {
    DiscreteKernel::discretize(e, rule, with_x_derivative, None)
}

/// Free-function form of [`DiscreteKernel::apply`].
pub fn apply_kernel(k: &DiscreteKernel, g: &GridFunction) -> Result<GridFunction> {
    k.apply(g)
}

/// Free-function form of [`DiscreteKernel::norms`].
pub fn kernel_norms(k: &DiscreteKernel) -> KernelNorms {
    k.norms()
}
