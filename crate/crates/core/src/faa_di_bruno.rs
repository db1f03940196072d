//! Truncated power series in `ε` with pointwise (grid-valued) coefficients,
//! composition `ψ(y, base + δ(ε))`, partial Bell polynomials and the
//! tuple-counting functions behind the Hammerstein recursion.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::{Bindings, DerivativeTower, Expr, Var};
use crate::operators::GridFunction;

/// Truncated series `c_0 + c_1 ε + … + c_N ε^N` whose coefficients are
/// vectors of equal width (grid values, or width one for scalars).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSeries {
    width: usize,
    coeffs: Vec<Vec<f64>>,
}

impl CoeffSeries {
    pub fn new(coeffs: Vec<Vec<f64>>) -> Result<Self> {
        let width = coeffs
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::IndexOutOfRange("series needs at least one coefficient".into()))?;
        if let Some(bad) = coeffs.iter().find(|c| c.len() != width) {
            return Err(Error::LengthMismatch {
                expected: width,
                got: bad.len(),
            });
        }
        Ok(Self { width, coeffs })
    }

    pub fn scalar(coeffs: &[f64]) -> Result<Self> {
        Self::new(coeffs.iter().map(|c| vec![*c]).collect())
    }

    pub fn zeros(width: usize, order: usize) -> Self {
        Self {
            width,
            coeffs: vec![vec![0.0; width]; order + 1],
        }
    }

    /// Series whose coefficients are the values of grid functions.
    pub fn from_grid(terms: &[GridFunction]) -> Result<Self> {
        Self::new(terms.iter().map(|g| g.values().to_vec()).collect())
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coeff(&self, k: usize) -> &[f64] {
        &self.coeffs[k]
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    fn check_compatible(&self, other: &CoeffSeries) -> Result<()> {
        if self.width != other.width {
            return Err(Error::LengthMismatch {
                expected: self.width,
                got: other.width,
            });
        }
        if self.order() != other.order() {
            return Err(Error::IndexOutOfRange(format!(
                "truncation orders differ: {} vs {}",
                self.order(),
                other.order()
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &CoeffSeries) -> Result<CoeffSeries> {
        self.check_compatible(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(CoeffSeries {
            width: self.width,
            coeffs,
        })
    }

    /// Cauchy product truncated at the common order.
    pub fn mul(&self, other: &CoeffSeries) -> Result<CoeffSeries> {
        cauchy_product(self, other)
    }
}

/// `c_k = Σ_{i+j=k} a_i b_j`, pointwise, truncated at order N.
pub fn cauchy_product(a: &CoeffSeries, b: &CoeffSeries) -> Result<CoeffSeries> {
    a.check_compatible(b)?;
    let order = a.order();
    let mut out = CoeffSeries::zeros(a.width, order);
    for (i, ai) in a.coeffs.iter().enumerate() {
        if ai.iter().all(|v| *v == 0.0) {
            continue;
        }
        for (j, bj) in b.coeffs.iter().enumerate().take(order + 1 - i) {
            let target = &mut out.coeffs[i + j];
            for ((t, x), y) in target.iter_mut().zip(ai).zip(bj) {
                *t += x * y;
            }
        }
    }
    Ok(out)
}

/// ε-coefficients of `ψ(y, base(y) + δ(ε, y))` for `δ` with zero constant
/// term, truncated at `order`:
///
/// `u_0 = ψ(y, base)`, `u_k = Σ_{m=1}^{k} ∂_z^m ψ(y, base)/m! · [ε^k] δ^m`.
///
/// `nodes` are the `y` values at which the coefficient vectors live.
pub fn compose_with_tower(
    tower: &mut DerivativeTower,
    nodes: &[f64],
    base: &[f64],
    delta: &CoeffSeries,
    order: usize,
) -> Result<CoeffSeries> {
    let width = nodes.len();
    if base.len() != width || delta.width() != width {
        return Err(Error::LengthMismatch {
            expected: width,
            got: if base.len() != width { base.len() } else { delta.width() },
        });
    }
    if delta.coeff(0).iter().any(|v| *v != 0.0) {
        return Err(Error::OutOfRange(
            "composition needs a perturbation with zero constant term".into(),
        ));
    }
    // Bring delta to the requested order.
    let mut padded = CoeffSeries::zeros(width, order);
    for k in 1..=order.min(delta.order()) {
        padded.coeffs[k].copy_from_slice(delta.coeff(k));
    }

    let eval_at = |e: &Expr| -> Result<Vec<f64>> {
        nodes
            .iter()
            .zip(base)
            .map(|(&y, &z)| e.evaluate(&Bindings::new().y(y).z(z)))
            .collect()
    };

    let mut out = CoeffSeries::zeros(width, order);
    out.coeffs[0] = eval_at(tower.get(0)?)?;

    let delta_is_zero = padded.coeffs.iter().all(|c| c.iter().all(|v| *v == 0.0));
    if order == 0 || delta_is_zero {
        return Ok(out);
    }
    let mut power = padded.clone();
    let mut factorial = 1.0;
    for m in 1..=order {
        factorial *= m as f64;
        if tower.vanishes_from(m)? {
            break;
        }
        let deriv = eval_at(tower.get(m)?)?;
        // δ^m starts at ε^m.
        for k in m..=order {
            let pk = &power.coeffs[k];
            for ((o, d), p) in out.coeffs[k].iter_mut().zip(&deriv).zip(pk) {
                *o += d / factorial * p;
            }
        }
        if m < order {
            power = cauchy_product(&power, &padded)?;
        }
    }
    Ok(out)
}

/// [`compose_with_tower`] for a single expression `ψ(y, z)`.
pub fn compose_series(
    psi: &Expr,
    base: &GridFunction,
    delta: &CoeffSeries,
    order: usize,
) -> Result<CoeffSeries> {
    psi.check_variables(&[Var::Y, Var::Z], "a nonlinearity")?;
    let mut tower = DerivativeTower::new(psi.clone(), Var::Z);
    compose_with_tower(&mut tower, base.nodes(), base.values(), delta, order)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Partial exponential Bell polynomial `B_{n,k}(x_1, …, x_{n-k+1})` by the
/// recursion `B_{n,k} = Σ_i C(n-1, i-1) x_i B_{n-i,k-1}`.
pub fn bell_partial(n: usize, k: usize, args: &[f64]) -> Result<f64> {
    if k == 0 || k > n {
        return Err(Error::IndexOutOfRange(format!(
            "B_(n,k) needs 1 <= k <= n, got n={n}, k={k}"
        )));
    }
    if args.len() < n - k + 1 {
        return Err(Error::IndexOutOfRange(format!(
            "B_({n},{k}) needs {} arguments, got {}",
            n - k + 1,
            args.len()
        )));
    }
    // table[m][j] = B_{m,j}
    let mut table = vec![vec![0.0; k + 1]; n + 1];
    table[0][0] = 1.0;
    for j in 1..=k {
        for m in j..=(j + n - k).min(n) {
            let mut acc = 0.0;
            for i in 1..=(m - j + 1) {
                acc += binomial(m - 1, i - 1) * args[i - 1] * table[m - i][j - 1];
            }
            table[m][j] = acc;
        }
    }
    Ok(table[n][k])
}

fn divisor_count(m: usize) -> u128 {
    (1..=m).filter(|d| m.is_multiple_of(*d)).count() as u128
}

/// Number of tuples `(r_1, s_1, …, r_k, s_k)` of positive integers with
/// `Σ r_j s_j = n`.
///
/// Each pair contributes a positive product `m_j = r_j s_j`, realized in
/// `d(m_j)` ways, so the count is a sum over compositions of `n` into `k`
/// parts of `Π d(m_j)`, memoized over `(remaining, parts)`.
pub fn count_e(n: usize, k: usize) -> u128 {
    fn go(n: usize, k: usize, memo: &mut HashMap<(usize, usize), u128>, tau: &[u128]) -> u128 {
        if k == 0 {
            return u128::from(n == 0);
        }
        if n < k {
            return 0;
        }
        if let Some(v) = memo.get(&(n, k)) {
            return *v;
        }
        let total = (1..=n - (k - 1))
            .map(|m| tau[m] * go(n - m, k - 1, memo, tau))
            .sum();
        memo.insert((n, k), total);
        total
    }
    if n == 0 || k == 0 {
        return 0;
    }
    let tau: Vec<u128> = (0..=n).map(|m| if m == 0 { 0 } else { divisor_count(m) }).collect();
    go(n, k, &mut HashMap::new(), &tau)
}

/// All ordered tuples of `k` positive pairs `(r_j, s_j)` with `Σ r_j s_j = n`.
pub fn positive_pair_tuples(n: usize, k: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(
        remaining: usize,
        slots: usize,
        prefix: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if slots == 0 {
            if remaining == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        if remaining < slots {
            return;
        }
        for r in 1..=remaining {
            for s in 1..=remaining / r {
                let used = r * s;
                if remaining - used < slots - 1 {
                    continue;
                }
                prefix.push((r, s));
                go(remaining - used, slots - 1, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        go(n, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// The auxiliary sum
/// `P_ν = Σ (ν-1)!/Π(s_j!)^{r_j} · Π_j φ_{(0,s_j)}^{r_j}` over `ν - 1`
/// positive pairs with `Σ r_j s_j = ν - 1`, taken literally.
///
/// `terms[s]` holds `φ_{(0,s)}` for `s = 0..ν-1`. This is provided for
/// inspection; the series engine composes with [`compose_series`].
pub fn p_nu(terms: &[GridFunction], nu: usize) -> Result<GridFunction> {
    if nu < 2 {
        return Err(Error::IndexOutOfRange(format!("P_nu needs nu >= 2, got {nu}")));
    }
    if terms.len() < nu {
        return Err(Error::IndexOutOfRange(format!(
            "P_{nu} needs terms phi_0..phi_{}, got {}",
            nu - 1,
            terms.len()
        )));
    }
    let m = nu - 1;
    let m_factorial: f64 = (1..=m).map(|i| i as f64).product();
    let factorial = |s: usize| -> f64 { (1..=s).map(|i| i as f64).product() };
    let mut out = GridFunction::zeros(terms[0].rule().clone());
    for tuple in positive_pair_tuples(m, m) {
        let denom: f64 = tuple
            .iter()
            .map(|&(r, s)| factorial(s).powi(r as i32))
            .product();
        let coeff = m_factorial / denom;
        let mut product = vec![coeff; out.len()];
        for &(r, s) in &tuple {
            for (p, v) in product.iter_mut().zip(terms[s].values()) {
                *p *= v.powi(r as i32);
            }
        }
        for (o, p) in out.values_mut().iter_mut().zip(product) {
            *o += p;
        }
    }
    Ok(out)
}
