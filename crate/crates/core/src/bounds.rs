//! Closed-form convergence bounds and admissibility thresholds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Bindings, DerivativeTower, Var};
use crate::faa_di_bruno::count_e;
use crate::operators::NormKind;
use crate::series_engine::{hammerstein_series_terms, ProblemSpec};

/// `ρ = |ω|N₁ / (1 - |ω|N₀)`, or `None` when `|ω|N₀ >= 1`.
pub fn rho_linear(omega: f64, n0: f64, n1: f64) -> Option<f64> {
    let a = omega.abs();
    let denom = 1.0 - a * n0;
    if denom > 0.0 {
        Some(a * n1 / denom)
    } else {
        None
    }
}

fn quadratic_coefficients(c0: f64, c1: f64, d: f64) -> (f64, f64) {
    (d * c1 + 2.0 * c0 * c0, 2.0 * d * c0 + c0 + c1)
}

/// `Δ = (2DC₀ + C₀ + C₁)² - 4(DC₁ + 2C₀²)`.
pub fn discriminant(c0: f64, c1: f64, d: f64) -> f64 {
    let (a, b) = quadratic_coefficients(c0, c1, d);
    b * b - 4.0 * a
}

/// Roots of `(DC₁ + 2C₀²) g² - (2DC₀ + C₀ + C₁) g + 1 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GRoots {
    Roots { g_minus: f64, g_plus: f64 },
    /// `Δ < 0`: no real threshold, every ω is admissible.
    AllAdmissible,
}

pub fn g_pm(c0: f64, c1: f64, d: f64) -> Result<GRoots> {
    let (a, b) = quadratic_coefficients(c0, c1, d);
    if a.is_nan() || a <= 0.0 || !a.is_finite() {
        return Err(Error::Degenerate(format!(
            "DC1 + 2C0^2 = {a} must be positive"
        )));
    }
    let delta = b * b - 4.0 * a;
    if delta < 0.0 {
        return Ok(GRoots::AllAdmissible);
    }
    let sq = delta.sqrt();
    // Cancellation-free pair: the larger-magnitude root first, Vieta for the other.
    let q = 0.5 * (b + sq);
    let (r1, r2) = (q / a, 1.0 / q);
    Ok(GRoots::Roots {
        g_minus: r1.min(r2),
        g_plus: r1.max(r2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    /// `base · e^{ρε}`.
    Exp,
    /// `base / (1 - ρε)`.
    Geometric,
    /// `1 / (1 - Dε)`.
    Hammerstein,
}

/// Envelope bound on `||φ(ε)||`. `rate` is `ρ` for the first two kinds and
/// `D` for the Hammerstein kind, where `base` is ignored.
pub fn envelope(kind: EnvelopeKind, rate: f64, epsilon: f64, base: f64) -> Result<f64> {
    let q = rate * epsilon;
    match kind {
        EnvelopeKind::Exp => Ok(base * q.exp()),
        EnvelopeKind::Geometric if q < 1.0 => Ok(base / (1.0 - q)),
        EnvelopeKind::Hammerstein if q < 1.0 => Ok(1.0 / (1.0 - q)),
        _ => Err(Error::OutOfRange(format!(
            "{kind:?} envelope needs rate*epsilon < 1, got {q}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibleRegion {
    /// `None` when every ω is admissible.
    pub omega_max: Option<f64>,
    pub epsilon_max: f64,
}

/// `ω < g₋` (the smaller root) and `ε < 1/D`.
pub fn admissible_region(c0: f64, c1: f64, d: f64) -> Result<AdmissibleRegion> {
    let omega_max = match g_pm(c0, c1, d)? {
        GRoots::Roots { g_minus, .. } => Some(g_minus),
        GRoots::AllAdmissible => None,
    };
    Ok(AdmissibleRegion {
        omega_max,
        epsilon_max: 1.0 / d,
    })
}

/// Highest ν sampled when checking `|∂_z^ν Ψ(y, s)| <= b^ν / E(ν, ν)`.
pub const B_CHECK_ORDER: usize = 6;
/// Sample count for the `b` check.
pub const B_CHECK_SAMPLES: usize = 100;
/// Order of the series used to estimate `D` when it is not declared.
pub const D_ESTIMATE_ORDER: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BCheck {
    /// Smallest `b` compatible with the sampled derivatives.
    pub required: f64,
    /// Whether the declared `b` satisfies the sampled inequality.
    pub declared_ok: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelopes {
    pub epsilon: f64,
    pub exp: Option<f64>,
    pub geometric: Option<f64>,
    pub hammerstein: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub norm: NormKind,
    pub omega: f64,
    pub c0: f64,
    pub c1: f64,
    /// Sup bounds of `∂Γ₀/∂x` and `∂Γ₁/∂x`.
    pub c_prime: (f64, f64),
    pub n0: f64,
    pub n1: f64,
    pub rho: Option<f64>,
    /// `ρ` computed from the sup-norm operator bounds.
    pub rho0: Option<f64>,
    pub d: Option<f64>,
    pub d_declared: bool,
    pub b: Option<f64>,
    pub b_check: Option<BCheck>,
    pub discriminant: Option<f64>,
    pub g: Option<GRoots>,
    pub admissible: Option<AdmissibleRegion>,
    pub radius_rho: Option<f64>,
    pub radius_d: Option<f64>,
    pub envelopes: Envelopes,
}

impl BoundsReport {
    /// Evaluates every bound for `p`. An undeclared `D` is estimated from the
    /// series growth constant; if that series fails, `D` stays undefined.
    pub fn from_problem(
        p: &ProblemSpec,
        declared_d: Option<f64>,
        declared_b: Option<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let disc = p.discretize(true)?;
        let k0 = disc.kernel0.norms();
        let k1 = disc.kernel1.norms();
        let c_prime = (disc.kernel0.dx_norms()?.c_sup, disc.kernel1.dx_norms()?.c_sup);
        let (n0, n1) = (k0.get(p.norm), k1.get(p.norm));
        let rho = rho_linear(p.omega, n0, n1);
        let rho0 = rho_linear(p.omega, k0.n_inf, k1.n_inf);

        let d = match declared_d {
            Some(d) => {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::Config("D must be a positive finite number".into()));
                }
                Some(d)
            }
            None => hammerstein_series_terms(p, D_ESTIMATE_ORDER)
                .ok()
                .map(|s| s.diagnostics.growth_constant)
                .filter(|d| *d > 0.0),
        };
        let b_check = b_check(p, declared_b)?;
        let (c0, c1) = (k0.c_sup, k1.c_sup);
        let (discriminant, g, admissible) = match d {
            Some(d) => match g_pm(c0, c1, d) {
                Ok(g) => (
                    Some(self::discriminant(c0, c1, d)),
                    Some(g),
                    admissible_region(c0, c1, d).ok(),
                ),
                Err(_) => (Some(self::discriminant(c0, c1, d)), None, None),
            },
            None => (None, None, None),
        };
        let a0 = disc.forcing.norm(p.norm);
        let envelopes = Envelopes {
            epsilon,
            exp: rho.and_then(|r| envelope(EnvelopeKind::Exp, r, epsilon, a0).ok()),
            geometric: rho.and_then(|r| envelope(EnvelopeKind::Geometric, r, epsilon, a0).ok()),
            hammerstein: d.and_then(|d| envelope(EnvelopeKind::Hammerstein, d, epsilon, 1.0).ok()),
        };
        Ok(Self {
            norm: p.norm,
            omega: p.omega,
            c0,
            c1,
            c_prime,
            n0,
            n1,
            rho,
            rho0,
            d,
            d_declared: declared_d.is_some(),
            b: declared_b,
            b_check,
            discriminant,
            g,
            admissible,
            radius_rho: rho.filter(|r| *r > 0.0).map(|r| 1.0 / r),
            radius_d: d.map(|d| 1.0 / d),
            envelopes,
        })
    }

    /// Flat `(name, value)` rows for CSV output; undefined values are empty.
    pub fn rows(&self) -> Vec<(String, Option<f64>)> {
        let mut rows: Vec<(String, Option<f64>)> = vec![
            ("omega".into(), Some(self.omega)),
            ("c0".into(), Some(self.c0)),
            ("c1".into(), Some(self.c1)),
            ("c0_prime".into(), Some(self.c_prime.0)),
            ("c1_prime".into(), Some(self.c_prime.1)),
            ("n0".into(), Some(self.n0)),
            ("n1".into(), Some(self.n1)),
            ("rho".into(), self.rho),
            ("rho0".into(), self.rho0),
            ("d".into(), self.d),
            ("b".into(), self.b),
            (
                "b_required".into(),
                self.b_check.map(|c| c.required),
            ),
            ("discriminant".into(), self.discriminant),
        ];
        let (gm, gp) = match self.g {
            Some(GRoots::Roots { g_minus, g_plus }) => (Some(g_minus), Some(g_plus)),
            _ => (None, None),
        };
        rows.push(("g_minus".into(), gm));
        rows.push(("g_plus".into(), gp));
        rows.push((
            "omega_max".into(),
            self.admissible.and_then(|a| a.omega_max),
        ));
        rows.push(("epsilon_max".into(), self.admissible.map(|a| a.epsilon_max)));
        rows.push(("radius_rho".into(), self.radius_rho));
        rows.push(("radius_d".into(), self.radius_d));
        rows.push(("envelope_epsilon".into(), Some(self.envelopes.epsilon)));
        rows.push(("envelope_exp".into(), self.envelopes.exp));
        rows.push(("envelope_geometric".into(), self.envelopes.geometric));
        rows.push(("envelope_hammerstein".into(), self.envelopes.hammerstein));
        rows
    }
}

/// Samples `∂_z^ν ψ₁(y, s)` for `ν <= 6` on 100 points of
/// `[0, 1] × [-1, 1]` and compares with `b^ν / E(ν, ν)`.
fn b_check(p: &ProblemSpec, declared: Option<f64>) -> Result<Option<BCheck>> {
    if p.psi1.is_zero() {
        return Ok(None);
    }
    let mut tower = DerivativeTower::new(p.psi1.clone(), Var::Z);
    let side = (B_CHECK_SAMPLES as f64).sqrt() as usize;
    let mut required: f64 = 0.0;
    let mut ok = true;
    for nu in 1..=B_CHECK_ORDER {
        let d = tower.get(nu)?.clone();
        let e = count_e(nu, nu) as f64;
        let mut peak: f64 = 0.0;
        for i in 0..side {
            for j in 0..side {
                let y = i as f64 / (side - 1) as f64;
                let s = -1.0 + 2.0 * j as f64 / (side - 1) as f64;
                peak = peak.max(d.evaluate(&Bindings::new().y(y).z(s))?.abs());
            }
        }
        required = required.max((peak * e).powf(1.0 / nu as f64));
        if let Some(b) = declared {
            ok &= peak <= b.powi(nu as i32) / e + 1e-12;
        }
    }
    Ok(Some(BCheck {
        required,
        declared_ok: declared.map(|_| ok),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rho_examples() {
        assert_eq!(rho_linear(0.0, 0.5, 1.0), Some(0.0));
        assert_abs_diff_eq!(rho_linear(0.5, 0.5, 1.0).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(rho_linear(2.0, 0.5, 1.0), None);
    }

    #[test]
    fn rho_is_monotone() {
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.09).collect();
        for w in grid.windows(2) {
            let (a, b) = (rho_linear(w[0], 0.5, 1.0), rho_linear(w[1], 0.5, 1.0));
            if let (Some(a), Some(b)) = (a, b) {
                assert!(b >= a);
            }
            assert!(rho_linear(0.5, 0.5, w[1]).unwrap() >= rho_linear(0.5, 0.5, w[0]).unwrap());
        }
    }

    #[test]
    fn g_examples() {
        assert_eq!(discriminant(1.0, 1.0, 1.0), 4.0);
        match g_pm(1.0, 1.0, 1.0).unwrap() {
            GRoots::Roots { g_minus, g_plus } => {
                assert_abs_diff_eq!(g_minus, 1.0 / 3.0, epsilon = 1e-15);
                assert_abs_diff_eq!(g_plus, 1.0, epsilon = 1e-15);
            }
            GRoots::AllAdmissible => panic!(),
        }
        assert!(matches!(g_pm(0.0, 0.0, 1.0), Err(Error::Degenerate(_))));
        // 1.3² - 4·1.02 < 0
        assert_eq!(g_pm(0.1, 1.0, 1.0).unwrap(), GRoots::AllAdmissible);
    }

    #[test]
    fn admissible_examples() {
        let r = admissible_region(1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(r.omega_max.unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(r.epsilon_max, 1.0);
        let r = admissible_region(0.01, 1.0, 4.0).unwrap();
        assert_eq!(r.omega_max, None);
        assert_abs_diff_eq!(r.epsilon_max, 0.25);
        assert!(admissible_region(1.0, 1.0, 1e300).unwrap().epsilon_max < 1e-299);
    }

    #[test]
    fn envelope_examples() {
        assert_eq!(envelope(EnvelopeKind::Hammerstein, 0.5, 1.0, 0.0).unwrap(), 2.0);
        assert_eq!(envelope(EnvelopeKind::Exp, 0.0, 3.0, 1.7).unwrap(), 1.7);
        assert_abs_diff_eq!(
            envelope(EnvelopeKind::Geometric, 2.0 / 3.0, 0.3, 1.2).unwrap(),
            1.5,
            epsilon = 1e-15
        );
        assert!(envelope(EnvelopeKind::Hammerstein, 1.0, 1.0, 0.0).is_err());
    }

    /// Bisection on the quadratic itself, independent of the closed form.
    fn bisect_root(a: f64, b: f64, mut lo: f64, mut hi: f64) -> f64 {
        let q = |g: f64| a * g * g - b * g + 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (q(lo) > 0.0) == (q(mid) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    proptest! {
        #[test]
        fn g_roots_match_bisection(c0 in 0.05f64..3.0, c1 in 0.05f64..3.0, d in 0.05f64..5.0) {
            let (a, b) = quadratic_coefficients(c0, c1, d);
            match g_pm(c0, c1, d).unwrap() {
                GRoots::Roots { g_minus, g_plus } => {
                    prop_assert!(g_minus <= g_plus);
                    for g in [g_minus, g_plus] {
                        let res = a * g * g - b * g + 1.0;
                        prop_assert!(res.abs() <= 1e-10 * (1.0 + a * g * g + b * g));
                    }
                    // Vertex separates the roots when Δ > 0.
                    let vertex = b / (2.0 * a);
                    if discriminant(c0, c1, d) > 1e-9 {
                        let lo = bisect_root(a, b, 0.0, vertex);
                        let hi = bisect_root(a, b, vertex, 1e6);
                        prop_assert!((lo - g_minus).abs() <= 1e-9 * (1.0 + lo));
                        prop_assert!((hi - g_plus).abs() <= 1e-9 * (1.0 + hi));
                    }
                }
                GRoots::AllAdmissible => prop_assert!(discriminant(c0, c1, d) < 0.0),
            }
        }
    }

    #[test]
    fn report_for_t1() {
        let p = ProblemSpec::linear("x*y", "x", "x", 0.5).unwrap();
        let r = BoundsReport::from_problem(&p, Some(0.5), None, 0.3).unwrap();
        let rho = r.rho.unwrap();
        assert!((rho - 2.0 / 3.0).abs() < 1e-2);
        assert_eq!(r.rho0, r.rho);
        assert_eq!(r.radius_d, Some(2.0));
        assert!(r.c_prime.0 <= 1.0 && r.c_prime.1 == 1.0);
        assert!(r.b_check.is_none());
        assert_eq!(r.rows().len(), 23);
    }

    #[test]
    fn b_check_for_quadratic_perturbation() {
        let p = ProblemSpec::new("x*y", "0", "0", "z", "z^2", 2.0).unwrap();
        let r = BoundsReport::from_problem(&p, Some(1.0), Some(1.0), 0.1).unwrap();
        let c = r.b_check.unwrap();
        // Only ν = 1, 2 contribute: max(2·E(1,1), (2·E(2,2))^{1/2}).
        let expected = (2.0 * count_e(1, 1) as f64).max((2.0 * count_e(2, 2) as f64).sqrt());
        assert_abs_diff_eq!(c.required, expected, epsilon = 1e-12);
        assert_eq!(c.declared_ok, Some(false));
    }
}
