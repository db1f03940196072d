//! Empirical convergence radius, continuation along the ε axis by repeated
//! re-expansion, and the variation functional on partitions.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::GridFunction;
use crate::oracle::direct_solve_at;
use crate::series_engine::{evaluate_series, ratio_radius, series_terms_from, ProblemSpec, SeriesSolution};

/// Strictly increasing points `ε₀ < ε₁ < … < ε_m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    points: Vec<f64>,
}

impl Partition {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("a partition needs at least one point".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("partition points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("partition points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `n + 1` equally spaced points on `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Partition::new(vec![a]);
        }
        Self::new((0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn span(&self) -> f64 {
        self.points[self.points.len() - 1] - self.points[0]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn push(&mut self, p: f64) {
        self.points.push(p);
    }
}

/// Outcome of [`empirical_radius`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadiusReport {
    /// `None`: the coefficients vanish, no finite radius.
    pub radius: Option<f64>,
    /// Ratio-test estimate before the cross-check.
    pub ratio_estimate: Option<f64>,
    /// Set when the cross-check replaced the ratio estimate.
    pub bisected: bool,
    /// Set when a direct solve failed during the cross-check, so the radius
    /// is only a lower bound.
    pub lower_bound: bool,
}

const BISECTION_STEPS: usize = 40;

fn agrees(p: &ProblemSpec, s: &SeriesSolution, delta: f64, tol: f64) -> Option<bool> {
    let eps = s.base_epsilon + delta;
    let series = evaluate_series(s, eps, s.truncation()).ok()?.values;
    let direct = direct_solve_at(p, eps, Some(&series)).ok()?;
    let err = series.sub(&direct).ok()?.sup_norm();
    Some(err <= tol * (1.0 + direct.sup_norm()))
}

/// Ratio-test radius (median of the last five `||a_j|| / ||a_{j+1}||`),
/// cross-checked against a direct solve at half that distance. If the check
/// fails, the largest agreeing `Δε` found by bisection is returned instead.
pub fn empirical_radius(p: &ProblemSpec, s: &SeriesSolution, tol: f64) -> Result<RadiusReport> {
    let ratio = ratio_radius(&s.coefficients, s.norm);
    let Some(r) = ratio else {
        return Ok(RadiusReport {
            radius: None,
            ratio_estimate: None,
            bisected: false,
            lower_bound: false,
        });
    };
    if agrees(p, s, 0.5 * r, tol) == Some(true) {
        return Ok(RadiusReport {
            radius: Some(r),
            ratio_estimate: ratio,
            bisected: false,
            lower_bound: false,
        });
    }
    let (mut lo, mut hi) = (0.0, 0.5 * r);
    let mut lower_bound = false;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        match agrees(p, s, mid, tol) {
            Some(true) => lo = mid,
            Some(false) => hi = mid,
            None => {
                lower_bound = true;
                hi = mid;
            }
        }
    }
    Ok(RadiusReport {
        radius: Some(lo),
        ratio_estimate: ratio,
        bisected: true,
        lower_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuationOptions {
    /// Fraction of the empirical radius taken per step.
    pub step_fraction: f64,
    /// Truncation order of every re-expanded series.
    pub order: usize,
    /// Relative tolerance of the radius cross-check.
    pub tol: f64,
    /// Steps shorter than this count as radius collapse.
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self {
            step_fraction: 0.5,
            order: 30,
            tol: 1e-8,
            min_step: 1e-6,
            max_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub base: f64,
    pub radius: Option<f64>,
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContinuationStatus {
    Reached,
    /// The admissible step fell below the minimum; `max_reached` is the last
    /// base point.
    RadiusCollapse { max_reached: f64 },
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub partition: Partition,
    /// Solution at the target, or at the last base point on collapse.
    pub solution: GridFunction,
    pub steps: Vec<StepRecord>,
    pub status: ContinuationStatus,
}

impl ContinuationResult {
    pub fn reached(&self) -> f64 {
        *self.partition.points().last().expect("partition is nonempty")
    }
}

/// Walks from `p.base_epsilon` to `target`, re-expanding at each base point
/// with the kernel and nonlinearity recentered there, stepping by
/// `step_fraction` of the empirical radius. Nonlinear problems start Newton
/// at the continued solution.
pub fn continue_to(
    p: &ProblemSpec,
    target: f64,
    opts: &ContinuationOptions,
) -> Result<ContinuationResult> {
    if target.is_nan() || target < p.base_epsilon {
        return Err(Error::OutOfRange(format!(
            "target {target} lies below the expansion point {}",
            p.base_epsilon
        )));
    }
    if !(opts.step_fraction > 0.0 && opts.step_fraction <= 1.0) {
        return Err(Error::Config("step fraction must lie in (0, 1]".into()));
    }
    let origin = p.base_epsilon;
    let mut current = origin;
    let mut problem = p.clone();
    let mut start: Option<GridFunction> = None;
    let mut partition = Partition::new(vec![origin])?;
    let mut steps = Vec::new();

    for _ in 0..opts.max_steps {
        let s = series_terms_from(&problem, opts.order, start.as_ref())?;
        if let Some(abort) = s.diagnostics.aborted {
            return Err(Error::Degenerate(format!(
                "resonant order {} unsolvable at epsilon {current}",
                abort.order
            )));
        }
        let remaining = target - current;
        if remaining == 0.0 {
            return Ok(ContinuationResult {
                partition,
                solution: s.coefficients[0].clone(),
                steps,
                status: ContinuationStatus::Reached,
            });
        }
        let radius = empirical_radius(&problem, &s, opts.tol)?.radius;
        let step = radius.map_or(remaining, |r| opts.step_fraction * r);
        steps.push(StepRecord {
            base: current,
            radius,
            step: step.min(remaining),
        });
        if step >= remaining {
            partition.push(target);
            let solution = evaluate_series(&s, target, opts.order)?.values;
            return Ok(ContinuationResult {
                partition,
                solution,
                steps,
                status: ContinuationStatus::Reached,
            });
        }
        if step < opts.min_step {
            return Ok(ContinuationResult {
                partition,
                solution: s.coefficients[0].clone(),
                steps,
                status: ContinuationStatus::RadiusCollapse {
                    max_reached: current,
                },
            });
        }
        let next = current + step;
        start = Some(evaluate_series(&s, next, opts.order)?.values);
        problem = p.recentered(next - origin);
        partition.push(next);
        current = next;
    }
    Err(Error::Degenerate(format!(
        "continuation did not finish within {} steps",
        opts.max_steps
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationMode {
    /// `Σ |f(x_{j+1}) - f(x_j)|`.
    #[default]
    TotalVariation,
    /// `Σ |f(x_{j+1}) - f(x_j)| / (x_{j+1} - x_j)`, the literal difference
    /// quotient sum.
    DifferenceQuotient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Convex,
    Concave,
}

/// Segment `[start, end]` of partition indices with its shape flag. The flag
/// is bookkeeping only; it does not change the sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub shape: Shape,
}

fn segment_sum(points: &[f64], values: &[f64], mode: VariationMode) -> f64 {
    points
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, f)| {
            let d = (f[1] - f[0]).abs();
            match mode {
                VariationMode::TotalVariation => d,
                VariationMode::DifferenceQuotient => d / (x[1] - x[0]),
            }
        })
        .sum()
}

/// Variation of `values` (sampled at the partition points), summed segment by
/// segment. Segments must tile the partition; an empty slice means one segment.
pub fn variation(
    partition: &Partition,
    values: &[f64],
    segments: &[Segment],
    mode: VariationMode,
) -> Result<f64> {
    let n = partition.len();
    if values.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("variation of non-finite values".into()));
    }
    let pts = partition.points();
    if segments.is_empty() {
        return Ok(segment_sum(pts, values, mode));
    }
    let mut expected_start = 0;
    let mut total = 0.0;
    for seg in segments {
        if seg.start != expected_start || seg.end < seg.start || seg.end >= n {
            return Err(Error::Config("segments must tile the partition".into()));
        }
        total += segment_sum(&pts[seg.start..=seg.end], &values[seg.start..=seg.end], mode);
        expected_start = seg.end;
    }
    if expected_start != n - 1 {
        return Err(Error::Config("segments must tile the partition".into()));
    }
    Ok(total)
}

/// `P ⪯ Q` when `span(P) < span(Q)`, or spans are equal and
/// `V(f, P) > V(f, Q)`.
pub fn partition_compare<F: Fn(f64) -> f64>(p: &Partition, q: &Partition, f: F) -> Ordering {
    match p.span().total_cmp(&q.span()) {
        Ordering::Equal => {
            let v = |part: &Partition| {
                let vals: Vec<f64> = part.points().iter().map(|&x| f(x)).collect();
                segment_sum(part.points(), &vals, VariationMode::TotalVariation)
            };
            v(q).total_cmp(&v(p))
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series_engine::linear_series_terms;
    use approx::assert_abs_diff_eq;

    fn t1() -> ProblemSpec {
        ProblemSpec::linear("x*y", "x", "x", 0.5).unwrap()
    }

    fn sample(part: &Partition, f: impl Fn(f64) -> f64) -> Vec<f64> {
        part.points().iter().map(|&x| f(x)).collect()
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![]).is_err());
        assert!(Partition::new(vec![0.0, 0.0]).is_err());
        assert!(Partition::new(vec![0.0, f64::NAN]).is_err());
        assert_eq!(Partition::new(vec![0.5]).unwrap().span(), 0.0);
        assert_eq!(Partition::uniform(0.0, 1.0, 4).unwrap().len(), 5);
    }

    #[test]
    fn radius_examples() {
        let p = t1();
        let s = linear_series_terms(&p, 30).unwrap();
        let r = empirical_radius(&p, &s, 1e-8).unwrap();
        assert_abs_diff_eq!(r.radius.unwrap(), 10.0 / 3.0, epsilon = 1e-9);
        assert!(!r.bisected);
        assert!(r.radius.unwrap() >= 1.0 / s.rho.unwrap());

        let flat = ProblemSpec::linear("x*y", "0", "x", 0.5).unwrap();
        let s = linear_series_terms(&flat, 30).unwrap();
        assert_eq!(empirical_radius(&flat, &s, 1e-8).unwrap().radius, None);
    }

    #[test]
    fn continuation_examples() {
        let p = t1();
        let opts = ContinuationOptions::default();
        let out = continue_to(&p, 3.0, &opts).unwrap();
        assert_eq!(out.status, ContinuationStatus::Reached);
        assert!(out.partition.len() >= 2);
        for (v, x) in out.solution.values().iter().zip(out.solution.nodes()) {
            assert!((v - 12.0 * x).abs() <= 1e-6);
        }

        let out = continue_to(&p, 0.0, &opts).unwrap();
        assert_eq!(out.partition.points(), &[0.0]);
        assert_eq!(out.solution, linear_series_terms(&p, 1).unwrap().coefficients[0]);

        let out = continue_to(&p, 4.0, &opts).unwrap();
        match out.status {
            ContinuationStatus::RadiusCollapse { max_reached } => {
                assert!(max_reached > 3.2 && max_reached <= 10.0 / 3.0, "{max_reached}");
            }
            ContinuationStatus::Reached => panic!("walked past the pole"),
        }
        assert!(continue_to(&p, -1.0, &opts).is_err());
    }

    #[test]
    fn variation_examples() {
        let tv = VariationMode::TotalVariation;
        for n in [1, 3, 7, 50] {
            let part = Partition::uniform(0.0, 1.0, n).unwrap();
            let v = variation(&part, &sample(&part, |x| x * x), &[], tv).unwrap();
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        }
        let part = Partition::new(vec![0.0, 0.5, 1.0]).unwrap();
        let vals = sample(&part, |x| (x - 0.5) * (x - 0.5));
        assert_eq!(variation(&part, &vals, &[], tv).unwrap(), 0.5);
        let segs = [
            Segment { start: 0, end: 1, shape: Shape::Convex },
            Segment { start: 1, end: 2, shape: Shape::Convex },
        ];
        assert_eq!(variation(&part, &vals, &segs, tv).unwrap(), 0.5);
        assert!(variation(&part, &vals, &segs[..1], tv).is_err());
        assert_eq!(variation(&part, &[2.0; 3], &[], tv).unwrap(), 0.0);
        assert!(variation(&part, &[1.0; 2], &[], tv).is_err());
    }

    #[test]
    fn difference_quotient_sum_grows_under_refinement() {
        let mode = VariationMode::DifferenceQuotient;
        let v = |n| {
            let part = Partition::uniform(0.0, 1.0, n).unwrap();
            variation(&part, &sample(&part, |x| x * x), &[], mode).unwrap()
        };
        assert!(v(64) > 10.0 * v(4));
    }

    #[test]
    fn variation_approaches_integral_of_derivative() {
        let f = |x: f64| (2.0 * std::f64::consts::PI * x).sin();
        let errs: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&n| {
                let part = Partition::uniform(0.0, 1.0, n).unwrap();
                let v = variation(&part, &sample(&part, f), &[], VariationMode::TotalVariation)
                    .unwrap();
                (4.0 - v).abs()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(errs[3] < 1e-2);
    }

    #[test]
    fn compare_examples() {
        let f = |x: f64| x;
        let a = Partition::new(vec![0.0, 1.0]).unwrap();
        let b = Partition::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(partition_compare(&a, &b, f), Ordering::Less);
        assert_eq!(partition_compare(&b, &a, f), Ordering::Greater);
        let g = |x: f64| if x == 0.5 { 1.0 } else { 0.0 };
        let c = Partition::new(vec![0.0, 0.5, 1.0]).unwrap();
        let d = Partition::new(vec![0.0, 0.25, 1.0]).unwrap();
        // V(g, c) = 2 > V(g, d) = 0, so c precedes d.
        assert_eq!(partition_compare(&c, &d, g), Ordering::Less);
        assert_eq!(partition_compare(&c, &c, g), Ordering::Equal);
    }
}
