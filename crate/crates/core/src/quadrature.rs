//! Deterministic quadrature: Gauss–Legendre rules, mapped rules on the half
//! line, polar integration in the plane and a level-doubling convergence
//! driver.
//!
//! Every reduction goes through [`NeumaierSum`] in node order, so results are
//! bit-reproducible regardless of how node values were produced.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

/// Truncation of half-line rules in units of the caller's decay scale.
/// `exp(-(R0)^2)` is far below `1e-30` at the default.
pub const RADIAL_CUTOFF: f64 = 12.0;

/// Largest supported Gauss–Legendre order.
pub const MAX_GL_ORDER: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integrand is not finite ({value}) at node r={r}, theta={theta}")]
    NonFinite { r: f64, theta: f64, value: f64 },
    #[error("no convergence by level {level}: best value {best}, last difference {delta}")]
    NotConverged { best: f64, delta: f64, level: u32 },
}

/// Where a rule lives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    /// `[0, scale * cutoff]`; weights include the polar Jacobian `r`.
    HalfLineRadial { scale: f64, cutoff: f64 },
    /// `[0, scale * cutoff]` without the Jacobian.
    HalfLine { scale: f64, cutoff: f64 },
    /// Uniform trapezoid over `[0, 2 pi)`.
    Angle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub domain: Domain,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Affine image of a rule on `[-1, 1]` onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> QuadratureRule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        QuadratureRule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| half * w).collect(),
            domain: Domain::Interval { a, b },
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = NeumaierSum::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(*x));
        }
        acc.sum()
    }

    /// Like [`integrate`](Self::integrate) but evaluates nodes in parallel.
    /// The reduction still runs in node order.
    pub fn integrate_par<F>(&self, f: F) -> f64
    where
        F: Fn(f64) -> f64 + Sync,
    {
        let vals: Vec<f64> = self.nodes.par_iter().map(|&x| f(x)).collect();
        ordered_dot(&self.weights, &vals)
    }
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated `sum w_i v_i` in index order.
pub fn ordered_dot(weights: &[f64], values: &[f64]) -> f64 {
    weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .collect::<NeumaierSum>()
        .sum()
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `P_n(x)`, exposed for residual checks on the computed nodes.
pub fn legendre_p(n: usize, x: f64) -> f64 {
    match n {
        0 => 1.0,
        _ => legendre_with_derivative(n, x).0,
    }
}

/// n-point Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
///
/// Nodes are Newton-polished roots of `P_n` starting from Tricomi's
/// asymptotic guess; only the non-negative half is computed and mirrored,
/// so the rule is exactly symmetric.
pub fn gauss_legendre_rule(n: usize) -> Result<QuadratureRule, QuadratureError> {
    if n == 0 || n > MAX_GL_ORDER {
        return Err(QuadratureError::InvalidArgument(format!(
            "Gauss-Legendre order {n} outside 1..={MAX_GL_ORDER}"
        )));
    }
    if n == 1 {
        return Ok(QuadratureRule {
            nodes: vec![0.0],
            weights: vec![2.0],
            domain: Domain::Interval { a: -1.0, b: 1.0 },
        });
    }
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // i-th largest root
        let theta = PI * (i as f64 + 0.75) / (nf + 0.5);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        let mut dp = 0.0;
        for iter in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            dp = d;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) || iter == 99 {
                // one more pass for the derivative at the polished root
                dp = legendre_with_derivative(n, x).1;
                break;
            }
        }
        if n % 2 == 1 && i == half - 1 {
            x = 0.0;
            dp = legendre_with_derivative(n, 0.0).1;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        domain: Domain::Interval { a: -1.0, b: 1.0 },
    })
}

fn check_scale(scale: f64) -> Result<(), QuadratureError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(QuadratureError::InvalidArgument(format!(
            "scale must be positive and finite, got {scale}"
        )));
    }
    Ok(())
}

/// Rule for `int_0^inf g(r) r dr` with Gaussian-type decay on length `scale`:
/// Gauss–Legendre mapped onto `[0, scale * RADIAL_CUTOFF]`, weights
/// premultiplied by `r`.
pub fn radial_rule(n: usize, scale: f64) -> Result<QuadratureRule, QuadratureError> {
    check_scale(scale)?;
    let cutoff = RADIAL_CUTOFF;
    let mut rule = gauss_legendre_rule(n)?.mapped(0.0, scale * cutoff);
    for (w, r) in rule.weights.iter_mut().zip(&rule.nodes) {
        *w *= r;
    }
    rule.domain = Domain::HalfLineRadial { scale, cutoff };
    Ok(rule)
}

/// Rule for `int_0^inf g(x) dx` on `[0, scale * RADIAL_CUTOFF]`.
pub fn half_line_rule(n: usize, scale: f64) -> Result<QuadratureRule, QuadratureError> {
    check_scale(scale)?;
    let cutoff = RADIAL_CUTOFF;
    let mut rule = gauss_legendre_rule(n)?.mapped(0.0, scale * cutoff);
    rule.domain = Domain::HalfLine { scale, cutoff };
    Ok(rule)
}

/// Uniform trapezoid rule on `[0, 2 pi)`; spectrally accurate for smooth
/// periodic integrands.
pub fn angle_rule(n: usize) -> Result<QuadratureRule, QuadratureError> {
    if n == 0 {
        return Err(QuadratureError::InvalidArgument(
            "angular rule needs at least one node".into(),
        ));
    }
    let h = 2.0 * PI / n as f64;
    Ok(QuadratureRule {
        nodes: (0..n).map(|k| k as f64 * h).collect(),
        weights: vec![h; n],
        domain: Domain::Angle,
    })
}

/// Value with a heuristic error estimate and the number of integrand calls.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IntegralResult {
    pub value: f64,
    /// Absolute difference between the two finest resolutions. Heuristic,
    /// not a bound.
    pub error_estimate: f64,
    pub evaluations: u64,
    /// Finest level used (1 for single-shot evaluations).
    pub level: u32,
}

/// One resolution level of a computation handed to [`converge`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub evaluations: u64,
}

impl From<f64> for Estimate {
    fn from(value: f64) -> Self {
        Estimate {
            value,
            evaluations: 1,
        }
    }
}

/// Polar sum at fixed resolution.
fn polar_sum<F>(f: &F, nr: usize, ntheta: usize, scale: f64) -> Result<f64, QuadratureError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let radial = radial_rule(nr, scale)?;
    let angular = angle_rule(ntheta)?;
    let rows: Vec<Result<f64, QuadratureError>> = radial
        .nodes
        .par_iter()
        .map(|&r| {
            let mut acc = NeumaierSum::default();
            for &t in &angular.nodes {
                let v = f(r, t);
                if !v.is_finite() {
                    return Err(QuadratureError::NonFinite {
                        r,
                        theta: t,
                        value: v,
                    });
                }
                acc.add(v);
            }
            Ok(acc.sum() * angular.weights[0])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(ordered_dot(&radial.weights, &rows))
}

/// `int_0^inf int_0^{2 pi} f(r, theta) r dtheta dr` on a radial rule times a
/// uniform angular trapezoid. The error estimate compares against the same
/// rule at half resolution in both directions.
pub fn integrate_polar_2d<F>(
    f: F,
    nr: usize,
    ntheta: usize,
    scale: f64,
) -> Result<IntegralResult, QuadratureError>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let value = polar_sum(&f, nr, ntheta, scale)?;
    let (coarse, coarse_evals) = if nr >= 2 && ntheta >= 2 {
        (
            Some(polar_sum(&f, nr / 2, ntheta / 2, scale)?),
            (nr / 2 * (ntheta / 2)) as u64,
        )
    } else {
        (None, 0)
    };
    Ok(IntegralResult {
        value,
        error_estimate: coarse.map_or(0.0, |c| (value - c).abs()),
        evaluations: (nr * ntheta) as u64 + coarse_evals,
        level: 1,
    })
}

/// Evaluate `eval` at levels `1, 2, ...` (each level doubling resolution) and
/// stop at the first level whose change from the previous one is at most
/// `tol * max(1, |value|)`.
pub fn converge<F, E>(mut eval: F, tol: f64, max_level: u32) -> Result<IntegralResult, E>
where
    F: FnMut(u32) -> Result<Estimate, E>,
    E: From<QuadratureError>,
{
    if !(tol > 0.0) || max_level < 2 {
        return Err(QuadratureError::InvalidArgument(format!(
            "converge needs tol > 0 and max_level >= 2 (tol={tol}, max_level={max_level})"
        ))
        .into());
    }
    let first = eval(1)?;
    let mut prev = first.value;
    let mut evaluations = first.evaluations;
    let mut delta = f64::INFINITY;
    for level in 2..=max_level {
        let est = eval(level)?;
        evaluations += est.evaluations;
        delta = (est.value - prev).abs();
        prev = est.value;
        if delta <= tol * est.value.abs().max(1.0) {
            return Ok(IntegralResult {
                value: est.value,
                error_estimate: delta,
                evaluations,
                level,
            });
        }
    }
    Err(QuadratureError::NotConverged {
        best: prev,
        delta,
        level: max_level,
    }
    .into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{bessel_i0_scaled, elliptic_k};

    #[test]
    fn low_order_closed_forms() {
        let r1 = gauss_legendre_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert_eq!(r1.weights, vec![2.0]);

        let r2 = gauss_legendre_rule(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((r2.nodes[0] + x).abs() < 1e-15);
        assert!((r2.nodes[1] - x).abs() < 1e-15);
        assert!((r2.weights[0] - 1.0).abs() < 1e-15);
        assert!((r2.weights[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn five_points_integrate_x8() {
        let r = gauss_legendre_rule(5).unwrap();
        let v = r.integrate(|x| x.powi(8));
        assert!((v - 2.0 / 9.0).abs() <= 1e-14);
    }

    #[test]
    fn monomial_exactness_and_weight_sum() {
        for n in [1usize, 2, 3, 7, 16, 33, 64, 100] {
            let r = gauss_legendre_rule(n).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let total: f64 = r.weights.iter().copied().collect::<NeumaierSum>().sum();
            assert!((total - 2.0).abs() <= 2e-14, "n={n}: {total}");
            for k in 0..(2 * n) {
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                let got = r.integrate(|x| x.powi(k as i32));
                assert!((got - exact).abs() <= 1e-13 * exact.max(1.0), "n={n} k={k}");
            }
        }
    }

    #[test]
    fn nodes_are_roots() {
        for n in 1..=64 {
            let r = gauss_legendre_rule(n).unwrap();
            for &x in &r.nodes {
                // The nearest double to a root leaves a residual of about
                // ulp(x) * |P_n'(x)|, so the bound scales with the slope.
                let slope = if n == 1 { 1.0 } else { legendre_with_derivative(n, x).1.abs() };
                assert!(legendre_p(n, x).abs() <= 1e-14 * slope.max(1.0), "n={n} x={x}");
            }
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn large_order_weight_sum() {
        let r = gauss_legendre_rule(4096).unwrap();
        let total: f64 = r.weights.iter().copied().collect::<NeumaierSum>().sum();
        assert!((total - 2.0).abs() < 1e-13);
        let mapped = r.mapped(-3.0, 5.0);
        let total: f64 = mapped.weights.iter().copied().collect::<NeumaierSum>().sum();
        assert!((total - 8.0).abs() < 8e-13);
    }

    #[test]
    fn order_out_of_range() {
        assert!(gauss_legendre_rule(0).is_err());
        assert!(gauss_legendre_rule(4097).is_err());
        assert!(radial_rule(8, 0.0).is_err());
        assert!(radial_rule(8, -1.0).is_err());
        assert!(half_line_rule(8, f64::NAN).is_err());
    }

    #[test]
    fn half_line_examples() {
        let rad = radial_rule(64, 1.0).unwrap();
        assert!((rad.integrate(|r| (-r * r).exp()) - 0.5).abs() < 1e-12);

        let lin = half_line_rule(64, 2.0).unwrap();
        assert!((lin.integrate(|l| (-2.0 * l).exp()) - 0.5).abs() < 1e-12);

        // e^{-2l} I0(l/2)^2 = e^{-l} (e^{-l/2} I0(l/2))^2
        let lin = half_line_rule(256, 3.0).unwrap();
        let v = lin.integrate(|l| (-l).exp() * bessel_i0_scaled(0.5 * l).unwrap().powi(2));
        let want = elliptic_k(0.25).unwrap() / PI;
        assert!((v - want).abs() < 1e-8, "{v} vs {want}");
    }

    #[test]
    fn polar_examples() {
        let v = integrate_polar_2d(|r, _| (-r * r).exp(), 64, 16, 1.0).unwrap();
        assert!((v.value - PI).abs() < 1e-12);
        let v = integrate_polar_2d(|r, t| (-r * r).exp() * t.cos().powi(2), 64, 16, 1.0).unwrap();
        assert!((v.value - PI / 2.0).abs() < 1e-12);
        assert!(v.evaluations > 64 * 16);
    }

    #[test]
    fn polar_reports_non_finite_node() {
        let err = integrate_polar_2d(|r, _| if r > 5.0 { f64::NAN } else { 1.0 }, 16, 4, 1.0)
            .unwrap_err();
        match err {
            QuadratureError::NonFinite { r, .. } => assert!(r > 5.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn polar_rotation_invariance() {
        let f = |phi: f64| {
            move |r: f64, t: f64| (-r * r).exp() * (1.0 + 0.3 * r * (t + phi).cos()).powi(4)
        };
        let a = integrate_polar_2d(f(0.0), 48, 32, 1.0).unwrap().value;
        let b = integrate_polar_2d(f(0.731), 48, 32, 1.0).unwrap().value;
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn converge_constant_and_geometric() {
        let c = converge(|_| Ok::<_, QuadratureError>(Estimate::from(3.5)), 1e-12, 10).unwrap();
        assert_eq!(c.value, 3.5);
        assert_eq!(c.error_estimate, 0.0);
        assert_eq!(c.level, 2);

        let tol = 1e-9;
        let g = converge(
            |l| Ok::<_, QuadratureError>(Estimate::from(1.0 - 0.5f64.powi(l as i32))),
            tol,
            64,
        )
        .unwrap();
        assert!((g.value - 1.0).abs() <= tol);
    }

    #[test]
    fn converge_failure_carries_best() {
        let err = converge(|l| Ok::<_, QuadratureError>(Estimate::from(l as f64)), 1e-6, 4)
            .unwrap_err();
        assert_eq!(
            err,
            QuadratureError::NotConverged {
                best: 4.0,
                delta: 1.0,
                level: 4
            }
        );
    }

    #[test]
    fn parallel_integration_is_bitwise_sequential() {
        let r = radial_rule(200, 1.3).unwrap();
        let f = |x: f64| (x * 0.7).sin() * (-x * x / 3.0).exp();
        assert_eq!(r.integrate(f).to_bits(), r.integrate_par(f).to_bits());
    }
}
