//! Leading-order entanglement quantities for a product of unit Gaussians:
//! the inner amplitude `I(r)`, the overlap integrals `J(mu1, mu2)` and
//! `L(mu1, mu2)`, the purity terms they feed, and the coefficient `E(mu1)`.
//!
//! All Bessel factors are evaluated as `exp(exponent + z) * i0_scaled(z)` with
//! the exponent combined analytically, so nothing overflows for large
//! arguments.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::quadrature::{
    angle_rule, converge, ordered_dot, radial_rule, Estimate, IntegralResult, NeumaierSum,
    QuadratureError, QuadratureRule,
};
use crate::specfun::{bessel_i0_scaled, SpecfunError};

/// Default relative tolerance for `J` and `L`.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Resolution ceiling for the level-doubling driver.
pub const MAX_LEVEL: u32 = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntangleError {
    #[error("mass fraction {0} outside [0, 1]")]
    InvalidMassFraction(f64),
    #[error("masses must be positive and finite (m1={0}, m2={1})")]
    InvalidMasses(f64, f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("unknown purity term {0}; expected one of 11, 12, 13, 2")]
    UnknownTerm(u32),
    #[error("combined exponent {exponent} is positive at q1=({q1x}, {q1y}), |q2|={r}")]
    ExponentOverflow {
        exponent: f64,
        q1x: f64,
        q1y: f64,
        r: f64,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error("table row mu1={mu1} failed after {} completed rows: {source}", completed.len())]
    Table {
        mu1: f64,
        completed: Vec<EntanglementRow>,
        source: Box<EntangleError>,
    },
}

/// Mass fractions `mu_i = m_i / (m1 + m2)`; `mu2` is always `1 - mu1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassPartition {
    mu1: f64,
    mu2: f64,
}

impl MassPartition {
    pub fn new(mu1: f64) -> Result<Self, EntangleError> {
        if !(0.0..=1.0).contains(&mu1) {
            return Err(EntangleError::InvalidMassFraction(mu1));
        }
        Ok(MassPartition {
            mu1,
            mu2: 1.0 - mu1,
        })
    }

    pub fn from_masses(m1: f64, m2: f64) -> Result<Self, EntangleError> {
        if !(m1.is_finite() && m2.is_finite() && m1 > 0.0 && m2 > 0.0) {
            return Err(EntangleError::InvalidMasses(m1, m2));
        }
        Self::new(m1 / (m1 + m2))
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    /// Partition with the particle labels exchanged.
    pub fn swapped(&self) -> Self {
        MassPartition {
            mu1: self.mu2,
            mu2: 1.0 - self.mu2,
        }
    }

    /// `|mu1 - mu2|`
    pub fn asymmetry(&self) -> f64 {
        (self.mu1 - self.mu2).abs()
    }

    /// `mu1^2 + mu2^2`
    pub fn square_sum(&self) -> f64 {
        self.mu1 * self.mu1 + self.mu2 * self.mu2
    }
}

/// One row of the entanglement table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntanglementRow {
    pub mu1: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub err: f64,
}

/// Node counts of the inner polar rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InnerRule {
    pub nr: usize,
    pub ntheta: usize,
}

impl InnerRule {
    pub const fn new(nr: usize, ntheta: usize) -> Self {
        InnerRule { nr, ntheta }
    }
}

/// Precomputed polar rule for the inner `q1` integral.
struct PolarGrid {
    radial: QuadratureRule,
    cos: Vec<f64>,
    sin: Vec<f64>,
    dtheta: f64,
}

impl PolarGrid {
    fn new(rule: InnerRule, scale: f64) -> Result<Self, QuadratureError> {
        let radial = radial_rule(rule.nr, scale)?;
        let angles = angle_rule(rule.ntheta)?;
        Ok(PolarGrid {
            radial,
            cos: angles.nodes.iter().map(|t| t.cos()).collect(),
            sin: angles.nodes.iter().map(|t| t.sin()).collect(),
            dtheta: angles.weights[0],
        })
    }

    fn evaluations(&self) -> u64 {
        (self.radial.len() * self.cos.len()) as u64
    }

    /// `int d^2 q f(q)` over the plane.
    fn integrate<F>(&self, mut f: F) -> Result<f64, EntangleError>
    where
        F: FnMut(f64, f64) -> Result<f64, EntangleError>,
    {
        let mut rows = Vec::with_capacity(self.radial.len());
        for &s in &self.radial.nodes {
            let mut acc = NeumaierSum::default();
            for (c, sn) in self.cos.iter().zip(&self.sin) {
                acc.add(f(s * c, s * sn)?);
            }
            rows.push(acc.sum() * self.dtheta);
        }
        Ok(ordered_dot(&self.radial.weights, &rows))
    }
}

/// Integrand of the inner amplitude at `q1`, with `q2 = (r, 0)`:
/// `exp[-(mu1^2+mu2^2)(q1+q2)^2/2 - (mu2 q1 - mu1 q2)^2 - q1^2/2]
///  * I0(|mu1-mu2| |q1+q2| |mu2 q1 - mu1 q2|)`.
#[inline]
fn amplitude_integrand(
    q1x: f64,
    q1y: f64,
    r: f64,
    masses: &MassPartition,
) -> Result<f64, EntangleError> {
    let (mu1, mu2) = (masses.mu1, masses.mu2);
    let qx = q1x + r;
    let qy = q1y;
    let bx = mu2 * q1x - mu1 * r;
    let by = mu2 * q1y;
    let q2n = qx * qx + qy * qy;
    let b2n = bx * bx + by * by;
    let z = masses.asymmetry() * (q2n * b2n).sqrt();
    let exponent = -0.5 * masses.square_sum() * q2n - b2n - 0.5 * (q1x * q1x + q1y * q1y) + z;
    if exponent > 1e-12 {
        return Err(EntangleError::ExponentOverflow {
            exponent,
            q1x,
            q1y,
            r,
        });
    }
    Ok(exponent.exp() * bessel_i0_scaled(z)?)
}

/// Inner amplitude `I(r)`: the `q1` integral of the `J` integrand at
/// `|q2| = r`. By rotational invariance `q2` is placed on the x axis.
pub fn inner_amplitude(r: f64, masses: MassPartition, rule: InnerRule) -> Result<f64, EntangleError> {
    let grid = PolarGrid::new(rule, 1.0)?;
    grid.integrate(|x, y| amplitude_integrand(x, y, r, &masses))
}

fn level_nodes(level: u32) -> usize {
    8usize << level
}

fn check_tol(tol: f64) -> Result<(), EntangleError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(EntangleError::InvalidTolerance(tol))
    }
}

/// `J` at a fixed resolution: `2 pi int_0^inf I(r)^2 r dr` with `n` nodes
/// in every direction.
pub fn coeff_j_at(masses: MassPartition, n: usize) -> Result<Estimate, EntangleError> {
    let outer = radial_rule(n, 1.0)?;
    let grid = PolarGrid::new(InnerRule::new(n, n), 1.0)?;
    let amps: Vec<f64> = outer
        .nodes
        .par_iter()
        .map(|&r| grid.integrate(|x, y| amplitude_integrand(x, y, r, &masses)))
        .collect::<Result<_, _>>()?;
    let squares: Vec<f64> = amps.iter().map(|a| a * a).collect();
    Ok(Estimate {
        value: 2.0 * PI * ordered_dot(&outer.weights, &squares),
        evaluations: outer.len() as u64 * grid.evaluations(),
    })
}

/// `J(mu1, mu2)` converged to relative tolerance `tol`.
pub fn coeff_j(masses: MassPartition, tol: f64) -> Result<IntegralResult, EntangleError> {
    check_tol(tol)?;
    converge(|level| coeff_j_at(masses, level_nodes(level)), tol, MAX_LEVEL)
}

/// Closed form `1 / sqrt(1 + (mu1 - mu2)^2)` of `L`.
pub fn coeff_l_closed_form(masses: MassPartition) -> f64 {
    let d = masses.mu1 - masses.mu2;
    1.0 / (1.0 + d * d).sqrt()
}

/// `L` by quadrature alongside its closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LResult {
    pub integral: IntegralResult,
    pub closed_form: f64,
}

/// `L` at a fixed resolution. With `lambda = x^2`, `rho = y^2` the double
/// integral becomes `4 int int x y e^{-2x^2 - (mu1^2+mu2^2) y^2} I0(|mu1-mu2| x y)^2`,
/// which decays like a Gaussian and is handled by two radial rules.
pub fn coeff_l_at(masses: MassPartition, n: usize) -> Result<Estimate, EntangleError> {
    let rule = radial_rule(n, 1.0)?;
    let d = masses.asymmetry();
    let c = masses.square_sum();
    let rows: Vec<f64> = rule
        .nodes
        .par_iter()
        .map(|&x| {
            let mut acc = NeumaierSum::default();
            for (&y, &w) in rule.nodes.iter().zip(&rule.weights) {
                let z = d * x * y;
                let exponent = -2.0 * x * x - c * y * y + 2.0 * z;
                let i0 = bessel_i0_scaled(z)?;
                acc.add(w * exponent.exp() * i0 * i0);
            }
            Ok(acc.sum())
        })
        .collect::<Result<_, EntangleError>>()?;
    Ok(Estimate {
        value: 4.0 * ordered_dot(&rule.weights, &rows),
        evaluations: (n * n) as u64,
    })
}

pub fn coeff_l(masses: MassPartition, tol: f64) -> Result<LResult, EntangleError> {
    check_tol(tol)?;
    let integral = converge(|level| coeff_l_at(masses, level_nodes(level)), tol, MAX_LEVEL)?;
    Ok(LResult {
        integral,
        closed_form: coeff_l_closed_form(masses),
    })
}

/// `2 pi^2 L (1 + L)` written out with the closed form of `L`.
pub fn direct_term(mu1: f64) -> f64 {
    let s = 1.0 + (2.0 * mu1 - 1.0).powi(2);
    2.0 * PI * PI / s * (1.0 + s.sqrt())
}

/// Entanglement coefficient
/// `E(mu1) = 2 pi^2 L (1 + L) - (2/pi) [J(mu1, mu2) + J(mu2, mu1)]`.
/// `err` is `(2/pi)` times the sum of the two `J` error estimates.
pub fn coeff_e(mu1: f64, tol: f64) -> Result<EntanglementRow, EntangleError> {
    let masses = MassPartition::new(mu1)?;
    let j12 = coeff_j(masses, tol)?;
    let j21 = coeff_j(masses.swapped(), tol)?;
    Ok(EntanglementRow {
        mu1,
        e: direct_term(mu1) - 2.0 / PI * (j12.value + j21.value),
        err: 2.0 / PI * (j12.error_estimate + j21.error_estimate),
    })
}

/// Rows of [`coeff_e`] in input order. Rows are computed concurrently; the
/// first failing row aborts with every row before it attached.
pub fn table(mu1_values: &[f64], tol: f64) -> Result<Vec<EntanglementRow>, EntangleError> {
    for &mu1 in mu1_values {
        MassPartition::new(mu1)?;
    }
    check_tol(tol)?;
    let results: Vec<Result<EntanglementRow, EntangleError>> =
        mu1_values.par_iter().map(|&mu1| coeff_e(mu1, tol)).collect();
    let mut rows = Vec::with_capacity(results.len());
    for (res, &mu1) in results.into_iter().zip(mu1_values) {
        match res {
            Ok(row) => rows.push(row),
            Err(e) => {
                return Err(EntangleError::Table {
                    mu1,
                    completed: rows,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(rows)
}

/// `mu1` grid `start, start + step, ..., stop` (inclusive within rounding).
pub fn mu_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| start + k as f64 * step).collect()
}

/// Purity terms of the leading-order expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PurityTerm {
    /// `-2 pi^2 int (S psi)(q1,q2) (S psi)(q3,q2) psi(q1,q3)`
    P11,
    /// `-2 pi^2 int (S psi)(q1,q2) (S psi)(q1,q3) psi(q2,q3)`
    P12,
    /// `2 pi^2 [int (S psi) psi]^2`
    P13,
    /// `2 pi^2 int (S psi) psi`
    P2,
}

impl TryFrom<u32> for PurityTerm {
    type Error = EntangleError;

    fn try_from(id: u32) -> Result<Self, Self::Error> {
        match id {
            11 => Ok(PurityTerm::P11),
            12 => Ok(PurityTerm::P12),
            13 => Ok(PurityTerm::P13),
            2 => Ok(PurityTerm::P2),
            other => Err(EntangleError::UnknownTerm(other)),
        }
    }
}

/// Unit Gaussian `psi(q) = pi^{-1/2} e^{-q^2/2}` in the plane.
#[inline]
fn unit_gaussian(x: f64, y: f64) -> f64 {
    (-0.5 * (x * x + y * y)).exp() / PI.sqrt()
}

/// Isotropic projection of the product Gaussian: the average of
/// `psi(q1') psi(q2')` over the direction of the relative momentum at fixed
/// centre-of-mass momentum and fixed `|q|`, evaluated by brute-force angular
/// quadrature.
fn isotropic_product(
    q1: (f64, f64),
    q2: (f64, f64),
    masses: &MassPartition,
    cos: &[f64],
    sin: &[f64],
) -> f64 {
    let (mu1, mu2) = (masses.mu1, masses.mu2);
    let (qcx, qcy) = (q1.0 + q2.0, q1.1 + q2.1);
    let (rx, ry) = (mu2 * q1.0 - mu1 * q2.0, mu2 * q1.1 - mu1 * q2.1);
    let rho = (rx * rx + ry * ry).sqrt();
    let mut acc = NeumaierSum::default();
    for (c, s) in cos.iter().zip(sin) {
        let (px, py) = (rho * c, rho * s);
        let (ax, ay) = (mu1 * qcx + px, mu1 * qcy + py);
        let (bx, by) = (mu2 * qcx - px, mu2 * qcy - py);
        acc.add((-0.5 * (ax * ax + ay * ay + bx * bx + by * by)).exp());
    }
    acc.sum() / (PI * cos.len() as f64)
}

/// Scale of the radial rules used by the direct purity terms; every
/// integrand decays at least like `exp(-q^2/2)`.
const DIRECT_SCALE: f64 = 0.65;

fn purity_term_at(
    term: PurityTerm,
    masses: MassPartition,
    level: u32,
) -> Result<Estimate, EntangleError> {
    let n = 6usize << level;
    let outer = radial_rule(n, DIRECT_SCALE)?;
    let inner = PolarGrid::new(InnerRule::new(n, n), DIRECT_SCALE)?;
    let sigma = angle_rule(n)?;
    let cos: Vec<f64> = sigma.nodes.iter().map(|t| t.cos()).collect();
    let sin: Vec<f64> = sigma.nodes.iter().map(|t| t.sin()).collect();
    let evaluations = outer.len() as u64 * inner.evaluations() * n as u64;

    // Every integrand is invariant under a joint rotation of its momenta, so
    // the outer momentum is placed on the x axis and its angle integrates to
    // 2 pi.
    let rows: Vec<f64> = outer
        .nodes
        .par_iter()
        .map(|&r| -> Result<f64, EntangleError> {
            let fixed = (r, 0.0);
            match term {
                PurityTerm::P11 => {
                    let f = inner.integrate(|x, y| {
                        Ok(unit_gaussian(x, y) * isotropic_product((x, y), fixed, &masses, &cos, &sin))
                    })?;
                    Ok(f * f)
                }
                PurityTerm::P12 => {
                    let g = inner.integrate(|x, y| {
                        Ok(unit_gaussian(x, y) * isotropic_product(fixed, (x, y), &masses, &cos, &sin))
                    })?;
                    Ok(g * g)
                }
                PurityTerm::P13 | PurityTerm::P2 => inner.integrate(|x, y| {
                    Ok(isotropic_product(fixed, (x, y), &masses, &cos, &sin)
                        * unit_gaussian(r, 0.0)
                        * unit_gaussian(x, y))
                }),
            }
        })
        .collect::<Result<_, _>>()?;
    let integral = 2.0 * PI * ordered_dot(&outer.weights, &rows);
    let value = match term {
        PurityTerm::P11 | PurityTerm::P12 => -2.0 * PI * PI * integral,
        PurityTerm::P13 => 2.0 * PI * PI * integral * integral,
        PurityTerm::P2 => 2.0 * PI * PI * integral,
    };
    Ok(Estimate { value, evaluations })
}

/// Purity term evaluated straight from its defining integral over the unit
/// Gaussian product, with the isotropic projection done by angular
/// quadrature. Independent of the Bessel closed forms used by [`coeff_j`].
pub fn purity_term_direct(
    term: PurityTerm,
    masses: MassPartition,
    tol: f64,
) -> Result<IntegralResult, EntangleError> {
    check_tol(tol)?;
    converge(|level| purity_term_at(term, masses, level), tol, 4)
}
