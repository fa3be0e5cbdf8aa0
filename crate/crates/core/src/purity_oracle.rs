//! Brute-force purity of the scattered two-particle state on a momentum
//! grid, used to check the leading-order law `P = 1 - E / (ln sigma)^2`.
//!
//! Everything is expressed in scaled momenta `q = p / sigma`, so the grid is
//! independent of `sigma`; `sigma` only enters through the multiplier
//! argument `ln sigma + ln |q_rel|`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::entangle::{coeff_e, EntangleError, MassPartition, DEFAULT_TOL};
use crate::quadrature::{gauss_legendre_rule, NeumaierSum, QuadratureError};
use crate::smatrix::{expansion_multipliers, ExpansionParams, SMatrixError, SectorMultiplier};
use crate::specfun::{bessel_i0_scaled, SpecfunError};

/// Default half-width of the per-axis momentum box (scaled units).
pub const DEFAULT_Q_MAX: f64 = 6.0;

/// Extra Gauss-Legendre nodes per axis on particle two's grid, so that no
/// pair of nodes has `q1 = q2` and `|q_rel|` stays away from zero for every
/// mass ratio.
pub const DEFAULT_STAGGER: usize = 2;

/// Smallest admissible grid for sweeps.
pub const MIN_SWEEP_GRID: usize = 16;

/// Purity above `1 + PURITY_SLACK` signals an under-resolved grid.
pub const PURITY_SLACK: f64 = 1e-6;

/// Normalization tolerance accepted by [`purity_of_grid`].
pub const NORM_TOLERANCE: f64 = 1e-8;

/// The multipliers do not depend on the reduced mass; this value only
/// satisfies the parameter invariant.
const MULTIPLIER_MASS: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PurityError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid node with q_rel = 0 at q1={q1:?}, q2={q2:?}")]
    SingularNode { q1: [f64; 2], q2: [f64; 2] },
    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("non-finite amplitude at q1={q1:?}, q2={q2:?}")]
    NonFinite { q1: [f64; 2], q2: [f64; 2] },
    #[error("grid under-resolved: purity {purity} exceeds 1 + {PURITY_SLACK:e} at grid {grid_n}; increase the grid size")]
    Resolution { purity: f64, grid_n: usize },
    #[error(transparent)]
    Entangle(#[from] EntangleError),
    #[error(transparent)]
    SMatrix(#[from] SMatrixError),
    #[error(transparent)]
    Specfun(#[from] SpecfunError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

fn invalid<T>(msg: String) -> Result<T, PurityError> {
    Err(PurityError::InvalidParameter(msg))
}

/// Momentum width and mean relative momentum of the incoming Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianParams {
    pub sigma: f64,
    pub p0: [f64; 2],
}

impl GaussianParams {
    pub fn new(sigma: f64, p0: [f64; 2]) -> Result<Self, PurityError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {sigma}"));
        }
        if !(p0[0] / sigma).is_finite() || !(p0[1] / sigma).is_finite() {
            return invalid(format!("|p0| / sigma must be finite, got p0={p0:?}"));
        }
        Ok(GaussianParams { sigma, p0 })
    }

    /// Mean relative momentum in scaled units.
    pub fn q0(&self) -> [f64; 2] {
        [self.p0[0] / self.sigma, self.p0[1] / self.sigma]
    }
}

/// Per-particle tensor Gauss-Legendre grids on `[-q_max, q_max]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridSpec {
    /// Nodes per axis for particle one.
    pub n1: usize,
    /// Nodes per axis for particle two.
    pub n2: usize,
    #[serde(skip)]
    q_max_bits: u64,
}

impl GridSpec {
    /// `n` nodes per axis for particle one and `n + DEFAULT_STAGGER` for
    /// particle two, on the default box.
    pub fn staggered(n: usize) -> Self {
        Self::new(n, n + DEFAULT_STAGGER, DEFAULT_Q_MAX)
    }

    pub fn new(n1: usize, n2: usize, q_max: f64) -> Self {
        GridSpec {
            n1,
            n2,
            q_max_bits: q_max.to_bits(),
        }
    }

    pub fn q_max(&self) -> f64 {
        f64::from_bits(self.q_max_bits)
    }

    /// The same grid with the particle labels exchanged.
    pub fn swapped(&self) -> Self {
        Self::new(self.n2, self.n1, self.q_max())
    }

    fn validate(&self) -> Result<(), PurityError> {
        if self.n1 < 2 || self.n2 < 2 {
            return invalid(format!("grid needs at least 2 nodes per axis, got {}/{}", self.n1, self.n2));
        }
        let q = self.q_max();
        if !(q > 0.0 && q.is_finite()) {
            return invalid(format!("q_max must be positive, got {q}"));
        }
        Ok(())
    }
}

/// Tensor grid of 2D points with their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneGrid {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl PlaneGrid {
    pub fn gauss_legendre(n: usize, q_max: f64) -> Result<Self, PurityError> {
        let axis = gauss_legendre_rule(n)?.mapped(-q_max, q_max);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (x, wx) in axis.nodes.iter().zip(&axis.weights) {
            for (y, wy) in axis.nodes.iter().zip(&axis.weights) {
                points.push([*x, *y]);
                weights.push(wx * wy);
            }
        }
        Ok(PlaneGrid { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Discretized two-particle state `phi(q1_i, q2_k)`, stored row-major with
/// particle one's index first.
#[derive(Debug, Clone)]
pub struct MomentumGridState {
    pub grid1: PlaneGrid,
    pub grid2: PlaneGrid,
    pub amplitudes: Vec<Complex64>,
    pub masses: MassPartition,
    pub params: GaussianParams,
}

/// Pieces of the amplitude at one grid point.
struct AmplitudeParts {
    psi_in: f64,
    sector: f64,
    rel_norm: f64,
}

/// Incoming state and its isotropic projection at `(q1, q2)`, scaled units.
///
/// With `Q = q1 + q2`, `q = mu2 q1 - mu1 q2`, `d = mu1 - mu2`:
/// `psi_in = exp[-((mu1^2+mu2^2) Q^2/2 + (q-q0)^2 + d Q.(q-q0))] / pi`, and
/// its average over the direction of `q` at fixed `|q|` is
/// `exp[-(mu1^2+mu2^2) Q^2/2 - |q|^2 - q0^2 + d Q.q0] I0(|q| |2 q0 - d Q|) / pi`.
fn amplitude_parts(q1: [f64; 2], q2: [f64; 2], masses: &MassPartition, q0: [f64; 2]) -> Result<AmplitudeParts, PurityError> {
    let (mu1, mu2) = (masses.mu1(), masses.mu2());
    let d = mu1 - mu2;
    let c = masses.square_sum();
    let big = [q1[0] + q2[0], q1[1] + q2[1]];
    let rel = [mu2 * q1[0] - mu1 * q2[0], mu2 * q1[1] - mu1 * q2[1]];
    let big2 = big[0] * big[0] + big[1] * big[1];
    let shifted = [rel[0] - q0[0], rel[1] - q0[1]];
    let psi_in = (-(0.5 * c * big2
        + shifted[0] * shifted[0]
        + shifted[1] * shifted[1]
        + d * (big[0] * shifted[0] + big[1] * shifted[1])))
        .exp()
        / PI;

    let rho2 = rel[0] * rel[0] + rel[1] * rel[1];
    let rho = rho2.sqrt();
    let w = [2.0 * q0[0] - d * big[0], 2.0 * q0[1] - d * big[1]];
    let z = rho * w[0].hypot(w[1]);
    let exponent = -0.5 * c * big2 - rho2 - (q0[0] * q0[0] + q0[1] * q0[1]) + d * (big[0] * q0[0] + big[1] * q0[1]) + z;
    let sector = exponent.exp() * bessel_i0_scaled(z)? / PI;
    Ok(AmplitudeParts {
        psi_in,
        sector,
        rel_norm: rho,
    })
}

/// `phi_out(q1, q2) = phi_in + sigma_part(ln sigma + ln|q_rel|) * g`, with `g`
/// the isotropic projection of `phi_in` (scaled momenta).
pub fn out_state_amplitude(
    q1: [f64; 2],
    q2: [f64; 2],
    masses: MassPartition,
    params: GaussianParams,
    mult: &dyn SectorMultiplier,
) -> Result<Complex64, PurityError> {
    let parts = amplitude_parts(q1, q2, &masses, params.q0())?;
    if parts.rel_norm == 0.0 {
        return Err(PurityError::SingularNode { q1, q2 });
    }
    let s = mult.sigma_part(params.sigma.ln() + parts.rel_norm.ln())?;
    let phi = Complex64::new(parts.psi_in, 0.0) + s * parts.sector;
    if !(phi.re.is_finite() && phi.im.is_finite()) {
        return Err(PurityError::NonFinite { q1, q2 });
    }
    Ok(phi)
}

impl MomentumGridState {
    /// Fill the grid with `phi_out` and normalize it in the discrete norm.
    pub fn build(
        masses: MassPartition,
        params: GaussianParams,
        grid: GridSpec,
        mult: &dyn SectorMultiplier,
    ) -> Result<Self, PurityError> {
        grid.validate()?;
        let grid1 = PlaneGrid::gauss_legendre(grid.n1, grid.q_max())?;
        let grid2 = PlaneGrid::gauss_legendre(grid.n2, grid.q_max())?;
        let rows: Vec<Vec<Complex64>> = grid1
            .points
            .par_iter()
            .map(|&q1| {
                grid2
                    .points
                    .iter()
                    .map(|&q2| out_state_amplitude(q1, q2, masses, params, mult))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let amplitudes = rows.into_iter().flatten().collect();
        let mut state = MomentumGridState {
            grid1,
            grid2,
            amplitudes,
            masses,
            params,
        };
        let norm = state.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(PurityError::NotNormalized { norm });
        }
        let scale = 1.0 / norm.sqrt();
        state.amplitudes.iter_mut().for_each(|a| *a *= scale);
        Ok(state)
    }

    /// Build directly from amplitudes on given grids, normalizing them.
    pub fn from_amplitudes(
        grid1: PlaneGrid,
        grid2: PlaneGrid,
        amplitudes: Vec<Complex64>,
        masses: MassPartition,
        params: GaussianParams,
    ) -> Result<Self, PurityError> {
        if amplitudes.len() != grid1.len() * grid2.len() {
            return invalid(format!(
                "expected {} amplitudes, got {}",
                grid1.len() * grid2.len(),
                amplitudes.len()
            ));
        }
        let mut state = MomentumGridState {
            grid1,
            grid2,
            amplitudes,
            masses,
            params,
        };
        let norm = state.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(PurityError::NotNormalized { norm });
        }
        let scale = 1.0 / norm.sqrt();
        state.amplitudes.iter_mut().for_each(|a| *a *= scale);
        Ok(state)
    }

    /// `sum_ik w_i w_k |phi_ik|^2`
    pub fn norm(&self) -> f64 {
        let n2 = self.grid2.len();
        let mut acc = NeumaierSum::default();
        for (i, w1) in self.grid1.weights.iter().enumerate() {
            for (k, w2) in self.grid2.weights.iter().enumerate() {
                acc.add(w1 * w2 * self.amplitudes[i * n2 + k].norm_sqr());
            }
        }
        acc.sum()
    }

    pub fn amplitude(&self, i: usize, k: usize) -> Complex64 {
        self.amplitudes[i * self.grid2.len() + k]
    }
}

/// Reduced density matrix of particle one in the symmetrized basis,
/// `sqrt(w_i) rho_ii' sqrt(w_i')`, as real and imaginary parts. It is exactly
/// Hermitian.
pub fn reduced_density_matrix(state: &MomentumGridState) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n1, n2) = (state.grid1.len(), state.grid2.len());
    let s1: Vec<f64> = state.grid1.weights.iter().map(|w| w.sqrt()).collect();
    let s2: Vec<f64> = state.grid2.weights.iter().map(|w| w.sqrt()).collect();
    let ar = DMatrix::from_fn(n1, n2, |i, k| s1[i] * state.amplitude(i, k).re * s2[k]);
    let ai = DMatrix::from_fn(n1, n2, |i, k| s1[i] * state.amplitude(i, k).im * s2[k]);
    let re = &ar * ar.transpose() + &ai * ai.transpose();
    let im = &ai * ar.transpose() - &ar * ai.transpose();
    let re_sym = (&re + re.transpose()) * 0.5;
    let im_anti = (&im - im.transpose()) * 0.5;
    (re_sym, im_anti)
}

/// `Tr rho^2 = sum_ii' w_i w_i' |rho_ii'|^2`, the weighted Frobenius norm of
/// the reduced density matrix.
pub fn purity_of_grid(state: &MomentumGridState) -> Result<f64, PurityError> {
    let norm = state.norm();
    if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
        return Err(PurityError::NotNormalized { norm });
    }
    let (re, im) = reduced_density_matrix(state);
    let mut acc = NeumaierSum::default();
    for (a, b) in re.iter().zip(im.iter()) {
        acc.add(a * a + b * b);
    }
    Ok(acc.sum())
}

/// `1 - E(mu1) / (ln sigma)^2`
pub fn leading_purity(mu1: f64, sigma: f64) -> Result<f64, PurityError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return invalid(format!("sigma must lie in (0, 1), got {sigma}"));
    }
    let e = coeff_e(mu1, DEFAULT_TOL)?.e;
    Ok(1.0 - e / sigma.ln().powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepEntry {
    pub sigma: f64,
    pub purity: f64,
    #[serde(rename = "E_hat")]
    pub e_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub mu1: f64,
    pub inv_a: f64,
    pub grid_n: usize,
    pub entries: Vec<SweepEntry>,
    #[serde(rename = "reference_E")]
    pub reference_e: f64,
    /// Least-squares slope of `E_hat - E` against `1/|ln sigma|`.
    pub residual_slope: f64,
}

fn purity_at(
    masses: MassPartition,
    params: GaussianParams,
    grid: GridSpec,
    mult: &dyn SectorMultiplier,
) -> Result<f64, PurityError> {
    let state = MomentumGridState::build(masses, params, grid, mult)?;
    let purity = purity_of_grid(&state)?;
    if purity > 1.0 + PURITY_SLACK {
        return Err(PurityError::Resolution {
            purity,
            grid_n: grid.n1,
        });
    }
    Ok(purity)
}

/// `E_hat(sigma) = (1 - P) (ln sigma)^2` for each `sigma`.
pub fn estimate_e_from_sweep(mu1: f64, sigmas: &[f64], grid_n: usize, inv_a: f64) -> Result<SweepReport, PurityError> {
    estimate_e_from_sweep_on(mu1, sigmas, GridSpec::staggered(grid_n), inv_a)
}

pub fn estimate_e_from_sweep_on(mu1: f64, sigmas: &[f64], grid: GridSpec, inv_a: f64) -> Result<SweepReport, PurityError> {
    let masses = MassPartition::new(mu1)?;
    if sigmas.is_empty() {
        return invalid("sigma list is empty".into());
    }
    if sigmas.iter().any(|&s| !(s > 0.0 && s < 1e-3)) {
        return invalid(format!("every sigma must lie in (0, 1e-3), got {sigmas:?}"));
    }
    if sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return invalid(format!("sigmas must be strictly decreasing, got {sigmas:?}"));
    }
    if grid.n1.min(grid.n2) < MIN_SWEEP_GRID {
        return invalid(format!("grid must have at least {MIN_SWEEP_GRID} nodes per axis"));
    }
    let mult = expansion_multipliers(ExpansionParams::new(inv_a, MULTIPLIER_MASS)?);
    let reference_e = coeff_e(mu1, DEFAULT_TOL)?.e;

    let mut entries = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        let purity = purity_at(masses, GaussianParams::new(sigma, [0.0, 0.0])?, grid, &mult)?;
        entries.push(SweepEntry {
            sigma,
            purity,
            e_hat: (1.0 - purity) * sigma.ln().powi(2),
        });
    }
    let (sxx, sxy) = entries.iter().fold((0.0, 0.0), |(sxx, sxy), e| {
        let x = 1.0 / e.sigma.ln().abs();
        (sxx + x * x, sxy + x * (e.e_hat - reference_e))
    });
    Ok(SweepReport {
        mu1,
        inv_a,
        grid_n: grid.n1,
        entries,
        reference_e,
        residual_slope: sxy / sxx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct P0Deviation {
    pub ratio: f64,
    /// `|P(p0) - P(0)|`
    pub deviation: f64,
    /// `|P(p0) - P(0)| (ln sigma)^2 sigma / |p0|`; zero when the deviation
    /// vanishes.
    pub normalized: f64,
}

/// Purity change caused by a mean relative momentum `p0 = ratio * sigma`
/// along the x axis, for the truncated out-state with `1/a = 0`.
pub fn p0_deviation(mu1: f64, sigma: f64, ratios: &[f64], grid_n: usize) -> Result<Vec<P0Deviation>, PurityError> {
    p0_deviation_on(mu1, sigma, ratios, GridSpec::staggered(grid_n))
}

pub fn p0_deviation_on(mu1: f64, sigma: f64, ratios: &[f64], grid: GridSpec) -> Result<Vec<P0Deviation>, PurityError> {
    let masses = MassPartition::new(mu1)?;
    if !(sigma > 0.0 && sigma < 1e-4) {
        return invalid(format!("sigma must lie in (0, 1e-4), got {sigma}"));
    }
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
        return invalid(format!("ratios must lie in [0, 1], got {ratios:?}"));
    }
    if grid.n1.min(grid.n2) < MIN_SWEEP_GRID {
        return invalid(format!("grid must have at least {MIN_SWEEP_GRID} nodes per axis"));
    }
    let mult = expansion_multipliers(ExpansionParams::new(0.0, MULTIPLIER_MASS)?);
    let base = purity_at(masses, GaussianParams::new(sigma, [0.0, 0.0])?, grid, &mult)?;
    let log2 = sigma.ln().powi(2);
    ratios
        .iter()
        .map(|&ratio| {
            let p = purity_at(masses, GaussianParams::new(sigma, [ratio * sigma, 0.0])?, grid, &mult)?;
            let deviation = (p - base).abs();
            let normalized = if deviation == 0.0 { 0.0 } else { deviation * log2 / ratio };
            Ok(P0Deviation {
                ratio,
                deviation,
                normalized,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::angle_rule;
    use crate::smatrix::{ConstantMultiplier, IdentityMultiplier};

    fn masses(mu1: f64) -> MassPartition {
        MassPartition::new(mu1).unwrap()
    }

    fn params(sigma: f64) -> GaussianParams {
        GaussianParams::new(sigma, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn identity_multiplier_gives_incoming_state() {
        let m = masses(0.75);
        let p = GaussianParams::new(1e-6, [2e-7, -1e-7]).unwrap();
        let q1 = [0.3, -0.4];
        let q2 = [1.1, 0.2];
        let phi = out_state_amplitude(q1, q2, m, p, &IdentityMultiplier).unwrap();
        let parts = amplitude_parts(q1, q2, &m, p.q0()).unwrap();
        assert_eq!(phi, Complex64::new(parts.psi_in, 0.0));
        // Product of shifted unit Gaussians: particle one at +q0, two at -q0.
        let q0 = p.q0();
        let a = (q1[0] - q0[0]).powi(2) + (q1[1] - q0[1]).powi(2);
        let b = (q2[0] + q0[0]).powi(2) + (q2[1] + q0[1]).powi(2);
        assert!((parts.psi_in - (-(a + b) / 2.0).exp() / PI).abs() < 1e-15);
    }

    #[test]
    fn equal_masses_projection_is_pure_gaussian() {
        let m = masses(0.5);
        let q1 = [0.7, 0.1];
        let q2 = [-0.2, 0.9];
        let parts = amplitude_parts(q1, q2, &m, [0.0, 0.0]).unwrap();
        assert!((parts.sector - parts.psi_in).abs() < 1e-15);
    }

    fn brute_average(q1: [f64; 2], q2: [f64; 2], m: &MassPartition, q0: [f64; 2]) -> f64 {
        let (mu1, mu2) = (m.mu1(), m.mu2());
        let big = [q1[0] + q2[0], q1[1] + q2[1]];
        let rel = [mu2 * q1[0] - mu1 * q2[0], mu2 * q1[1] - mu1 * q2[1]];
        let rho = rel[0].hypot(rel[1]);
        let rule = angle_rule(4096).unwrap();
        let mut acc = NeumaierSum::default();
        for t in &rule.nodes {
            let q = [rho * t.cos(), rho * t.sin()];
            let p1 = [mu1 * big[0] + q[0], mu1 * big[1] + q[1]];
            let p2 = [mu2 * big[0] - q[0], mu2 * big[1] - q[1]];
            acc.add(amplitude_parts(p1, p2, m, q0).unwrap().psi_in);
        }
        acc.sum() / 4096.0
    }

    #[test]
    fn projection_matches_dense_angular_average() {
        for (mu1, q0) in [(1.0, [0.0, 0.0]), (0.75, [0.4, -0.3]), (0.6, [0.0, 1.0])] {
            let m = masses(mu1);
            for (q1, q2) in [([0.3, -1.2], [1.5, 0.4]), ([-2.0, 0.5], [0.1, 0.1])] {
                let parts = amplitude_parts(q1, q2, &m, q0).unwrap();
                let brute = brute_average(q1, q2, &m, q0);
                assert!((parts.sector - brute).abs() < 1e-10, "mu1={mu1}: {} vs {brute}", parts.sector);
            }
        }
    }

    #[test]
    fn singular_node_is_rejected() {
        let p = params(1e-6);
        let mult = expansion_multipliers(ExpansionParams::new(0.0, 0.5).unwrap());
        let err = out_state_amplitude([0.5, 0.5], [0.5, 0.5], masses(0.5), p, &mult).unwrap_err();
        assert!(matches!(err, PurityError::SingularNode { .. }));
    }

    #[test]
    fn product_state_has_unit_purity() {
        let g1 = PlaneGrid::gauss_legendre(12, 6.0).unwrap();
        let g2 = PlaneGrid::gauss_legendre(14, 6.0).unwrap();
        let amps: Vec<Complex64> = g1
            .points
            .iter()
            .flat_map(|a| {
                g2.points.iter().map(move |b| {
                    Complex64::new((-(a[0] * a[0] + a[1] * a[1]) / 3.0).exp(), a[0])
                        * (-(b[0] - 1.0).powi(2) - b[1] * b[1]).exp()
                })
            })
            .collect();
        let s = MomentumGridState::from_amplitudes(g1, g2, amps, masses(0.5), params(1e-6)).unwrap();
        assert!((purity_of_grid(&s).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_term_schmidt_state_has_half_purity() {
        // Orthonormal Hermite functions on each particle.
        let g1 = PlaneGrid::gauss_legendre(36, 7.0).unwrap();
        let g2 = PlaneGrid::gauss_legendre(38, 7.0).unwrap();
        let h0 = |p: &[f64; 2]| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp() / PI.sqrt();
        let h1 = |p: &[f64; 2]| 2f64.sqrt() * p[0] * h0(p);
        let amps: Vec<Complex64> = g1
            .points
            .iter()
            .flat_map(|a| {
                g2.points
                    .iter()
                    .map(move |b| Complex64::new((h0(a) * h0(b) + h1(a) * h1(b)) / 2f64.sqrt(), 0.0))
            })
            .collect();
        let s = MomentumGridState::from_amplitudes(g1, g2, amps, masses(0.5), params(1e-6)).unwrap();
        let p = purity_of_grid(&s).unwrap();
        assert!((p - 0.5).abs() < 1e-8, "{p}");
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        let mut s = MomentumGridState::build(masses(0.75), params(1e-6), GridSpec::staggered(8), &IdentityMultiplier).unwrap();
        s.amplitudes.iter_mut().for_each(|a| *a *= 2.0);
        assert!(matches!(purity_of_grid(&s), Err(PurityError::NotNormalized { .. })));
    }

    #[test]
    fn density_matrix_is_hermitian() {
        let mult = expansion_multipliers(ExpansionParams::new(0.0, 0.5).unwrap());
        let p = GaussianParams::new(1e-6, [3e-7, 1e-7]).unwrap();
        let s = MomentumGridState::build(masses(0.8), p, GridSpec::staggered(10), &mult).unwrap();
        let (re, im) = reduced_density_matrix(&s);
        for (i, j) in [(0, 5), (17, 3), (40, 99), (12, 12)] {
            assert_eq!(re[(i, j)], re[(j, i)]);
            assert_eq!(im[(i, j)], -im[(j, i)]);
        }
        assert!(im.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn exchange_symmetry() {
        let mult = expansion_multipliers(ExpansionParams::new(0.0, 0.5).unwrap());
        for mu1 in [0.6, 0.9] {
            let grid = GridSpec::staggered(16);
            let a = MomentumGridState::build(masses(mu1), params(1e-7), grid, &mult).unwrap();
            let swapped = masses(mu1).swapped();
            let b = MomentumGridState::build(swapped, params(1e-7), grid.swapped(), &mult).unwrap();
            let (pa, pb) = (purity_of_grid(&a).unwrap(), purity_of_grid(&b).unwrap());
            assert!((pa - pb).abs() < 1e-8, "mu1={mu1}: {pa} vs {pb}");
        }
    }

    #[test]
    fn identity_multiplier_keeps_product_purity() {
        for mu1 in [0.5, 0.75, 1.0] {
            for sigma in [1e-3, 1e-9] {
                let p = GaussianParams::new(sigma, [0.5 * sigma, 0.0]).unwrap();
                let s = MomentumGridState::build(masses(mu1), p, GridSpec::staggered(12), &IdentityMultiplier).unwrap();
                assert!((purity_of_grid(&s).unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn grid_is_sigma_independent_for_constant_multiplier() {
        let mult = ConstantMultiplier(Complex64::new(-0.01, 0.2));
        let a = MomentumGridState::build(masses(0.7), params(1e-5), GridSpec::staggered(10), &mult).unwrap();
        let b = MomentumGridState::build(masses(0.7), params(1e-9), GridSpec::staggered(10), &mult).unwrap();
        assert_eq!(a.amplitudes, b.amplitudes);
    }

    #[test]
    fn leading_purity_examples() {
        assert!((leading_purity(0.5, 1e-4).unwrap() - 1.0).abs() < 1e-8);
        assert!((leading_purity(1.0, 1e-6).unwrap() - 0.986149).abs() < 2e-6);
        assert!((leading_purity(0.75, 1e-8).unwrap() - 0.998607).abs() < 2e-6);
        assert!(leading_purity(0.75, 1.0).is_err());
    }

    #[test]
    fn sweep_preconditions() {
        assert!(estimate_e_from_sweep(0.75, &[1e-6, 1e-5], 24, 0.0).is_err());
        assert!(estimate_e_from_sweep(0.75, &[1e-2], 24, 0.0).is_err());
        assert!(estimate_e_from_sweep(0.75, &[1e-6], 8, 0.0).is_err());
        assert!(p0_deviation(0.75, 1e-3, &[0.1], 24).is_err());
    }

    #[test]
    fn equal_masses_sweep_vanishes() {
        let r = estimate_e_from_sweep(0.5, &[1e-5, 1e-7, 1e-9], 16, 0.0).unwrap();
        for e in &r.entries {
            assert!(e.e_hat.abs() <= 1.0 / e.sigma.ln().abs(), "{e:?}");
        }
    }

    #[test]
    fn zero_p0_has_zero_deviation() {
        let d = p0_deviation(0.75, 1e-8, &[0.0], 16).unwrap();
        assert_eq!(d[0].deviation, 0.0);
        assert_eq!(d[0].normalized, 0.0);
    }
}
