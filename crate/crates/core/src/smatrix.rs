//! Truncated low-energy S-matrix on the isotropic sector, and the
//! zero-energy scattering length from its trace formula (Nyström
//! discretization of the log kernels), with a radial ODE oracle.
//!
//! Units: hbar = 1; the reduced mass `m` is explicit and the kernels carry
//! the factor `2m`.

use std::f64::consts::{LN_2, PI};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specfun::EULER_GAMMA;

/// Condition number of the Q-compressed kernel above which the zero-energy
/// problem is treated as resonant.
pub const RESONANCE_CONDITION_LIMIT: f64 = 1e10;

/// Smallest admissible mesh size per axis.
pub const MIN_MESH_N: usize = 8;

/// Relative RMS residual above which the radial oracle's log fit is rejected.
pub const ORACLE_FIT_TOLERANCE: f64 = 1e-8;

/// Offset between the trace-formula `1/a` (divided by `2m`) and `-ln a_std`
/// from the radial oracle. Measured to vanish under mesh refinement.
pub const CONVENTION_OFFSET: f64 = 0.0;

#[derive(Debug, Error)]
pub enum SMatrixError {
    #[error("log-momentum {logp} is not in the low-energy regime (must be < 0)")]
    Domain { logp: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("zero-energy resonance detected: condition number {condition_number:.3e} exceeds {limit:.1e}")]
    Resonance { condition_number: f64, limit: f64 },
    #[error("radial oracle unreliable: {0}")]
    OracleUnreliable(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

// ---------------------------------------------------------------------------
// Truncated S-matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionParams {
    /// The inverse scattering length `1/a`; zero means `a = infinity`.
    pub inv_a: f64,
    pub mass_reduced: f64,
}

impl ExpansionParams {
    pub fn new(inv_a: f64, mass_reduced: f64) -> Result<Self, SMatrixError> {
        if !inv_a.is_finite() {
            return Err(SMatrixError::InvalidParameter(format!("inv_a must be finite, got {inv_a}")));
        }
        if !(mass_reduced > 0.0 && mass_reduced.is_finite()) {
            return Err(SMatrixError::InvalidParameter(format!(
                "reduced mass must be positive, got {mass_reduced}"
            )));
        }
        Ok(ExpansionParams { inv_a, mass_reduced })
    }
}

/// Multiplier applied to the isotropic-sector projection of a state.
pub trait SectorMultiplier: Sync {
    fn sigma_part(&self, logp: f64) -> Result<Complex64, SMatrixError>;
}

/// The truncated expansion `S = 1 + sigma_part(ln|p|) Sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SMatrixMultipliers {
    pub params: ExpansionParams,
}

impl SMatrixMultipliers {
    pub fn identity_part(&self) -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    /// `ln 2 - gamma + 1/a`
    pub fn log_constant(&self) -> f64 {
        LN_2 - EULER_GAMMA + self.params.inv_a
    }
}

impl SectorMultiplier for SMatrixMultipliers {
    /// `i pi / L + (i pi (ln 2 - gamma + 1/a) - pi^2 / 2) / L^2`
    fn sigma_part(&self, logp: f64) -> Result<Complex64, SMatrixError> {
        if !(logp < 0.0) {
            return Err(SMatrixError::Domain { logp });
        }
        let first = Complex64::new(0.0, PI / logp);
        let second = Complex64::new(-PI * PI / 2.0, PI * self.log_constant()) / (logp * logp);
        Ok(first + second)
    }
}

pub fn expansion_multipliers(params: ExpansionParams) -> SMatrixMultipliers {
    SMatrixMultipliers { params }
}

/// `S = I`: no scattering.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityMultiplier;

impl SectorMultiplier for IdentityMultiplier {
    fn sigma_part(&self, _logp: f64) -> Result<Complex64, SMatrixError> {
        Ok(Complex64::new(0.0, 0.0))
    }
}

/// A fixed multiplier independent of the momentum.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMultiplier(pub Complex64);

impl SectorMultiplier for ConstantMultiplier {
    fn sigma_part(&self, _logp: f64) -> Result<Complex64, SMatrixError> {
        Ok(self.0)
    }
}

/// `| |1 + sigma_part(L)|^2 - 1 |`, the unitarity defect of the truncation.
pub fn unitarity_defect(mult: &SMatrixMultipliers, logp: f64) -> Result<f64, SMatrixError> {
    let s = mult.identity_part() + mult.sigma_part(logp)?;
    Ok((s.norm_sqr() - 1.0).abs())
}

// ---------------------------------------------------------------------------
// Potentials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    /// `strength * exp(-(r / width)^2)`
    GaussianWell,
    /// `strength` for `r < width`, zero outside.
    DiskWell,
    /// Sampled values read from a table.
    Tabulated,
}

/// Sampled potential values.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialTable {
    /// `(r, V(r))` pairs with strictly increasing `r`; linear interpolation,
    /// zero beyond the last sample.
    Radial(Vec<(f64, f64)>),
    /// `V` on the regular grid `xs x ys` (row-major in `x`); bilinear
    /// interpolation, zero outside the grid.
    Planar {
        xs: Vec<f64>,
        ys: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Potential description. Every kind is truncated to zero beyond
/// `support_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub strength: f64,
    pub width: f64,
    pub support_radius: f64,
    pub table: Option<PotentialTable>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialFile {
    kind: PotentialKind,
    #[serde(default = "one")]
    strength: f64,
    #[serde(default = "one")]
    width: f64,
    support_radius: f64,
    table_path: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

impl PotentialSpec {
    pub fn gaussian_well(strength: f64, width: f64, support_radius: f64) -> Result<Self, SMatrixError> {
        Self::analytic(PotentialKind::GaussianWell, strength, width, support_radius)
    }

    pub fn disk_well(strength: f64, width: f64, support_radius: f64) -> Result<Self, SMatrixError> {
        Self::analytic(PotentialKind::DiskWell, strength, width, support_radius)
    }

    fn analytic(kind: PotentialKind, strength: f64, width: f64, support_radius: f64) -> Result<Self, SMatrixError> {
        let spec = PotentialSpec {
            kind,
            strength,
            width,
            support_radius,
            table: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Tabulated potential. `strength` multiplies the table values.
    pub fn tabulated(table: PotentialTable, strength: f64, support_radius: f64) -> Result<Self, SMatrixError> {
        let spec = PotentialSpec {
            kind: PotentialKind::Tabulated,
            strength,
            width: 1.0,
            support_radius,
            table: Some(table),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SMatrixError> {
        let bad = |msg: String| Err(SMatrixError::InvalidParameter(msg));
        if !self.strength.is_finite() {
            return bad(format!("strength must be finite, got {}", self.strength));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return bad(format!("width must be positive, got {}", self.width));
        }
        if !(self.support_radius > 0.0 && self.support_radius.is_finite()) {
            return bad(format!("support_radius must be positive, got {}", self.support_radius));
        }
        match (&self.kind, &self.table) {
            (PotentialKind::Tabulated, None) => bad("tabulated potential without a table".into()),
            (PotentialKind::Tabulated, Some(t)) => validate_table(t, self.support_radius),
            (_, Some(_)) => bad("table given for an analytic potential kind".into()),
            (_, None) => Ok(()),
        }
    }

    /// Read a TOML potential file. A relative `table_path` is resolved
    /// against the directory of the file.
    pub fn from_file(path: &Path) -> Result<Self, SMatrixError> {
        let text = std::fs::read_to_string(path).map_err(|source| SMatrixError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let raw: PotentialFile = toml::from_str(&text).map_err(|e| SMatrixError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let table = match &raw.table_path {
            Some(rel) => {
                let full = path.parent().unwrap_or(Path::new(".")).join(rel);
                Some(read_table(&full)?)
            }
            None => None,
        };
        if raw.kind == PotentialKind::Tabulated && table.is_none() {
            return Err(SMatrixError::Parse {
                path: path.to_path_buf(),
                message: "kind = \"tabulated\" requires table_path".into(),
            });
        }
        let spec = PotentialSpec {
            kind: raw.kind,
            strength: raw.strength,
            width: raw.width,
            support_radius: raw.support_radius,
            table,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Whether the potential depends on `|x|` only.
    pub fn is_radial(&self) -> bool {
        !matches!(self.table, Some(PotentialTable::Planar { .. }))
    }

    /// `V(r)` for radial potentials, zero beyond the support.
    pub fn radial_value(&self, r: f64) -> Option<f64> {
        if r > self.support_radius {
            return self.is_radial().then_some(0.0);
        }
        match (&self.kind, &self.table) {
            (PotentialKind::GaussianWell, _) => Some(self.strength * (-(r / self.width).powi(2)).exp()),
            (PotentialKind::DiskWell, _) => Some(if r < self.width { self.strength } else { 0.0 }),
            (PotentialKind::Tabulated, Some(PotentialTable::Radial(pairs))) => {
                Some(self.strength * interp_radial(pairs, r))
            }
            _ => None,
        }
    }

    /// `V(x, y)`, zero beyond the support.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let r = x.hypot(y);
        if r > self.support_radius {
            return 0.0;
        }
        match &self.table {
            Some(PotentialTable::Planar { xs, ys, values }) => self.strength * interp_planar(xs, ys, values, x, y),
            _ => self.radial_value(r).unwrap_or(0.0),
        }
    }

    /// Discontinuities of the radial profile, for the ODE oracle.
    fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![self.support_radius];
        match (&self.kind, &self.table) {
            (PotentialKind::DiskWell, _) if self.width < self.support_radius => out.push(self.width),
            (PotentialKind::Tabulated, Some(PotentialTable::Radial(pairs))) => {
                out.extend(pairs.iter().map(|p| p.0).filter(|&r| r > 0.0 && r < self.support_radius))
            }
            _ => {}
        }
        out.sort_by(f64::total_cmp);
        out
    }
}

fn validate_table(table: &PotentialTable, support: f64) -> Result<(), SMatrixError> {
    let bad = |msg: String| Err(SMatrixError::InvalidParameter(msg));
    // Decay requirement: the sampled potential must vanish outside the support.
    let outside_nonzero = |r: f64, v: f64| r > support && v != 0.0;
    match table {
        PotentialTable::Radial(pairs) => {
            if pairs.len() < 2 {
                return bad("radial table needs at least two samples".into());
            }
            if pairs.iter().any(|p| !(p.0.is_finite() && p.1.is_finite()) || p.0 < 0.0) {
                return bad("radial table has negative radii or non-finite entries".into());
            }
            if pairs.windows(2).any(|w| w[1].0 <= w[0].0) {
                return bad("radial table radii must be strictly increasing".into());
            }
            if let Some(p) = pairs.iter().find(|p| outside_nonzero(p.0, p.1)) {
                return bad(format!("table value {} at r={} beyond support_radius {support}", p.1, p.0));
            }
        }
        PotentialTable::Planar { xs, ys, values } => {
            if xs.len() < 2 || ys.len() < 2 || values.len() != xs.len() * ys.len() {
                return bad("planar table must be a full regular grid with at least 2x2 samples".into());
            }
            if values.iter().chain(xs).chain(ys).any(|v| !v.is_finite()) {
                return bad("planar table has non-finite entries".into());
            }
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    let v = values[i * ys.len() + j];
                    if outside_nonzero(x.hypot(y), v) {
                        return bad(format!("table value {v} at ({x}, {y}) beyond support_radius {support}"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn interp_radial(pairs: &[(f64, f64)], r: f64) -> f64 {
    let last = pairs[pairs.len() - 1];
    if r >= last.0 {
        return if r == last.0 { last.1 } else { 0.0 };
    }
    if r <= pairs[0].0 {
        return pairs[0].1;
    }
    let k = pairs.partition_point(|p| p.0 <= r);
    let (a, b) = (pairs[k - 1], pairs[k]);
    a.1 + (b.1 - a.1) * (r - a.0) / (b.0 - a.0)
}

fn interp_planar(xs: &[f64], ys: &[f64], values: &[f64], x: f64, y: f64) -> f64 {
    let locate = |axis: &[f64], t: f64| -> Option<(usize, f64)> {
        if t < axis[0] || t > axis[axis.len() - 1] {
            return None;
        }
        let k = axis.partition_point(|&a| a <= t).clamp(1, axis.len() - 1);
        Some((k - 1, (t - axis[k - 1]) / (axis[k] - axis[k - 1])))
    };
    let (Some((i, tx)), Some((j, ty))) = (locate(xs, x), locate(ys, y)) else {
        return 0.0;
    };
    let n = ys.len();
    let v = |a: usize, b: usize| values[a * n + b];
    (1.0 - tx) * (1.0 - ty) * v(i, j) + tx * (1.0 - ty) * v(i + 1, j) + (1.0 - tx) * ty * v(i, j + 1) + tx * ty * v(i + 1, j + 1)
}

/// Parse a whitespace- or comma-separated table: two columns `r V` or three
/// columns `x y V`; blank lines and `#` comments are ignored.
pub fn parse_table(text: &str) -> Result<PotentialTable, String> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("line {}: expected {} columns, found {}", lineno + 1, first.len(), row.len()));
            }
        }
        rows.push(row);
    }
    match rows.first().map(Vec::len) {
        None => Err("empty table".into()),
        Some(2) => Ok(PotentialTable::Radial(rows.iter().map(|r| (r[0], r[1])).collect())),
        Some(3) => {
            let mut xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let mut ys: Vec<f64> = rows.iter().map(|r| r[1]).collect();
            for axis in [&mut xs, &mut ys] {
                axis.sort_by(f64::total_cmp);
                axis.dedup();
            }
            if xs.len() * ys.len() != rows.len() {
                return Err("x y V table is not a full regular grid".into());
            }
            let mut values = vec![f64::NAN; rows.len()];
            for r in &rows {
                let i = xs.partition_point(|&a| a < r[0]);
                let j = ys.partition_point(|&a| a < r[1]);
                values[i * ys.len() + j] = r[2];
            }
            if values.iter().any(|v| v.is_nan()) {
                return Err("x y V table has duplicate grid points".into());
            }
            Ok(PotentialTable::Planar { xs, ys, values })
        }
        Some(n) => Err(format!("expected 2 or 3 columns, found {n}")),
    }
}

fn read_table(path: &Path) -> Result<PotentialTable, SMatrixError> {
    let text = std::fs::read_to_string(path).map_err(|source| SMatrixError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_table(&text).map_err(|message| SMatrixError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

// ---------------------------------------------------------------------------
// Zero-energy kernels
// ---------------------------------------------------------------------------

/// One Nyström node: position, quadrature weight (cell area) and `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSample {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
    pub potential: f64,
}

/// Nyström discretization of the zero-energy kernels. Matrices are stored in
/// the symmetrized basis `sqrt(w_i) K_ij / sqrt(w_j)`, in which the weighted
/// discrete inner product is the Euclidean one.
#[derive(Debug, Clone)]
pub struct ZeroEnergyKernels {
    pub mesh_points: Vec<MeshSample>,
    /// Signs `U = sign(V)` (`+1` where `V = 0`).
    pub u: Vec<f64>,
    /// `sqrt|V|` at the mesh points.
    pub v: Vec<f64>,
    /// `sqrt(w) sqrt|V|`, the symmetrized `v`.
    pub v_weighted: DVector<f64>,
    /// `int |V|`
    pub alpha: f64,
    pub m00: DMatrix<f64>,
    pub n00: DMatrix<f64>,
    pub mass_reduced: f64,
}

/// Mesh of cell midpoints of a uniform `mesh_n x mesh_n` grid over
/// `[-R, R]^2`, keeping cells whose centre lies in the disk of radius `R`.
pub fn disk_mesh(potential: &PotentialSpec, mesh_n: usize) -> Vec<MeshSample> {
    let r = potential.support_radius;
    let h = 2.0 * r / mesh_n as f64;
    let mut out = Vec::new();
    for i in 0..mesh_n {
        let x = -r + (i as f64 + 0.5) * h;
        for j in 0..mesh_n {
            let y = -r + (j as f64 + 0.5) * h;
            if x.hypot(y) <= r {
                out.push(MeshSample {
                    x,
                    y,
                    weight: h * h,
                    potential: potential.value(x, y),
                });
            }
        }
    }
    out
}

pub fn assemble_zero_energy_kernels(
    potential: &PotentialSpec,
    mesh_n: usize,
    mass_reduced: f64,
) -> Result<ZeroEnergyKernels, SMatrixError> {
    potential.validate()?;
    if mesh_n < MIN_MESH_N {
        return Err(SMatrixError::InvalidParameter(format!(
            "mesh_n must be at least {MIN_MESH_N}, got {mesh_n}"
        )));
    }
    ZeroEnergyKernels::from_samples(disk_mesh(potential, mesh_n), mass_reduced)
}

impl ZeroEnergyKernels {
    /// Assemble from explicit samples. Samples are put into a canonical order
    /// first, so the result does not depend on how the mesh was enumerated.
    pub fn from_samples(mut samples: Vec<MeshSample>, mass_reduced: f64) -> Result<Self, SMatrixError> {
        if !(mass_reduced > 0.0 && mass_reduced.is_finite()) {
            return Err(SMatrixError::InvalidParameter(format!(
                "reduced mass must be positive, got {mass_reduced}"
            )));
        }
        if samples.iter().any(|s| !(s.weight > 0.0) || !s.potential.is_finite()) {
            return Err(SMatrixError::InvalidParameter("mesh weights must be positive and V finite".into()));
        }
        samples.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

        let n = samples.len();
        let u: Vec<f64> = samples.iter().map(|s| if s.potential < 0.0 { -1.0 } else { 1.0 }).collect();
        let v: Vec<f64> = samples.iter().map(|s| s.potential.abs().sqrt()).collect();
        let vw = DVector::from_iterator(n, samples.iter().zip(&v).map(|(s, v)| v * s.weight.sqrt()));
        let alpha: f64 = vw.iter().map(|x| x * x).sum();
        if !(alpha > 0.0) {
            return Err(SMatrixError::Degenerate("potential vanishes on the mesh (alpha = 0)".into()));
        }

        // Log kernel with the weight split symmetrically; on the diagonal,
        // ln|x - y| averaged over a disk of the cell's area: ln r_c - 1/2.
        let coupling = 2.0 * mass_reduced / (2.0 * PI);
        let shift = EULER_GAMMA - LN_2;
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let si = &samples[i];
                let mut m_row = vec![0.0; n];
                let mut n_row = vec![0.0; n];
                for j in 0..n {
                    let sj = &samples[j];
                    let log = if i == j {
                        0.5 * (si.weight / PI).ln() - 0.5
                    } else {
                        (si.x - sj.x).hypot(si.y - sj.y).ln()
                    };
                    let k = -coupling * vw[i] * vw[j];
                    let delta = if i == j { u[i] } else { 0.0 };
                    n_row[j] = delta + k * log;
                    m_row[j] = delta + k * (log + shift);
                }
                (m_row, n_row)
            })
            .collect();
        let m00 = DMatrix::from_fn(n, n, |i, j| rows[i].0[j]);
        let n00 = DMatrix::from_fn(n, n, |i, j| rows[i].1[j]);

        Ok(ZeroEnergyKernels {
            mesh_points: samples,
            u,
            v,
            v_weighted: vw,
            alpha,
            m00,
            n00,
            mass_reduced,
        })
    }

    pub fn len(&self) -> usize {
        self.mesh_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh_points.is_empty()
    }

    /// Rank-1 projector onto `v` in the weighted inner product.
    pub fn projector_p(&self) -> DMatrix<f64> {
        &self.v_weighted * self.v_weighted.transpose() / self.alpha
    }

    pub fn projector_q(&self) -> DMatrix<f64> {
        DMatrix::identity(self.len(), self.len()) - self.projector_p()
    }
}

/// Householder reflector `H = I - 2 w w^T / (w^T w)` mapping `v` onto a
/// multiple of the first basis vector.
struct Reflector {
    w: DVector<f64>,
    wnorm2: f64,
}

impl Reflector {
    fn new(v: &DVector<f64>) -> Self {
        let mut w = v.clone();
        let norm = v.norm();
        w[0] += if v[0] >= 0.0 { norm } else { -norm };
        let wnorm2 = w.norm_squared();
        Reflector { w, wnorm2 }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let c = 2.0 * self.w.dot(x) / self.wnorm2;
        x - &self.w * c
    }

    /// `H A H` for symmetric `A`.
    fn conjugate(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let aw = a * &self.w;
        let wtaw = self.w.dot(&aw);
        let s = 2.0 / self.wnorm2;
        let mut out = a.clone();
        // A - s (A w) w^T - s w (A w)^T + s^2 (w^T A w) w w^T
        out.ger(-s, &aw, &self.w, 1.0);
        out.ger(-s, &self.w, &aw, 1.0);
        out.ger(s * s * wtaw, &self.w, &self.w, 1.0);
        out
    }
}

/// Trace-formula result with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeroEnergyAnalysis {
    pub inv_a: f64,
    /// Condition number of `Q M00 Q` restricted to the range of `Q`.
    pub condition_number: f64,
    /// Number of negative eigenvalues of `Q M00 Q` on the range of `Q`.
    pub negative_eigenvalues: usize,
    pub mesh_points: usize,
}

/// Spectrum of `Q M00 Q` on the range of `Q`, together with the data needed
/// to apply its pseudo-inverse `D0`.
struct CompressedInverse {
    reflector: Reflector,
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl CompressedInverse {
    fn new(kernels: &ZeroEnergyKernels) -> Self {
        let reflector = Reflector::new(&kernels.v_weighted);
        // In the reflected basis Q = diag(0, I), so Q M Q on range(Q) is the
        // trailing block.
        let rotated = reflector.conjugate(&kernels.m00);
        let n = kernels.len();
        let block = rotated.view((1, 1), (n - 1, n - 1)).into_owned();
        let block = (&block + block.transpose()) * 0.5;
        CompressedInverse {
            reflector,
            eigen: block.symmetric_eigen(),
        }
    }

    fn condition_number(&self) -> f64 {
        let abs = self.eigen.eigenvalues.iter().map(|l| l.abs());
        let (lo, hi) = abs.fold((f64::INFINITY, 0.0f64), |(lo, hi), a| (lo.min(a), hi.max(a)));
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    fn negative_count(&self) -> usize {
        self.eigen.eigenvalues.iter().filter(|&&l| l < 0.0).count()
    }

    /// `D0 x`: pseudo-inverse on range(Q), zero on range(P).
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let hx = self.reflector.apply(x);
        let tail = hx.rows(1, hx.len() - 1).into_owned();
        let vecs = &self.eigen.eigenvectors;
        let mut coeffs = vecs.tr_mul(&tail);
        for (c, l) in coeffs.iter_mut().zip(self.eigen.eigenvalues.iter()) {
            *c /= l;
        }
        let solved = vecs * coeffs;
        let mut full = DVector::zeros(hx.len());
        full.rows_mut(1, hx.len() - 1).copy_from(&solved);
        self.reflector.apply(&full)
    }
}

/// Spectral diagnostics of the compressed kernel without applying the
/// resonance gate; used to locate zero-energy resonances.
pub fn compressed_spectrum(kernels: &ZeroEnergyKernels) -> Result<(f64, usize), SMatrixError> {
    if kernels.len() < 2 {
        return Err(SMatrixError::Degenerate("mesh has fewer than two points".into()));
    }
    let inv = CompressedInverse::new(kernels);
    Ok((inv.condition_number(), inv.negative_count()))
}

/// `1/a = (2 pi / alpha) Tr[P N00 P - P M00 Q D0 M00 + P M00 Q]`, evaluated
/// as written. With `P = v v^T / alpha` each trace reduces to a quadratic
/// form in `v`.
pub fn analyze_zero_energy(kernels: &ZeroEnergyKernels) -> Result<ZeroEnergyAnalysis, SMatrixError> {
    if kernels.len() < 2 {
        return Err(SMatrixError::Degenerate("mesh has fewer than two points".into()));
    }
    let inv = CompressedInverse::new(kernels);
    let condition_number = inv.condition_number();
    if !(condition_number <= RESONANCE_CONDITION_LIMIT) {
        return Err(SMatrixError::Resonance {
            condition_number,
            limit: RESONANCE_CONDITION_LIMIT,
        });
    }
    let v = &kernels.v_weighted;
    let alpha = kernels.alpha;
    let m = &kernels.m00;

    // Tr(P N P) = v^T N v / alpha
    let t_pnp = v.dot(&(&kernels.n00 * v)) / alpha;
    // Tr(P M Q D M) = (M^T v)^T Q D (M v) / alpha
    let left = m.tr_mul(v);
    let d_mv = inv.apply(&(m * v));
    let q_d_mv = &d_mv - v * (v.dot(&d_mv) / alpha);
    let t_pmqdm = left.dot(&q_d_mv) / alpha;
    // Tr(P M Q) = (M^T v)^T Q v / alpha
    let qv = v - v * (v.dot(v) / alpha);
    let t_pmq = left.dot(&qv) / alpha;

    Ok(ZeroEnergyAnalysis {
        inv_a: 2.0 * PI / alpha * (t_pnp - t_pmqdm + t_pmq),
        condition_number,
        negative_eigenvalues: inv.negative_count(),
        mesh_points: kernels.len(),
    })
}

pub fn inverse_scattering_length(kernels: &ZeroEnergyKernels) -> Result<f64, SMatrixError> {
    analyze_zero_energy(kernels).map(|a| a.inv_a)
}

// ---------------------------------------------------------------------------
// Radial oracle
// ---------------------------------------------------------------------------

/// Number of RK4 steps per unit of `width` (and at least per decay length
/// of the local solution).
const RK4_STEPS_PER_WIDTH: f64 = 2000.0;

/// Integrate `R'' + R'/r = 2 m V(r) R` outward from the origin with the
/// regular solution, then fit `R = A + B ln r` on `[2 support, r_max]`.
/// Returns `1/a_std = exp(A/B)`, i.e. `R ∝ ln(r / a_std)`.
pub fn radial_scattering_length_oracle(
    potential: &PotentialSpec,
    mass_reduced: f64,
    r_max: f64,
) -> Result<f64, SMatrixError> {
    radial_log_scattering_length(potential, mass_reduced, r_max).map(|ln_a| (-ln_a).exp())
}

/// `ln a_std` from the radial oracle.
pub fn radial_log_scattering_length(
    potential: &PotentialSpec,
    mass_reduced: f64,
    r_max: f64,
) -> Result<f64, SMatrixError> {
    potential.validate()?;
    if !potential.is_radial() {
        return Err(SMatrixError::InvalidParameter("radial oracle needs a radially symmetric potential".into()));
    }
    if !(mass_reduced > 0.0 && mass_reduced.is_finite()) {
        return Err(SMatrixError::InvalidParameter(format!("reduced mass must be positive, got {mass_reduced}")));
    }
    let fit_start = 2.0 * potential.support_radius;
    if !(r_max > 2.0 * fit_start) {
        return Err(SMatrixError::InvalidParameter(format!(
            "r_max = {r_max} must exceed 4 * support_radius = {}",
            2.0 * fit_start
        )));
    }
    let two_m = 2.0 * mass_reduced;
    let vr = |r: f64| potential.radial_value(r).unwrap_or(0.0);

    // Step size: resolve the width and the local exponential scale.
    let vmax = potential.strength.abs();
    let length = potential.width.min(potential.support_radius);
    let kappa = (two_m * vmax).sqrt();
    let h_target = (length / RK4_STEPS_PER_WIDTH).min(if kappa > 0.0 { 0.01 / kappa } else { f64::INFINITY });

    // Regular series start: R = 1 + k r^2 / 4, R' = k r / 2.
    let r0 = h_target;
    let k0 = two_m * vr(0.0);
    let mut state = [1.0 + k0 * r0 * r0 / 4.0, k0 * r0 / 2.0];
    let rhs = |r: f64, y: [f64; 2]| [y[1], two_m * vr(r) * y[0] - y[1] / r];

    let mut marks: Vec<f64> = potential.breakpoints();
    marks.retain(|&b| b > r0);
    let samples = 200usize;
    let fit_r: Vec<f64> = (0..samples)
        .map(|k| fit_start + (r_max - fit_start) * k as f64 / (samples - 1) as f64)
        .collect();
    marks.extend(&fit_r);
    marks.sort_by(f64::total_cmp);
    marks.dedup();

    let mut r = r0;
    let mut fit_values = Vec::with_capacity(samples);
    for &target in &marks {
        let span = target - r;
        if span > 0.0 {
            let steps = (span / h_target).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for s in 0..steps {
                let ra = r + s as f64 * h;
                let k1 = rhs(ra, state);
                let k2 = rhs(ra + h / 2.0, [state[0] + h / 2.0 * k1[0], state[1] + h / 2.0 * k1[1]]);
                let k3 = rhs(ra + h / 2.0, [state[0] + h / 2.0 * k2[0], state[1] + h / 2.0 * k2[1]]);
                let k4 = rhs(ra + h, [state[0] + h * k3[0], state[1] + h * k3[1]]);
                for c in 0..2 {
                    state[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                }
            }
            r = target;
        }
        if !(state[0].is_finite() && state[1].is_finite()) {
            return Err(SMatrixError::OracleUnreliable(format!("solution overflowed at r = {r}")));
        }
        if fit_r.contains(&target) {
            fit_values.push(state[0]);
        }
    }

    // Least squares R = A + B ln r.
    let xs: Vec<f64> = fit_r.iter().map(|r| r.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = fit_values.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&fit_values).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let scale = fit_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rms = (xs.iter().zip(&fit_values).map(|(x, y)| (y - a - b * x).powi(2)).sum::<f64>() / n).sqrt();
    if !(rms <= ORACLE_FIT_TOLERANCE * scale) {
        return Err(SMatrixError::OracleUnreliable(format!(
            "log fit residual {rms:.3e} exceeds {ORACLE_FIT_TOLERANCE:.0e} x {scale:.3e}"
        )));
    }
    // A vanishing log slope means a bounded zero-energy solution: the
    // scattering length is undefined (zero-energy resonance or no scattering).
    let spread = b.abs() * (r_max.ln() - fit_start.ln());
    if !(spread > 1e-9 * scale) {
        return Err(SMatrixError::OracleUnreliable(format!(
            "zero-energy solution is bounded (log slope {b:.3e}); scattering length undefined"
        )));
    }
    Ok(-a / b)
}
