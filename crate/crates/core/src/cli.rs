//! Command-line front end: argument parsing, validation, dispatch and
//! artifact emission (CSV, JSON, SVG). Errors are reported on stderr as a
//! JSON object `{error_kind, message, context}`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::entangle::{self, EntangleError, EntanglementRow, DEFAULT_TOL};
use crate::purity_oracle::{self, PurityError};
use crate::smatrix::{self, PotentialSpec, SMatrixError, CONVENTION_OFFSET};

/// Exit status for invalid flags or parameter values.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures during computation or output.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "entangle2d", version, about = "Low-energy scattering entanglement in two dimensions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Entanglement coefficient E on a grid of mass fractions (CSV `mu1,E,err`).
    Table {
        #[arg(long, default_value_t = 0.5)]
        mu_min: f64,
        #[arg(long, default_value_t = 1.0)]
        mu_max: f64,
        #[arg(long, default_value_t = 0.025)]
        step: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One entanglement-table row as JSON.
    Coeff {
        #[arg(long)]
        mu1: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG curve of E(mu1) plus a companion CSV with the same vertices.
    Figure {
        #[arg(long, default_value_t = 0.5)]
        mu_min: f64,
        #[arg(long, default_value_t = 1.0)]
        mu_max: f64,
        #[arg(long, default_value_t = 0.025)]
        step: f64,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// SVG output path.
        #[arg(long)]
        out: PathBuf,
        /// Companion CSV path; defaults to the SVG path with a `.csv` extension.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Brute-force purity of the scattered state over a list of widths.
    PuritySweep {
        #[arg(long)]
        mu1: f64,
        /// Comma-separated, strictly decreasing widths below 1e-3.
        #[arg(long, value_delimiter = ',', required = true)]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 24)]
        grid: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        inv_a: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Purity change caused by a non-zero mean relative momentum.
    P0Check {
        #[arg(long)]
        mu1: f64,
        #[arg(long)]
        sigma: f64,
        /// Comma-separated ratios |p0| / sigma in [0, 1].
        #[arg(long, value_delimiter = ',', required = true)]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 24)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Zero-energy scattering length of a potential file.
    Scatlen {
        /// TOML potential description.
        #[arg(long)]
        potential: PathBuf,
        /// Comma-separated mesh sizes per axis, coarse to fine.
        #[arg(long, value_delimiter = ',', default_value = "16,32")]
        mesh: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        mass: f64,
        /// Outer radius of the radial oracle; defaults to 10 x support radius.
        #[arg(long)]
        r_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Error reported to the user.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub context: Value,
    pub exit: i32,
}

impl CliError {
    fn usage(message: impl Into<String>, context: Value) -> Self {
        CliError {
            kind: "usage",
            message: message.into(),
            context,
            exit: EXIT_USAGE,
        }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError {
            kind: "io",
            message: err.to_string(),
            context: json!({ "path": path.display().to_string() }),
            exit: EXIT_FAILURE,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error_kind": self.kind, "message": self.message, "context": self.context })
    }
}

impl From<EntangleError> for CliError {
    fn from(e: EntangleError) -> Self {
        let (kind, context) = match &e {
            EntangleError::Quadrature(crate::quadrature::QuadratureError::NotConverged { best, delta, level }) => {
                ("not_converged", json!({ "best": best, "delta": delta, "level": level }))
            }
            EntangleError::Table { mu1, completed, .. } => (
                "computation",
                json!({ "failed_mu1": mu1, "completed_rows": completed }),
            ),
            _ => ("computation", Value::Null),
        };
        CliError {
            kind,
            message: e.to_string(),
            context,
            exit: EXIT_FAILURE,
        }
    }
}

impl From<SMatrixError> for CliError {
    fn from(e: SMatrixError) -> Self {
        let (kind, context) = match &e {
            SMatrixError::Resonance { condition_number, limit } => {
                ("resonance", json!({ "condition_number": condition_number, "limit": limit }))
            }
            SMatrixError::Io { path, .. } => ("io", json!({ "path": path.display().to_string() })),
            SMatrixError::Parse { path, .. } => ("parse", json!({ "path": path.display().to_string() })),
            SMatrixError::InvalidParameter(_) | SMatrixError::Degenerate(_) => ("invalid_input", Value::Null),
            _ => ("computation", Value::Null),
        };
        let exit = match &e {
            SMatrixError::Parse { .. } | SMatrixError::InvalidParameter(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        CliError {
            kind,
            message: e.to_string(),
            context,
            exit,
        }
    }
}

impl From<PurityError> for CliError {
    fn from(e: PurityError) -> Self {
        match e {
            PurityError::Entangle(inner) => inner.into(),
            PurityError::SMatrix(inner) => inner.into(),
            PurityError::Resolution { purity, grid_n } => CliError {
                kind: "resolution",
                message: e.to_string(),
                context: json!({ "purity": purity, "grid": grid_n }),
                exit: EXIT_FAILURE,
            },
            other => CliError {
                kind: "computation",
                message: other.to_string(),
                context: Value::Null,
                exit: EXIT_FAILURE,
            },
        }
    }
}

/// Format with 10 significant digits: positional notation for moderate
/// magnitudes, scientific otherwise.
pub fn format_sig10(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let mut exponent = x.abs().log10().floor() as i32;
    // Rounding can carry into the next decade (9.9999999999 -> 10.00000000).
    let rounded: f64 = format!("{x:.9e}").parse().unwrap_or(x);
    if rounded.abs() >= 10f64.powi(exponent + 1) {
        exponent += 1;
    }
    if (-5..15).contains(&exponent) {
        let decimals = (9 - exponent).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.9e}")
    }
}

/// Write `bytes` to `path` atomically (temporary file in the same directory,
/// then rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn table_csv(rows: &[EntanglementRow]) -> String {
    let mut s = String::from("mu1,E,err\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", format_sig10(r.mu1), format_sig10(r.e), format_sig10(r.err)));
    }
    s
}

/// Minimal static SVG: axes, a few labels and the curve. The polyline is
/// drawn in data coordinates (mapped by a transform), so its vertices are
/// the CSV rows verbatim.
pub fn figure_svg(rows: &[EntanglementRow]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 480.0, 70.0, 20.0, 20.0, 50.0);
    let x0 = rows.first().map_or(0.0, |r| r.mu1);
    let x1 = rows.last().map_or(1.0, |r| r.mu1);
    let ymax = rows.iter().fold(0.0f64, |m, r| m.max(r.e)).max(1e-12) * 1.05;
    let ymin = rows.iter().fold(0.0f64, |m, r| m.min(r.e));
    let sx = (w - left - right) / (x1 - x0).max(1e-12);
    let sy = (h - top - bottom) / (ymax - ymin);
    let (ox, oy) = (left - x0 * sx, h - bottom + ymin * sy);
    let points: Vec<String> = rows
        .iter()
        .map(|r| format!("{},{}", format_sig10(r.mu1), format_sig10(r.e)))
        .collect();
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    s.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"black\"/>\n",
        y = h - bottom,
        x2 = w - right
    ));
    s.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\n",
        y = h - bottom
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">mass fraction mu1</text>\n",
        left + (w - left - right) / 2.0,
        h - 10.0
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 18 {})\">E(mu1)</text>\n",
        top + (h - top - bottom) / 2.0,
        top + (h - top - bottom) / 2.0
    ));
    for (label, x) in [(x0, left), (x1, w - right)] {
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>\n",
            h - bottom + 18.0,
            format_sig10(label)
        ));
    }
    for (label, y) in [(ymin, h - bottom), (ymax, top)] {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"12\">{:.3}</text>\n",
            left - 6.0,
            y + 4.0,
            label
        ));
    }
    s.push_str(&format!(
        "<g transform=\"matrix({} 0 0 {} {} {})\">\n",
        format_sig10(sx),
        format_sig10(-sy),
        format_sig10(ox),
        format_sig10(oy)
    ));
    s.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" vector-effect=\"non-scaling-stroke\" points=\"{}\"/>\n",
        points.join(" ")
    ));
    s.push_str("</g>\n</svg>\n");
    s
}

fn check_mu_range(mu_min: f64, mu_max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    let ctx = json!({ "mu_min": mu_min, "mu_max": mu_max, "step": step });
    if !(0.0..=1.0).contains(&mu_min) || !(0.0..=1.0).contains(&mu_max) || !(mu_min <= mu_max) {
        return Err(CliError::usage("mass fractions must satisfy 0 <= mu-min <= mu-max <= 1", ctx));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::usage("step must be positive", ctx));
    }
    if (mu_max - mu_min) / step > 1e5 {
        return Err(CliError::usage("step too small: more than 1e5 rows", ctx));
    }
    Ok(entangle::mu_grid(mu_min, mu_max, step))
}

fn check_tol(tol: f64) -> Result<(), CliError> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage("tolerance must lie in (0, 1)", json!({ "tol": tol })))
    }
}

fn check_mu1(mu1: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&mu1) {
        Ok(())
    } else {
        Err(CliError::usage("mu1 must lie in [0, 1]", json!({ "mu1": mu1 })))
    }
}

fn check_grid(grid: usize) -> Result<(), CliError> {
    if (purity_oracle::MIN_SWEEP_GRID..=96).contains(&grid) {
        Ok(())
    } else {
        Err(CliError::usage(
            format!("grid must lie in [{}, 96]", purity_oracle::MIN_SWEEP_GRID),
            json!({ "grid": grid }),
        ))
    }
}

#[derive(Serialize)]
struct MeshLevel {
    mesh_n: usize,
    mesh_points: usize,
    inv_a: f64,
    condition_number: f64,
}

#[derive(Serialize)]
struct ScatlenReport {
    inv_a: f64,
    condition_number: f64,
    /// Radial-oracle prediction in the trace-formula convention,
    /// `2m (ln(1/a_std) + offset)`; null for non-radial potentials.
    oracle_inv_a: Option<f64>,
    oracle_a_std: Option<f64>,
    oracle_note: Option<String>,
    convention_offset: f64,
    mass_reduced: f64,
    mesh_levels: Vec<MeshLevel>,
}

/// Execute one parsed command.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Table {
            mu_min,
            mu_max,
            step,
            tol,
            format,
            out,
        } => {
            let grid = check_mu_range(mu_min, mu_max, step)?;
            check_tol(tol)?;
            let rows = entangle::table(&grid, tol)?;
            let text = match format {
                TableFormat::Csv => table_csv(&rows),
                TableFormat::Json => to_json(&rows),
            };
            emit(&out, &text, stdout)
        }
        Command::Coeff { mu1, tol, out } => {
            check_mu1(mu1)?;
            check_tol(tol)?;
            let row = entangle::coeff_e(mu1, tol)?;
            emit(&out, &to_json(&row), stdout)
        }
        Command::Figure {
            mu_min,
            mu_max,
            step,
            tol,
            out,
            csv,
        } => {
            let grid = check_mu_range(mu_min, mu_max, step)?;
            check_tol(tol)?;
            if grid.len() < 2 {
                return Err(CliError::usage("figure needs at least two points", json!({ "points": grid.len() })));
            }
            let csv_path = csv.unwrap_or_else(|| out.with_extension("csv"));
            let rows = entangle::table(&grid, tol)?;
            write_atomic(&csv_path, table_csv(&rows).as_bytes())?;
            write_atomic(&out, figure_svg(&rows).as_bytes())
        }
        Command::PuritySweep {
            mu1,
            sigmas,
            grid,
            inv_a,
            out,
        } => {
            check_mu1(mu1)?;
            check_grid(grid)?;
            let ctx = json!({ "sigmas": sigmas });
            if sigmas.iter().any(|&s| !(s > 0.0 && s < 1e-3)) {
                return Err(CliError::usage("every sigma must lie in (0, 1e-3)", ctx));
            }
            if sigmas.windows(2).any(|w| w[1] >= w[0]) {
                return Err(CliError::usage("sigmas must be strictly decreasing", ctx));
            }
            if !inv_a.is_finite() {
                return Err(CliError::usage("inv-a must be finite", json!({ "inv_a": inv_a })));
            }
            let report = purity_oracle::estimate_e_from_sweep(mu1, &sigmas, grid, inv_a)?;
            emit(&out, &to_json(&report), stdout)
        }
        Command::P0Check {
            mu1,
            sigma,
            ratios,
            grid,
            out,
        } => {
            check_mu1(mu1)?;
            check_grid(grid)?;
            if !(sigma > 0.0 && sigma < 1e-4) {
                return Err(CliError::usage("sigma must lie in (0, 1e-4)", json!({ "sigma": sigma })));
            }
            if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(CliError::usage("ratios must lie in [0, 1]", json!({ "ratios": ratios })));
            }
            let rows = purity_oracle::p0_deviation(mu1, sigma, &ratios, grid)?;
            let report = json!({ "mu1": mu1, "sigma": sigma, "grid_n": grid, "entries": rows });
            emit(&out, &to_json(&report), stdout)
        }
        Command::Scatlen {
            potential,
            mesh,
            mass,
            r_max,
            out,
        } => {
            if mesh.is_empty() || mesh.iter().any(|&n| !(smatrix::MIN_MESH_N..=64).contains(&n)) {
                return Err(CliError::usage(
                    format!("mesh sizes must lie in [{}, 64]", smatrix::MIN_MESH_N),
                    json!({ "mesh": mesh }),
                ));
            }
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(CliError::usage("mass must be positive", json!({ "mass": mass })));
            }
            let spec = PotentialSpec::from_file(&potential)?;
            let r_max = r_max.unwrap_or(10.0 * spec.support_radius);
            if !(r_max > 4.0 * spec.support_radius) {
                return Err(CliError::usage(
                    "r-max must exceed 4 x support_radius",
                    json!({ "r_max": r_max, "support_radius": spec.support_radius }),
                ));
            }
            let mut levels = Vec::with_capacity(mesh.len());
            for &n in &mesh {
                let kernels = smatrix::assemble_zero_energy_kernels(&spec, n, mass)?;
                let a = smatrix::analyze_zero_energy(&kernels)?;
                levels.push(MeshLevel {
                    mesh_n: n,
                    mesh_points: a.mesh_points,
                    inv_a: a.inv_a,
                    condition_number: a.condition_number,
                });
            }
            let (oracle_inv_a, oracle_a_std, oracle_note) = if spec.is_radial() {
                match smatrix::radial_log_scattering_length(&spec, mass, r_max) {
                    Ok(ln_a) => (Some(2.0 * mass * (-ln_a + CONVENTION_OFFSET)), Some(ln_a.exp()), None),
                    Err(e) => (None, None, Some(e.to_string())),
                }
            } else {
                (None, None, Some("potential is not radially symmetric".into()))
            };
            let finest = levels.last().expect("mesh list is non-empty");
            let report = ScatlenReport {
                inv_a: finest.inv_a,
                condition_number: finest.condition_number,
                oracle_inv_a,
                oracle_a_std,
                oracle_note,
                convention_offset: CONVENTION_OFFSET,
                mass_reduced: mass,
                mesh_levels: levels,
            };
            emit(&out, &to_json(&report), stdout)
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit
/// status. Usage and help text go to `stdout`; errors go to `stderr` as JSON.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{}", e.render());
                return 0;
            }
            let err = CliError::usage(e.render().to_string().trim().to_string(), json!({ "clap_kind": format!("{:?}", e.kind()) }));
            let _ = writeln!(stderr, "{}", err.to_json());
            return err.exit;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(err) => {
            let _ = writeln!(stderr, "{}", err.to_json());
            err.exit
        }
    }
}
