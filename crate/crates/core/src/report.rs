//! Plain-text artifacts: CSV tables with `# key = value` metadata headers
//! and JSON summaries. The formats are the cross-checking contract for any
//! alternate implementation, so values are written in full precision.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::mesh::Field;
use crate::operators::OperatorMatrix;
use crate::scenarios::SweepReport;
use crate::sharmonic::SHarmonicFit;
use crate::spectral::BranchingCurve;
use crate::stability::MismatchCertificate;
use crate::steady::SteadyState;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Field values with node coordinates, one row per node.
pub fn write_field_csv(path: &Path, field: &Field, metadata: &[(&str, String)]) -> Result<()> {
    let mut w = create(path)?;
    for (k, v) in metadata {
        writeln!(w, "# {k} = {v}")?;
    }
    let grid = field.grid();
    if grid.dim() == 1 {
        writeln!(w, "x,value")?;
        for (i, v) in field.values().iter().enumerate() {
            writeln!(w, "{:.17e},{:.17e}", grid.coord(i)[0], v)?;
        }
    } else {
        writeln!(w, "x,y,value")?;
        for (i, v) in field.values().iter().enumerate() {
            let c = grid.coord(i);
            writeln!(w, "{:.17e},{:.17e},{:.17e}", c[0], c[1], v)?;
        }
    }
    Ok(())
}

/// Steady state as CSV with solver metadata in the header.
pub fn write_steady_csv(
    path: &Path,
    state: &SteadyState,
    s: f64,
    sigma_descriptor: &str,
) -> Result<()> {
    write_field_csv(
        path,
        &state.field,
        &[
            ("s", format!("{s}")),
            ("sigma", sigma_descriptor.to_string()),
            ("residual", format!("{:.6e}", state.residual)),
            ("energy", format!("{:.17e}", state.energy.total)),
            ("nontrivial", format!("{}", state.nontrivial)),
        ],
    )
}

/// Branching curve samples: `tau,excess` with the ball and bracket up top.
pub fn write_branching_csv(path: &Path, curve: &BranchingCurve, s_prime: Option<f64>) -> Result<()> {
    let mut w = create(path)?;
    if let (Some(c), Some(r)) = (curve.center, curve.radius) {
        writeln!(w, "# x0 = {:?}", c)?;
        writeln!(w, "# r = {r}")?;
    }
    if let Some(sp) = s_prime {
        writeln!(w, "# s_prime = {sp}")?;
    }
    writeln!(w, "# threshold = {:.17e}", curve.threshold)?;
    writeln!(w, "# bracket = [{:.17e}, {:.17e}]", curve.bracket.0, curve.bracket.1)?;
    writeln!(w, "tau,excess")?;
    for (tau, e) in &curve.samples {
        writeln!(w, "{tau:.17e},{e:.17e}")?;
    }
    Ok(())
}

/// Sweep rows: `tau,sup_u,L3_u,excess,gap,threshold,certified`.
pub fn write_sweep_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# x0 = {:?}", report.x0)?;
    writeln!(w, "# r = {}", report.r)?;
    writeln!(w, "# s = {}", report.s)?;
    writeln!(w, "# s_prime = {}", report.s_prime)?;
    writeln!(w, "# taubar = {:.17e}", report.taubar.threshold)?;
    writeln!(w, "# tau_star = {:.17e}", report.tau_star.value)?;
    writeln!(w, "# r_bound = {:.17e}", report.r_bound)?;
    writeln!(w, "# r_admissible = {}", report.r_admissible)?;
    writeln!(w, "tau,sup_u,L3_u,excess,gap,threshold,certified")?;
    for row in &report.rows {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            row.tau,
            row.sup_u,
            row.l3_cubed.powf(1.0 / 3.0),
            row.excess,
            row.gap,
            row.threshold,
            row.certified
        )?;
    }
    Ok(())
}

/// Certificate as JSON: `{x0, r, gap, threshold, satisfied, Q, lambda, s}`.
pub fn write_certificate_json(path: &Path, certificate: &MismatchCertificate) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, certificate)
        .map_err(|e| crate::Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

/// Trajectory diagnostics: `t,L2_u,L2_v,max_u,max_v,energy_u`.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,L2_u,L2_v,max_u,max_v,energy_u")?;
    for d in &trajectory.diagnostics {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            d.t, d.l2_u, d.l2_v, d.max_u, d.max_v, d.energy_u
        )?;
    }
    Ok(())
}

/// Fit values over the collar box plus a JSON summary next to it.
pub fn write_fit_csv(path: &Path, fit: &SHarmonicFit) -> Result<()> {
    write_field_csv(
        path,
        &fit.solution,
        &[
            ("s", format!("{}", fit.s)),
            ("R", format!("{}", fit.r_outer)),
            ("misfit", format!("{:.6e}", fit.misfit_sup)),
            ("rho", format!("{:.6e}", fit.rho)),
        ],
    )
}

/// JSON summary of a fit: `{s, R, misfit, rho}`.
pub fn write_fit_summary_json(path: &Path, fit: &SHarmonicFit) -> Result<()> {
    let mut w = create(path)?;
    let value = serde_json::json!({
        "s": fit.s,
        "R": fit.r_outer,
        "misfit": fit.misfit_sup,
        "rho": fit.rho,
        "harmonicity_residual": fit.harmonicity_residual,
    });
    serde_json::to_writer_pretty(&mut w, &value).map_err(|e| crate::Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

/// Matrix dump in plain-text triplet format for external verification.
pub fn write_matrix_triplets(path: &Path, op: &OperatorMatrix) -> Result<()> {
    let mut w = create(path)?;
    op.write_triplets(&mut w)?;
    Ok(())
}
