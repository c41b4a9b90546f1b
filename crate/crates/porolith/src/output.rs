//! Deterministic output writers: convergence CSV, coarse-property CSV,
//! legacy-text VTK structured-points snapshots and the run summary.
//!
//! Every floating-point value is serialized with 17 significant digits so a
//! replayed run produces byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::RunConfig;
use crate::coupling::{ConvergenceRecord, Problem, RunSummary};
use crate::error::{Error, Result};
use crate::flow::FlowState;
use crate::grids::{HexGrid, NestedGridPair};
use crate::materials::{bulk_modulus_bounds, CoarseMaterialField, EtaRule, FineMaterialField};
use crate::mech::MechState;

/// 17-significant-digit serialization: exact round trips for f64.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Per-iteration log: step, iter, weighted_norm, ratio, c1_gap, c2_gap.
/// The ratio column is empty on each step's first iteration.
pub fn write_convergence_csv(path: &Path, records: &[ConvergenceRecord]) -> Result<()> {
    let mut s = String::from("step,iter,weighted_norm,ratio,c1_gap,c2_gap\n");
    for r in records {
        let ratio = r.ratio.map(fmt_float).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.step,
            r.iter,
            fmt_float(r.weighted_norm),
            ratio,
            fmt_float(r.c1_gap),
            fmt_float(r.c2_gap)
        );
    }
    write_file(path, &s)
}

/// Upscaled coarse coefficients next to the Reuss/Voigt bracket of each cell.
pub fn write_coarse_materials_csv(
    path: &Path,
    pair: &NestedGridPair,
    fine: &FineMaterialField,
    coarse: &CoarseMaterialField,
) -> Result<()> {
    let bounds = bulk_modulus_bounds(pair, fine);
    let mut s =
        String::from("cell,eta_p,k_b_p,g_p,alpha_p,lambda_p,k_b_harmonic,k_b_arithmetic\n");
    for (cell, &(harm, arith)) in bounds.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            cell,
            fmt_float(coarse.eta[cell]),
            fmt_float(coarse.k_b[cell]),
            fmt_float(coarse.g[cell]),
            fmt_float(coarse.alpha[cell]),
            fmt_float(coarse.lambda[cell]),
            fmt_float(harm),
            fmt_float(arith)
        );
    }
    write_file(path, &s)
}

fn vtk_header(grid: &HexGrid, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", grid.nx + 1, grid.ny + 1, grid.nz + 1);
    let _ = writeln!(
        s,
        "ORIGIN {} {} {}",
        fmt_float(grid.origin[0]),
        fmt_float(grid.origin[1]),
        fmt_float(grid.origin[2])
    );
    let _ = writeln!(
        s,
        "SPACING {} {} {}",
        fmt_float(grid.hx),
        fmt_float(grid.hy),
        fmt_float(grid.hz)
    );
    s
}

fn push_scalars(s: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(s, "SCALARS {name} double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for v in values {
        let _ = writeln!(s, "{}", fmt_float(*v));
    }
}

/// Fine-grid snapshot: cellwise pressure.
pub fn write_vtk_fine(path: &Path, grid: &HexGrid, p: &[f64]) -> Result<()> {
    let mut s = vtk_header(grid, "fine-grid flow state");
    let _ = writeln!(s, "CELL_DATA {}", grid.n_cells());
    push_scalars(&mut s, "pressure", p);
    write_file(path, &s)
}

/// Coarse-grid snapshot: cellwise volumetric strain plus nodal displacement
/// magnitude.
pub fn write_vtk_coarse(path: &Path, grid: &HexGrid, mech: &MechState) -> Result<()> {
    let mut s = vtk_header(grid, "coarse-grid poromechanics state");
    let _ = writeln!(s, "CELL_DATA {}", grid.n_cells());
    push_scalars(&mut s, "volumetric_strain", &mech.eps_v);
    let _ = writeln!(s, "POINT_DATA {}", grid.n_nodes());
    let mag: Vec<f64> = mech
        .u
        .iter()
        .map(|u| (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt())
        .collect();
    push_scalars(&mut s, "displacement_magnitude", &mag);
    write_file(path, &s)
}

/// One snapshot pair per accepted step: `fields_NNN.vtk` (fine grid) and
/// `fields_NNN_coarse.vtk` (coarse grid).
pub fn write_fields_snapshot(
    dir: &Path,
    step: usize,
    pair: &NestedGridPair,
    flow: &FlowState,
    mech: &MechState,
) -> Result<()> {
    write_vtk_fine(&dir.join(format!("fields_{step:03}.vtk")), &pair.fine, &flow.p)?;
    write_vtk_coarse(&dir.join(format!("fields_{step:03}_coarse.vtk")), &pair.coarse, mech)
}

/// Human-readable run summary: γ, worst observed ratio, iteration counts and
/// the effective-moduli table with its Reuss/Voigt bracket.
pub fn write_summary(
    path: &Path,
    config: &RunConfig,
    problem: &Problem,
    summary: &RunSummary,
) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "porolith run summary");
    let _ = writeln!(s, "====================");
    let _ = writeln!(s, "eta rule: {}", config.eta_rule.describe());
    if let EtaRule::Voigt = config.eta_rule {
        let _ = writeln!(
            s,
            "note: the voigt identification eta = 1/K_b carries units 1/Pa; it is \
             applied formally and only the upper decoupling bound eta <= 2 K_b is enforced"
        );
    }
    let _ = writeln!(s, "contraction constant gamma: {}", fmt_float(summary.gamma));
    let _ = writeln!(s, "worst observed norm ratio:  {}", fmt_float(summary.worst_ratio));
    let _ = writeln!(s, "steps completed: {}", summary.steps_completed);
    let _ = writeln!(s, "total coupling iterations: {}", summary.total_iterations);
    let _ = writeln!(
        s,
        "iterations per step: {}",
        summary
            .step_iterations
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(
        s,
        "worst relative global mass imbalance: {}",
        fmt_float(summary.worst_mass_residual)
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "effective coarse moduli (Pa), bracketed by the Reuss (harmonic)");
    let _ = writeln!(s, "and Voigt (arithmetic) bounds of the child bulk moduli:");
    let _ = writeln!(s, "cell  harmonic  effective  arithmetic");
    let bounds = bulk_modulus_bounds(&problem.pair, &problem.fine);
    for (cell, &(harm, arith)) in bounds.iter().enumerate() {
        let _ = writeln!(
            s,
            "{cell}  {}  {}  {}",
            fmt_float(harm),
            fmt_float(problem.coarse.k_b[cell]),
            fmt_float(arith)
        );
    }
    write_file(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for &x in &[0.0, 1.0, -1.5e-13, 2.0 / 3.0, 1.23456789e9, f64::MIN_POSITIVE] {
            let s = fmt_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn empty_history_writes_header_only() {
        let dir = std::env::temp_dir().join("porolith_output_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("convergence.csv");
        write_convergence_csv(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "step,iter,weighted_norm,ratio,c1_gap,c2_gap\n");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn vtk_snapshot_has_expected_counts() {
        use crate::grids::{build_box_grid, BoundaryTag};
        let grid = build_box_grid(2, 3, 1, [1.0, 1.0, 1.0], [BoundaryTag::NoFlux; 6]).unwrap();
        let dir = std::env::temp_dir().join("porolith_vtk_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.vtk");
        write_vtk_fine(&path, &grid, &vec![1.5; grid.n_cells()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("DIMENSIONS 3 4 2"));
        assert!(text.contains("CELL_DATA 6"));
        assert_eq!(text.lines().filter(|l| *l == fmt_float(1.5)).count(), 6);
        std::fs::remove_dir_all(&dir).ok();
    }
}
