//! Fine-grid flow step with the decoupling constraint folded in.
//!
//! The mixed statement pairs piecewise-constant cell pressures with one
//! constant normal-flux degree of freedom per face. Vertex-quadrature lumping
//! of the κ⁻¹-weighted face mass matrix decouples the face equations, so the
//! fluxes can be eliminated cellwise: what remains is the classical two-point
//! scheme with distance-weighted harmonic interface transmissibilities, an
//! SPD system in the pressures alone. Fluxes are recovered facewise after the
//! pressure solve, which keeps the face equation satisfied exactly.
//!
//! Backward Euler in time with storage φ = 1/M + α²/η and the constraint
//! load -(α/η)(σ̄ from the previous coupling iterate minus σ̄ at the last
//! time level) on the right-hand side.

use crate::error::{Error, Result};
use crate::grids::{BoundaryTag, BoxFace, HexGrid};
use crate::linalg::{cg_solve, SparseSymMatrix};
use crate::materials::FineMaterialField;

/// Boundary condition on one box face of the flow grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceFlowBc {
    /// Prescribed boundary pressure g (Pa).
    Dirichlet(f64),
    /// Zero normal flux.
    NoFlux,
}

/// Flow boundary data: per-face conditions plus the gravity vector.
#[derive(Debug, Clone)]
pub struct FlowBc {
    pub faces: [FaceFlowBc; 6],
    pub gravity: [f64; 3],
}

impl FlowBc {
    pub fn no_flux() -> Self {
        FlowBc { faces: [FaceFlowBc::NoFlux; 6], gravity: [0.0; 3] }
    }

    pub fn face(&self, f: BoxFace) -> FaceFlowBc {
        self.faces[f.index()]
    }

    /// Boundary tags consistent with these conditions, for grid construction.
    pub fn tags(&self) -> [BoundaryTag; 6] {
        let mut tags = [BoundaryTag::NoFlux; 6];
        for f in BoxFace::ALL {
            if let FaceFlowBc::Dirichlet(_) = self.face(f) {
                tags[f.index()] = BoundaryTag::PressureDirichlet;
            }
        }
        tags
    }
}

/// Pressures per fine cell and normal fluxes per fine face.
///
/// Flux degrees of freedom are oriented along the positive axis of the face
/// normal and are exactly zero on no-flux boundary faces.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub p: Vec<f64>,
    pub flux: Vec<f64>,
    /// Pressure at the last accepted time level.
    pub p_prev_time: Vec<f64>,
}

impl FlowState {
    pub fn new(grid: &HexGrid, p0: &[f64]) -> Self {
        assert_eq!(p0.len(), grid.n_cells());
        FlowState {
            p: p0.to_vec(),
            flux: vec![0.0; grid.n_faces()],
            p_prev_time: p0.to_vec(),
        }
    }

    /// Accept the current pressures as the new time level.
    pub fn accept_time_level(&mut self) {
        self.p_prev_time.copy_from_slice(&self.p);
    }
}

enum FaceKind {
    Interior { lo: usize, hi: usize },
    Boundary { cell: usize, box_face: BoxFace },
}

struct FaceRef {
    index: usize,
    axis: usize,
    kind: FaceKind,
}

fn for_each_face(grid: &HexGrid, mut visit: impl FnMut(FaceRef)) {
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let kind = if i == 0 {
                    FaceKind::Boundary { cell: grid.cell_index(0, j, k), box_face: BoxFace::XMin }
                } else if i == grid.nx {
                    FaceKind::Boundary {
                        cell: grid.cell_index(grid.nx - 1, j, k),
                        box_face: BoxFace::XMax,
                    }
                } else {
                    FaceKind::Interior {
                        lo: grid.cell_index(i - 1, j, k),
                        hi: grid.cell_index(i, j, k),
                    }
                };
                visit(FaceRef { index: grid.x_face_index(i, j, k), axis: 0, kind });
            }
        }
    }
    for k in 0..grid.nz {
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let kind = if j == 0 {
                    FaceKind::Boundary { cell: grid.cell_index(i, 0, k), box_face: BoxFace::YMin }
                } else if j == grid.ny {
                    FaceKind::Boundary {
                        cell: grid.cell_index(i, grid.ny - 1, k),
                        box_face: BoxFace::YMax,
                    }
                } else {
                    FaceKind::Interior {
                        lo: grid.cell_index(i, j - 1, k),
                        hi: grid.cell_index(i, j, k),
                    }
                };
                visit(FaceRef { index: grid.y_face_index(i, j, k), axis: 1, kind });
            }
        }
    }
    for k in 0..=grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let kind = if k == 0 {
                    FaceKind::Boundary { cell: grid.cell_index(i, j, 0), box_face: BoxFace::ZMin }
                } else if k == grid.nz {
                    FaceKind::Boundary {
                        cell: grid.cell_index(i, j, grid.nz - 1),
                        box_face: BoxFace::ZMax,
                    }
                } else {
                    FaceKind::Interior {
                        lo: grid.cell_index(i, j, k - 1),
                        hi: grid.cell_index(i, j, k),
                    }
                };
                visit(FaceRef { index: grid.z_face_index(i, j, k), axis: 2, kind });
            }
        }
    }
}

/// Assemble the reduced cell-centered pressure system for one backward-Euler
/// step at the current coupling iterate.
///
/// `sigma_bar_change` is σ̄ at the previous coupling iterate minus σ̄ at the
/// last accepted time level, per fine cell; it is zero on the first iteration
/// of a step. `q` is the volumetric source rate density (1/s) per cell.
pub fn assemble_flow_system(
    grid: &HexGrid,
    fine: &FineMaterialField,
    state: &FlowState,
    sigma_bar_change: &[f64],
    dt: f64,
    q: &[f64],
    bc: &FlowBc,
) -> Result<(SparseSymMatrix, Vec<f64>)> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::Step(format!("time step must be positive and finite, got {dt}")));
    }
    let n = grid.n_cells();
    assert_eq!(fine.n_cells(), n, "material field size mismatch");
    assert_eq!(sigma_bar_change.len(), n);
    assert_eq!(q.len(), n);

    let vol = grid.cell_volume();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(7 * n);
    let mut rhs = vec![0.0; n];

    for cell in 0..n {
        let storage = fine.varphi[cell] * vol;
        triplets.push((cell, cell, storage));
        rhs[cell] += storage * state.p_prev_time[cell] + dt * q[cell] * vol
            - fine.alpha[cell] / fine.eta[cell] * sigma_bar_change[cell] * vol;
    }

    let mut err: Option<Error> = None;
    for_each_face(grid, |f| {
        if err.is_some() {
            return;
        }
        let area = grid.face_area(f.axis);
        let h = grid.spacing(f.axis);
        let g_axis = bc.gravity[f.axis];
        match f.kind {
            FaceKind::Interior { lo, hi } => {
                let k_lo = fine.kappa(lo, f.axis);
                let k_hi = fine.kappa(hi, f.axis);
                if k_lo <= 0.0 || k_hi <= 0.0 {
                    err = Some(Error::InvalidMaterial(format!(
                        "zero hydraulic conductivity at face between cells {lo} and {hi}"
                    )));
                    return;
                }
                // distance-weighted harmonic mean per unit area
                let t = 1.0 / (0.5 * h / k_lo + 0.5 * h / k_hi);
                let ta = t * area;
                triplets.push((lo, lo, dt * ta));
                triplets.push((hi, hi, dt * ta));
                triplets.push((lo, hi, -dt * ta));
                triplets.push((hi, lo, -dt * ta));
                // gravity part of the face flux, oriented along +axis
                let z_g = t * g_axis * h * 0.5 * (fine.rho0[lo] + fine.rho0[hi]);
                rhs[lo] -= dt * z_g * area;
                rhs[hi] += dt * z_g * area;
            }
            FaceKind::Boundary { cell, box_face } => match bc.face(box_face) {
                FaceFlowBc::NoFlux => {}
                FaceFlowBc::Dirichlet(g_d) => {
                    let kappa = fine.kappa(cell, f.axis);
                    if kappa <= 0.0 {
                        err = Some(Error::InvalidMaterial(format!(
                            "zero hydraulic conductivity at Dirichlet face of cell {cell}"
                        )));
                        return;
                    }
                    let t_half = 2.0 * kappa / h;
                    let ta = t_half * area;
                    let s = box_face.outward_sign();
                    triplets.push((cell, cell, dt * ta));
                    rhs[cell] += dt * ta * g_d;
                    // outward gravity flux s * kappa * rho0 * g_axis * area
                    rhs[cell] -= dt * s * kappa * fine.rho0[cell] * g_axis * area;
                }
            },
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    Ok((SparseSymMatrix::from_triplets(n, triplets), rhs))
}

/// Recover facewise normal fluxes (m/s, oriented along the positive axis)
/// from a pressure field. No-flux faces carry exactly zero.
pub fn recover_fluxes(
    grid: &HexGrid,
    fine: &FineMaterialField,
    p: &[f64],
    bc: &FlowBc,
) -> Vec<f64> {
    let mut flux = vec![0.0; grid.n_faces()];
    for_each_face(grid, |f| {
        let h = grid.spacing(f.axis);
        let g_axis = bc.gravity[f.axis];
        flux[f.index] = match f.kind {
            FaceKind::Interior { lo, hi } => {
                let k_lo = fine.kappa(lo, f.axis);
                let k_hi = fine.kappa(hi, f.axis);
                let t = 1.0 / (0.5 * h / k_lo + 0.5 * h / k_hi);
                t * (p[lo] - p[hi] + g_axis * h * 0.5 * (fine.rho0[lo] + fine.rho0[hi]))
            }
            FaceKind::Boundary { cell, box_face } => match bc.face(box_face) {
                FaceFlowBc::NoFlux => 0.0,
                FaceFlowBc::Dirichlet(g_d) => {
                    let kappa = fine.kappa(cell, f.axis);
                    let s = box_face.outward_sign();
                    s * (2.0 * kappa / h) * (p[cell] - g_d)
                        + kappa * fine.rho0[cell] * g_axis
                }
            },
        };
    });
    flux
}

/// One flow solve at the current coupling iterate: updates `state.p` and
/// recovers the face fluxes. σ̄ itself is untouched here.
#[allow(clippy::too_many_arguments)]
pub fn solve_flow_step(
    grid: &HexGrid,
    fine: &FineMaterialField,
    state: &mut FlowState,
    sigma_bar_change: &[f64],
    dt: f64,
    q: &[f64],
    bc: &FlowBc,
    solver_tol: f64,
    solver_max_iter: usize,
) -> Result<()> {
    let (a, b) = assemble_flow_system(grid, fine, state, sigma_bar_change, dt, q, bc)?;
    let sol = cg_solve(&a, &b, solver_tol, solver_max_iter)?;
    state.p = sol.x;
    state.flux = recover_fluxes(grid, fine, &state.p, bc);
    Ok(())
}

/// Fluid content per fine cell, ζ = p/M + α ε̄, with ε̄ the prolonged
/// volumetric strain on the fine grid.
pub fn fluid_content(fine: &FineMaterialField, p: &[f64], eps_fine: &[f64]) -> Vec<f64> {
    (0..fine.n_cells())
        .map(|c| p[c] / fine.m[c] + fine.alpha[c] * eps_fine[c])
        .collect()
}

/// Per-cell mass-balance residual
/// φ Δp Meas + Δt (net outward face flux) - Δt q Meas + (α/η) Δσ̄ Meas.
/// Near zero for a converged solve.
pub fn mass_balance_residual(
    grid: &HexGrid,
    fine: &FineMaterialField,
    p_old: &[f64],
    state: &FlowState,
    sigma_bar_change: &[f64],
    dt: f64,
    q: &[f64],
) -> Vec<f64> {
    let n = grid.n_cells();
    let vol = grid.cell_volume();
    let mut res = vec![0.0; n];
    for cell in 0..n {
        res[cell] = fine.varphi[cell] * (state.p[cell] - p_old[cell]) * vol
            - dt * q[cell] * vol
            + fine.alpha[cell] / fine.eta[cell] * sigma_bar_change[cell] * vol;
    }
    for_each_face(grid, |f| {
        let area = grid.face_area(f.axis);
        let z = state.flux[f.index];
        match f.kind {
            FaceKind::Interior { lo, hi } => {
                res[lo] += dt * z * area;
                res[hi] -= dt * z * area;
            }
            FaceKind::Boundary { cell, box_face } => {
                res[cell] += dt * box_face.outward_sign() * z * area;
            }
        }
    });
    res
}

/// Global mass statement: summing the per-cell residuals telescopes interior
/// fluxes, leaving storage + boundary flux - source + constraint terms.
/// Returns (imbalance, scale of the participating terms).
pub fn global_mass_residual(
    grid: &HexGrid,
    fine: &FineMaterialField,
    p_old: &[f64],
    state: &FlowState,
    sigma_bar_change: &[f64],
    dt: f64,
    q: &[f64],
) -> (f64, f64) {
    let vol = grid.cell_volume();
    let mut imbalance = 0.0;
    let mut scale = 0.0f64;
    for cell in 0..grid.n_cells() {
        let storage = fine.varphi[cell] * (state.p[cell] - p_old[cell]) * vol;
        let source = dt * q[cell] * vol;
        let constraint = fine.alpha[cell] / fine.eta[cell] * sigma_bar_change[cell] * vol;
        imbalance += storage - source + constraint;
        scale += storage.abs() + source.abs() + constraint.abs();
    }
    for_each_face(grid, |f| {
        if let FaceKind::Boundary { cell: _, box_face } = f.kind {
            let outflow = dt * box_face.outward_sign() * state.flux[f.index] * grid.face_area(f.axis);
            imbalance += outflow;
            scale += outflow.abs();
        }
    });
    (imbalance, scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::build_box_grid;
    use crate::materials::{derive_fine_coefficients, EtaRule, MaterialConstants, RawMaterialField};

    fn uniform_field(n: usize, consts: &MaterialConstants, rule: EtaRule) -> FineMaterialField {
        derive_fine_coefficients(RawMaterialField::uniform(n, consts, rule)).unwrap()
    }

    fn decoupled_constants() -> MaterialConstants {
        // K_b = K_s so alpha = 0; c chosen to keep 1/M positive
        MaterialConstants {
            k_b: 1e9,
            k_s: 1e9,
            g: 5e8,
            phi0: 0.2,
            c: 1e-8,
            mu: 1e-3,
            perm: [1e-13; 3],
            rho0: 1000.0,
            rho_r: 2700.0,
        }
    }

    #[test]
    fn single_cell_source_closed_form() {
        let grid = build_box_grid(1, 1, 1, [1.0, 1.0, 1.0], FlowBc::no_flux().tags()).unwrap();
        let fine = uniform_field(1, &decoupled_constants(), EtaRule::FixedStress);
        let mut state = FlowState::new(&grid, &[0.0]);
        let q = 1e-6;
        let dt = 100.0;
        solve_flow_step(&grid, &fine, &mut state, &[0.0], dt, &[q], &FlowBc::no_flux(), 1e-14, 0)
            .unwrap();
        let expected = fine.m[0] * q * dt; // alpha = 0 so varphi = 1/M
        assert!((state.p[0] - expected).abs() / expected < 1e-12);
    }

    #[test]
    fn equilibrium_is_stationary() {
        let grid = build_box_grid(3, 2, 2, [1.0, 1.0, 1.0], FlowBc::no_flux().tags()).unwrap();
        let n = grid.n_cells();
        let fine = uniform_field(n, &decoupled_constants(), EtaRule::FixedStress);
        let p0 = vec![5e6; n];
        let mut state = FlowState::new(&grid, &p0);
        solve_flow_step(
            &grid,
            &fine,
            &mut state,
            &vec![0.0; n],
            10.0,
            &vec![0.0; n],
            &FlowBc::no_flux(),
            1e-13,
            0,
        )
        .unwrap();
        for cell in 0..n {
            assert!((state.p[cell] - 5e6).abs() < 1e-6);
        }
        assert!(state.flux.iter().all(|&z| z.abs() < 1e-18));
    }

    #[test]
    fn two_cell_steady_darcy_flux() {
        // Dirichlet 1 on the left, 0 on the right, steady limit: z = kappa dP / L
        let mut bc = FlowBc::no_flux();
        bc.faces[BoxFace::XMin.index()] = FaceFlowBc::Dirichlet(1.0);
        bc.faces[BoxFace::XMax.index()] = FaceFlowBc::Dirichlet(0.0);
        let grid = build_box_grid(2, 1, 1, [1.0, 1.0, 1.0], bc.tags()).unwrap();
        let consts = MaterialConstants {
            k_b: 1e9,
            k_s: 1e9,
            g: 5e8,
            phi0: 0.2,
            c: 1e-8,
            mu: 1.0,
            perm: [2.0; 3], // kappa = K/mu = 2
            rho0: 0.0,
            rho_r: 0.0,
        };
        let fine = uniform_field(2, &consts, EtaRule::FixedStress);
        let mut state = FlowState::new(&grid, &[0.0, 0.0]);
        solve_flow_step(&grid, &fine, &mut state, &[0.0; 2], 1e12, &[0.0; 2], &bc, 1e-14, 0)
            .unwrap();
        assert!((state.p[0] - 0.75).abs() < 1e-9);
        assert!((state.p[1] - 0.25).abs() < 1e-9);
        let interface = grid.x_face_index(1, 0, 0);
        let expected = 2.0 * (1.0 - 0.0) / 1.0;
        assert!((state.flux[interface] - expected).abs() / expected < 1e-9);
        // no-flux boundary faces carry exactly zero while flow crosses in x
        for i in 0..grid.nx {
            assert_eq!(state.flux[grid.y_face_index(i, 0, 0)], 0.0);
            assert_eq!(state.flux[grid.y_face_index(i, 1, 0)], 0.0);
            assert_eq!(state.flux[grid.z_face_index(i, 0, 0)], 0.0);
            assert_eq!(state.flux[grid.z_face_index(i, 0, 1)], 0.0);
        }
    }

    #[test]
    fn hydrostatic_field_is_a_discrete_equilibrium() {
        // p = p_top + rho g (z_top - z) balances the gravity flux exactly
        let mut bc = FlowBc::no_flux();
        bc.gravity = [0.0, 0.0, -9.81];
        let p_top = 1.0e5;
        let rho = 1000.0;
        let grid = build_box_grid(2, 2, 4, [1.0, 1.0, 4.0], bc.tags()).unwrap();
        let n = grid.n_cells();
        let consts = MaterialConstants {
            k_b: 1e9,
            k_s: 1e9,
            g: 5e8,
            phi0: 0.2,
            c: 1e-8,
            mu: 1e-3,
            perm: [1e-13; 3],
            rho0: rho,
            rho_r: 2700.0,
        };
        let fine = uniform_field(n, &consts, EtaRule::FixedStress);
        let p0: Vec<f64> = (0..n)
            .map(|cell| p_top + rho * 9.81 * (4.0 - grid.cell_center(cell)[2]))
            .collect();
        let mut state = FlowState::new(&grid, &p0);
        solve_flow_step(
            &grid,
            &fine,
            &mut state,
            &vec![0.0; n],
            1000.0,
            &vec![0.0; n],
            &bc,
            1e-13,
            0,
        )
        .unwrap();
        for cell in 0..n {
            assert!((state.p[cell] - p0[cell]).abs() <= 1e-8 * p0[cell]);
        }
        assert!(state.flux.iter().all(|&z| z.abs() < 1e-16));
    }

    #[test]
    fn zero_conductivity_is_an_assembly_error() {
        let grid = build_box_grid(2, 1, 1, [1.0, 1.0, 1.0], FlowBc::no_flux().tags()).unwrap();
        let mut fine = uniform_field(2, &decoupled_constants(), EtaRule::FixedStress);
        fine.kappa_x[1] = 0.0;
        let state = FlowState::new(&grid, &[0.0; 2]);
        let out = assemble_flow_system(
            &grid,
            &fine,
            &state,
            &[0.0; 2],
            1.0,
            &[0.0; 2],
            &FlowBc::no_flux(),
        );
        assert!(matches!(out, Err(Error::InvalidMaterial(_))));
    }

    #[test]
    fn fluid_content_reconstruction() {
        let fine = uniform_field(2, &decoupled_constants(), EtaRule::FixedStress);
        // alpha = 0: content reduces to p/M
        let zeta = fluid_content(&fine, &[1e6, 2e6], &[0.1, 0.2]);
        assert!((zeta[0] - 1e6 / fine.m[0]).abs() < 1e-12);
        assert!((zeta[1] - 2e6 / fine.m[1]).abs() < 1e-12);
    }

    #[test]
    fn single_cell_constraint_load_closed_form() {
        let grid = build_box_grid(1, 1, 1, [1.0, 1.0, 1.0], FlowBc::no_flux().tags()).unwrap();
        let consts = MaterialConstants {
            k_b: 1e9,
            k_s: 2e9,
            g: 5e8,
            phi0: 0.2,
            c: 4e-10,
            mu: 1e-3,
            perm: [1e-13; 3],
            rho0: 1000.0,
            rho_r: 2700.0,
        };
        let fine = uniform_field(1, &consts, EtaRule::FixedStress);
        let mut state = FlowState::new(&grid, &[0.0]);
        let s = 2.5e5;
        solve_flow_step(&grid, &fine, &mut state, &[s], 50.0, &[0.0], &FlowBc::no_flux(), 1e-14, 0)
            .unwrap();
        let expected = -fine.alpha[0] * s / (fine.eta[0] * fine.varphi[0]);
        assert!((state.p[0] - expected).abs() / expected.abs() < 1e-12);
    }

    #[test]
    fn residual_vanishes_after_solve() {
        let mut bc = FlowBc::no_flux();
        bc.faces[BoxFace::ZMax.index()] = FaceFlowBc::Dirichlet(2e6);
        bc.gravity = [0.0, 0.0, -9.81];
        let grid = build_box_grid(3, 3, 3, [10.0, 10.0, 10.0], bc.tags()).unwrap();
        let n = grid.n_cells();
        let consts = MaterialConstants {
            k_b: 1e9,
            k_s: 2e9,
            g: 5e8,
            phi0: 0.2,
            c: 4e-10,
            mu: 1e-3,
            perm: [1e-13, 2e-13, 5e-14],
            rho0: 1000.0,
            rho_r: 2700.0,
        };
        let fine = uniform_field(n, &consts, EtaRule::FixedStress);
        let p0 = vec![1e6; n];
        let mut state = FlowState::new(&grid, &p0);
        let q: Vec<f64> = (0..n).map(|i| 1e-8 * ((i % 5) as f64 - 2.0)).collect();
        let dsig: Vec<f64> = (0..n).map(|i| 1e4 * ((i % 7) as f64 - 3.0)).collect();
        let dt = 3600.0;
        solve_flow_step(&grid, &fine, &mut state, &dsig, dt, &q, &bc, 1e-13, 0).unwrap();

        let res = mass_balance_residual(&grid, &fine, &p0, &state, &dsig, dt, &q);
        let scale: f64 = state
            .p
            .iter()
            .zip(&p0)
            .map(|(p, p0)| fine.varphi[0] * (p - p0).abs() * grid.cell_volume())
            .fold(0.0, f64::max);
        let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(worst <= 1e-10 * scale.max(1e-30), "worst residual {worst}, scale {scale}");

        let (imbalance, gscale) = global_mass_residual(&grid, &fine, &p0, &state, &dsig, dt, &q);
        assert!(imbalance.abs() <= 1e-10 * gscale);
    }

    #[test]
    fn zero_states_zero_residual() {
        let grid = build_box_grid(2, 2, 1, [1.0, 1.0, 1.0], FlowBc::no_flux().tags()).unwrap();
        let n = grid.n_cells();
        let fine = uniform_field(n, &decoupled_constants(), EtaRule::FixedStress);
        let state = FlowState::new(&grid, &vec![0.0; n]);
        let res = mass_balance_residual(
            &grid,
            &fine,
            &vec![0.0; n],
            &state,
            &vec![0.0; n],
            1.0,
            &vec![0.0; n],
        );
        assert!(res.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn residual_probe_matches_assembled_operator() {
        let mut bc = FlowBc::no_flux();
        bc.faces[BoxFace::XMin.index()] = FaceFlowBc::Dirichlet(1e6);
        let grid = build_box_grid(3, 2, 2, [3.0, 2.0, 2.0], bc.tags()).unwrap();
        let n = grid.n_cells();
        let consts = MaterialConstants {
            k_b: 1e9,
            k_s: 2e9,
            g: 5e8,
            phi0: 0.2,
            c: 4e-10,
            mu: 1e-3,
            perm: [1e-13; 3],
            rho0: 1000.0,
            rho_r: 2700.0,
        };
        let fine = uniform_field(n, &consts, EtaRule::FixedStress);
        let p0 = vec![1e6; n];
        let dt = 1000.0;
        let q = vec![0.0; n];
        let dsig = vec![0.0; n];
        let mut state = FlowState::new(&grid, &p0);
        solve_flow_step(&grid, &fine, &mut state, &dsig, dt, &q, &bc, 1e-13, 0).unwrap();

        let (a, _) = assemble_flow_system(&grid, &fine, &state, &dsig, dt, &q, &bc).unwrap();
        let base = mass_balance_residual(&grid, &fine, &p0, &state, &dsig, dt, &q);

        let probe_cell = grid.cell_index(1, 1, 1);
        let eps = 10.0;
        let mut perturbed = state.clone();
        perturbed.p[probe_cell] += eps;
        perturbed.flux = recover_fluxes(&grid, &fine, &perturbed.p, &bc);
        let probed = mass_balance_residual(&grid, &fine, &p0, &perturbed, &dsig, dt, &q);

        let mut unit = vec![0.0; n];
        unit[probe_cell] = eps;
        let mut col = vec![0.0; n];
        a.matvec(&unit, &mut col);
        for cell in 0..n {
            let change = probed[cell] - base[cell];
            assert!(
                (change - col[cell]).abs() <= 1e-9 * col[cell].abs().max(1.0),
                "cell {cell}: probe {change} vs operator {}",
                col[cell]
            );
        }
        // storage contribution dominates the diagonal, sign-consistent
        assert!(probed[probe_cell] - base[probe_cell] >= fine.varphi[probe_cell] * eps * grid.cell_volume());
    }

    #[test]
    fn reduced_matrix_is_spd() {
        let mut bc = FlowBc::no_flux();
        bc.faces[BoxFace::YMax.index()] = FaceFlowBc::Dirichlet(0.0);
        let grid = build_box_grid(3, 3, 2, [1.0, 2.0, 1.5], bc.tags()).unwrap();
        let n = grid.n_cells();
        let consts = decoupled_constants();
        let fine = uniform_field(n, &consts, EtaRule::FixedStress);
        let state = FlowState::new(&grid, &vec![0.0; n]);
        let (a, _) =
            assemble_flow_system(&grid, &fine, &state, &vec![0.0; n], 25.0, &vec![0.0; n], &bc)
                .unwrap();
        assert!(a.symmetry_defect() <= 1e-14 * a.max_abs());
        // Rayleigh quotients on a few deterministic pseudo-random vectors
        for seed in 1..6u64 {
            let x: Vec<f64> = (0..n)
                .map(|i| (((i as u64 + 1) * seed * 2654435761) % 1000) as f64 / 500.0 - 1.0)
                .collect();
            let mut ax = vec![0.0; n];
            a.matvec(&x, &mut ax);
            let rayleigh: f64 = x.iter().zip(&ax).map(|(xi, axi)| xi * axi).sum();
            assert!(rayleigh > 0.0);
        }
    }

    #[test]
    fn alpha_zero_ignores_stress_change() {
        let grid = build_box_grid(2, 2, 2, [1.0, 1.0, 1.0], FlowBc::no_flux().tags()).unwrap();
        let n = grid.n_cells();
        let fine = uniform_field(n, &decoupled_constants(), EtaRule::FixedStress);
        assert!(fine.alpha.iter().all(|&a| a == 0.0));
        let q: Vec<f64> = (0..n).map(|i| 1e-7 * (i as f64)).collect();
        let run = |dsig: Vec<f64>| {
            let mut state = FlowState::new(&grid, &vec![0.0; n]);
            solve_flow_step(&grid, &fine, &mut state, &dsig, 10.0, &q, &FlowBc::no_flux(), 1e-13, 0)
                .unwrap();
            state.p
        };
        let p_zero = run(vec![0.0; n]);
        let p_arbitrary = run((0..n).map(|i| 1e7 * (i as f64 - 3.0)).collect());
        assert_eq!(p_zero, p_arbitrary);
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let grid = build_box_grid(1, 1, 1, [1.0, 1.0, 1.0], FlowBc::no_flux().tags()).unwrap();
        let fine = uniform_field(1, &decoupled_constants(), EtaRule::FixedStress);
        let state = FlowState::new(&grid, &[0.0]);
        let out =
            assemble_flow_system(&grid, &fine, &state, &[0.0], 0.0, &[0.0], &FlowBc::no_flux());
        assert!(matches!(out, Err(Error::Step(_))));
    }
}
