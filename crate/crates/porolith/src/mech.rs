//! Coarse-grid quasi-static momentum balance with trilinear displacements.
//!
//! The operator is assembled in the deviatoric/volumetric split
//! 2G (e(u), e(q)) + K_b (ε̄(u), ε̄(q)); the load carries body force,
//! boundary tractions, the in-situ stress split into deviatoric and
//! volumetric parts, and the restricted pore-pressure term α(p - p₀) ε̄(q).
//! All element integrals use 2x2x2 Gauss quadrature, exact for the
//! trilinear/constant-coefficient integrands appearing here.

use crate::error::{Error, Result};
use crate::grids::{BoundaryTag, BoxFace, HexGrid};
use crate::linalg::{cg_solve, SparseSymMatrix};
use crate::materials::CoarseMaterialField;

/// Boundary condition on one box face of the mechanics grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceMechBc {
    /// u · n = 0: the face-normal displacement component is pinned.
    NormalZero,
    /// Prescribed traction vector (Pa).
    Traction([f64; 3]),
}

#[derive(Debug, Clone)]
pub struct MechBc {
    pub faces: [FaceMechBc; 6],
}

impl MechBc {
    pub fn confined() -> Self {
        MechBc { faces: [FaceMechBc::NormalZero; 6] }
    }

    pub fn face(&self, f: BoxFace) -> FaceMechBc {
        self.faces[f.index()]
    }

    pub fn tags(&self) -> [BoundaryTag; 6] {
        let mut tags = [BoundaryTag::NormalZero; 6];
        for f in BoxFace::ALL {
            if let FaceMechBc::Traction(_) = self.face(f) {
                tags[f.index()] = BoundaryTag::Traction;
            }
        }
        tags
    }
}

/// Cellwise-constant load data for the mechanics solve.
#[derive(Debug, Clone)]
pub struct MechLoads {
    /// Body force density per coarse cell (N/m^3).
    pub body: Vec<[f64; 3]>,
    /// In-situ deviatoric stress per coarse cell, Voigt order
    /// (xx, yy, zz, xy, yz, xz); must be traceless.
    pub s0: Vec<[f64; 6]>,
    /// In-situ volumetric (mean) stress per coarse cell (Pa).
    pub sigma0_v: Vec<f64>,
}

impl MechLoads {
    pub fn zero(n_cells: usize) -> Self {
        MechLoads {
            body: vec![[0.0; 3]; n_cells],
            s0: vec![[0.0; 6]; n_cells],
            sigma0_v: vec![0.0; n_cells],
        }
    }
}

/// Nodal displacements and cellwise volumetric strain on the coarse grid.
#[derive(Debug, Clone)]
pub struct MechState {
    pub u: Vec<[f64; 3]>,
    pub eps_v: Vec<f64>,
}

impl MechState {
    pub fn new(grid: &HexGrid) -> Self {
        MechState { u: vec![[0.0; 3]; grid.n_nodes()], eps_v: vec![0.0; grid.n_cells()] }
    }
}

/// Local node corner signs, x fastest (matches `HexGrid::cell_nodes`).
const NODE_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
];

const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

fn gauss_points() -> [[f64; 3]; 8] {
    let mut pts = [[0.0; 3]; 8];
    for (n, p) in pts.iter_mut().enumerate() {
        *p = [
            NODE_SIGNS[n][0] * GAUSS,
            NODE_SIGNS[n][1] * GAUSS,
            NODE_SIGNS[n][2] * GAUSS,
        ];
    }
    pts
}

fn shape_values(xi: [f64; 3]) -> [f64; 8] {
    let mut n = [0.0; 8];
    for i in 0..8 {
        let s = NODE_SIGNS[i];
        n[i] = (1.0 + s[0] * xi[0]) * (1.0 + s[1] * xi[1]) * (1.0 + s[2] * xi[2]) / 8.0;
    }
    n
}

fn shape_gradients(h: [f64; 3], xi: [f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for i in 0..8 {
        let s = NODE_SIGNS[i];
        g[i][0] = s[0] * (1.0 + s[1] * xi[1]) * (1.0 + s[2] * xi[2]) / 8.0 * 2.0 / h[0];
        g[i][1] = (1.0 + s[0] * xi[0]) * s[1] * (1.0 + s[2] * xi[2]) / 8.0 * 2.0 / h[1];
        g[i][2] = (1.0 + s[0] * xi[0]) * (1.0 + s[1] * xi[1]) * s[2] / 8.0 * 2.0 / h[2];
    }
    g
}

/// 24x24 element stiffness in the deviatoric/volumetric form
/// 2G e:e + K_b ε̄ ε̄.
pub fn element_stiffness(h: [f64; 3], g_mod: f64, k_b: f64) -> [[f64; 24]; 24] {
    let mut ke = [[0.0; 24]; 24];
    let w = h[0] * h[1] * h[2] / 8.0;
    for gp in gauss_points() {
        let grad = shape_gradients(h, gp);
        for i in 0..8 {
            for a in 0..3 {
                for j in 0..8 {
                    for b in 0..3 {
                        let mut eps = 0.5 * grad[i][b] * grad[j][a];
                        if a == b {
                            eps += 0.5
                                * (grad[i][0] * grad[j][0]
                                    + grad[i][1] * grad[j][1]
                                    + grad[i][2] * grad[j][2]);
                        }
                        let vol_term = grad[i][a] * grad[j][b];
                        let dev = eps - vol_term / 3.0;
                        ke[3 * i + a][3 * j + b] += w * (2.0 * g_mod * dev + k_b * vol_term);
                    }
                }
            }
        }
    }
    ke
}

/// Same operator in the classical (λ, 2G) form with λ = K_b - 2G/3;
/// kept as the second algebraic route for consistency checks.
pub fn element_stiffness_classic(h: [f64; 3], g_mod: f64, lambda: f64) -> [[f64; 24]; 24] {
    let mut ke = [[0.0; 24]; 24];
    let w = h[0] * h[1] * h[2] / 8.0;
    for gp in gauss_points() {
        let grad = shape_gradients(h, gp);
        for i in 0..8 {
            for a in 0..3 {
                for j in 0..8 {
                    for b in 0..3 {
                        let mut val = g_mod * grad[i][b] * grad[j][a];
                        if a == b {
                            val += g_mod
                                * (grad[i][0] * grad[j][0]
                                    + grad[i][1] * grad[j][1]
                                    + grad[i][2] * grad[j][2]);
                        }
                        val += lambda * grad[i][a] * grad[j][b];
                        ke[3 * i + a][3 * j + b] += w * val;
                    }
                }
            }
        }
    }
    ke
}

/// Local node ids lying on each box face of a cell.
fn face_local_nodes(face: BoxFace) -> [usize; 4] {
    match face {
        BoxFace::XMin => [0, 2, 4, 6],
        BoxFace::XMax => [1, 3, 5, 7],
        BoxFace::YMin => [0, 1, 4, 5],
        BoxFace::YMax => [2, 3, 6, 7],
        BoxFace::ZMin => [0, 1, 2, 3],
        BoxFace::ZMax => [4, 5, 6, 7],
    }
}

fn cell_touches_box_face(grid: &HexGrid, cell: usize, face: BoxFace) -> bool {
    let (i, j, k) = grid.cell_ijk(cell);
    match face {
        BoxFace::XMin => i == 0,
        BoxFace::XMax => i == grid.nx - 1,
        BoxFace::YMin => j == 0,
        BoxFace::YMax => j == grid.ny - 1,
        BoxFace::ZMin => k == 0,
        BoxFace::ZMax => k == grid.nz - 1,
    }
}

/// Homogeneous normal-zero constraints implied by the boundary conditions.
/// Errors out if some axis has no constrained face at all, which would leave
/// a rigid translation in the nullspace.
pub fn dirichlet_constraints(grid: &HexGrid, bc: &MechBc) -> Result<Vec<(usize, f64)>> {
    let mut covered = [false; 3];
    let mut constraints = Vec::new();
    for face in BoxFace::ALL {
        if let FaceMechBc::NormalZero = bc.face(face) {
            let axis = face.axis();
            covered[axis] = true;
            for node in 0..grid.n_nodes() {
                let (on_min, on_max) = grid.node_on_boundary(node, axis);
                let on_face = match face.outward_sign() {
                    s if s < 0.0 => on_min,
                    _ => on_max,
                };
                if on_face {
                    constraints.push((3 * node + axis, 0.0));
                }
            }
        }
    }
    for (axis, ok) in covered.iter().enumerate() {
        if !ok {
            return Err(Error::SingularSystem(format!(
                "no normal-zero face constrains axis {axis}; rigid modes remain"
            )));
        }
    }
    constraints.sort_unstable_by_key(|c| c.0);
    constraints.dedup_by_key(|c| c.0);
    Ok(constraints)
}

/// Assemble the constrained stiffness and load for arbitrary prescribed
/// displacement values. Constrained rows/columns are eliminated
/// symmetrically, keeping the system SPD.
#[allow(clippy::needless_range_loop)]
pub fn assemble_mech_constrained(
    grid: &HexGrid,
    coarse: &CoarseMaterialField,
    dp: &[f64],
    loads: &MechLoads,
    bc: &MechBc,
    constraints: &[(usize, f64)],
) -> Result<(SparseSymMatrix, Vec<f64>)> {
    let n_cells = grid.n_cells();
    assert_eq!(coarse.n_cells(), n_cells, "coarse material size mismatch");
    assert_eq!(dp.len(), n_cells);
    assert_eq!(loads.body.len(), n_cells);
    assert_eq!(loads.s0.len(), n_cells);
    assert_eq!(loads.sigma0_v.len(), n_cells);

    for (cell, s0) in loads.s0.iter().enumerate() {
        let trace = s0[0] + s0[1] + s0[2];
        let scale = s0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if trace.abs() > 1e-14 * scale.max(1.0) {
            return Err(Error::InvalidMaterial(format!(
                "in-situ deviatoric stress in coarse cell {cell} has nonzero trace {trace}"
            )));
        }
    }

    let ndof = 3 * grid.n_nodes();
    let h = [grid.hx, grid.hy, grid.hz];
    let w = grid.cell_volume() / 8.0;
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; ndof];

    for cell in 0..n_cells {
        let nodes = grid.cell_nodes(cell);
        let ke = element_stiffness(h, coarse.g[cell], coarse.k_b[cell]);
        for i in 0..8 {
            for a in 0..3 {
                let row = 3 * nodes[i] + a;
                for j in 0..8 {
                    for b in 0..3 {
                        let v = ke[3 * i + a][3 * j + b];
                        if v != 0.0 {
                            triplets.push((row, 3 * nodes[j] + b, v));
                        }
                    }
                }
            }
        }

        // volumetric load coefficient: alpha (p - p0) - sigma_v0
        let cv = coarse.alpha[cell] * dp[cell] - loads.sigma0_v[cell];
        let s0 = loads.s0[cell];
        let s0m = [
            [s0[0], s0[3], s0[5]],
            [s0[3], s0[1], s0[4]],
            [s0[5], s0[4], s0[2]],
        ];
        let f = loads.body[cell];
        for gp in gauss_points() {
            let nvals = shape_values(gp);
            let grad = shape_gradients(h, gp);
            for i in 0..8 {
                for a in 0..3 {
                    let mut val = f[a] * nvals[i] + cv * grad[i][a];
                    for (l, grad_l) in grad[i].iter().enumerate() {
                        val -= s0m[a][l] * grad_l;
                    }
                    rhs[3 * nodes[i] + a] += w * val;
                }
            }
        }

        // boundary tractions (t, q) on the tagged box faces
        for face in BoxFace::ALL {
            if let FaceMechBc::Traction(t) = bc.face(face) {
                if cell_touches_box_face(grid, cell, face) {
                    let area = grid.face_area(face.axis());
                    for li in face_local_nodes(face) {
                        for a in 0..3 {
                            rhs[3 * nodes[li] + a] += t[a] * area / 4.0;
                        }
                    }
                }
            }
        }
    }

    // symmetric constraint elimination
    let mut value = vec![None; ndof];
    for &(dof, v) in constraints {
        value[dof] = Some(v);
    }
    let mut kept = Vec::with_capacity(triplets.len());
    for (r, c, v) in triplets {
        match (value[r], value[c]) {
            (None, None) => kept.push((r, c, v)),
            (None, Some(vc)) => rhs[r] -= v * vc,
            (Some(_), _) => {}
        }
    }
    for &(dof, v) in constraints {
        kept.push((dof, dof, 1.0));
        rhs[dof] = v;
    }

    Ok((SparseSymMatrix::from_triplets(ndof, kept), rhs))
}

/// Assemble the coarse mechanics system for the boundary conditions' own
/// normal-zero constraints.
pub fn assemble_mech_system(
    grid: &HexGrid,
    coarse: &CoarseMaterialField,
    dp: &[f64],
    loads: &MechLoads,
    bc: &MechBc,
) -> Result<(SparseSymMatrix, Vec<f64>)> {
    let constraints = dirichlet_constraints(grid, bc)?;
    assemble_mech_constrained(grid, coarse, dp, loads, bc, &constraints)
}

/// Cell averages of ∇·u, evaluated by 2x2x2 Gauss quadrature (exact for
/// trilinear displacements).
pub fn cell_volumetric_strain(grid: &HexGrid, u: &[[f64; 3]]) -> Vec<f64> {
    let h = [grid.hx, grid.hy, grid.hz];
    let mut eps = vec![0.0; grid.n_cells()];
    for (cell, eps_cell) in eps.iter_mut().enumerate() {
        let nodes = grid.cell_nodes(cell);
        let mut acc = 0.0;
        for gp in gauss_points() {
            let grad = shape_gradients(h, gp);
            for (i, &node) in nodes.iter().enumerate() {
                acc += grad[i][0] * u[node][0] + grad[i][1] * u[node][1] + grad[i][2] * u[node][2];
            }
        }
        *eps_cell = acc / 8.0;
    }
    eps
}

/// Total mean stress per coarse cell, σ_v = σ_v0 + K_b ε̄ - α (p - p₀).
pub fn mean_stress(
    coarse: &CoarseMaterialField,
    eps_v: &[f64],
    dp: &[f64],
    sigma0_v: &[f64],
) -> Vec<f64> {
    (0..coarse.n_cells())
        .map(|c| sigma0_v[c] + coarse.k_b[c] * eps_v[c] - coarse.alpha[c] * dp[c])
        .collect()
}

/// One mechanics solve with the restricted pressures frozen; updates the
/// displacement field and recomputes the volumetric strain.
#[allow(clippy::too_many_arguments)]
pub fn solve_mech_step(
    grid: &HexGrid,
    coarse: &CoarseMaterialField,
    dp: &[f64],
    loads: &MechLoads,
    bc: &MechBc,
    state: &mut MechState,
    solver_tol: f64,
    solver_max_iter: usize,
) -> Result<()> {
    let (a, b) = assemble_mech_system(grid, coarse, dp, loads, bc)?;
    let sol = cg_solve(&a, &b, solver_tol, solver_max_iter)?;
    for (node, u) in state.u.iter_mut().enumerate() {
        *u = [sol.x[3 * node], sol.x[3 * node + 1], sol.x[3 * node + 2]];
    }
    state.eps_v = cell_volumetric_strain(grid, &state.u);
    Ok(())
}
