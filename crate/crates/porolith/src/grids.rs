//! Structured hexahedral (brick) meshes on a box domain and the nested
//! fine/coarse pairing used by the two-grid scheme.
//!
//! Cells, nodes and faces are numbered lexicographically with x fastest,
//! so assembled systems are reproducible bit-for-bit across runs. Faces are
//! enumerated axis-major: all x-normal faces first, then y, then z.

use crate::error::{Error, Result};

/// The six faces of the box domain, used to attach boundary conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxFace {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl BoxFace {
    pub const ALL: [BoxFace; 6] = [
        BoxFace::XMin,
        BoxFace::XMax,
        BoxFace::YMin,
        BoxFace::YMax,
        BoxFace::ZMin,
        BoxFace::ZMax,
    ];

    /// Axis normal to this face: 0 = x, 1 = y, 2 = z.
    pub fn axis(self) -> usize {
        match self {
            BoxFace::XMin | BoxFace::XMax => 0,
            BoxFace::YMin | BoxFace::YMax => 1,
            BoxFace::ZMin | BoxFace::ZMax => 2,
        }
    }

    /// +1.0 on max faces, -1.0 on min faces (sign of the outward normal).
    pub fn outward_sign(self) -> f64 {
        match self {
            BoxFace::XMin | BoxFace::YMin | BoxFace::ZMin => -1.0,
            BoxFace::XMax | BoxFace::YMax | BoxFace::ZMax => 1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            BoxFace::XMin => 0,
            BoxFace::XMax => 1,
            BoxFace::YMin => 2,
            BoxFace::YMax => 3,
            BoxFace::ZMin => 4,
            BoxFace::ZMax => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BoxFace::XMin => "xmin",
            BoxFace::XMax => "xmax",
            BoxFace::YMin => "ymin",
            BoxFace::YMax => "ymax",
            BoxFace::ZMin => "zmin",
            BoxFace::ZMax => "zmax",
        }
    }
}

/// Boundary condition kind attached to a box face.
///
/// Flow grids use the first two, mechanics grids the last two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Prescribed pressure on the face (flow).
    PressureDirichlet,
    /// Zero normal flux (flow).
    NoFlux,
    /// Zero face-normal displacement component (mechanics).
    NormalZero,
    /// Prescribed traction vector (mechanics).
    Traction,
}

/// Uniform brick grid covering a box.
#[derive(Debug, Clone)]
pub struct HexGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub hx: f64,
    pub hy: f64,
    pub hz: f64,
    pub origin: [f64; 3],
    /// Boundary tag per box face, indexed by [`BoxFace::index`].
    pub tags: [BoundaryTag; 6],
}

/// Build a uniform brick grid over a box of the given total edge lengths.
pub fn build_box_grid(
    nx: usize,
    ny: usize,
    nz: usize,
    lengths: [f64; 3],
    tags: [BoundaryTag; 6],
) -> Result<HexGrid> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidMesh(format!(
            "cell counts must be >= 1, got ({nx}, {ny}, {nz})"
        )));
    }
    if lengths.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::InvalidMesh(format!(
            "box lengths must be positive and finite, got {lengths:?}"
        )));
    }
    Ok(HexGrid {
        nx,
        ny,
        nz,
        hx: lengths[0] / nx as f64,
        hy: lengths[1] / ny as f64,
        hz: lengths[2] / nz as f64,
        origin: [0.0; 3],
        tags,
    })
}

impl HexGrid {
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1) * (self.nz + 1)
    }

    /// Total face count: x-, y- and z-normal faces combined.
    pub fn n_faces(&self) -> usize {
        (self.nx + 1) * self.ny * self.nz
            + self.nx * (self.ny + 1) * self.nz
            + self.nx * self.ny * (self.nz + 1)
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy * self.hz
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        [self.hx, self.hy, self.hz][axis]
    }

    /// Area of a face with the given normal axis.
    pub fn face_area(&self, axis: usize) -> f64 {
        match axis {
            0 => self.hy * self.hz,
            1 => self.hx * self.hz,
            _ => self.hx * self.hy,
        }
    }

    pub fn diam(&self) -> f64 {
        (self.hx * self.hx + self.hy * self.hy + self.hz * self.hz).sqrt()
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn cell_ijk(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny && k <= self.nz);
        i + (self.nx + 1) * (j + (self.ny + 1) * k)
    }

    pub fn node_coords(&self, idx: usize) -> [f64; 3] {
        let i = idx % (self.nx + 1);
        let j = (idx / (self.nx + 1)) % (self.ny + 1);
        let k = idx / ((self.nx + 1) * (self.ny + 1));
        [
            self.origin[0] + i as f64 * self.hx,
            self.origin[1] + j as f64 * self.hy,
            self.origin[2] + k as f64 * self.hz,
        ]
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.cell_ijk(idx);
        [
            self.origin[0] + (i as f64 + 0.5) * self.hx,
            self.origin[1] + (j as f64 + 0.5) * self.hy,
            self.origin[2] + (k as f64 + 0.5) * self.hz,
        ]
    }

    /// The 8 node indices of a cell, ordered with x fastest, then y, then z.
    pub fn cell_nodes(&self, idx: usize) -> [usize; 8] {
        let (i, j, k) = self.cell_ijk(idx);
        [
            self.node_index(i, j, k),
            self.node_index(i + 1, j, k),
            self.node_index(i, j + 1, k),
            self.node_index(i + 1, j + 1, k),
            self.node_index(i, j, k + 1),
            self.node_index(i + 1, j, k + 1),
            self.node_index(i, j + 1, k + 1),
            self.node_index(i + 1, j + 1, k + 1),
        ]
    }

    /// Global index of the x-normal face at plane `i` (0..=nx), row (j, k).
    #[inline]
    pub fn x_face_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.ny && k < self.nz);
        i + (self.nx + 1) * (j + self.ny * k)
    }

    #[inline]
    pub fn y_face_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.ny && k < self.nz);
        (self.nx + 1) * self.ny * self.nz + i + self.nx * (j + (self.ny + 1) * k)
    }

    #[inline]
    pub fn z_face_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k <= self.nz);
        (self.nx + 1) * self.ny * self.nz
            + self.nx * (self.ny + 1) * self.nz
            + i
            + self.nx * (j + self.ny * k)
    }

    /// Face index for a given cell and box-face direction.
    pub fn cell_face_index(&self, cell: usize, face: BoxFace) -> usize {
        let (i, j, k) = self.cell_ijk(cell);
        match face {
            BoxFace::XMin => self.x_face_index(i, j, k),
            BoxFace::XMax => self.x_face_index(i + 1, j, k),
            BoxFace::YMin => self.y_face_index(i, j, k),
            BoxFace::YMax => self.y_face_index(i, j + 1, k),
            BoxFace::ZMin => self.z_face_index(i, j, k),
            BoxFace::ZMax => self.z_face_index(i, j, k + 1),
        }
    }

    /// Which box face a boundary node belongs to, per axis.
    /// Returns (on_min, on_max) for the given axis.
    pub fn node_on_boundary(&self, node: usize, axis: usize) -> (bool, bool) {
        let i = node % (self.nx + 1);
        let j = (node / (self.nx + 1)) % (self.ny + 1);
        let k = node / ((self.nx + 1) * (self.ny + 1));
        let (pos, count) = match axis {
            0 => (i, self.nx),
            1 => (j, self.ny),
            _ => (k, self.nz),
        };
        (pos == 0, pos == count)
    }
}

/// Nested fine (flow) / coarse (poromechanics) grid pair with the
/// parent-to-children containment map.
#[derive(Debug, Clone)]
pub struct NestedGridPair {
    pub fine: HexGrid,
    pub coarse: HexGrid,
    pub ratio: [usize; 3],
    /// Ordered fine-cell indices contained in each coarse cell.
    pub children: Vec<Vec<usize>>,
    /// Coarse parent of each fine cell.
    pub parent: Vec<usize>,
}

/// Nest a fine grid under a coarse grid obtained by merging `ratio` cells
/// per axis. Coarse-grid boundary tags default to `NormalZero`; override
/// them with [`nest_with_tags`] when the mechanics boundary differs.
pub fn nest(fine: HexGrid, ratio: [usize; 3]) -> Result<NestedGridPair> {
    nest_with_tags(fine, ratio, [BoundaryTag::NormalZero; 6])
}

pub fn nest_with_tags(
    fine: HexGrid,
    ratio: [usize; 3],
    coarse_tags: [BoundaryTag; 6],
) -> Result<NestedGridPair> {
    if ratio.contains(&0) {
        return Err(Error::Nesting(format!("ratio components must be >= 1, got {ratio:?}")));
    }
    let counts = [fine.nx, fine.ny, fine.nz];
    for (axis, (&count, &r)) in counts.iter().zip(&ratio).enumerate() {
        if !count.is_multiple_of(r) {
            return Err(Error::Nesting(format!(
                "fine cell count {count} along axis {axis} is not divisible by ratio {r}"
            )));
        }
    }
    let coarse = HexGrid {
        nx: fine.nx / ratio[0],
        ny: fine.ny / ratio[1],
        nz: fine.nz / ratio[2],
        hx: fine.hx * ratio[0] as f64,
        hy: fine.hy * ratio[1] as f64,
        hz: fine.hz * ratio[2] as f64,
        origin: fine.origin,
        tags: coarse_tags,
    };

    let mut children = vec![Vec::with_capacity(ratio[0] * ratio[1] * ratio[2]); coarse.n_cells()];
    let mut parent = vec![0usize; fine.n_cells()];
    for kc in 0..coarse.nz {
        for jc in 0..coarse.ny {
            for ic in 0..coarse.nx {
                let cc = coarse.cell_index(ic, jc, kc);
                for dk in 0..ratio[2] {
                    for dj in 0..ratio[1] {
                        for di in 0..ratio[0] {
                            let cf = fine.cell_index(
                                ic * ratio[0] + di,
                                jc * ratio[1] + dj,
                                kc * ratio[2] + dk,
                            );
                            children[cc].push(cf);
                            parent[cf] = cc;
                        }
                    }
                }
            }
        }
    }
    Ok(NestedGridPair { fine, coarse, ratio, children, parent })
}

impl NestedGridPair {
    /// Grid refinement ratio r = max diam(coarse cell) / max diam(fine cell).
    pub fn refinement_ratio(&self) -> f64 {
        self.coarse.diam() / self.fine.diam()
    }

    /// Volume fraction of one fine child inside its coarse parent.
    pub fn child_volume_fraction(&self) -> f64 {
        self.fine.cell_volume() / self.coarse.cell_volume()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noflux_tags() -> [BoundaryTag; 6] {
        [BoundaryTag::NoFlux; 6]
    }

    #[test]
    fn single_cell_entity_counts() {
        let g = build_box_grid(1, 1, 1, [1.0, 1.0, 1.0], noflux_tags()).unwrap();
        assert_eq!(g.n_cells(), 1);
        assert_eq!(g.n_nodes(), 8);
        assert_eq!(g.n_faces(), 6);
    }

    #[test]
    fn two_cell_entity_counts_and_volume() {
        let g = build_box_grid(2, 1, 1, [2.0, 1.0, 1.0], noflux_tags()).unwrap();
        assert_eq!(g.n_cells(), 2);
        assert_eq!(g.n_nodes(), 12);
        assert_eq!(g.n_faces(), 11);
        assert_eq!(g.cell_volume(), 1.0);
    }

    #[test]
    fn cube_4x4x4_cell_volume() {
        let g = build_box_grid(4, 4, 4, [1.0, 1.0, 1.0], noflux_tags()).unwrap();
        assert_eq!(g.n_cells(), 64);
        assert!((g.cell_volume() - 0.015625).abs() < 1e-18);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(build_box_grid(0, 1, 1, [1.0, 1.0, 1.0], noflux_tags()).is_err());
        assert!(build_box_grid(1, 1, 1, [0.0, 1.0, 1.0], noflux_tags()).is_err());
        assert!(build_box_grid(1, 1, 1, [-1.0, 1.0, 1.0], noflux_tags()).is_err());
    }

    #[test]
    fn nest_uniform_refinement() {
        let fine = build_box_grid(4, 4, 4, [1.0, 1.0, 1.0], noflux_tags()).unwrap();
        let pair = nest(fine, [2, 2, 2]).unwrap();
        assert_eq!(pair.coarse.n_cells(), 8);
        for c in &pair.children {
            assert_eq!(c.len(), 8);
        }
        assert!((pair.refinement_ratio() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn nest_degenerate_identity() {
        let fine = build_box_grid(4, 4, 4, [1.0, 1.0, 1.0], noflux_tags()).unwrap();
        let pair = nest(fine, [1, 1, 1]).unwrap();
        assert_eq!(pair.coarse.n_cells(), pair.fine.n_cells());
        for (cc, c) in pair.children.iter().enumerate() {
            assert_eq!(c, &vec![cc]);
        }
        assert_eq!(pair.refinement_ratio(), 1.0);
    }

    #[test]
    fn nest_anisotropic() {
        let fine = build_box_grid(6, 4, 2, [6.0, 4.0, 2.0], noflux_tags()).unwrap();
        let pair = nest(fine, [3, 2, 1]).unwrap();
        assert_eq!((pair.coarse.nx, pair.coarse.ny, pair.coarse.nz), (2, 2, 2));
        for c in &pair.children {
            assert_eq!(c.len(), 6);
        }
        assert!(pair.refinement_ratio() >= 1.0);
    }

    #[test]
    fn nest_rejects_non_divisible() {
        let fine = build_box_grid(5, 4, 4, [1.0, 1.0, 1.0], noflux_tags()).unwrap();
        assert!(nest(fine, [2, 2, 2]).is_err());
    }

    #[test]
    fn children_partition_and_tile_volume() {
        let fine = build_box_grid(6, 4, 2, [2.0, 1.5, 0.7], noflux_tags()).unwrap();
        let pair = nest(fine, [3, 2, 1]).unwrap();
        let mut seen = vec![0usize; pair.fine.n_cells()];
        for (cc, c) in pair.children.iter().enumerate() {
            let vol: f64 = c.iter().map(|_| pair.fine.cell_volume()).sum();
            let rel = (vol - pair.coarse.cell_volume()).abs() / pair.coarse.cell_volume();
            assert!(rel < 1e-14, "volume tiling violated on coarse cell {cc}: rel {rel}");
            for &cf in c {
                seen[cf] += 1;
                assert_eq!(pair.parent[cf], cc);
            }
        }
        assert!(seen.iter().all(|&s| s == 1), "children lists must partition fine cells");
    }

    #[test]
    fn face_indices_cover_range_once() {
        let g = build_box_grid(3, 2, 2, [1.0, 1.0, 1.0], noflux_tags()).unwrap();
        let mut seen = vec![false; g.n_faces()];
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..=g.nx {
                    seen[g.x_face_index(i, j, k)] = true;
                }
            }
        }
        for k in 0..g.nz {
            for j in 0..=g.ny {
                for i in 0..g.nx {
                    seen[g.y_face_index(i, j, k)] = true;
                }
            }
        }
        for k in 0..=g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    seen[g.z_face_index(i, j, k)] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
