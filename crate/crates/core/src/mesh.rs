//! Rectangular cell-centered spatial mesh with boundary face metadata.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One face of a boundary cell, carrying the outward unit normal and the
/// surface measure of the face (edge length in 2-D).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryFace {
    /// Flat index of the cell owning the face.
    pub cell: usize,
    /// Outward unit normal.
    pub normal: [f64; 2],
    /// Surface measure dS of the face.
    pub area: f64,
    /// Face midpoint.
    pub center: [f64; 2],
}

/// Cell-centered grid over an axis-aligned rectangle.
///
/// Cells are indexed row-major: `cell = iy * nx + ix`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpatialMesh {
    /// Spatial dimension; the implementation is fixed at 2 but the value is
    /// carried explicitly so configurations stay honest about it.
    pub dim: usize,
    pub origin: [f64; 2],
    pub extents: [f64; 2],
    pub cells_per_axis: [usize; 2],
    pub cell_size: [f64; 2],
    pub boundary_faces: Vec<BoundaryFace>,
}

/// Mesh construction input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub origin: [f64; 2],
    pub extents: [f64; 2],
    pub cells_per_axis: [usize; 2],
}

impl SpatialMesh {
    pub fn n_cells(&self) -> usize {
        self.cells_per_axis[0] * self.cells_per_axis[1]
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size[0] * self.cell_size[1]
    }

    pub fn nx(&self) -> usize {
        self.cells_per_axis[0]
    }

    pub fn ny(&self) -> usize {
        self.cells_per_axis[1]
    }

    /// Center coordinates of a cell given by flat index.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let nx = self.nx();
        let ix = cell % nx;
        let iy = cell / nx;
        [
            self.origin[0] + (ix as f64 + 0.5) * self.cell_size[0],
            self.origin[1] + (iy as f64 + 0.5) * self.cell_size[1],
        ]
    }

    /// The four corners of the closed rectangle.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [x0, y0] = self.origin;
        let x1 = x0 + self.extents[0];
        let y1 = y0 + self.extents[1];
        [[x0, y0], [x1, y0], [x0, y1], [x1, y1]]
    }

    /// Total boundary measure (perimeter).
    pub fn perimeter(&self) -> f64 {
        2.0 * (self.extents[0] + self.extents[1])
    }
}

/// Build a rectangular mesh.
///
/// Boundary faces are enumerated deterministically: left column bottom-up,
/// right column bottom-up, bottom row left-to-right, top row left-to-right.
pub fn build_mesh(spec: &DomainSpec) -> Result<SpatialMesh> {
    for k in 0..2 {
        if !(spec.extents[k] > 0.0) || !spec.extents[k].is_finite() {
            return Err(Error::Config(format!(
                "extent along axis {k} must be positive and finite, got {}",
                spec.extents[k]
            )));
        }
        if spec.cells_per_axis[k] == 0 {
            return Err(Error::Config(format!(
                "resolution along axis {k} must be positive"
            )));
        }
        if !spec.origin[k].is_finite() {
            return Err(Error::Config(format!(
                "origin along axis {k} must be finite, got {}",
                spec.origin[k]
            )));
        }
    }

    let [nx, ny] = spec.cells_per_axis;
    let hx = spec.extents[0] / nx as f64;
    let hy = spec.extents[1] / ny as f64;
    let [x0, y0] = spec.origin;
    let x1 = x0 + spec.extents[0];
    let y1 = y0 + spec.extents[1];

    let mut faces = Vec::with_capacity(2 * (nx + ny));
    // Left and right columns.
    for iy in 0..ny {
        let yc = y0 + (iy as f64 + 0.5) * hy;
        faces.push(BoundaryFace {
            cell: iy * nx,
            normal: [-1.0, 0.0],
            area: hy,
            center: [x0, yc],
        });
        faces.push(BoundaryFace {
            cell: iy * nx + (nx - 1),
            normal: [1.0, 0.0],
            area: hy,
            center: [x1, yc],
        });
    }
    // Bottom and top rows.
    for ix in 0..nx {
        let xc = x0 + (ix as f64 + 0.5) * hx;
        faces.push(BoundaryFace {
            cell: ix,
            normal: [0.0, -1.0],
            area: hx,
            center: [xc, y0],
        });
        faces.push(BoundaryFace {
            cell: (ny - 1) * nx + ix,
            normal: [0.0, 1.0],
            area: hx,
            center: [xc, y1],
        });
    }

    Ok(SpatialMesh {
        dim: 2,
        origin: spec.origin,
        extents: spec.extents,
        cells_per_axis: spec.cells_per_axis,
        cell_size: [hx, hy],
        boundary_faces: faces,
    })
}

pub fn unit_square(cells: usize) -> SpatialMesh {
    build_mesh(&DomainSpec {
        origin: [0.0, 0.0],
        extents: [1.0, 1.0],
        cells_per_axis: [cells, cells],
    })
    .expect("unit square spec is valid")
}
