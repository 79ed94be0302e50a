use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{Axis, Billiard, Region, Vec2, Wall};
use crate::{Error, Result};

pub(crate) const NO_NODE: u32 = u32::MAX;

/// Default memory ceiling for a grid's eigensolve.
pub const DEFAULT_MEMORY_BUDGET_MB: u64 = 3072;

/// Uniform square-cell grid over the bounding box `[0, w] x [0, h]`.
///
/// Nodes sit at `(i, j) * dx` with `dx = unit / cells_per_unit`, so walls at
/// multiples of the region's grid unit fall on grid lines. Interior unknowns
/// are the nodes strictly inside the region, numbered column by column
/// (`i` outer, `j` inner) to keep the operator's bandwidth near `2 ny`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "GridMeta", into = "GridMeta")]
pub struct GridSpec {
    pub region: Region,
    pub cells_per_unit: usize,
    pub dx: f64,
    pub nx: usize,
    pub ny: usize,
    node_index: Vec<u32>,
    interior: Vec<(u32, u32)>,
}

/// Serializable part of a [`GridSpec`]; the mask is rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub region: Region,
    pub cells_per_unit: usize,
    pub dx: f64,
    pub nx: usize,
    pub ny: usize,
    pub n_interior: usize,
}

impl From<GridMeta> for GridSpec {
    fn from(m: GridMeta) -> Self {
        GridSpec::with_cells(m.region, m.cells_per_unit)
    }
}

impl From<GridSpec> for GridMeta {
    fn from(g: GridSpec) -> Self {
        g.meta()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.meta() == other.meta()
    }
}

impl GridSpec {
    /// Grid with `cells_per_unit` cells across the region's grid unit.
    pub fn with_cells(region: Region, cells_per_unit: usize) -> Self {
        let unit = region.grid_unit();
        let dx = unit / cells_per_unit as f64;
        let ext = region.extent();
        let nx = (ext.x / dx - 1e-9).ceil() as usize + 1;
        let ny = (ext.y / dx - 1e-9).ceil() as usize + 1;
        let mut node_index = vec![NO_NODE; nx * ny];
        let mut interior = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                let p = node_coords(unit, cells_per_unit, i as i64, j as i64);
                if region.is_interior(p) {
                    node_index[j * nx + i] = interior.len() as u32;
                    interior.push((i as u32, j as u32));
                }
            }
        }
        Self { region, cells_per_unit, dx, nx, ny, node_index, interior }
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            region: self.region,
            cells_per_unit: self.cells_per_unit,
            dx: self.dx,
            nx: self.nx,
            ny: self.ny,
            n_interior: self.interior.len(),
        }
    }

    /// Spacing in both directions (cells are square).
    pub fn dy(&self) -> f64 {
        self.dx
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dx
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Node position; indices may lie outside the box.
    pub fn node(&self, i: i64, j: i64) -> Vec2 {
        node_coords(self.region.grid_unit(), self.cells_per_unit, i, j)
    }

    /// `(i, j)` of interior unknown `k`.
    pub fn interior_node(&self, k: usize) -> (usize, usize) {
        let (i, j) = self.interior[k];
        (i as usize, j as usize)
    }

    pub fn interior_point(&self, k: usize) -> Vec2 {
        let (i, j) = self.interior[k];
        self.node(i as i64, j as i64)
    }

    /// Interior unknown at node `(i, j)`, if any.
    pub fn index_of(&self, i: i64, j: i64) -> Option<usize> {
        if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
            return None;
        }
        let k = self.node_index[j as usize * self.nx + i as usize];
        (k != NO_NODE).then_some(k as usize)
    }

    pub fn interior_points(&self) -> impl Iterator<Item = Vec2> + '_ {
        (0..self.interior.len()).map(move |k| self.interior_point(k))
    }

    /// Value of an interior field at node `(i, j)` under the Dirichlet
    /// extension: odd reflection across straight walls, zero elsewhere
    /// outside. Nodes on the boundary are zero.
    pub fn extended_value(&self, field: &[f64], i: i64, j: i64) -> f64 {
        self.extended_sign_index(i, j, 2)
            .map_or(0.0, |(sign, k)| sign * field[k])
    }

    /// Resolves a node to `(sign, interior index)` by mirroring across
    /// straight walls, at most `depth` times.
    pub(crate) fn extended_sign_index(&self, i: i64, j: i64, depth: u32) -> Option<(f64, usize)> {
        if let Some(k) = self.index_of(i, j) {
            return Some((1.0, k));
        }
        if depth == 0 {
            return None;
        }
        let p = self.node(i, j);
        if self.region.contains(p) {
            return None;
        }
        let tol = 1e-9 * self.dx;
        for wall in self.region.straight_walls() {
            let wall_steps = (wall.coord / self.dx).round();
            if ((wall_steps * self.dx) - wall.coord).abs() > tol {
                continue;
            }
            let w = wall_steps as i64;
            let (mi, mj, along, offset) = match wall.normal {
                Axis::X => (2 * w - i, j, p.y, p.x - wall.coord),
                Axis::Y => (i, 2 * w - j, p.x, p.y - wall.coord),
            };
            // Only nodes on the outer side of the wall are mirrored.
            if offset * wall.inside >= -tol || !self.wall_span_covers(&wall, along, tol) {
                continue;
            }
            if let Some((s, k)) = self.extended_sign_index(mi, mj, depth - 1) {
                return Some((-s, k));
            }
        }
        None
    }

    /// Whether `along` is within the wall's span, extended past ends where the
    /// wall meets another straight wall at a right angle.
    fn wall_span_covers(&self, wall: &Wall, along: f64, tol: f64) -> bool {
        if along >= wall.lo - tol && along <= wall.hi + tol {
            return true;
        }
        let margin = 3.0 * self.dx;
        let end = if along < wall.lo {
            if along < wall.lo - margin {
                return false;
            }
            wall.lo
        } else {
            if along > wall.hi + margin {
                return false;
            }
            wall.hi
        };
        let end_point = match wall.normal {
            Axis::X => Vec2::new(wall.coord, end),
            Axis::Y => Vec2::new(end, wall.coord),
        };
        self.region
            .straight_walls()
            .iter()
            .any(|w| w.normal != wall.normal && w.holds(end_point, tol))
    }

    /// Approximate working-set size of an eigensolve up to `e_max`.
    pub fn eigensolve_bytes(&self, e_max: f64) -> u64 {
        let modes = weyl_count(self.region.area(), self.region.perimeter(), e_max).max(1.0);
        let block = (modes * 1.2 + 40.0) as u64;
        // Four n x p blocks live at once during Rayleigh-Ritz.
        8 * self.n_interior() as u64 * block * 4
    }
}

fn node_coords(unit: f64, cells: usize, i: i64, j: i64) -> Vec2 {
    Vec2::new(i as f64 * unit / cells as f64, j as f64 * unit / cells as f64)
}

/// Smooth Weyl estimate of the number of Dirichlet eigenvalues below `e`.
pub fn weyl_count(area: f64, perimeter: f64, e: f64) -> f64 {
    if e <= 0.0 {
        return 0.0;
    }
    area / (4.0 * PI) * e - perimeter / (4.0 * PI) * e.sqrt()
}

/// Grid resolving wavenumber `sqrt(e_max)` with `points_per_wavelength`.
pub fn build_grid(region: Region, points_per_wavelength: f64, e_max: f64) -> Result<GridSpec> {
    build_grid_with_budget(region, points_per_wavelength, e_max, DEFAULT_MEMORY_BUDGET_MB)
}

pub fn build_grid_with_budget(
    region: Region,
    points_per_wavelength: f64,
    e_max: f64,
    budget_mb: u64,
) -> Result<GridSpec> {
    if !(points_per_wavelength >= 6.0) {
        return Err(Error::invalid(format!(
            "points per wavelength must be at least 6, got {points_per_wavelength}"
        )));
    }
    if !(e_max > 0.0) || !e_max.is_finite() {
        return Err(Error::invalid(format!("E_max must be positive, got {e_max}")));
    }
    let k_max = e_max.sqrt();
    let dx_max = 2.0 * PI / (points_per_wavelength * k_max);
    let cells = (region.grid_unit() / dx_max).ceil() as usize;
    let grid = GridSpec::with_cells(region, cells.max(2));
    let required = grid.eigensolve_bytes(e_max);
    let budget = budget_mb * 1024 * 1024;
    if required > budget {
        return Err(Error::GridTooLarge {
            unknowns: grid.n_interior(),
            required_mb: required.div_ceil(1024 * 1024),
            budget_mb,
        });
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, Rectangle};

    #[test]
    fn per_wavelength_rule() {
        let g = build_grid(Domain::default().into(), 8.0, 3600.0).unwrap();
        assert!(g.dx <= 2.0 * PI / 480.0);
        assert!(g.nx >= 153);
        assert_eq!(g.node(g.nx as i64 - 1, 0), Vec2::new(2.0, 0.0));
        assert_eq!(g.node(0, g.ny as i64 - 1), Vec2::new(0.0, 1.0));
    }

    #[test]
    fn coarse_square() {
        let e = 2.0 * PI * PI;
        let g = build_grid(Rectangle::unit_square().into(), 6.0, e).unwrap();
        // k_max = pi * sqrt(2): wavelength sqrt(2) spans the unit square.
        assert!(g.dx <= 2.0 * PI / (6.0 * e.sqrt()));
        assert_eq!(g.n_interior(), (g.nx - 2) * (g.ny - 2));
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(build_grid(Domain::default().into(), 8.0, 0.0).is_err());
        assert!(build_grid(Domain::default().into(), 5.0, 100.0).is_err());
        let err = build_grid_with_budget(Domain::default().into(), 8.0, 1e6, 64).unwrap_err();
        assert!(matches!(err, Error::GridTooLarge { .. }), "{err}");
    }

    #[test]
    fn mask_matches_geometry() {
        let d = Domain::default();
        let g = GridSpec::with_cells(d.into(), 20);
        for i in 0..g.nx as i64 {
            for j in 0..g.ny as i64 {
                assert_eq!(g.index_of(i, j).is_some(), d.is_interior(g.node(i, j)));
            }
        }
        // Interior numbering is column-major.
        for k in 1..g.n_interior() {
            assert!(g.interior_node(k - 1) < g.interior_node(k));
        }
    }

    #[test]
    fn odd_extension_across_walls() {
        let g = GridSpec::with_cells(Domain::default().into(), 10);
        let field: Vec<f64> = (0..g.n_interior()).map(|k| 1.0 + k as f64).collect();
        let v = |i, j| g.extended_value(&field, i, j);
        // Left wall.
        assert_eq!(v(-1, 4), -v(1, 4));
        // Bottom wall.
        assert_eq!(v(3, -2), -v(3, 2));
        // Top wall above the straight part.
        assert_eq!(v(5, 11), -v(5, 9));
        // Boundary nodes vanish.
        assert_eq!(v(0, 4), 0.0);
        assert_eq!(v(4, 10), 0.0);
        // Corner: double mirror.
        assert_eq!(v(-1, -1), v(1, 1));
        // Beyond the arc: zero.
        assert_eq!(v(20, 5), 0.0);
        assert_eq!(v(15, 11), 0.0);
    }
}
