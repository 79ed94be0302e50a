//! Browser bindings for three interactive operations on a small basis:
//! tracing a classical ray, the survival probability of a user-placed
//! packet, and its density at a chosen time.
//!
//! The plain functions carry the logic and run natively; the
//! `#[wasm_bindgen]` layer only converts errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use stadium_bohm::geometry::{reflect_ray, Ray};
use stadium_bohm::packet::{coherent_state, project_unchecked, CoherentParams, GridFile, SpectralState};
use stadium_bohm::spectral::{solve_eigen, EigenBasis, GridSpec};
use stadium_bohm::survival::survival_exact;
use stadium_bohm::{Billiard, Domain, Vec2};
use wasm_bindgen::prelude::*;

/// Packet placed by the user: centre, heading angle in degrees, wavenumber
/// of the central momentum and Gaussian exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketInput {
    pub x: f64,
    pub y: f64,
    pub angle_deg: f64,
    pub k: f64,
    pub alpha: f64,
}

impl PacketInput {
    fn params(&self) -> CoherentParams {
        let a = self.angle_deg.to_radians();
        CoherentParams { alpha: self.alpha, center: [self.x, self.y], momentum: [self.k * a.cos(), self.k * a.sin()] }
    }
}

/// `(t, x, y)` triples of a classical ray from `(x, y)` along `(dx, dy)`
/// at unit speed.
pub fn ray_vertices(x: f64, y: f64, dx: f64, dy: f64, t_max: f64) -> Result<Vec<f64>, String> {
    let domain = Domain::default();
    let start = Vec2::new(x, y);
    if !domain.is_interior(start) {
        return Err(format!("({x}, {y}) is not inside the billiard"));
    }
    let heading = Vec2::new(dx, dy);
    if !(heading.norm() > 0.0) || !(t_max > 0.0) {
        return Err("need a nonzero heading and a positive duration".into());
    }
    let path = reflect_ray(&domain, &Ray::new(start, heading, 1.0), t_max);
    Ok(path.vertices.iter().flat_map(|(t, p)| [*t, p.x, p.y]).collect())
}

/// Small eigenbasis kept for the page's lifetime.
pub struct Engine {
    basis: EigenBasis,
}

impl Engine {
    pub fn new(cells_per_unit: usize, e_max: f64) -> Result<Self, String> {
        if !(4..=60).contains(&cells_per_unit) {
            return Err("cells per unit must be between 4 and 60".into());
        }
        let grid = GridSpec::with_cells(Domain::default().into(), cells_per_unit);
        let basis = solve_eigen(&grid, e_max).map_err(|e| e.to_string())?;
        Ok(Self { basis })
    }

    fn state(&self, p: &PacketInput) -> Result<SpectralState, String> {
        let params = p.params();
        params.validate(&self.basis.grid.region).map_err(|e| e.to_string())?;
        let field = coherent_state(&params, &self.basis.grid).map_err(|e| e.to_string())?;
        Ok(project_unchecked(&field, &self.basis))
    }

    /// Captured norm followed by `S(t)` at `samples` times over `[0, t_end]`.
    pub fn survival(&self, p: &PacketInput, t_end: f64, samples: usize) -> Result<Vec<f64>, String> {
        if samples < 2 || !(t_end > 0.0) {
            return Err("need at least two samples over a positive span".into());
        }
        let state = self.state(p)?;
        let times: Vec<f64> = (0..samples).map(|k| t_end * k as f64 / (samples - 1) as f64).collect();
        let mut out = vec![state.norm_capture];
        out.extend(survival_exact(&state, &times));
        Ok(out)
    }

    /// `|phi(t)|^2` on the full `nx x ny` node grid, row-major, zero outside.
    pub fn density(&self, p: &PacketInput, t: f64) -> Result<Vec<f64>, String> {
        let state = self.state(p)?;
        let rho = state.evolve(t).density_snapshot(&self.basis);
        Ok(GridFile::from_interior(&self.basis.grid, &rho, t).values)
    }

    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    pub fn nx(&self) -> usize {
        self.basis.grid.nx
    }

    pub fn ny(&self) -> usize {
        self.basis.grid.ny
    }

    pub fn dx(&self) -> f64 {
        self.basis.grid.dx
    }
}

#[wasm_bindgen]
pub fn trace_ray(x: f64, y: f64, dx: f64, dy: f64, t_max: f64) -> Result<Vec<f64>, JsError> {
    ray_vertices(x, y, dx, dy, t_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct Demo {
    engine: Engine,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(cells_per_unit: usize, e_max: f64) -> Result<Demo, JsError> {
        Engine::new(cells_per_unit, e_max).map(|engine| Demo { engine }).map_err(|e| JsError::new(&e))
    }

    pub fn modes(&self) -> usize {
        self.engine.modes()
    }

    pub fn nx(&self) -> usize {
        self.engine.nx()
    }

    pub fn ny(&self) -> usize {
        self.engine.ny()
    }

    pub fn dx(&self) -> f64 {
        self.engine.dx()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn survival(
        &self,
        x: f64,
        y: f64,
        angle_deg: f64,
        k: f64,
        alpha: f64,
        t_end: f64,
        samples: usize,
    ) -> Result<Vec<f64>, JsError> {
        let p = PacketInput { x, y, angle_deg, k, alpha };
        self.engine.survival(&p, t_end, samples).map_err(|e| JsError::new(&e))
    }

    pub fn density(&self, x: f64, y: f64, angle_deg: f64, k: f64, alpha: f64, t: f64) -> Result<Vec<f64>, JsError> {
        let p = PacketInput { x, y, angle_deg, k, alpha };
        self.engine.density(&p, t).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet() -> PacketInput {
        // Along the diagonal chord, slow enough for a coarse basis.
        PacketInput { x: 1.0, y: 0.5, angle_deg: -(0.5f64.atan().to_degrees()), k: 20.0, alpha: 8.0 }
    }

    #[test]
    fn ray_bounces_off_the_walls() {
        let v = ray_vertices(0.5, 0.5, 1.0, 0.0, 3.0).unwrap();
        assert_eq!(v.len() % 3, 0);
        assert!(v.len() / 3 > 2);
        for c in v.chunks(3) {
            assert!(c[1] >= -1e-12 && c[1] <= 2.0 + 1e-12 && c[2] >= -1e-12 && c[2] <= 1.0 + 1e-12);
        }
        assert!(ray_vertices(3.0, 0.5, 1.0, 0.0, 1.0).is_err());
        assert!(ray_vertices(0.5, 0.5, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn survival_and_density_on_a_small_basis() {
        let e = Engine::new(24, 900.0).unwrap();
        assert!(e.modes() > 50);
        let s = e.survival(&packet(), 0.2, 50).unwrap();
        assert!(s[0] > 0.99, "capture {}", s[0]);
        assert!((s[1] - 1.0).abs() < 1e-12);
        assert!(s[1..].iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        let rho = e.density(&packet(), 0.01).unwrap();
        assert_eq!(rho.len(), e.nx() * e.ny());
        let norm: f64 = rho.iter().sum::<f64>() * e.dx() * e.dx();
        assert!((norm - s[0]).abs() < 1e-9);
        let outside = PacketInput { x: 1.9, y: 0.9, ..packet() };
        assert!(e.survival(&outside, 0.1, 10).is_err());
    }
}
