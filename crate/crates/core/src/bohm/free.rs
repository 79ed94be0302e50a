//! Free-space Gaussian with closed-form Bohmian trajectories.

use super::GuidanceField;
use crate::geometry::Vec2;
use crate::MASS;

/// `exp(-alpha |r - r0|^2 + i p0 . r)` evolving without walls. Each
/// trajectory keeps its offset from the moving centre in proportion to the
/// packet width `s(t) = sqrt(1 + (2 alpha t / m)^2)`.
#[derive(Clone, Copy, Debug)]
pub struct FreeGaussian {
    pub alpha: f64,
    pub center: Vec2,
    pub momentum: Vec2,
}

impl FreeGaussian {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, center: Vec2::zeros(), momentum: Vec2::zeros() }
    }

    fn rate(&self) -> f64 {
        2.0 * self.alpha / MASS
    }

    /// Time for the width to grow by `sqrt(2)`.
    pub fn spreading_time(&self) -> f64 {
        1.0 / self.rate()
    }

    pub fn width_ratio(&self, t: f64) -> f64 {
        (1.0 + (self.rate() * t).powi(2)).sqrt()
    }

    pub fn centre_at(&self, t: f64) -> Vec2 {
        self.center + self.momentum / MASS * t
    }

    /// Exact position at `t` of the trajectory starting at `start`.
    pub fn position(&self, start: Vec2, t: f64) -> Vec2 {
        self.centre_at(t) + (start - self.center) * self.width_ratio(t)
    }
}

impl GuidanceField for FreeGaussian {
    fn velocity(&self, p: Vec2, t: f64) -> (Vec2, bool) {
        let g = self.rate();
        let v = self.momentum / MASS + (p - self.centre_at(t)) * (g * g * t / (1.0 + (g * t).powi(2)));
        (v, false)
    }

    fn inside(&self, _: Vec2) -> bool {
        true
    }
}
