//! Three-stage Radau IIA (order 5) for `r' = v(r, t)` in the plane, with
//! simplified Newton iterations and embedded error control. Steps land
//! exactly on the requested output times.

use nalgebra::{Matrix2, Matrix6, Vector2, Vector6};

use super::{GuidanceField, StepStats, TrajectorySample, TrajectoryStatus};
use crate::geometry::Vec2;

/// Absolute and relative local error tolerances.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { abs: 1e-8, rel: 1e-8 }
    }
}

const MAX_NEWTON: usize = 7;
const SAFETY: f64 = 0.9;
const MAX_GROWTH: f64 = 8.0;
const MAX_SHRINK: f64 = 0.2;

struct Tableau {
    c: [f64; 3],
    a: [[f64; 3]; 3],
    /// Coefficients of the embedded error estimate.
    e: [f64; 3],
    /// Real eigenvalue of `A^-1`.
    gamma: f64,
}

fn tableau() -> Tableau {
    let s6 = 6f64.sqrt();
    Tableau {
        c: [(4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0],
        a: [
            [(88.0 - 7.0 * s6) / 360.0, (296.0 - 169.0 * s6) / 1800.0, (-2.0 + 3.0 * s6) / 225.0],
            [(296.0 + 169.0 * s6) / 1800.0, (88.0 + 7.0 * s6) / 360.0, (-2.0 - 3.0 * s6) / 225.0],
            [(16.0 - s6) / 36.0, (16.0 + s6) / 36.0, 1.0 / 9.0],
        ],
        e: [-(13.0 + 7.0 * s6) / 3.0, (-13.0 + 7.0 * s6) / 3.0, -1.0 / 3.0],
        gamma: 3.0 + 9f64.cbrt() - 3f64.cbrt(),
    }
}

pub(crate) struct PathResult {
    pub samples: Vec<TrajectorySample>,
    pub status: TrajectoryStatus,
    pub stats: StepStats,
}

enum Attempt {
    Accepted { y: Vec2, err: f64, newton: usize },
    Rejected { err: f64, newton: usize },
    NewtonFailed,
}

struct Stepper<'a, F: GuidanceField + ?Sized> {
    field: &'a F,
    tol: Tolerances,
    tab: Tableau,
    stats: StepStats,
    near_node: bool,
}

impl<F: GuidanceField + ?Sized> Stepper<'_, F> {
    fn eval(&mut self, p: Vec2, t: f64) -> Vec2 {
        self.stats.evaluations += 1;
        let (v, near) = self.field.velocity(p, t);
        self.near_node |= near;
        v
    }

    fn jacobian(&mut self, y: Vec2, t: f64, f0: Vec2) -> Matrix2<f64> {
        let mut j = Matrix2::zeros();
        for k in 0..2 {
            let d = f64::EPSILON.sqrt() * y[k].abs().max(1e-5);
            let mut yp = y;
            yp[k] += d;
            let col = (self.eval(yp, t) - f0) / d;
            j.set_column(k, &col);
        }
        j
    }

    fn scale(&self, y0: Vec2, y1: Vec2) -> Vec2 {
        Vec2::new(
            self.tol.abs + self.tol.rel * y0.x.abs().max(y1.x.abs()),
            self.tol.abs + self.tol.rel * y0.y.abs().max(y1.y.abs()),
        )
    }

    fn attempt(&mut self, t: f64, y: Vec2, h: f64, f0: Vec2, jac: &Matrix2<f64>, careful: bool) -> Attempt {
        let tab = &self.tab;
        let (c, a, e, gamma) = (tab.c, tab.a, tab.e, tab.gamma);
        let mut m = Matrix6::<f64>::identity();
        for i in 0..3 {
            for k in 0..3 {
                for r in 0..2 {
                    for s in 0..2 {
                        m[(2 * i + r, 2 * k + s)] -= h * a[i][k] * jac[(r, s)];
                    }
                }
            }
        }
        let Some(lu) = Some(m.lu()).filter(|lu| lu.is_invertible()) else {
            return Attempt::NewtonFailed;
        };
        let scal = self.scale(y, y);
        let fnewt = (10.0 * f64::EPSILON / self.tol.rel).max(0.03f64.min(self.tol.rel.sqrt()));

        let mut z = Vector6::<f64>::zeros();
        let mut prev = f64::INFINITY;
        let mut eta = 1.0f64;
        let mut converged = None;
        for iter in 0..MAX_NEWTON {
            let mut fz = [Vec2::zeros(); 3];
            for i in 0..3 {
                let zi = Vec2::new(z[2 * i], z[2 * i + 1]);
                fz[i] = self.eval(y + zi, t + c[i] * h);
            }
            if fz.iter().any(|f| !f.x.is_finite() || !f.y.is_finite()) {
                return Attempt::NewtonFailed;
            }
            let mut g = Vector6::<f64>::zeros();
            for i in 0..3 {
                let mut acc = Vec2::zeros();
                for k in 0..3 {
                    acc += a[i][k] * fz[k];
                }
                g[2 * i] = -z[2 * i] + h * acc.x;
                g[2 * i + 1] = -z[2 * i + 1] + h * acc.y;
            }
            let dz = lu.solve(&g).expect("checked invertible");
            z += dz;
            let dyno = ((0..6).map(|q| (dz[q] / scal[q % 2]).powi(2)).sum::<f64>() / 6.0).sqrt();
            if iter > 0 {
                let theta = dyno / prev;
                if theta >= 0.99 {
                    return Attempt::NewtonFailed;
                }
                eta = theta / (1.0 - theta);
            }
            if eta * dyno <= fnewt || dyno == 0.0 {
                converged = Some(iter + 1);
                break;
            }
            prev = dyno;
        }
        let Some(newton) = converged else {
            return Attempt::NewtonFailed;
        };

        let zs = [Vec2::new(z[0], z[1]), Vec2::new(z[2], z[3]), Vec2::new(z[4], z[5])];
        let y1 = y + zs[2];
        let e1 = Matrix2::identity() * (gamma / h) - jac;
        let Some(e1) = e1.try_inverse() else {
            return Attempt::NewtonFailed;
        };
        let dz = (e[0] * zs[0] + e[1] * zs[1] + e[2] * zs[2]) / h;
        let scal = self.scale(y, y1);
        let norm = |v: Vector2<f64>| (((v.x / scal.x).powi(2) + (v.y / scal.y).powi(2)) / 2.0).sqrt();
        let mut est = e1 * (f0 + dz);
        let mut err = norm(est).max(1e-10);
        if err >= 1.0 && careful {
            let f = self.eval(y + est, t);
            est = e1 * (f + dz);
            err = norm(est).max(1e-10);
        }
        if err < 1.0 {
            Attempt::Accepted { y: y1, err, newton }
        } else {
            Attempt::Rejected { err, newton }
        }
    }
}

fn step_factor(err: f64, newton: usize) -> f64 {
    let fac = SAFETY * (1.0 + 2.0 * MAX_NEWTON as f64) / (newton as f64 + 2.0 * MAX_NEWTON as f64);
    (fac / err.powf(0.25)).clamp(MAX_SHRINK, MAX_GROWTH)
}

/// Integrates one path over `mesh` (ascending, starting at the initial time).
/// On failure the prefix up to the last reached mesh time is kept.
pub(crate) fn integrate_path<F: GuidanceField + ?Sized>(
    field: &F,
    y0: Vec2,
    mesh: &[f64],
    tol: Tolerances,
    max_steps: usize,
) -> PathResult {
    let mut st = Stepper { field, tol, tab: tableau(), stats: StepStats::default(), near_node: false };
    let mut t = mesh[0];
    let mut y = y0;
    let v0 = st.eval(y, t);
    let mut samples = vec![TrajectorySample { t, pos: y, vel: v0 }];
    let span = (mesh[mesh.len() - 1] - mesh[0]).abs().max(f64::MIN_POSITIVE);
    let h_min = 1e-14 * span.max(t.abs());
    let mut h = (1e-6 * span).max(h_min);
    let mut next = 1;
    let mut rejected_last = true;
    let mut exit_retry = false;

    let fail = |samples, st: Stepper<'_, F>, status| PathResult { samples, status, stats: st.stats };

    while next < mesh.len() {
        if st.stats.accepted + st.stats.rejected >= max_steps || h < h_min {
            return fail(samples, st, TrajectoryStatus::StepFailure { t });
        }
        let target = mesh[next];
        let landing = t + h >= target - 1e-12 * span;
        let h_step = if landing { target - t } else { h };
        let f0 = st.eval(y, t);
        let jac = st.jacobian(y, t, f0);
        match st.attempt(t, y, h_step, f0, &jac, rejected_last) {
            Attempt::NewtonFailed => {
                st.stats.rejected += 1;
                h = h_step * 0.5;
                rejected_last = true;
            }
            Attempt::Rejected { err, newton } => {
                st.stats.rejected += 1;
                h = h_step * step_factor(err, newton).min(1.0);
                rejected_last = true;
            }
            Attempt::Accepted { y: y1, err, newton } => {
                if !field.inside(y1) {
                    if exit_retry {
                        return fail(samples, st, TrajectoryStatus::LeftDomain { t: t + h_step });
                    }
                    st.stats.rejected += 1;
                    exit_retry = true;
                    h = h_step * 0.5;
                    rejected_last = true;
                    continue;
                }
                st.stats.accepted += 1;
                exit_retry = false;
                t = if landing { target } else { t + h_step };
                y = y1;
                let mut grow = step_factor(err, newton);
                if rejected_last {
                    grow = grow.min(1.0);
                }
                let h_new = h_step * grow;
                // A step shortened to hit the mesh says little about the natural step.
                h = if landing && h_step < h { h_new.max(h) } else { h_new };
                rejected_last = false;
                if landing {
                    let vel = st.eval(y, t);
                    samples.push(TrajectorySample { t, pos: y, vel });
                    next += 1;
                }
            }
        }
    }
    let status = if st.near_node { TrajectoryStatus::NearNodeVisited } else { TrajectoryStatus::Ok };
    PathResult { samples, status, stats: st.stats }
}
