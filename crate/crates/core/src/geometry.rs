//! Billiard domains and classical specular ray dynamics.
//!
//! The desymmetrized stadium is the quarter of a Bunimovich stadium lying in
//! the first quadrant: the rectangle `[0, a] x [0, r]` glued to a quarter disc
//! of radius `r` centred at `(a, 0)`. The walls `x = 0` and `y = 0` are the
//! symmetry lines of the full stadium.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

/// Distance below which a boundary hit touches two segments at once.
const CORNER_TOL: f64 = 1e-12;

/// Axis normal to an axis-aligned wall.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// An axis-aligned straight wall: `coord` along `normal`, spanning `[lo, hi]`
/// along the other axis. `inside` is `+1.0` when the region lies on the
/// side of larger coordinates, `-1.0` otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wall {
    pub normal: Axis,
    pub coord: f64,
    pub lo: f64,
    pub hi: f64,
    pub inside: f64,
}

impl Wall {
    /// True if `p` lies on this wall (endpoints included).
    pub fn holds(&self, p: Vec2, tol: f64) -> bool {
        let (along_normal, along_wall) = match self.normal {
            Axis::X => (p.x, p.y),
            Axis::Y => (p.y, p.x),
        };
        (along_normal - self.coord).abs() <= tol
            && along_wall >= self.lo - tol
            && along_wall <= self.hi + tol
    }
}

/// Closed planar region with Dirichlet walls.
///
/// Implementors keep their bounding box anchored at the origin; grids place
/// nodes at integer multiples of a spacing that divides [`Billiard::grid_unit`],
/// so straight walls land exactly on grid lines.
pub trait Billiard {
    /// Closed-region membership (boundary points included).
    fn contains(&self, p: Vec2) -> bool;
    /// Open-region membership (boundary points excluded).
    fn is_interior(&self, p: Vec2) -> bool;
    /// Upper-right corner of the bounding box `[0, w] x [0, h]`.
    fn extent(&self) -> Vec2;
    fn area(&self) -> f64;
    fn perimeter(&self) -> f64;
    /// Straight walls aligned with the coordinate axes.
    fn straight_walls(&self) -> Vec<Wall>;
    /// Length that grid spacings must divide.
    fn grid_unit(&self) -> f64;
}

/// Desymmetrized stadium billiard.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub straight_length: f64,
    pub radius: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Self { straight_length: 1.0, radius: 1.0 }
    }
}

impl Domain {
    pub fn new(straight_length: f64, radius: f64) -> Self {
        Self { straight_length, radius }
    }

    fn arc_center(&self) -> Vec2 {
        Vec2::new(self.straight_length, 0.0)
    }

    /// Classify which boundary pieces a point touches, within `tol`.
    fn touching(&self, p: Vec2, tol: f64) -> Vec<Segment> {
        let (a, r) = (self.straight_length, self.radius);
        let mut out = Vec::with_capacity(2);
        if p.x.abs() <= tol && p.y >= -tol && p.y <= r + tol {
            out.push(Segment::Left);
        }
        if (p.y - r).abs() <= tol && p.x >= -tol && p.x <= a + tol {
            out.push(Segment::Top);
        }
        if p.y.abs() <= tol && p.x >= -tol && p.x <= a + r + tol {
            out.push(Segment::Bottom);
        }
        if ((p - self.arc_center()).norm() - r).abs() <= tol && p.x >= a - tol && p.y >= -tol {
            out.push(Segment::Arc);
        }
        out
    }

    /// Inward unit normal of a boundary piece at `p`.
    fn inward_normal(&self, seg: Segment, p: Vec2) -> Vec2 {
        match seg {
            Segment::Left => Vec2::new(1.0, 0.0),
            Segment::Top => Vec2::new(0.0, -1.0),
            Segment::Bottom => Vec2::new(0.0, 1.0),
            Segment::Arc => (self.arc_center() - p).normalize(),
        }
    }

    /// Earliest boundary crossing of the ray `p + s d` with `s > s_min`.
    fn next_hit(&self, p: Vec2, d: Vec2, s_min: f64) -> Option<(f64, Segment)> {
        let (a, r) = (self.straight_length, self.radius);
        let tol = CORNER_TOL * self.scale();
        let mut best: Option<(f64, Segment)> = None;
        let mut consider = |s: f64, seg: Segment| {
            if s > s_min && best.is_none_or(|(b, _)| s < b) {
                best = Some((s, seg));
            }
        };
        if d.x < 0.0 {
            let s = -p.x / d.x;
            let y = p.y + s * d.y;
            if y >= -tol && y <= r + tol {
                consider(s, Segment::Left);
            }
        }
        if d.y > 0.0 {
            let s = (r - p.y) / d.y;
            let x = p.x + s * d.x;
            if x >= -tol && x <= a + tol {
                consider(s, Segment::Top);
            }
        }
        if d.y < 0.0 {
            let s = -p.y / d.y;
            let x = p.x + s * d.x;
            if x >= -tol && x <= a + r + tol {
                consider(s, Segment::Bottom);
            }
        }
        // Exit root of the circle: |p + s d - c|^2 = r^2.
        let rel = p - self.arc_center();
        let half_b = d.dot(&rel);
        let c = rel.norm_squared() - r * r;
        let disc = half_b * half_b - c;
        if disc >= 0.0 {
            let s = -half_b + disc.sqrt();
            let q = p + s * d;
            if q.x >= a - tol && q.y >= -tol {
                consider(s, Segment::Arc);
            }
        }
        best
    }

    fn scale(&self) -> f64 {
        (self.straight_length + self.radius).max(1.0)
    }

    /// Euclidean distance from `p` to the boundary (for interior points).
    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        let (a, r) = (self.straight_length, self.radius);
        let to_left = dist_to_segment(p, Vec2::new(0.0, 0.0), Vec2::new(0.0, r));
        let to_top = dist_to_segment(p, Vec2::new(0.0, r), Vec2::new(a, r));
        let to_bottom = dist_to_segment(p, Vec2::new(0.0, 0.0), Vec2::new(a + r, 0.0));
        let rel = p - self.arc_center();
        let angle = rel.y.atan2(rel.x).clamp(0.0, PI / 2.0);
        let on_arc = self.arc_center() + r * Vec2::new(angle.cos(), angle.sin());
        let to_arc = (p - on_arc).norm();
        to_left.min(to_top).min(to_bottom).min(to_arc)
    }
}

impl Billiard for Domain {
    fn contains(&self, p: Vec2) -> bool {
        let (a, r) = (self.straight_length, self.radius);
        p.y >= 0.0
            && p.y <= r
            && p.x >= 0.0
            && (p.x <= a || (p.x - a).powi(2) + p.y * p.y <= r * r)
    }

    fn is_interior(&self, p: Vec2) -> bool {
        let (a, r) = (self.straight_length, self.radius);
        p.y > 0.0 && p.y < r && p.x > 0.0 && (p.x < a || (p.x - a).powi(2) + p.y * p.y < r * r)
    }

    fn extent(&self) -> Vec2 {
        Vec2::new(self.straight_length + self.radius, self.radius)
    }

    fn area(&self) -> f64 {
        self.straight_length * self.radius + PI * self.radius * self.radius / 4.0
    }

    fn perimeter(&self) -> f64 {
        let (a, r) = (self.straight_length, self.radius);
        // left + top + bottom + arc
        r + a + (a + r) + PI * r / 2.0
    }

    fn straight_walls(&self) -> Vec<Wall> {
        let (a, r) = (self.straight_length, self.radius);
        vec![
            Wall { normal: Axis::X, coord: 0.0, lo: 0.0, hi: r, inside: 1.0 },
            Wall { normal: Axis::Y, coord: r, lo: 0.0, hi: a, inside: -1.0 },
            Wall { normal: Axis::Y, coord: 0.0, lo: 0.0, hi: a + r, inside: 1.0 },
        ]
    }

    fn grid_unit(&self) -> f64 {
        self.radius
    }
}

/// Axis-aligned rectangle `[0, width] x [0, height]`, used as an analytic
/// test harness for the eigensolver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rectangle {
    pub width: f64,
    pub height: f64,
}

impl Rectangle {
    pub fn unit_square() -> Self {
        Self { width: 1.0, height: 1.0 }
    }
}

impl Billiard for Rectangle {
    fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    fn is_interior(&self, p: Vec2) -> bool {
        p.x > 0.0 && p.x < self.width && p.y > 0.0 && p.y < self.height
    }

    fn extent(&self) -> Vec2 {
        Vec2::new(self.width, self.height)
    }

    fn area(&self) -> f64 {
        self.width * self.height
    }

    fn perimeter(&self) -> f64 {
        2.0 * (self.width + self.height)
    }

    fn straight_walls(&self) -> Vec<Wall> {
        let (w, h) = (self.width, self.height);
        vec![
            Wall { normal: Axis::X, coord: 0.0, lo: 0.0, hi: h, inside: 1.0 },
            Wall { normal: Axis::X, coord: w, lo: 0.0, hi: h, inside: -1.0 },
            Wall { normal: Axis::Y, coord: 0.0, lo: 0.0, hi: w, inside: 1.0 },
            Wall { normal: Axis::Y, coord: h, lo: 0.0, hi: w, inside: -1.0 },
        ]
    }

    fn grid_unit(&self) -> f64 {
        self.height.min(self.width)
    }
}

/// Any supported billiard region; this is what grids and bases record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Stadium(Domain),
    Rectangle(Rectangle),
}

impl From<Domain> for Region {
    fn from(d: Domain) -> Self {
        Region::Stadium(d)
    }
}

impl From<Rectangle> for Region {
    fn from(r: Rectangle) -> Self {
        Region::Rectangle(r)
    }
}

macro_rules! dispatch {
    ($self:ident, $b:ident => $e:expr) => {
        match $self {
            Region::Stadium($b) => $e,
            Region::Rectangle($b) => $e,
        }
    };
}

impl Billiard for Region {
    fn contains(&self, p: Vec2) -> bool {
        dispatch!(self, b => b.contains(p))
    }
    fn is_interior(&self, p: Vec2) -> bool {
        dispatch!(self, b => b.is_interior(p))
    }
    fn extent(&self) -> Vec2 {
        dispatch!(self, b => b.extent())
    }
    fn area(&self) -> f64 {
        dispatch!(self, b => b.area())
    }
    fn perimeter(&self) -> f64 {
        dispatch!(self, b => b.perimeter())
    }
    fn straight_walls(&self) -> Vec<Wall> {
        dispatch!(self, b => b.straight_walls())
    }
    fn grid_unit(&self) -> f64 {
        dispatch!(self, b => b.grid_unit())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Segment {
    Left,
    Top,
    Bottom,
    Arc,
}

/// Classical ray: position, unit heading and speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub position: Vec2,
    pub direction: Vec2,
    pub speed: f64,
}

impl Ray {
    /// Builds a ray, normalizing `heading`.
    pub fn new(position: Vec2, heading: Vec2, speed: f64) -> Self {
        Self { position, direction: heading.normalize(), speed }
    }
}

/// What to do when a ray runs into a junction of two walls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CornerPolicy {
    /// Right-angle corners reverse the heading (the double reflection seen in
    /// the unfolded full stadium); the event is recorded and the ray goes on.
    #[default]
    Unfold,
    /// Stop the path at the first right-angle corner.
    Terminate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RayStatus {
    Completed,
    /// Path stopped at a corner under [`CornerPolicy::Terminate`].
    CornerTerminated { t: f64 },
}

/// Piecewise-linear classical path.
#[derive(Clone, Debug)]
pub struct RayPath {
    /// `(t, position)` at the start, at each reflection and at the end.
    pub vertices: Vec<(f64, Vec2)>,
    /// Heading after the last vertex.
    pub final_direction: Vec2,
    pub speed: f64,
    pub status: RayStatus,
    /// Times at which a right-angle corner was hit.
    pub corner_events: Vec<f64>,
}

impl RayPath {
    pub fn end(&self) -> Vec2 {
        self.vertices.last().expect("path has a start vertex").1
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| (w[1].1 - w[0].1).norm()).sum()
    }

    /// Position at time `t`, clamped to the path's time span.
    pub fn position_at(&self, t: f64) -> Vec2 {
        let first = self.vertices[0];
        if t <= first.0 {
            return first.1;
        }
        for w in self.vertices.windows(2) {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            if t <= t1 {
                if t1 <= t0 {
                    return p1;
                }
                return p0 + (p1 - p0) * ((t - t0) / (t1 - t0));
            }
        }
        self.end()
    }
}

/// Propagates a classical ray with specular reflection for `t_max`.
pub fn reflect_ray(domain: &Domain, ray: &Ray, t_max: f64) -> RayPath {
    reflect_ray_with(domain, ray, t_max, CornerPolicy::default())
}

pub fn reflect_ray_with(domain: &Domain, ray: &Ray, t_max: f64, policy: CornerPolicy) -> RayPath {
    let tol = CORNER_TOL * domain.scale();
    let mut p = ray.position;
    let mut d = ray.direction;
    let mut vertices = vec![(0.0, p)];
    let mut corner_events = Vec::new();
    let mut status = RayStatus::Completed;
    let total = ray.speed * t_max;
    let mut travelled = 0.0;

    while travelled < total {
        let remaining = total - travelled;
        let hit = domain.next_hit(p, d, tol);
        match hit {
            Some((s, seg)) if s < remaining => {
                let q = p + s * d;
                travelled += s;
                let t = travelled / ray.speed;
                vertices.push((t, q));
                let mut segs = domain.touching(q, tol);
                if !segs.contains(&seg) {
                    segs.push(seg);
                }
                if segs.len() >= 2 {
                    let n0 = domain.inward_normal(segs[0], q);
                    let n1 = domain.inward_normal(segs[1], q);
                    if n0.dot(&n1) > 1.0 - 1e-9 {
                        // Tangent junction (top wall meets the arc): smooth.
                        d = reflect(d, n0);
                    } else {
                        corner_events.push(t);
                        if policy == CornerPolicy::Terminate {
                            status = RayStatus::CornerTerminated { t };
                            break;
                        }
                        d = -d;
                    }
                } else {
                    d = reflect(d, domain.inward_normal(seg, q));
                }
                p = q;
            }
            _ => {
                let q = p + remaining * d;
                vertices.push((t_max, q));
                travelled = total;
            }
        }
    }
    RayPath { vertices, final_direction: d, speed: ray.speed, status, corner_events }
}

fn reflect(d: Vec2, n: Vec2) -> Vec2 {
    let r = d - 2.0 * d.dot(&n) * n;
    r.normalize()
}

/// Distance from `p` to the segment `[a, b]`.
pub fn dist_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let s = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + s * ab)).norm()
}

/// A periodic orbit traced forth and back along a chord.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbit {
    pub start: Vec2,
    pub end: Vec2,
}

impl PeriodicOrbit {
    pub fn midpoint(&self) -> Vec2 {
        (self.start + self.end) * 0.5
    }

    pub fn chord_length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Length of one full period (there and back).
    pub fn length(&self) -> f64 {
        2.0 * self.chord_length()
    }

    pub fn period(&self, speed: f64) -> f64 {
        self.length() / speed
    }

    /// Unit heading from `start` towards `end`.
    pub fn direction(&self) -> Vec2 {
        (self.end - self.start).normalize()
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        dist_to_segment(p, self.start, self.end)
    }

    pub fn polyline(&self) -> Vec<Vec2> {
        vec![self.start, self.end]
    }
}

/// The diagonal orbit bouncing between `(0, r)` and `(a + r, 0)`.
pub fn diagonal_po(domain: &Domain) -> PeriodicOrbit {
    PeriodicOrbit {
        start: Vec2::new(0.0, domain.radius),
        end: Vec2::new(domain.straight_length + domain.radius, 0.0),
    }
}

/// Writes `(t, x, y)` rows with a header line.
pub fn write_polyline_csv<W: Write>(mut w: W, vertices: &[(f64, Vec2)]) -> io::Result<()> {
    writeln!(w, "t,x,y")?;
    for (t, p) in vertices {
        writeln!(w, "{},{},{}", t, p.x, p.y)?;
    }
    Ok(())
}
