//! Floor geometry: the room polygon, point-in-polygon tests used to reject
//! out-of-bounds pseudo-labels, and reference-point layouts.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Floor position in cm: `x` from the west wall, `y` from the south wall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Position<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Total order on (x, y) used for canonical sorting.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.x
            .f64()
            .total_cmp(&other.x.f64())
            .then_with(|| self.y.f64().total_cmp(&other.y.f64()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub min: Position<T>,
    pub max: Position<T>,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn width(&self) -> T {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> T {
        self.max.y - self.min.y
    }
}

/// Simple polygon with counter-clockwise vertex order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", try_from = "Vec<Position<T>>", into = "Vec<Position<T>>")]
pub struct RoomPolygon<T: Scalar> {
    vertices: Vec<Position<T>>,
}

impl<T: Scalar> TryFrom<Vec<Position<T>>> for RoomPolygon<T> {
    type Error = Error;

    fn try_from(v: Vec<Position<T>>) -> Result<Self> {
        Self::new(v)
    }
}

impl<T: Scalar> From<RoomPolygon<T>> for Vec<Position<T>> {
    fn from(p: RoomPolygon<T>) -> Self {
        p.vertices
    }
}

fn cross<T: Scalar>(o: Position<T>, a: Position<T>, b: Position<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment<T: Scalar>(p: Position<T>, a: Position<T>, b: Position<T>) -> bool {
    cross(a, b, p) == T::zero()
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn sign<T: Scalar>(v: T) -> i8 {
    if v > T::zero() {
        1
    } else if v < T::zero() {
        -1
    } else {
        0
    }
}

/// Closed-segment intersection test (touching counts).
fn segments_intersect<T: Scalar>(
    a: Position<T>,
    b: Position<T>,
    c: Position<T>,
    d: Position<T>,
) -> bool {
    let d1 = sign(cross(c, d, a));
    let d2 = sign(cross(c, d, b));
    let d3 = sign(cross(a, b, c));
    let d4 = sign(cross(a, b, d));
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    (d1 == 0 && on_segment(a, c, d))
        || (d2 == 0 && on_segment(b, c, d))
        || (d3 == 0 && on_segment(c, a, b))
        || (d4 == 0 && on_segment(d, a, b))
}

impl<T: Scalar> RoomPolygon<T> {
    /// Validates and builds a polygon. Clockwise input is reversed to
    /// counter-clockwise.
    pub fn new(vertices: Vec<Position<T>>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::Geometry(format!(
                "polygon needs at least 3 vertices, got {n}"
            )));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::Geometry(format!("vertex {i} is not finite")));
        }
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(Error::Geometry(format!(
                    "vertices {i} and {} are equal",
                    (i + 1) % n
                )));
            }
        }
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Shared endpoint is expected; a collinear fold-back is not.
                    let shared = if j == i + 1 { b } else { a };
                    let (p, q) = if j == i + 1 { (a, d) } else { (b, c) };
                    let folds = cross(shared, p, q) == T::zero()
                        && (p.x - shared.x) * (q.x - shared.x) + (p.y - shared.y) * (q.y - shared.y)
                            > T::zero();
                    if folds {
                        return Err(Error::Geometry(format!("edges {i} and {j} overlap")));
                    }
                } else if segments_intersect(a, b, c, d) {
                    return Err(Error::Geometry(format!("edges {i} and {j} intersect")));
                }
            }
        }
        let mut poly = Self { vertices };
        let area2 = poly.signed_area2();
        if area2 == T::zero() {
            return Err(Error::Geometry("polygon has zero area".into()));
        }
        if area2 < T::zero() {
            poly.vertices.reverse();
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle, mostly for tests and open-floor configs.
    pub fn rectangle(min: Position<T>, max: Position<T>) -> Result<Self> {
        Self::new(vec![
            min,
            Position::new(max.x, min.y),
            max,
            Position::new(min.x, max.y),
        ])
    }

    pub fn vertices(&self) -> &[Position<T>] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (Position<T>, Position<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    fn signed_area2(&self) -> T {
        self.edges()
            .map(|(a, b)| a.x * b.y - b.x * a.y)
            .fold(T::zero(), |s, v| s + v)
    }

    pub fn area(&self) -> T {
        self.signed_area2().abs() / T::of(2.0)
    }

    /// Area centroid.
    pub fn centroid(&self) -> Position<T> {
        let a6 = self.signed_area2() * T::of(3.0);
        let (mut cx, mut cy) = (T::zero(), T::zero());
        for (a, b) in self.edges() {
            let k = a.x * b.y - b.x * a.y;
            cx = cx + (a.x + b.x) * k;
            cy = cy + (a.y + b.y) * k;
        }
        Position::new(cx / a6, cy / a6)
    }

    pub fn bounding_box(&self) -> BoundingBox<T> {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for v in &self.vertices[1..] {
            min.x = min.x.min(v.x);
            min.y = min.y.min(v.y);
            max.x = max.x.max(v.x);
            max.y = max.y.max(v.y);
        }
        BoundingBox { min, max }
    }

    /// Checks that the bounding box lies within `[0, width] × [0, height]`.
    pub fn check_extents(&self, width: T, height: T) -> Result<()> {
        let bb = self.bounding_box();
        if bb.min.x < T::zero() || bb.min.y < T::zero() || bb.max.x > width || bb.max.y > height {
            return Err(Error::Geometry(format!(
                "bounding box ({}, {})-({}, {}) exceeds room extents {width} x {height}",
                bb.min.x, bb.min.y, bb.max.x, bb.max.y
            )));
        }
        Ok(())
    }

    pub fn on_boundary(&self, p: Position<T>) -> bool {
        self.edges().any(|(a, b)| on_segment(p, a, b))
    }

    /// Even-odd ray casting; points on the boundary count as inside.
    pub fn contains(&self, p: Position<T>) -> bool {
        if !p.is_finite() {
            return false;
        }
        if self.on_boundary(p) {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (b.x - a.x) * (p.y - a.y) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn strictly_contains(&self, p: Position<T>) -> bool {
        self.contains(p) && !self.on_boundary(p)
    }
}

/// Reference points (RPs) where training spectra are collected. RP ids are
/// indices into `points`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLayout<T> {
    pub points: Vec<Position<T>>,
    /// Grid pitch (x, y) in cm; `None` for explicit layouts.
    pub spacing_cm: Option<(T, T)>,
}

impl<T: Scalar> ReferenceLayout<T> {
    /// Grid with the given pitch, offset by half a pitch from the bounding
    /// box corner, keeping only points strictly inside the polygon. Points
    /// are returned in canonical (x, y) order.
    pub fn grid(poly: &RoomPolygon<T>, pitch_x: T, pitch_y: T) -> Result<Self> {
        if !(pitch_x > T::zero() && pitch_y > T::zero()) {
            return Err(Error::Geometry("grid pitch must be positive".into()));
        }
        let bb = poly.bounding_box();
        let half = T::of(0.5);
        let mut points = Vec::new();
        let mut i = 0usize;
        loop {
            let x = bb.min.x + pitch_x * (T::of_usize(i) + half);
            if x > bb.max.x {
                break;
            }
            let mut j = 0usize;
            loop {
                let y = bb.min.y + pitch_y * (T::of_usize(j) + half);
                if y > bb.max.y {
                    break;
                }
                let p = Position::new(x, y);
                if poly.strictly_contains(p) {
                    points.push(p);
                }
                j += 1;
            }
            i += 1;
        }
        if points.is_empty() {
            return Err(Error::Geometry("grid produced no reference points".into()));
        }
        Ok(Self {
            points,
            spacing_cm: Some((pitch_x, pitch_y)),
        })
    }

    /// Explicit layout; order is kept, so RP ids follow the given list.
    pub fn explicit(poly: &RoomPolygon<T>, points: Vec<Position<T>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Geometry("layout has no reference points".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if !poly.strictly_contains(*p) {
                return Err(Error::Geometry(format!(
                    "reference point {i} ({}, {}) is not strictly inside the room",
                    p.x, p.y
                )));
            }
            if points[..i].contains(p) {
                return Err(Error::Geometry(format!("reference point {i} is a duplicate")));
            }
        }
        Ok(Self {
            points,
            spacing_cm: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Default U-room vertices: a 600 × 800 cm box minus the notch
/// (200, 300)-(400, 800), counter-clockwise.
pub fn default_room_vertices<T: Scalar>() -> Vec<Position<T>> {
    [
        (0.0, 0.0),
        (600.0, 0.0),
        (600.0, 800.0),
        (400.0, 800.0),
        (400.0, 300.0),
        (200.0, 300.0),
        (200.0, 800.0),
        (0.0, 800.0),
    ]
    .into_iter()
    .map(|(x, y)| Position::new(T::of(x), T::of(y)))
    .collect()
}

/// Default grid pitch: 100 cm across, 90 cm along the arms, which yields 42
/// reference points inside the default U.
pub const DEFAULT_PITCH_CM: (f64, f64) = (100.0, 90.0);

/// The default U-shaped room and its 42-point reference layout.
pub fn default_room<T: Scalar>() -> (RoomPolygon<T>, ReferenceLayout<T>) {
    let poly = RoomPolygon::new(default_room_vertices()).expect("default room is valid");
    let layout = ReferenceLayout::grid(&poly, T::of(DEFAULT_PITCH_CM.0), T::of(DEFAULT_PITCH_CM.1))
        .expect("default layout is valid");
    (poly, layout)
}
