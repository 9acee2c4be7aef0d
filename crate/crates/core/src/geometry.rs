//! Lines in centered polar form and the primitives built on them.
//!
//! Coordinates are centered on the image: the origin sits at the image
//! center, `x` grows to the right and `y` grows downward. A line is the set
//! `{(x, y) : x cos θ + y sin θ = ρ}` with `θ ∈ [0, π)`; `ρ` is the signed
//! distance of the line from the center. `(ρ, θ)` and `(-ρ, θ ± π)` describe
//! the same line, and [`Line::new`] always folds into the canonical range.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed distances at or below this magnitude count as "on the line".
pub const ON_LINE_TOLERANCE: f64 = 1e-12;

/// `|sin(θa - θb)|` below this is treated as parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Image extent in pixels. All geometry is expressed in the centered frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    width: u32,
    height: u32,
}

impl Frame {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidFrame { width, height });
        }
        Ok(Self { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn half_width(&self) -> f64 {
        f64::from(self.width) / 2.0
    }

    pub fn half_height(&self) -> f64 {
        f64::from(self.height) / 2.0
    }

    pub fn area(&self) -> f64 {
        f64::from(self.width) * f64::from(self.height)
    }

    /// Length of the image diagonal.
    pub fn diagonal(&self) -> f64 {
        f64::from(self.width).hypot(f64::from(self.height))
    }

    /// Largest `|ρ|` a line touching the frame can have.
    pub fn rho_max(&self) -> f64 {
        self.diagonal() / 2.0
    }

    /// The four corners, counterclockwise in the `(x, y)` plane.
    pub fn corners(&self) -> [Point; 4] {
        let (hw, hh) = (self.half_width(), self.half_height());
        [
            Point::new(-hw, -hh),
            Point::new(hw, -hh),
            Point::new(hw, hh),
            Point::new(-hw, hh),
        ]
    }

    /// Converts top-left pixel coordinates to centered coordinates.
    pub fn from_top_left(&self, x: f64, y: f64) -> Point {
        Point::new(x - self.half_width(), y - self.half_height())
    }

    pub fn to_top_left(&self, p: Point) -> (f64, f64) {
        (p.x + self.half_width(), p.y + self.half_height())
    }
}

/// A sampling grid laid over a frame (`h` rows by `w` columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
}

impl Grid {
    pub const fn new(h: usize, w: usize) -> Self {
        Self { h, w }
    }

    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Center of grid cell `(row, col)` in the frame's centered coordinates.
    pub fn cell_center(&self, row: usize, col: usize, frame: &Frame) -> Point {
        let sx = f64::from(frame.width()) / self.w as f64;
        let sy = f64::from(frame.height()) / self.h as f64;
        Point::new(
            (col as f64 + 0.5) * sx - frame.half_width(),
            (row as f64 + 0.5) * sy - frame.half_height(),
        )
    }

    /// All cell centers in row-major order.
    pub fn centers(&self, frame: &Frame) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.len());
        for r in 0..self.h {
            for c in 0..self.w {
                out.push(self.cell_center(r, c, frame));
            }
        }
        out
    }
}

/// A full straight line in canonical centered polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    rho: f64,
    theta: f64,
}

impl Line {
    /// Builds a line from any `(ρ, θ)`, folding `θ` into `[0, π)`.
    pub fn new(rho: f64, theta: f64) -> Self {
        let mut theta = theta.rem_euclid(2.0 * PI);
        let mut rho = rho;
        if theta >= PI {
            theta -= PI;
            rho = -rho;
        }
        // rem_euclid can round up to exactly 2π or leave θ a hair below π.
        if !(0.0..PI).contains(&theta) {
            theta = 0.0;
            rho = -rho;
        }
        if rho == 0.0 {
            rho = 0.0;
        }
        Self { rho, theta }
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn normal(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    /// `x cos θ + y sin θ - ρ`; positive on the side the normal points to.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let (c, s) = self.normal();
        p.x * c + p.y * s - self.rho
    }

    /// Whether the line passes through the open frame rectangle.
    pub fn crosses(&self, frame: &Frame) -> bool {
        let (c, s) = self.normal();
        let reach = frame.half_width() * c.abs() + frame.half_height() * s.abs();
        self.rho.abs() < reach
    }

    /// The same line mirrored about the vertical axis `x = 0`.
    pub fn mirrored_horizontally(&self) -> Line {
        Line::new(self.rho, PI - self.theta)
    }
}

/// A chord of the frame: both endpoints lie on the frame boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub p0: Point,
    pub p1: Point,
}

/// Clips a line to the frame and returns its two boundary points, ordered
/// lexicographically by `(x, y)`.
pub fn polar_to_segment(line: Line, frame: &Frame) -> Result<Segment> {
    if !line.crosses(frame) {
        return Err(Error::NoIntersection {
            rho: line.rho,
            theta: line.theta,
        });
    }
    let (c, s) = line.normal();
    let foot = Point::new(line.rho * c, line.rho * s);
    let dir = (-s, c);
    let (hw, hh) = (frame.half_width(), frame.half_height());

    // Liang-Barsky on the parameter t of foot + t * dir.
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (origin, d, half) in [(foot.x, dir.0, hw), (foot.y, dir.1, hh)] {
        if d.abs() < 1e-15 {
            continue;
        }
        let a = (-half - origin) / d;
        let b = (half - origin) / d;
        t_lo = t_lo.max(a.min(b));
        t_hi = t_hi.min(a.max(b));
    }
    let at = |t: f64| {
        let p = Point::new(foot.x + t * dir.0, foot.y + t * dir.1);
        Point::new(p.x.clamp(-hw, hw), p.y.clamp(-hh, hh))
    };
    let (a, b) = (at(t_lo), at(t_hi));
    let (p0, p1) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    Ok(Segment { p0, p1 })
}

/// The canonical line through two distinct points.
pub fn segment_to_polar(p0: Point, p1: Point) -> Result<Line> {
    let (dx, dy) = (p1.x - p0.x, p1.y - p0.y);
    let len = dx.hypot(dy);
    if len == 0.0 || !len.is_finite() {
        return Err(Error::DegenerateSegment);
    }
    let (nx, ny) = (-dy / len, dx / len);
    let theta = ny.atan2(nx);
    let rho = nx * p0.x + ny * p0.y;
    Ok(Line::new(rho, theta))
}

/// Side of `point` relative to `line`: `+1`, `-1`, or `0` when on the line.
pub fn side_of_line(line: &Line, point: Point) -> i8 {
    let d = line.signed_distance(point);
    if d.abs() <= ON_LINE_TOLERANCE {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    }
}

pub fn line_intersection(a: &Line, b: &Line) -> Result<Point> {
    let (ca, sa) = a.normal();
    let (cb, sb) = b.normal();
    let det = ca * sb - sa * cb;
    if det.abs() < PARALLEL_TOLERANCE {
        return Err(Error::Parallel);
    }
    Ok(Point::new(
        (a.rho * sb - b.rho * sa) / det,
        (ca * b.rho - cb * a.rho) / det,
    ))
}

/// Normalized L2 distance in `(ρ, θ)` space.
///
/// `Δρ` is scaled by `ρ_max` and `Δθ` by `π/2`. The second operand is also
/// compared in its flipped representation `(-ρ, θ ∓ π)` so that lines near
/// `θ = 0` and `θ = π` are recognized as neighbors.
pub fn polar_distance(a: &Line, b: &Line, frame: &Frame) -> f64 {
    let rho_scale = frame.rho_max();
    let norm = |d_rho: f64, d_theta: f64| (d_rho / rho_scale).hypot(d_theta / FRAC_PI_2);

    let d_theta = b.theta - a.theta;
    let direct = norm(b.rho - a.rho, d_theta);
    let flipped_rho = -b.rho - a.rho;
    let flipped = norm(flipped_rho, d_theta - PI).min(norm(flipped_rho, d_theta + PI));
    direct.min(flipped)
}

/// One-pixel-thick, 8-connected rasterization of `line` on a grid laid over
/// the frame. Returns row-major cell indices in ascending order.
///
/// The line is walked along its dominant grid axis, taking one cell per step
/// whose index is the floor of the crossing coordinate, so every returned
/// cell center is within half a cell of the line along the minor axis.
pub fn rasterize_line(line: &Line, grid: Grid, frame: &Frame) -> Result<Vec<usize>> {
    if !line.crosses(frame) {
        return Err(Error::NoIntersection {
            rho: line.rho,
            theta: line.theta,
        });
    }
    let sx = grid.w as f64 / f64::from(frame.width());
    let sy = grid.h as f64 / f64::from(frame.height());
    let (c, s) = line.normal();
    // The line in grid units: a * gx + b * gy = k.
    let a = c / sx;
    let b = s / sy;
    let k = line.rho + c * frame.half_width() + s * frame.half_height();

    let mut cells = Vec::with_capacity(grid.h.max(grid.w));
    if a.abs() >= b.abs() {
        for row in 0..grid.h {
            let gy = row as f64 + 0.5;
            let gx = (k - b * gy) / a;
            if gx >= 0.0 && gx < grid.w as f64 {
                cells.push(row * grid.w + gx.floor() as usize);
            }
        }
    } else {
        for col in 0..grid.w {
            let gx = col as f64 + 0.5;
            let gy = (k - a * gx) / b;
            if gy >= 0.0 && gy < grid.h as f64 {
                cells.push(gy.floor() as usize * grid.w + col);
            }
        }
        cells.sort_unstable();
    }
    Ok(cells)
}
