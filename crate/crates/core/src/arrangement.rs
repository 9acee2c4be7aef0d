//! Partition of the frame rectangle by a set of lines, and the harmony IoU
//! built on top of it.
//!
//! Cells are computed exactly by successive half-plane clipping of the
//! rectangle; a pixel-sampled labeling is provided alongside as a
//! resolution-dependent cross-check.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{polar_distance, Frame, Grid, Line, Point};

/// Cells with area at or below this are dropped as slivers.
pub const MIN_CELL_AREA: f64 = 1e-9;

/// Upper bound on lines per harmony-IoU call.
pub const MAX_HIOU_LINES: usize = 32;

const DUPLICATE_DISTANCE: f64 = 1e-9;

/// Convex polygon with positive (counterclockwise in `(x, y)`) orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCell {
    pub vertices: Vec<Point>,
    /// Side (`-1` / `+1`) of every interior point with respect to each line.
    pub sign_vector: Vec<i8>,
}

impl ConvexCell {
    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }
}

#[derive(Debug, Clone)]
pub struct RegionPartition {
    pub cells: Vec<ConvexCell>,
    pub frame: Frame,
    pub lines: Vec<Line>,
}

impl RegionPartition {
    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(ConvexCell::area).sum()
    }

    /// Maximum number of cells `t` lines in general position can cut a
    /// convex region into.
    pub fn max_cells(t: usize) -> usize {
        1 + t + t * t.saturating_sub(1) / 2
    }
}

/// Shoelace area; positive for counterclockwise vertex order.
pub fn polygon_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    twice / 2.0
}

/// Keeps the part of a convex polygon where `f >= 0` (Sutherland-Hodgman
/// against a single half-plane).
fn clip_half_plane(poly: &[Point], f: impl Fn(Point) -> f64) -> Vec<Point> {
    let n = poly.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let s = poly[i];
        let e = poly[(i + 1) % n];
        let (fs, fe) = (f(s), f(e));
        if fs >= 0.0 {
            out.push(s);
        }
        if (fs > 0.0 && fe < 0.0) || (fs < 0.0 && fe > 0.0) {
            let t = fs / (fs - fe);
            out.push(Point::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
        }
    }
    out
}

fn check_duplicates(lines: &[Line], frame: &Frame) -> Result<()> {
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if polar_distance(&lines[i], &lines[j], frame) < DUPLICATE_DISTANCE {
                return Err(Error::DuplicateLines(i, j));
            }
        }
    }
    Ok(())
}

/// Cuts the frame rectangle by every line in turn and returns the
/// non-degenerate convex cells.
pub fn partition_rectangle(lines: &[Line], frame: &Frame) -> Result<RegionPartition> {
    check_duplicates(lines, frame)?;

    let mut cells = vec![ConvexCell {
        vertices: frame.corners().to_vec(),
        sign_vector: Vec::with_capacity(lines.len()),
    }];
    for line in lines {
        let mut next = Vec::with_capacity(cells.len() * 2);
        for cell in &cells {
            for side in [1i8, -1] {
                let sgn = f64::from(side);
                let vertices = clip_half_plane(&cell.vertices, |p| sgn * line.signed_distance(p));
                if polygon_area(&vertices) > MIN_CELL_AREA {
                    let mut sign_vector = cell.sign_vector.clone();
                    sign_vector.push(side);
                    next.push(ConvexCell { vertices, sign_vector });
                }
            }
        }
        cells = next;
    }
    Ok(RegionPartition {
        cells,
        frame: *frame,
        lines: lines.to_vec(),
    })
}

/// Area of the intersection of two convex polygons.
pub fn intersection_area(a: &[Point], b: &[Point]) -> f64 {
    let mut clipped = a.to_vec();
    let n = b.len();
    for i in 0..n {
        if clipped.len() < 3 {
            return 0.0;
        }
        let e0 = b[i];
        let e1 = b[(i + 1) % n];
        let (dx, dy) = (e1.x - e0.x, e1.y - e0.y);
        clipped = clip_half_plane(&clipped, |p| dx * (p.y - e0.y) - dy * (p.x - e0.x));
    }
    polygon_area(&clipped).max(0.0)
}

fn cell_order(a: &ConvexCell, b: &ConvexCell) -> Ordering {
    a.area()
        .total_cmp(&b.area())
        .then(a.vertices.len().cmp(&b.vertices.len()))
        .then_with(|| {
            a.vertices
                .iter()
                .zip(&b.vertices)
                .map(|(p, q)| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Intersection over union of two convex cells.
///
/// The clip is always performed in a canonical operand order, so
/// `region_iou(a, b)` and `region_iou(b, a)` agree bit for bit.
pub fn region_iou(a: &ConvexCell, b: &ConvexCell) -> f64 {
    let (a, b) = match cell_order(a, b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let inter = intersection_area(&a.vertices, &b.vertices);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Harmony IoU between two already-built partitions.
pub fn hiou_partitions(detected: &RegionPartition, ground_truth: &RegionPartition) -> f64 {
    let s = &detected.cells;
    let t = &ground_truth.cells;
    let ious: Vec<Vec<f64>> = s
        .iter()
        .map(|si| t.iter().map(|tj| region_iou(si, tj)).collect())
        .collect();
    harmony_from_matrix(&ious, s.len(), t.len())
}

/// Bi-directional best-match average over an `n x m` IoU matrix.
fn harmony_from_matrix(ious: &[Vec<f64>], n: usize, m: usize) -> f64 {
    if n + m == 0 {
        return 0.0;
    }
    let rows: f64 = ious.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).sum();
    let cols: f64 = (0..m).map(|j| ious.iter().map(|row| row[j]).fold(0.0, f64::max)).sum();
    (rows + cols) / (n + m) as f64
}

fn check_line_count(lines: &[Line]) -> Result<()> {
    if lines.len() > MAX_HIOU_LINES {
        return Err(Error::TooManyLines {
            count: lines.len(),
            limit: MAX_HIOU_LINES,
        });
    }
    Ok(())
}

/// Harmony IoU between the partitions induced by two line sets.
pub fn hiou(detected: &[Line], ground_truth: &[Line], frame: &Frame) -> Result<f64> {
    check_line_count(detected)?;
    check_line_count(ground_truth)?;
    let s = partition_rectangle(detected, frame)?;
    let t = partition_rectangle(ground_truth, frame)?;
    Ok(hiou_partitions(&s, &t))
}

/// Per-pixel region labels obtained by sampling sign vectors at cell centers.
#[derive(Debug, Clone)]
pub struct LabelMap {
    pub grid: Grid,
    /// Row-major label per grid cell.
    pub labels: Vec<usize>,
    /// Sign vector of each label, in order of first appearance.
    pub sign_vectors: Vec<Vec<i8>>,
}

impl LabelMap {
    pub fn label_count(&self) -> usize {
        self.sign_vectors.len()
    }

    /// Pixel count per label.
    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_count()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Labels every grid cell center by its sign vector. On-line centers count
/// as the `+1` side.
pub fn pixel_label_map(lines: &[Line], grid: Grid, frame: &Frame) -> LabelMap {
    let mut index: HashMap<Vec<i8>, usize> = HashMap::new();
    let mut sign_vectors = Vec::new();
    let mut labels = Vec::with_capacity(grid.len());
    for p in grid.centers(frame) {
        let key: Vec<i8> = lines
            .iter()
            .map(|l| if l.signed_distance(p) >= 0.0 { 1 } else { -1 })
            .collect();
        let label = *index.entry(key.clone()).or_insert_with(|| {
            sign_vectors.push(key);
            sign_vectors.len() - 1
        });
        labels.push(label);
    }
    LabelMap {
        grid,
        labels,
        sign_vectors,
    }
}

/// Harmony IoU measured by pixel counting on a grid.
pub fn hiou_on_grid(detected: &[Line], ground_truth: &[Line], grid: Grid, frame: &Frame) -> Result<f64> {
    check_line_count(detected)?;
    check_line_count(ground_truth)?;
    let s = pixel_label_map(detected, grid, frame);
    let t = pixel_label_map(ground_truth, grid, frame);
    let (n, m) = (s.label_count(), t.label_count());
    let mut joint = vec![vec![0usize; m]; n];
    for (&a, &b) in s.labels.iter().zip(&t.labels) {
        joint[a][b] += 1;
    }
    let hs = s.histogram();
    let ht = t.histogram();
    let ious: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let inter = joint[i][j];
                    inter as f64 / (hs[i] + ht[j] - inter) as f64
                })
                .collect()
        })
        .collect();
    Ok(harmony_from_matrix(&ious, n, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn square() -> Frame {
        Frame::new(100, 100).unwrap()
    }

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> ConvexCell {
        ConvexCell {
            vertices: vec![
                Point::new(x0, y0),
                Point::new(x1, y0),
                Point::new(x1, y1),
                Point::new(x0, y1),
            ],
            sign_vector: vec![],
        }
    }

    #[test]
    fn empty_line_set_is_whole_frame() {
        let p = partition_rectangle(&[], &square()).unwrap();
        assert_eq!(p.cells.len(), 1);
        assert_abs_diff_eq!(p.cells[0].area(), 10_000.0);
    }

    #[test]
    fn one_center_line_halves() {
        let p = partition_rectangle(&[Line::new(0.0, 0.0)], &square()).unwrap();
        assert_eq!(p.cells.len(), 2);
        for c in &p.cells {
            assert_abs_diff_eq!(c.area(), 5000.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cross_quarters() {
        let lines = [Line::new(0.0, 0.0), Line::new(0.0, FRAC_PI_2)];
        let p = partition_rectangle(&lines, &square()).unwrap();
        assert_eq!(p.cells.len(), 4);
        for c in &p.cells {
            assert_abs_diff_eq!(c.area(), 2500.0, epsilon = 1e-9);
        }
        let labels = pixel_label_map(&lines, Grid::new(64, 64), &square());
        assert_eq!(labels.label_count(), 4);
    }

    #[test]
    fn duplicate_lines_rejected() {
        let l = Line::new(3.0, 0.7);
        let err = partition_rectangle(&[l, Line::new(1.0, 0.2), l], &square()).unwrap_err();
        assert!(matches!(err, Error::DuplicateLines(0, 2)));
        // Same line in its flipped representation is still a duplicate.
        let flipped = Line::new(-3.0, 0.7 + PI);
        assert!(partition_rectangle(&[l, flipped], &square()).is_err());
    }

    #[test]
    fn line_outside_frame_does_not_split() {
        let p = partition_rectangle(&[Line::new(90.0, 0.0)], &square()).unwrap();
        assert_eq!(p.cells.len(), 1);
    }

    #[test]
    fn iou_cases() {
        let a = rect(0.0, 0.0, 1.0, 1.0);
        assert_abs_diff_eq!(region_iou(&a, &a), 1.0, epsilon = 1e-12);
        let far = rect(2.0, 2.0, 3.0, 3.0);
        assert_eq!(region_iou(&a, &far), 0.0);
        let top_half = rect(0.0, 0.0, 1.0, 0.5);
        let top_quarter = rect(0.0, 0.0, 1.0, 0.25);
        assert_abs_diff_eq!(region_iou(&top_half, &top_quarter), 0.5, epsilon = 1e-12);
        assert_eq!(
            region_iou(&top_half, &top_quarter).to_bits(),
            region_iou(&top_quarter, &top_half).to_bits()
        );
    }

    #[test]
    fn hiou_mid_versus_quarter_line() {
        let f = square();
        let det = [Line::new(0.0, FRAC_PI_2)];
        let gt = [Line::new(-25.0, FRAC_PI_2)];
        assert_abs_diff_eq!(hiou(&det, &gt, &f).unwrap(), 7.0 / 12.0, epsilon = 1e-12);
    }

    #[test]
    fn hiou_empty_against_center_line() {
        let f = square();
        let gt = [Line::new(0.0, 0.0)];
        assert_abs_diff_eq!(hiou(&[], &gt, &f).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(hiou(&gt, &gt, &f).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hiou_line_cap() {
        let f = Frame::new(1000, 1000).unwrap();
        let many: Vec<Line> = (0..33).map(|i| Line::new(i as f64 * 10.0 - 160.0, 0.3)).collect();
        assert!(matches!(hiou(&many, &[], &f), Err(Error::TooManyLines { .. })));
    }

    #[test]
    fn grid_hiou_close_to_exact() {
        let f = square();
        let det = [Line::new(0.0, FRAC_PI_2)];
        let gt = [Line::new(-25.0, FRAC_PI_2)];
        let g = hiou_on_grid(&det, &gt, Grid::new(480, 480), &f).unwrap();
        assert!((g - 7.0 / 12.0).abs() < 1e-2);
    }

    #[test]
    fn vertical_center_line_labels_split_columns() {
        let m = pixel_label_map(&[Line::new(0.0, 0.0)], Grid::new(4, 4), &square());
        assert_eq!(m.label_count(), 2);
        for r in 0..4 {
            for c in 0..4 {
                let expect = if c < 2 { m.labels[0] } else { m.labels[2] };
                assert_eq!(m.labels[r * 4 + c], expect);
            }
        }
        assert_eq!(m.histogram(), vec![8, 8]);
    }
}
