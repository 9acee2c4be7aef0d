//! Region-grouping cross-attention and the losses that shape it.
//!
//! `M` region queries attend over `HW` pixel features. The softmax runs
//! over the query axis, so every column of the attention matrix is a
//! probability vector over regions. The separation loss pushes the mean
//! attention on the two sides of each ground-truth line apart with a
//! symmetric KL divergence; its gradient is derived analytically.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::geometry::{Frame, Grid, Line};

pub const DEFAULT_REGIONS: usize = 8;
pub const DEFAULT_STEPS: usize = 3;
pub const DEFAULT_SRS_EPSILON: f64 = 1e-8;
pub const DEFAULT_RANK_MARGIN: f64 = 0.1;

/// 2-D sinusoidal positional encoding, `HW x c`.
///
/// The first `c/2` channels encode the column index and the last `c/2` the
/// row index. Within each half, channel `2i` is `sin(pos · ω_i)` and `2i+1`
/// is `cos(pos · ω_i)` with `ω_i = 10000^(-2i / (c/2))`.
pub fn sinusoidal_pe(grid: Grid, c: usize) -> Result<Array2<f64>> {
    if c == 0 || !c.is_multiple_of(4) {
        return Err(Error::BadChannelCount(c));
    }
    let half = c / 2;
    let freqs: Vec<f64> = (0..half / 2)
        .map(|i| 10000f64.powf(-((2 * i) as f64) / half as f64))
        .collect();
    let mut pe = Array2::zeros((grid.len(), c));
    for r in 0..grid.h {
        for col in 0..grid.w {
            let mut row = pe.row_mut(r * grid.w + col);
            for (i, w) in freqs.iter().enumerate() {
                let (x, y) = (col as f64 * w, r as f64 * w);
                row[2 * i] = x.sin();
                row[2 * i + 1] = x.cos();
                row[half + 2 * i] = y.sin();
                row[half + 2 * i + 1] = y.cos();
            }
        }
    }
    Ok(pe)
}

/// Region queries and the projections of one grouping module.
#[derive(Debug, Clone)]
pub struct RegionQuerySet {
    /// `M x C`.
    pub queries: Array2<f64>,
    /// `C x C` each.
    pub u_q: Array2<f64>,
    pub u_k: Array2<f64>,
    pub u_v: Array2<f64>,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct GroupingOutput {
    /// Region queries after the last step, `M x C`.
    pub queries: Array2<f64>,
    /// Attention of the last step, `M x HW`.
    pub attention: Array2<f64>,
    /// Attention of every step, in order.
    pub attention_steps: Vec<Array2<f64>>,
    /// Semantic feature map `Aᵀ R̂`, `HW x C`.
    pub semantic: Array2<f64>,
    /// Most likely region per pixel (lowest index on ties).
    pub membership: Vec<usize>,
}

/// Softmax over rows, independently for every column.
pub fn column_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        col.mapv_inplace(|v| (v - max).exp());
        let sum = col.sum();
        col.mapv_inplace(|v| v / sum);
    }
    out
}

/// Index of the largest entry of each column; ties go to the lowest row.
pub fn membership(attention: &Array2<f64>) -> Vec<usize> {
    attention
        .axis_iter(Axis(1))
        .map(|col| {
            let mut best = 0;
            for (m, &v) in col.iter().enumerate() {
                if v > col[best] {
                    best = m;
                }
            }
            best
        })
        .collect()
}

fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Runs `steps` rounds of region cross-attention.
///
/// Each round computes `R_q = R U_q`, `F_k = (F + S) U_k`,
/// `F_v = (F + S) U_v`, `A = softmax_M(R_q F_kᵀ / τ)` and `R̂ = A F_v + R`,
/// then feeds `R̂` into the next round.
pub fn grouping_forward(
    regions: &RegionQuerySet,
    features: &Array2<f64>,
    positional: &Array2<f64>,
    steps: usize,
) -> Result<GroupingOutput> {
    let (m, c) = regions.queries.dim();
    let hw = features.nrows();
    if features.ncols() != c || positional.dim() != (hw, c) {
        return Err(Error::ShapeMismatch(format!(
            "queries are {m}x{c}, features {:?}, positional {:?}",
            features.dim(),
            positional.dim()
        )));
    }
    for (name, u) in [("U_q", &regions.u_q), ("U_k", &regions.u_k), ("U_v", &regions.u_v)] {
        if u.dim() != (c, c) {
            return Err(Error::ShapeMismatch(format!(
                "{name} is {:?}, expected {c}x{c}",
                u.dim()
            )));
        }
    }
    if steps == 0 {
        return Err(Error::ShapeMismatch("at least one grouping step is required".into()));
    }
    if !(regions.tau.is_finite() && regions.tau > 0.0) {
        return Err(Error::NonFiniteInput("scaling factor"));
    }
    for (name, a) in [
        ("region queries", &regions.queries),
        ("U_q", &regions.u_q),
        ("U_k", &regions.u_k),
        ("U_v", &regions.u_v),
        ("features", features),
        ("positional encoding", positional),
    ] {
        if !all_finite(a) {
            return Err(Error::NonFiniteInput(name));
        }
    }

    let keyed = features + positional;
    let keys = keyed.dot(&regions.u_k);
    let values = keyed.dot(&regions.u_v);

    let mut r = regions.queries.clone();
    let mut attention_steps = Vec::with_capacity(steps);
    for _ in 0..steps {
        let rq = r.dot(&regions.u_q);
        let logits = rq.dot(&keys.t()) / regions.tau;
        let a = column_softmax(&logits);
        r = a.dot(&values) + &r;
        attention_steps.push(a);
    }
    let attention = attention_steps
        .last()
        .cloned()
        .unwrap_or_else(|| Array2::zeros((m, hw)));
    let semantic = attention.t().dot(&r);
    let membership = membership(&attention);
    Ok(GroupingOutput {
        queries: r,
        attention,
        attention_steps,
        semantic,
        membership,
    })
}

#[derive(Debug, Clone)]
pub struct SrsLoss {
    /// Non-positive: minus the summed symmetric divergences.
    pub loss: f64,
    /// `∂loss / ∂A`, same shape as the attention matrix.
    pub grad: Array2<f64>,
}

/// Pixel indices on the `+1` side (on-line cells included) and `-1` side.
fn split_pixels(line: &Line, grid: Grid, frame: &Frame) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, p) in grid.centers(frame).into_iter().enumerate() {
        if line.signed_distance(p) >= 0.0 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

fn mean_columns(a: &Array2<f64>, cols: &[usize]) -> Array1<f64> {
    let mut acc = Array1::zeros(a.nrows());
    for &i in cols {
        acc += &a.column(i);
    }
    acc / cols.len() as f64
}

/// Semantic region separation loss and its gradient.
///
/// For each ground-truth line the attention columns on either side are
/// averaged into `p_X` and `p_Y`, smoothed to `q = (p + ε) / Σ(p + ε)`, and
/// compared with `D(q_X‖q_Y) + D(q_Y‖q_X)`. The loss is the negated sum.
pub fn srs_loss(
    attention: &Array2<f64>,
    gt_lines: &[Line],
    grid: Grid,
    frame: &Frame,
    epsilon: f64,
) -> Result<SrsLoss> {
    if attention.ncols() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "attention has {} columns for a {}x{} grid",
            attention.ncols(),
            grid.h,
            grid.w
        )));
    }
    if !all_finite(attention) {
        return Err(Error::NonFiniteInput("attention"));
    }
    let mut loss = 0.0;
    let mut grad = Array2::zeros(attention.dim());
    for (l, line) in gt_lines.iter().enumerate() {
        let (xs, ys) = split_pixels(line, grid, frame);
        if xs.is_empty() || ys.is_empty() {
            return Err(Error::DegenerateSplit(l));
        }
        let ux = mean_columns(attention, &xs) + epsilon;
        let uy = mean_columns(attention, &ys) + epsilon;
        let (sx, sy) = (ux.sum(), uy.sum());
        let qx = &ux / sx;
        let qy = &uy / sy;

        let log_ratio = Array1::from_shape_fn(qx.len(), |m| (qx[m] / qy[m]).ln());
        let divergence: f64 = (&qx - &qy).dot(&log_ratio);
        loss -= divergence;

        // ∂J/∂q for J = Σ (qx - qy)(ln qx - ln qy).
        let gx = Array1::from_shape_fn(qx.len(), |m| log_ratio[m] + 1.0 - qy[m] / qx[m]);
        let gy = Array1::from_shape_fn(qx.len(), |m| -log_ratio[m] + 1.0 - qx[m] / qy[m]);
        // Through the normalization q = u / Σu.
        let dux = (&gx - gx.dot(&qx)) / sx;
        let duy = (&gy - gy.dot(&qy)) / sy;
        let (nx, ny) = (xs.len() as f64, ys.len() as f64);
        for &i in &xs {
            let mut col = grad.column_mut(i);
            col.scaled_add(-1.0 / nx, &dux);
        }
        for &i in &ys {
            let mut col = grad.column_mut(i);
            col.scaled_add(-1.0 / ny, &duy);
        }
    }
    Ok(SrsLoss { loss, grad })
}

/// Squared-error regression loss and a pairwise margin ranking loss.
///
/// The ranking term averages `max(0, margin - (s_i - s_j))` over every
/// ordered pair whose targets satisfy `s̄_i > s̄_j`; it is zero when no pair
/// is strictly ordered.
pub fn score_losses(score: f64, target: f64, batch: &[(f64, f64)], margin: f64) -> (f64, f64) {
    let reg = (score - target).powi(2);
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, &(si, ti)) in batch.iter().enumerate() {
        for (j, &(sj, tj)) in batch.iter().enumerate() {
            if i != j && ti > tj {
                total += (margin - (si - sj)).max(0.0);
                pairs += 1;
            }
        }
    }
    let rank = if pairs == 0 { 0.0 } else { total / pairs as f64 };
    (reg, rank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn square() -> Frame {
        Frame::new(100, 100).unwrap()
    }

    fn ramp(rows: usize, cols: usize, scale: f64) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * scale - 0.3)
    }

    fn regions(m: usize, c: usize) -> RegionQuerySet {
        RegionQuerySet {
            queries: ramp(m, c, 0.1),
            u_q: ramp(c, c, 0.05),
            u_k: ramp(c, c, 0.04),
            u_v: ramp(c, c, 0.03),
            tau: 1.0,
        }
    }

    #[test]
    fn pe_bounds_and_origin() {
        let pe = sinusoidal_pe(Grid::new(6, 5), 8).unwrap();
        assert_eq!(pe.dim(), (30, 8));
        assert!(pe.iter().all(|v| (-1.0..=1.0).contains(v)));
        let origin = pe.row(0);
        for ch in (0..8).step_by(2) {
            assert_eq!(origin[ch], 0.0);
            assert_eq!(origin[ch + 1], 1.0);
        }
        assert!(matches!(
            sinusoidal_pe(Grid::new(2, 2), 6),
            Err(Error::BadChannelCount(6))
        ));
    }

    #[test]
    fn zero_query_projection_gives_uniform_attention() {
        let mut r = regions(4, 8);
        r.u_q = Array2::zeros((8, 8));
        let f = ramp(12, 8, 0.2);
        let s = sinusoidal_pe(Grid::new(3, 4), 8).unwrap();
        let out = grouping_forward(&r, &f, &s, 3).unwrap();
        assert!(out.attention.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(out.membership.iter().all(|&m| m == 0));
    }

    #[test]
    fn zero_value_projection_keeps_queries() {
        let mut r = regions(4, 8);
        r.u_v = Array2::zeros((8, 8));
        let f = ramp(12, 8, 0.2);
        let s = sinusoidal_pe(Grid::new(3, 4), 8).unwrap();
        let out = grouping_forward(&r, &f, &s, 3).unwrap();
        assert_eq!(out.queries, r.queries);
    }

    #[test]
    fn default_shapes() {
        let (m, c, grid) = (DEFAULT_REGIONS, 96, Grid::new(60, 60));
        let r = regions(m, c);
        let f = ramp(grid.len(), c, 0.01);
        let s = sinusoidal_pe(grid, c).unwrap();
        let out = grouping_forward(&r, &f, &s, DEFAULT_STEPS).unwrap();
        assert_eq!(out.attention.dim(), (8, 3600));
        assert_eq!(out.semantic.dim(), (3600, 96));
        assert_eq!(out.attention_steps.len(), 3);
        assert_eq!(out.membership.len(), 3600);
    }

    #[test]
    fn forward_errors() {
        let r = regions(4, 8);
        let s = sinusoidal_pe(Grid::new(3, 4), 8).unwrap();
        assert!(matches!(
            grouping_forward(&r, &ramp(12, 7, 0.2), &s, 3),
            Err(Error::ShapeMismatch(_))
        ));
        let mut f = ramp(12, 8, 0.2);
        f[(3, 3)] = f64::NAN;
        assert!(matches!(grouping_forward(&r, &f, &s, 3), Err(Error::NonFiniteInput(_))));
    }

    #[test]
    fn uniform_attention_has_zero_srs() {
        let grid = Grid::new(8, 8);
        let a = Array2::from_elem((4, 64), 0.25);
        let out = srs_loss(
            &a,
            &[Line::new(0.0, 0.0), Line::new(5.0, 1.0)],
            grid,
            &square(),
            DEFAULT_SRS_EPSILON,
        )
        .unwrap();
        assert_abs_diff_eq!(out.loss, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn srs_rejects_one_sided_line() {
        let grid = Grid::new(8, 8);
        let a = Array2::from_elem((2, 64), 0.5);
        let err = srs_loss(&a, &[Line::new(0.0, 0.0), Line::new(49.0, 0.0)], grid, &square(), 1e-8).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit(1)));
    }

    #[test]
    fn score_loss_cases() {
        assert_eq!(score_losses(0.4, 0.4, &[], 0.1).0, 0.0);
        assert_abs_diff_eq!(score_losses(0.3, 0.5, &[], 0.1).0, 0.04, epsilon = 1e-15);
        let ordered = [(0.9, 0.9), (0.6, 0.5), (0.2, 0.1)];
        assert_eq!(score_losses(0.0, 0.0, &ordered, 0.1).1, 0.0);
        // One inverted pair out of one ordered pair: hinge 0.1 - (0.2 - 0.6) = 0.5.
        let inverted = [(0.2, 0.9), (0.6, 0.1)];
        assert_abs_diff_eq!(score_losses(0.0, 0.0, &inverted, 0.1).1, 0.5, epsilon = 1e-15);
    }
}
