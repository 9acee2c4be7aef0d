//! Line candidates: the uniform Hough grid, offset refinement, NMS down to
//! `K` reliable lines, combination enumeration, and the detector's
//! training targets and loss.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polar_distance, Frame, Line};

pub const DEFAULT_N_RHO: usize = 32;
pub const DEFAULT_N_THETA: usize = 32;
pub const DEFAULT_K: usize = 8;
/// Normalized polar distance under which NMS suppresses a neighbor.
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.08;
pub const MAX_K: usize = 16;

/// Clamp applied to probabilities before taking logs.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Offset {
    pub d_rho: f64,
    pub d_theta: f64,
}

impl Offset {
    pub const ZERO: Offset = Offset {
        d_rho: 0.0,
        d_theta: 0.0,
    };

    pub const fn new(d_rho: f64, d_theta: f64) -> Self {
        Self { d_rho, d_theta }
    }

    pub fn is_zero(&self) -> bool {
        self.d_rho == 0.0 && self.d_theta == 0.0
    }
}

/// Candidate lines with their predicted probabilities and offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    frame: Frame,
    lines: Vec<Line>,
    probs: Vec<f64>,
    offsets: Vec<Offset>,
}

impl CandidateSet {
    pub fn new(frame: Frame, lines: Vec<Line>, probs: Vec<f64>, offsets: Vec<Offset>) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if probs.len() != lines.len() || offsets.len() != lines.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} lines, {} probabilities, {} offsets",
                lines.len(),
                probs.len(),
                offsets.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::ShapeMismatch(format!("probability {p} outside [0, 1]")));
        }
        if offsets.iter().any(|o| !o.d_rho.is_finite() || !o.d_theta.is_finite()) {
            return Err(Error::NonFiniteInput("candidate offsets"));
        }
        Ok(Self {
            frame,
            lines,
            probs,
            offsets,
        })
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn with_probs(self, probs: Vec<f64>) -> Result<Self> {
        Self::new(self.frame, self.lines, probs, self.offsets)
    }

    pub fn with_offsets(self, offsets: Vec<Offset>) -> Result<Self> {
        Self::new(self.frame, self.lines, self.probs, offsets)
    }
}

/// Uniformly quantized `(ρ, θ)` grid with cell-midpoint samples.
///
/// `θ_j = (j + ½)·π / n_theta` and `ρ_i = -ρ_max + (i + ½)·2ρ_max / n_rho`;
/// candidates are ordered θ-major. Probabilities and offsets start at zero.
pub fn generate_candidate_grid(n_rho: usize, n_theta: usize, frame: &Frame) -> Result<CandidateSet> {
    if n_rho == 0 || n_theta == 0 {
        return Err(Error::EmptyCandidates);
    }
    let rho_max = frame.rho_max();
    let mut lines = Vec::with_capacity(n_rho * n_theta);
    for j in 0..n_theta {
        let theta = (j as f64 + 0.5) * PI / n_theta as f64;
        for i in 0..n_rho {
            let rho = -rho_max + (i as f64 + 0.5) * 2.0 * rho_max / n_rho as f64;
            lines.push(Line::new(rho, theta));
        }
    }
    let n = lines.len();
    CandidateSet::new(*frame, lines, vec![0.0; n], vec![Offset::ZERO; n])
}

/// Applies the predicted offsets: `L̂ = L + O`, re-canonicalized, with `ρ`
/// clamped to `[-ρ_max, ρ_max]`.
pub fn apply_offsets(candidates: &CandidateSet) -> Vec<Line> {
    let rho_max = candidates.frame.rho_max();
    candidates
        .lines
        .iter()
        .zip(&candidates.offsets)
        .map(|(l, o)| {
            let moved = Line::new(l.rho() + o.d_rho, l.theta() + o.d_theta);
            Line::new(moved.rho().clamp(-rho_max, rho_max), moved.theta())
        })
        .collect()
}

/// A line kept by NMS, with the candidate it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliableLine {
    pub index: usize,
    pub line: Line,
    pub prob: f64,
}

/// Greedy NMS over the offset-updated candidates.
///
/// Each round takes the unsuppressed candidate with the highest probability
/// (lower index on ties) and suppresses everything within
/// `suppress_threshold` of it. If candidates run out before `k` picks, the
/// remaining slots are filled with the most probable candidates not yet
/// selected. At most `min(k, N)` lines are returned.
pub fn nms_select(candidates: &CandidateSet, k: usize, suppress_threshold: f64) -> Result<Vec<ReliableLine>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if k == 0 {
        return Err(Error::KOutOfRange(k));
    }
    let updated = apply_offsets(candidates);
    let frame = candidates.frame;
    let probs = &candidates.probs;
    let n = updated.len();

    // Indices by probability descending, index ascending on ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));

    let mut suppressed = vec![false; n];
    let mut selected = vec![false; n];
    let mut picks = Vec::with_capacity(k.min(n));
    for &i in &order {
        if picks.len() == k {
            break;
        }
        if suppressed[i] {
            continue;
        }
        selected[i] = true;
        suppressed[i] = true;
        picks.push(i);
        for j in 0..n {
            if !suppressed[j] && polar_distance(&updated[i], &updated[j], &frame) < suppress_threshold {
                suppressed[j] = true;
            }
        }
    }
    for &i in &order {
        if picks.len() >= k {
            break;
        }
        if !selected[i] {
            selected[i] = true;
            picks.push(i);
        }
    }
    Ok(picks
        .into_iter()
        .map(|i| ReliableLine {
            index: i,
            line: updated[i],
            prob: probs[i],
        })
        .collect())
}

/// A subset of the `k` reliable lines. Bit `i` of `id` selects line `i`
/// (line 0 is the least significant bit).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Combination {
    id: u32,
    k: u8,
}

impl Combination {
    pub fn new(id: u32, k: usize) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::KOutOfRange(k));
        }
        if id >> k != 0 {
            return Err(Error::ShapeMismatch(format!(
                "combination id {id} needs more than {k} bits"
            )));
        }
        Ok(Self { id, k: k as u8 })
    }

    pub fn from_mask(mask: &[bool]) -> Result<Self> {
        let id = mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u32, |acc, (i, _)| acc | (1 << i));
        Self::new(id, mask.len())
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn k(&self) -> usize {
        usize::from(self.k)
    }

    pub fn includes(&self, line: usize) -> bool {
        line < self.k() && self.id & (1 << line) != 0
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.k()).map(|i| self.includes(i)).collect()
    }

    pub fn count(&self) -> usize {
        self.id.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.id == 0
    }

    /// Indices of the included lines, ascending.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.k()).filter(|&i| self.includes(i)).collect()
    }

    /// Picks the included lines out of `reliable`.
    pub fn select<T: Copy>(&self, reliable: &[T]) -> Vec<T> {
        self.indices()
            .into_iter()
            .filter_map(|i| reliable.get(i).copied())
            .collect()
    }

    /// Binary string with the highest line index first, e.g. `"101"`.
    pub fn mask_bits(&self) -> String {
        format!("{:0width$b}", self.id, width = self.k())
    }
}

/// All `2^k` combinations in ascending id order, the empty one first.
pub fn enumerate_combinations(k: usize) -> Result<Vec<Combination>> {
    if k == 0 || k > MAX_K {
        return Err(Error::KOutOfRange(k));
    }
    Ok((0..1u32 << k).map(|id| Combination { id, k: k as u8 }).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorTargets {
    pub gt_probs: Vec<f64>,
    pub gt_offsets: Vec<Offset>,
    pub match_index: Vec<Option<usize>>,
}

impl DetectorTargets {
    pub fn matched_count(&self) -> usize {
        self.match_index.iter().filter(|m| m.is_some()).count()
    }
}

/// Offset that moves `from` onto `to`, using whichever representation of
/// `to` is nearer in `(ρ, θ)`.
pub(crate) fn offset_between(from: &Line, to: &Line, frame: &Frame) -> Offset {
    let rho_scale = frame.rho_max();
    let cost = |o: &Offset| (o.d_rho / rho_scale).hypot(o.d_theta / (PI / 2.0));
    let d_theta = to.theta() - from.theta();
    let options = [
        Offset::new(to.rho() - from.rho(), d_theta),
        Offset::new(-to.rho() - from.rho(), d_theta - PI),
        Offset::new(-to.rho() - from.rho(), d_theta + PI),
    ];
    options
        .into_iter()
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .unwrap_or(Offset::ZERO)
}

/// Classification and regression targets for the candidate grid: a
/// candidate is positive when its nearest ground-truth line lies closer than
/// `match_threshold`, and its target offset then points at that line.
pub fn detector_targets(candidates: &CandidateSet, gt_lines: &[Line], match_threshold: f64) -> DetectorTargets {
    let frame = candidates.frame;
    let n = candidates.len();
    let mut targets = DetectorTargets {
        gt_probs: vec![0.0; n],
        gt_offsets: vec![Offset::ZERO; n],
        match_index: vec![None; n],
    };
    for (i, cand) in candidates.lines.iter().enumerate() {
        let nearest = gt_lines
            .iter()
            .enumerate()
            .map(|(g, gt)| (g, polar_distance(cand, gt, &frame)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((g, d)) = nearest {
            if d < match_threshold {
                targets.gt_probs[i] = 1.0;
                targets.gt_offsets[i] = offset_between(cand, &gt_lines[g], &frame);
                targets.match_index[i] = Some(g);
            }
        }
    }
    targets
}

/// Loss weights; `(1, 5)` by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorLossWeights {
    pub classification: f64,
    pub regression: f64,
}

impl Default for DetectorLossWeights {
    fn default() -> Self {
        Self {
            classification: 1.0,
            regression: 5.0,
        }
    }
}

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// `λ1 · mean BCE(probs, gt_probs) + λ2 · mean smooth-L1(offsets - gt_offsets)`.
///
/// The cross-entropy is averaged over all candidates; the smooth-L1 term is
/// averaged over the two offset components of matched candidates only and
/// vanishes when nothing is matched.
pub fn detector_loss(
    probs: &[f64],
    offsets: &[Offset],
    targets: &DetectorTargets,
    weights: DetectorLossWeights,
) -> Result<f64> {
    let n = targets.gt_probs.len();
    if probs.len() != n || offsets.len() != n || targets.gt_offsets.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} probabilities and {} offsets for {} targets",
            probs.len(),
            offsets.len(),
            n
        )));
    }
    if n == 0 {
        return Err(Error::EmptyCandidates);
    }
    let bce: f64 = probs
        .iter()
        .zip(&targets.gt_probs)
        .map(|(&p, &t)| {
            let p = p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n as f64;

    let mut reg_sum = 0.0;
    let mut reg_terms = 0usize;
    for ((o, g), &p) in offsets.iter().zip(&targets.gt_offsets).zip(&targets.gt_probs) {
        if p == 1.0 {
            reg_sum += smooth_l1(o.d_rho - g.d_rho);
            reg_sum += smooth_l1(o.d_theta - g.d_theta);
            reg_terms += 2;
        }
    }
    let reg = if reg_terms == 0 {
        0.0
    } else {
        reg_sum / reg_terms as f64
    };
    Ok(weights.classification * bce + weights.regression * reg)
}
