//! Combination scoring and the exhaustive search over combinations.

use std::cmp::Ordering;

use crate::arrangement::{hiou_partitions, partition_rectangle, RegionPartition, MAX_HIOU_LINES};
use crate::candidates::{enumerate_combinations, nms_select, CandidateSet, Combination, ReliableLine, MAX_K};
use crate::error::{Error, Result};
use crate::geometry::{rasterize_line, Frame, Grid, Line, Point};
use crate::io::GrayImage;

/// Scores a combination of reliable lines with a value in `[0, 1]`.
///
/// Implementations must be pure: the same `(reliable, combo)` always yields
/// the same score.
pub trait Scorer: Sync {
    fn score(&self, reliable: &[Line], combo: Combination) -> Result<f64>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, reliable: &[Line], combo: Combination) -> Result<f64> {
        (**self).score(reliable, combo)
    }
}

fn check_combo(reliable: &[Line], combo: Combination) -> Result<()> {
    if combo.k() != reliable.len() {
        return Err(Error::ShapeMismatch(format!(
            "combination over {} lines used with {} reliable lines",
            combo.k(),
            reliable.len()
        )));
    }
    Ok(())
}

/// Harmony IoU between the included lines and the ground truth.
pub fn oracle_score(reliable: &[Line], combo: Combination, gt: &[Line], frame: &Frame) -> Result<f64> {
    OracleScorer::new(gt, frame)?.score(reliable, combo)
}

/// Scores combinations by their harmony IoU against known ground truth.
/// The ground-truth partition is built once.
#[derive(Debug, Clone)]
pub struct OracleScorer {
    frame: Frame,
    gt: RegionPartition,
}

impl OracleScorer {
    pub fn new(gt: &[Line], frame: &Frame) -> Result<Self> {
        if gt.len() > MAX_HIOU_LINES {
            return Err(Error::TooManyLines {
                count: gt.len(),
                limit: MAX_HIOU_LINES,
            });
        }
        Ok(Self {
            frame: *frame,
            gt: partition_rectangle(gt, frame)?,
        })
    }
}

impl Scorer for OracleScorer {
    fn score(&self, reliable: &[Line], combo: Combination) -> Result<f64> {
        check_combo(reliable, combo)?;
        let detected = partition_rectangle(&combo.select(reliable), &self.frame)?;
        Ok(hiou_partitions(&detected, &self.gt))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicWeights {
    pub edge: f64,
    pub region: f64,
    pub penalty: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        Self {
            edge: 1.0,
            region: 1.0,
            penalty: 0.25,
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weight-free image-evidence scorer.
///
/// The image is box-averaged onto the feature grid and contrast-normalized
/// (divided by its standard deviation in `[0, 1]` intensity units). A
/// combination then scores
/// `logistic(w_e · E + w_r · Rg - w_p · n)` where
///
/// * `E` is the mean central-difference gradient magnitude over the union of
///   the included lines' rasterized cells (0 for the empty combination);
/// * `Rg` sums, over included lines, the area-weighted mean absolute
///   difference of mean intensity between each pair of cells of the
///   combination's partition that face each other across that line;
/// * `n` is the number of included lines.
#[derive(Debug, Clone)]
pub struct HeuristicScorer {
    frame: Frame,
    grid: Grid,
    weights: HeuristicWeights,
    centers: Vec<Point>,
    intensity: Vec<f64>,
    gradient: Vec<f64>,
}

impl HeuristicScorer {
    pub fn new(image: &GrayImage, frame: &Frame, grid: Grid, weights: HeuristicWeights) -> Result<Self> {
        let (w, h) = (image.width(), image.height());
        if w == 0 || h == 0 {
            return Err(Error::BadImage("image is empty".into()));
        }
        // Aspect ratios must agree: w / h == W / H.
        if u64::from(w) * u64::from(frame.height()) != u64::from(h) * u64::from(frame.width()) {
            return Err(Error::BadImage(format!(
                "{w}x{h} image does not match the {}x{} frame aspect",
                frame.width(),
                frame.height()
            )));
        }
        if grid.is_empty() {
            return Err(Error::BadImage("empty scoring grid".into()));
        }
        let intensity = normalize(&box_resample(image, grid));
        let gradient = gradient_magnitude(&intensity, grid);
        Ok(Self {
            frame: *frame,
            grid,
            weights,
            centers: grid.centers(frame),
            intensity,
            gradient,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// The `(E, Rg, n)` terms for a combination.
    pub fn evidence(&self, reliable: &[Line], combo: Combination) -> Result<(f64, f64, usize)> {
        check_combo(reliable, combo)?;
        let lines = combo.select(reliable);
        let n = lines.len();
        if n == 0 {
            return Ok((0.0, 0.0, 0));
        }
        Ok((self.edge_term(&lines), self.region_term(&lines), n))
    }

    fn edge_term(&self, lines: &[Line]) -> f64 {
        let mut on = vec![false; self.grid.len()];
        for line in lines {
            // Lines that miss the frame contribute no cells.
            if let Ok(cells) = rasterize_line(line, self.grid, &self.frame) {
                for c in cells {
                    on[c] = true;
                }
            }
        }
        let (sum, count) = on
            .iter()
            .zip(&self.gradient)
            .filter(|(&o, _)| o)
            .fold((0.0, 0usize), |(s, n), (_, g)| (s + g, n + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    fn region_term(&self, lines: &[Line]) -> f64 {
        let n = lines.len();
        let mut sums = vec![0.0; 1 << n];
        let mut counts = vec![0usize; 1 << n];
        for (p, &v) in self.centers.iter().zip(&self.intensity) {
            let key = lines
                .iter()
                .enumerate()
                .filter(|(_, l)| l.signed_distance(*p) >= 0.0)
                .fold(0usize, |acc, (j, _)| acc | (1 << j));
            sums[key] += v;
            counts[key] += 1;
        }
        let mut total = 0.0;
        for j in 0..n {
            let bit = 1 << j;
            let (mut weighted, mut weight) = (0.0, 0.0);
            for key in (0..1usize << n).filter(|k| k & bit == 0) {
                let other = key | bit;
                let (ca, cb) = (counts[key], counts[other]);
                if ca == 0 || cb == 0 {
                    continue;
                }
                let diff = (sums[key] / ca as f64 - sums[other] / cb as f64).abs();
                let w = (ca + cb) as f64;
                weighted += w * diff;
                weight += w;
            }
            if weight > 0.0 {
                total += weighted / weight;
            }
        }
        total
    }
}

impl Scorer for HeuristicScorer {
    fn score(&self, reliable: &[Line], combo: Combination) -> Result<f64> {
        let (e, rg, n) = self.evidence(reliable, combo)?;
        let w = self.weights;
        Ok(logistic(w.edge * e + w.region * rg - w.penalty * n as f64))
    }
}

/// Mean of the image pixels falling in each grid cell, in `[0, 1]` units.
pub(crate) fn box_resample(image: &GrayImage, grid: Grid) -> Vec<f64> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut sums = vec![0.0; grid.len()];
    let mut counts = vec![0usize; grid.len()];
    for y in 0..h {
        let r = y * grid.h / h;
        for x in 0..w {
            let c = x * grid.w / w;
            sums[r * grid.w + c] += f64::from(image.get(x as u32, y as u32)) / 255.0;
            counts[r * grid.w + c] += 1;
        }
    }
    // Grids finer than the image leave cells without samples; fill those from
    // the nearest image pixel.
    for r in 0..grid.h {
        for c in 0..grid.w {
            let i = r * grid.w + c;
            if counts[i] == 0 {
                let y = ((r as f64 + 0.5) * h as f64 / grid.h as f64) as usize;
                let x = ((c as f64 + 0.5) * w as f64 / grid.w as f64) as usize;
                sums[i] = f64::from(image.get(x.min(w - 1) as u32, y.min(h - 1) as u32)) / 255.0;
                counts[i] = 1;
            }
        }
    }
    sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect()
}

pub(crate) fn normalize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = if std > 1e-9 { 1.0 / std } else { 1.0 };
    values.iter().map(|v| v * scale).collect()
}

pub(crate) fn gradient_magnitude(values: &[f64], grid: Grid) -> Vec<f64> {
    let at = |r: usize, c: usize| values[r * grid.w + c];
    let mut out = Vec::with_capacity(values.len());
    for r in 0..grid.h {
        for c in 0..grid.w {
            let gx = (at(r, (c + 1).min(grid.w - 1)) - at(r, c.saturating_sub(1))) / 2.0;
            let gy = (at((r + 1).min(grid.h - 1), c) - at(r.saturating_sub(1), c)) / 2.0;
            out.push(gx.hypot(gy));
        }
    }
    out
}

/// Which combinations a search evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchConstraint {
    All,
    ExactlyN(usize),
    Singletons,
    Pairs,
}

impl SearchConstraint {
    pub fn admits(&self, combo: Combination) -> bool {
        match *self {
            SearchConstraint::All => true,
            SearchConstraint::ExactlyN(n) => combo.count() == n,
            SearchConstraint::Singletons => combo.count() == 1,
            SearchConstraint::Pairs => combo.count() == 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub combo: Combination,
    pub score: f64,
}

/// Scores of every evaluated combination, in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub records: Vec<ScoreRecord>,
    /// Indices into `records`, best first; ties broken by lower id.
    pub ranking: Vec<usize>,
}

impl ScoreReport {
    pub fn from_records(mut records: Vec<ScoreRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::NoCombination);
        }
        records.sort_by_key(|r| r.combo.id());
        let mut ranking: Vec<usize> = (0..records.len()).collect();
        ranking.sort_by(|&a, &b| rank_order(&records[a], &records[b]));
        Ok(Self { records, ranking })
    }

    pub fn best(&self) -> &ScoreRecord {
        &self.records[self.ranking[0]]
    }

    pub fn best_id(&self) -> u32 {
        self.best().combo.id()
    }

    /// Records in rank order, paired with their 1-based rank.
    pub fn ranked(&self) -> impl Iterator<Item = (usize, &ScoreRecord)> {
        self.ranking.iter().enumerate().map(|(r, &i)| (r + 1, &self.records[i]))
    }
}

fn rank_order(a: &ScoreRecord, b: &ScoreRecord) -> Ordering {
    b.score.total_cmp(&a.score).then(a.combo.id().cmp(&b.combo.id()))
}

/// Evaluates every combination admitted by `constraint` and reports the
/// best one.
pub fn search_best_combination(
    reliable: &[Line],
    scorer: &dyn Scorer,
    constraint: SearchConstraint,
) -> Result<ScoreReport> {
    search_combinations(reliable, scorer, constraint, |_| true)
}

/// Like [`search_best_combination`], additionally skipping combinations for
/// which `admit` returns `false`.
pub fn search_combinations(
    reliable: &[Line],
    scorer: &dyn Scorer,
    constraint: SearchConstraint,
    admit: impl Fn(Combination) -> bool,
) -> Result<ScoreReport> {
    if reliable.is_empty() || reliable.len() > MAX_K {
        return Err(Error::KOutOfRange(reliable.len()));
    }
    let mut records = Vec::new();
    for combo in enumerate_combinations(reliable.len())? {
        if !constraint.admits(combo) || !admit(combo) {
            continue;
        }
        let score = scorer.score(reliable, combo)?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidScore { id: combo.id(), score });
        }
        records.push(ScoreRecord { combo, score });
    }
    ScoreReport::from_records(records)
}

/// Outcome of the full detection pipeline on one image.
#[derive(Debug, Clone)]
pub struct Detection {
    pub reliable: Vec<ReliableLine>,
    pub report: ScoreReport,
}

impl Detection {
    pub fn reliable_lines(&self) -> Vec<Line> {
        self.reliable.iter().map(|r| r.line).collect()
    }

    /// Lines of the best-scoring combination.
    pub fn lines(&self) -> Vec<Line> {
        self.report.best().combo.select(&self.reliable_lines())
    }
}

/// Candidate filtering followed by the combination search: NMS keeps `k`
/// reliable lines, then every admitted combination of them is scored.
pub fn detect_combination(
    candidates: &CandidateSet,
    k: usize,
    nms_threshold: f64,
    scorer: &dyn Scorer,
    constraint: SearchConstraint,
) -> Result<Detection> {
    if k == 0 || k > MAX_K {
        return Err(Error::KOutOfRange(k));
    }
    let reliable = nms_select(candidates, k, nms_threshold)?;
    let lines: Vec<Line> = reliable.iter().map(|r| r.line).collect();
    let report = search_best_combination(&lines, scorer, constraint)?;
    Ok(Detection { reliable, report })
}
