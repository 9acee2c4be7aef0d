//! Synthetic scenes: piecewise-constant images whose cell boundaries are
//! known lines, and a simulated detector that emits candidate files for
//! them. Everything is driven by explicit seeds.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::arrangement::{partition_rectangle, RegionPartition};
use crate::candidates::{generate_candidate_grid, offset_between, CandidateSet, Offset};
use crate::error::{Error, Result};
use crate::geometry::{polar_distance, Frame, Line};
use crate::io::GrayImage;

/// Ground-truth line count allowed in a spec.
pub const MAX_SYNTH_LINES: usize = 4;

/// Description of one synthetic scene.
///
/// `region_intensities[c]` fills cell `c` of the partition of the frame by
/// `gt_lines` (cells in the order produced by
/// [`partition_rectangle`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub gt_lines: Vec<Line>,
    pub region_intensities: Vec<f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn frame(&self) -> Result<Frame> {
        Frame::new(self.width, self.height).map_err(|e| Error::SpecInvalid(e.to_string()))
    }

    pub fn partition(&self) -> Result<RegionPartition> {
        let frame = self.frame()?;
        partition_rectangle(&self.gt_lines, &frame).map_err(|e| Error::SpecInvalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<RegionPartition> {
        let invalid = |m: String| Err(Error::SpecInvalid(m));
        if self.gt_lines.is_empty() || self.gt_lines.len() > MAX_SYNTH_LINES {
            return invalid(format!(
                "{} lines; expected 1 to {MAX_SYNTH_LINES}",
                self.gt_lines.len()
            ));
        }
        let frame = self.frame()?;
        if let Some(i) = self.gt_lines.iter().position(|l| !l.crosses(&frame)) {
            return invalid(format!("line {i} misses the frame"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return invalid(format!(
                "noise sigma {} must be finite and non-negative",
                self.noise_sigma
            ));
        }
        let partition = self.partition()?;
        if self.region_intensities.len() != partition.cells.len() {
            return invalid(format!(
                "{} intensities for {} cells",
                self.region_intensities.len(),
                partition.cells.len()
            ));
        }
        if let Some(v) = self.region_intensities.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return invalid(format!("intensity {v} outside [0, 255]"));
        }
        Ok(partition)
    }

    /// Smallest intensity difference between two cells that share an edge,
    /// or `None` for a single cell.
    pub fn min_adjacent_gap(&self) -> Result<Option<f64>> {
        let partition = self.validate()?;
        Ok(min_gap(&partition, &self.region_intensities))
    }
}

/// Cells whose sign vectors differ in exactly one line share a boundary
/// segment of that line.
fn adjacent(a: &[i8], b: &[i8]) -> bool {
    a.iter().zip(b).filter(|(x, y)| x != y).count() == 1
}

fn min_gap(partition: &RegionPartition, intensities: &[f64]) -> Option<f64> {
    let cells = &partition.cells;
    let mut best: Option<f64> = None;
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            if adjacent(&cells[i].sign_vector, &cells[j].sign_vector) {
                let gap = (intensities[i] - intensities[j]).abs();
                best = Some(best.map_or(gap, |b| b.min(gap)));
            }
        }
    }
    best
}

/// Index of the cell containing each pixel center, row-major.
pub fn pixel_cells(partition: &RegionPartition) -> Vec<usize> {
    let frame = partition.frame;
    let lookup: HashMap<&[i8], usize> = partition
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| (c.sign_vector.as_slice(), i))
        .collect();
    let (w, h) = (frame.width(), frame.height());
    let mut out = Vec::with_capacity(w as usize * h as usize);
    let mut signs = vec![0i8; partition.lines.len()];
    for y in 0..h {
        for x in 0..w {
            let p = frame.from_top_left(f64::from(x) + 0.5, f64::from(y) + 0.5);
            for (s, l) in signs.iter_mut().zip(&partition.lines) {
                *s = if l.signed_distance(p) >= 0.0 { 1 } else { -1 };
            }
            let cell = lookup.get(signs.as_slice()).copied().unwrap_or_else(|| {
                // Pixel centers can fall in sliver cells that were dropped;
                // take the cell agreeing on the most lines.
                (0..partition.cells.len())
                    .max_by_key(|&i| {
                        let agree = partition.cells[i]
                            .sign_vector
                            .iter()
                            .zip(&signs)
                            .filter(|(a, b)| a == b)
                            .count();
                        (agree, usize::MAX - i)
                    })
                    .unwrap_or(0)
            });
            out.push(cell);
        }
    }
    out
}

/// Renders the scene. Noise is drawn per pixel in raster order from a
/// ChaCha8 stream seeded with `spec.seed`.
pub fn synth_scene(spec: &SynthSpec) -> Result<(GrayImage, Vec<Line>)> {
    let partition = spec.validate()?;
    let cells = pixel_cells(&partition);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::SpecInvalid(e.to_string()))?;
    let data = cells
        .iter()
        .map(|&c| {
            let mut v = spec.region_intensities[c];
            if spec.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            v.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Ok((GrayImage::new(spec.width, spec.height, data)?, spec.gt_lines.clone()))
}

/// Knobs for [`random_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub width: u32,
    pub height: u32,
    pub min_lines: usize,
    pub max_lines: usize,
    pub distractors: usize,
    pub min_gap: f64,
    pub noise_sigma: f64,
    /// Minimum polar distance between any two lines of the scene,
    /// distractors included.
    pub min_separation: f64,
    /// Every gt cell must cover at least this fraction of the frame.
    pub min_cell_fraction: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            width: 480,
            height: 480,
            min_lines: 1,
            max_lines: MAX_SYNTH_LINES,
            distractors: 4,
            min_gap: 30.0,
            noise_sigma: 0.0,
            min_separation: 0.2,
            min_cell_fraction: 0.02,
        }
    }
}

/// A generated scene: the spec plus lines that are not part of the ground
/// truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SynthSpec,
    pub distractors: Vec<Line>,
}

impl Scene {
    /// Ground truth followed by distractors.
    pub fn anchors(&self) -> Vec<Line> {
        self.spec.gt_lines.iter().chain(&self.distractors).copied().collect()
    }
}

const MAX_ATTEMPTS: usize = 10_000;

fn random_line(rng: &mut ChaCha8Rng, frame: &Frame) -> Line {
    let theta = rng.random_range(0.0..PI);
    let reach = frame.half_width() * theta.cos().abs() + frame.half_height() * theta.sin().abs();
    let rho = rng.random_range(-0.6..0.6) * reach;
    Line::new(rho, theta)
}

fn separated(line: &Line, others: &[Line], frame: &Frame, min: f64) -> bool {
    others.iter().all(|o| polar_distance(line, o, frame) >= min)
}

/// Draws cell intensities with every adjacent pair at least `min_gap`
/// apart. Falls back to a two-tone fill by sign parity, which always
/// satisfies the gap for `min_gap <= 255`.
fn draw_intensities(rng: &mut ChaCha8Rng, partition: &RegionPartition, min_gap: f64) -> Vec<f64> {
    let cells = &partition.cells;
    'attempt: for _ in 0..200 {
        let mut values: Vec<f64> = Vec::with_capacity(cells.len());
        for i in 0..cells.len() {
            let mut ok = false;
            for _ in 0..50 {
                let v = f64::from(rng.random_range(0u8..=255));
                if (0..i).all(|j| {
                    !adjacent(&cells[i].sign_vector, &cells[j].sign_vector) || (v - values[j]).abs() >= min_gap
                }) {
                    values.push(v);
                    ok = true;
                    break;
                }
            }
            if !ok {
                continue 'attempt;
            }
        }
        return values;
    }
    let low = rng.random_range(0.0..(255.0 - min_gap).max(0.0)).floor();
    cells
        .iter()
        .map(|c| {
            let parity = c.sign_vector.iter().filter(|&&s| s > 0).count() % 2;
            if parity == 0 {
                low
            } else {
                (low + min_gap).min(255.0)
            }
        })
        .collect()
}

/// Generates a random solvable scene from `seed`.
pub fn random_scene(params: &SceneParams, seed: u64) -> Result<Scene> {
    if params.min_lines == 0 || params.min_lines > params.max_lines || params.max_lines > MAX_SYNTH_LINES {
        return Err(Error::SpecInvalid(format!(
            "line count range {}..={} outside 1..={MAX_SYNTH_LINES}",
            params.min_lines, params.max_lines
        )));
    }
    if !(0.0..=255.0).contains(&params.min_gap) {
        return Err(Error::SpecInvalid(format!("gap {} outside [0, 255]", params.min_gap)));
    }
    let frame = Frame::new(params.width, params.height).map_err(|e| Error::SpecInvalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(params.min_lines..=params.max_lines);
    let min_area = params.min_cell_fraction * frame.area();

    let mut gt: Vec<Line> = Vec::with_capacity(n);
    let mut attempts = 0;
    while gt.len() < n {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::SpecInvalid("could not place well-separated lines".into()));
        }
        let line = random_line(&mut rng, &frame);
        if !separated(&line, &gt, &frame, params.min_separation) {
            continue;
        }
        let mut trial = gt.clone();
        trial.push(line);
        let partition = partition_rectangle(&trial, &frame)?;
        if partition.cells.iter().all(|c| c.area() >= min_area) {
            gt = trial;
        }
    }

    let mut distractors: Vec<Line> = Vec::with_capacity(params.distractors);
    while distractors.len() < params.distractors {
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::SpecInvalid("could not place distractor lines".into()));
        }
        let line = random_line(&mut rng, &frame);
        if separated(&line, &gt, &frame, params.min_separation)
            && separated(&line, &distractors, &frame, params.min_separation)
        {
            distractors.push(line);
        }
    }

    let partition = partition_rectangle(&gt, &frame)?;
    let region_intensities = draw_intensities(&mut rng, &partition, params.min_gap);
    let spec = SynthSpec {
        width: params.width,
        height: params.height,
        gt_lines: gt,
        region_intensities,
        noise_sigma: params.noise_sigma,
        seed: rng.random(),
    };
    spec.validate()?;
    Ok(Scene { spec, distractors })
}

/// Stand-in for a trained detector: on the `(ρ, θ)` grid, the candidate
/// nearest each anchor gets a high probability and an offset that moves it
/// exactly onto the anchor; every other candidate gets a low probability
/// and no offset. NMS on the result returns the anchors first.
pub fn simulate_detector(
    frame: &Frame,
    anchors: &[Line],
    n_rho: usize,
    n_theta: usize,
    seed: u64,
) -> Result<CandidateSet> {
    let grid = generate_candidate_grid(n_rho, n_theta, frame)?;
    if anchors.len() > grid.len() {
        return Err(Error::SpecInvalid(format!(
            "{} anchors for {} candidates",
            anchors.len(),
            grid.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.0..0.5)).collect();
    let mut offsets = vec![Offset::ZERO; grid.len()];
    let mut taken = vec![false; grid.len()];
    for anchor in anchors {
        let nearest = grid
            .lines()
            .iter()
            .enumerate()
            .filter(|(i, _)| !taken[*i])
            .map(|(i, l)| (i, polar_distance(l, anchor, frame)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
            .ok_or(Error::EmptyCandidates)?;
        taken[nearest] = true;
        probs[nearest] = rng.random_range(0.9..1.0);
        offsets[nearest] = offset_between(&grid.lines()[nearest], anchor, frame);
    }
    grid.with_probs(probs)?.with_offsets(offsets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::nms_select;
    use std::f64::consts::FRAC_PI_2;

    fn two_tone() -> SynthSpec {
        SynthSpec {
            width: 100,
            height: 60,
            gt_lines: vec![Line::new(0.0, 0.0)],
            region_intensities: vec![200.0, 50.0],
            noise_sigma: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn vertical_two_tone() {
        let spec = two_tone();
        let partition = spec.validate().unwrap();
        // Cell 0 is the +1 side (x >= 0), i.e. the right half.
        assert_eq!(partition.cells[0].sign_vector, vec![1]);
        let (img, gt) = synth_scene(&spec).unwrap();
        assert_eq!(gt, spec.gt_lines);
        for y in 0..60 {
            for x in 0..100 {
                assert_eq!(img.get(x, y), if x < 50 { 50 } else { 200 });
            }
        }
    }

    #[test]
    fn deterministic_with_noise() {
        let mut spec = two_tone();
        spec.noise_sigma = 12.0;
        let a = synth_scene(&spec).unwrap().0;
        assert_eq!(a, synth_scene(&spec).unwrap().0);
        spec.seed = 2;
        assert_ne!(a, synth_scene(&spec).unwrap().0);
    }

    #[test]
    fn histogram_modes_match_cells() {
        let spec = SynthSpec {
            width: 120,
            height: 120,
            gt_lines: vec![Line::new(0.0, 0.3), Line::new(10.0, FRAC_PI_2), Line::new(-15.0, 2.2)],
            region_intensities: vec![],
            noise_sigma: 0.0,
            seed: 0,
        };
        let cells = spec.partition().unwrap().cells.len();
        let spec = SynthSpec {
            region_intensities: (0..cells).map(|i| 10.0 + 30.0 * i as f64).collect(),
            ..spec
        };
        let (img, _) = synth_scene(&spec).unwrap();
        let mut distinct: Vec<u8> = img.pixels().to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        assert_eq!(distinct.len(), cells);
    }

    #[test]
    fn invalid_specs() {
        let mut s = two_tone();
        s.region_intensities.pop();
        assert!(matches!(synth_scene(&s), Err(Error::SpecInvalid(_))));
        let mut s = two_tone();
        s.gt_lines.clear();
        assert!(matches!(s.validate(), Err(Error::SpecInvalid(_))));
        let mut s = two_tone();
        s.gt_lines = vec![Line::new(0.0, 0.0), Line::new(0.0, 0.0)];
        s.region_intensities = vec![0.0; 4];
        assert!(matches!(s.validate(), Err(Error::SpecInvalid(_))));
        let mut s = two_tone();
        s.noise_sigma = -1.0;
        assert!(s.validate().is_err());
        let mut s = two_tone();
        s.region_intensities[0] = 300.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn random_scenes_are_solvable() {
        let params = SceneParams {
            min_gap: 60.0,
            ..SceneParams::default()
        };
        for seed in 0..20 {
            let scene = random_scene(&params, seed).unwrap();
            let gap = scene.spec.min_adjacent_gap().unwrap().unwrap();
            assert!(gap >= 60.0, "seed {seed}: gap {gap}");
            assert_eq!(scene.distractors.len(), 4);
            assert_eq!(scene, random_scene(&params, seed).unwrap());
        }
    }

    #[test]
    fn simulated_detector_surfaces_anchors() {
        let params = SceneParams::default();
        for seed in 0..20 {
            let scene = random_scene(&params, seed).unwrap();
            let frame = scene.spec.frame().unwrap();
            let anchors = scene.anchors();
            let cands = simulate_detector(&frame, &anchors, 32, 32, seed).unwrap();
            let picked = nms_select(&cands, anchors.len(), 0.08).unwrap();
            for a in &anchors {
                let d = picked
                    .iter()
                    .map(|r| polar_distance(&r.line, a, &frame))
                    .fold(f64::INFINITY, f64::min);
                assert!(d < 1e-9, "seed {seed}: anchor missed by {d}");
            }
        }
    }
}
