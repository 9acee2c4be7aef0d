//! Downstream uses of combination scoring: vanishing points, symmetry axes,
//! and composition retrieval with k-means clustering.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::candidates::Combination;
use crate::error::{Error, Result};
use crate::geometry::{line_intersection, Frame, Line, Point};
use crate::scoring::{search_combinations, Scorer, SearchConstraint};

/// Entries scoring below this are left out of retrieval.
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VpEstimate {
    pub point: Point,
    pub pair: (usize, usize),
    pub score: f64,
}

fn non_parallel(reliable: &[Line], combo: Combination) -> bool {
    let idx = combo.indices();
    idx.len() == 2 && line_intersection(&reliable[idx[0]], &reliable[idx[1]]).is_ok()
}

/// Scores every non-parallel pair and returns the intersection of the best.
pub fn detect_vp(reliable: &[Line], scorer: &dyn Scorer) -> Result<VpEstimate> {
    if reliable.len() < 2 {
        return Err(Error::KOutOfRange(reliable.len()));
    }
    let report = match search_combinations(reliable, scorer, SearchConstraint::Pairs, |c| non_parallel(reliable, c)) {
        Err(Error::NoCombination) => return Err(Error::AllParallel),
        other => other?,
    };
    let best = report.best();
    let idx = best.combo.indices();
    Ok(VpEstimate {
        point: line_intersection(&reliable[idx[0]], &reliable[idx[1]])?,
        pair: (idx[0], idx[1]),
        score: best.score,
    })
}

/// Focal length used when none is given: the frame width.
pub fn default_focal(frame: &Frame) -> f64 {
    f64::from(frame.width())
}

/// Angle in degrees between the viewing rays `(x, y, focal)` through two
/// image points.
pub fn angle_error(pred: Point, gt: Point, focal: f64) -> f64 {
    let a = [pred.x, pred.y, focal];
    let b = [gt.x, gt.y, focal];
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let cos = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    sin.atan2(cos).to_degrees()
}

/// Fraction of errors at or below `tau` degrees.
pub fn angle_accuracy(errors: &[f64], tau: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|&&e| e <= tau).count() as f64 / errors.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedAxis {
    pub index: usize,
    pub line: Line,
    pub score: f64,
}

/// Scores each reliable line on its own; best first, lower index on ties.
pub fn rank_symmetry_axes(reliable: &[Line], scorer: &dyn Scorer) -> Result<Vec<RankedAxis>> {
    let report = search_combinations(reliable, scorer, SearchConstraint::Singletons, |_| true)?;
    Ok(report
        .ranked()
        .map(|(_, rec)| {
            let index = rec.combo.indices()[0];
            RankedAxis {
                index,
                line: reliable[index],
                score: rec.score,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalEntry {
    pub identifier: String,
    pub embedding: Vec<f64>,
    pub composition_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub identifier: String,
    pub distance: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Nearest index entries to `query` by Euclidean distance, ignoring entries
/// scored below `score_threshold`. Ties go to the smaller identifier.
pub fn retrieve(
    query: &RetrievalEntry,
    index: &[RetrievalEntry],
    score_threshold: f64,
    top_k: usize,
) -> Result<Vec<RetrievalHit>> {
    if top_k == 0 {
        return Err(Error::KOutOfRange(0));
    }
    let dim = query.embedding.len();
    if let Some(bad) = index.iter().find(|e| e.embedding.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.embedding.len(),
        });
    }
    let mut hits: Vec<RetrievalHit> = index
        .iter()
        .filter(|e| e.composition_score >= score_threshold)
        .map(|e| RetrievalHit {
            identifier: e.identifier.clone(),
            distance: euclidean(&query.embedding, &e.embedding),
        })
        .collect();
    if hits.is_empty() {
        return Err(Error::EmptyIndexAfterFilter);
    }
    hits.sort_by(hit_order);
    hits.truncate(top_k);
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each Lloyd iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

fn squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, squared(point, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .unwrap_or((0, 0.0))
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

/// k-means with seeded k-means++ initialization and Lloyd iterations until
/// the assignment stops changing or `max_iter` is reached. A cluster that
/// empties out takes over the point farthest from its own centroid.
pub fn kmeans_cluster(embeddings: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if k == 0 || k > embeddings.len() {
        return Err(Error::TooFewPoints {
            k,
            points: embeddings.len(),
        });
    }
    if max_iter == 0 {
        return Err(Error::KOutOfRange(0));
    }
    let dim = embeddings[0].len();
    if let Some(bad) = embeddings.iter().find(|e| e.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    if embeddings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("embedding"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(embeddings, k, &mut rng);
    let mut assignments: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let scored: Vec<(usize, f64)> = embeddings.iter().map(|p| nearest(p, &centroids)).collect();
        let mut next: Vec<usize> = scored.iter().map(|s| s.0).collect();
        let mut cost: Vec<f64> = scored.iter().map(|s| s.1).collect();

        let mut counts = vec![0usize; k];
        for &a in &next {
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..embeddings.len())
                .filter(|&i| counts[next[i]] > 1)
                .max_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(b.cmp(&a)))
                .expect("k <= n leaves a cluster with two or more points");
            counts[next[far]] -= 1;
            next[far] = j;
            counts[j] = 1;
            cost[far] = 0.0;
            centroids[j] = embeddings[far].clone();
        }

        let changed = next != assignments;
        assignments = next;
        centroids = means(embeddings, &assignments, k, dim);
        history.push(
            embeddings
                .iter()
                .zip(&assignments)
                .map(|(p, &a)| squared(p, &centroids[a]))
                .sum(),
        );
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        objective_history: history,
        iterations,
    })
}

/// Orders retrieval hits the same way [`retrieve`] does.
pub fn hit_order(a: &RetrievalHit, b: &RetrievalHit) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.identifier.cmp(&b.identifier))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::OracleScorer;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    struct Fixed(Vec<f64>);

    impl Scorer for Fixed {
        fn score(&self, _: &[Line], combo: Combination) -> Result<f64> {
            Ok(self.0[combo.id() as usize])
        }
    }

    #[test]
    fn vp_of_exact_pair() {
        let frame = Frame::new(200, 100).unwrap();
        let gt = [Line::new(10.0, FRAC_PI_4), Line::new(-5.0, 2.0)];
        let scorer = OracleScorer::new(&gt, &frame).unwrap();
        let vp = detect_vp(&gt, &scorer).unwrap();
        assert_eq!(vp.pair, (0, 1));
        for l in &gt {
            assert!(l.signed_distance(vp.point).abs() <= 1e-9);
        }
    }

    #[test]
    fn vp_skips_parallel_pairs() {
        // x = 0, y = 0, y = 1: only pairs (0,1) and (0,2) are admissible.
        let lines = [
            Line::new(0.0, 0.0),
            Line::new(0.0, FRAC_PI_2),
            Line::new(1.0, FRAC_PI_2),
        ];
        let mut scores = vec![0.0; 8];
        scores[0b011] = 0.4;
        scores[0b101] = 0.6;
        scores[0b110] = 0.99;
        let vp = detect_vp(&lines, &Fixed(scores)).unwrap();
        assert_eq!(vp.pair, (0, 2));
        assert!((vp.point.x).abs() < 1e-12 && (vp.point.y - 1.0).abs() < 1e-12);

        let parallel = [Line::new(0.0, 0.5), Line::new(3.0, 0.5), Line::new(-4.0, 0.5)];
        assert!(matches!(
            detect_vp(&parallel, &Fixed(vec![0.5; 8])),
            Err(Error::AllParallel)
        ));
    }

    #[test]
    fn angle_errors() {
        let f = 480.0;
        let o = Point::new(0.0, 0.0);
        assert_eq!(angle_error(o, o, f), 0.0);
        assert!((angle_error(o, Point::new(f, 0.0), f) - 45.0).abs() < 1e-9);
        let a = Point::new(30.0, -70.0);
        let b = Point::new(-200.0, 15.0);
        assert_eq!(angle_error(a, b, f), angle_error(b, a, f));
        assert_eq!(angle_accuracy(&[1.0, 3.0, 10.0], 3.0), 2.0 / 3.0);
    }

    #[test]
    fn symmetry_ranking() {
        let lines = [Line::new(0.0, 0.0), Line::new(5.0, 1.0), Line::new(-5.0, 2.0)];
        let mut scores = vec![0.0; 8];
        scores[0b001] = 0.2;
        scores[0b010] = 0.7;
        scores[0b100] = 0.7;
        let ranked = rank_symmetry_axes(&lines, &Fixed(scores)).unwrap();
        let order: Vec<usize> = ranked.iter().map(|r| r.index).collect();
        assert_eq!(order, vec![1, 2, 0]);
        let single = rank_symmetry_axes(&lines[..1], &Fixed(vec![0.0, 0.3])).unwrap();
        assert_eq!(single.len(), 1);
    }

    fn entry(id: &str, v: &[f64], score: f64) -> RetrievalEntry {
        RetrievalEntry {
            identifier: id.into(),
            embedding: v.to_vec(),
            composition_score: score,
        }
    }

    #[test]
    fn retrieval_filters_and_orders() {
        let q = entry("q", &[0.0, 0.0], 1.0);
        let index = [
            entry("far", &[2.0, 0.0], 0.9),
            entry("low", &[0.0, 0.0], 0.5),
            entry("near", &[0.0, 1.0], 0.8),
            entry("q", &[0.0, 0.0], 0.9),
        ];
        let hits = retrieve(&q, &index, DEFAULT_SCORE_THRESHOLD, 10).unwrap();
        let ids: Vec<&str> = hits.iter().map(|h| h.identifier.as_str()).collect();
        assert_eq!(ids, vec!["q", "near", "far"]);
        assert_eq!(hits[0].distance, 0.0);
        assert_eq!(retrieve(&q, &index, 0.75, 1).unwrap().len(), 1);
        assert!(matches!(
            retrieve(&q, &index, 0.95, 3),
            Err(Error::EmptyIndexAfterFilter)
        ));
        let bad = [entry("x", &[1.0], 1.0)];
        assert!(matches!(
            retrieve(&q, &bad, 0.75, 3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kmeans_single_cluster_is_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let r = kmeans_cluster(&pts, 1, 7, 10).unwrap();
        assert_eq!(r.centroids[0], vec![1.0, 1.0]);
        assert!(matches!(
            kmeans_cluster(&pts, 4, 7, 10),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.6;
            pts.push(vec![t.cos(), t.sin()]);
            pts.push(vec![20.0 + t.sin(), 20.0 + t.cos()]);
        }
        let r = kmeans_cluster(&pts, 2, 3, 50).unwrap();
        for i in (0..pts.len()).step_by(2) {
            assert_eq!(r.assignments[i], r.assignments[0]);
            assert_eq!(r.assignments[i + 1], r.assignments[1]);
        }
        assert_ne!(r.assignments[0], r.assignments[1]);
        assert_eq!(r, kmeans_cluster(&pts, 2, 3, 50).unwrap());
    }

    #[test]
    fn kmeans_handles_duplicates() {
        let pts = vec![vec![1.0]; 5];
        let r = kmeans_cluster(&pts, 3, 0, 10).unwrap();
        assert_eq!(r.assignments.len(), 5);
        assert!(r.objective_history.iter().all(|&o| o == 0.0));
    }
}
