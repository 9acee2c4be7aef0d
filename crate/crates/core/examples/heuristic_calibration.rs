//! Runs the image-evidence scorer over seeded synthetic scenes and reports
//! the harmony IoU of the selected combination against ground truth.
//!
//! cargo run --release --example heuristic_calibration -- [scenes] [sigma] [gap]

use semline::arrangement::hiou;
use semline::candidates::{DEFAULT_K, DEFAULT_NMS_THRESHOLD, DEFAULT_N_RHO, DEFAULT_N_THETA};
use semline::maps::DEFAULT_GRID;
use semline::scoring::{detect_combination, HeuristicScorer, HeuristicWeights, SearchConstraint};
use semline::synth::{random_scene, simulate_detector, synth_scene, SceneParams};

fn main() -> semline::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenes: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(100);
    let sigma: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let gap: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60.0);

    let params = SceneParams {
        min_gap: gap,
        noise_sigma: sigma,
        ..SceneParams::default()
    };
    let mut total = 0.0;
    let mut exact = 0;
    for seed in 0..scenes {
        let scene = random_scene(&params, seed)?;
        let frame = scene.spec.frame()?;
        let (image, gt) = synth_scene(&scene.spec)?;
        let cands = simulate_detector(&frame, &scene.anchors(), DEFAULT_N_RHO, DEFAULT_N_THETA, seed)?;
        let scorer = HeuristicScorer::new(&image, &frame, DEFAULT_GRID, HeuristicWeights::default())?;
        let detection = detect_combination(&cands, DEFAULT_K, DEFAULT_NMS_THRESHOLD, &scorer, SearchConstraint::All)?;
        let h = hiou(&detection.lines(), &gt, &frame)?;
        if h > 1.0 - 1e-9 {
            exact += 1;
        }
        total += h;
        if args.iter().any(|a| a == "-v") {
            println!(
                "seed {seed:3}: {} gt, picked {}, hiou {h:.4}",
                gt.len(),
                detection.lines().len()
            );
        }
    }
    println!(
        "{scenes} scenes, sigma {sigma}, gap {gap}: mean HIoU {:.4}, exact {exact}/{scenes}",
        total / scenes as f64
    );
    Ok(())
}
