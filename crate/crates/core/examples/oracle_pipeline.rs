//! End-to-end detection with the oracle scorer: synthetic scene, simulated
//! detector, NMS, and exhaustive combination search.
//!
//! cargo run --release --example oracle_pipeline -- [scenes]

use semline::arrangement::hiou;
use semline::candidates::{DEFAULT_K, DEFAULT_NMS_THRESHOLD, DEFAULT_N_RHO, DEFAULT_N_THETA};
use semline::scoring::{detect_combination, OracleScorer, SearchConstraint};
use semline::synth::{random_scene, simulate_detector, synth_scene, SceneParams};

fn main() -> semline::Result<()> {
    let scenes: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let params = SceneParams::default();
    let mut recovered = 0;
    for seed in 0..scenes {
        let scene = random_scene(&params, seed)?;
        let frame = scene.spec.frame()?;
        let (_image, gt) = synth_scene(&scene.spec)?;
        let cands = simulate_detector(&frame, &scene.anchors(), DEFAULT_N_RHO, DEFAULT_N_THETA, seed)?;
        let scorer = OracleScorer::new(&gt, &frame)?;
        let detection = detect_combination(&cands, DEFAULT_K, DEFAULT_NMS_THRESHOLD, &scorer, SearchConstraint::All)?;
        let best = detection.report.best();
        let h = hiou(&detection.lines(), &gt, &frame)?;
        if h > 1.0 - 1e-9 {
            recovered += 1;
        }
        println!(
            "seed {seed:3}: {} gt lines, best combination {} ({}), HIoU {h:.6}",
            gt.len(),
            best.combo.id(),
            best.combo.mask_bits()
        );
    }
    println!("recovered {recovered}/{scenes}");
    Ok(())
}
