//! Candidate grid, simulated detector output, and NMS down to K reliable
//! lines.
//!
//! cargo run --example candidates_nms

use semline::candidates::{apply_offsets, generate_candidate_grid, nms_select, DEFAULT_K, DEFAULT_NMS_THRESHOLD};
use semline::geometry::polar_distance;
use semline::synth::{random_scene, simulate_detector, SceneParams};

fn main() -> semline::Result<()> {
    let scene = random_scene(&SceneParams::default(), 7)?;
    let frame = scene.spec.frame()?;
    let grid = generate_candidate_grid(32, 32, &frame)?;
    println!(
        "{} candidates, first {:?}, last {:?}",
        grid.len(),
        grid.lines()[0],
        grid.lines()[grid.len() - 1]
    );

    let anchors = scene.anchors();
    let cands = simulate_detector(&frame, &anchors, 32, 32, 7)?;
    let moved = apply_offsets(&cands);
    let shifted = cands.offsets().iter().filter(|o| !o.is_zero()).count();
    println!("{shifted} candidates carry offsets; {} updated lines", moved.len());

    let reliable = nms_select(&cands, DEFAULT_K, DEFAULT_NMS_THRESHOLD)?;
    for r in &reliable {
        let nearest = anchors
            .iter()
            .map(|a| polar_distance(&r.line, a, &frame))
            .fold(f64::INFINITY, f64::min);
        println!(
            "candidate {:4}  p={:.3}  rho={:8.3}  theta={:.4}  anchor distance {nearest:.2e}",
            r.index,
            r.prob,
            r.line.rho(),
            r.line.theta()
        );
    }
    Ok(())
}
