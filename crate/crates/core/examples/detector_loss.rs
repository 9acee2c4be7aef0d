//! Training targets and loss for the candidate detector heads, given
//! ground-truth lines and predicted probabilities and offsets.
//!
//! cargo run --example detector_loss

use semline::candidates::{detector_loss, detector_targets, generate_candidate_grid, DetectorLossWeights, Offset};
use semline::{Frame, Line};

fn main() -> semline::Result<()> {
    let frame = Frame::new(320, 320)?;
    let cands = generate_candidate_grid(32, 32, &frame)?;
    let gt = [Line::new(25.0, 0.4), Line::new(-80.0, 2.0)];
    let targets = detector_targets(&cands, &gt, 0.05);
    println!(
        "{} of {} candidates match a ground-truth line",
        targets.matched_count(),
        cands.len()
    );

    let weights = DetectorLossWeights::default();
    let uninformed = vec![0.5; cands.len()];
    let zero = vec![Offset::ZERO; cands.len()];
    println!(
        "uninformed prediction: {:.6}",
        detector_loss(&uninformed, &zero, &targets, weights)?
    );
    let perfect = detector_loss(&targets.gt_probs, &targets.gt_offsets, &targets, weights)?;
    println!("perfect prediction:    {perfect:.6}");
    Ok(())
}
