//! Ranking single lines as symmetry axes with the image-evidence scorer.
//!
//! cargo run --example symmetry

use semline::applications::rank_symmetry_axes;
use semline::io::GrayImage;
use semline::maps::DEFAULT_GRID;
use semline::scoring::{HeuristicScorer, HeuristicWeights};
use semline::{Frame, Line};

fn main() -> semline::Result<()> {
    let frame = Frame::new(240, 240)?;
    let axis = Line::new(0.0, 0.0);
    // Mirror pattern about the vertical center line. The two halves are
    // drawn in different tones, so the axis is also where the picture
    // changes most.
    let image = GrayImage::from_fn(240, 240, |x, y| {
        let d = (x as i32 - 120).unsigned_abs();
        let stripe = ((d / 20) % 2) as u8 * 40;
        let band = if (y / 60) % 2 == 0 { 10 } else { 0 };
        if x < 120 {
            40 + stripe + band
        } else {
            170 + stripe + band
        }
    });
    let reliable = [
        Line::new(40.0, 0.0),
        axis,
        Line::new(-20.0, 1.571),
        Line::new(30.0, 0.8),
    ];
    let scorer = HeuristicScorer::new(&image, &frame, DEFAULT_GRID, HeuristicWeights::default())?;
    for (rank, a) in rank_symmetry_axes(&reliable, &scorer)?.iter().enumerate() {
        println!(
            "{}. line {} (rho {:.1}, theta {:.3}) score {:.4}",
            rank + 1,
            a.index,
            a.line.rho(),
            a.line.theta(),
            a.score
        );
    }
    Ok(())
}
