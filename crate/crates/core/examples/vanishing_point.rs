//! Vanishing point as the intersection of the best-scoring pair of lines.
//!
//! cargo run --example vanishing_point

use semline::applications::{angle_accuracy, angle_error, default_focal, detect_vp};
use semline::geometry::segment_to_polar;
use semline::scoring::OracleScorer;
use semline::{Frame, Line, Point};

fn main() -> semline::Result<()> {
    let frame = Frame::new(640, 480)?;
    let vp = Point::new(40.0, -30.0);
    // Two lines converging on the vanishing point, plus clutter.
    let gt = [
        segment_to_polar(vp, Point::new(-320.0, 240.0))?,
        segment_to_polar(vp, Point::new(320.0, 200.0))?,
    ];
    let reliable = [
        Line::new(100.0, 0.2),
        gt[0],
        Line::new(-60.0, 1.5),
        gt[1],
        Line::new(10.0, 2.9),
    ];

    let scorer = OracleScorer::new(&gt, &frame)?;
    let est = detect_vp(&reliable, &scorer)?;
    println!("pair {:?}, score {:.4}", est.pair, est.score);
    println!(
        "estimate ({:.6}, {:.6}), truth ({}, {})",
        est.point.x, est.point.y, vp.x, vp.y
    );

    let f = default_focal(&frame);
    let errors: Vec<f64> = [est.point, Point::new(60.0, -30.0), Point::new(200.0, 100.0)]
        .iter()
        .map(|p| angle_error(*p, vp, f))
        .collect();
    println!("angle errors {errors:.4?}");
    for tau in [1.0, 3.0, 10.0, 20.0] {
        println!("AA@{tau}: {:.3}", angle_accuracy(&errors, tau));
    }
    Ok(())
}
