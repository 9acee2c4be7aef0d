//! Region cross-attention over a small feature grid and the semantic
//! region separation loss with its gradient.
//!
//! cargo run --example grouping

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semline::grouping::{
    grouping_forward, sinusoidal_pe, srs_loss, RegionQuerySet, DEFAULT_SRS_EPSILON, DEFAULT_STEPS,
};
use semline::{Frame, Grid, Line};

fn main() -> semline::Result<()> {
    let frame = Frame::new(160, 160)?;
    let grid = Grid::new(16, 16);
    let c = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // Features that differ on either side of a vertical line.
    let gt = [Line::new(0.0, 0.0)];
    let centers = grid.centers(&frame);
    let features = Array2::from_shape_fn((grid.len(), c), |(i, j)| {
        let side = gt[0].signed_distance(centers[i]).signum();
        side * (j as f64 + 1.0) * 0.3
    });
    let positional = sinusoidal_pe(grid, c)? * 0.1;
    let regions = RegionQuerySet {
        queries: Array2::from_shape_fn((4, c), |_| rng.random_range(-1.0..1.0)),
        u_q: Array2::eye(c),
        u_k: Array2::eye(c),
        u_v: Array2::eye(c) * 0.5,
        tau: (c as f64).sqrt(),
    };
    let out = grouping_forward(&regions, &features, &positional, DEFAULT_STEPS)?;
    for (s, a) in out.attention_steps.iter().enumerate() {
        let worst = a
            .columns()
            .into_iter()
            .map(|col| (col.sum() - 1.0).abs())
            .fold(0.0, f64::max);
        let srs = srs_loss(a, &gt, grid, &frame, DEFAULT_SRS_EPSILON)?;
        println!(
            "step {}: max |column sum - 1| = {worst:.1e}, SRS loss {:.5}",
            s + 1,
            srs.loss
        );
    }
    println!("membership:");
    for r in 0..grid.h {
        let row: String = out.membership[r * grid.w..(r + 1) * grid.w]
            .iter()
            .map(|m| char::from(b'0' + *m as u8))
            .collect();
        println!("  {row}");
    }
    Ok(())
}
