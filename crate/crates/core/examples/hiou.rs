//! Harmony IoU between two line sets, exact and on a pixel grid.
//!
//! cargo run --example hiou

use semline::arrangement::{hiou, hiou_on_grid, partition_rectangle};
use semline::{Frame, Grid, Line};

fn main() -> semline::Result<()> {
    let frame = Frame::new(480, 480)?;
    // A vertical line through the center against one a quarter of the way in.
    let mid = [Line::new(0.0, 0.0)];
    let quarter = [Line::new(120.0, 0.0)];

    for (name, lines) in [("mid", &mid), ("quarter", &quarter)] {
        let p = partition_rectangle(lines.as_slice(), &frame)?;
        let areas: Vec<f64> = p.cells.iter().map(|c| c.area()).collect();
        println!("{name}: {} cells, areas {areas:?}", p.cells.len());
    }

    let exact = hiou(&mid, &quarter, &frame)?;
    let sampled = hiou_on_grid(&mid, &quarter, Grid::new(480, 480), &frame)?;
    println!("exact   {exact:.9}");
    println!("sampled {sampled:.9}");
    println!("self    {:.9}", hiou(&mid, &mid, &frame)?);
    println!("empty   {:.9}", hiou(&[], &mid, &frame)?);
    Ok(())
}
