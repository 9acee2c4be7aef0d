//! Binary line mask, line collection map, and the pooled positional
//! embedding of a combination.
//!
//! cargo run --example line_maps

use semline::candidates::Combination;
use semline::maps::{binary_mask, line_collection_map, positional_embedding, DEFAULT_POOL};
use semline::{Frame, Grid, Line};

fn main() -> semline::Result<()> {
    let frame = Frame::new(480, 320)?;
    let reliable = [Line::new(0.0, 0.0), Line::new(-40.0, 1.3), Line::new(60.0, 2.4)];
    let grid = Grid::new(12, 12);

    let combo = Combination::new(0b101, reliable.len())?;
    println!(
        "combination {} ({}): lines {:?}",
        combo.id(),
        combo.mask_bits(),
        combo.indices()
    );

    let b = binary_mask(&reliable, combo, grid, &frame)?;
    println!("line mask ({} cells on):", b.count_ones());
    for r in 0..grid.h {
        let row: String = (0..grid.w)
            .map(|c| if b.data[r * grid.w + c] == 1 { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }

    let l = line_collection_map(&reliable, combo, grid, &frame)?;
    for k in 0..reliable.len() {
        let ch = l.channel(k);
        let plus = ch.iter().filter(|&&v| v == 1).count();
        let minus = ch.iter().filter(|&&v| v == -1).count();
        println!("channel {k}: +1 x{plus}, -1 x{minus}");
    }

    let big = line_collection_map(&reliable, combo, semline::maps::DEFAULT_GRID, &frame)?;
    let p = positional_embedding(&big, DEFAULT_POOL)?;
    println!("embedding length {}: {:?}", p.len(), &p[..16]);
    Ok(())
}
