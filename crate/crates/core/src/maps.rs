//! Per-combination maps on the feature grid: the binary line mask, the
//! ternary line collection map, the line/region feature split, and a pooled
//! positional embedding of the collection map.

use ndarray::{concatenate, Array2, Axis};

use crate::candidates::Combination;
use crate::error::{Error, Result};
use crate::geometry::{rasterize_line, Frame, Grid, Line};

/// Feature grid used throughout the pipeline.
pub const DEFAULT_GRID: Grid = Grid::new(60, 60);
/// Pool size for [`positional_embedding`]; 4x4 blocks on the default grid.
pub const DEFAULT_POOL: usize = 15;

fn check_combo(reliable: &[Line], combo: Combination) -> Result<()> {
    if combo.k() != reliable.len() {
        return Err(Error::ShapeMismatch(format!(
            "combination over {} lines used with {} reliable lines",
            combo.k(),
            reliable.len()
        )));
    }
    Ok(())
}

/// `1` on every grid cell covered by an included line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryLineMask {
    pub grid: Grid,
    pub data: Vec<u8>,
}

impl BinaryLineMask {
    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

pub fn binary_mask(reliable: &[Line], combo: Combination, grid: Grid, frame: &Frame) -> Result<BinaryLineMask> {
    check_combo(reliable, combo)?;
    let mut data = vec![0u8; grid.len()];
    for i in combo.indices() {
        for cell in rasterize_line(&reliable[i], grid, frame)? {
            data[cell] = 1;
        }
    }
    Ok(BinaryLineMask { grid, data })
}

/// `K` ternary channels; channel `k` tells which side of line `k` each cell
/// lies on, or is all zeros when line `k` is excluded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineCollectionMap {
    pub grid: Grid,
    pub k: usize,
    /// Channel-major: `data[k * grid.len() + cell]`.
    pub data: Vec<i8>,
}

impl LineCollectionMap {
    pub fn channel(&self, k: usize) -> &[i8] {
        let n = self.grid.len();
        &self.data[k * n..(k + 1) * n]
    }

    /// Per-cell view as a `HW x K` matrix.
    pub fn to_matrix(&self) -> Array2<f64> {
        let n = self.grid.len();
        Array2::from_shape_fn((n, self.k), |(i, k)| f64::from(self.data[k * n + i]))
    }

    /// Element-wise sum; used to check linearity of the embedding.
    pub fn add(&self, other: &LineCollectionMap) -> Result<LineCollectionMap> {
        if self.grid != other.grid || self.k != other.k {
            return Err(Error::ShapeMismatch("line collection maps differ in shape".into()));
        }
        Ok(LineCollectionMap {
            grid: self.grid,
            k: self.k,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }
}

/// Cells exactly on a line are assigned to its `+1` side.
pub fn line_collection_map(
    reliable: &[Line],
    combo: Combination,
    grid: Grid,
    frame: &Frame,
) -> Result<LineCollectionMap> {
    check_combo(reliable, combo)?;
    let centers = grid.centers(frame);
    let n = grid.len();
    let mut data = vec![0i8; reliable.len() * n];
    for k in combo.indices() {
        let line = &reliable[k];
        for (cell, p) in centers.iter().enumerate() {
            data[k * n + cell] = if line.signed_distance(*p) >= 0.0 { 1 } else { -1 };
        }
    }
    Ok(LineCollectionMap {
        grid,
        k: reliable.len(),
        data,
    })
}

/// Splits a `HW x C` feature map into its line part `x ⊙ b` and region part
/// `x ⊙ (1 - b)`.
pub fn decompose_features(x: &Array2<f64>, b: &BinaryLineMask) -> Result<(Array2<f64>, Array2<f64>)> {
    if x.nrows() != b.grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "feature map has {} rows, mask has {} cells",
            x.nrows(),
            b.grid.len()
        )));
    }
    let mut line = x.clone();
    let mut region = x.clone();
    for (i, &m) in b.data.iter().enumerate() {
        if m == 1 {
            region.row_mut(i).fill(0.0);
        } else {
            line.row_mut(i).fill(0.0);
        }
    }
    Ok((line, region))
}

/// Channel-wise concatenation `[X_l, X_r, P]`.
pub fn compositional_feature(
    line: &Array2<f64>,
    region: &Array2<f64>,
    positional: &Array2<f64>,
) -> Result<Array2<f64>> {
    if line.dim() != region.dim() || positional.nrows() != line.nrows() {
        return Err(Error::ShapeMismatch("compositional parts differ in shape".into()));
    }
    concatenate(Axis(1), &[line.view(), region.view(), positional.view()])
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Block-average pooling of every channel of `l`, flattened channel-major
/// then row-major over blocks. Length `K · (h / pool) · (w / pool)`.
pub fn positional_embedding(l: &LineCollectionMap, pool: usize) -> Result<Vec<f64>> {
    let grid = l.grid;
    if pool == 0 || !grid.h.is_multiple_of(pool) || !grid.w.is_multiple_of(pool) {
        return Err(Error::BadPool {
            pool,
            grid_h: grid.h,
            grid_w: grid.w,
        });
    }
    let (bh, bw) = (grid.h / pool, grid.w / pool);
    let block = (pool * pool) as f64;
    let mut out = vec![0.0; l.k * bh * bw];
    for k in 0..l.k {
        let channel = l.channel(k);
        for r in 0..grid.h {
            for c in 0..grid.w {
                out[k * bh * bw + (r / pool) * bw + c / pool] += f64::from(channel[r * grid.w + c]);
            }
        }
    }
    for v in &mut out {
        *v /= block;
    }
    Ok(out)
}
