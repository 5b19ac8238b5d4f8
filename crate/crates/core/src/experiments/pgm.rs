use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Grey level of the 1-pixel separators and of empty grid cells.
pub const SEPARATOR: u8 = 255;

/// Plain PGM (P2) text of the rows of `images`, each a `height x width`
/// image with values in `[0, 1]`, tiled `cols` per grid row. One value per line.
pub fn pgm_grid(images: &Tensor, height: usize, width: usize, cols: usize) -> Result<String> {
    if images.cols() != height * width {
        return Err(Error::DimensionMismatch {
            context: "pgm image size",
            expected: height * width,
            actual: images.cols(),
        });
    }
    if cols == 0 || images.rows() == 0 {
        return Err(Error::Config("pgm grid needs at least one column and one image".into()));
    }
    if let Some(v) = images.data().iter().find(|v| v.is_nan()) {
        return Err(Error::InvalidTensor(format!("pixel value {v}")));
    }
    let n = images.rows();
    let cols = cols.min(n);
    let rows = n.div_ceil(cols);
    let (gw, gh) = (cols * width + cols - 1, rows * height + rows - 1);
    let mut grid = vec![SEPARATOR; gw * gh];
    for k in 0..n {
        let (r0, c0) = ((k / cols) * (height + 1), (k % cols) * (width + 1));
        let img = images.row_slice(k);
        for i in 0..height {
            for j in 0..width {
                let v = img[i * width + j].clamp(0.0, 1.0);
                grid[(r0 + i) * gw + c0 + j] = (v * 255.0).round() as u8;
            }
        }
    }
    let mut out = format!("P2\n# grid {rows}x{cols}\n# tile {height}x{width}\n{gw} {gh}\n255\n");
    for v in grid {
        writeln!(out, "{v}").expect("writing to a String");
    }
    Ok(out)
}

pub fn dump_pgm_grid(images: &Tensor, height: usize, width: usize, path: &Path, cols: usize) -> Result<()> {
    std::fs::write(path, pgm_grid(images, height, width, cols)?)?;
    Ok(())
}
