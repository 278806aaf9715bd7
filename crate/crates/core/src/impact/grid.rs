use crate::data::Mask;
use crate::error::{Error, Result};

/// Row-major binary grid over the visual token layout.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryGrid {
    pub rows: usize,
    pub cols: usize,
    pub bits: Vec<bool>,
}

/// Key-object mask on the visual token grid.
pub type TokenMask = BinaryGrid;

impl BinaryGrid {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} bits for a {rows}x{cols} grid",
                bits.len()
            )));
        }
        Ok(BinaryGrid { rows, cols, bits })
    }

    pub fn from_rows(rows: &[&[u8]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        BinaryGrid {
            rows: rows.len(),
            cols,
            bits: rows
                .iter()
                .flat_map(|r| r.iter().map(|&v| v != 0))
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Downsamples a pixel mask onto the patch grid: a token is set when the
/// fraction of object pixels inside its patch is at least `tau`.
pub fn project_mask(mask: &Mask, patch_size: usize, tau: f64) -> Result<TokenMask> {
    if patch_size == 0
        || !mask.width().is_multiple_of(patch_size)
        || !mask.height().is_multiple_of(patch_size)
    {
        return Err(Error::InvalidInput(format!(
            "{}x{} mask is not divisible into {patch_size}px patches",
            mask.width(),
            mask.height()
        )));
    }
    let rows = mask.height() / patch_size;
    let cols = mask.width() / patch_size;
    let area = (patch_size * patch_size) as f64;
    let mut bits = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut covered = 0usize;
            for y in 0..patch_size {
                for x in 0..patch_size {
                    covered += usize::from(mask.get(c * patch_size + x, r * patch_size + y));
                }
            }
            bits.push(covered as f64 / area >= tau);
        }
    }
    BinaryGrid::new(rows, cols, bits)
}

/// Sets every cell strictly above the grid mean. A constant grid has no cell
/// above its mean and binarizes to all zeros.
pub fn binarize(values: &[f64], rows: usize, cols: usize) -> Result<BinaryGrid> {
    if values.is_empty() || values.len() != rows * cols {
        return Err(Error::InvalidInput(format!(
            "{} values for a {rows}x{cols} grid",
            values.len()
        )));
    }
    // a rounded mean can land below the minimum of a constant grid
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let mean = (values.iter().sum::<f64>() / values.len() as f64).clamp(lo, hi);
    BinaryGrid::new(rows, cols, values.iter().map(|&v| v > mean).collect())
}

/// Jaccard index `|A ∩ B| / |A ∪ B|`; an empty union scores 0.
pub fn iou(attention: &BinaryGrid, mask: &TokenMask) -> Result<f64> {
    if (attention.rows, attention.cols) != (mask.rows, mask.cols) {
        return Err(Error::Shape {
            op: "iou",
            shapes: vec![
                vec![attention.rows, attention.cols],
                vec![mask.rows, mask.cols],
            ],
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &m) in attention.bits.iter().zip(&mask.bits) {
        inter += usize::from(a && m);
        union += usize::from(a || m);
    }
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}
