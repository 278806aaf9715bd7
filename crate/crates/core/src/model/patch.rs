use super::ModelConfig;
use crate::autodiff::Tensor;
use crate::data::RgbImage;
use crate::error::{Error, Result};

/// Splits an image into row-major patches, each flattened as
/// `(y, x, channel)` with values scaled to `[0, 1]`.
///
/// Returns a `(patches, patch_dim)` tensor and the patch grid `(rows, cols)`.
pub fn patchify(image: &RgbImage, config: &ModelConfig) -> Result<(Tensor, (usize, usize))> {
    let size = config.image_size;
    if image.width() != size || image.height() != size {
        return Err(Error::InvalidInput(format!(
            "image is {}x{}, model expects {size}x{size}",
            image.width(),
            image.height()
        )));
    }
    let p = config.patch_size;
    let (rows, cols) = config.grid();
    let mut data = Vec::with_capacity(rows * cols * config.patch_dim());
    for pr in 0..rows {
        for pc in 0..cols {
            for y in 0..p {
                for x in 0..p {
                    let px = image.pixel(pc * p + x, pr * p + y);
                    data.extend(px.iter().map(|&v| f64::from(v) / 255.0));
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![rows * cols, config.patch_dim()], data)?,
        (rows, cols),
    ))
}

/// Inverse of [`patchify`], returning scaled `(y, x, channel)` values.
pub fn unpatchify(patches: &Tensor, config: &ModelConfig) -> Vec<f64> {
    let size = config.image_size;
    let p = config.patch_size;
    let (_, cols) = config.grid();
    let mut out = vec![0.0; size * size * 3];
    for (idx, patch) in patches.data().chunks(config.patch_dim()).enumerate() {
        let (pr, pc) = (idx / cols, idx % cols);
        for y in 0..p {
            for x in 0..p {
                for ch in 0..3 {
                    let dst = ((pr * p + y) * size + pc * p + x) * 3 + ch;
                    out[dst] = patch[(y * p + x) * 3 + ch];
                }
            }
        }
    }
    out
}
