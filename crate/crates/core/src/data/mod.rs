//! Synthetic key-object dataset.

mod distractors;
mod image;
mod pnm;
mod scene;
mod splits;
mod store;

pub use distractors::draw_distractors;
pub use image::{Mask, RgbImage};
pub use pnm::{decode_mask, decode_ppm, encode_mask, encode_pgm, encode_ppm};
pub use scene::{
    generate_dataset, render, sample_id, Color, ObjectKind, PlacedObject, Sample, SampleObject,
    SceneSpec, Shape, Size, BACKGROUND, CANVAS,
};
pub use splits::{make_splits, DatasetSplits};
pub use store::{read_dataset, write_dataset, Dataset, MANIFEST};
