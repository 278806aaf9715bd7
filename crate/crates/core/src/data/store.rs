//! On-disk dataset layout:
//!
//! ```text
//! dir/manifest.json
//! dir/images/<id>.ppm
//! dir/masks/<id>_<k>.pgm
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::Mask;
use super::pnm;
use super::scene::{Sample, SampleObject};
use super::splits::DatasetSplits;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Samples plus split membership, as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub seed: u64,
    pub samples: Vec<Sample>,
    pub splits: DatasetSplits,
}

impl Dataset {
    pub fn split(&self, indices: &[usize]) -> Vec<&Sample> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }

    /// Distinct captions of the whole dataset, sorted.
    pub fn caption_pool(&self) -> Vec<String> {
        let mut pool: Vec<String> = self
            .samples
            .iter()
            .flat_map(|s| s.objects.iter().map(|o| o.caption.clone()))
            .collect();
        pool.sort();
        pool.dedup();
        pool
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    seed: u64,
    samples: Vec<ManifestSample>,
    splits: ManifestSplits,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSample {
    id: String,
    image_file: String,
    objects: Vec<ManifestObject>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestObject {
    mask_file: String,
    caption: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestSplits {
    hi: Vec<String>,
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;
    let mut samples = Vec::with_capacity(dataset.samples.len());
    for s in &dataset.samples {
        let image_file = format!("images/{}.ppm", s.id);
        fs::write(dir.join(&image_file), pnm::encode_ppm(&s.image))?;
        let mut objects = Vec::with_capacity(s.objects.len());
        for (k, o) in s.objects.iter().enumerate() {
            let mask_file = format!("masks/{}_{k}.pgm", s.id);
            fs::write(dir.join(&mask_file), pnm::encode_mask(&o.mask))?;
            objects.push(ManifestObject {
                mask_file,
                caption: o.caption.clone(),
            });
        }
        samples.push(ManifestSample {
            id: s.id.clone(),
            image_file,
            objects,
        });
    }
    let ids = |idx: &[usize]| idx.iter().map(|&i| dataset.samples[i].id.clone()).collect();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: dataset.seed,
        samples,
        splits: ManifestSplits {
            hi: ids(&dataset.splits.hi),
            train: ids(&dataset.splits.train),
            val: ids(&dataset.splits.val),
            test: ids(&dataset.splits.test),
        },
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST);
    let manifest: Manifest = serde_json::from_slice(&read_file(&manifest_path)?)
        .map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::format(
            &manifest_path,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for ms in manifest.samples {
        let image_path = dir.join(&ms.image_file);
        let image = pnm::decode_ppm(&read_file(&image_path)?, &image_path)?;
        let objects = ms
            .objects
            .into_iter()
            .map(|mo| {
                let mask_path = dir.join(&mo.mask_file);
                let mask: Mask = pnm::decode_mask(&read_file(&mask_path)?, &mask_path)?;
                if (mask.width(), mask.height()) != (image.width(), image.height()) {
                    return Err(Error::format(&mask_path, "mask size differs from image"));
                }
                Ok(SampleObject {
                    caption: mo.caption,
                    mask,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            id: ms.id,
            image,
            objects,
        });
    }
    let index: HashMap<&str, usize> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let resolve = |ids: &[String]| {
        ids.iter()
            .map(|id| {
                index.get(id.as_str()).copied().ok_or_else(|| {
                    Error::format(
                        &manifest_path,
                        format!("split references unknown sample {id}"),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let splits = DatasetSplits {
        hi: resolve(&manifest.splits.hi)?,
        train: resolve(&manifest.splits.train)?,
        val: resolve(&manifest.splits.val)?,
        test: resolve(&manifest.splits.test)?,
    };
    Ok(Dataset {
        seed: manifest.seed,
        samples,
        splits,
    })
}
