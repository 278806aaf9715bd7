//! HI artifacts: score CSV, PGM heatmap, and the statistics JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ranking::{rank_layers, RankStrategy};
use super::score::HiMatrix;
use super::stats::{layer_tests, LayerTests};
use crate::data::encode_pgm;
use crate::error::{Error, Result};

/// Pixels per HI cell in the heatmap.
pub const HEATMAP_CELL: usize = 16;

/// `n_layers` lines of `n_heads` comma-separated scores, 6 decimals.
pub fn hi_csv(hi: &HiMatrix) -> String {
    let mut out = String::new();
    for l in 0..hi.n_layers {
        let row: Vec<String> = hi.layer(l).iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_hi_csv(text: &str, n_units: usize) -> Result<HiMatrix> {
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("bad HI value `{v}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let n_heads = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != n_heads) {
        return Err(Error::InvalidInput("ragged HI csv".into()));
    }
    HiMatrix::new(rows.len(), n_heads, rows.concat(), n_units)
}

/// Grayscale heatmap, layers as rows and heads as columns, score `s` drawn
/// as `round(255·s)`.
pub fn hi_heatmap(hi: &HiMatrix) -> Vec<u8> {
    let (w, h) = (hi.n_heads * HEATMAP_CELL, hi.n_layers * HEATMAP_CELL);
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let s = hi.get(y / HEATMAP_CELL, x / HEATMAP_CELL).clamp(0.0, 1.0);
            px.push((s * 255.0).round() as u8);
        }
    }
    encode_pgm(w, h, &px)
}

/// Layers chosen by each strategy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rankings {
    pub k: usize,
    pub top: Vec<usize>,
    pub bottom: Vec<usize>,
    pub random: Vec<usize>,
}

impl Rankings {
    pub fn compute(hi: &HiMatrix, k: usize, seed: u64) -> Result<Self> {
        Ok(Rankings {
            k,
            top: rank_layers(hi, k, RankStrategy::Top, seed)?,
            bottom: rank_layers(hi, k, RankStrategy::Bottom, seed)?,
            random: rank_layers(hi, k, RankStrategy::Random, seed)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiStats {
    pub n_units: usize,
    pub tau: f64,
    pub layer_means: Vec<f64>,
    pub tests: LayerTests,
    pub rankings: Rankings,
}

impl HiStats {
    pub fn compute(hi: &HiMatrix, tau: f64, k: usize, seed: u64) -> Result<Self> {
        Ok(HiStats {
            n_units: hi.n_units,
            tau,
            layer_means: hi.layer_means.clone(),
            tests: layer_tests(hi)?,
            rankings: Rankings::compute(hi, k, seed)?,
        })
    }
}

pub const HI_CSV: &str = "hi_scores.csv";
pub const HI_HEATMAP: &str = "hi_heatmap.pgm";
pub const HI_STATS: &str = "stats.json";

pub fn write_hi_report(dir: &Path, hi: &HiMatrix, stats: &HiStats) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(HI_CSV), hi_csv(hi))?;
    fs::write(dir.join(HI_HEATMAP), hi_heatmap(hi))?;
    fs::write(dir.join(HI_STATS), serde_json::to_vec_pretty(stats)?)?;
    Ok(())
}

pub fn read_hi_stats(dir: &Path) -> Result<HiStats> {
    let path = dir.join(HI_STATS);
    let bytes = fs::read(&path).map_err(|_| Error::MissingFile(path.clone()))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(&path, e.to_string()))
}
