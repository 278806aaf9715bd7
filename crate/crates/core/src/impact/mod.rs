//! Head Impact scoring of attention heads against key-object masks.

mod attention;
mod grid;
mod ranking;
mod report;
mod score;
mod stats;

pub use attention::{extract_caption_attention, HeadAttentionGrid};
pub use grid::{binarize, iou, project_mask, BinaryGrid, TokenMask};
pub use ranking::{layers_by_mean, rank_layers, RankStrategy};
pub use report::{
    hi_csv, hi_heatmap, parse_hi_csv, read_hi_stats, write_hi_report, HiStats, Rankings,
    HEATMAP_CELL, HI_CSV, HI_HEATMAP, HI_STATS,
};
pub use score::{head_impact, unit_iou_grid, HiMatrix, DEFAULT_TAU};
pub use stats::{average_ranks, chi_square_sf, kruskal_wallis, layer_tests, KwResult, LayerTests};
