//! Kruskal-Wallis H test with tie correction, applied to raw groups and to
//! the layer/head grouping of a head score matrix.

use headimpact::impact::{kruskal_wallis, layer_tests, HiMatrix};

fn main() -> headimpact::Result<()> {
    let groups = vec![
        vec![1.0, 2.0, 3.0],
        vec![4.0, 5.0, 6.0],
        vec![7.0, 8.0, 9.0],
    ];
    let r = kruskal_wallis(&groups)?;
    println!(
        "H = {:.4}, df = {}, p = {:.6}",
        r.statistic, r.df, r.p_value
    );

    let tied = vec![vec![1.0, 1.0, 2.0], vec![2.0, 3.0, 3.0, 3.0]];
    let r = kruskal_wallis(&tied)?;
    println!(
        "with ties: H = {:.4}, correction = {:.4}, p = {:.4}",
        r.statistic, r.tie_correction, r.p_value
    );

    // layer 2 stands out; heads are interchangeable
    let hi = HiMatrix::new(
        4,
        4,
        vec![
            0.10, 0.12, 0.09, 0.11, //
            0.14, 0.13, 0.15, 0.12, //
            0.41, 0.38, 0.44, 0.40, //
            0.20, 0.22, 0.19, 0.21,
        ],
        100,
    )?;
    let t = layer_tests(&hi)?;
    println!(
        "grouped by layer: H = {:.3}, p = {:.5}",
        t.layers.statistic, t.layers.p_value
    );
    println!(
        "grouped by head:  H = {:.3}, p = {:.5}",
        t.heads.statistic, t.heads.p_value
    );
    Ok(())
}
