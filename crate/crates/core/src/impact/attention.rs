use crate::error::{Error, Result};
use crate::model::{AttentionRecord, PromptLayout};

/// Caption-to-visual attention per head, shape
/// `(n_layers, n_heads, rows, cols)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadAttentionGrid {
    pub n_layers: usize,
    pub n_heads: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl HeadAttentionGrid {
    /// The `(rows × cols)` grid of one head, row-major.
    pub fn head(&self, layer: usize, head: usize) -> &[f64] {
        let n = self.rows * self.cols;
        let start = (layer * self.n_heads + head) * n;
        &self.values[start..start + n]
    }
}

/// Averages, for every head, the attention rows of the caption tokens
/// restricted to the visual-token columns.
pub fn extract_caption_attention(
    record: &AttentionRecord,
    layout: &PromptLayout,
) -> Result<HeadAttentionGrid> {
    if layout.caption.is_empty() {
        return Err(Error::Layout("empty caption range".into()));
    }
    if layout.visual.is_empty() {
        return Err(Error::Layout("empty visual range".into()));
    }
    let (rows, cols) = layout.grid;
    let n_vis = layout.visual.len();
    if rows * cols != n_vis {
        return Err(Error::Layout(format!(
            "grid {rows}x{cols} does not cover {n_vis} visual tokens"
        )));
    }
    let n_caption = layout.caption.len() as f64;
    let mut values = Vec::with_capacity(record.n_layers() * record.n_heads() * n_vis);
    for layer in &record.probs {
        for probs in layer {
            let mut acc = vec![0.0; n_vis];
            for q in layout.caption.clone() {
                let row = &probs.row(q)[layout.visual.clone()];
                for (a, &p) in acc.iter_mut().zip(row) {
                    *a += p;
                }
            }
            values.extend(acc.into_iter().map(|a| a / n_caption));
        }
    }
    Ok(HeadAttentionGrid {
        n_layers: record.n_layers(),
        n_heads: record.n_heads(),
        rows,
        cols,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    /// 1 layer, 1 head, sequence `[bos, v0, v1, v2, v3, c0, c1]` with a 2x2 grid.
    fn record(rows: &[[f64; 7]]) -> (AttentionRecord, PromptLayout) {
        let mut data = vec![0.0; 49];
        for (i, r) in rows.iter().enumerate() {
            data[(5 + i) * 7..(6 + i) * 7].copy_from_slice(r);
        }
        let rec = AttentionRecord {
            probs: vec![vec![Tensor::new(vec![7, 7], data).unwrap()]],
        };
        let layout = PromptLayout {
            tokens: vec![0; 7],
            visual: 1..5,
            user: 5..5,
            caption: 5..5 + rows.len(),
            label: None,
            correct_option: None,
            grid: (2, 2),
        };
        (rec, layout)
    }

    #[test]
    fn single_caption_token_is_its_row() {
        let (rec, l) = record(&[[0.1, 0.2, 0.3, 0.1, 0.1, 0.2, 0.0]]);
        let g = extract_caption_attention(&rec, &l).unwrap();
        assert_eq!(g.head(0, 0), &[0.2, 0.3, 0.1, 0.1]);
    }

    #[test]
    fn two_caption_tokens_are_averaged() {
        let u = [0.0, 0.4, 0.2, 0.2, 0.0, 0.2, 0.0];
        let v = [0.0, 0.0, 0.2, 0.4, 0.2, 0.1, 0.1];
        let (rec, l) = record(&[u, v]);
        let g = extract_caption_attention(&rec, &l).unwrap();
        let expect: Vec<f64> = (1..5).map(|j| (u[j] + v[j]) / 2.0).collect();
        assert_eq!(g.head(0, 0), &expect[..]);
        assert!(g.values.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn empty_caption_is_an_error() {
        let (rec, mut l) = record(&[[0.0; 7]]);
        l.caption = 5..5;
        assert!(extract_caption_attention(&rec, &l).is_err());
    }
}
