use super::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    /// Projections are stored `(d_in, d_out)` and applied as `x · W`.
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
    pub ffn_in: Tensor,
    pub ffn_out: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub patch_proj: Tensor,
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<LayerWeights>,
    pub final_gamma: Tensor,
    pub final_beta: Tensor,
    pub output_head: Tensor,
}

const LAYER_TENSORS: [&str; 10] = [
    "ln1.gamma",
    "ln1.beta",
    "wq",
    "wk",
    "wv",
    "wo",
    "ln2.gamma",
    "ln2.beta",
    "ffn.in",
    "ffn.out",
];

impl LayerWeights {
    fn tensors(&self) -> [&Tensor; 10] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.ffn_in,
            &self.ffn_out,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.ffn_in,
            &mut self.ffn_out,
        ]
    }
}

/// Initializes weights: Gaussian(0, 0.02) for every projection and
/// embedding, ones/zeros for norm scales/shifts. Draw order is fixed, so the
/// result is a pure function of `(config, seed)`.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelWeights> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let d = config.d_model;
    let mut randn = |shape: &[usize]| Tensor::randn(shape, INIT_STD, &mut rng);
    let patch_proj = randn(&[config.patch_dim(), d]);
    let token_embedding = randn(&[config.vocab_size, d]);
    let position_embedding = randn(&[config.max_seq_len, d]);
    let layers = (0..config.n_layers)
        .map(|_| LayerWeights {
            ln1_gamma: Tensor::ones(&[d]),
            ln1_beta: Tensor::zeros(&[d]),
            wq: randn(&[d, d]),
            wk: randn(&[d, d]),
            wv: randn(&[d, d]),
            wo: randn(&[d, d]),
            ln2_gamma: Tensor::ones(&[d]),
            ln2_beta: Tensor::zeros(&[d]),
            ffn_in: randn(&[d, config.ffn_dim]),
            ffn_out: randn(&[config.ffn_dim, d]),
        })
        .collect();
    let output_head = randn(&[d, config.vocab_size]);
    Ok(ModelWeights {
        config: config.clone(),
        patch_proj,
        token_embedding,
        position_embedding,
        layers,
        final_gamma: Tensor::ones(&[d]),
        final_beta: Tensor::zeros(&[d]),
        output_head,
    })
}

impl ModelWeights {
    /// Canonical `(name, tensor)` list; the order defines file layout and
    /// optimizer slot order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("patch_proj".to_string(), &self.patch_proj),
            ("token_embedding".to_string(), &self.token_embedding),
            ("position_embedding".to_string(), &self.position_embedding),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_TENSORS.iter().zip(layer.tensors()) {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("final_norm.gamma".to_string(), &self.final_gamma));
        out.push(("final_norm.beta".to_string(), &self.final_beta));
        out.push(("output_head".to_string(), &self.output_head));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![
            &mut self.patch_proj,
            &mut self.token_embedding,
            &mut self.position_embedding,
        ];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.final_gamma);
        out.push(&mut self.final_beta);
        out.push(&mut self.output_head);
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Rebuilds weights from a canonical name→tensor list, checking every
    /// shape against `config`.
    pub fn from_named(config: ModelConfig, mut named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let mut template = init_shapes(&config);
        let expected: Vec<(String, Vec<usize>)> = template
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        if named.len() != expected.len() {
            return Err(Error::Config(format!(
                "expected {} model tensors, found {}",
                expected.len(),
                named.len()
            )));
        }
        for ((name, t), (ename, eshape)) in named.iter().zip(&expected) {
            if name != ename || t.shape() != &eshape[..] {
                return Err(Error::Config(format!(
                    "tensor {name} {:?} does not match expected {ename} {eshape:?}",
                    t.shape()
                )));
            }
        }
        for (slot, (_, t)) in template.tensors_mut().into_iter().zip(named.drain(..)) {
            *slot = t;
        }
        Ok(template)
    }
}

fn init_shapes(config: &ModelConfig) -> ModelWeights {
    let d = config.d_model;
    let z = |s: &[usize]| Tensor::zeros(s);
    ModelWeights {
        config: config.clone(),
        patch_proj: z(&[config.patch_dim(), d]),
        token_embedding: z(&[config.vocab_size, d]),
        position_embedding: z(&[config.max_seq_len, d]),
        layers: (0..config.n_layers)
            .map(|_| LayerWeights {
                ln1_gamma: z(&[d]),
                ln1_beta: z(&[d]),
                wq: z(&[d, d]),
                wk: z(&[d, d]),
                wv: z(&[d, d]),
                wo: z(&[d, d]),
                ln2_gamma: z(&[d]),
                ln2_beta: z(&[d]),
                ffn_in: z(&[d, config.ffn_dim]),
                ffn_out: z(&[config.ffn_dim, d]),
            })
            .collect(),
        final_gamma: z(&[d]),
        final_beta: z(&[d]),
        output_head: z(&[d, config.vocab_size]),
    }
}

pub struct LayerVars {
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
    pub ffn_in: Var,
    pub ffn_out: Var,
}

/// Model weights registered as tape leaves.
pub struct WeightVars {
    pub patch_proj: Var,
    pub token_embedding: Var,
    pub position_embedding: Var,
    pub layers: Vec<LayerVars>,
    pub final_gamma: Var,
    pub final_beta: Var,
    pub output_head: Var,
}

impl WeightVars {
    pub fn register<'a>(tape: &mut Tape<'a>, w: &'a ModelWeights, trainable: bool) -> Self {
        let mut leaf = |t: &'a Tensor| tape.leaf_ref(t, trainable);
        let patch_proj = leaf(&w.patch_proj);
        let token_embedding = leaf(&w.token_embedding);
        let position_embedding = leaf(&w.position_embedding);
        let layers = w
            .layers
            .iter()
            .map(|l| LayerVars {
                ln1_gamma: leaf(&l.ln1_gamma),
                ln1_beta: leaf(&l.ln1_beta),
                wq: leaf(&l.wq),
                wk: leaf(&l.wk),
                wv: leaf(&l.wv),
                wo: leaf(&l.wo),
                ln2_gamma: leaf(&l.ln2_gamma),
                ln2_beta: leaf(&l.ln2_beta),
                ffn_in: leaf(&l.ffn_in),
                ffn_out: leaf(&l.ffn_out),
            })
            .collect();
        WeightVars {
            patch_proj,
            token_embedding,
            position_embedding,
            layers,
            final_gamma: leaf(&w.final_gamma),
            final_beta: leaf(&w.final_beta),
            output_head: leaf(&w.output_head),
        }
    }

    /// Leaves in [`ModelWeights::named_tensors`] order.
    pub fn in_order(&self) -> Vec<Var> {
        let mut out = vec![
            self.patch_proj,
            self.token_embedding,
            self.position_embedding,
        ];
        for l in &self.layers {
            out.extend([
                l.ln1_gamma,
                l.ln1_beta,
                l.wq,
                l.wk,
                l.wv,
                l.wo,
                l.ln2_gamma,
                l.ln2_beta,
                l.ffn_in,
                l.ffn_out,
            ]);
        }
        out.extend([self.final_gamma, self.final_beta, self.output_head]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let c = ModelConfig::default();
        assert_eq!(init_model(&c, 1).unwrap(), init_model(&c, 1).unwrap());
        assert_ne!(init_model(&c, 1).unwrap(), init_model(&c, 2).unwrap());
    }

    #[test]
    fn embedding_std_matches_init() {
        let c = ModelConfig::default();
        let w = init_model(&c, 3).unwrap();
        let d = w.token_embedding.data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var.sqrt() - 0.02).abs() < 0.002, "std {}", var.sqrt());
    }

    #[test]
    fn norms_start_at_identity() {
        let w = init_model(&ModelConfig::default(), 0).unwrap();
        assert!(w.layers[0].ln1_gamma.data().iter().all(|&v| v == 1.0));
        assert!(w.final_beta.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn from_named_round_trip() {
        let w = init_model(&ModelConfig::default(), 4).unwrap();
        let named = w
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        assert_eq!(
            ModelWeights::from_named(w.config.clone(), named).unwrap(),
            w
        );
    }
}
