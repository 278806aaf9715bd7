//! Toy LLaVA-style multimodal decoder.

mod config;
mod forward;
mod io;
mod layout;
mod patch;
pub mod vocab;
mod weights;

pub use config::ModelConfig;
pub use forward::{
    build_forward, forward, forward_patches, forward_with_deltas, AttentionRecord, DeltaVars,
    ForwardOutput, GraphOutput, LowRankDelta, Projection,
};
pub use io::{
    decode_checkpoint, encode_checkpoint, load_weights, read_checkpoint, save_weights,
    write_checkpoint, Checkpoint,
};
pub use layout::{
    assemble_prompt, caption_prompt, vqa_prompt, PromptLayout, PromptMode, CAPTION_PREFIX,
    CAPTION_QUESTION, VQA_QUESTION,
};
pub use patch::{patchify, unpatchify};
pub use vocab::Vocab;
pub use weights::{init_model, LayerVars, LayerWeights, ModelWeights, WeightVars, INIT_STD};
