//! Low-rank adapters on the attention projections.

mod adapter;
mod suite;

pub use adapter::{
    attach_lora, count_params, load_adapted, save_adapted, AdaptedModel, LoraAdapter, ParamCount,
    A_INIT_STD, DEFAULT_ALPHA, DEFAULT_RANK,
};
pub(crate) use suite::run_setup;
pub use suite::{
    build_setups, default_k, run_setup_suite, ExperimentSetup, LoraConfig, SetupKind, SetupOutcome,
};
