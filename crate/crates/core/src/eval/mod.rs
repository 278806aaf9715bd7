//! Caption perplexity, four-way question accuracy, and setup comparison.

mod compare;
mod perplexity;
mod scorer;
mod vqa;

pub use compare::{compare_setups, evaluate, Comparison, ComparisonRow, EvalResult, Metric};
pub use perplexity::{perplexity, perplexity_from_unit_nll, unit_nll, PerplexityResult, MIN_PROB};
pub use scorer::{log_prob, LogitModel, OracleModel, UniformModel};
pub use vqa::{
    argmax, label_distribution, question_units, score_vqa_units, summarize, vqa_eval, VqaRecord,
    VqaResult,
};
