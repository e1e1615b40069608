//! Few-shot evaluation and representation diagnostics.

mod fewshot;
mod similarity;

pub use fewshot::{
    evaluate_few_shot, proto_classify, sample_episodes, Episode, EpisodeConfig, EpisodeResult, FewShotReport,
    LabeledPool,
};
pub(crate) use similarity::sample_pairs;
pub use similarity::{
    cka_linear, dominant_component, fisher_ratio, isometry_study, pearson, permutation_p_value, t_test_p_value,
    Component, EmbeddingLayout, IsometryPair, IsometryReport, PERMUTATION_SHUFFLES,
};
