//! Hypothesis tests and the two corpus analyses: feature shifts across
//! environment labels, and turn-to-turn entrainment.

mod hypothesis;
mod report;

pub use hypothesis::{pearson, permutation_test, t_two_sided_p, welch_t_test, CorrelationResult, TestResult};
pub use report::{
    entrainment_report, env_effect_report, feature_records, turn_records, write_cells_csv, write_comparisons_csv,
    write_entrainment_csv, CellSummary, Comparison, EntrainmentReport, EntrainmentRow, EnvEffectConfig,
    EnvEffectReport, FeatureRecord, TestMethod, TurnRecord,
};
