//! From reconstruction errors to flagged and ranked investors.

pub mod criterion;
pub mod export;
pub mod metrics;
pub mod scores;
pub mod threshold;

pub use export::{write_report_csv, write_s_star_histogram, write_t_star_histogram};
pub use criterion::{apply_criterion, flag, rank, AnomalyReport, InvestorRecord, ThresholdPolicy, Thresholds, Window};
pub use metrics::{compute_metrics, explained_variance_score, overlap, Metrics, Overlap};
pub use scores::{score, score_errors, ScoreTable};
pub use threshold::{find_epsilon_theta, find_n_theta, percentile, EpsilonMode, EpsilonThreshold};
