//! Graph recovery metrics and the two bivariate identifiability examples:
//! a scale-mixture model whose causal direction shows in group-wise
//! regressions, and a Gaussian model whose two directions are
//! indistinguishable.

mod examples;
mod metrics;

pub use examples::{
    example1_dataset, example1_demo, example1_sample, example2_check, DirectionSlopes, Example1Config, Example1Demo,
    Example1Sample, Example2Params, Example2Verdict, GroupSlopes,
};
pub use metrics::{score_graph, write_metrics_csv, ConfusionCounts, GraphScores, MetricsRow};
