//! Metrics, experiment drivers and report output.

pub mod experiments;
pub mod metrics;
pub mod report;

pub use experiments::{
    ablate_capacity, compare_local_global, discretization_sweep, global_variant, output_mse,
    reconstruction_mse, AblationRow, LocalGlobal, SweepRow,
};
pub use metrics::{
    case_from_sample, evaluate_fields, evaluate_flow, fit_circle, lift_coefficient, median,
    mse_split, sample_lift, spearman, MetricReport,
};
pub use report::{heatmap_ppm, num, write_heatmap, Table};
