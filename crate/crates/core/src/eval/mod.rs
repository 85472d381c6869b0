//! Multi-horizon scoring and the experiment protocols: model comparison,
//! data-volume ablation and one-turbine training for whole-plant prediction.

mod metrics;
mod protocol;
mod render;
mod report;

pub use metrics::{evaluate_horizons, mse, HorizonScores, Predictor, EVAL_CONTEXT, HORIZONS};
pub use protocol::{
    compare_models, cut_windows, fit_model, nested_subset, one_turbine_protocol, pool, prepare_turbines, run_ablation,
    AblationPlan, EvalSettings,
    ExperimentData, ModelSpec, OneTurbineOutcome, TurbineData,
};
pub use render::{fraction_plot, horizon_plot, markdown_table, render_report};
pub use report::{EvalReport, ReportRow, RowMeta};

#[cfg(test)]
mod tests;
