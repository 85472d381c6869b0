//! SCADA cleaning: range and physics rules, DBSCAN/LOF refinement in the
//! power-curve plane, short-gap interpolation and sliding-window extraction.

mod dbscan;
mod density;
mod frame;
mod interpolate;
mod kdtree;
mod labels;
mod lof;
mod pipeline;
mod rules;
mod spec;
mod window;

pub use dbscan::{dbscan, ClusterLabel};
pub use density::{density_refine, density_refine_with, DensityConfig, Standardization};
pub use frame::{Channel, RawScadaFrame, SAMPLING_INTERVAL_SECS};
pub use interpolate::interpolate_short_gaps;
pub use labels::{OutlierLabeling, Reason, Verdict};
pub use lof::{lof, LRD_EPSILON};
pub use pipeline::{clean_frame, CleanConfig, CleanOutput, CleaningStats};
pub use rules::{power_curve_filter, quantile_bounds, range_filter, range_filter_with, Bounds};
pub use spec::TurbineSpec;
pub use window::{keep_segments, segment_and_window, WindowSample, DEFAULT_STRIDE, DEFAULT_WINDOW};

