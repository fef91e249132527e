//! Home and work location detection from stop-location sequences.
//!
//! The main detector ([`run_howde`]) aggregates a user's stops into hourly
//! bins, filters days and windows with too little data, and picks home and
//! work per day from visit fractions averaged over a sliding window. Two
//! static baselines ([`baselines`]), evaluation against ground truth
//! ([`metrics`]), behavioral-profile clustering ([`profiles`]), a synthetic
//! population generator ([`synth`]), downstream applications ([`apps`]) and
//! the CSV/config surface ([`io`], [`config`], [`anonymize`]) sit around it.

pub mod anonymize;
pub mod apps;
pub mod baselines;
pub mod binning;
pub mod config;
mod engine;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod profiles;
pub mod synth;
pub mod window;

pub use binning::{bin_hours, day_features, DayFeature, HourlyDay};
pub use engine::{run_howde, run_howde_all};
pub use error::{HowdeError, Result};
pub use model::{
    Detection, DetectionLabel, HowdeParams, Scope, StopRecord, TimeWindows, UndetectedReason,
    UserStops, WindowMode,
};
pub use window::{build_window, detect_home, detect_work, WindowAggregate};
