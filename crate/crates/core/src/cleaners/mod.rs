//! Robot cleaning engineers and the sweep harness that runs them.

mod model;
mod strategy;
pub mod sweep;
pub mod synth;

pub use model::{
    sample_cleaner, AttributeCount, CleanerModel, Dimension, StrategyKind, ThresholdOrder,
    TrustStyle,
};
pub use strategy::{
    run_strategy, QueryCounts, StrategyConfig, StrategyOutcome, StrategyRun,
    DEFAULT_CUTOFF_FRACTION, DEFAULT_MAX_RELAXATIONS,
};
pub use sweep::{run_sweep, run_sweep_on, spearman, Budget, RobotChoice, SweepConfig, SweepResult};
pub use synth::{DatasetSource, SynthConfig, SyntheticData};
