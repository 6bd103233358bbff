//! Experiment configuration, seeded runs, metrics files and plots.

mod config;
mod metrics;
mod plot;
mod run;

pub use config::{AgentKind, ConfigError, ExperimentConfig, LearnerConfig};
pub use metrics::{
    format_float, moving_average, read_metrics_csv, write_metrics_csv, EpisodeRow, EvalRow, MetricsLog, EVAL_COLUMNS,
    TRAIN_COLUMNS,
};
pub use plot::{emit_plot_svg, render_svg, Curve, PlotLabels};
pub use run::{
    agent_from_checkpoint, build_agent, evaluate_prediction, mean_curve, prediction_report, run_comparison,
    run_eval_episodes, run_experiment, run_seed, write_comparison, write_run_outputs, Comparison, EvalEpisode,
    ExperimentResult, PredictionReport, SeedRun, CURVE_WINDOW,
};
