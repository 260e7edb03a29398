//! Experiment runner: configuration, replications, CSV, figures and the CLI.

mod cli;
pub mod config;
pub mod plot;
pub mod run;
mod selftest;

pub use cli::{exit_code, main_with_args, Cli, Command};
pub use config::{Algo, ExperimentConfig, GammaRule, GeneralKind, Sweep, SweepAxis};
pub use plot::{load_series, plot_csv, render_svg, BandPoint, Series, PLOT_METRICS};
pub use run::{
    csv_header, draw_replication, replication_seed, run_experiment, run_replication, write_csv, AggregateRow,
    ExperimentOutput, ResultRow, SlopeRow, THREADS_ENV,
};
pub use selftest::selftest;
