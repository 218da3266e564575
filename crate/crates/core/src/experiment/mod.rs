//! Config files, checkpoints, reports and the end-to-end commands behind the CLI.
//!
//! Structured outputs are pretty-printed JSON; tables are CSV. Reports carry
//! no timestamps or timings, so identical configs give byte-identical files.

mod commands;
mod config;

pub use commands::{
    cmd_ablate, cmd_eval, cmd_gen_data, cmd_grad_check, cmd_sweep_theta, cmd_train, load_checkpoint, prepare_data,
    AblateOutput, Checkpoint, EvalReport, GenDataOutput, GradCheckOutput, Prepared, SweepOutput, TemperatureReport, TrainReport,
    CHECKPOINT_VERSION, GRAD_CHECK_TOLERANCE, REPORT_VERSION,
};
pub use config::{
    resolve_config, CsvSource, DataConfig, DataSource, ExperimentConfig, MetricsConfig, Overrides, RunsConfig,
    SplitConfig,
};
