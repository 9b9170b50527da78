//! Operator layer of the spectrum-sharing laboratory: configuration files,
//! run directories, and the train/eval/sweep/baseline commands behind the
//! `specshare` binary.

pub mod blas_env;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod sweep;

pub use commands::{
    cmd_eval, cmd_oracle_baseline, cmd_random_baseline, cmd_train, eval_or_reuse, train_or_reuse,
};
pub use config::{load_config, RunConfig, Scheme};
