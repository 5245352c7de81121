//! Synthetic data, the dataset directory format and the experiment harness.

pub mod experiment;
pub mod io;
pub mod simulate;

pub use experiment::{
    compare_methods, parse_methods, run_experiment, summarize, write_experiment, CompareOptions,
    ExperimentPlan, ExperimentRow, Method, MethodResult, SummaryRow,
};
pub use io::{read_dataset, write_dataset};
pub use simulate::{group_of, simulate, Dataset, SimConfig, SimFamily};
