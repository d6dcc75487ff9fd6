//! Datasets, experiment protocols and model persistence.

mod data;
mod model_file;
mod protocol;

pub use data::{
    interp_split, load_csv, parse_csv, sniff_header, split, synth_toy, toy_function, toy_grid, write_csv, Dataset, NoiseLevel,
    Standardization,
};
pub use model_file::{ModelFile, TrainingRows, EMBED_LIMIT, FORMAT_VERSION};
pub use protocol::{
    fit, grid_search_sigma2, run_protocol, BenchConfig, GridSearch, InterpConfig, Protocol, Report, SplitResult,
    ToyConfig,
};
