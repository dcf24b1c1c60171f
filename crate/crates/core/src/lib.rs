//! Block-sparse recovery: Block-ISTA, learned LBISTA networks (tied and
//! untied), their training, synthetic data generation, thermal-sequence
//! preprocessing and evaluation metrics.

pub mod bista;
pub mod blocksparse;
pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod ingest;
pub mod io;
pub mod lbista;
pub mod linop;
pub mod metrics;
pub mod plot;
pub mod train;

pub use bista::{bista_solve, SolveTrace};
pub use blocksparse::{block_soft_threshold, MMVSignal, MeasurementSet};
pub use error::{Error, Result};
pub use lbista::{forward, init_params, Mode, NetworkParams};
pub use linop::{ConvKernel, DenseModel, LinearModel};
pub use train::{train_layerwise, TrainConfig, TrainReport, TrainSet};
