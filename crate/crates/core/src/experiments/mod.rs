mod config;
mod dataset;
mod idx;
mod pgm;
mod runner;

pub use config::{DataConfig, EvaluationConfig, ExperimentConfig, ExperimentId, Method, NetworkConfig};
pub use dataset::{synthetic4_dataset, BinaryImageDataset};
pub use idx::{
    decode_idx, encode_idx_images, encode_idx_labels, load_idx, load_idx_labels, parse_idx_images, parse_idx_labels,
    read_maybe_gz, two_image_fixture, BINARIZE_THRESHOLD, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use pgm::{dump_pgm_grid, pgm_grid, SEPARATOR};
pub use runner::{
    evaluate_checkpoint, run_experiment, Experiment, OutputLock, RunSummary, Trainer, CHECKPOINT_FILE, LOCK_FILE,
    METRICS_FILE, TRAIN_LOG_FILE,
};
