//! File formats, synthetic data and run configuration.

mod dataset;
mod matrix;
mod synth;

pub use dataset::{
    load_attributes, load_dataset, load_indices, load_labels, load_prototypes, load_scales,
    load_split, load_split_unchecked, load_trained, load_transfer, save_indices, save_labels,
    save_prototypes, save_split, save_trained, save_transfer, write_synthetic, RunConfig,
    ScalePaths, TRAIN_REPORT,
};
pub use matrix::{
    decode_matrix, encode_matrix, format_csv_matrix, load_matrix, load_matrix_tagged,
    parse_csv_matrix, save_matrix, save_matrix_tagged, MatrixTag, HEADER_LEN, MAGIC, VERSION,
};
pub use synth::{gen_synthetic, SynthConfig, SynthDataset};
