//! Adjacency spectral embedding and related diagnostics.

mod ase;
pub mod eigen;
mod io;

pub use ase::{
    ase, ase_with, eigengap_report, embed_symmetric, estimate_sparsity, scale_estimate, scaled_embedding,
    EigengapReport, Embedding,
};
pub use eigen::EigenMethod;
pub use io::{read_embedding_csv, write_embedding_csv, EmbeddingMeta};
