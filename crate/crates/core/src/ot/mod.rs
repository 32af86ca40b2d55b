//! Alignment of two embedded point clouds over block-orthogonal matrices.
//!
//! The orthogonal Wasserstein problem `min_W min_Pi <Pi, C_W>`, with
//! `(C_W)_ij = ||x_i - y_j W||^2`, is attacked by alternating an entropic
//! transport step ([`sinkhorn`]) with an orthogonal Procrustes step
//! ([`procrustes_step`]); the final orthogonal iterate is projected onto the
//! block-orthogonal group ([`project_block_orthogonal`]). [`exact`] holds the
//! unregularized transport oracle used to check the entropic solver.
//!
//! Throughout, `W` acts on the right of row vectors: the aligned second
//! sample is `Y W`.

mod align;
mod cost;
pub mod exact;
mod procrustes;
mod sinkhorn;

pub use align::{align, best_sign_flip, AlignParams, AlignmentResult, CandidateSummary, InitKind, OuterStep};
pub use cost::{cost_matrix, Coupling};
pub use exact::{exact_wasserstein2, ExactTransport};
pub use procrustes::{project_block_orthogonal, procrustes_step, BlockOrthogonal, Projection, ProcrustesStep};
pub use sinkhorn::{entropic_objective, sinkhorn, sinkhorn_warm, SinkhornParams, SinkhornResult};
