//! Metric learning for multivariate time-series alignment.
//!
//! The crate learns a Mahalanobis matrix `W` so that dynamic time warping on
//! the affinity `C[i, j] = -(a_i - b_j)^T W (a_i - b_j)` reproduces known
//! ground-truth alignments. Two trainers are provided: a projected
//! subgradient method for the Hamming loss and a block-coordinate
//! Frank-Wolfe solver on the dual of the symmetrized area loss.

pub mod alignment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod losses;
pub mod metric;
pub mod textio;
pub mod train;

pub use alignment::{
    delannoy_count, dtw_decode, dtw_decode_banded, enumerate_paths, validate, AffinityMatrix,
    AlignmentPath, Decoded,
};
pub use error::{Error, Result};
pub use losses::{
    area_loss_reference, delta_abs, delta_max, hamming, lambda_max_ltl, sal_concave,
    sal_concave_gradient, sym_area_loss, ConcaveSal, TriangularOperator,
};
pub use metric::{affinity, feature_map, project, psi, Coupling, MetricMatrix, Structure};
