//! Polynomial attention, its synthetic separation datasets, the thresholded
//! readout network, and checkers for the separation results.

pub mod attention;
pub mod dataset;
pub mod error;
pub mod network;
pub mod rng;
pub mod tensor;
pub mod verify;

pub use attention::{
    attention_forward, attention_matrix, block_attention, block_attention_dense,
    block_attention_structured, c_poly, score_attention, tensor_trick_check, AttentionKind,
    AttentionWeights, BlockRow, ProbVector, ScoreAttention, TokenRows,
};
pub use dataset::{
    build_selfattn_instance, realize_matrix, sample_score, sample_selfattn, Instance,
    InstanceDocument, Label, RealizedPair, ScoreVector, SelfAttnInstance,
};
pub use error::{Error, Result};
pub use network::{
    columns_for, f_network_from_scores, f_network_score, f_network_selfattn, relu, sample_signs,
    shifted_relu, NetworkParams, SignMatrix,
};
pub use tensor::{hadamard, kron, pow_log, vectorize, LogScalar, LogVector, Matrix, Vector};
