//! Robust learning with the kernel mean p-power error (KMPE).
//!
//! The crate provides the KMPE loss and its correntropy special cases
//! ([`kmpe`]), a fixed-point robust extreme learning machine ([`elm`]), an
//! IRLS robust PCA ([`pca`]), evaluation metrics ([`metrics`]), and the data
//! generators used by the benchmark runner ([`data`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The `*64`
//! aliases below fix the scalar to `f64`, which is what the documented
//! tolerances assume.

// `!(x > tol)` is the NaN-rejecting form; index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod data;
pub mod elm;
pub mod error;
pub mod kmpe;
pub mod metrics;
pub mod numlin;
pub mod pca;
pub mod scalar;

pub use error::{KmpeError, Result};
pub use scalar::Scalar;

pub use elm::{Activation, ElmModel, HiddenInit, HiddenLayer, OutputWeights, TrainConfig, TrainTrace};
pub use kmpe::{ErrorVector, KernelParams, PropertyCheck};
pub use metrics::LabelVector;
pub use numlin::{DiagWeights, Matrix};
pub use pca::{Bandwidth, PcaConfig, Subspace};

pub type Matrix64 = Matrix<f64>;
pub type DiagWeights64 = DiagWeights<f64>;
pub type KernelParams64 = KernelParams<f64>;
pub type ErrorVector64 = ErrorVector<f64>;
pub type HiddenLayer64 = HiddenLayer<f64>;
pub type OutputWeights64 = OutputWeights<f64>;
pub type TrainConfig64 = TrainConfig<f64>;
pub type TrainTrace64 = TrainTrace<f64>;
pub type ElmModel64 = ElmModel<f64>;
pub type Subspace64 = Subspace<f64>;
pub type PcaConfig64 = PcaConfig<f64>;
pub type Dataset64 = data::Dataset<f64>;

pub type Matrix32 = Matrix<f32>;
pub type KernelParams32 = KernelParams<f32>;
pub type Subspace32 = Subspace<f32>;
