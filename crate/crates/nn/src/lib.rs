//! A compact define-by-run autodiff engine on `ndarray`, sized for the small
//! networks in this workspace: dense layers, dilated causal 1-D convolutions,
//! padded 2-D convolutions, global pooling and the binary cross-entropy loss,
//! together with parameter storage, seeded initialization, an Adam optimizer
//! with decoupled weight decay, and a central-difference gradient checker.
//!
//! Everything is generic over [`Scalar`]: training runs in `f32`, gradient
//! verification instantiates the identical code in `f64`.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{Graph, VarId};
pub use params::{Bound, ParamArchive, ParamEntry, ParamId, ParamSet};

use trajmia_core::Scalar;

/// `f32` graph used by the training pipeline.
pub type Graph32 = Graph<f32>;
/// `f64` graph used by high-precision verification.
pub type Graph64 = Graph<f64>;

/// Numerically stable logistic sigmoid, used wherever probabilities leave
/// the graph.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    let z = z.as_f64();
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    F::of_f64(p)
}
