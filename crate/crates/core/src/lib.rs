//! Video moment retrieval with a similarity-weighted graph convolution over
//! query and proposal timesteps.
//!
//! A shared LSTM encodes the query clip and a candidate proposal. Their
//! hidden states become the nodes of one graph whose edge weights are cosine
//! similarities of projected node features. A single graph convolution,
//! average pooling and two small heads produce a relevance score and
//! boundary offsets. Three losses train three disjoint parameter groups.
//!
//! The crate is `no_std` with `alloc`; file formats and the CLI live in the
//! `simgcn` crate.

#![no_std]
// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod heads;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod proposals;
pub mod rng;
pub mod segment;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{Model, ModelConfig, ParamGroup};
pub use pipeline::{evaluate, refine, retrieve, train, EvalReport, RunConfig};
pub use segment::{tiou, Segment};
