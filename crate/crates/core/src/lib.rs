//! Two-stream video classification: a spatial stream over still frames, a
//! temporal stream over stacked optical flow, and early, mid-level and late
//! fusion of the two.

mod binio;
pub mod error;
pub mod eval;
pub mod dataset;
pub mod flow;
pub mod fusion;
mod hashing;
pub mod pgm;
pub mod scalar;
pub mod scores;
pub mod streams;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use scores::ScoreVector;
pub use tensor::{LayerParams, Network, Tensor};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = Network<f32>;
pub type Network64 = Network<f64>;
pub type ScoreVector32 = ScoreVector<f32>;
pub type ScoreVector64 = ScoreVector<f64>;
pub type GrayImage32 = flow::GrayImage<f32>;
pub type GrayImage64 = flow::GrayImage<f64>;
pub type FlowField32 = flow::FlowField<f32>;
pub type FlowField64 = flow::FlowField<f64>;
pub type FlowStack32 = flow::FlowStack<f32>;
pub type FlowStack64 = flow::FlowStack<f64>;
pub type StreamModel32 = streams::StreamModel<f32>;
pub type StreamModel64 = streams::StreamModel<f64>;
pub type FusedFeature32 = fusion::FusedFeature<f32>;
pub type FusedFeature64 = fusion::FusedFeature<f64>;
pub type SvmModel32 = fusion::SvmModel<f32>;
pub type SvmModel64 = fusion::SvmModel<f64>;
