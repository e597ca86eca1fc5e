//! Context-aware query encoding for particular-object image retrieval.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below name the common concrete instantiations.

pub mod attention;
pub mod convnet;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod saliency;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FeatureMap64 = tensor::FeatureMap<f64>;
pub type FeatureMap32 = tensor::FeatureMap<f32>;
pub type Image64 = tensor::Image<f64>;
pub type Image32 = tensor::Image<f32>;
pub type NetworkSpec64 = convnet::NetworkSpec<f64>;
pub type NetworkSpec32 = convnet::NetworkSpec<f32>;
pub type Descriptor64 = encoder::Descriptor<f64>;
pub type Descriptor32 = encoder::Descriptor<f32>;
pub type PcaModel64 = encoder::PcaModel<f64>;
pub type PcaModel32 = encoder::PcaModel<f32>;
pub type DescriptorIndex64 = pipeline::DescriptorIndex<f64>;
pub type DescriptorIndex32 = pipeline::DescriptorIndex<f32>;
pub type PipelineConfig64 = pipeline::PipelineConfig<f64>;
pub type PipelineConfig32 = pipeline::PipelineConfig<f32>;
