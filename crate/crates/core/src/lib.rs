pub mod attention;
pub mod cost;
pub mod duality;
pub mod error;
pub mod model;
pub mod numerics;
pub mod stack;

pub use error::{Error, Result};
pub use stack::HiddenStack;

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type HiddenStack64 = HiddenStack<f64>;
pub type HiddenStack32 = HiddenStack<f32>;
pub type AttentionParams64 = attention::AttentionParams<f64>;
pub type AttentionParams32 = attention::AttentionParams<f32>;
pub type ModelWeights64 = model::ModelWeights<f64>;
pub type ModelWeights32 = model::ModelWeights<f32>;
