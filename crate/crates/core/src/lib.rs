pub mod arch;
pub mod autodiff;
pub mod checkpoint;
pub mod corpus_io;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod network;
pub mod ops;
pub mod optim;
pub mod sampler;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
