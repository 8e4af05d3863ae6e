pub mod autodiff;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod networks;
pub mod objectives;
pub mod optim;
pub mod params;
pub mod rng;
pub mod search_engine;
pub mod search_space;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
